//! Figure-level experiments composed from the core models.

use crate::config::{
    AntennaSection, CameraSection, Command, DecaySpec, EmitterSection, GridSpec, ScenarioConfig, ScenarioKind,
};
use crate::error::{Context, HarnessError, HarnessResult};
use crate::output::{num, Bundle, FrameMeta, Manifest, Summary};
use crate::plot::{PlotSpec, Style};
use proscan_core::emitter::{
    fit_biexponential, intensity_trace, linescan_enhancement, poisson_goodness, simulate_decay_histogram,
    CoupledEmitter, DecayHistogram, DecaySimulation, DriftModel, LifetimeFit, QuantumEmitterModel,
};
use proscan_core::imaging::{
    crlb_precision, localize_2d, render_frame, separation_series, Frame, Localization, Roi,
};
use proscan_core::interferometry::{
    cavity_reflectance, displacement_from_fringes, find_fringe_extrema, wavelength_grid, white_light_spectrum,
    FringeCount, Fringes,
};
use proscan_core::materials::DielectricTable;
use proscan_core::mechanics::{apply_axial_voltage, apply_lateral_voltage, ScanState};
use proscan_core::plasmonics::{
    approach_shift_curve, fit_resonance, moving_average, scattering_spectrum, NanoAntennaModel,
};
use proscan_core::rng::{normal, SeedSplitter, Stream, StreamRng};
use serde_json::json;
use std::path::PathBuf;

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub plots: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub summary: Summary,
    pub manifest: Manifest,
    /// Non-fatal problems (plot rendering).
    pub warnings: Vec<String>,
}

/// Validates, runs and persists one scenario.
pub fn run_scenario(config: &ScenarioConfig, opts: &RunOptions) -> HarnessResult<RunOutcome> {
    config.validate()?;
    let ctx = Ctx::new(config)?;
    let mut bundle = Bundle::create(&opts.out_dir, opts.plots)?;
    let mut summary = match config.scenario_kind {
        ScenarioKind::LateralScan => lateral_scan(&ctx, &mut bundle)?,
        ScenarioKind::CoarseApproach => coarse_approach(&ctx, &mut bundle)?,
        ScenarioKind::FineApproachPlasmon => fine_approach(&ctx, &mut bundle)?,
        ScenarioKind::LinescanCoarse => linescan(&ctx, &mut bundle, true)?,
        ScenarioKind::LinescanFine => linescan(&ctx, &mut bundle, false)?,
        ScenarioKind::Stability => stability(&ctx, &mut bundle)?,
        ScenarioKind::LocalizationPrecision => localization_precision(&ctx, &mut bundle)?,
    };
    summary.insert("scenario_kind".into(), json!(config.scenario_kind.name()));
    summary.insert("seed".into(), json!(config.seed));
    let canonical = config.canonical_json();
    bundle.write_bytes("config.json", canonical.as_bytes())?;
    bundle.write_json("summary.json", &summary)?;
    let warnings = bundle.warnings().to_vec();
    let dir = bundle.dir().to_path_buf();
    let manifest = bundle.finish(config.scenario_kind.name(), config.seed, &canonical)?;
    Ok(RunOutcome { dir, summary, manifest, warnings })
}

struct Ctx<'a> {
    config: &'a ScenarioConfig,
    seeds: SeedSplitter,
    gold: DielectricTable<f64>,
    glass_index: f64,
}

impl<'a> Ctx<'a> {
    fn new(config: &'a ScenarioConfig) -> HarnessResult<Self> {
        let materials = config.materials.clone().unwrap_or_default();
        let gold = match &materials.gold_table {
            None => DielectricTable::gold(),
            Some(path) => {
                let file = std::fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
                DielectricTable::from_csv(file, path.display().to_string())
                    .map_err(|e| HarnessError::Config(format!("`materials.gold_table`: {e}")))?
            }
        };
        Ok(Self { config, seeds: SeedSplitter::new(config.seed), gold, glass_index: materials.glass_index })
    }

    fn rng(&self, stream: Stream, index: u32) -> StreamRng {
        self.seeds.stream(stream, index)
    }

    fn antenna_section(&self) -> AntennaSection {
        self.config.antenna.unwrap_or_default()
    }

    /// Sphere model for the scattering measurements (sphere on glass).
    fn scattering_antenna(&self) -> NanoAntennaModel<f64> {
        let a = self.antenna_section();
        NanoAntennaModel {
            radius: a.radius_nm,
            medium_permittivity: a.medium_permittivity,
            substrate_permittivity: self.glass_index * self.glass_index,
            interface_embedding: a.interface_embedding,
            dynamic_depolarization: a.dynamic_depolarization,
            gold: self.gold.clone(),
        }
    }

    /// Sphere model seen by the emitter: the near field is evaluated in the
    /// gap medium without the substrate embedding.
    fn coupling_antenna(&self) -> NanoAntennaModel<f64> {
        NanoAntennaModel { interface_embedding: false, ..self.scattering_antenna() }
    }

    fn emitter(&self) -> EmitterSection {
        self.config.emitter.expect("validated: emitter section")
    }

    fn camera(&self) -> CameraSection {
        self.config.camera.expect("validated: camera section")
    }

    /// The protocol with every `repeat` unrolled.
    fn steps(&self) -> Vec<Command> {
        self.config
            .protocol
            .iter()
            .flat_map(|c| {
                let single = match *c {
                    Command::Lateral { axis, dv, .. } => Command::Lateral { axis, dv, repeat: 1 },
                    Command::Axial { dv, .. } => Command::Axial { dv, repeat: 1 },
                };
                std::iter::repeat_n(single, c.repeat() as usize)
            })
            .collect()
    }

    /// Mechanics states after every protocol step, starting with the initial one,
    /// plus the cumulative voltages applied to (x, y, axial).
    fn mechanics_path(&self) -> HarnessResult<(Vec<ScanState<f64>>, Vec<[f64; 3]>)> {
        let mech = self.config.mechanics.expect("validated: mechanics section");
        let mut state = ScanState::new(mech.initial_gap_nm).context("initial state")?;
        state.lateral = mech.initial_lateral_nm;
        let mut rng = self.rng(Stream::Mechanics, 0);
        let mut volts = [0.0; 3];
        let mut states = vec![state];
        let mut voltages = vec![volts];
        for step in self.steps() {
            state = match step {
                Command::Lateral { axis, dv, .. } => {
                    volts[axis.index()] += dv;
                    apply_lateral_voltage(&state, dv, axis, &mech.lateral, &mut rng)
                }
                Command::Axial { dv, .. } => {
                    volts[2] += dv;
                    apply_axial_voltage(&state, dv, &mech.axial)
                }
            };
            states.push(state);
            voltages.push(volts);
        }
        Ok((states, voltages))
    }
}

fn grid(spec: &GridSpec) -> HarnessResult<Vec<f64>> {
    wavelength_grid(spec.start_nm, spec.stop_nm, spec.step_nm).context("wavelength grid")
}

fn flag(b: bool) -> String {
    u8::from(b).to_string()
}

pub(crate) fn brightest_pixel(frame: &Frame<f64>) -> (usize, usize) {
    let mut best = (0, 0);
    for j in 0..frame.height() {
        for i in 0..frame.width() {
            if frame.pixel(i, j) > frame.pixel(best.0, best.1) {
                best = (i, j);
            }
        }
    }
    best
}

/// Square ROI of half width `half` centred on a pixel, shifted to stay inside the frame.
pub(crate) fn roi_around(frame: &Frame<f64>, centre: (usize, usize), half: usize) -> Roi {
    let side = 2 * half + 1;
    let clamp = |c: usize, n: usize| c.saturating_sub(half).min(n.saturating_sub(side));
    Roi::new(
        clamp(centre.0, frame.width()),
        clamp(centre.1, frame.height()),
        side.min(frame.width()),
        side.min(frame.height()),
    )
}

pub(crate) fn localize_brightest(frame: &Frame<f64>, half: usize) -> proscan_core::Result<Localization<f64>> {
    localize_2d(frame, &roi_around(frame, brightest_pixel(frame), half))
}

pub(crate) const LOCALIZATION_HEADER: [&str; 7] = ["frame", "x_nm", "y_nm", "sx", "sy", "photons", "flag"];

pub(crate) fn localization_row(index: usize, loc: &Localization<f64>) -> Vec<String> {
    vec![
        index.to_string(),
        num(loc.x),
        num(loc.y),
        num(loc.sigma_x),
        num(loc.sigma_y),
        num(loc.photons),
        flag(loc.worst_fit),
    ]
}

fn frame_centre(cam: &CameraSection) -> [f64; 2] {
    let p = cam.model.pixel_size;
    [cam.frame_px[0] as f64 * p / 2.0, cam.frame_px[1] as f64 * p / 2.0]
}

pub(crate) fn trajectory_summary(stats: &proscan_core::imaging::TrajectoryStats<f64>, prefix: &str) -> Summary {
    let mut s = Summary::new();
    s.insert(format!("{prefix}slope"), json!(stats.slope));
    s.insert(format!("{prefix}tilt_deg"), json!(stats.tilt_deg));
    s.insert(format!("{prefix}step_mean_nm"), json!(stats.step_mean));
    s.insert(format!("{prefix}step_std_nm"), json!(stats.step_std));
    s.insert(format!("{prefix}jitter_nm"), json!(stats.jitter));
    s
}

fn lateral_scan(ctx: &Ctx, bundle: &mut Bundle) -> HarnessResult<Summary> {
    let cam = ctx.camera();
    let (states, voltages) = ctx.mechanics_path()?;
    let centre = frame_centre(&cam);
    let mut rng = ctx.rng(Stream::Imaging, 0);
    let mut localized = Vec::with_capacity(states.len());
    let mut loc_rows = Vec::with_capacity(states.len());
    let mut traj_rows = Vec::with_capacity(states.len());
    for (k, state) in states.iter().enumerate() {
        let truth = [centre[0] + state.lateral[0], centre[1] + state.lateral[1]];
        let frame = render_frame(
            &[(truth[0], truth[1], cam.photons)],
            &cam.model,
            (cam.frame_px[0], cam.frame_px[1]),
            [0.0, 0.0],
            Some(&mut rng),
        )
        .map_err(|e| HarnessError::at_step(k, e))?;
        let loc = localize_brightest(&frame, cam.roi_half_px).map_err(|e| HarnessError::at_step(k, e))?;
        bundle.write_frame(
            &format!("frames/frame_{k:04}"),
            &frame,
            FrameMeta { seed: ctx.config.seed, frame_index: k, roi_half_px: cam.roi_half_px },
        )?;
        loc_rows.push(localization_row(k, &loc));
        traj_rows.push(vec![
            k.to_string(),
            num(voltages[k][0]),
            num(voltages[k][1]),
            num(loc.x),
            num(loc.y),
            num(truth[0]),
            num(truth[1]),
        ]);
        localized.push([loc.x, loc.y]);
    }
    bundle.write_csv("localizations.csv", &LOCALIZATION_HEADER, loc_rows)?;
    bundle.write_csv(
        "trajectory.csv",
        &["step", "voltage_x_v", "voltage_y_v", "x_nm", "y_nm", "true_x_nm", "true_y_nm"],
        traj_rows,
    )?;
    let measured = proscan_core::imaging::analyze_trajectory(&localized).context("trajectory analysis")?;
    let truth: Vec<[f64; 2]> = states.iter().map(|s| s.lateral).collect();
    let ideal = proscan_core::imaging::analyze_trajectory(&truth).context("trajectory analysis")?;
    bundle.plot(
        "plots/trajectory.svg",
        &PlotSpec::new("Lateral scan", "x (nm)", "y (nm)")
            .with("localized", Style::Points, localized.iter().map(|p| (p[0], p[1])).collect())
            .with(
                "true",
                Style::Line,
                states.iter().map(|s| (centre[0] + s.lateral[0], centre[1] + s.lateral[1])).collect(),
            ),
    );
    let mut summary = trajectory_summary(&measured, "");
    summary.extend(trajectory_summary(&ideal, "true_"));
    summary.insert("steps".into(), json!(states.len() - 1));
    let crlb = crlb_precision(cam.photons, cam.model.background_rate, cam.model.psf_sigma, cam.model.pixel_size)
        .context("localization bound")?;
    summary.insert("crlb_nm".into(), json!(crlb));
    Ok(summary)
}

fn coarse_approach(ctx: &Ctx, bundle: &mut Bundle) -> HarnessResult<Summary> {
    let spec = ctx.config.interferometry.expect("validated: interferometry section");
    let (states, voltages) = ctx.mechanics_path()?;
    let wl_grid = grid(&spec.grid)?;
    let mut trace_rng = ctx.rng(Stream::Interferometry, 1);
    let mut spec_rng = ctx.rng(Stream::Interferometry, 0);
    let mut trace = Vec::with_capacity(states.len());
    let mut trace_rows = Vec::with_capacity(states.len());
    for (k, s) in states.iter().enumerate() {
        let r = cavity_reflectance(s.gap, spec.monitor_wavelength_nm, ctx.glass_index)
            .map_err(|e| HarnessError::at_step(k, e))?;
        let value = (r * (1.0 + normal(&mut trace_rng, spec.noise_sigma))).max(0.0);
        trace.push(value);
        trace_rows.push(vec![k.to_string(), num(voltages[k][2]), num(s.gap), num(value)]);
    }
    bundle.write_csv("fringe_trace.csv", &["step", "voltage_v", "gap_nm", "intensity"], trace_rows)?;

    let last = states.len() - 1;
    let mut fsr_rows = Vec::new();
    let mut records = Vec::new();
    for k in (0..states.len()).filter(|k| k % spec.spectrum_every == 0 || *k == last) {
        let gap = states[k].gap;
        let spectrum = white_light_spectrum(gap, &wl_grid, ctx.glass_index, spec.envelope, spec.noise_sigma, &mut spec_rng)
            .map_err(|e| HarnessError::at_step(k, e))?;
        let mut bytes = Vec::new();
        spectrum.write_csv(&mut bytes).map_err(|e| HarnessError::at_step(k, e))?;
        bundle.write_bytes(&format!("spectra/spectrum_{k:04}.csv"), &bytes)?;
        let fringes = find_fringe_extrema(&spectrum, spec.min_prominence);
        let estimate = fringes.gap();
        fsr_rows.push(vec![
            k.to_string(),
            num(gap),
            estimate.map_or_else(String::new, num),
            fringes.maxima().len().to_string(),
            if fringes.is_resolved() { "resolved" } else { "insufficient" }.to_string(),
        ]);
        records.push((gap, estimate, fringes));
    }
    bundle.write_csv("fsr.csv", &["step", "gap_nm", "fsr_gap_nm", "maxima", "status"], fsr_rows)?;

    let count = displacement_from_fringes(&trace, spec.monitor_wavelength_nm, spec.min_prominence)
        .context("fringe counting")?;
    bundle.plot(
        "plots/fringe_trace.svg",
        &PlotSpec::new("Monitor fringes", "gap (nm)", "reflectance")
            .with("trace", Style::Line, states.iter().zip(&trace).map(|(s, v)| (s.gap, *v)).collect()),
    );

    let mut summary = Summary::new();
    summary.insert("initial_gap_nm".into(), json!(states[0].gap));
    summary.insert("final_gap_nm".into(), json!(states[last].gap));
    summary.insert("true_displacement_nm".into(), json!(states[0].gap - states[last].gap));
    match count {
        FringeCount::Counted { full_oscillations, displacement, .. } => {
            summary.insert("fringe_status".into(), json!("counted"));
            summary.insert("fringe_full_oscillations".into(), json!(full_oscillations));
            summary.insert("fringe_displacement_nm".into(), json!(displacement));
        }
        FringeCount::Insufficient { .. } => {
            summary.insert("fringe_status".into(), json!("insufficient"));
        }
    }
    if let Some((gap, Some(estimate), _)) = records.first() {
        summary.insert("first_fsr_gap_nm".into(), json!(estimate));
        summary.insert("first_fsr_relative_error".into(), json!((estimate - gap) / gap));
    }
    let insufficient: Vec<f64> =
        records.iter().filter(|(_, _, f)| matches!(f, Fringes::Insufficient { .. })).map(|r| r.0).collect();
    summary.insert("insufficient_records".into(), json!(insufficient.len()));
    if let Some(g) = insufficient.iter().copied().reduce(f64::max) {
        summary.insert("largest_insufficient_gap_nm".into(), json!(g));
    }
    if let Some(g) = records.iter().filter(|r| r.1.is_some()).map(|r| r.0).reduce(f64::min) {
        summary.insert("smallest_resolved_gap_nm".into(), json!(g));
    }
    Ok(summary)
}

fn fine_approach(ctx: &Ctx, bundle: &mut Bundle) -> HarnessResult<Summary> {
    let section = ctx.antenna_section();
    let model = ctx.scattering_antenna();
    let wl_grid = grid(&section.grid)?;
    let (states, voltages) = ctx.mechanics_path()?;
    let mut rng = ctx.rng(Stream::Plasmonics, 0);
    let mut ref_rng = ctx.rng(Stream::Plasmonics, 1);

    let far = scattering_spectrum(f64::INFINITY, &wl_grid, &model, section.noise_sigma, &mut ref_rng)
        .context("reference spectrum")?;
    let reference = fit_resonance(&far, &model, section.fit_max_nm).context("reference fit")?;
    let mut bytes = Vec::new();
    far.write_csv(&mut bytes).context("reference spectrum")?;
    bundle.write_bytes("spectra/reference.csv", &bytes)?;

    let mut fitted = Vec::with_capacity(states.len());
    let mut residuals = Vec::with_capacity(states.len());
    for (k, s) in states.iter().enumerate() {
        let spectrum = scattering_spectrum(s.gap, &wl_grid, &model, section.noise_sigma, &mut rng)
            .map_err(|e| HarnessError::at_step(k, e))?;
        let mut bytes = Vec::new();
        spectrum.write_csv(&mut bytes).map_err(|e| HarnessError::at_step(k, e))?;
        bundle.write_bytes(&format!("spectra/step_{k:04}.csv"), &bytes)?;
        let fit = fit_resonance(&spectrum, &model, section.fit_max_nm).map_err(|e| HarnessError::at_step(k, e))?;
        fitted.push(fit.wavelength);
        residuals.push(fit.residual_norm);
    }
    let window = section.smoothing_window.min(if fitted.len() % 2 == 1 { fitted.len() } else { fitted.len() - 1 });
    let smoothed = moving_average(&fitted, window).context("smoothing")?;

    let mut gaps: Vec<f64> = states.iter().map(|s| s.gap).collect();
    gaps.sort_by(|a, b| b.total_cmp(a));
    gaps.dedup();
    let theory = approach_shift_curve(&gaps, &wl_grid, &model).context("theory curve")?;
    bundle.write_csv("theory.csv", &["gap_nm", "shift_nm"], theory.iter().map(|(g, s)| vec![num(*g), num(*s)]))?;
    bundle.write_csv(
        "resonance.csv",
        &["step", "voltage_v", "gap_nm", "lambda_res_nm", "lambda_smoothed_nm", "shift_nm", "residual"],
        (0..states.len()).map(|k| {
            vec![
                k.to_string(),
                num(voltages[k][2]),
                num(states[k].gap),
                num(fitted[k]),
                num(smoothed[k]),
                num(smoothed[k] - reference.wavelength),
                num(residuals[k]),
            ]
        }),
    )?;
    bundle.plot(
        "plots/shift.svg",
        &PlotSpec::new("Resonance shift on approach", "gap (nm)", "shift (nm)")
            .with(
                "fitted",
                Style::Points,
                states.iter().zip(&fitted).map(|(s, l)| (s.gap, l - reference.wavelength)).collect(),
            )
            .with(
                "smoothed",
                Style::Line,
                states.iter().zip(&smoothed).map(|(s, l)| (s.gap, l - reference.wavelength)).collect(),
            )
            .with("model", Style::Line, theory.clone()),
    );

    // Strictly red-shifting wherever the gap strictly closed.
    let monotone = (1..states.len())
        .filter(|&k| states[k].gap < states[k - 1].gap)
        .all(|k| smoothed[k] > smoothed[k - 1]);
    let closest = (0..states.len()).min_by(|&a, &b| states[a].gap.total_cmp(&states[b].gap)).unwrap_or(0);
    let mut summary = Summary::new();
    summary.insert("lambda_far_nm".into(), json!(reference.wavelength));
    summary.insert("min_gap_nm".into(), json!(states[closest].gap));
    summary.insert("total_shift_nm".into(), json!(fitted[closest] - reference.wavelength));
    summary.insert("total_shift_smoothed_nm".into(), json!(smoothed[closest] - reference.wavelength));
    summary.insert("monotone_smoothed".into(), json!(monotone));
    summary.insert("model_total_shift_nm".into(), json!(theory.last().map_or(0.0, |t| t.1)));
    summary.insert("smoothing_window".into(), json!(window));
    Ok(summary)
}

fn signed_offset(p: [f64; 2]) -> f64 {
    // The profile depends on the in-plane distance; the sign keeps the side.
    let r = p[0].hypot(p[1]);
    if p[0] < 0.0 { -r } else { r }
}

fn decay_run(
    ctx: &Ctx,
    bundle: &mut Bundle,
    name: &str,
    index: u32,
    spec: &DecaySpec,
    coupled: &CoupledEmitter<f64>,
    model: &QuantumEmitterModel<f64>,
) -> HarnessResult<(LifetimeFit, f64, f64)> {
    let sim = DecaySimulation {
        rate_fast: 1.0 / coupled.biexciton_lifetime,
        rate_slow: 1.0 / coupled.exciton_lifetime,
        fast_fraction: model.biexciton_amplitude_fraction,
        n_photons: spec.n_photons,
        irf_sigma: spec.irf_sigma,
        irf_offset: spec.irf_offset,
        bin_width: spec.bin_width,
        period: model.repetition_period(),
    };
    let mut rng = ctx.rng(Stream::Lifetime, index);
    let hist = simulate_decay_histogram(&sim, &mut rng).context(format!("decay {name}"))?;
    write_histogram(bundle, name, &hist, ctx.config.seed, spec.fit_window)?;
    let fit = fit_biexponential(&hist, spec.fit_window).context(format!("lifetime fit {name}"))?;
    Ok((fit, coupled.biexciton_lifetime, coupled.exciton_lifetime))
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HistogramSidecar {
    pub irf_sigma: f64,
    pub irf_offset: f64,
    pub seed: u64,
    pub total_photons: u64,
    pub fit_window: (f64, f64),
}

fn write_histogram(
    bundle: &mut Bundle,
    name: &str,
    hist: &DecayHistogram,
    seed: u64,
    fit_window: (f64, f64),
) -> HarnessResult<()> {
    let mut bytes = Vec::new();
    hist.write_csv(&mut bytes).context("histogram")?;
    bundle.write_bytes(&format!("{name}.csv"), &bytes)?;
    bundle.write_json(
        &format!("{name}.json"),
        &HistogramSidecar {
            irf_sigma: hist.irf_sigma(),
            irf_offset: hist.irf_offset(),
            seed,
            total_photons: hist.total_photons(),
            fit_window,
        },
    )
}

fn lifetime_summary(summary: &mut Summary, prefix: &str, fit: &LifetimeFit, truth: (f64, f64)) {
    summary.insert(format!("{prefix}tau_fast_ns"), json!(fit.tau_fast));
    summary.insert(format!("{prefix}tau_slow_ns"), json!(fit.tau_slow));
    summary.insert(format!("{prefix}true_tau_fast_ns"), json!(truth.0));
    summary.insert(format!("{prefix}true_tau_slow_ns"), json!(truth.1));
    summary.insert(format!("{prefix}irf_limited"), json!(fit.irf_limited));
    summary.insert(format!("{prefix}single_exponential"), json!(fit.single_exponential));
}

fn linescan(ctx: &Ctx, bundle: &mut Bundle, imaging: bool) -> HarnessResult<Summary> {
    let em = ctx.emitter();
    let antenna = ctx.coupling_antenna();
    let (states, _) = ctx.mechanics_path()?;
    let positions: Vec<[f64; 2]> = states.iter().map(|s| s.lateral).collect();
    let offsets: Vec<f64> = positions.iter().map(|p| signed_offset(*p)).collect();
    let profile = linescan_enhancement(&offsets, em.gap_nm, &em.model, &antenna).context("linescan")?;

    let mut summary = Summary::new();
    let peak = (0..profile.len())
        .max_by(|&a, &b| profile[a].enhancement.total_cmp(&profile[b].enhancement))
        .unwrap_or(0);
    let centre = (0..profile.len()).min_by(|&a, &b| offsets[a].abs().total_cmp(&offsets[b].abs())).unwrap_or(0);
    summary.insert("peak_enhancement".into(), json!(profile[peak].enhancement));
    summary.insert("peak_offset_nm".into(), json!(offsets[peak]));
    summary.insert("peak_total_rate_per_ns".into(), json!(profile[peak].total_rate));
    summary.insert("centre_offset_nm".into(), json!(offsets[centre]));
    summary.insert("centre_enhancement".into(), json!(profile[centre].enhancement));
    summary.insert("centre_total_rate_per_ns".into(), json!(profile[centre].total_rate));
    let half = 1.0 + (profile[peak].enhancement - 1.0) / 2.0;
    let above: Vec<f64> = offsets.iter().zip(&profile).filter(|(_, p)| p.enhancement >= half).map(|(o, _)| *o).collect();
    if let (Some(lo), Some(hi)) = (above.iter().copied().reduce(f64::min), above.iter().copied().reduce(f64::max)) {
        summary.insert("fwhm_nm".into(), json!(hi - lo));
    }
    // Distance at which the enhancement first reaches 1.5.
    let onset = offsets
        .iter()
        .zip(&profile)
        .filter(|(_, p)| p.enhancement >= 1.5)
        .map(|(o, _)| o.abs())
        .reduce(f64::max);
    if let Some(onset) = onset {
        summary.insert("enhancement_onset_nm".into(), json!(onset));
    }

    let mut header = vec!["step", "x_nm", "y_nm", "offset_nm", "separation_nm", "enhancement", "total_rate_per_ns"];
    let mut rows: Vec<Vec<String>> = (0..profile.len())
        .map(|k| {
            vec![
                k.to_string(),
                num(positions[k][0]),
                num(positions[k][1]),
                num(offsets[k]),
                num(profile[k].separation),
                num(profile[k].enhancement),
                num(profile[k].total_rate),
            ]
        })
        .collect();

    if imaging {
        let cam = ctx.camera();
        let gnp = frame_centre(&cam);
        let mut rng = ctx.rng(Stream::Imaging, 0);
        let mut frames = Vec::with_capacity(profile.len());
        let mut photometry = Vec::with_capacity(profile.len());
        for (k, p) in positions.iter().enumerate() {
            let mut sources = vec![(gnp[0] + p[0], gnp[1] + p[1], cam.photons * profile[k].enhancement)];
            if cam.antenna_photons > 0.0 {
                sources.push((gnp[0], gnp[1], cam.antenna_photons));
            }
            let frame = render_frame(&sources, &cam.model, (cam.frame_px[0], cam.frame_px[1]), [0.0, 0.0], Some(&mut rng))
                .map_err(|e| HarnessError::at_step(k, e))?;
            let background = cam.model.background_rate * (frame.width() * frame.height()) as f64;
            photometry.push((frame.total() as f64 - background - cam.antenna_photons) / cam.photons);
            bundle.write_frame(
                &format!("frames/frame_{k:04}"),
                &frame,
                FrameMeta { seed: ctx.config.seed, frame_index: k, roi_half_px: cam.roi_half_px },
            )?;
            frames.push(frame);
        }
        let p = cam.model.pixel_size;
        let gnp_px = ((gnp[0] / p) as usize, (gnp[1] / p) as usize);
        let stationary = roi_around(&frames[0], gnp_px, cam.roi_half_px);
        let series = separation_series(&frames, &stationary, &frames[0].full_roi()).context("separation series")?;
        header.extend(["measured_distance_nm", "distance_nm", "coupled", "measured_enhancement"]);
        for (k, row) in rows.iter_mut().enumerate() {
            row.push(series[k].measured.map_or_else(String::new, num));
            row.push(num(series[k].distance));
            row.push(flag(series[k].coupled));
            row.push(num(photometry[k]));
        }
        let flagged: Vec<f64> =
            series.iter().filter(|s| s.coupled).map(|s| positions[s.frame][0].hypot(positions[s.frame][1])).collect();
        summary.insert("coupled_frames".into(), json!(flagged.len()));
        if let Some(d) = flagged.iter().copied().reduce(f64::max) {
            summary.insert("largest_flagged_distance_nm".into(), json!(d));
            summary.insert("onset_inside_flagged".into(), json!(onset.is_some_and(|o| o <= d)));
        }
        let peak_measured = photometry.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        summary.insert("peak_measured_enhancement".into(), json!(peak_measured));
        let errors: Vec<f64> = series
            .iter()
            .filter(|s| s.coupled)
            .map(|s| (s.distance - positions[s.frame][0].hypot(positions[s.frame][1])).abs())
            .collect();
        if let Some(e) = errors.iter().copied().reduce(f64::max) {
            summary.insert("max_extrapolation_error_nm".into(), json!(e));
        }
        bundle.plot(
            "plots/distance.svg",
            &PlotSpec::new("Spot distance", "step", "distance (nm)")
                .with("reported", Style::Points, series.iter().map(|s| (s.frame as f64, s.distance)).collect())
                .with(
                    "true",
                    Style::Line,
                    positions.iter().enumerate().map(|(k, p)| (k as f64, p[0].hypot(p[1]))).collect(),
                ),
        );
        bundle.plot(
            "plots/photometry.svg",
            &PlotSpec::new("Emitter brightness", "offset (nm)", "enhancement")
                .with("frames", Style::Points, offsets.iter().copied().zip(photometry.iter().copied()).collect())
                .with("model", Style::Line, offsets.iter().zip(&profile).map(|(o, p)| (*o, p.enhancement)).collect()),
        );
    } else {
        let mut rng = ctx.rng(Stream::Emitter, 0);
        header.push("counts");
        for (k, row) in rows.iter_mut().enumerate() {
            let counts = intensity_trace(
                profile[k].enhancement,
                em.base_rate_cps,
                em.dwell_s,
                em.dwell_s * 1e3,
                DriftModel::None,
                &mut rng,
            )
            .map_err(|e| HarnessError::at_step(k, e))?;
            row.push(counts.iter().sum::<u64>().to_string());
        }
        bundle.plot(
            "plots/linescan.svg",
            &PlotSpec::new("Fluorescence linescan", "offset (nm)", "enhancement")
                .with("model", Style::Line, offsets.iter().zip(&profile).map(|(o, p)| (*o, p.enhancement)).collect()),
        );
    }
    bundle.write_csv("linescan.csv", &header, rows)?;

    if let Some(spec) = &em.decay {
        let orientation = em.model.dipole_orientation;
        let far = CoupledEmitter::evaluate(f64::INFINITY, orientation, &em.model, &antenna).context("free emitter")?;
        let sep = profile[centre].separation;
        let near = CoupledEmitter::evaluate(sep, orientation, &em.model, &antenna).context("coupled emitter")?;
        let (fit, f, s) = decay_run(ctx, bundle, "decay_far", 0, spec, &far, &em.model)?;
        lifetime_summary(&mut summary, "far_", &fit, (f, s));
        let (fit, f, s) = decay_run(ctx, bundle, "decay_near", 1, spec, &near, &em.model)?;
        lifetime_summary(&mut summary, "near_", &fit, (f, s));
    }
    Ok(summary)
}

fn stability(ctx: &Ctx, bundle: &mut Bundle) -> HarnessResult<Summary> {
    let em = ctx.emitter();
    let antenna = ctx.coupling_antenna();
    let coupled = CoupledEmitter::evaluate(em.gap_nm, em.model.dipole_orientation, &em.model, &antenna)
        .context("operating point")?;
    let f = coupled.enhancement;
    let spec = em.trace.expect("validated: emitter.trace");
    let trace = intensity_trace(f, em.base_rate_cps, spec.duration_s, spec.bin_ms, spec.drift, &mut ctx.rng(Stream::Trace, 0))
        .context("intensity trace")?;
    bundle.write_csv(
        "trace.csv",
        &["bin_index", "counts"],
        trace.iter().enumerate().map(|(i, c)| vec![i.to_string(), c.to_string()]),
    )?;
    let test = poisson_goodness(&trace).context("poisson test")?;

    let mut summary = Summary::new();
    summary.insert("enhancement".into(), json!(f));
    summary.insert("exciton_lifetime_ns".into(), json!(coupled.exciton_lifetime));
    summary.insert("bins".into(), json!(trace.len()));
    summary.insert("mean_counts".into(), json!(test.mean));
    summary.insert("fano".into(), json!(test.fano));
    summary.insert("chi2".into(), json!(test.chi2));
    summary.insert("dof".into(), json!(test.dof));
    summary.insert("p_value".into(), json!(test.p_value));

    let mut hist = std::collections::BTreeMap::<u64, u64>::new();
    for c in &trace {
        *hist.entry(*c).or_default() += 1;
    }
    bundle.plot(
        "plots/count_histogram.svg",
        &PlotSpec::new("Counts per bin", "counts", "bins")
            .with("observed", Style::Points, hist.iter().map(|(c, n)| (*c as f64, *n as f64)).collect()),
    );

    if let Some(long) = em.long_trace {
        let counts =
            intensity_trace(f, em.base_rate_cps, long.duration_s, long.bin_ms, long.drift, &mut ctx.rng(Stream::Trace, 1))
                .context("long trace")?;
        let bin_s = long.bin_ms / 1e3;
        let scale = em.base_rate_cps * bin_s;
        let estimates: Vec<f64> = counts.iter().map(|c| *c as f64 / scale).collect();
        bundle.write_csv(
            "long_trace.csv",
            &["time_s", "counts", "enhancement"],
            counts.iter().zip(&estimates).enumerate().map(|(i, (c, e))| {
                vec![num((i as f64 + 0.5) * bin_s), c.to_string(), num(*e)]
            }),
        )?;
        let n = estimates.len() as f64;
        let mean = estimates.iter().sum::<f64>() / n;
        let sd = (estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
        let worst = estimates.iter().map(|e| (e / f - 1.0).abs()).fold(0.0, f64::max);
        summary.insert("long_mean_enhancement".into(), json!(mean));
        summary.insert("long_relative_std".into(), json!(sd / mean));
        summary.insert("long_shot_noise_relative_std".into(), json!(1.0 / (f * scale).sqrt()));
        summary.insert("long_max_relative_deviation".into(), json!(worst));
        bundle.plot(
            "plots/long_trace.svg",
            &PlotSpec::new("Enhancement over time", "time (s)", "enhancement")
                .with("estimate", Style::Line, estimates.iter().enumerate().map(|(i, e)| ((i as f64 + 0.5) * bin_s, *e)).collect()),
        );
    }
    Ok(summary)
}

fn localization_precision(ctx: &Ctx, bundle: &mut Bundle) -> HarnessResult<Summary> {
    let cam = ctx.camera();
    let centre = frame_centre(&cam);
    // Off the pixel grid so pixelation is exercised.
    let truth = [centre[0] + 0.31 * cam.model.pixel_size, centre[1] - 0.17 * cam.model.pixel_size];
    let mut rng = ctx.rng(Stream::Imaging, 0);
    let mut rows = Vec::new();
    let mut errs = Vec::new();
    for k in 0..cam.repeats as usize {
        let frame = render_frame(
            &[(truth[0], truth[1], cam.photons)],
            &cam.model,
            (cam.frame_px[0], cam.frame_px[1]),
            [0.0, 0.0],
            Some(&mut rng),
        )
        .map_err(|e| HarnessError::at_step(k, e))?;
        if k == 0 {
            bundle.write_frame(
                "frames/frame_0000",
                &frame,
                FrameMeta { seed: ctx.config.seed, frame_index: 0, roi_half_px: cam.roi_half_px },
            )?;
        }
        let loc = localize_brightest(&frame, cam.roi_half_px).map_err(|e| HarnessError::at_step(k, e))?;
        rows.push(localization_row(k, &loc));
        errs.push([loc.x - truth[0], loc.y - truth[1]]);
    }
    bundle.write_csv("localizations.csv", &LOCALIZATION_HEADER, rows)?;
    let n = errs.len() as f64;
    let stats = |axis: usize| {
        let mean = errs.iter().map(|e| e[axis]).sum::<f64>() / n;
        let sd = (errs.iter().map(|e| (e[axis] - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        (mean, sd)
    };
    let ((bx, sx), (by, sy)) = (stats(0), stats(1));
    let crlb = crlb_precision(cam.photons, cam.model.background_rate, cam.model.psf_sigma, cam.model.pixel_size)
        .context("localization bound")?;
    bundle.plot(
        "plots/localizations.svg",
        &PlotSpec::new("Localization scatter", "x error (nm)", "y error (nm)")
            .with("fits", Style::Points, errs.iter().map(|e| (e[0], e[1])).collect()),
    );
    let mut summary = Summary::new();
    summary.insert("frames".into(), json!(errs.len()));
    summary.insert("photons".into(), json!(cam.photons));
    summary.insert("precision_x_nm".into(), json!(sx));
    summary.insert("precision_y_nm".into(), json!(sy));
    summary.insert("bias_x_nm".into(), json!(bx));
    summary.insert("bias_y_nm".into(), json!(by));
    summary.insert("crlb_nm".into(), json!(crlb));
    Ok(summary)
}
