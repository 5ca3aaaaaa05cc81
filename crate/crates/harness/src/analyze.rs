//! Re-running single analyses on saved or external data files.

use crate::config::{AntennaSection, MaterialsSection};
use crate::error::{Context, HarnessError, HarnessResult};
use crate::output::{num, read_frame, Bundle, Summary};
use crate::scenario::{localization_row, localize_brightest, trajectory_summary, HistogramSidecar, LOCALIZATION_HEADER};
use clap::ValueEnum;
use proscan_core::emitter::{fit_biexponential, poisson_goodness, DecayHistogram};
use proscan_core::imaging::analyze_trajectory;
use proscan_core::interferometry::{displacement_from_fringes, find_fringe_extrema, FringeCount, Spectrum};
use proscan_core::materials::DielectricTable;
use proscan_core::plasmonics::{fit_resonance, NanoAntennaModel};
use serde_json::json;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AnalysisKind {
    /// Gaussian localization of the brightest spot in PGM frames (with JSON sidecars).
    Localize,
    /// Step statistics of a CSV with `x_nm` and `y_nm` columns.
    Trajectory,
    /// Cavity gap from the fringe spacing of `wavelength_nm,intensity` spectra.
    FsrGap,
    /// Displacement from a fixed-wavelength trace (column `intensity`).
    FringeCount,
    /// Plasmon lineshape fit of `wavelength_nm,intensity` spectra.
    ResonanceFit,
    /// Biexponential fit of `t_ns,counts` histograms with JSON sidecars.
    LifetimeFit,
    /// Poisson goodness of fit of a CSV with a `counts` column.
    PoissonTest,
}

impl AnalysisKind {
    pub fn name(self) -> &'static str {
        match self {
            AnalysisKind::Localize => "localize",
            AnalysisKind::Trajectory => "trajectory",
            AnalysisKind::FsrGap => "fsr-gap",
            AnalysisKind::FringeCount => "fringe-count",
            AnalysisKind::ResonanceFit => "resonance-fit",
            AnalysisKind::LifetimeFit => "lifetime-fit",
            AnalysisKind::PoissonTest => "poisson-test",
        }
    }
}

#[derive(Debug, Clone)]
pub struct AnalyzeOptions {
    pub out_dir: PathBuf,
    /// Monitor wavelength for fringe counting (nm).
    pub wavelength: f64,
    pub min_prominence: f64,
}

/// Runs one analysis and writes `report.csv`, `summary.json` and `summary.txt`.
pub fn run(kind: AnalysisKind, files: &[PathBuf], opts: &AnalyzeOptions) -> HarnessResult<Summary> {
    if files.is_empty() {
        return Err(HarnessError::Config("no input files".into()));
    }
    let mut bundle = Bundle::create(&opts.out_dir, false)?;
    let (header, rows, mut summary) = match kind {
        AnalysisKind::Localize => localize(files)?,
        AnalysisKind::Trajectory => trajectory(files)?,
        AnalysisKind::FsrGap => fsr_gap(files, opts)?,
        AnalysisKind::FringeCount => fringe_count(files, opts)?,
        AnalysisKind::ResonanceFit => resonance_fit(files)?,
        AnalysisKind::LifetimeFit => lifetime_fit(files)?,
        AnalysisKind::PoissonTest => poisson_test(files)?,
    };
    summary.insert("analysis".into(), json!(kind.name()));
    summary.insert("files".into(), json!(files.iter().map(|f| f.display().to_string()).collect::<Vec<_>>()));
    bundle.write_csv("report.csv", &header, rows)?;
    bundle.write_json("summary.json", &summary)?;
    let text: String = summary.iter().map(|(k, v)| format!("{k}: {v}\n")).collect();
    bundle.write_bytes("summary.txt", text.as_bytes())?;
    Ok(summary)
}

type Report = (Vec<&'static str>, Vec<Vec<String>>, Summary);

fn parse_error(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Config(format!("{}: {e}", path.display()))
}

fn open(path: &Path) -> HarnessResult<std::fs::File> {
    std::fs::File::open(path).map_err(|e| HarnessError::io(path, e))
}

/// Named numeric columns of a headed CSV; extra columns are ignored.
pub fn read_named_columns(path: &Path, names: &[&str]) -> HarnessResult<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(path)?);
    let headers = rdr.headers().map_err(|e| parse_error(path, format!("line 1: {e}")))?.clone();
    let idx: Vec<usize> = names
        .iter()
        .map(|n| {
            headers
                .iter()
                .position(|h| h == *n)
                .ok_or_else(|| parse_error(path, format!("line 1: missing column `{n}`")))
        })
        .collect::<HarnessResult<_>>()?;
    let mut cols = vec![Vec::new(); names.len()];
    for (k, record) in rdr.records().enumerate() {
        let line = k + 2;
        let record = record.map_err(|e| parse_error(path, format!("line {line}: {e}")))?;
        for (c, &i) in idx.iter().enumerate() {
            let field = record.get(i).unwrap_or("");
            let v: f64 = field.parse().map_err(|_| {
                parse_error(path, format!("line {line}, column {}: `{field}` is not a number", i + 1))
            })?;
            cols[c].push(v);
        }
    }
    Ok(cols)
}

fn read_spectrum(path: &Path) -> HarnessResult<Spectrum<f64>> {
    Spectrum::from_csv(open(path)?).map_err(|e| parse_error(path, e))
}

fn localize(files: &[PathBuf]) -> HarnessResult<Report> {
    let mut rows = Vec::new();
    let (mut sx, mut sy) = (0.0, 0.0);
    for (k, path) in files.iter().enumerate() {
        let (frame, meta) = read_frame(path)?;
        let loc = localize_brightest(&frame, meta.roi_half_px).context(path.display().to_string())?;
        sx += loc.x;
        sy += loc.y;
        rows.push(localization_row(k, &loc));
    }
    let n = files.len() as f64;
    let mut summary = Summary::new();
    summary.insert("frames".into(), json!(files.len()));
    summary.insert("mean_x_nm".into(), json!(sx / n));
    summary.insert("mean_y_nm".into(), json!(sy / n));
    Ok((LOCALIZATION_HEADER.to_vec(), rows, summary))
}

fn trajectory(files: &[PathBuf]) -> HarnessResult<Report> {
    let mut points = Vec::new();
    for path in files {
        let cols = read_named_columns(path, &["x_nm", "y_nm"])?;
        points.extend(cols[0].iter().zip(&cols[1]).map(|(x, y)| [*x, *y]));
    }
    let stats = analyze_trajectory(&points).context("trajectory")?;
    let summary = trajectory_summary(&stats, "");
    let rows = summary.iter().map(|(k, v)| vec![k.clone(), v.to_string()]).collect();
    Ok((vec!["metric", "value"], rows, summary))
}

fn fsr_gap(files: &[PathBuf], opts: &AnalyzeOptions) -> HarnessResult<Report> {
    let mut rows = Vec::new();
    let mut resolved = 0;
    for path in files {
        let fringes = find_fringe_extrema(&read_spectrum(path)?, opts.min_prominence);
        let gap = fringes.gap();
        resolved += usize::from(gap.is_some());
        rows.push(vec![
            path.display().to_string(),
            gap.map_or_else(String::new, num),
            fringes.maxima().len().to_string(),
            if fringes.is_resolved() { "resolved" } else { "insufficient" }.into(),
        ]);
    }
    let mut summary = Summary::new();
    summary.insert("spectra".into(), json!(files.len()));
    summary.insert("resolved".into(), json!(resolved));
    if let [row] = rows.as_slice() {
        if !row[1].is_empty() {
            summary.insert("gap_nm".into(), json!(row[1].parse::<f64>().unwrap_or(f64::NAN)));
        }
    }
    Ok((vec!["file", "gap_nm", "maxima", "status"], rows, summary))
}

fn fringe_count(files: &[PathBuf], opts: &AnalyzeOptions) -> HarnessResult<Report> {
    let mut rows = Vec::new();
    let mut summary = Summary::new();
    for path in files {
        let trace = read_named_columns(path, &["intensity"])?.remove(0);
        let count = displacement_from_fringes(&trace, opts.wavelength, opts.min_prominence)
            .context(path.display().to_string())?;
        let (status, full, phase, disp) = match count {
            FringeCount::Counted { full_oscillations, phase, displacement } => {
                ("counted", full_oscillations.to_string(), phase, num(displacement))
            }
            FringeCount::Insufficient { phase } => ("insufficient", String::new(), phase, String::new()),
        };
        if files.len() == 1 {
            summary.insert("status".into(), json!(status));
            summary.insert("phase_rad".into(), json!(phase));
            if let Some(d) = count.displacement() {
                summary.insert("displacement_nm".into(), json!(d));
            }
            if let FringeCount::Counted { full_oscillations, .. } = count {
                summary.insert("full_oscillations".into(), json!(full_oscillations));
            }
        }
        rows.push(vec![path.display().to_string(), status.into(), full, num(phase), disp]);
    }
    summary.insert("wavelength_nm".into(), json!(opts.wavelength));
    Ok((vec!["file", "status", "full_oscillations", "phase_rad", "displacement_nm"], rows, summary))
}

fn resonance_fit(files: &[PathBuf]) -> HarnessResult<Report> {
    let a = AntennaSection::default();
    let glass = MaterialsSection::default().glass_index;
    let model = NanoAntennaModel {
        radius: a.radius_nm,
        medium_permittivity: a.medium_permittivity,
        substrate_permittivity: glass * glass,
        interface_embedding: a.interface_embedding,
        dynamic_depolarization: a.dynamic_depolarization,
        gold: DielectricTable::gold(),
    };
    let mut rows = Vec::new();
    let mut summary = Summary::new();
    for path in files {
        let fit = fit_resonance(&read_spectrum(path)?, &model, a.fit_max_nm).context(path.display().to_string())?;
        if files.len() == 1 {
            summary.insert("lambda_res_nm".into(), json!(fit.wavelength));
            summary.insert("coupling".into(), json!(fit.coupling));
        }
        rows.push(vec![
            path.display().to_string(),
            num(fit.wavelength),
            num(fit.coupling),
            num(fit.amplitude),
            num(fit.background),
            num(fit.residual_norm),
        ]);
    }
    Ok((vec!["file", "lambda_res_nm", "coupling", "amplitude", "background", "residual"], rows, summary))
}

fn lifetime_fit(files: &[PathBuf]) -> HarnessResult<Report> {
    let mut rows = Vec::new();
    let mut summary = Summary::new();
    for path in files {
        let sidecar_path = path.with_extension("json");
        let text = std::fs::read_to_string(&sidecar_path).map_err(|e| HarnessError::io(&sidecar_path, e))?;
        let meta: HistogramSidecar = serde_json::from_str(&text).map_err(|e| parse_error(&sidecar_path, e))?;
        let hist = DecayHistogram::from_csv(open(path)?, meta.irf_sigma, meta.irf_offset)
            .map_err(|e| parse_error(path, e))?;
        let fit = fit_biexponential(&hist, meta.fit_window).context(path.display().to_string())?;
        if files.len() == 1 {
            summary.insert("tau_fast_ns".into(), json!(fit.tau_fast));
            summary.insert("tau_slow_ns".into(), json!(fit.tau_slow));
            summary.insert("tau_fast_sigma_ns".into(), json!(fit.tau_fast_sigma));
            summary.insert("tau_slow_sigma_ns".into(), json!(fit.tau_slow_sigma));
            summary.insert("fast_fraction".into(), json!(fit.fast_fraction));
            summary.insert("irf_limited".into(), json!(fit.irf_limited));
            summary.insert("single_exponential".into(), json!(fit.single_exponential));
        }
        rows.push(vec![
            path.display().to_string(),
            num(fit.tau_fast),
            num(fit.tau_fast_sigma),
            num(fit.tau_slow),
            num(fit.tau_slow_sigma),
            num(fit.fast_fraction),
            num(fit.background),
            u8::from(fit.irf_limited).to_string(),
            u8::from(fit.single_exponential).to_string(),
        ]);
    }
    let header = vec![
        "file",
        "tau_fast_ns",
        "tau_fast_sigma_ns",
        "tau_slow_ns",
        "tau_slow_sigma_ns",
        "fast_fraction",
        "background",
        "irf_limited",
        "single_exponential",
    ];
    Ok((header, rows, summary))
}

fn poisson_test(files: &[PathBuf]) -> HarnessResult<Report> {
    let mut rows = Vec::new();
    let mut summary = Summary::new();
    for path in files {
        let counts = read_named_columns(path, &["counts"])?.remove(0);
        let trace: Vec<u64> = counts
            .iter()
            .enumerate()
            .map(|(i, c)| {
                if *c >= 0.0 && c.fract() == 0.0 {
                    Ok(*c as u64)
                } else {
                    Err(parse_error(path, format!("line {}: counts must be non-negative integers", i + 2)))
                }
            })
            .collect::<HarnessResult<_>>()?;
        let t = poisson_goodness(&trace).context(path.display().to_string())?;
        if files.len() == 1 {
            summary.insert("mean".into(), json!(t.mean));
            summary.insert("fano".into(), json!(t.fano));
            summary.insert("chi2".into(), json!(t.chi2));
            summary.insert("dof".into(), json!(t.dof));
            summary.insert("p_value".into(), json!(t.p_value));
        }
        rows.push(vec![
            path.display().to_string(),
            trace.len().to_string(),
            num(t.mean),
            num(t.fano),
            num(t.chi2),
            t.dof.to_string(),
            t.p_value.map_or_else(String::new, num),
        ]);
    }
    Ok((vec!["file", "bins", "mean", "fano", "chi2", "dof", "p_value"], rows, summary))
}
