//! Declarative scenario description.

use crate::error::{HarnessError, HarnessResult};
use proscan_core::emitter::{DecaySimulation, DriftModel, QuantumEmitterModel};
use proscan_core::imaging::CameraModel;
use proscan_core::interferometry::SourceEnvelope;
use proscan_core::mechanics::{Axis, AxialTransferModel, PiezoAxisModel};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    LateralScan,
    CoarseApproach,
    FineApproachPlasmon,
    LinescanCoarse,
    LinescanFine,
    Stability,
    LocalizationPrecision,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 7] = [
        ScenarioKind::LateralScan,
        ScenarioKind::CoarseApproach,
        ScenarioKind::FineApproachPlasmon,
        ScenarioKind::LinescanCoarse,
        ScenarioKind::LinescanFine,
        ScenarioKind::Stability,
        ScenarioKind::LocalizationPrecision,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::LateralScan => "lateral-scan",
            ScenarioKind::CoarseApproach => "coarse-approach",
            ScenarioKind::FineApproachPlasmon => "fine-approach-plasmon",
            ScenarioKind::LinescanCoarse => "linescan-coarse",
            ScenarioKind::LinescanFine => "linescan-fine",
            ScenarioKind::Stability => "stability",
            ScenarioKind::LocalizationPrecision => "localization-precision",
        }
    }

    fn required_sections(self) -> &'static [&'static str] {
        match self {
            ScenarioKind::LateralScan => &["mechanics", "camera"],
            ScenarioKind::CoarseApproach => &["mechanics", "interferometry"],
            ScenarioKind::FineApproachPlasmon => &["mechanics", "antenna"],
            ScenarioKind::LinescanCoarse => &["mechanics", "antenna", "emitter", "camera"],
            ScenarioKind::LinescanFine => &["mechanics", "antenna", "emitter"],
            ScenarioKind::Stability => &["antenna", "emitter"],
            ScenarioKind::LocalizationPrecision => &["camera"],
        }
    }
}

impl std::fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One protocol line; `repeat` applies the same voltage step several times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Command {
    Lateral {
        axis: Axis,
        dv: f64,
        #[serde(default = "one")]
        repeat: u32,
    },
    Axial {
        dv: f64,
        #[serde(default = "one")]
        repeat: u32,
    },
}

impl Command {
    pub fn repeat(&self) -> u32 {
        match *self {
            Command::Lateral { repeat, .. } | Command::Axial { repeat, .. } => repeat,
        }
    }
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub start_nm: f64,
    pub stop_nm: f64,
    pub step_nm: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { start_nm: 450.0, stop_nm: 750.0, step_nm: 0.25 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechanicsSection {
    #[serde(default = "PiezoAxisModel::measured")]
    pub lateral: PiezoAxisModel<f64>,
    #[serde(default)]
    pub axial: AxialTransferModel<f64>,
    pub initial_gap_nm: f64,
    /// Emitter position relative to the antenna (or frame centre) at the start (nm).
    #[serde(default)]
    pub initial_lateral_nm: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialsSection {
    #[serde(default = "glass_index")]
    pub glass_index: f64,
    /// Optional `wavelength_nm,eps_re,eps_im` table replacing the bundled gold data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_table: Option<PathBuf>,
}

impl Default for MaterialsSection {
    fn default() -> Self {
        Self { glass_index: glass_index(), gold_table: None }
    }
}

fn glass_index() -> f64 {
    proscan_core::materials::DEFAULT_GLASS_INDEX
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AntennaSection {
    #[serde(default = "radius")]
    pub radius_nm: f64,
    #[serde(default = "unit")]
    pub medium_permittivity: f64,
    /// Embed the sphere in the mean of gap and substrate permittivities.
    #[serde(default = "yes")]
    pub interface_embedding: bool,
    #[serde(default = "yes")]
    pub dynamic_depolarization: bool,
    /// Fractional multiplicative noise on scattering spectra.
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default = "fit_max")]
    pub fit_max_nm: f64,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default = "smoothing")]
    pub smoothing_window: usize,
}

impl Default for AntennaSection {
    fn default() -> Self {
        Self {
            radius_nm: radius(),
            medium_permittivity: unit(),
            interface_embedding: true,
            dynamic_depolarization: true,
            noise_sigma: 0.0,
            fit_max_nm: fit_max(),
            grid: GridSpec::default(),
            smoothing_window: smoothing(),
        }
    }
}

fn radius() -> f64 {
    40.0
}
fn unit() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn fit_max() -> f64 {
    proscan_core::plasmonics::DEFAULT_FIT_MAX_NM
}
fn smoothing() -> usize {
    3
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceSpec {
    pub duration_s: f64,
    pub bin_ms: f64,
    #[serde(default)]
    pub drift: DriftModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecaySpec {
    pub n_photons: u64,
    #[serde(default = "irf_sigma")]
    pub irf_sigma: f64,
    #[serde(default = "irf_offset")]
    pub irf_offset: f64,
    #[serde(default = "bin_width")]
    pub bin_width: f64,
    /// Fit window on the histogram time axis (ns).
    pub fit_window: (f64, f64),
}

fn irf_sigma() -> f64 {
    DecaySimulation::default().irf_sigma
}
fn irf_offset() -> f64 {
    DecaySimulation::default().irf_offset
}
fn bin_width() -> f64 {
    DecaySimulation::default().bin_width
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmitterSection {
    #[serde(default = "QuantumEmitterModel::coupled_preset")]
    pub model: QuantumEmitterModel<f64>,
    /// Emitter height above the antenna apex (nm).
    pub gap_nm: f64,
    /// Uncoupled detected count rate (counts/s).
    pub base_rate_cps: f64,
    /// Integration time per linescan position (s).
    #[serde(default = "dwell")]
    pub dwell_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<TraceSpec>,
    /// Slow, coarsely binned enhancement record.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub long_trace: Option<TraceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay: Option<DecaySpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSection {
    #[serde(default)]
    pub model: CameraModel<f64>,
    pub frame_px: [usize; 2],
    /// Emitter photons per frame when uncoupled.
    pub photons: f64,
    /// Dim static antenna spot (photons per frame); 0 hides it.
    #[serde(default)]
    pub antenna_photons: f64,
    /// Half width of the localization ROI (pixels).
    #[serde(default = "roi_half")]
    pub roi_half_px: usize,
    /// Independent frames (localization-precision only).
    #[serde(default = "repeats")]
    pub repeats: u32,
}

fn dwell() -> f64 {
    0.1
}

fn roi_half() -> usize {
    4
}
fn repeats() -> u32 {
    200
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterferometrySection {
    #[serde(default)]
    pub envelope: SourceEnvelope,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default = "prominence")]
    pub min_prominence: f64,
    /// Laser line monitored for fringe counting (nm).
    #[serde(default = "monitor")]
    pub monitor_wavelength_nm: f64,
    /// A white-light spectrum is saved and analyzed every this many steps.
    #[serde(default = "spectrum_every")]
    pub spectrum_every: usize,
}

fn prominence() -> f64 {
    proscan_core::interferometry::DEFAULT_MIN_PROMINENCE
}
fn monitor() -> f64 {
    532.0
}
fn spectrum_every() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario_kind: ScenarioKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mechanics: Option<MechanicsSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub materials: Option<MaterialsSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub antenna: Option<AntennaSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emitter: Option<EmitterSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub camera: Option<CameraSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interferometry: Option<InterferometrySection>,
    #[serde(default)]
    pub protocol: Vec<Command>,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> HarnessResult<Self> {
        serde_json::from_str(text).map_err(|e| HarnessError::Config(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> HarnessResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut config = Self::from_json(&text)?;
        if let Some(m) = config.materials.as_mut() {
            // Relative table paths are taken relative to the config file.
            if let (Some(table), Some(dir)) = (m.gold_table.as_mut(), path.parent()) {
                if table.is_relative() {
                    *table = dir.join(&*table);
                }
            }
        }
        Ok(config)
    }

    /// Canonical JSON used for hashing and for the bundle copy.
    pub fn canonical_json(&self) -> String {
        let mut copy = self.clone();
        copy.output_dir = None;
        serde_json::to_string_pretty(&copy).expect("config serializes")
    }

    fn present(&self, section: &str) -> bool {
        match section {
            "mechanics" => self.mechanics.is_some(),
            "materials" => self.materials.is_some(),
            "antenna" => self.antenna.is_some(),
            "emitter" => self.emitter.is_some(),
            "camera" => self.camera.is_some(),
            "interferometry" => self.interferometry.is_some(),
            _ => false,
        }
    }

    /// Checks presence and ranges of everything the scenario kind needs.
    pub fn validate(&self) -> HarnessResult<()> {
        let kind = self.scenario_kind;
        for section in kind.required_sections() {
            if !self.present(section) {
                return Err(HarnessError::Config(format!(
                    "scenario kind `{kind}` requires section `{section}`"
                )));
            }
        }
        let bad = |field: &str, why: &str| Err(HarnessError::Config(format!("`{field}` {why}")));

        if let Some(m) = &self.mechanics {
            m.lateral.validate().map_err(|e| HarnessError::Config(format!("`mechanics.lateral`: {e}")))?;
            m.axial.validate().map_err(|e| HarnessError::Config(format!("`mechanics.axial`: {e}")))?;
            if !(m.initial_gap_nm >= 0.0 && m.initial_gap_nm.is_finite()) {
                return bad("mechanics.initial_gap_nm", "must be finite and non-negative");
            }
            if !m.initial_lateral_nm.iter().all(|v| v.is_finite()) {
                return bad("mechanics.initial_lateral_nm", "must be finite");
            }
        }
        if let Some(m) = &self.materials {
            if !(m.glass_index >= 1.0 && m.glass_index.is_finite()) {
                return bad("materials.glass_index", "must be at least 1");
            }
        }
        let grid_ok = |g: &GridSpec| {
            g.start_nm > 0.0 && g.stop_nm > g.start_nm && g.step_nm > 0.0 && (g.stop_nm - g.start_nm) / g.step_nm <= 1e6
        };
        if let Some(a) = &self.antenna {
            if !(a.radius_nm > 0.0 && a.radius_nm.is_finite()) {
                return bad("antenna.radius_nm", "must be positive");
            }
            if !(a.medium_permittivity >= 1.0 && a.medium_permittivity.is_finite()) {
                return bad("antenna.medium_permittivity", "must be at least 1");
            }
            if !(0.0..1.0).contains(&a.noise_sigma) {
                return bad("antenna.noise_sigma", "must lie in [0, 1)");
            }
            if !grid_ok(&a.grid) {
                return bad("antenna.grid", "must be an increasing positive wavelength range");
            }
            if a.smoothing_window % 2 == 0 {
                return bad("antenna.smoothing_window", "must be odd");
            }
            if !(a.fit_max_nm > a.grid.start_nm) {
                return bad("antenna.fit_max_nm", "must exceed the grid start");
            }
        }
        if let Some(e) = &self.emitter {
            e.model.validate().map_err(|err| HarnessError::Config(format!("`emitter.model`: {err}")))?;
            if !(e.gap_nm > 0.0 && e.gap_nm.is_finite()) {
                return bad("emitter.gap_nm", "must be positive");
            }
            if !(e.base_rate_cps > 0.0 && e.base_rate_cps.is_finite()) {
                return bad("emitter.base_rate_cps", "must be positive");
            }
            if !(e.dwell_s > 0.0 && e.base_rate_cps * e.dwell_s < 1e12) {
                return bad("emitter.dwell_s", "must be positive and keep counts below 1e12");
            }
            for (name, t) in [("emitter.trace", e.trace), ("emitter.long_trace", e.long_trace)] {
                if let Some(t) = t {
                    if !(t.duration_s > 0.0 && t.bin_ms > 0.0 && t.duration_s * 1e3 / t.bin_ms <= 1e8) {
                        return bad(name, "needs positive duration and bin with at most 1e8 bins");
                    }
                    t.drift.validate().map_err(|err| HarnessError::Config(format!("`{name}.drift`: {err}")))?;
                }
            }
            if let Some(d) = &e.decay {
                if !(d.n_photons >= 1 && d.n_photons <= 100_000_000) {
                    return bad("emitter.decay.n_photons", "must lie in [1, 1e8]");
                }
                if !(d.fit_window.1 > d.fit_window.0) {
                    return bad("emitter.decay.fit_window", "must be an increasing pair");
                }
                if !(d.irf_sigma >= 0.0 && d.bin_width > 0.0 && d.irf_offset >= 0.0) {
                    return bad("emitter.decay", "needs irf_sigma ≥ 0, irf_offset ≥ 0 and bin_width > 0");
                }
            }
        }
        if let Some(c) = &self.camera {
            c.model.validate().map_err(|err| HarnessError::Config(format!("`camera.model`: {err}")))?;
            if c.frame_px.iter().any(|&n| !(8..=2048).contains(&n)) {
                return bad("camera.frame_px", "must be between 8 and 2048 pixels per side");
            }
            if !(c.photons > 0.0 && c.photons.is_finite()) {
                return bad("camera.photons", "must be positive");
            }
            if !(c.antenna_photons >= 0.0 && c.antenna_photons.is_finite()) {
                return bad("camera.antenna_photons", "must be non-negative");
            }
            if c.roi_half_px < 2 || 2 * c.roi_half_px + 1 > c.frame_px[0].min(c.frame_px[1]) {
                return bad("camera.roi_half_px", "must be at least 2 and fit inside the frame");
            }
            if c.repeats < 2 {
                return bad("camera.repeats", "must be at least 2");
            }
        }
        if let Some(i) = &self.interferometry {
            if !grid_ok(&i.grid) {
                return bad("interferometry.grid", "must be an increasing positive wavelength range");
            }
            if !(0.0..1.0).contains(&i.noise_sigma) {
                return bad("interferometry.noise_sigma", "must lie in [0, 1)");
            }
            if !(i.min_prominence > 0.0 && i.min_prominence < 1.0) {
                return bad("interferometry.min_prominence", "must lie in (0, 1)");
            }
            if !(i.monitor_wavelength_nm > 0.0) {
                return bad("interferometry.monitor_wavelength_nm", "must be positive");
            }
            if i.spectrum_every == 0 {
                return bad("interferometry.spectrum_every", "must be at least 1");
            }
        }
        for (i, c) in self.protocol.iter().enumerate() {
            let dv = match *c {
                Command::Lateral { dv, .. } | Command::Axial { dv, .. } => dv,
            };
            if !dv.is_finite() || dv.abs() > 1e4 {
                return Err(HarnessError::Config(format!("`protocol[{i}].dv` must be finite and at most 1e4 V")));
            }
            if c.repeat() == 0 || c.repeat() > 100_000 {
                return Err(HarnessError::Config(format!("`protocol[{i}].repeat` must lie in [1, 100000]")));
            }
        }
        let steps = |lateral: bool| {
            self.protocol
                .iter()
                .filter(|c| matches!(c, Command::Lateral { .. }) == lateral)
                .map(|c| c.repeat() as usize)
                .sum::<usize>()
        };
        let total: usize = self.protocol.iter().map(|c| c.repeat() as usize).sum();
        if total > 200_000 {
            return bad("protocol", "expands to more than 200000 steps");
        }
        match kind {
            ScenarioKind::LateralScan if steps(true) < 3 => bad("protocol", "needs at least 3 lateral steps"),
            ScenarioKind::LinescanCoarse | ScenarioKind::LinescanFine if steps(true) < 3 => {
                bad("protocol", "needs at least 3 lateral steps")
            }
            ScenarioKind::CoarseApproach | ScenarioKind::FineApproachPlasmon if steps(false) < 3 => {
                bad("protocol", "needs at least 3 axial steps")
            }
            ScenarioKind::Stability if self.emitter.is_some_and(|e| e.trace.is_none()) => {
                bad("emitter.trace", "is required by scenario kind `stability`")
            }
            _ => Ok(()),
        }
    }
}
