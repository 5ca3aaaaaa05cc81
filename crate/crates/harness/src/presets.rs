//! Bundled scenario configurations.

use crate::config::ScenarioConfig;
use crate::error::{HarnessError, HarnessResult};

/// `(name, JSON)` for every bundled preset.
pub const PRESETS: [(&str, &str); 7] = [
    ("lateral-scan", include_str!("../presets/lateral-scan.json")),
    ("coarse-approach", include_str!("../presets/coarse-approach.json")),
    ("fine-approach-plasmon", include_str!("../presets/fine-approach-plasmon.json")),
    ("linescan-coarse", include_str!("../presets/linescan-coarse.json")),
    ("linescan-fine", include_str!("../presets/linescan-fine.json")),
    ("stability", include_str!("../presets/stability.json")),
    ("localization-precision", include_str!("../presets/localization-precision.json")),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

pub fn load(name: &str) -> HarnessResult<ScenarioConfig> {
    let (_, text) = PRESETS.iter().find(|(n, _)| *n == name).ok_or_else(|| {
        HarnessError::Config(format!(
            "unknown preset `{name}`; available: {}",
            names().collect::<Vec<_>>().join(", ")
        ))
    })?;
    ScenarioConfig::from_json(text)
}
