use std::path::Path;
use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const CONFIG: i32 = 2;
    pub const RUNTIME: i32 = 3;
    pub const FIT: i32 = 4;
}

#[derive(Debug, Error)]
pub enum HarnessError {
    /// Invalid or incomplete configuration, unknown preset, malformed input file.
    #[error("{0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error("{context}: {source}")]
    Physics {
        context: String,
        #[source]
        source: proscan_core::Error,
    },
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io { path: path.display().to_string(), source }
    }

    pub fn at_step(step: usize, source: proscan_core::Error) -> Self {
        HarnessError::Physics { context: format!("step {step}"), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => exit::CONFIG,
            HarnessError::Io { .. } => exit::RUNTIME,
            HarnessError::Physics { source, .. } if source.is_fit_failure() => exit::FIT,
            HarnessError::Physics { .. } => exit::RUNTIME,
        }
    }
}

/// Attaches a context label to core errors.
pub trait Context<T> {
    fn context(self, label: impl Into<String>) -> HarnessResult<T>;
}

impl<T> Context<T> for proscan_core::Result<T> {
    fn context(self, label: impl Into<String>) -> HarnessResult<T> {
        self.map_err(|source| HarnessError::Physics { context: label.into(), source })
    }
}

pub type HarnessResult<T> = std::result::Result<T, HarnessError>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_error_class() {
        let fit = proscan_core::Error::FitFailure { reason: "x".into(), iterations: 3, last_cost: 1.0 };
        assert_eq!(HarnessError::at_step(2, fit).exit_code(), exit::FIT);
        let geometry = proscan_core::Error::Geometry("x".into());
        let e = HarnessError::at_step(7, geometry);
        assert_eq!(e.exit_code(), exit::RUNTIME);
        assert!(e.to_string().starts_with("step 7:"));
        assert_eq!(HarnessError::Config("x".into()).exit_code(), exit::CONFIG);
    }
}
