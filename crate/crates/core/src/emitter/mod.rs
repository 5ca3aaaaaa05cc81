//! Quantum dot coupled to the gold sphere.
//!
//! [`rates`] holds the deterministic near-field factors (generic over the
//! scalar type). [`decay`] and [`trace`] simulate and analyse photon-counting
//! data and work in `f64`, since they lean on `statrs` distributions.

pub mod decay;
pub mod rates;
pub mod trace;

pub use decay::{fit_biexponential, simulate_decay_histogram, DecayHistogram, DecaySimulation, LifetimeFit};
pub use rates::{
    decay_rates_near_sphere, field_enhancement, fluorescence_enhancement, linescan_enhancement,
    CoupledEmitter, LinescanPoint, QuantumEmitterModel, RateModification, DEFAULT_MAX_MULTIPOLE,
};
pub use trace::{intensity_trace, poisson_goodness, DriftModel, PoissonTest};
