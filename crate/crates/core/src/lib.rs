//! Digital twin of a press-and-roll (tip-less) near-field positioning device.
//!
//! Forward models cover substrate mechanics, cavity interferometry, the gold
//! nanoparticle plasmon, emitter–antenna coupling and camera/photon-counting
//! detection. The analysis side mirrors what is done on measured data: gap
//! estimation from fringes, resonance lineshape fits, Gaussian localization,
//! trajectory statistics, lifetime fits and Poisson tests.
//!
//! Deterministic models are generic over [`Real`] (`f32`/`f64`); the `*F64`
//! aliases below name the usual double-precision instantiations.

// `!(a > b)` guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod emitter;
pub mod error;
pub mod imaging;
pub mod interferometry;
pub mod materials;
pub mod mechanics;
pub mod optim;
pub mod plasmonics;
pub mod real;
pub mod rng;

pub use error::{Error, Result};
pub use real::Real;

/// Crate version, recorded in result manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub type DielectricTableF64 = materials::DielectricTable<f64>;
pub type MaterialsF64 = materials::Materials<f64>;
pub type ScanStateF64 = mechanics::ScanState<f64>;
pub type PiezoAxisModelF64 = mechanics::PiezoAxisModel<f64>;
pub type AxialTransferModelF64 = mechanics::AxialTransferModel<f64>;
pub type SpectrumF64 = interferometry::Spectrum<f64>;
pub type SpectrumF32 = interferometry::Spectrum<f32>;
pub type NanoAntennaModelF64 = plasmonics::NanoAntennaModel<f64>;
pub type NanoAntennaModelF32 = plasmonics::NanoAntennaModel<f32>;
pub type QuantumEmitterModelF64 = emitter::QuantumEmitterModel<f64>;
pub type RateModificationF64 = emitter::RateModification<f64>;
pub type CameraModelF64 = imaging::CameraModel<f64>;
pub type FrameF64 = imaging::Frame<f64>;
