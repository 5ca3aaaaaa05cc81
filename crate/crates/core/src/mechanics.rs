//! Piezo voltage → substrate motion.
//!
//! Axial motion bends the top cover glass: far from contact the substrate
//! follows a fixed fraction of the unloaded piezo travel, close to contact the
//! handle/plate system acts as a strong lever reduction. Lateral motion rolls
//! the top substrate on the spacer beads, with axis crosstalk, step-size
//! spread, perpendicular jitter and an optional backlash deadband.

use crate::error::{Error, Result};
use crate::real::Real;
use crate::rng::normal;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
        }
    }

    pub fn other(self) -> Axis {
        match self {
            Axis::X => Axis::Y,
            Axis::Y => Axis::X,
        }
    }
}

/// Lateral rolling response of one piezo axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiezoAxisModel<T> {
    /// Substrate travel per volt (nm/V).
    pub gain: T,
    /// Orthogonal displacement per unit of on-axis displacement.
    pub crosstalk_slope: T,
    /// On-axis spread of each realized step (nm).
    pub step_sigma: T,
    /// Perpendicular, non-accumulating position jitter (nm).
    pub jitter_sigma: T,
    /// Travel lost after a direction reversal (nm).
    pub backlash_deadband: T,
    /// Fractional gain growth per volt of accumulated |voltage| (1/V); 0 disables.
    #[serde(default)]
    pub gain_ramp: T,
}

impl<T: Real> PiezoAxisModel<T> {
    /// Mean step 7.3 nm/V, slope −0.023, on-axis spread 3.5 nm, jitter 2.74 nm.
    pub fn measured() -> Self {
        Self {
            gain: T::lit(7.3),
            crosstalk_slope: T::lit(-0.023),
            step_sigma: T::lit(3.5),
            jitter_sigma: T::lit(2.74),
            backlash_deadband: T::zero(),
            gain_ramp: T::zero(),
        }
    }

    /// Noise-free version of [`measured`](Self::measured).
    pub fn ideal() -> Self {
        Self {
            step_sigma: T::zero(),
            jitter_sigma: T::zero(),
            ..Self::measured()
        }
    }

    /// Zig-zag preset: 5 nm deadband, so the first step after each turning
    /// point comes out short.
    pub fn zigzag() -> Self {
        Self {
            backlash_deadband: T::lit(5.0),
            ..Self::measured()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gain > T::zero()) {
            return Err(Error::arg("lateral gain must be positive"));
        }
        if !(self.step_sigma >= T::zero()) || !(self.jitter_sigma >= T::zero()) {
            return Err(Error::arg("step and jitter sigmas must be non-negative"));
        }
        if !(self.backlash_deadband >= T::zero()) || !(self.gain_ramp >= T::zero()) {
            return Err(Error::arg("backlash deadband and gain ramp must be non-negative"));
        }
        if !(self.crosstalk_slope.abs() < T::lit(0.1)) {
            return Err(Error::arg("crosstalk slope must satisfy |m| < 0.1"));
        }
        Ok(())
    }
}

/// Axial transfer from piezo voltage to gap change.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxialTransferModel<T> {
    /// Handle displacement without load (nm/V).
    pub unloaded_gain: T,
    /// Gap change per volt close to contact (nm/V).
    pub fine_gain: T,
    /// Substrate displacement / piezo displacement during the coarse approach.
    pub coarse_ratio: T,
    /// Gap below which `fine_gain` applies (nm).
    pub fine_regime_threshold: T,
}

impl<T: Real> Default for AxialTransferModel<T> {
    fn default() -> Self {
        Self {
            unloaded_gain: T::lit(380.0),
            fine_gain: T::lit(2.0),
            coarse_ratio: T::lit(1.9 / 13.0),
            fine_regime_threshold: T::lit(500.0),
        }
    }
}

impl<T: Real> AxialTransferModel<T> {
    pub fn coarse_gain(&self) -> T {
        self.coarse_ratio * self.unloaded_gain
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.coarse_ratio > T::zero() && self.coarse_ratio < T::one()) {
            return Err(Error::arg("coarse ratio must lie in (0, 1)"));
        }
        if !(self.fine_gain > T::zero()
            && self.fine_gain < self.coarse_gain()
            && self.coarse_gain() < self.unloaded_gain)
        {
            return Err(Error::arg(
                "axial gains must satisfy 0 < fine < coarse_ratio·unloaded < unloaded",
            ));
        }
        if !(self.fine_regime_threshold >= T::zero()) {
            return Err(Error::arg("fine regime threshold must be non-negative"));
        }
        Ok(())
    }
}

/// Instantaneous geometry of the two substrates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanState<T> {
    /// Axial gap (nm).
    pub gap: T,
    /// Lateral substrate offset (x, y) in nm.
    pub lateral: [T; 2],
    /// Sign of the last lateral move per axis (0 before the first move).
    pub last_direction: [i8; 2],
    /// Deadband still to be taken up per axis (nm).
    pub pending_backlash: [T; 2],
    pub contact: bool,
    /// Accumulated lateral piezo voltage per axis.
    pub voltage: [T; 2],
    /// Perpendicular jitter currently contained in `lateral`, per axis.
    pub wobble: [T; 2],
}

impl<T: Real> ScanState<T> {
    pub fn new(gap: T) -> Result<Self> {
        if !(gap >= T::zero()) {
            return Err(Error::Geometry(format!("gap must be non-negative, got {gap}")));
        }
        Ok(Self {
            gap,
            lateral: [T::zero(); 2],
            last_direction: [0; 2],
            pending_backlash: [T::zero(); 2],
            contact: gap == T::zero(),
            voltage: [T::zero(); 2],
            wobble: [T::zero(); 2],
        })
    }

    pub fn validate(&self, deadband: T) -> Result<()> {
        if !(self.gap >= T::zero()) {
            return Err(Error::Geometry("negative gap".into()));
        }
        if self.contact != (self.gap == T::zero()) {
            return Err(Error::Geometry("contact flag inconsistent with gap".into()));
        }
        if self
            .pending_backlash
            .iter()
            .any(|b| !(*b >= T::zero() && *b <= deadband))
        {
            return Err(Error::Geometry("pending backlash outside [0, deadband]".into()));
        }
        Ok(())
    }
}

/// Positive `delta_v` closes the gap; the regime is re-evaluated when the gap
/// crosses the fine-regime threshold inside one step.
pub fn apply_axial_voltage<T: Real>(
    state: &ScanState<T>,
    delta_v: T,
    model: &AxialTransferModel<T>,
) -> ScanState<T> {
    let mut next = *state;
    if delta_v == T::zero() {
        return next;
    }
    let threshold = model.fine_regime_threshold;
    let (coarse, fine) = (model.coarse_gain(), model.fine_gain);
    let mut gap = state.gap;
    let mut volts = delta_v.abs();
    if delta_v > T::zero() {
        if gap >= threshold {
            let to_threshold = (gap - threshold) / coarse;
            if volts <= to_threshold {
                gap -= coarse * volts;
                volts = T::zero();
            } else {
                gap = threshold;
                volts -= to_threshold;
            }
        }
        gap -= fine * volts;
    } else {
        if gap < threshold {
            let to_threshold = (threshold - gap) / fine;
            if volts <= to_threshold {
                gap += fine * volts;
                volts = T::zero();
            } else {
                gap = threshold;
                volts -= to_threshold;
            }
        }
        gap += coarse * volts;
    }
    next.gap = gap.max(T::zero());
    next.contact = next.gap == T::zero();
    next
}

/// One lateral voltage step on `axis`.
///
/// Always consumes two normal draws from `rng` (on-axis spread, perpendicular
/// jitter) so the stream position depends only on the number of calls.
pub fn apply_lateral_voltage<T: Real, R: Rng + ?Sized>(
    state: &ScanState<T>,
    delta_v: T,
    axis: Axis,
    model: &PiezoAxisModel<T>,
    rng: &mut R,
) -> ScanState<T> {
    let mut next = *state;
    if delta_v == T::zero() {
        return next;
    }
    let (i, o) = (axis.index(), axis.other().index());
    let direction: i8 = if delta_v > T::zero() { 1 } else { -1 };
    let sign = T::lit(direction as f64);

    let gain = model.gain * (T::one() + model.gain_ramp * state.voltage[i].abs());
    let nominal = gain * delta_v.abs();
    let mut pending = state.pending_backlash[i];
    if state.last_direction[i] != 0 && state.last_direction[i] != direction {
        pending = model.backlash_deadband;
    }
    let absorbed = nominal.min(pending);
    let effective = nominal - absorbed;

    let spread = normal(rng, model.step_sigma);
    let wobble = normal(rng, model.jitter_sigma);
    let on_axis = if effective > T::zero() {
        sign * effective + spread
    } else {
        T::zero()
    };

    next.lateral[i] += on_axis;
    next.lateral[o] += model.crosstalk_slope * on_axis + (wobble - state.wobble[o]);
    next.wobble[o] = wobble;
    next.pending_backlash[i] = pending - absorbed;
    next.last_direction[i] = direction;
    next.voltage[i] += delta_v;
    next
}

/// Substrate shift when rolling without slip on spheres whose centres move by
/// `bead_center_shift`.
pub fn bead_roll_translation<T: Real>(bead_center_shift: T) -> T {
    bead_center_shift * T::lit(2.0)
}

/// Applies `steps` equal voltage increments and returns every lateral position,
/// starting with the initial one.
pub fn lateral_ramp<T: Real, R: Rng + ?Sized>(
    start: &ScanState<T>,
    delta_v: T,
    steps: usize,
    axis: Axis,
    model: &PiezoAxisModel<T>,
    rng: &mut R,
) -> (ScanState<T>, Vec<[T; 2]>) {
    let mut state = *start;
    let mut path = Vec::with_capacity(steps + 1);
    path.push(state.lateral);
    for _ in 0..steps {
        state = apply_lateral_voltage(&state, delta_v, axis, model, rng);
        path.push(state.lateral);
    }
    (state, path)
}
