//! Glass/air/glass cavity reflectance and the coarse gap estimators.

use crate::error::{Error, Result};
use crate::real::{lit, Real};
use crate::rng::normal;
use num_complex::Complex;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

/// Sampled wavelength/intensity pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum<T> {
    wavelengths: Vec<T>,
    intensities: Vec<T>,
}

impl<T: Real> Spectrum<T> {
    pub fn new(wavelengths: Vec<T>, intensities: Vec<T>) -> Result<Self> {
        if wavelengths.len() != intensities.len() {
            return Err(Error::arg(format!(
                "spectrum has {} wavelengths but {} intensities",
                wavelengths.len(),
                intensities.len()
            )));
        }
        if wavelengths.len() < 2 {
            return Err(Error::arg("spectrum needs at least 2 samples"));
        }
        if !wavelengths.iter().all(|w| *w > T::zero() && w.is_finite()) {
            return Err(Error::arg("spectrum wavelengths must be positive and finite"));
        }
        if !wavelengths.windows(2).all(|w| w[1] > w[0]) {
            return Err(Error::arg("spectrum wavelengths must be strictly increasing"));
        }
        if !intensities.iter().all(|v| *v >= T::zero() && v.is_finite()) {
            return Err(Error::arg("spectrum intensities must be finite and non-negative"));
        }
        Ok(Self {
            wavelengths,
            intensities,
        })
    }

    pub fn wavelengths(&self) -> &[T] {
        &self.wavelengths
    }

    pub fn intensities(&self) -> &[T] {
        &self.intensities
    }

    pub fn len(&self) -> usize {
        self.wavelengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.wavelengths.is_empty()
    }

    /// Sample with the largest intensity (first one on ties).
    pub fn peak(&self) -> (T, T) {
        let mut best = 0;
        for (i, v) in self.intensities.iter().enumerate() {
            if *v > self.intensities[best] {
                best = i;
            }
        }
        (self.wavelengths[best], self.intensities[best])
    }

    /// Scaled to unit maximum; an all-zero spectrum is returned unchanged.
    pub fn normalized(&self) -> Self {
        let (_, max) = self.peak();
        if max <= T::zero() {
            return self.clone();
        }
        Self {
            wavelengths: self.wavelengths.clone(),
            intensities: self.intensities.iter().map(|v| *v / max).collect(),
        }
    }

    /// Reads `wavelength_nm,intensity` with a header row.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let columns = read_columns(reader, &["wavelength_nm", "intensity"])?;
        let mut it = columns.into_iter();
        let (w, i) = (it.next().unwrap_or_default(), it.next().unwrap_or_default());
        Self::new(
            w.into_iter().map(lit).collect(),
            i.into_iter().map(lit).collect(),
        )
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::InvalidArgument(format!("writing spectrum: {e}"));
        out.write_record(["wavelength_nm", "intensity"]).map_err(io)?;
        for (w, v) in self.wavelengths.iter().zip(&self.intensities) {
            out.write_record([w.as_f64().to_string(), v.as_f64().to_string()])
                .map_err(io)?;
        }
        out.flush()
            .map_err(|e| Error::InvalidArgument(format!("writing spectrum: {e}")))
    }
}

/// Parses a headed numeric CSV whose header must equal `header`; errors name
/// the offending line and column.
pub(crate) fn read_columns<R: Read>(reader: R, header: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let found = rdr
        .headers()
        .map_err(|e| Error::InvalidArgument(format!("line 1: {e}")))?
        .clone();
    if found.len() != header.len() || found.iter().zip(header).any(|(a, b)| a != *b) {
        return Err(Error::InvalidArgument(format!(
            "line 1: expected header `{}`, found `{}`",
            header.join(","),
            found.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut columns = vec![Vec::new(); header.len()];
    for (k, record) in rdr.records().enumerate() {
        let line = k + 2;
        let record = record.map_err(|e| Error::InvalidArgument(format!("line {line}: {e}")))?;
        if record.len() != header.len() {
            return Err(Error::InvalidArgument(format!(
                "line {line}: expected {} fields, found {}",
                header.len(),
                record.len()
            )));
        }
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                Error::InvalidArgument(format!(
                    "line {line}, column {}: `{field}` is not a number",
                    c + 1
                ))
            })?;
            columns[c].push(v);
        }
    }
    Ok(columns)
}

/// Evenly spaced grid from `start` to `stop` inclusive.
pub fn wavelength_grid<T: Real>(start: T, stop: T, step: T) -> Result<Vec<T>> {
    if !(step > T::zero()) || !(stop > start) || !(start > T::zero()) {
        return Err(Error::arg("wavelength grid needs 0 < start < stop and step > 0"));
    }
    let n = ((stop - start) / step + lit(1e-9)).floor().to_usize().unwrap_or(0);
    Ok((0..=n)
        .map(|i| start + step * T::from_usize(i).unwrap_or_else(T::zero))
        .collect())
}

/// 450–750 nm in 0.25 nm steps.
pub fn default_grid<T: Real>() -> Vec<T> {
    (0..=1200).map(|i| lit(450.0 + 0.25 * i as f64)).collect()
}

/// Spectral shape of the white-light source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceEnvelope {
    #[default]
    Flat,
    /// Smooth lamp-like hump `exp(−(λ−center)²/(2·width²))`.
    Lamp { center_nm: f64, width_nm: f64 },
}

impl SourceEnvelope {
    pub fn weight<T: Real>(&self, wavelength: T) -> T {
        match *self {
            SourceEnvelope::Flat => T::one(),
            SourceEnvelope::Lamp {
                center_nm,
                width_nm,
            } => {
                let z = (wavelength - lit(center_nm)) / lit(width_nm);
                (-(z * z) * lit(0.5)).exp()
            }
        }
    }
}

/// Normal-incidence reflectance of a glass/air/glass stack with an air layer
/// of thickness `gap`.
///
/// `r = (r₁₂ + r₂₃ e^{2iδ}) / (1 + r₁₂ r₂₃ e^{2iδ})` with `δ = 2π·gap/λ` and
/// `r₂₃ = −r₁₂`, so maxima sit exactly at `λ = 4·gap/(2m+1)`.
pub fn cavity_reflectance<T: Real>(gap: T, wavelength: T, glass_index: T) -> Result<T> {
    if !(gap >= T::zero()) {
        return Err(Error::arg(format!("gap must be non-negative, got {gap}")));
    }
    if !(wavelength > T::zero()) {
        return Err(Error::arg(format!("wavelength must be positive, got {wavelength}")));
    }
    let n_gap: T = lit(crate::materials::GAP_INDEX);
    let r12 = (glass_index - n_gap) / (glass_index + n_gap);
    let r23 = -r12;
    let two_delta = lit::<T>(4.0) * T::PI() * n_gap * gap / wavelength;
    let phase = Complex::new(two_delta.cos(), two_delta.sin());
    let r = (phase * r23 + r12) / (phase * (r12 * r23) + T::one());
    Ok(r.norm_sqr().min(T::one()))
}

/// Reflected white-light spectrum with multiplicative Gaussian noise of
/// fractional `noise_sigma`.
pub fn white_light_spectrum<T: Real, R: Rng + ?Sized>(
    gap: T,
    grid: &[T],
    glass_index: T,
    envelope: SourceEnvelope,
    noise_sigma: T,
    rng: &mut R,
) -> Result<Spectrum<T>> {
    if !(noise_sigma >= T::zero()) {
        return Err(Error::arg("noise sigma must be non-negative"));
    }
    let mut intensities = Vec::with_capacity(grid.len());
    for &w in grid {
        let clean = cavity_reflectance(gap, w, glass_index)? * envelope.weight(w);
        let noisy = if noise_sigma > T::zero() {
            clean * (T::one() + normal(rng, noise_sigma))
        } else {
            clean
        };
        intensities.push(noisy.max(T::zero()));
    }
    Spectrum::new(grid.to_vec(), intensities)
}

/// Cavity gap from two neighbouring reflectance maxima.
pub fn gap_from_fsr<T: Real>(lambda1: T, lambda2: T) -> Result<T> {
    if !(lambda1 > T::zero()) || !(lambda2 > lambda1) {
        return Err(Error::arg(format!(
            "degenerate free spectral range: need 0 < λ₁ < λ₂, got {lambda1}, {lambda2}"
        )));
    }
    Ok(lambda1 * lambda2 / (lit::<T>(2.0) * (lambda2 - lambda1)))
}

/// Outcome of a fringe analysis.
#[derive(Debug, Clone, PartialEq)]
pub enum Fringes<T> {
    /// Maxima wavelengths in increasing order (at least two).
    Resolved(Vec<T>),
    /// Fewer than two prominent maxima; whatever was found is kept.
    Insufficient { maxima: Vec<T> },
}

impl<T: Real> Fringes<T> {
    pub fn maxima(&self) -> &[T] {
        match self {
            Fringes::Resolved(m) => m,
            Fringes::Insufficient { maxima } => maxima,
        }
    }

    pub fn is_resolved(&self) -> bool {
        matches!(self, Fringes::Resolved(_))
    }

    /// Gap estimates from every neighbouring pair of maxima.
    pub fn pair_gaps(&self) -> Vec<T> {
        self.maxima()
            .windows(2)
            .filter_map(|w| gap_from_fsr(w[0], w[1]).ok())
            .collect()
    }

    /// Mean of [`pair_gaps`](Self::pair_gaps); `None` when insufficient.
    pub fn gap(&self) -> Option<T> {
        let gaps = self.pair_gaps();
        if !self.is_resolved() || gaps.is_empty() {
            return None;
        }
        let n = T::from_usize(gaps.len())?;
        Some(gaps.iter().fold(T::zero(), |a, g| a + *g) / n)
    }
}

/// Default prominence threshold, as a fraction of the intensity range.
pub const DEFAULT_MIN_PROMINENCE: f64 = 0.5;

/// Indices of interior local maxima whose topographic prominence is at least
/// `threshold`. Plateaus report their first sample.
pub(crate) fn prominent_peaks<T: Real>(y: &[T], threshold: T) -> Vec<usize> {
    let n = y.len();
    let mut peaks = Vec::new();
    let mut i = 1;
    while i + 1 < n {
        if y[i] > y[i - 1] {
            let mut j = i;
            while j + 1 < n && y[j + 1] == y[i] {
                j += 1;
            }
            if j + 1 < n && y[j + 1] < y[i] {
                if prominence(y, i, j) >= threshold {
                    peaks.push(i);
                }
                i = j + 1;
                continue;
            }
        }
        i += 1;
    }
    peaks
}

fn prominence<T: Real>(y: &[T], first: usize, last: usize) -> T {
    let top = y[first];
    let mut left_min = top;
    for k in (0..first).rev() {
        if y[k] > top {
            break;
        }
        left_min = left_min.min(y[k]);
    }
    let mut right_min = top;
    for &v in &y[last + 1..] {
        if v > top {
            break;
        }
        right_min = right_min.min(v);
    }
    top - left_min.max(right_min)
}

/// Vertex of the parabola through three points.
fn parabola_vertex<T: Real>(x: [T; 3], y: [T; 3]) -> T {
    let (a, b) = (x[1] - x[0], x[1] - x[2]);
    let (fa, fb) = (y[1] - y[2], y[1] - y[0]);
    let den = a * fa - b * fb;
    if den == T::zero() {
        return x[1];
    }
    let v = x[1] - lit::<T>(0.5) * (a * a * fa - b * b * fb) / den;
    v.max(x[0]).min(x[2])
}

/// Local maxima with prominence ≥ `min_prominence × (max − min)`, each refined
/// by a 3-point parabola.
pub fn find_fringe_extrema<T: Real>(spectrum: &Spectrum<T>, min_prominence: T) -> Fringes<T> {
    let y = spectrum.intensities();
    let x = spectrum.wavelengths();
    let (lo, hi) = y
        .iter()
        .fold((y[0], y[0]), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    if !(hi > lo) {
        return Fringes::Insufficient { maxima: Vec::new() };
    }
    let threshold = min_prominence * (hi - lo);
    let maxima: Vec<T> = prominent_peaks(y, threshold)
        .into_iter()
        .map(|i| parabola_vertex([x[i - 1], x[i], x[i + 1]], [y[i - 1], y[i], y[i + 1]]))
        .collect();
    if maxima.len() < 2 {
        Fringes::Insufficient { maxima }
    } else {
        Fringes::Resolved(maxima)
    }
}

/// Displacement read off an intensity-vs-step trace at a fixed wavelength.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FringeCount<T> {
    Counted {
        /// Completed oscillations.
        full_oscillations: usize,
        /// Accumulated fringe phase (rad), including partial end segments.
        phase: T,
        /// `phase/2π × λ/2` in nm.
        displacement: T,
    },
    Insufficient {
        phase: T,
    },
}

impl<T: Real> FringeCount<T> {
    pub fn displacement(&self) -> Option<T> {
        match self {
            FringeCount::Counted { displacement, .. } => Some(*displacement),
            FringeCount::Insufficient { .. } => None,
        }
    }
}

/// Counts fringes in a trace recorded while the gap changes monotonically.
///
/// Prominent maxima and minima split the trace into half-fringes worth π
/// each. The partial segments before the first and after the last extremum
/// are converted to phase with `arccos` of the intensity normalized between
/// the mean minimum and mean maximum.
pub fn displacement_from_fringes<T: Real>(
    trace: &[T],
    wavelength: T,
    min_prominence: T,
) -> Result<FringeCount<T>> {
    if trace.len() < 3 {
        return Err(Error::arg("fringe trace needs at least 3 samples"));
    }
    if !(wavelength > T::zero()) {
        return Err(Error::arg("wavelength must be positive"));
    }
    let (lo, hi) = trace
        .iter()
        .fold((trace[0], trace[0]), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    let zero = FringeCount::Insufficient { phase: T::zero() };
    if !(hi > lo) {
        return Ok(zero);
    }
    let threshold = min_prominence * (hi - lo);
    let maxima = prominent_peaks(trace, threshold);
    let negated: Vec<T> = trace.iter().map(|v| -*v).collect();
    let minima = prominent_peaks(&negated, threshold);

    let mut extrema: Vec<(usize, bool)> = maxima
        .iter()
        .map(|i| (*i, true))
        .chain(minima.iter().map(|i| (*i, false)))
        .collect();
    extrema.sort_unstable();
    if extrema.is_empty() {
        return Ok(zero);
    }

    let mean = |idx: &[usize], fallback: T| {
        if idx.is_empty() {
            fallback
        } else {
            idx.iter().fold(T::zero(), |a, i| a + trace[*i])
                / T::from_usize(idx.len()).unwrap_or_else(T::one)
        }
    };
    let top = mean(&maxima, hi);
    let bottom = mean(&minima, lo);
    let span = (top - bottom).max(T::min_positive_value());
    let angle = |v: T| {
        let u = ((v - bottom) / span).max(T::zero()).min(T::one());
        (T::one() - lit::<T>(2.0) * u).acos()
    };
    let extreme_angle = |is_max: bool| if is_max { T::PI() } else { T::zero() };

    let interior = T::from_usize(extrema.len() - 1).unwrap_or_else(T::zero) * T::PI();
    let first_max = extrema[0].1;
    let last_max = extrema[extrema.len() - 1].1;
    let lead = (angle(trace[0]) - extreme_angle(first_max)).abs();
    let tail = (angle(trace[trace.len() - 1]) - extreme_angle(last_max)).abs();
    let phase = interior + lead + tail;

    let two_pi = T::TAU();
    let turns = phase / two_pi;
    let full = (turns + lit(1e-9)).floor().to_usize().unwrap_or(0);
    if full == 0 {
        return Ok(FringeCount::Insufficient { phase });
    }
    Ok(FringeCount::Counted {
        full_oscillations: full,
        phase,
        displacement: turns * wavelength * lit(0.5),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::from_seed;
    use proptest::prelude::*;

    const NG: f64 = 1.52;

    fn clean(gap: f64) -> Spectrum<f64> {
        white_light_spectrum(gap, &default_grid(), NG, SourceEnvelope::Flat, 0.0, &mut from_seed(0))
            .unwrap()
    }

    #[test]
    fn contact_is_index_matched() {
        assert!(cavity_reflectance(0.0, 532.0, NG).unwrap() < 1e-15);
        assert!(cavity_reflectance(-1.0, 532.0, NG).is_err());
        assert!(cavity_reflectance(10.0, 0.0, NG).is_err());
    }

    #[test]
    fn half_wave_gap_is_a_minimum_and_quarter_wave_a_maximum() {
        let r = |g| cavity_reflectance(g, 532.0, NG).unwrap();
        assert!(r(266.0) < 1e-15);
        assert!(r(266.0) <= r(265.0) && r(266.0) <= r(267.0));
        // Independent oracle: |r|² = 2ρ(1−cos2δ)/(1+ρ²−2ρcos2δ), ρ = r₁₂².
        let rho = ((NG - 1.0) / (NG + 1.0)).powi(2);
        let peak = 4.0 * rho / (1.0 + rho).powi(2);
        assert!((r(133.0) - peak).abs() < 1e-14);
        for g in [0.0, 37.0, 501.0, 5000.0] {
            let c = (4.0 * std::f64::consts::PI * g / 600.0).cos();
            let expect = 2.0 * rho * (1.0 - c) / (1.0 + rho * rho - 2.0 * rho * c);
            assert!((cavity_reflectance(g, 600.0, NG).unwrap() - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn fsr_formula() {
        assert!((gap_from_fsr(500.0f64, 525.0).unwrap() - 5250.0).abs() < 1e-9);
        assert!(gap_from_fsr(500.0, 500.0).is_err());
        assert!(gap_from_fsr(525.0, 500.0).is_err());
    }

    #[test]
    fn five_micron_gap_round_trip() {
        for gap in [5000.0, 5250.0] {
            let f = find_fringe_extrema(&clean(gap), DEFAULT_MIN_PROMINENCE);
            let m = f.maxima();
            assert!(m.len() >= 2);
            let est = gap_from_fsr(m[0], m[1]).unwrap();
            assert!((est - gap).abs() < 0.01 * gap, "{est}");
        }
    }

    #[test]
    fn small_gap_breaks_the_estimator() {
        let f = find_fringe_extrema(&clean(800.0), DEFAULT_MIN_PROMINENCE);
        assert!(!f.is_resolved(), "{f:?}");
        assert!(f.gap().is_none());
    }

    #[test]
    fn large_gap_shows_many_maxima() {
        let f = find_fringe_extrema(&clean(10_000.0), DEFAULT_MIN_PROMINENCE);
        assert!(f.maxima().len() >= 5);
        // Count oracle: maxima at λ = 4d/(2m+1) inside the window.
        let expected = (0..200)
            .map(|m| 40_000.0 / (2.0 * m as f64 + 1.0))
            .filter(|l| (451.0..749.0).contains(l))
            .count();
        assert_eq!(f.maxima().len(), expected);
    }

    #[test]
    fn zero_noise_is_pointwise_reflectance_times_envelope() {
        let env = SourceEnvelope::Lamp { center_nm: 600.0, width_nm: 120.0 };
        let grid = default_grid::<f64>();
        let s = white_light_spectrum(3000.0, &grid, NG, env, 0.0, &mut from_seed(9)).unwrap();
        for (w, v) in s.wavelengths().iter().zip(s.intensities()) {
            assert_eq!(*v, cavity_reflectance(3000.0, *w, NG).unwrap() * env.weight(*w));
        }
    }

    #[test]
    fn cosine_maxima_are_located_within_half_a_step() {
        let grid = wavelength_grid(0.0f64 + 1.0, 201.0, 0.7).unwrap();
        let y: Vec<f64> = grid
            .iter()
            .map(|x| 1.0 + (2.0 * std::f64::consts::PI * (x - 1.0) / 80.0 + 0.3).cos())
            .collect();
        let s = Spectrum::new(grid, y).unwrap();
        let m = find_fringe_extrema(&s, 0.5);
        let expected: Vec<f64> = (0..3)
            .map(|k| 1.0 + 80.0 * (k as f64 - 0.3 / (2.0 * std::f64::consts::PI)))
            .filter(|x| *x > 1.0 && *x < 201.0)
            .collect();
        assert_eq!(m.maxima().len(), expected.len());
        for (a, b) in m.maxima().iter().zip(&expected) {
            assert!((a - b).abs() < 0.35, "{a} vs {b}");
        }
    }

    #[test]
    fn monotone_and_flat_spectra_are_insufficient() {
        let grid = default_grid::<f64>();
        let ramp: Vec<f64> = grid.iter().map(|w| w / 1000.0).collect();
        let s = Spectrum::new(grid.clone(), ramp).unwrap();
        assert!(!find_fringe_extrema(&s, 0.5).is_resolved());
        let flat = Spectrum::new(grid.clone(), vec![0.3; grid.len()]).unwrap();
        assert_eq!(find_fringe_extrema(&flat, 0.5), Fringes::Insufficient { maxima: vec![] });
    }

    #[test]
    fn noisy_spectra_keep_the_maxima_count() {
        let grid = default_grid::<f64>();
        let reference = find_fringe_extrema(&clean(5000.0), DEFAULT_MIN_PROMINENCE).maxima().len();
        let agree = (0..100u64)
            .filter(|seed| {
                let s = white_light_spectrum(5000.0, &grid, NG, SourceEnvelope::Flat, 0.02, &mut from_seed(*seed))
                    .unwrap();
                find_fringe_extrema(&s, DEFAULT_MIN_PROMINENCE).maxima().len() == reference
            })
            .count();
        assert!(agree >= 95, "{agree}/100");
    }

    #[test]
    fn spectrum_validation_and_csv_round_trip() {
        assert!(Spectrum::new(vec![1.0], vec![1.0]).is_err());
        assert!(Spectrum::new(vec![1.0, 1.0], vec![1.0, 1.0]).is_err());
        assert!(Spectrum::new(vec![1.0, 2.0], vec![1.0, -1.0]).is_err());
        assert!(Spectrum::new(vec![1.0, 2.0], vec![1.0]).is_err());
        let s = Spectrum::new(vec![500.0, 500.1], vec![0.1, 1.0 / 3.0]).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert_eq!(Spectrum::from_csv(buf.as_slice()).unwrap(), s);
        let err = Spectrum::<f64>::from_csv("wavelength_nm,intensity\n500,1\n501,x\n".as_bytes())
            .unwrap_err();
        assert!(err.to_string().contains("line 3, column 2"), "{err}");
        assert!(Spectrum::<f64>::from_csv("a,b\n1,2\n".as_bytes()).is_err());
    }

    fn airy_trace(start_gap: f64, step: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|k| cavity_reflectance(start_gap - step * k as f64, 532.0, NG).unwrap())
            .collect()
    }

    #[test]
    fn one_full_oscillation_is_half_a_wavelength() {
        // Maximum to maximum: gaps 133 + 266 → 133.
        let trace = airy_trace(399.0, 1.0, 267);
        let c = displacement_from_fringes(&trace, 532.0, 0.5).unwrap();
        match c {
            FringeCount::Counted { full_oscillations, displacement, .. } => {
                assert_eq!(full_oscillations, 1);
                assert!((displacement - 266.0).abs() < 1.0, "{displacement}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn seven_oscillations_read_as_about_1_9_microns() {
        let trace = airy_trace(399.0 + 6.0 * 266.0, 2.0, 7 * 133 + 1);
        let c = displacement_from_fringes(&trace, 532.0, 0.5).unwrap();
        let FringeCount::Counted { full_oscillations, displacement, .. } = c else {
            panic!("{c:?}")
        };
        assert_eq!(full_oscillations, 7);
        assert!((displacement - 1862.0).abs() < 2.0, "{displacement}");
    }

    #[test]
    fn flat_or_short_traces_are_insufficient() {
        let c = displacement_from_fringes(&[0.5; 50], 532.0, 0.5).unwrap();
        assert_eq!(c, FringeCount::Insufficient { phase: 0.0 });
        assert!(displacement_from_fringes(&[0.5, 0.1], 532.0, 0.5).is_err());
        let half = airy_trace(266.0, 1.0, 134);
        assert!(displacement_from_fringes(&half, 532.0, 0.5).unwrap().displacement().is_none());
    }

    #[test]
    fn single_precision_reflectance() {
        let a = cavity_reflectance(1234.5f32, 600.0, 1.52).unwrap();
        let b = cavity_reflectance(1234.5f64, 600.0, 1.52).unwrap();
        assert!((a as f64 - b).abs() < 1e-5);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn reflectance_is_bounded(gap in 0.0f64..20_000.0, w in 300.0f64..900.0) {
            let r = cavity_reflectance(gap, w, NG).unwrap();
            prop_assert!((0.0..=1.0).contains(&r));
        }

        #[test]
        fn any_neighbouring_pair_gives_the_same_gap(gap in 2_000.0f64..20_000.0) {
            let f = find_fringe_extrema(&clean(gap), DEFAULT_MIN_PROMINENCE);
            for g in f.pair_gaps() {
                prop_assert!((g - gap).abs() < 0.02 * gap);
            }
        }
    }
}
