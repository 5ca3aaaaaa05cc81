//! Gaussian spot fitting and the localization-precision bound.
//!
//! Spots are fitted by Poisson maximum likelihood. Gaussian read noise of
//! variance `r²` is folded in by fitting `counts + r²` against
//! `expectation + r²`, the usual shifted-Poisson approximation.

use super::{pixel_weights, Frame, Roi, SATURATION};
use crate::error::{Error, Result};
use crate::optim::{minimize, LmOptions, PoissonLikelihood};
use crate::real::{lit, Real};
use serde::{Deserialize, Serialize};

/// Reduced χ² above which a fit is flagged (several spots, bad model).
pub const WORST_FIT_THRESHOLD: f64 = 2.0;

/// Single-spot result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Localization<T> {
    pub x: T,
    pub y: T,
    pub sigma_x: T,
    pub sigma_y: T,
    pub photons: T,
    pub background: T,
    /// Reduced Pearson χ² of the fit.
    pub fit_residual: T,
    pub worst_fit: bool,
}

/// Joint fit of several spots sharing widths and background.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpotFit<T> {
    /// `(x, y, photons)` per spot, in the order of the initial guesses.
    pub spots: Vec<[T; 3]>,
    pub sigma_x: T,
    pub sigma_y: T,
    pub background: T,
    pub fit_residual: T,
    pub worst_fit: bool,
}

struct RoiData<T> {
    roi: Roi,
    /// Counts plus read-noise variance.
    data: Vec<T>,
    offset: T,
    start: [T; 2],
    pixel: T,
}

fn roi_data<T: Real>(frame: &Frame<T>, roi: &Roi) -> Result<RoiData<T>> {
    if roi.width < 3 || roi.height < 3 {
        return Err(Error::arg("localization ROI must be at least 3×3 pixels"));
    }
    if roi.x + roi.width > frame.width() || roi.y + roi.height > frame.height() {
        return Err(Error::arg(format!("ROI {roi:?} exceeds the frame")));
    }
    let mut raw = Vec::with_capacity(roi.width * roi.height);
    for j in roi.y..roi.y + roi.height {
        for i in roi.x..roi.x + roi.width {
            raw.push(frame.pixel(i, j));
        }
    }
    if raw.contains(&SATURATION) {
        return Err(Error::Degenerate("ROI contains saturated pixels".into()));
    }
    if raw.iter().all(|v| *v == raw[0]) {
        return Err(Error::Degenerate("ROI is flat".into()));
    }
    let read = frame.camera().read_noise;
    let offset = read * read;
    Ok(RoiData {
        roi: *roi,
        data: raw.iter().map(|v| T::from_u16(*v).unwrap_or_else(T::zero) + offset).collect(),
        offset,
        start: [frame.edge(0, roi.x), frame.edge(1, roi.y)],
        pixel: frame.camera().pixel_size,
    })
}

impl<T: Real> RoiData<T> {
    fn count(&self, k: usize) -> T {
        self.data[k] - self.offset
    }

    fn centre(&self, axis: usize, index: usize) -> T {
        self.start[axis] + self.pixel * (T::from_usize(index).unwrap_or_else(T::zero) + lit(0.5))
    }

    fn extent(&self, axis: usize) -> T {
        let n = if axis == 0 { self.roi.width } else { self.roi.height };
        self.pixel * T::from_usize(n).unwrap_or_else(T::zero)
    }

    /// Mean of the ROI perimeter.
    fn border_mean(&self) -> T {
        let (w, h) = (self.roi.width, self.roi.height);
        let mut sum = T::zero();
        let mut n = 0usize;
        for j in 0..h {
            for i in 0..w {
                if i == 0 || j == 0 || i + 1 == w || j + 1 == h {
                    sum += self.count(j * w + i);
                    n += 1;
                }
            }
        }
        sum / T::from_usize(n).unwrap_or_else(T::one)
    }

    fn fit(&self, initial: &[[T; 3]], sigma0: [T; 2], bg0: T) -> Result<SpotFit<T>> {
        let k = initial.len();
        let (w, h) = (self.roi.width, self.roi.height);
        let dim = 3 * k + 3;
        let offset = self.offset;
        let model = |p: &[T], mu: &mut [T]| {
            let (sx, sy, bg) = (p[3 * k], p[3 * k + 1], p[3 * k + 2]);
            mu.iter_mut().for_each(|m| *m = bg + offset);
            let (mut wx, mut wy) = (vec![T::zero(); w], vec![T::zero(); h]);
            for s in 0..k {
                let (x, y, n) = (p[3 * s], p[3 * s + 1], p[3 * s + 2]);
                pixel_weights(x, sx, self.start[0], self.pixel, w, &mut wx);
                pixel_weights(y, sy, self.start[1], self.pixel, h, &mut wy);
                for j in 0..h {
                    for i in 0..w {
                        mu[j * w + i] += n * wx[i] * wy[j];
                    }
                }
            }
            true
        };

        let total = self.data.iter().fold(T::zero(), |a, v| a + *v);
        let mut lower = Vec::with_capacity(dim);
        let mut upper = Vec::with_capacity(dim);
        let mut scales = Vec::with_capacity(dim);
        let mut start = Vec::with_capacity(dim);
        for s in initial {
            for axis in 0..2 {
                lower.push(self.start[axis]);
                upper.push(self.start[axis] + self.extent(axis));
                scales.push(self.pixel);
                start.push(s[axis]);
            }
            lower.push(lit(1e-6));
            upper.push(total * lit(100.0) + lit(1.0));
            scales.push(s[2].max(T::one()));
            start.push(s[2].max(T::one()));
        }
        let max_extent = self.extent(0).max(self.extent(1));
        for axis in 0..2 {
            lower.push(self.pixel * lit(0.1));
            upper.push(max_extent);
            scales.push(sigma0[axis]);
            start.push(sigma0[axis]);
        }
        lower.push(lit(1e-6));
        upper.push(total + lit(1.0));
        scales.push(bg0.max(T::one()));
        start.push(bg0.max(lit(1e-3)));

        let objective = PoissonLikelihood::new(dim, &self.data, model)
            .with_scales(scales)
            .with_bounds(lower, upper);
        let report = minimize(&objective, &start, &LmOptions::default())?;
        if !report.converged {
            return Err(Error::FitFailure {
                reason: "spot fit did not converge".into(),
                iterations: report.iterations,
                last_cost: report.cost.as_f64(),
            });
        }
        let p = &report.params;
        let mu = objective.expectations(p).ok_or_else(|| Error::FitFailure {
            reason: "spot model undefined at the optimum".into(),
            iterations: report.iterations,
            last_cost: report.cost.as_f64(),
        })?;
        let chi2 = self
            .data
            .iter()
            .zip(&mu)
            .fold(T::zero(), |a, (d, m)| a + (*d - *m) * (*d - *m) / *m);
        let dof = (w * h).saturating_sub(dim).max(1);
        let reduced = chi2 / T::from_usize(dof).unwrap_or_else(T::one);
        Ok(SpotFit {
            spots: (0..k).map(|s| [p[3 * s], p[3 * s + 1], p[3 * s + 2]]).collect(),
            sigma_x: p[3 * k],
            sigma_y: p[3 * k + 1],
            background: p[3 * k + 2],
            fit_residual: reduced,
            worst_fit: reduced > lit(WORST_FIT_THRESHOLD),
        })
    }

    /// Brightest pixel, background-subtracted second moments and net counts.
    fn moment_guess(&self) -> ([T; 3], [T; 2], T) {
        let (w, h) = (self.roi.width, self.roi.height);
        let bg = self.border_mean();
        let best = (0..w * h).fold(0, |b, k| if self.data[k] > self.data[b] { k } else { b });
        let (bx, by) = (self.centre(0, best % w), self.centre(1, best / w));
        let (mut sw, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
        for j in 0..h {
            for i in 0..w {
                let v = self.count(j * w + i) - bg;
                if v > T::zero() {
                    let (dx, dy) = (self.centre(0, i) - bx, self.centre(1, j) - by);
                    sw += v;
                    sxx += v * dx * dx;
                    syy += v * dy * dy;
                }
            }
        }
        let pix2 = self.pixel * self.pixel / lit(12.0);
        let clamp = |var: T, axis: usize| {
            let s = if sw > T::zero() { (var / sw - pix2).max(T::zero()).sqrt() } else { self.pixel };
            s.max(self.pixel * lit(0.3)).min(self.extent(axis) * lit(0.5))
        };
        ([bx, by, sw.max(T::one())], [clamp(sxx, 0), clamp(syy, 1)], bg.max(lit(1e-3)))
    }
}

/// Elliptical Gaussian plus constant background fitted to one spot in `roi`.
pub fn localize_2d<T: Real>(frame: &Frame<T>, roi: &Roi) -> Result<Localization<T>> {
    let data = roi_data(frame, roi)?;
    let (spot, sigma, bg) = data.moment_guess();
    let fit = data.fit(&[spot], sigma, bg)?;
    let [x, y, photons] = fit.spots[0];
    Ok(Localization {
        x,
        y,
        sigma_x: fit.sigma_x,
        sigma_y: fit.sigma_y,
        photons,
        background: fit.background,
        fit_residual: fit.fit_residual,
        worst_fit: fit.worst_fit,
    })
}

/// Joint fit of `initial.len()` spots starting from the given positions (nm),
/// with widths starting at the camera PSF.
pub fn localize_spots<T: Real>(frame: &Frame<T>, roi: &Roi, initial: &[[T; 2]]) -> Result<SpotFit<T>> {
    if initial.is_empty() {
        return Err(Error::arg("at least one initial spot position is required"));
    }
    let data = roi_data(frame, roi)?;
    let bg = data.border_mean().max(lit(1e-3));
    let net = data.data.iter().fold(T::zero(), |a, v| a + (*v - data.offset - bg).max(T::zero()));
    let share = (net / T::from_usize(initial.len()).unwrap_or_else(T::one)).max(T::one());
    let starts: Vec<[T; 3]> = initial.iter().map(|p| [p[0], p[1], share]).collect();
    let psf = frame.camera().psf_sigma;
    data.fit(&starts, [psf, psf], bg)
}

/// Localization precision (nm) of a maximum-likelihood Gaussian fit:
/// `σ² = σₐ²/N · (1 + 4τ + √(2τ/(1 + 4τ)))`, `σₐ² = s² + a²/12`,
/// `τ = 2π σₐ² b/(N a²)`.
pub fn crlb_precision<T: Real>(photons: T, background_per_pixel: T, psf_sigma: T, pixel_size: T) -> Result<T> {
    if !(photons > T::zero()) {
        return Err(Error::arg("photon count must be positive"));
    }
    if !(psf_sigma > T::zero()) || !(pixel_size >= T::zero()) || !(background_per_pixel >= T::zero()) {
        return Err(Error::arg("invalid PSF width, pixel size or background"));
    }
    let sa2 = psf_sigma * psf_sigma + pixel_size * pixel_size / lit(12.0);
    let tau = if background_per_pixel > T::zero() {
        T::TAU() * sa2 * background_per_pixel / (photons * pixel_size * pixel_size)
    } else {
        T::zero()
    };
    let four_tau = tau * lit(4.0);
    let factor = T::one() + four_tau + (tau * lit(2.0) / (T::one() + four_tau)).sqrt();
    Ok((sa2 / photons * factor).sqrt())
}

/// Photon count at which [`crlb_precision`] equals `target` (bisection in
/// log-photons).
pub fn photons_for_precision<T: Real>(target: T, background_per_pixel: T, psf_sigma: T, pixel_size: T) -> Result<T> {
    if !(target > T::zero()) {
        return Err(Error::arg("target precision must be positive"));
    }
    let (mut lo, mut hi) = (lit::<T>(1e-3).ln(), lit::<T>(1e12).ln());
    let at = |ln_n: T| crlb_precision(ln_n.exp(), background_per_pixel, psf_sigma, pixel_size);
    if at(hi)? > target {
        return Err(Error::arg("target precision is unreachable"));
    }
    for _ in 0..200 {
        let mid = (lo + hi) * lit(0.5);
        if at(mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(((lo + hi) * lit(0.5)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{render_frame, CameraModel};
    use crate::rng::{from_seed, StreamRng};

    fn preset_camera() -> CameraModel<f64> {
        CameraModel::default()
    }

    #[test]
    fn shot_noise_limit_and_scaling() {
        let s: f64 = crlb_precision(1e4, 0.0, 100.0, 1e-9).unwrap();
        assert!((s - 1.0).abs() < 1e-9);
        let a = crlb_precision(500.0, 0.0, 100.0, 100.0).unwrap();
        let b = crlb_precision(1000.0, 0.0, 100.0, 100.0).unwrap();
        assert!((a / b - 2f64.sqrt()).abs() < 1e-12);
        assert!(crlb_precision(0.0, 1.0, 100.0, 100.0).is_err());
    }

    #[test]
    fn inversion_hits_the_target() {
        let cam = preset_camera();
        let n = photons_for_precision(2.4, cam.background_rate, cam.psf_sigma, cam.pixel_size).unwrap();
        let back = crlb_precision(n, cam.background_rate, cam.psf_sigma, cam.pixel_size).unwrap();
        assert!((back - 2.4).abs() < 1e-9);
    }

    #[test]
    fn noiseless_spot_is_recovered_exactly() {
        let cam = CameraModel { background_rate: 5.0, ..preset_camera() };
        // Rounding to integer counts is the only noise; a bright source makes it negligible.
        let (x, y) = (1012.3, 987.6);
        let f = render_frame::<f64, StreamRng>(&[(x, y, 3e5)], &cam, (21, 21), [0.0, 0.0], None).unwrap();
        let loc = localize_2d(&f, &Roi::new(4, 4, 13, 13)).unwrap();
        assert!((loc.x - x).abs() < 0.1 && (loc.y - y).abs() < 0.1, "{loc:?}");
        assert!((loc.sigma_x - 97.5).abs() < 0.1 && (loc.sigma_y - 97.5).abs() < 0.1);
        assert!(!loc.worst_fit);
    }

    #[test]
    fn flat_and_saturated_rois_are_degenerate() {
        let cam = preset_camera();
        let flat = Frame::new(9, 9, vec![10; 81], [0.0, 0.0], cam).unwrap();
        assert!(matches!(localize_2d(&flat, &flat.full_roi()), Err(Error::Degenerate(_))));
        let mut px = vec![10; 81];
        px[40] = SATURATION;
        let sat = Frame::new(9, 9, px, [0.0, 0.0], cam).unwrap();
        assert!(matches!(localize_2d(&sat, &sat.full_roi()), Err(Error::Degenerate(_))));
        assert!(localize_2d(&sat, &Roi::new(5, 5, 6, 6)).is_err());
    }

    #[test]
    fn two_spots_in_one_roi_are_flagged() {
        let cam = preset_camera();
        let src = [(800.0, 1000.0, 20_000.0), (1200.0, 1000.0, 20_000.0)];
        let f = render_frame(&src, &cam, (20, 20), [0.0, 0.0], Some(&mut from_seed(1))).unwrap();
        let loc = localize_2d(&f, &Roi::new(3, 5, 14, 10)).unwrap();
        assert!(loc.worst_fit, "{loc:?}");
        let joint = localize_spots(&f, &Roi::new(3, 5, 14, 10), &[[850.0, 950.0], [1150.0, 1050.0]]).unwrap();
        assert!(!joint.worst_fit);
        assert!((joint.spots[0][0] - 800.0).abs() < 5.0 && (joint.spots[1][0] - 1200.0).abs() < 5.0);
    }

    fn precision(photons: f64, seeds: u64) -> (f64, f64, f64) {
        let cam = preset_camera();
        let (x, y) = (1000.0, 1000.0);
        let mut ex = Vec::new();
        let mut ey = Vec::new();
        for s in 0..seeds {
            let mut rng = from_seed(1000 + s);
            let jitter = [crate::rng::normal(&mut rng, 30.0), crate::rng::normal(&mut rng, 30.0)];
            let (tx, ty) = (x + jitter[0], y + jitter[1]);
            let f = render_frame(&[(tx, ty, photons)], &cam, (20, 20), [0.0, 0.0], Some(&mut rng)).unwrap();
            let loc = localize_2d(&f, &Roi::new(4, 4, 12, 12)).unwrap();
            ex.push(loc.x - tx);
            ey.push(loc.y - ty);
        }
        let sd = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            ((v.iter().map(|a| (a - m).powi(2)).sum::<f64>()) / (v.len() - 1) as f64).sqrt()
        };
        let bias = (ex.iter().sum::<f64>() / ex.len() as f64).abs().max((ey.iter().sum::<f64>() / ey.len() as f64).abs());
        (sd(&ex), sd(&ey), bias)
    }

    #[test]
    fn precision_tracks_the_bound() {
        let cam = preset_camera();
        for photons in [500.0, 2000.0, 8000.0] {
            let (sx, sy, _) = precision(photons, 200);
            let bound = crlb_precision(photons, cam.background_rate, cam.psf_sigma, cam.pixel_size).unwrap();
            for s in [sx, sy] {
                assert!((s / bound - 1.0).abs() < 0.25, "N={photons}: {s} vs {bound}");
            }
        }
    }
}
