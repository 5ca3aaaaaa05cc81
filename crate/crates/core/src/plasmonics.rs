//! Gold nanosphere plasmon: dipole polarizability, image coupling to the
//! approaching substrate, scattering spectra and resonance fits.
//!
//! Polarizabilities are volume polarizabilities in nm³ (`p = ε_h ε₀ α E`).

use crate::error::{Error, Result};
use crate::interferometry::Spectrum;
use crate::materials::{DielectricTable, DEFAULT_GLASS_INDEX, GAP_INDEX};
use crate::optim::{minimize, LeastSquares, LmOptions};
use crate::real::{lit, Real};
use crate::rng::normal;
use num_complex::Complex;
use rand::Rng;

/// Upper end of the fitted spectral window (nm).
pub const DEFAULT_FIT_MAX_NM: f64 = 590.0;

#[derive(Debug, Clone, PartialEq)]
pub struct NanoAntennaModel<T> {
    /// Sphere radius (nm).
    pub radius: T,
    /// Permittivity of the gap medium.
    pub medium_permittivity: T,
    /// Permittivity of the glass substrates.
    pub substrate_permittivity: T,
    /// Embed the sphere in the mean of gap and substrate permittivities. This
    /// is how the static effect of the supporting substrate enters the
    /// unperturbed resonance.
    pub interface_embedding: bool,
    /// Include the `k²/a` dynamic-depolarization term.
    pub dynamic_depolarization: bool,
    pub gold: DielectricTable<T>,
}

impl<T: Real> Default for NanoAntennaModel<T> {
    fn default() -> Self {
        Self {
            radius: lit(40.0),
            medium_permittivity: lit(GAP_INDEX * GAP_INDEX),
            substrate_permittivity: lit(DEFAULT_GLASS_INDEX * DEFAULT_GLASS_INDEX),
            interface_embedding: true,
            dynamic_depolarization: true,
            gold: DielectricTable::gold(),
        }
    }
}

impl<T: Real> NanoAntennaModel<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > T::zero()) {
            return Err(Error::Geometry("sphere radius must be positive".into()));
        }
        if !(self.medium_permittivity > T::zero()) {
            return Err(Error::arg("medium permittivity must be positive"));
        }
        if !(self.substrate_permittivity > T::one()) {
            return Err(Error::arg("substrate permittivity must be real and > 1"));
        }
        Ok(())
    }

    /// Permittivity surrounding the sphere.
    pub fn host_permittivity(&self) -> T {
        if self.interface_embedding {
            (self.medium_permittivity + self.substrate_permittivity) * lit(0.5)
        } else {
            self.medium_permittivity
        }
    }

    /// Image-dipole strength `(ε_s − ε_m)/(ε_s + ε_m)` across the gap.
    pub fn image_beta(&self) -> T {
        (self.substrate_permittivity - self.medium_permittivity)
            / (self.substrate_permittivity + self.medium_permittivity)
    }

    /// Sphere-centre height above the approaching substrate.
    pub fn center_height(&self, gap: T) -> T {
        gap + self.radius
    }

    /// Free-space-scaled wavenumber in the host.
    pub fn wavenumber(&self, wavelength: T) -> T {
        T::TAU() * self.host_permittivity().sqrt() / wavelength
    }

    /// Radiatively corrected polarizability of the isolated sphere.
    pub fn polarizability(&self, wavelength: T) -> Result<Complex<T>> {
        let a0 = polarizability_quasistatic(wavelength, self)?;
        let radius = self.dynamic_depolarization.then_some(self.radius);
        Ok(polarizability_radiative(a0, wavelength, self.host_permittivity(), radius))
    }

    /// Polarizability renormalized by the image in a substrate `gap` away;
    /// an infinite gap gives the isolated sphere.
    pub fn polarizability_at_gap(&self, wavelength: T, gap: T) -> Result<Complex<T>> {
        let alpha = self.polarizability(wavelength)?;
        effective_polarizability_interface(alpha, self.center_height(gap), self.image_beta(), self.radius)
    }
}

/// `4πa³(ε − ε_h)/(ε + 2ε_h)` for a sphere of permittivity `eps`.
pub fn clausius_mossotti<T: Real>(eps: Complex<T>, eps_host: T, radius: T) -> Complex<T> {
    let volume = lit::<T>(4.0) * T::PI() * radius.powi(3);
    (eps - eps_host) / (eps + eps_host * lit(2.0)) * volume
}

pub fn polarizability_quasistatic<T: Real>(
    wavelength: T,
    model: &NanoAntennaModel<T>,
) -> Result<Complex<T>> {
    let eps = model.gold.permittivity(wavelength)?;
    Ok(clausius_mossotti(eps, model.host_permittivity(), model.radius))
}

/// Radiative-reaction correction `α₀/(1 − i k³α₀/6π)`, optionally with the
/// dynamic-depolarization term `k²α₀/(4πa)` for sphere radius `a`.
pub fn polarizability_radiative<T: Real>(
    alpha0: Complex<T>,
    wavelength: T,
    eps_host: T,
    dynamic_radius: Option<T>,
) -> Complex<T> {
    let k = T::TAU() * eps_host.sqrt() / wavelength;
    let mut den = Complex::new(T::one(), T::zero())
        - Complex::new(T::zero(), k.powi(3) / (lit::<T>(6.0) * T::PI())) * alpha0;
    if let Some(a) = dynamic_radius {
        den -= alpha0 * (k * k / (lit::<T>(4.0) * T::PI() * a));
    }
    alpha0 / den
}

/// Perpendicular-dipole image coupling at centre height `h` above a substrate
/// of image strength `beta`: `α/(1 − βα/(16πh³))`.
pub fn effective_polarizability_interface<T: Real>(
    alpha: Complex<T>,
    h: T,
    beta: T,
    radius: T,
) -> Result<Complex<T>> {
    if !(h >= radius) {
        return Err(Error::Geometry(format!(
            "centre height {h} nm is below the sphere radius {radius} nm"
        )));
    }
    Ok(couple(alpha, beta / (lit::<T>(16.0) * T::PI() * h.powi(3))))
}

fn couple<T: Real>(alpha: Complex<T>, coupling: T) -> Complex<T> {
    alpha / (Complex::new(T::one(), T::zero()) - alpha * coupling)
}

/// Normalized `k⁴|α_eff|²` with multiplicative Gaussian noise of fractional
/// `noise_sigma`.
pub fn scattering_spectrum<T: Real, R: Rng + ?Sized>(
    gap: T,
    grid: &[T],
    model: &NanoAntennaModel<T>,
    noise_sigma: T,
    rng: &mut R,
) -> Result<Spectrum<T>> {
    if !(gap >= T::zero()) {
        return Err(Error::Geometry(format!("gap must be non-negative, got {gap}")));
    }
    let mut values = Vec::with_capacity(grid.len());
    for &w in grid {
        let alpha = model.polarizability_at_gap(w, gap)?;
        values.push(model.wavenumber(w).powi(4) * alpha.norm_sqr());
    }
    let max = values.iter().fold(T::zero(), |m, v| m.max(*v));
    if !(max > T::zero()) || !max.is_finite() {
        return Err(Error::Degenerate("scattering spectrum has no finite maximum".into()));
    }
    for v in values.iter_mut() {
        let clean = *v / max;
        *v = if noise_sigma > T::zero() {
            (clean * (T::one() + normal(rng, noise_sigma))).max(T::zero())
        } else {
            clean
        };
    }
    Spectrum::new(grid.to_vec(), values)
}

/// Centred moving mean; the edges average over the part of the window that
/// fits.
pub fn moving_average<T: Real>(series: &[T], window: usize) -> Result<Vec<T>> {
    if window.is_multiple_of(2) || window == 0 {
        return Err(Error::arg(format!("moving-average window must be odd, got {window}")));
    }
    if window > series.len() {
        return Err(Error::arg(format!(
            "moving-average window {window} exceeds series length {}",
            series.len()
        )));
    }
    let half = window / 2;
    Ok((0..series.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(series.len() - 1);
            let sum = series[lo..=hi].iter().fold(T::zero(), |a, v| a + *v);
            sum / T::from_usize(hi - lo + 1).unwrap_or_else(T::one)
        })
        .collect())
}

/// Best-fit lineshape parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResonanceFit<T> {
    /// Wavelength of the fitted lineshape maximum (nm).
    pub wavelength: T,
    /// Dimensionless image coupling `g = βa³/(4h³)`.
    pub coupling: T,
    pub amplitude: T,
    pub background: T,
    /// `‖model − data‖₂` over the fitted window.
    pub residual_norm: T,
    pub iterations: usize,
}

/// Lineshape family `k⁴|α/(1 − gα/(4πa³))|²` indexed by the image coupling `g`.
struct Lineshape<'m, T> {
    model: &'m NanoAntennaModel<T>,
    scan: Vec<(T, T, Complex<T>)>,
}

impl<'m, T: Real> Lineshape<'m, T> {
    fn new(model: &'m NanoAntennaModel<T>, lo: T, hi: T) -> Result<Self> {
        let mut scan = Vec::new();
        let mut w = lo;
        while w <= hi {
            scan.push((w, model.wavenumber(w).powi(4), model.polarizability(w)?));
            w += T::one();
        }
        Ok(Self { model, scan })
    }

    fn coupling_scale(&self) -> T {
        T::one() / (lit::<T>(4.0) * T::PI() * self.model.radius.powi(3))
    }

    fn value(k4: T, alpha: Complex<T>, g: T, scale: T) -> T {
        k4 * couple(alpha, g * scale).norm_sqr()
    }

    fn at(&self, wavelength: T, g: T) -> Result<T> {
        let alpha = self.model.polarizability(wavelength)?;
        Ok(Self::value(self.model.wavenumber(wavelength).powi(4), alpha, g, self.coupling_scale()))
    }

    /// Lineshape maximum: 1 nm scan, then golden-section refinement.
    fn resonance(&self, g: T) -> Result<T> {
        let scale = self.coupling_scale();
        let mut best = 0;
        let mut best_v = T::neg_infinity();
        for (i, (_, k4, alpha)) in self.scan.iter().enumerate() {
            let v = Self::value(*k4, *alpha, g, scale);
            if v > best_v {
                best_v = v;
                best = i;
            }
        }
        let lo = self.scan[best.saturating_sub(1)].0;
        let hi = self.scan[(best + 1).min(self.scan.len() - 1)].0;
        let ratio: T = lit(0.618_033_988_749_894_8);
        let (mut a, mut b) = (lo, hi);
        let mut c = b - (b - a) * ratio;
        let mut d = a + (b - a) * ratio;
        let (mut fc, mut fd) = (self.at(c, g)?, self.at(d, g)?);
        while (b - a) > lit(1e-6) {
            if fc > fd {
                b = d;
                d = c;
                fd = fc;
                c = b - (b - a) * ratio;
                fc = self.at(c, g)?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + (b - a) * ratio;
                fd = self.at(d, g)?;
            }
        }
        Ok((a + b) * lit(0.5))
    }
}

/// Coupling range searched by the fit: blue-shifting images up to contact-like
/// red shifts.
const COUPLING_BOUNDS: (f64, f64) = (-0.1, 0.2);

/// Least-squares fit of `A·k⁴|α_g|²/L₀ + B` to the spectrum below
/// `fit_max_wavelength`, with `(g, A, B)` free.
///
/// Initialization: `g` is chosen by bisection so that the lineshape maximum
/// sits at the wavelength of the data maximum; `A` is the maximum and `B` the
/// minimum normalized intensity.
pub fn fit_resonance<T: Real>(
    spectrum: &Spectrum<T>,
    model: &NanoAntennaModel<T>,
    fit_max_wavelength: T,
) -> Result<ResonanceFit<T>> {
    let (wl, data): (Vec<T>, Vec<T>) = spectrum
        .wavelengths()
        .iter()
        .zip(spectrum.intensities())
        .filter(|(w, _)| **w <= fit_max_wavelength)
        .map(|(w, v)| (*w, *v))
        .unzip();
    if wl.len() < 8 {
        return Err(Error::arg(format!(
            "resonance fit needs at least 8 samples below {fit_max_wavelength} nm, got {}",
            wl.len()
        )));
    }
    let peak = data.iter().fold(T::zero(), |m, v| m.max(*v));
    if !(peak > T::zero()) {
        return Err(Error::Degenerate("spectrum is identically zero".into()));
    }
    let data: Vec<T> = data.iter().map(|v| *v / peak).collect();

    let (table_lo, table_hi) = model.gold.span();
    let scan_lo = table_lo.max(lit(450.0)).ceil();
    let scan_hi = table_hi.min(lit(750.0)).floor();
    let shape = Lineshape::new(model, scan_lo, scan_hi)?;
    let scale = shape.coupling_scale();
    let k4: Vec<T> = wl.iter().map(|w| model.wavenumber(*w).powi(4)).collect();
    let alphas = wl
        .iter()
        .map(|w| model.polarizability(*w))
        .collect::<Result<Vec<_>>>()?;
    let norm = k4
        .iter()
        .zip(&alphas)
        .map(|(k, a)| Lineshape::value(*k, *a, T::zero(), scale))
        .fold(T::zero(), |m, v| m.max(v));

    let (g_lo, g_hi) = (lit::<T>(COUPLING_BOUNDS.0), lit::<T>(COUPLING_BOUNDS.1));
    let target = wl[data
        .iter()
        .enumerate()
        .fold(0, |b, (i, v)| if *v > data[b] { i } else { b })];
    let (mut lo, mut hi) = (g_lo, g_hi);
    let g0 = if shape.resonance(lo)? >= target {
        lo
    } else if shape.resonance(hi)? <= target {
        hi
    } else {
        for _ in 0..40 {
            let mid = (lo + hi) * lit(0.5);
            if shape.resonance(mid)? < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (lo + hi) * lit(0.5)
    };
    let a0 = T::one();
    let b0 = data.iter().fold(T::one(), |m, v| m.min(*v));

    let residuals = |p: &[T], r: &mut [T]| {
        let (g, amp, bg) = (p[0], p[1], p[2]);
        for i in 0..r.len() {
            r[i] = amp * Lineshape::value(k4[i], alphas[i], g, scale) / norm + bg - data[i];
        }
        true
    };
    let problem = LeastSquares::new(3, wl.len(), residuals)
        .with_scales(vec![lit(0.01), T::one(), lit(0.1)])
        .with_bounds(
            vec![g_lo, T::zero(), -T::one()],
            vec![g_hi, lit(1e3), T::one()],
        );
    let report = minimize(&problem, &[g0, a0, b0], &LmOptions::default())?;
    if !report.converged {
        return Err(Error::FitFailure {
            reason: "resonance fit did not converge".into(),
            iterations: report.iterations,
            last_cost: report.cost.as_f64(),
        });
    }
    let p = &report.params;
    Ok(ResonanceFit {
        wavelength: shape.resonance(p[0])?,
        coupling: p[0],
        amplitude: p[1],
        background: p[2],
        residual_norm: (report.cost * lit(2.0)).sqrt(),
        iterations: report.iterations,
    })
}

/// Fitted resonance shift relative to the isolated sphere for each gap.
pub fn approach_shift_curve<T: Real>(
    gaps: &[T],
    grid: &[T],
    model: &NanoAntennaModel<T>,
) -> Result<Vec<(T, T)>> {
    if gaps.iter().any(|g| !(*g >= T::zero())) {
        return Err(Error::arg("gaps must be non-negative"));
    }
    if gaps.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::arg("gaps must be sorted in descending order"));
    }
    let fit = |gap: T| -> Result<T> {
        let mut rng = crate::rng::from_seed(0);
        let s = scattering_spectrum(gap, grid, model, T::zero(), &mut rng)?;
        Ok(fit_resonance(&s, model, lit(DEFAULT_FIT_MAX_NM))?.wavelength)
    };
    let reference = fit(T::infinity())?;
    gaps.iter().map(|g| Ok((*g, fit(*g)? - reference))).collect()
}
