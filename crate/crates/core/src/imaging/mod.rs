//! Wide-field camera frames and the localization analyses built on them.

mod localize;
mod trajectory;

pub use localize::{
    crlb_precision, localize_2d, localize_spots, photons_for_precision, Localization, SpotFit,
    WORST_FIT_THRESHOLD,
};
pub use trajectory::{analyze_trajectory, separation_series, SeparationPoint, TrajectoryStats, MIN_SIDEBAND};

use crate::error::{Error, Result};
use crate::real::{lit, Real};
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

/// Largest representable pixel value; such pixels count as saturated.
pub const SATURATION: u16 = u16::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel<T> {
    /// Pixel pitch in the sample plane (nm).
    pub pixel_size: T,
    /// Gaussian read noise (counts rms).
    pub read_noise: T,
    /// Mean background per pixel per frame.
    pub background_rate: T,
    /// Gaussian PSF standard deviation (nm).
    pub psf_sigma: T,
}

impl<T: Real> Default for CameraModel<T> {
    /// 100 nm pixels, σ = 0.21·650 nm/1.4, 10 background counts, no read noise.
    fn default() -> Self {
        Self {
            pixel_size: lit(100.0),
            read_noise: T::zero(),
            background_rate: lit(10.0),
            psf_sigma: lit(0.21 * 650.0 / 1.4),
        }
    }
}

impl<T: Real> CameraModel<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.pixel_size > T::zero() && self.psf_sigma > T::zero()) {
            return Err(Error::arg("pixel size and PSF width must be positive"));
        }
        if !(self.read_noise >= T::zero() && self.background_rate >= T::zero()) {
            return Err(Error::arg("read noise and background must be non-negative"));
        }
        Ok(())
    }
}

/// Rectangular pixel region `[x, x + width) × [y, y + height)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roi {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl Roi {
    pub fn new(x: usize, y: usize, width: usize, height: usize) -> Self {
        Self { x, y, width, height }
    }

    /// Smallest region covering both.
    pub fn union(&self, other: &Roi) -> Roi {
        let x = self.x.min(other.x);
        let y = self.y.min(other.y);
        let x1 = (self.x + self.width).max(other.x + other.width);
        let y1 = (self.y + self.height).max(other.y + other.height);
        Roi::new(x, y, x1 - x, y1 - y)
    }
}

/// One camera image. `origin` is the sample-plane position (nm) of the outer
/// corner of pixel (0, 0); pixel `(i, j)` covers
/// `[origin.x + i·p, origin.x + (i+1)·p) × [origin.y + j·p, …)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame<T> {
    width: usize,
    height: usize,
    pixels: Vec<u16>,
    origin: [T; 2],
    camera: CameraModel<T>,
}

impl<T: Real> Frame<T> {
    pub fn new(width: usize, height: usize, pixels: Vec<u16>, origin: [T; 2], camera: CameraModel<T>) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(Error::arg(format!(
                "frame of {width}×{height} needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        camera.validate()?;
        Ok(Self { width, height, pixels, origin, camera })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Row-major pixel values.
    pub fn pixels(&self) -> &[u16] {
        &self.pixels
    }

    pub fn pixel(&self, i: usize, j: usize) -> u16 {
        self.pixels[j * self.width + i]
    }

    pub fn origin(&self) -> [T; 2] {
        self.origin
    }

    pub fn camera(&self) -> &CameraModel<T> {
        &self.camera
    }

    pub fn full_roi(&self) -> Roi {
        Roi::new(0, 0, self.width, self.height)
    }

    pub fn total(&self) -> u64 {
        self.pixels.iter().map(|p| *p as u64).sum()
    }

    /// Sample-plane coordinate (nm) of pixel edge `index` along `axis`.
    pub fn edge(&self, axis: usize, index: usize) -> T {
        self.origin[axis] + self.camera.pixel_size * T::from_usize(index).unwrap_or_else(T::zero)
    }
}

/// Fraction of a 1-D Gaussian of width `sigma` centred at `mu` falling in
/// each pixel, for `n` pixels starting at `start`.
pub(crate) fn pixel_weights<T: Real>(mu: T, sigma: T, start: T, pixel: T, n: usize, out: &mut [T]) {
    let scale = T::one() / (sigma * T::SQRT_2());
    let mut prev = ((start - mu) * scale).erf();
    for (k, slot) in out.iter_mut().enumerate().take(n) {
        let edge = start + pixel * T::from_usize(k + 1).unwrap_or_else(T::zero);
        let next = ((edge - mu) * scale).erf();
        *slot = (next - prev) * lit(0.5);
        prev = next;
    }
}

/// Point source: position (nm) and expected photon count.
pub type Source<T> = (T, T, T);

/// Renders point sources through the Gaussian PSF.
///
/// With `rng = None` the frame holds the rounded expectation (signal plus mean
/// background). With an RNG each pixel is `Poisson(signal + background)` plus
/// Gaussian read noise, rounded and clipped to `[0, 65535]`.
pub fn render_frame<T: Real, R: Rng + ?Sized>(
    sources: &[Source<T>],
    camera: &CameraModel<T>,
    size: (usize, usize),
    origin: [T; 2],
    rng: Option<&mut R>,
) -> Result<Frame<T>> {
    camera.validate()?;
    let (w, h) = size;
    if w == 0 || h == 0 {
        return Err(Error::arg("frame size must be non-zero"));
    }
    let p = camera.pixel_size;
    let margin = camera.psf_sigma * lit(3.0);
    let extent = [p * T::from_usize(w).unwrap_or_else(T::zero), p * T::from_usize(h).unwrap_or_else(T::zero)];
    let mut expected = vec![camera.background_rate; w * h];
    let (mut wx, mut wy) = (vec![T::zero(); w], vec![T::zero(); h]);
    for (k, &(x, y, n)) in sources.iter().enumerate() {
        let inside = |v: T, axis: usize| {
            v >= origin[axis] + margin && v <= origin[axis] + extent[axis] - margin
        };
        if !inside(x, 0) || !inside(y, 1) {
            return Err(Error::Placement(format!(
                "source {k} at ({x}, {y}) nm is closer than 3σ to the frame edge"
            )));
        }
        if !(n >= T::zero()) {
            return Err(Error::arg("photon counts must be non-negative"));
        }
        pixel_weights(x, camera.psf_sigma, origin[0], p, w, &mut wx);
        pixel_weights(y, camera.psf_sigma, origin[1], p, h, &mut wy);
        for j in 0..h {
            for i in 0..w {
                expected[j * w + i] += n * wx[i] * wy[j];
            }
        }
    }
    let max: f64 = SATURATION as f64;
    let pixels = match rng {
        None => expected.iter().map(|e| e.as_f64().round().clamp(0.0, max) as u16).collect(),
        Some(rng) => {
            let read = camera.read_noise.as_f64();
            let mut out = Vec::with_capacity(w * h);
            for e in &expected {
                let lambda = e.as_f64();
                let shot = if lambda > 0.0 {
                    Poisson::new(lambda).map_err(|e| Error::arg(e.to_string()))?.sample(rng)
                } else {
                    0.0
                };
                let noise: f64 = crate::rng::normal(rng, read);
                out.push((shot + noise).round().clamp(0.0, max) as u16);
            }
            out
        }
    };
    Frame::new(w, h, pixels, origin, *camera)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{from_seed, StreamRng};

    fn quiet() -> CameraModel<f64> {
        CameraModel { background_rate: 0.0, ..CameraModel::default() }
    }

    #[test]
    fn default_psf_width() {
        assert!((CameraModel::<f64>::default().psf_sigma - 97.5).abs() < 1e-12);
    }

    #[test]
    fn empty_scene_is_black() {
        let f = render_frame::<f64, StreamRng>(&[], &quiet(), (8, 6), [0.0, 0.0], None).unwrap();
        assert!(f.pixels().iter().all(|p| *p == 0));
        assert_eq!((f.width(), f.height()), (8, 6));
    }

    #[test]
    fn noiseless_source_conserves_photons() {
        let f = render_frame::<f64, StreamRng>(&[(1030.0, 980.0, 50_000.0)], &quiet(), (21, 21), [0.0, 0.0], None).unwrap();
        let total = f.total() as f64;
        assert!((total - 50_000.0).abs() <= 0.5 * 441.0);
    }

    #[test]
    fn noiseless_centre_of_mass_is_the_source() {
        let (x, y) = (1037.0, 1012.5);
        let f = render_frame::<f64, StreamRng>(&[(x, y, 2e5)], &quiet(), (21, 21), [0.0, 0.0], None).unwrap();
        let (mut sx, mut sy, mut s) = (0.0, 0.0, 0.0);
        for j in 0..21 {
            for i in 0..21 {
                let v = f.pixel(i, j) as f64;
                sx += v * (i as f64 + 0.5) * 100.0;
                sy += v * (j as f64 + 0.5) * 100.0;
                s += v;
            }
        }
        assert!((sx / s - x).abs() < 1.0 && (sy / s - y).abs() < 1.0);
    }

    #[test]
    fn sources_too_close_to_the_edge_are_rejected() {
        let err = render_frame::<f64, StreamRng>(&[(100.0, 500.0, 10.0)], &quiet(), (10, 10), [0.0, 0.0], None);
        assert!(matches!(err, Err(Error::Placement(_))));
    }

    #[test]
    fn noisy_frames_are_seeded() {
        let cam = CameraModel { read_noise: 1.5, ..CameraModel::default() };
        let src = [(1000.0, 1000.0, 2000.0)];
        let a = render_frame(&src, &cam, (20, 20), [0.0, 0.0], Some(&mut from_seed(4))).unwrap();
        let b = render_frame(&src, &cam, (20, 20), [0.0, 0.0], Some(&mut from_seed(4))).unwrap();
        let c = render_frame(&src, &cam, (20, 20), [0.0, 0.0], Some(&mut from_seed(5))).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn roi_union() {
        let u = Roi::new(2, 3, 4, 4).union(&Roi::new(5, 1, 2, 2));
        assert_eq!(u, Roi::new(2, 1, 5, 6));
    }
}
