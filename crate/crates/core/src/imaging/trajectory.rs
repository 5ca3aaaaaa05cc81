//! Scan-trajectory statistics and two-spot separation series.

use super::{localize_spots, Frame, Roi, SpotFit};
use crate::error::{Error, Result};
use crate::optim::linear_fit;
use crate::real::{lit, Real};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStats<T> {
    /// dy/dx of the fitted scan line.
    pub slope: T,
    pub tilt_deg: T,
    /// Mean of consecutive displacements projected on the scan line.
    pub step_mean: T,
    /// Sample standard deviation of the projected steps.
    pub step_std: T,
    /// RMS distance of the points from the scan line.
    pub jitter: T,
    /// Unit vector of the scan line, pointing from the first to the last point.
    pub direction: [T; 2],
}

/// Line statistics of a scan. The line is the principal axis of the point
/// cloud (orthogonal regression), so step and jitter statistics are unchanged
/// by any rigid motion of the points.
pub fn analyze_trajectory<T: Real>(points: &[[T; 2]]) -> Result<TrajectoryStats<T>> {
    if points.len() < 3 {
        return Err(Error::arg(format!(
            "trajectory analysis needs at least 3 points, got {}",
            points.len()
        )));
    }
    let n = T::from_usize(points.len()).unwrap_or_else(T::one);
    let cx = points.iter().fold(T::zero(), |a, p| a + p[0]) / n;
    let cy = points.iter().fold(T::zero(), |a, p| a + p[1]) / n;
    let (mut sxx, mut syy, mut sxy) = (T::zero(), T::zero(), T::zero());
    for p in points {
        let (dx, dy) = (p[0] - cx, p[1] - cy);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    let phi = (sxy * lit(2.0)).atan2(sxx - syy) * lit(0.5);
    let mut u = [phi.cos(), phi.sin()];
    let (first, last) = (points[0], points[points.len() - 1]);
    if (last[0] - first[0]) * u[0] + (last[1] - first[1]) * u[1] < T::zero() {
        u = [-u[0], -u[1]];
    }
    let v = [-u[1], u[0]];

    let steps: Vec<T> = points
        .windows(2)
        .map(|w| (w[1][0] - w[0][0]) * u[0] + (w[1][1] - w[0][1]) * u[1])
        .collect();
    let m = T::from_usize(steps.len()).unwrap_or_else(T::one);
    let step_mean = steps.iter().fold(T::zero(), |a, s| a + *s) / m;
    let step_var = steps
        .iter()
        .fold(T::zero(), |a, s| a + (*s - step_mean) * (*s - step_mean))
        / (m - T::one());
    let jitter = (points
        .iter()
        .map(|p| (p[0] - cx) * v[0] + (p[1] - cy) * v[1])
        .fold(T::zero(), |a, e| a + e * e)
        / n)
        .sqrt();
    let slope = u[1] / u[0];
    Ok(TrajectoryStats {
        slope,
        tilt_deg: slope.atan().to_degrees(),
        step_mean,
        step_std: step_var.sqrt(),
        jitter,
        direction: u,
    })
}

/// One frame of a separation series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeparationPoint<T> {
    pub frame: usize,
    /// Fitted positions (nm), absent when the joint fit failed.
    pub stationary: Option<[T; 2]>,
    pub moving: Option<[T; 2]>,
    /// Directly localized distance.
    pub measured: Option<T>,
    /// Reported distance: measured, or extrapolated inside coupled stretches.
    pub distance: T,
    /// Spots closer than 2·σ_psf (or unresolvable).
    pub coupled: bool,
}

/// Localizes both spots in every frame and reports their distance.
///
/// Both spots are fitted jointly in the union of the two ROIs, each frame
/// starting from the previous successful fit. Frames with a centre distance
/// below `2·psf_sigma` are flagged coupled. There the relative position vector
/// is replaced by straight-line fits against frame index, extrapolated inward
/// from the unflagged frames on either side (the nearer side wins, ties
/// average). Using the vector rather than the distance keeps the result
/// unchanged when the two ROIs swap roles.
pub fn separation_series<T: Real>(
    frames: &[Frame<T>],
    stationary_roi: &Roi,
    moving_roi: &Roi,
) -> Result<Vec<SeparationPoint<T>>> {
    if frames.is_empty() {
        return Err(Error::arg("separation series needs at least one frame"));
    }
    let roi = stationary_roi.union(moving_roi);
    let threshold = frames[0].camera().psf_sigma * lit(2.0);
    let mut track: Option<[[T; 2]; 2]> = None;

    let mut out = Vec::with_capacity(frames.len());
    for (index, frame) in frames.iter().enumerate() {
        // Both the previous positions and fresh picks seed a fit; the better
        // likelihood wins, so a fit that lost a spot cannot trap later frames.
        let fresh = initial_picks(frame, stationary_roi, moving_roi);
        let reference = track.unwrap_or(fresh);
        let mut best: Option<Result<SpotFit<T>>> = None;
        for start in [Some(fresh), track].into_iter().flatten() {
            // Canonical ordering makes the fit independent of which ROI is which.
            let swap = (start[1][0], start[1][1]) < (start[0][0], start[0][1]);
            let init = if swap { [start[1], start[0]] } else { start };
            let attempt = localize_spots(frame, &roi, &init);
            best = Some(match (best, attempt) {
                (Some(Ok(a)), Ok(b)) => Ok(if b.fit_residual < a.fit_residual { b } else { a }),
                (Some(Ok(a)), Err(_)) => Ok(a),
                (_, attempt) => attempt,
            });
        }
        let result = best.unwrap_or_else(|| Err(Error::arg("no initial positions")));
        match result {
            Ok(fit) => {
                let a = [fit.spots[0][0], fit.spots[0][1]];
                let b = [fit.spots[1][0], fit.spots[1][1]];
                let d2 = |p: [T; 2], q: [T; 2]| (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
                let t = reference;
                let keep = d2(a, t[0]) + d2(b, t[1]) <= d2(b, t[0]) + d2(a, t[1]);
                let (s, m) = if keep { (a, b) } else { (b, a) };
                track = Some([s, m]);
                let dist = d2(s, m).sqrt();
                out.push(SeparationPoint {
                    frame: index,
                    stationary: Some(s),
                    moving: Some(m),
                    measured: Some(dist),
                    distance: dist,
                    coupled: dist < threshold,
                });
            }
            Err(e) if e.is_fit_failure() || matches!(e, Error::Degenerate(_)) => {
                out.push(SeparationPoint {
                    frame: index,
                    stationary: None,
                    moving: None,
                    measured: None,
                    distance: T::nan(),
                    coupled: true,
                });
            }
            Err(e) => return Err(e),
        }
    }
    extrapolate_coupled(&mut out)?;
    Ok(out)
}

/// Starting positions from the raw pixels: the brightest pixel of the
/// stationary ROI, then the brightest pixel of the moving ROI after a model of
/// the first spot is subtracted.
fn initial_picks<T: Real>(f: &Frame<T>, stationary: &Roi, moving: &Roi) -> [[T; 2]; 2] {
    let cam = f.camera();
    let half = cam.pixel_size * lit(0.5);
    let centre = |i: usize, j: usize| [f.edge(0, i) + half, f.edge(1, j) + half];
    let pixels = |r: Roi| {
        let (w, h) = (f.width(), f.height());
        (r.y..(r.y + r.height).min(h)).flat_map(move |j| (r.x..(r.x + r.width).min(w)).map(move |i| (i, j)))
    };
    let value = |i: usize, j: usize| T::from_u16(f.pixel(i, j)).unwrap_or_else(T::zero);
    let pick = |r: &Roi, score: &dyn Fn(usize, usize) -> T| {
        pixels(*r)
            .fold(None::<((usize, usize), T)>, |best, (i, j)| {
                let v = score(i, j);
                match best {
                    Some((_, b)) if b >= v => best,
                    _ => Some(((i, j), v)),
                }
            })
            .map_or([f.edge(0, r.x) + half, f.edge(1, r.y) + half], |((i, j), _)| centre(i, j))
    };
    let first = pick(stationary, &|i, j| value(i, j));
    let (fi, fj) = (
        ((first[0] - f.origin()[0]) / cam.pixel_size).to_usize().unwrap_or(0),
        ((first[1] - f.origin()[1]) / cam.pixel_size).to_usize().unwrap_or(0),
    );
    let excess = (value(fi, fj) - cam.background_rate).max(T::zero());
    let var = cam.psf_sigma * cam.psf_sigma + cam.pixel_size * cam.pixel_size / lit(12.0);
    let second = pick(moving, &|i, j| {
        let c = centre(i, j);
        let r2 = (c[0] - first[0]).powi(2) + (c[1] - first[1]).powi(2);
        if r2 < cam.psf_sigma * cam.psf_sigma {
            return T::neg_infinity();
        }
        value(i, j) - excess * (-r2 / (var + var)).exp()
    });
    [first, second]
}

/// Unflagged frames required on each side of a coupled stretch.
pub const MIN_SIDEBAND: usize = 4;

fn extrapolate_coupled<T: Real>(points: &mut [SeparationPoint<T>]) -> Result<()> {
    let n = points.len();
    let mut runs = Vec::new();
    let mut i = 0;
    while i < n {
        if points[i].coupled {
            let start = i;
            while i < n && points[i].coupled {
                i += 1;
            }
            runs.push((start, i));
        } else {
            i += 1;
        }
    }
    let rel = |p: &SeparationPoint<T>| -> Option<[T; 2]> {
        let (s, m) = (p.stationary?, p.moving?);
        Some([m[0] - s[0], m[1] - s[1]])
    };
    let side_fit = |range: std::ops::Range<usize>, pts: &[SeparationPoint<T>]| -> Option<[(T, T); 2]> {
        let idx: Vec<T> = range.clone().map(|k| T::from_usize(k).unwrap_or_else(T::zero)).collect();
        let vecs: Vec<[T; 2]> = range.map(|k| rel(&pts[k])).collect::<Option<_>>()?;
        let xs: Vec<T> = vecs.iter().map(|v| v[0]).collect();
        let ys: Vec<T> = vecs.iter().map(|v| v[1]).collect();
        Some([linear_fit(&idx, &xs)?, linear_fit(&idx, &ys)?])
    };
    // Fits near coincidence can briefly split apart; a clean stretch shorter
    // than a usable side band is absorbed into the surrounding coupled run.
    let mut merged: Vec<(usize, usize)> = Vec::with_capacity(runs.len());
    for run in runs {
        match merged.last_mut() {
            Some(last) if run.0 - last.1 < MIN_SIDEBAND => last.1 = run.1,
            _ => merged.push(run),
        }
    }
    let runs = merged;
    for &(start, end) in &runs {
        for p in &mut points[start..end] {
            p.coupled = true;
        }
    }
    for (r, &(start, end)) in runs.iter().enumerate() {
        let left_begin = if r == 0 { 0 } else { runs[r - 1].1 };
        let right_end = runs.get(r + 1).map_or(n, |next| next.0);
        if start - left_begin < MIN_SIDEBAND || right_end - end < MIN_SIDEBAND {
            return Err(Error::Extrapolation(format!(
                "coupled frames {start}..{end} need {MIN_SIDEBAND} unflagged frames on each side, found {} and {}",
                start - left_begin,
                right_end - end
            )));
        }
        let insufficient = || Error::Extrapolation(format!("side fits around frames {start}..{end} are degenerate"));
        let left = side_fit(left_begin..start, points).ok_or_else(insufficient)?;
        let right = side_fit(end..right_end, points).ok_or_else(insufficient)?;
        let eval = |fit: [(T, T); 2], k: T| [fit[0].0 + fit[0].1 * k, fit[1].0 + fit[1].1 * k];
        for k in start..end {
            let kf = T::from_usize(k).unwrap_or_else(T::zero);
            let (dl, dr) = (k + 1 - start, end - k);
            let v = match dl.cmp(&dr) {
                std::cmp::Ordering::Less => eval(left, kf),
                std::cmp::Ordering::Greater => eval(right, kf),
                std::cmp::Ordering::Equal => {
                    let (a, b) = (eval(left, kf), eval(right, kf));
                    [(a[0] + b[0]) * lit(0.5), (a[1] + b[1]) * lit(0.5)]
                }
            };
            points[k].distance = (v[0] * v[0] + v[1] * v[1]).sqrt();
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::{render_frame, CameraModel};
    use crate::rng::from_seed;
    use proptest::prelude::*;

    #[test]
    fn straight_line_along_x() {
        let pts: Vec<[f64; 2]> = (0..20).map(|i| [7.3 * i as f64, 0.0]).collect();
        let s = analyze_trajectory(&pts).unwrap();
        assert!(s.slope.abs() < 1e-12);
        assert!((s.step_mean - 7.3).abs() < 1e-12);
        assert!(s.jitter < 1e-12 && s.step_std < 1e-12);
    }

    #[test]
    fn tilted_line_gives_the_tilt_angle() {
        let pts: Vec<[f64; 2]> = (0..50).map(|i| [10.0 * i as f64, -0.023 * 10.0 * i as f64]).collect();
        let s = analyze_trajectory(&pts).unwrap();
        assert!((s.slope + 0.023).abs() < 1e-12);
        assert!((s.tilt_deg + 1.3176).abs() < 1e-3, "{}", s.tilt_deg);
        assert!(analyze_trajectory(&pts[..2]).is_err());
    }

    proptest! {
        #[test]
        fn rigid_motion_invariance(
            seed in any::<u64>(),
            angle in -3.0f64..3.0,
            shift in prop::array::uniform2(-1e3f64..1e3),
        ) {
            let mut rng = from_seed(seed);
            let pts: Vec<[f64; 2]> = (0..30)
                .map(|i| [7.0 * i as f64 + crate::rng::normal(&mut rng, 2.0), crate::rng::normal(&mut rng, 3.0)])
                .collect();
            let (c, s) = (angle.cos(), angle.sin());
            let moved: Vec<[f64; 2]> = pts
                .iter()
                .map(|p| [c * p[0] - s * p[1] + shift[0], s * p[0] + c * p[1] + shift[1]])
                .collect();
            let a = analyze_trajectory(&pts).unwrap();
            let b = analyze_trajectory(&moved).unwrap();
            prop_assert!((a.step_mean - b.step_mean).abs() < 1e-8);
            prop_assert!((a.step_std - b.step_std).abs() < 1e-8);
            prop_assert!((a.jitter - b.jitter).abs() < 1e-8);
            let rotated = [c * a.direction[0] - s * a.direction[1], s * a.direction[0] + c * a.direction[1]];
            prop_assert!((rotated[0] - b.direction[0]).abs() < 1e-8 && (rotated[1] - b.direction[1]).abs() < 1e-8);
        }
    }

    fn approach_frames(seed: u64) -> (Vec<Frame<f64>>, Vec<f64>) {
        let cam = CameraModel::<f64>::default();
        let mut rng = from_seed(seed);
        let gnp = [1500.0, 1500.0];
        let mut frames = Vec::new();
        let mut truth = Vec::new();
        for k in 0..60 {
            let x = 900.0 + 20.0 * k as f64;
            let y = 1560.0 - 0.5 * k as f64;
            truth.push(((x - gnp[0]).powi(2) + (y - gnp[1]).powi(2)).sqrt());
            let src = [(gnp[0], gnp[1], 4000.0), (x, y, 30_000.0)];
            frames.push(render_frame(&src, &cam, (30, 30), [0.0, 0.0], Some(&mut rng)).unwrap());
        }
        (frames, truth)
    }

    #[test]
    fn separated_sequence_is_not_flagged() {
        let cam = CameraModel::<f64>::default();
        let mut rng = from_seed(3);
        let frames: Vec<Frame<f64>> = (0..6)
            .map(|k| {
                let src = [(1000.0, 1500.0, 8000.0), (2000.0 - 10.0 * k as f64, 1500.0, 8000.0)];
                render_frame(&src, &cam, (30, 30), [0.0, 0.0], Some(&mut rng)).unwrap()
            })
            .collect();
        let out = separation_series(&frames, &Roi::new(5, 10, 10, 10), &Roi::new(15, 10, 10, 10)).unwrap();
        for p in &out {
            assert!(!p.coupled);
            assert_eq!(Some(p.distance), p.measured);
            assert!((p.distance - (1000.0 - 10.0 * p.frame as f64)).abs() < 5.0);
        }
    }

    #[test]
    fn coupled_stretch_is_extrapolated_and_symmetric() {
        let (frames, truth) = approach_frames(21);
        let (a, b) = (Roi::new(12, 12, 6, 6), Roi::new(5, 10, 24, 10));
        let out = separation_series(&frames, &a, &b).unwrap();
        let swapped = separation_series(&frames, &b, &a).unwrap();
        let flagged: Vec<usize> = out.iter().filter(|p| p.coupled).map(|p| p.frame).collect();
        assert!(!flagged.is_empty());
        // Truth crosses 2σ = 195 nm near |x − 1500| ≈ 190 nm.
        for p in &out {
            if truth[p.frame] < 150.0 {
                assert!(p.coupled, "frame {} at {} nm not flagged", p.frame, truth[p.frame]);
            }
        }
        for (p, q) in out.iter().zip(&swapped) {
            assert!((p.distance - q.distance).abs() < 1e-6, "{p:?} {q:?}");
        }
        let errors: Vec<f64> = out.iter().filter(|p| p.coupled).map(|p| (p.distance - truth[p.frame]).abs()).collect();
        let worst = errors.iter().fold(0.0f64, |m, e| m.max(*e));
        assert!(worst < 60.0, "{errors:?}");
    }

    #[test]
    fn missing_sidebands_are_an_extrapolation_error() {
        let (frames, _) = approach_frames(5);
        let err = separation_series(&frames[25..40], &Roi::new(12, 12, 6, 6), &Roi::new(5, 10, 24, 10)).unwrap_err();
        assert!(matches!(err, Error::Extrapolation(_)), "{err:?}");
    }
}
