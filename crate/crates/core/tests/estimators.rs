//! Seed sweeps checking that the stochastic estimators are unbiased.

use proscan_core::emitter::decay::{fit_biexponential, simulate_decay_histogram, DecaySimulation};
use proscan_core::imaging::{localize_2d, render_frame, CameraModel, Roi};
use proscan_core::rng::{from_seed, normal};

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn localization_is_unbiased_over_500_seeds() {
    let cam = CameraModel::default();
    let photons = 2388.038854552129;
    let (mut ex, mut ey) = (Vec::new(), Vec::new());
    for seed in 0..500 {
        let mut rng = from_seed(seed);
        let (tx, ty) = (750.0 + normal(&mut rng, 40.0), 750.0 + normal(&mut rng, 40.0));
        let frame = render_frame(&[(tx, ty, photons)], &cam, (15, 15), [0.0, 0.0], Some(&mut rng)).unwrap();
        let loc = localize_2d(&frame, &Roi::new(3, 3, 9, 9)).unwrap();
        ex.push(loc.x - tx);
        ey.push(loc.y - ty);
    }
    assert!(mean(&ex).abs() < 0.3, "x bias {}", mean(&ex));
    assert!(mean(&ey).abs() < 0.3, "y bias {}", mean(&ey));
}

#[test]
fn lifetime_fit_is_unbiased_at_a_million_photons() {
    let sim = DecaySimulation { n_photons: 1_000_000, ..DecaySimulation::with_lifetimes(2.1, 29.4) };
    let (mut fast, mut slow) = (Vec::new(), Vec::new());
    for seed in 0..20 {
        let hist = simulate_decay_histogram(&sim, &mut from_seed(500 + seed)).unwrap();
        let fit = fit_biexponential(&hist, (0.0, 250.0)).unwrap();
        fast.push(fit.tau_fast);
        slow.push(fit.tau_slow);
    }
    assert!((mean(&fast) / 2.1 - 1.0).abs() < 0.01, "{}", mean(&fast));
    assert!((mean(&slow) / 29.4 - 1.0).abs() < 0.01, "{}", mean(&slow));
}
