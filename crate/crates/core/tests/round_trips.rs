//! Chains of modules exercised end to end on noiseless or seeded data.

use proscan_core::interferometry::{
    default_grid, find_fringe_extrema, gap_from_fsr, white_light_spectrum, SourceEnvelope, DEFAULT_MIN_PROMINENCE,
};
use proscan_core::materials::DEFAULT_GLASS_INDEX;
use proscan_core::mechanics::{apply_axial_voltage, AxialTransferModel, ScanState};
use proscan_core::plasmonics::{fit_resonance, scattering_spectrum, NanoAntennaModel};
use proscan_core::rng::from_seed;

fn fsr_estimate(gap: f64) -> Option<f64> {
    let spectrum =
        white_light_spectrum(gap, &default_grid(), DEFAULT_GLASS_INDEX, SourceEnvelope::Flat, 0.0, &mut from_seed(0))
            .unwrap();
    find_fringe_extrema(&spectrum, DEFAULT_MIN_PROMINENCE).gap()
}

#[test]
fn fsr_round_trip_over_fifty_gaps() {
    for i in 0..50 {
        let gap = 2000.0 + 18_000.0 * i as f64 / 49.0;
        let est = fsr_estimate(gap).unwrap_or_else(|| panic!("unresolved at {gap}"));
        assert!((est / gap - 1.0).abs() < 0.02, "{gap}: {est}");
    }
}

#[test]
fn every_adjacent_fringe_pair_gives_the_same_gap() {
    for gap in [3000.0, 7500.0, 15_000.0] {
        let spectrum =
            white_light_spectrum(gap, &default_grid(), DEFAULT_GLASS_INDEX, SourceEnvelope::Flat, 0.0, &mut from_seed(0))
                .unwrap();
        let maxima = find_fringe_extrema(&spectrum, DEFAULT_MIN_PROMINENCE).maxima().to_vec();
        assert!(maxima.len() >= 3);
        let first = gap_from_fsr(maxima[0], maxima[1]).unwrap();
        for w in maxima.windows(2) {
            let g = gap_from_fsr(w[0], w[1]).unwrap();
            assert!((g / first - 1.0).abs() < 0.02, "{gap}: {g} vs {first}");
        }
    }
}

#[test]
fn coarse_approach_is_tracked_by_the_cavity_fringes() {
    let model = AxialTransferModel::default();
    let mut state = ScanState::new(12_000.0).unwrap();
    let mut last_estimate = f64::INFINITY;
    while state.gap > 2500.0 {
        state = apply_axial_voltage(&state, 1.0, &model);
        let est = fsr_estimate(state.gap).unwrap();
        assert!((est / state.gap - 1.0).abs() < 0.02, "{}: {est}", state.gap);
        assert!(est < last_estimate);
        last_estimate = est;
    }
}

#[test]
fn fine_approach_red_shifts_the_fitted_resonance() {
    let antenna = NanoAntennaModel::default();
    let grid = default_grid();
    let fit_at = |gap: f64| {
        let s = scattering_spectrum(gap, &grid, &antenna, 0.0, &mut from_seed(0)).unwrap();
        fit_resonance(&s, &antenna, 590.0).unwrap().wavelength
    };
    let far = fit_at(f64::INFINITY);
    let model = AxialTransferModel::default();
    let mut state = ScanState::new(200.0).unwrap();
    let mut previous = fit_at(state.gap);
    assert!(previous >= far - 1e-6);
    while state.gap > 10.0 {
        state = apply_axial_voltage(&state, 5.0, &model);
        let lambda = fit_at(state.gap);
        assert!(lambda > previous, "gap {}: {lambda} <= {previous}", state.gap);
        previous = lambda;
    }
    assert!(previous - far > 5.0, "total shift {}", previous - far);
}
