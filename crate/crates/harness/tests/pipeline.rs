use proptest::prelude::*;
use proscan_core::mechanics::Axis;
use proscan_harness::config::Command;
use proscan_harness::analyze::{self, AnalysisKind, AnalyzeOptions};
use proscan_harness::output::sha256_hex;
use proscan_harness::{presets, run_scenario, RunOptions, RunOutcome, ScenarioConfig};
use serde_json::Value;
use std::path::{Path, PathBuf};

fn run_into(config: &ScenarioConfig, dir: &Path) -> RunOutcome {
    run_scenario(config, &RunOptions { out_dir: dir.to_path_buf(), plots: false }).unwrap()
}

fn analyze_opts(dir: &Path) -> AnalyzeOptions {
    AnalyzeOptions {
        out_dir: dir.to_path_buf(),
        wavelength: 532.0,
        min_prominence: proscan_core::interferometry::DEFAULT_MIN_PROMINENCE,
    }
}

fn assert_bundle_consistent(outcome: &RunOutcome) {
    let manifest: Value =
        serde_json::from_str(&std::fs::read_to_string(outcome.dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["outputs_sha256"], Value::from(outcome.manifest.outputs_sha256.clone()));
    for entry in &outcome.manifest.files {
        let bytes = std::fs::read(outcome.dir.join(&entry.path)).unwrap();
        assert_eq!(sha256_hex(&bytes), entry.sha256, "{}", entry.path);
    }
}

#[test]
fn reanalysing_a_saved_trajectory_reproduces_the_run_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let outcome = run_into(&presets::load("lateral-scan").unwrap(), &tmp.path().join("run"));
    let files = vec![outcome.dir.join("trajectory.csv")];
    let summary = analyze::run(AnalysisKind::Trajectory, &files, &analyze_opts(&tmp.path().join("a"))).unwrap();
    for key in ["slope", "tilt_deg", "step_mean_nm", "step_std_nm", "jitter_nm"] {
        assert_eq!(summary[key], outcome.summary[key], "{key}");
    }
}

#[test]
fn reanalysing_saved_frames_reproduces_the_localizations() {
    let tmp = tempfile::tempdir().unwrap();
    let mut config = presets::load("lateral-scan").unwrap();
    config.protocol = vec![Command::Lateral { axis: Axis::X, dv: 1.0, repeat: 11 }];
    let outcome = run_into(&config, &tmp.path().join("run"));
    let mut frames: Vec<PathBuf> = std::fs::read_dir(outcome.dir.join("frames"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "pgm"))
        .collect();
    frames.sort();
    assert_eq!(frames.len(), 12);
    let out = tmp.path().join("a");
    analyze::run(AnalysisKind::Localize, &frames, &analyze_opts(&out)).unwrap();
    assert_eq!(
        std::fs::read_to_string(out.join("report.csv")).unwrap(),
        std::fs::read_to_string(outcome.dir.join("localizations.csv")).unwrap()
    );
}

#[test]
fn lifetime_fixture_matches_the_frozen_fit() {
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/decay.csv");
    let tmp = tempfile::tempdir().unwrap();
    let s = analyze::run(AnalysisKind::LifetimeFit, &[fixture], &analyze_opts(tmp.path())).unwrap();
    let get = |k: &str| s[k].as_f64().unwrap();
    // Frozen from the first fit of this histogram; any drift beyond the
    // reported uncertainty is a regression in the fitter.
    assert!((get("tau_fast_ns") - 2.083073877094934).abs() < 0.024279092582927122);
    assert!((get("tau_slow_ns") - 29.49921248362438).abs() < 0.14752472432804367);
    assert!((get("fast_fraction") - 0.2981256148435246).abs() < 0.01);
    assert_eq!(s["irf_limited"], Value::Bool(false));
    assert_eq!(s["single_exponential"], Value::Bool(false));
}

#[test]
fn same_seed_gives_identical_bundles() {
    let tmp = tempfile::tempdir().unwrap();
    for name in ["lateral-scan", "fine-approach-plasmon"] {
        let config = presets::load(name).unwrap();
        let a = run_into(&config, &tmp.path().join(format!("{name}-a")));
        let b = run_into(&config, &tmp.path().join(format!("{name}-b")));
        assert_eq!(a.manifest.outputs_sha256, b.manifest.outputs_sha256, "{name}");
        assert_bundle_consistent(&a);
    }
}

fn lateral_config(seed: u64, photons: f64, frame: [usize; 2], roi: usize, steps: u32, dv: f64, sigma: f64) -> String {
    format!(
        r#"{{"scenario_kind": "lateral-scan", "seed": {seed},
            "mechanics": {{"initial_gap_nm": 0.0, "lateral": {{"gain": 7.3, "crosstalk_slope": -0.02,
                "step_sigma": {sigma}, "jitter_sigma": {sigma}, "backlash_deadband": 0.0}}}},
            "camera": {{"frame_px": [{}, {}], "photons": {photons}, "roi_half_px": {roi}}},
            "protocol": [{{"op": "lateral", "axis": "x", "dv": {dv}, "repeat": {steps}}}]}}"#,
        frame[0], frame[1]
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_valid_configs_finish_or_fail_cleanly(
        seed in any::<u64>(),
        photons in 1.0f64..1e5,
        w in 3usize..20,
        h in 3usize..20,
        roi in 1usize..6,
        steps in 1u32..12,
        dv in -20.0f64..20.0,
        sigma in 0.0f64..10.0,
    ) {
        let text = lateral_config(seed, photons, [w, h], roi, steps, dv, sigma);
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path().join("run");
        let config = match ScenarioConfig::from_json(&text) {
            Ok(c) => c,
            Err(e) => { prop_assert_eq!(e.exit_code(), 2); return Ok(()); }
        };
        match run_scenario(&config, &RunOptions { out_dir: dir.clone(), plots: false }) {
            Ok(outcome) => assert_bundle_consistent(&outcome),
            Err(e) => {
                prop_assert!(matches!(e.exit_code(), 2..=4));
                prop_assert!(!dir.join("manifest.json").exists());
            }
        }
    }
}
