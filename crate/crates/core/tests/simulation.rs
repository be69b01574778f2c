use std::collections::BTreeMap;

use usrd_core::sim::{simulate_fs_ml, simulate_full_ml, simulate_irs_phase1, simulate_mrs_signaling, SimError};
use usrd_core::{instances, validate_model, RawModel, SourceModel, Subset};

fn three_letter_family() -> SourceModel {
    let family: BTreeMap<String, Vec<f64>> =
        [("a".to_string(), vec![0.5, 0.3, 0.2]), ("b".to_string(), vec![0.3, 0.3, 0.4]), ("c".to_string(), vec![0.2, 0.5, 0.3])]
            .into_iter()
            .collect();
    validate_model(RawModel {
        m: 3,
        alphabets: vec![3, 1, 1],
        recovery_set: vec![1],
        theta_labels: vec!["a".into(), "b".into(), "c".into()],
        prior: vec![1.0 / 3.0; 3],
        family,
        distortion: (0..9).map(|i| f64::from(u8::from(i / 3 != i % 3))).collect(),
        reproduction_alphabets: vec![3],
    })
    .unwrap()
}

#[test]
fn one_to_one_signaling_matches_full_observation() {
    let model = three_letter_family();
    for seed in [0, 1, 99] {
        for tau in 0..3 {
            let signal = simulate_mrs_signaling(&model, 1, tau, &[3, 10, 40], 500, seed).unwrap();
            let full = simulate_full_ml(&model, tau, &[3, 10, 40], 500, seed).unwrap();
            assert_eq!(signal.error_counts, full.error_counts, "seed {seed} tau {tau}");
            assert_eq!(signal.chunks, None);
        }
    }
}

#[test]
fn reports_are_reproducible_and_exact_frequencies() {
    let model = instances::virtual_bsc(&[0.2, 0.4], &[0.1, 0.1], None);
    let a = Subset::new(vec![0]);
    let one = simulate_fs_ml(&model, &a, 1, &[10, 100], 300, 5).unwrap();
    let two = simulate_fs_ml(&model, &a, 1, &[10, 100], 300, 5).unwrap();
    assert_eq!(serde_json::to_string(&one).unwrap(), serde_json::to_string(&two).unwrap());
    for (&count, &rate) in one.error_counts.iter().zip(&one.error_rates) {
        assert_eq!(rate, count as f64 / 300.0);
    }
}

#[test]
fn error_falls_with_blocklength_within_two_sigma() {
    let model = instances::independent_bits(&[0.1, 0.4], &[0.4, 0.1], None);
    let trials = 1000;
    for report in [
        simulate_fs_ml(&model, &Subset::new(vec![1]), 0, &[5, 100], trials, 3).unwrap(),
        simulate_irs_phase1(&model, 1, 1, &[5, 100], trials, 3).unwrap(),
        simulate_mrs_signaling(&model, 1, 0, &[5, 100], trials, 3).unwrap(),
    ] {
        let (small, large) = (report.error_rates[0], *report.error_rates.last().unwrap());
        let sigma = (small * (1.0 - small) / trials as f64).sqrt();
        assert!(large <= small + 2.0 * sigma, "{}: {:?}", report.scheme, report.error_rates);
    }
}

#[test]
fn signaling_needs_two_sets() {
    let model = instances::binary_hamming(&[0.2, 0.3], None);
    assert_eq!(simulate_mrs_signaling(&model, 1, 0, &[10], 10, 0).unwrap_err(), SimError::SignalingImpossible { symbols: 2 });
}
