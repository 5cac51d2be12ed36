use healthguard_core::classifiers::{train, Algorithm, Hyperparams};
use healthguard_core::domain::{ConditionLabel, NUM_CLASSES};
use healthguard_core::eval::{ablation_mask, concurrent_test_set, DEFAULT_STAGGER_MINUTES};
use healthguard_core::pipeline::split;
use healthguard_core::simulator::{build_dataset, sample_attack_onsets, DatasetConfig};

#[test]
fn poisson_counts_match_rate() {
    // Horizon of one hour, so the rate per hour is λT itself.
    for lambda_t in [1.0f64, 5.0, 20.0] {
        let n = 1000;
        let total: usize = (0..n).map(|s| sample_attack_onsets(lambda_t, 60, s).unwrap().len()).sum();
        let mean = total as f64 / n as f64;
        let sigma = (lambda_t / n as f64).sqrt();
        assert!((mean - lambda_t).abs() <= 3.0 * sigma, "λT={lambda_t}: mean {mean}");
    }
}

#[test]
fn poisson_empty_probability() {
    let n = 2000;
    let empty = (0..n).filter(|&s| sample_attack_onsets(60.0, 1, s).unwrap().is_empty()).count();
    let p = empty as f64 / n as f64;
    assert!((p - (-1.0f64).exp()).abs() <= 0.02, "P(0) = {p}");
}

#[test]
fn onsets_are_sorted_and_in_range() {
    for s in 0..50 {
        let on = sample_attack_onsets(30.0, 500, s).unwrap();
        assert!(on.windows(2).all(|w| w[0] <= w[1]));
        assert!(on.iter().all(|&m| m < 500));
    }
    assert!(sample_attack_onsets(0.0, 500, 1).unwrap().is_empty());
    assert!(sample_attack_onsets(5.0, 0, 1).is_err());
}

#[test]
fn default_dataset_shape() {
    let ds = build_dataset(&DatasetConfig::default()).unwrap();
    assert_eq!(ds.len(), 20_000);
    let frac = ds.malicious_count() as f64 / ds.len() as f64;
    assert!((frac - 0.15).abs() <= 0.02, "malicious fraction {frac}");
    let counts = ds.class_counts();
    assert!((0..NUM_CLASSES).all(|c| counts[c] > 0));
    let benign: Vec<usize> = ConditionLabel::BENIGN.iter().map(|c| counts[c.index()]).collect();
    let mean = benign.iter().sum::<usize>() as f64 / benign.len() as f64;
    for (c, &n) in ConditionLabel::BENIGN.iter().zip(&benign) {
        assert!((n as f64 - mean).abs() <= 0.2 * mean, "{c}: {n} vs mean {mean}");
    }
}

#[test]
fn generation_is_seed_deterministic() {
    let cfg = DatasetConfig { streams: 3, ..DatasetConfig::default() };
    let a = build_dataset(&cfg.clone().with_seed(9)).unwrap();
    let b = build_dataset(&cfg.clone().with_seed(9)).unwrap();
    let c = build_dataset(&cfg.with_seed(10)).unwrap();
    assert_eq!(a.instances, b.instances);
    assert_ne!(a.instances, c.instances);
}

/// With no attacks, benign conditions stay learnable at every ablation size.
#[test]
fn benign_conditions_are_separable() {
    for count in [4, 8] {
        let mut cfg = DatasetConfig { streams: 6, ..DatasetConfig::default() };
        cfg.attack.rate_per_hour = 0.0;
        cfg.scenario.enabled_devices = ablation_mask(count).unwrap();
        let ds = build_dataset(&cfg).unwrap();
        assert_eq!(ds.malicious_count(), 0);
        let (tr, te) = split(&ds, 0.7, 3).unwrap();
        let model = train(Algorithm::Dt, &tr, &Hyperparams::default(), 3).unwrap();
        let hits = te.instances.iter().filter(|i| model.predict(&i.vector).label == i.label).count();
        let acc = hits as f64 / te.len() as f64;
        assert!(acc >= 0.99, "{count} devices: benign accuracy {acc}");
    }
}

#[test]
fn concurrent_streams_carry_every_kind() {
    let base = DatasetConfig { streams: 4, ..DatasetConfig::default() };
    for seed in 0..3 {
        let test = concurrent_test_set(&base, seed, 3, DEFAULT_STAGGER_MINUTES).unwrap();
        for stream in test.chunks(base.scenario.total_minutes()) {
            for &k in ConditionLabel::ATTACKS {
                assert!(stream.iter().any(|i| i.label == k), "seed {seed}: {k} missing");
            }
        }
    }
    let control = concurrent_test_set(&base, 0, 0, DEFAULT_STAGGER_MINUTES).unwrap();
    assert!(control.iter().all(|i| i.label.is_benign()));
}
