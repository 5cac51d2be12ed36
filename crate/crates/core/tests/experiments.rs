use healthguard_core::classifiers::{Algorithm, Hyperparams};
use healthguard_core::domain::{ConditionLabel, DeviceSet, NUM_CLASSES};
use healthguard_core::eval::{
    confusion, metrics, run_detection_experiment, run_device_ablation, run_simultaneous_attacks, View,
};
use healthguard_core::simulator::{build_dataset, DatasetConfig};
use proptest::prelude::*;

fn small() -> DatasetConfig {
    DatasetConfig { streams: 4, ..DatasetConfig::default() }
}

fn fast_hp() -> Hyperparams {
    Hyperparams { ann_epochs: 5, rf_trees: 10, ..Hyperparams::default() }
}

#[test]
fn full_ablation_equals_detection() {
    let base = small();
    let algs = [Algorithm::Dt, Algorithm::Knn];
    let ab = run_device_ablation(&base, &[8], &algs, &fast_hp(), &[4]).unwrap();
    let ds = build_dataset(&base.clone().with_seed(4)).unwrap();
    assert_eq!(ds.device_mask, DeviceSet::all());
    let det = run_detection_experiment(&ds, &algs, &fast_hp(), 4).unwrap();
    assert_eq!(ab.records, det.records);
}

#[test]
fn simultaneous_reports_binary_and_multiclass() {
    let base = small();
    let r = run_simultaneous_attacks(&base, &[0, 1, 3], &[Algorithm::Dt], &fast_hp(), &[1, 2], 5).unwrap();
    assert_eq!(r.records.len(), 2 * 3 * 2);
    for k in [0, 1, 3] {
        let s = r.find(Algorithm::Dt, 8, Some(k), View::Binary).unwrap();
        assert_eq!(s.seeds, 2);
        assert!((0.0..=1.0).contains(&s.accuracy.mean));
    }
    assert!(run_simultaneous_attacks(&base, &[4], &[Algorithm::Dt], &fast_hp(), &[1], 5).is_err());
}

/// Brute-force reference: every quantity recounted from the raw pairs.
fn reference(preds: &[usize], labels: &[usize], view: View) -> Option<(f64, f64, f64, f64)> {
    let malicious = |c: usize| ConditionLabel::from_index(c).unwrap().is_malicious();
    let keep: Vec<(usize, usize)> = preds
        .iter()
        .zip(labels)
        .filter(|(_, &l)| match view {
            View::All | View::Binary => true,
            View::BenignOnly => !malicious(l),
            View::MaliciousOnly => malicious(l),
        })
        .map(|(&p, &l)| if view == View::Binary { (malicious(p) as usize, malicious(l) as usize) } else { (p, l) })
        .collect();
    if keep.is_empty() {
        return None;
    }
    let classes = if view == View::Binary { 2 } else { NUM_CLASSES };
    let acc = keep.iter().filter(|(p, l)| p == l).count() as f64 / keep.len() as f64;
    let (mut sp, mut sr, mut sf, mut present) = (0.0, 0.0, 0.0, 0);
    for c in 0..classes {
        if !keep.iter().any(|&(_, l)| l == c) {
            continue;
        }
        present += 1;
        let tp = keep.iter().filter(|&&(p, l)| p == c && l == c).count() as f64;
        let fp = keep.iter().filter(|&&(p, l)| p == c && l != c).count() as f64;
        let fnn = keep.iter().filter(|&&(p, l)| p != c && l == c).count() as f64;
        let p = if tp + fp == 0.0 { 0.0 } else { tp / (tp + fp) };
        let r = if tp + fnn == 0.0 { 0.0 } else { tp / (tp + fnn) };
        sp += p;
        sr += r;
        sf += if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    }
    let n = present as f64;
    Some((acc, sp / n, sr / n, sf / n))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]
    #[test]
    fn metrics_match_pairwise_counting(pairs in prop::collection::vec((0..NUM_CLASSES, 0..NUM_CLASSES), 1..200)) {
        let (p, l): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let lab = |v: &[usize]| v.iter().map(|&c| ConditionLabel::from_index(c).unwrap()).collect::<Vec<_>>();
        let cm = confusion(&lab(&p), &lab(&l)).unwrap();
        for view in [View::All, View::BenignOnly, View::MaliciousOnly, View::Binary] {
            match reference(&p, &l, view) {
                None => prop_assert!(metrics(&cm, view).is_err()),
                Some((acc, pr, re, f1)) => {
                    let m = metrics(&cm, view).unwrap();
                    prop_assert!((m.accuracy - acc).abs() <= 1e-12);
                    prop_assert!((m.precision - pr).abs() <= 1e-12);
                    prop_assert!((m.recall - re).abs() <= 1e-12);
                    prop_assert!((m.f1 - f1).abs() <= 1e-12);
                }
            }
        }
    }
}
