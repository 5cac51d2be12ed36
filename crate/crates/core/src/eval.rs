//! Metrics and the experiment runners.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::{self, Write};

use crate::classifiers::{train, Algorithm, Hyperparams};
use crate::domain::{ConditionLabel, DeviceKind, DeviceSet, NUM_CLASSES};
use crate::error::{bail, Result};
use crate::pipeline::{split, split_literal, LabeledDataset, LabeledInstance};
use crate::simulator::{build_dataset, generate_benign, inject_concurrent_attacks, stream_instances, DatasetConfig};

/// Rows are true labels, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn add(&mut self, truth: ConditionLabel, predicted: ConditionLabel) {
        self.counts[truth.index()][predicted.index()] += 1;
    }
}

pub fn confusion(preds: &[ConditionLabel], labels: &[ConditionLabel]) -> Result<ConfusionMatrix> {
    if preds.len() != labels.len() {
        bail!(Contract, "{} predictions for {} labels", preds.len(), labels.len());
    }
    if preds.is_empty() {
        bail!(Contract, "nothing to evaluate");
    }
    let mut cm = ConfusionMatrix { counts: [[0; NUM_CLASSES]; NUM_CLASSES] };
    for (&p, &l) in preds.iter().zip(labels) {
        cm.add(l, p);
    }
    Ok(cm)
}

/// Which test instances a report covers.
///
/// `Binary` covers every instance but scores the benign/malicious projection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum View {
    All,
    BenignOnly,
    MaliciousOnly,
    Binary,
}

impl View {
    pub fn name(self) -> &'static str {
        match self {
            View::All => "all",
            View::BenignOnly => "benign",
            View::MaliciousOnly => "malicious",
            View::Binary => "binary",
        }
    }

    fn includes(self, truth: ConditionLabel) -> bool {
        match self {
            View::All | View::Binary => true,
            View::BenignOnly => truth.is_benign(),
            View::MaliciousOnly => truth.is_malicious(),
        }
    }
}

impl fmt::Display for View {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassMetrics {
    /// Class index: a condition label, or 0 = benign / 1 = malicious in the binary view.
    pub class: usize,
    pub support: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub view: View,
    pub support: u64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 { 0.0 } else { num as f64 / den as f64 }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) }
}

/// The view's rows, projected to two classes for [`View::Binary`].
fn restrict(cm: &ConfusionMatrix, view: View) -> Vec<Vec<u64>> {
    if view == View::Binary {
        let mut m = alloc::vec![alloc::vec![0u64; 2]; 2];
        for (t, row) in cm.counts.iter().enumerate() {
            for (p, &n) in row.iter().enumerate() {
                let side = |c: usize| ConditionLabel::from_index(c).unwrap().is_malicious() as usize;
                m[side(t)][side(p)] += n;
            }
        }
        return m;
    }
    cm.counts
        .iter()
        .enumerate()
        .map(|(t, row)| if view.includes(ConditionLabel::from_index(t).unwrap()) { row.to_vec() } else { alloc::vec![0; NUM_CLASSES] })
        .collect()
}

/// Per-class precision, recall and F1 for the classes present in the view's truth.
pub fn per_class_metrics(cm: &ConfusionMatrix, view: View) -> Result<Vec<ClassMetrics>> {
    let m = restrict(cm, view);
    let total: u64 = m.iter().flatten().sum();
    if total == 0 {
        bail!(Domain, "view '{view}' has no instances");
    }
    let k = m.len();
    Ok((0..k)
        .filter_map(|c| {
            let support: u64 = m[c].iter().sum();
            if support == 0 {
                return None;
            }
            let tp = m[c][c];
            let predicted: u64 = (0..k).map(|r| m[r][c]).sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            Some(ClassMetrics { class: c, support, precision, recall, f1: harmonic(precision, recall) })
        })
        .collect())
}

/// Accuracy over the view's rows and macro averages over its present classes.
pub fn metrics(cm: &ConfusionMatrix, view: View) -> Result<MetricsReport> {
    let per = per_class_metrics(cm, view)?;
    let m = restrict(cm, view);
    let support: u64 = m.iter().flatten().sum();
    let trace: u64 = (0..m.len()).map(|c| m[c][c]).sum();
    let n = per.len() as f64;
    Ok(MetricsReport {
        view,
        support,
        accuracy: ratio(trace, support),
        precision: per.iter().map(|c| c.precision).sum::<f64>() / n,
        recall: per.iter().map(|c| c.recall).sum::<f64>() / n,
        f1: per.iter().map(|c| c.f1).sum::<f64>() / n,
    })
}

/// Fraction of instances whose benign/malicious side is predicted correctly.
pub fn binary_accuracy(preds: &[ConditionLabel], labels: &[ConditionLabel]) -> Result<f64> {
    Ok(metrics(&confusion(preds, labels)?, View::Binary)?.accuracy)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Experiment {
    Detection,
    Ablation,
    Simultaneous,
}

impl Experiment {
    pub const ALL: [Experiment; 3] = [Experiment::Detection, Experiment::Ablation, Experiment::Simultaneous];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Detection => "detection",
            Experiment::Ablation => "ablation",
            Experiment::Simultaneous => "simultaneous",
        }
    }
}

impl core::str::FromStr for Experiment {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match Experiment::ALL.iter().find(|e| e.name().eq_ignore_ascii_case(s.trim())) {
            Some(e) => Ok(*e),
            None => bail!(Config, "unknown experiment '{}' (expected detection, ablation or simultaneous)", s.trim()),
        }
    }
}

/// One (algorithm, configuration, seed, view) measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Record {
    pub algorithm: Algorithm,
    pub device_count: usize,
    /// Concurrent attack kinds in the test streams; `None` outside the simultaneous experiment.
    pub attack_kinds: Option<usize>,
    pub seed: u64,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub experiment: Experiment,
    pub records: Vec<Record>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Stat {
    pub mean: f64,
    /// Standard error of the mean (sample standard deviation over √n); 0 for a single seed.
    pub se: f64,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Stat {
        let n = xs.len() as f64;
        if xs.is_empty() {
            return Stat::default();
        }
        let mean = xs.iter().sum::<f64>() / n;
        if xs.len() < 2 {
            return Stat { mean, se: 0.0 };
        }
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        Stat { mean, se: libm::sqrt(var / n) }
    }
}

/// Seed-averaged metrics of one cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub algorithm: Algorithm,
    pub device_count: usize,
    pub attack_kinds: Option<usize>,
    pub view: View,
    pub seeds: usize,
    pub accuracy: Stat,
    pub precision: Stat,
    pub recall: Stat,
    pub f1: Stat,
}

type CellKey = (usize, Option<usize>, Algorithm, View);

impl ExperimentResult {
    /// Cells in sorted key order: device count, attack kinds, algorithm, view.
    pub fn summarize(&self) -> Vec<Summary> {
        let mut cells: BTreeMap<CellKey, Vec<&MetricsReport>> = BTreeMap::new();
        for r in &self.records {
            cells.entry((r.device_count, r.attack_kinds, r.algorithm, r.report.view)).or_default().push(&r.report);
        }
        cells
            .into_iter()
            .map(|((device_count, attack_kinds, algorithm, view), reps)| {
                let stat = |f: fn(&MetricsReport) -> f64| Stat::of(&reps.iter().map(|r| f(r)).collect::<Vec<_>>());
                Summary {
                    algorithm,
                    device_count,
                    attack_kinds,
                    view,
                    seeds: reps.len(),
                    accuracy: stat(|r| r.accuracy),
                    precision: stat(|r| r.precision),
                    recall: stat(|r| r.recall),
                    f1: stat(|r| r.f1),
                }
            })
            .collect()
    }

    pub fn find(&self, algorithm: Algorithm, device_count: usize, attack_kinds: Option<usize>, view: View) -> Option<Summary> {
        self.summarize().into_iter().find(|s| {
            s.algorithm == algorithm && s.device_count == device_count && s.attack_kinds == attack_kinds && s.view == view
        })
    }

    pub fn algorithms(&self) -> Vec<Algorithm> {
        let mut a: Vec<Algorithm> = self.records.iter().map(|r| r.algorithm).collect();
        a.sort();
        a.dedup();
        a
    }
}

/// Devices dropped, in order, when shrinking the deployment from 8 devices.
pub const ABLATION_REMOVAL_ORDER: [DeviceKind; 4] = [
    DeviceKind::HemoglobinMeter,
    DeviceKind::AlcoholMonitor,
    DeviceKind::NeuralHeadset,
    DeviceKind::PulseOximeter,
];

pub fn ablation_mask(device_count: usize) -> Result<DeviceSet> {
    let all = DeviceSet::all();
    let drop = all.len().saturating_sub(device_count);
    if device_count == 0 || device_count > all.len() || drop > ABLATION_REMOVAL_ORDER.len() {
        bail!(Config, "device count {device_count} outside {}..={}", all.len() - ABLATION_REMOVAL_ORDER.len(), all.len());
    }
    Ok(ABLATION_REMOVAL_ORDER[..drop].iter().fold(all, |m, &d| m.without(d)))
}

fn evaluate_model(
    model: &crate::classifiers::Model,
    test: &[LabeledInstance],
    views: &[View],
) -> Result<Vec<MetricsReport>> {
    let vectors: Vec<_> = test.iter().map(|i| i.vector).collect();
    let preds: Vec<ConditionLabel> = model.predict_batch(&vectors).into_iter().map(|p| p.label).collect();
    let labels: Vec<ConditionLabel> = test.iter().map(|i| i.label).collect();
    let cm = confusion(&preds, &labels)?;
    views.iter().map(|&v| metrics(&cm, v)).collect()
}

pub const DETECTION_TRAIN_FRACTION: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SplitMode {
    /// Stratified over all 15 classes.
    #[default]
    Stratified,
    /// Benign-only training; every malicious instance goes to the test side.
    Literal,
}

impl core::str::FromStr for SplitMode {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "stratified" => Ok(SplitMode::Stratified),
            "literal" => Ok(SplitMode::Literal),
            other => bail!(Config, "unknown split mode '{other}' (expected stratified or literal)"),
        }
    }
}

/// 70/30 stratified split; each algorithm trained on the same split with the same seed.
pub fn run_detection_experiment(
    dataset: &LabeledDataset,
    algorithms: &[Algorithm],
    hp: &Hyperparams,
    seed: u64,
) -> Result<ExperimentResult> {
    run_detection_with_split(dataset, algorithms, hp, seed, SplitMode::Stratified)
}

pub fn run_detection_with_split(
    dataset: &LabeledDataset,
    algorithms: &[Algorithm],
    hp: &Hyperparams,
    seed: u64,
    mode: SplitMode,
) -> Result<ExperimentResult> {
    let counts = dataset.class_counts();
    if let Some(c) = (0..NUM_CLASSES).find(|&c| counts[c] == 0) {
        bail!(Stratification, "dataset has no {} instances", ConditionLabel::from_index(c).unwrap());
    }
    let (train_set, test_set) = match mode {
        SplitMode::Stratified => split(dataset, DETECTION_TRAIN_FRACTION, seed)?,
        SplitMode::Literal => split_literal(dataset, DETECTION_TRAIN_FRACTION, seed)?,
    };
    let mut records = Vec::new();
    for &algorithm in algorithms {
        let model = train(algorithm, &train_set, hp, seed)?;
        for report in evaluate_model(&model, &test_set.instances, &[View::All, View::BenignOnly, View::MaliciousOnly])? {
            records.push(Record { algorithm, device_count: dataset.device_mask.len(), attack_kinds: None, seed, report });
        }
    }
    Ok(ExperimentResult { experiment: Experiment::Detection, records })
}

/// Regenerates the dataset under each device mask and seed, then runs detection on it.
pub fn run_device_ablation(
    base: &DatasetConfig,
    device_counts: &[usize],
    algorithms: &[Algorithm],
    hp: &Hyperparams,
    seeds: &[u64],
) -> Result<ExperimentResult> {
    let masks: Vec<DeviceSet> = device_counts.iter().map(|&c| ablation_mask(c)).collect::<Result<_>>()?;
    let mut records = Vec::new();
    for &seed in seeds {
        for &mask in &masks {
            let mut cfg = base.clone().with_seed(seed);
            cfg.scenario.enabled_devices = mask;
            let ds = build_dataset(&cfg)?;
            records.extend(run_detection_experiment(&ds, algorithms, hp, seed)?.records);
        }
    }
    Ok(ExperimentResult { experiment: Experiment::Ablation, records })
}

/// Salt separating simultaneous-attack test streams from the training streams.
pub const TEST_STREAM_SALT: u64 = 0x7e57_0000_0000;

/// Test streams for `kinds` concurrent threats per incident (0 = no attacks).
pub fn concurrent_test_set(base: &DatasetConfig, seed: u64, kinds: usize, stagger_minutes: u32) -> Result<Vec<LabeledInstance>> {
    let cfg = base.clone().with_seed(seed ^ TEST_STREAM_SALT);
    let mask = cfg.scenario.enabled_devices;
    let mut out = Vec::new();
    for i in 0..cfg.streams {
        let benign = generate_benign(&cfg.stream_scenario(i))?;
        let stream = if kinds == 0 {
            benign
        } else {
            inject_concurrent_attacks(&benign, &cfg.stream_attack(i), kinds, stagger_minutes)?
        };
        out.extend(stream_instances(&stream, mask)?);
    }
    Ok(out)
}

pub const DEFAULT_STAGGER_MINUTES: u32 = 5;

/// Trains on `base` per seed and tests on fresh streams with 0..=3 concurrent attack kinds.
pub fn run_simultaneous_attacks(
    base: &DatasetConfig,
    concurrent_kinds: &[usize],
    algorithms: &[Algorithm],
    hp: &Hyperparams,
    seeds: &[u64],
    stagger_minutes: u32,
) -> Result<ExperimentResult> {
    if let Some(k) = concurrent_kinds.iter().find(|&&k| k > base.attack.enabled_threats.len()) {
        bail!(Config, "{k} concurrent kinds requested but only {} threats enabled", base.attack.enabled_threats.len());
    }
    let device_count = base.scenario.enabled_devices.len();
    let mut records = Vec::new();
    for &seed in seeds {
        let train_set = build_dataset(&base.clone().with_seed(seed))?;
        let tests: Vec<Vec<LabeledInstance>> = concurrent_kinds
            .iter()
            .map(|&k| concurrent_test_set(base, seed, k, stagger_minutes))
            .collect::<Result<_>>()?;
        for &algorithm in algorithms {
            let model = train(algorithm, &train_set, hp, seed)?;
            for (&k, test) in concurrent_kinds.iter().zip(&tests) {
                for report in evaluate_model(&model, test, &[View::Binary, View::All])? {
                    records.push(Record { algorithm, device_count, attack_kinds: Some(k), seed, report });
                }
            }
        }
    }
    Ok(ExperimentResult { experiment: Experiment::Simultaneous, records })
}

pub const CSV_HEADER: &str = "experiment,algorithm,device_count,attack_kinds,seed,view,accuracy,precision,recall,f1";

/// One line per record, in record order.
pub fn render_csv(result: &ExperimentResult) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in &result.records {
        let kinds = r.attack_kinds.map(|k| format!("{k}")).unwrap_or_default();
        let m = &r.report;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{:.6},{:.6},{:.6},{:.6}",
            result.experiment.name(),
            r.algorithm,
            r.device_count,
            kinds,
            r.seed,
            m.view,
            m.accuracy,
            m.precision,
            m.recall,
            m.f1
        );
    }
    s
}

fn cell(st: Stat, with_se: bool) -> String {
    if with_se { format!("{:.3}±{:.3}", st.mean, st.se) } else { format!("{:.3}", st.mean) }
}

const METRIC_NAMES: [&str; 4] = ["Accuracy", "Precision", "Recall", "F1-score"];

fn metric_stats(s: &Summary) -> [Stat; 4] {
    [s.accuracy, s.precision, s.recall, s.f1]
}

/// Fixed-width grid: detection and ablation follow the benign/malicious and device-count table layouts.
pub fn render_table(result: &ExperimentResult) -> String {
    let summaries = result.summarize();
    let multi_seed = summaries.iter().any(|s| s.seeds > 1);
    let algos = result.algorithms();
    let w = if multi_seed { 14 } else { 9 };
    let mut s = String::new();
    let header = |s: &mut String, first: &str, cols: &[String]| {
        let _ = write!(s, "{first:<20}");
        for c in cols {
            let _ = write!(s, "{c:>w$}");
        }
        s.push('\n');
    };
    let algo_names: Vec<String> = algos.iter().map(|a| String::from(a.name())).collect();
    match result.experiment {
        Experiment::Detection => {
            let _ = writeln!(s, "Detection of benign and malicious events");
            header(&mut s, "Metric", &algo_names);
            for (label, view) in [("Benign", View::BenignOnly), ("Malicious", View::MaliciousOnly)] {
                let _ = writeln!(s, "{label}");
                for (mi, name) in METRIC_NAMES.iter().enumerate() {
                    let cols: Vec<String> = algos
                        .iter()
                        .map(|&a| {
                            summaries
                                .iter()
                                .find(|x| x.algorithm == a && x.view == view)
                                .map_or(String::from("-"), |x| cell(metric_stats(x)[mi], multi_seed))
                        })
                        .collect();
                    header(&mut s, &format!("  {name}"), &cols);
                }
            }
        }
        Experiment::Ablation => {
            let mut counts: Vec<usize> = summaries.iter().map(|x| x.device_count).collect();
            counts.dedup();
            let _ = writeln!(s, "Detection accuracy by number of devices (all test instances)");
            let cols: Vec<String> = counts.iter().map(|c| format!("{c} dev")).collect();
            header(&mut s, "Algorithm / Metric", &cols);
            for &a in &algos {
                let _ = writeln!(s, "{a}");
                for (mi, name) in METRIC_NAMES.iter().enumerate() {
                    let cols: Vec<String> = counts
                        .iter()
                        .map(|&c| {
                            summaries
                                .iter()
                                .find(|x| x.algorithm == a && x.device_count == c && x.view == View::All)
                                .map_or(String::from("-"), |x| cell(metric_stats(x)[mi], multi_seed))
                        })
                        .collect();
                    header(&mut s, &format!("  {name}"), &cols);
                }
            }
        }
        Experiment::Simultaneous => {
            let mut kinds: Vec<usize> = summaries.iter().filter_map(|x| x.attack_kinds).collect();
            kinds.sort();
            kinds.dedup();
            let _ = writeln!(s, "Accuracy by number of simultaneous attack kinds");
            let cols: Vec<String> = kinds.iter().map(|k| format!("{k} atk")).collect();
            header(&mut s, "Algorithm / View", &cols);
            for &a in &algos {
                for (label, view) in [("binary", View::Binary), ("multiclass", View::All)] {
                    let cols: Vec<String> = kinds
                        .iter()
                        .map(|&k| {
                            summaries
                                .iter()
                                .find(|x| x.algorithm == a && x.attack_kinds == Some(k) && x.view == view)
                                .map_or(String::from("-"), |x| cell(x.accuracy, multi_seed))
                        })
                        .collect();
                    header(&mut s, &format!("{a} {label}"), &cols);
                }
            }
        }
    }
    s
}
