//! The four detectors behind one train/predict interface.

pub mod ann;
pub mod knn;
pub mod standardize;
pub mod tree;

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::domain::{ConditionLabel, NUM_CLASSES, VECTOR_DIM};
use crate::error::{bail, Error, Result};
use crate::pipeline::{FeatureVector, LabeledDataset, LabeledInstance, SCHEMA_VERSION};
use crate::simulator::seeded_rng;

pub use ann::{Gradients, Mlp, SgdOptions};
pub use knn::Knn;
pub use standardize::Standardizer;
pub use tree::{gini, DecisionTree, RandomForest, TreeOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Algorithm {
    Knn,
    Dt,
    Rf,
    Ann,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Knn, Algorithm::Dt, Algorithm::Rf, Algorithm::Ann];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Knn => "KNN",
            Algorithm::Dt => "DT",
            Algorithm::Rf => "RF",
            Algorithm::Ann => "ANN",
        }
    }

    pub fn tag(self) -> u8 {
        self as u8
    }

    pub fn from_tag(tag: u8) -> Option<Algorithm> {
        Algorithm::ALL.get(tag as usize).copied()
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match Algorithm::ALL.iter().find(|a| a.name().eq_ignore_ascii_case(s)) {
            Some(a) => Ok(*a),
            None => bail!(Config, "unknown algorithm '{s}' (expected KNN, DT, RF or ANN)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    pub knn_k: usize,
    pub dt_max_depth: usize,
    pub dt_min_samples_split: usize,
    pub rf_trees: usize,
    pub rf_features_per_split: usize,
    pub ann_hidden: Vec<usize>,
    pub ann_learning_rate: f64,
    pub ann_momentum: f64,
    pub ann_epochs: usize,
    pub ann_batch: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            knn_k: 5,
            dt_max_depth: 16,
            dt_min_samples_split: 2,
            rf_trees: 100,
            rf_features_per_split: libm::floor(libm::sqrt(VECTOR_DIM as f64)) as usize,
            ann_hidden: vec![64],
            ann_learning_rate: 0.01,
            ann_momentum: 0.9,
            ann_epochs: 50,
            ann_batch: 32,
        }
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    match value.trim().parse() {
        Ok(v) => Ok(v),
        Err(_) => bail!(Config, "invalid value '{}' for {key}", value.trim()),
    }
}

impl Hyperparams {
    pub const KEYS: [&'static str; 10] = [
        "knn_k",
        "dt_max_depth",
        "dt_min_samples_split",
        "rf_trees",
        "rf_features_per_split",
        "ann_hidden",
        "ann_learning_rate",
        "ann_momentum",
        "ann_epochs",
        "ann_batch",
    ];

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("knn_k", self.knn_k),
            ("dt_max_depth", self.dt_max_depth),
            ("dt_min_samples_split", self.dt_min_samples_split),
            ("rf_trees", self.rf_trees),
            ("rf_features_per_split", self.rf_features_per_split),
            ("ann_epochs", self.ann_epochs),
            ("ann_batch", self.ann_batch),
        ];
        for (k, v) in counts {
            if v == 0 {
                bail!(Config, "{k} must be positive");
            }
        }
        if self.rf_features_per_split > VECTOR_DIM {
            bail!(Config, "rf_features_per_split must be at most {VECTOR_DIM}");
        }
        if self.ann_hidden.is_empty() || self.ann_hidden.contains(&0) {
            bail!(Config, "ann_hidden must list positive layer widths");
        }
        if !(self.ann_learning_rate > 0.0 && self.ann_learning_rate.is_finite()) {
            bail!(Config, "ann_learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.ann_momentum) {
            bail!(Config, "ann_momentum must lie in [0, 1)");
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key.trim() {
            "knn_k" => self.knn_k = parse_num(key, value)?,
            "dt_max_depth" => self.dt_max_depth = parse_num(key, value)?,
            "dt_min_samples_split" => self.dt_min_samples_split = parse_num(key, value)?,
            "rf_trees" => self.rf_trees = parse_num(key, value)?,
            "rf_features_per_split" => self.rf_features_per_split = parse_num(key, value)?,
            "ann_hidden" => {
                self.ann_hidden = value.split(',').map(|w| parse_num(key, w)).collect::<Result<_>>()?;
            }
            "ann_learning_rate" => self.ann_learning_rate = parse_num(key, value)?,
            "ann_momentum" => self.ann_momentum = parse_num(key, value)?,
            "ann_epochs" => self.ann_epochs = parse_num(key, value)?,
            "ann_batch" => self.ann_batch = parse_num(key, value)?,
            other => bail!(Config, "unknown hyperparameter '{other}'"),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "knn_k" => self.knn_k.to_string(),
            "dt_max_depth" => self.dt_max_depth.to_string(),
            "dt_min_samples_split" => self.dt_min_samples_split.to_string(),
            "rf_trees" => self.rf_trees.to_string(),
            "rf_features_per_split" => self.rf_features_per_split.to_string(),
            "ann_hidden" => self.ann_hidden.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(","),
            "ann_learning_rate" => format!("{:?}", self.ann_learning_rate),
            "ann_momentum" => format!("{:?}", self.ann_momentum),
            "ann_epochs" => self.ann_epochs.to_string(),
            "ann_batch" => self.ann_batch.to_string(),
            _ => return None,
        })
    }

    /// Every key with its value rendered so that [`Hyperparams::set`] reads it back exactly.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        Hyperparams::KEYS.iter().map(|&k| (k, self.get(k).unwrap())).collect()
    }

    fn tree_options(&self) -> TreeOptions {
        TreeOptions {
            max_depth: self.dt_max_depth,
            min_samples_split: self.dt_min_samples_split,
            features_per_split: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Parameters {
    Knn(Knn),
    Tree(DecisionTree),
    Forest(RandomForest),
    Ann(Mlp),
}

impl Parameters {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            Parameters::Knn(_) => Algorithm::Knn,
            Parameters::Tree(_) => Algorithm::Dt,
            Parameters::Forest(_) => Algorithm::Rf,
            Parameters::Ann(_) => Algorithm::Ann,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub label: ConditionLabel,
    pub scores: [f64; NUM_CLASSES],
}

impl Prediction {
    pub fn confidence(&self) -> f64 {
        self.scores[self.label.index()]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub algorithm: Algorithm,
    pub hyperparams: Hyperparams,
    pub standardizer: Standardizer,
    pub parameters: Parameters,
    pub label_set: Vec<ConditionLabel>,
    pub schema_version: u32,
    pub seed: u64,
}

fn label_byte(label: ConditionLabel) -> u8 {
    label.index() as u8
}

fn from_class(c: usize) -> ConditionLabel {
    ConditionLabel::from_index(c).expect("class index within label set")
}

pub(crate) fn design_matrix(instances: &[LabeledInstance]) -> (Vec<[f64; VECTOR_DIM]>, Vec<u8>) {
    instances.iter().map(|i| (i.vector.to_array(), label_byte(i.label))).unzip()
}

pub fn train(algorithm: Algorithm, dataset: &LabeledDataset, hp: &Hyperparams, seed: u64) -> Result<Model> {
    hp.validate()?;
    if dataset.is_empty() {
        bail!(Config, "cannot train on an empty dataset");
    }
    let (raw, y) = design_matrix(&dataset.instances);
    let standardizer = Standardizer::fit(&raw);
    let x = standardizer.transform_all(&raw);
    let parameters = match algorithm {
        Algorithm::Knn => Parameters::Knn(Knn::new(hp.knn_k, x, y)),
        Algorithm::Dt => Parameters::Tree(DecisionTree::fit(&x, &y, hp.tree_options())),
        Algorithm::Rf => {
            let opts = TreeOptions { features_per_split: Some(hp.rf_features_per_split), ..hp.tree_options() };
            Parameters::Forest(RandomForest::fit(&x, &y, hp.rf_trees, opts, seed))
        }
        Algorithm::Ann => {
            let mut sizes = vec![VECTOR_DIM];
            sizes.extend_from_slice(&hp.ann_hidden);
            sizes.push(NUM_CLASSES);
            let mut net = Mlp::init(&sizes, &mut seeded_rng(seed, 0));
            let xs: Vec<&[f64]> = x.iter().map(|r| r.as_slice()).collect();
            let ys: Vec<usize> = y.iter().map(|&c| c as usize).collect();
            let opts = SgdOptions {
                learning_rate: hp.ann_learning_rate,
                momentum: hp.ann_momentum,
                epochs: hp.ann_epochs,
                batch_size: hp.ann_batch,
            };
            net.fit(&xs, &ys, opts, &mut seeded_rng(seed, 1));
            Parameters::Ann(net)
        }
    };
    Ok(Model {
        algorithm,
        hyperparams: hp.clone(),
        standardizer,
        parameters,
        label_set: ConditionLabel::ALL.to_vec(),
        schema_version: SCHEMA_VERSION,
        seed,
    })
}

fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

impl Model {
    /// Checks that the payload agrees with the header; used after deserializing.
    pub fn validate(&self) -> Result<()> {
        if self.parameters.algorithm() != self.algorithm {
            bail!(Integrity, "payload is {} but model is tagged {}", self.parameters.algorithm(), self.algorithm);
        }
        if self.label_set != ConditionLabel::ALL {
            bail!(Integrity, "label set does not match the condition labels");
        }
        self.hyperparams.validate()?;
        let in_range = |l: &u8| (*l as usize) < NUM_CLASSES;
        match &self.parameters {
            Parameters::Knn(k) => {
                if !k.labels.iter().all(in_range) || k.points.iter().flatten().any(|v| !v.is_finite()) {
                    bail!(Integrity, "KNN training set holds an invalid label or value");
                }
                if k.points.is_empty() {
                    bail!(Integrity, "KNN training set is empty");
                }
            }
            Parameters::Tree(t) => t.validate()?,
            Parameters::Forest(f) => {
                if f.trees.is_empty() {
                    bail!(Integrity, "forest has no trees");
                }
                for t in &f.trees {
                    t.validate()?;
                }
            }
            Parameters::Ann(net) => {
                if net.input_dim() != VECTOR_DIM || net.output_dim() != NUM_CLASSES {
                    bail!(Integrity, "network shape {}→{} does not match {VECTOR_DIM}→{NUM_CLASSES}", net.input_dim(), net.output_dim());
                }
                for pair in net.layers.windows(2) {
                    if pair[0].outputs != pair[1].inputs {
                        bail!(Integrity, "layer widths {} and {} do not chain", pair[0].outputs, pair[1].inputs);
                    }
                }
                for l in &net.layers {
                    if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                        bail!(Integrity, "layer {}→{} has mismatched parameter counts", l.inputs, l.outputs);
                    }
                    if l.weights.iter().chain(&l.bias).any(|v| !v.is_finite()) {
                        bail!(Integrity, "network holds a non-finite parameter");
                    }
                }
            }
        }
        if self.standardizer.std.iter().any(|s| !(*s > 0.0 && s.is_finite()))
            || self.standardizer.mean.iter().any(|m| !m.is_finite())
        {
            bail!(Integrity, "standardizer holds an invalid scale");
        }
        Ok(())
    }

    fn predict_standardized(&self, z: &[f64; VECTOR_DIM]) -> (usize, [f64; NUM_CLASSES]) {
        match &self.parameters {
            Parameters::Knn(k) => k.predict(z),
            Parameters::Tree(t) => t.predict(z),
            Parameters::Forest(f) => f.predict(z),
            Parameters::Ann(net) => {
                let p = net.probabilities(z);
                let scores = core::array::from_fn(|c| p[c]);
                (argmax(&p), scores)
            }
        }
    }

    pub fn predict_array(&self, raw: &[f64; VECTOR_DIM]) -> Prediction {
        let (c, scores) = self.predict_standardized(&self.standardizer.transform(raw));
        Prediction { label: from_class(c), scores }
    }

    pub fn predict(&self, v: &FeatureVector) -> Prediction {
        self.predict_array(&v.to_array())
    }

    pub fn predict_slice(&self, raw: &[f64]) -> Result<Prediction> {
        match <&[f64; VECTOR_DIM]>::try_from(raw) {
            Ok(a) => Ok(self.predict_array(a)),
            Err(_) => bail!(Contract, "expected a {VECTOR_DIM}-dimensional vector, got {}", raw.len()),
        }
    }

    /// Predictions in input order; parallel when `std` is enabled.
    pub fn predict_batch(&self, vs: &[FeatureVector]) -> Vec<Prediction> {
        #[cfg(feature = "std")]
        {
            use rayon::prelude::*;
            vs.par_iter().map(|v| self.predict(v)).collect()
        }
        #[cfg(not(feature = "std"))]
        {
            vs.iter().map(|v| self.predict(v)).collect()
        }
    }
}

pub fn predict(model: &Model, v: &FeatureVector) -> Prediction {
    model.predict(v)
}

/// Reference KNN answer from an exhaustive scan.
pub fn knn_brute_force(model: &Model, raw: &[f64]) -> Result<ConditionLabel> {
    let Parameters::Knn(knn) = &model.parameters else {
        bail!(Contract, "brute-force search needs a KNN model, got {}", model.algorithm);
    };
    let Ok(a) = <&[f64; VECTOR_DIM]>::try_from(raw) else {
        bail!(Contract, "expected a {VECTOR_DIM}-dimensional vector, got {}", raw.len());
    };
    Ok(from_class(knn.predict_brute_force(&model.standardizer.transform(a)).0))
}

/// Backpropagated gradient of the mean cross-entropy over `batch`.
pub fn ann_gradients(model: &Model, batch: &[LabeledInstance]) -> Result<Gradients> {
    let Parameters::Ann(net) = &model.parameters else {
        bail!(Contract, "gradients need an ANN model, got {}", model.algorithm);
    };
    if batch.is_empty() {
        bail!(Contract, "empty batch");
    }
    let (raw, y) = design_matrix(batch);
    let x = model.standardizer.transform_all(&raw);
    let xs: Vec<&[f64]> = x.iter().map(|r| r.as_slice()).collect();
    let ys: Vec<usize> = y.iter().map(|&c| c as usize).collect();
    Ok(net.gradients(&xs, &ys))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{DeviceSet, NUM_DEVICES, NUM_FEATURES};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn instance(values: [f64; NUM_FEATURES], label: ConditionLabel) -> LabeledInstance {
        LabeledInstance {
            vector: FeatureVector { minute: 0, values, availability: [true; NUM_DEVICES] },
            label,
        }
    }

    fn toy(n: usize, seed: u64) -> LabeledDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels = [ConditionLabel::Sleeping, ConditionLabel::Walking, ConditionLabel::DenialOfService];
        let instances = (0..n)
            .map(|i| {
                let c = i % 3;
                let mut v = [0.0; NUM_FEATURES];
                for (j, x) in v.iter_mut().enumerate() {
                    *x = 10.0 * (j as f64) + if j == c { 5.0 } else { 0.0 } + rng.random_range(-1.0..1.0);
                }
                instance(v, labels[c])
            })
            .collect();
        LabeledDataset::new(instances, DeviceSet::all()).unwrap()
    }

    #[test]
    fn every_algorithm_fits_a_separable_toy() {
        let ds = toy(60, 1);
        let hp = Hyperparams { rf_trees: 15, ann_epochs: 200, ann_learning_rate: 0.05, ..Hyperparams::default() };
        for a in Algorithm::ALL {
            let m = train(a, &ds, &hp, 7).unwrap();
            m.validate().unwrap();
            let correct = ds.instances.iter().filter(|i| m.predict(&i.vector).label == i.label).count();
            assert!(correct >= 57, "{a}: {correct}/60");
            for i in &ds.instances {
                let p = m.predict(&i.vector);
                assert!(p.scores.iter().all(|s| s.is_finite() && (0.0..=1.0).contains(s)));
                if a != Algorithm::Dt {
                    assert!((p.scores.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn ann_scores_open_interval_and_training_descends() {
        let ds = toy(50, 2);
        let hp = Hyperparams { ann_epochs: 200, ..Hyperparams::default() };
        let (raw, y) = design_matrix(&ds.instances);
        let st = Standardizer::fit(&raw);
        let x = st.transform_all(&raw);
        let xs: Vec<&[f64]> = x.iter().map(|r| r.as_slice()).collect();
        let ys: Vec<usize> = y.iter().map(|&c| c as usize).collect();
        let initial = Mlp::init(&[VECTOR_DIM, 64, NUM_CLASSES], &mut seeded_rng(3, 0)).loss(&xs, &ys);
        let m = train(Algorithm::Ann, &ds, &hp, 3).unwrap();
        let Parameters::Ann(net) = &m.parameters else { unreachable!() };
        assert!(net.loss(&xs, &ys) < initial);
        let p = m.predict(&ds.instances[0].vector);
        assert!(p.scores.iter().all(|&s| s > 0.0 && s < 1.0));
        assert!((p.scores.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn training_is_deterministic() {
        let ds = toy(90, 3);
        let hp = Hyperparams { rf_trees: 9, ann_epochs: 3, ..Hyperparams::default() };
        for a in Algorithm::ALL {
            assert_eq!(train(a, &ds, &hp, 11).unwrap(), train(a, &ds, &hp, 11).unwrap());
        }
    }

    #[test]
    fn knn_brute_force_agrees_and_k_equal_n_gives_global_majority() {
        let ds = toy(40, 4);
        let m = train(Algorithm::Knn, &ds, &Hyperparams::default(), 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let q: Vec<f64> = (0..VECTOR_DIM).map(|j| if j < NUM_FEATURES { rng.random_range(-5.0..120.0) } else { 1.0 }).collect();
            assert_eq!(knn_brute_force(&m, &q).unwrap(), m.predict_slice(&q).unwrap().label);
        }
        // 14 Sleeping, 13 Walking, 13 DoS; k = n makes every query the majority.
        let hp = Hyperparams { knn_k: 40, ..Hyperparams::default() };
        let m = train(Algorithm::Knn, &ds, &hp, 0).unwrap();
        let q = [100.0; VECTOR_DIM];
        assert_eq!(knn_brute_force(&m, &q).unwrap(), ConditionLabel::Sleeping);
        assert_eq!(m.predict_array(&q).label, ConditionLabel::Sleeping);
    }

    #[test]
    fn equidistant_tie_resolved_by_lower_class() {
        let a = instance([0.0; NUM_FEATURES], ConditionLabel::Walking);
        let mut v = [0.0; NUM_FEATURES];
        v[0] = 2.0;
        let b = instance(v, ConditionLabel::Sleeping);
        let ds = LabeledDataset::new(vec![a, b], DeviceSet::all()).unwrap();
        let hp = Hyperparams { knn_k: 1, ..Hyperparams::default() };
        let m = train(Algorithm::Knn, &ds, &hp, 0).unwrap();
        let mut q = [0.0; VECTOR_DIM];
        q[0] = 1.0;
        q[NUM_FEATURES..].fill(1.0);
        assert_eq!(m.predict_array(&q).label, ConditionLabel::Sleeping);
        assert_eq!(knn_brute_force(&m, &q).unwrap(), ConditionLabel::Sleeping);
    }

    #[test]
    fn contract_errors() {
        let ds = toy(30, 5);
        let m = train(Algorithm::Dt, &ds, &Hyperparams::default(), 0).unwrap();
        assert!(matches!(m.predict_slice(&[0.0; 19]), Err(Error::Contract(_))));
        assert!(matches!(knn_brute_force(&m, &[0.0; 20]), Err(Error::Contract(_))));
        assert!(matches!(ann_gradients(&m, &ds.instances), Err(Error::Contract(_))));
        assert!(matches!("svm".parse::<Algorithm>(), Err(Error::Config(_))));
        assert_eq!("rf".parse::<Algorithm>().unwrap(), Algorithm::Rf);
        let bad = Hyperparams { rf_features_per_split: 21, ..Hyperparams::default() };
        assert!(matches!(train(Algorithm::Rf, &ds, &bad, 0), Err(Error::Config(_))));
    }

    #[test]
    fn hyperparams_round_trip_through_text() {
        let hp = Hyperparams { ann_hidden: vec![32, 16], ann_learning_rate: 0.1 + 0.2, ..Hyperparams::default() };
        let mut back = Hyperparams::default();
        for (k, v) in hp.entries() {
            back.set(k, &v).unwrap();
        }
        assert_eq!(back, hp);
        assert_eq!(Hyperparams::default().rf_features_per_split, 4);
    }

    #[test]
    fn ann_gradients_through_model() {
        let ds = toy(12, 6);
        let hp = Hyperparams { ann_hidden: vec![4], ann_epochs: 1, ..Hyperparams::default() };
        let m = train(Algorithm::Ann, &ds, &hp, 1).unwrap();
        let g = ann_gradients(&m, &ds.instances).unwrap();
        assert_eq!(g.weights[0].len(), VECTOR_DIM * 4);
        assert_eq!(g.biases[1].len(), NUM_CLASSES);
        assert!(ann_gradients(&m, &[]).is_err());
    }
}
