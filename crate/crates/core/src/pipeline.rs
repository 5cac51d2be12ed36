//! Data collection and preprocessing: per-device readings are resampled to
//! one value per minute and merged into fixed-width feature vectors.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::domain::{
    nominal_range, ConditionLabel, DeviceKind, DeviceSet, FeatureKind, NUM_CLASSES, NUM_DEVICES,
    NUM_FEATURES, VECTOR_DIM,
};
use crate::error::{bail, Result};
use crate::simulator::{seeded_rng, Reading, TelemetryStream};

pub const SCHEMA_VERSION: u32 = 1;

/// One merged per-minute observation of the patient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector {
    pub minute: u32,
    /// Indexed by [`FeatureKind::index`].
    pub values: [f64; NUM_FEATURES],
    /// Indexed by [`DeviceKind::index`].
    pub availability: [bool; NUM_DEVICES],
}

impl FeatureVector {
    /// Values followed by availability flags as 0/1.
    pub fn to_array(&self) -> [f64; VECTOR_DIM] {
        let mut out = [0.0; VECTOR_DIM];
        out[..NUM_FEATURES].copy_from_slice(&self.values);
        for (slot, &a) in out[NUM_FEATURES..].iter_mut().zip(&self.availability) {
            *slot = if a { 1.0 } else { 0.0 };
        }
        out
    }

    pub fn value(&self, f: FeatureKind) -> f64 {
        self.values[f.index()]
    }

    pub fn available(&self, d: DeviceKind) -> bool {
        self.availability[d.index()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledInstance {
    pub vector: FeatureVector,
    pub label: ConditionLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub instances: Vec<LabeledInstance>,
    pub device_mask: DeviceSet,
    pub schema_version: u32,
}

impl LabeledDataset {
    pub fn new(instances: Vec<LabeledInstance>, device_mask: DeviceSet) -> Result<Self> {
        if instances.is_empty() {
            bail!(Integrity, "dataset is empty");
        }
        Ok(LabeledDataset { instances, device_mask, schema_version: SCHEMA_VERSION })
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn class_counts(&self) -> [usize; NUM_CLASSES] {
        let mut counts = [0; NUM_CLASSES];
        for inst in &self.instances {
            counts[inst.label.index()] += 1;
        }
        counts
    }

    pub fn malicious_count(&self) -> usize {
        self.instances.iter().filter(|i| i.label.is_malicious()).count()
    }

    fn subset(&self, idx: &[usize]) -> Result<LabeledDataset> {
        let instances = idx.iter().map(|&i| self.instances[i]).collect();
        LabeledDataset::new(instances, self.device_mask)
    }
}

/// Per-device readings of a stream, checked for time order.
pub fn collect(stream: &TelemetryStream) -> Result<Vec<Vec<Reading>>> {
    let mut out = vec![Vec::new(); NUM_DEVICES];
    for (i, readings) in stream.readings.iter().enumerate() {
        let device = DeviceKind::from_index(i).expect("eight device slots");
        for w in readings.windows(2) {
            if w[0].t_seconds >= w[1].t_seconds {
                bail!(Integrity, "{device}: reading at {}s follows {}s", w[1].t_seconds, w[0].t_seconds);
            }
        }
        if let Some(r) = readings.iter().find(|r| r.device != device) {
            bail!(Integrity, "{} reading filed under {device}", r.device);
        }
        out[i] = readings.clone();
    }
    Ok(out)
}

/// One device resampled to minutes. Slots follow `device.features()`.
#[derive(Debug, Clone, PartialEq)]
pub struct MinuteSeries {
    pub device: DeviceKind,
    pub values: Vec<[f64; 3]>,
    pub available: Vec<bool>,
}

impl MinuteSeries {
    pub fn minutes(&self) -> usize {
        self.values.len()
    }
}

fn mode_code(values: impl Iterator<Item = f64>) -> f64 {
    let mut counts = [0usize; 3];
    for v in values {
        counts[(libm::round(v) as usize).min(2)] += 1;
    }
    // Lowest code wins ties.
    let best = (0..3).fold(0, |b, c| if counts[c] > counts[b] { c } else { b });
    best as f64
}

/// Averages readings per minute (mode for categorical features). Minutes
/// without readings are unavailable and carry the previous minute forward,
/// starting from the nominal midpoint.
pub fn resample_per_minute(readings: &[Reading], device: DeviceKind, minutes: usize) -> MinuteSeries {
    let features = device.features();
    let mut values = Vec::with_capacity(minutes);
    let mut available = Vec::with_capacity(minutes);
    let mut last = [0.0; 3];
    for (slot, &f) in last.iter_mut().zip(features) {
        *slot = nominal_range(f).midpoint();
    }
    let mut rest = readings;
    for m in 0..minutes {
        let end = (m as u32 + 1) * 60;
        let start = m as u32 * 60;
        // Readings before the current minute (out of span) are skipped.
        while let Some((r, tail)) = rest.split_first() {
            if r.t_seconds >= start {
                break;
            }
            rest = tail;
        }
        let n = rest.iter().take_while(|r| r.t_seconds < end).count();
        let (bucket, tail) = rest.split_at(n);
        rest = tail;
        if !bucket.is_empty() {
            for (i, &f) in features.iter().enumerate() {
                last[i] = if f.is_categorical() {
                    mode_code(bucket.iter().map(|r| r.values[i]))
                } else {
                    bucket.iter().map(|r| r.values[i]).sum::<f64>() / bucket.len() as f64
                };
            }
        }
        values.push(last);
        available.push(!bucket.is_empty());
    }
    MinuteSeries { device, values, available }
}

/// Merges per-device minute series into feature vectors. Devices outside
/// `mask` contribute their nominal midpoint and read as available.
pub fn merge(series: &[MinuteSeries], mask: DeviceSet) -> Result<Vec<FeatureVector>> {
    let minutes = match series.first() {
        Some(s) => s.minutes(),
        None => bail!(Integrity, "no device series to merge"),
    };
    let mut by_device: [Option<&MinuteSeries>; NUM_DEVICES] = [None; NUM_DEVICES];
    for s in series {
        if s.minutes() != minutes || s.available.len() != minutes {
            bail!(Integrity, "{} covers {} minutes, expected {minutes}", s.device, s.minutes());
        }
        by_device[s.device.index()] = Some(s);
    }
    let mut template = FeatureVector { minute: 0, values: [0.0; NUM_FEATURES], availability: [true; NUM_DEVICES] };
    for &f in FeatureKind::ALL {
        template.values[f.index()] = nominal_range(f).midpoint();
    }
    let mut out = vec![template; minutes];
    for (m, v) in out.iter_mut().enumerate() {
        v.minute = m as u32;
    }
    for &d in DeviceKind::ALL.iter().filter(|d| mask.contains(**d)) {
        let s = by_device[d.index()]
            .ok_or_else(|| crate::Error::Integrity(alloc::format!("missing series for {d}")))?;
        for (m, v) in out.iter_mut().enumerate() {
            for (i, &f) in d.features().iter().enumerate() {
                v.values[f.index()] = s.values[m][i];
            }
            v.availability[d.index()] = s.available[m];
        }
    }
    Ok(out)
}

/// collect → resample → merge for one stream.
pub fn preprocess(stream: &TelemetryStream, mask: DeviceSet) -> Result<Vec<FeatureVector>> {
    let per_device = collect(stream)?;
    let minutes = stream.minutes();
    let series: Vec<MinuteSeries> = mask
        .iter()
        .map(|d| resample_per_minute(&per_device[d.index()], d, minutes))
        .collect();
    if series.is_empty() {
        bail!(Integrity, "device mask is empty");
    }
    merge(&series, mask)
}

fn class_indices(ds: &LabeledDataset) -> Vec<Vec<usize>> {
    let mut by_class = vec![Vec::new(); NUM_CLASSES];
    for (i, inst) in ds.instances.iter().enumerate() {
        by_class[inst.label.index()].push(i);
    }
    by_class
}

fn check_fraction(train_fraction: f64) -> Result<()> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        bail!(Config, "train fraction must lie in (0, 1), got {train_fraction}");
    }
    Ok(())
}

fn stratified_indices(
    ds: &LabeledDataset,
    train_fraction: f64,
    seed: u64,
    include: impl Fn(ConditionLabel) -> bool,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut rng = seeded_rng(seed, 0);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (c, mut idx) in class_indices(ds).into_iter().enumerate() {
        let label = ConditionLabel::from_index(c).expect("class index");
        if idx.is_empty() {
            continue;
        }
        if !include(label) {
            test.extend(idx);
            continue;
        }
        if idx.len() < 2 {
            bail!(Stratification, "{label} has only {} instance", idx.len());
        }
        idx.shuffle(&mut rng);
        let n_train = libm::round(idx.len() as f64 * train_fraction) as usize;
        let n_train = n_train.clamp(1, idx.len() - 1);
        train.extend_from_slice(&idx[..n_train]);
        test.extend_from_slice(&idx[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Stratified random split: each class contributes `round(n * fraction)` instances to train.
pub fn split(ds: &LabeledDataset, train_fraction: f64, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
    check_fraction(train_fraction)?;
    let (train, test) = stratified_indices(ds, train_fraction, seed, |_| true)?;
    Ok((ds.subset(&train)?, ds.subset(&test)?))
}

/// Trains on a share of benign data only; all malicious instances go to test.
pub fn split_literal(ds: &LabeledDataset, train_fraction: f64, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
    check_fraction(train_fraction)?;
    let (train, test) = stratified_indices(ds, train_fraction, seed, ConditionLabel::is_benign)?;
    Ok((ds.subset(&train)?, ds.subset(&test)?))
}
