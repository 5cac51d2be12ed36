//! Benign telemetry synthesis and attack injection.
//!
//! Every stream is a pure function of its config and seed. Benign readings,
//! attack sampling and segment shuffling draw from separate ChaCha streams of
//! the same seed, so changing one never perturbs the others.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

use crate::domain::{
    nominal_range, sleep_code, ConditionLabel, DeviceKind, DeviceSet, EffectEntry, FeatureKind,
    Shift, NUM_DEVICES,
};
use crate::error::{bail, Error, Result};
use crate::pipeline::{self, LabeledDataset, LabeledInstance};

const BENIGN_STREAM: u64 = 0;
const ATTACK_STREAM: u64 = 1;
const SHUFFLE_STREAM: u64 = 2;

/// Affected features are centred this fraction of the nominal width beyond the violated bound.
pub const SHIFT_FRACTION: f64 = 0.2;
/// Shifted draws are truncated at this many standard deviations.
pub const SHIFT_TRUNCATION_SIGMAS: f64 = 3.0;
/// Target malicious-minute share of the default dataset.
pub const DEFAULT_MALICIOUS_FRACTION: f64 = 0.15;

pub(crate) fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub condition: ConditionLabel,
    pub minutes: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub segments: Vec<Segment>,
    pub seed: u64,
    pub enabled_devices: DeviceSet,
    pub noise_scale: f64,
}

impl Default for ScenarioConfig {
    /// All twelve benign conditions, 1,000 minutes in total.
    fn default() -> Self {
        let segments = ConditionLabel::BENIGN
            .iter()
            .enumerate()
            .map(|(i, &condition)| Segment { condition, minutes: if i < 4 { 84 } else { 83 } })
            .collect();
        ScenarioConfig { segments, seed: 1, enabled_devices: DeviceSet::all(), noise_scale: 0.05 }
    }
}

impl ScenarioConfig {
    pub fn total_minutes(&self) -> usize {
        self.segments.iter().map(|s| s.minutes as usize).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.enabled_devices.is_empty() {
            bail!(Config, "no devices enabled");
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            bail!(Config, "noise_scale must be a finite non-negative number");
        }
        if self.total_minutes() == 0 {
            bail!(Config, "scenario must last at least one minute");
        }
        for s in &self.segments {
            if s.minutes == 0 {
                bail!(Config, "segment {} has zero duration", s.condition);
            }
            if s.condition.is_malicious() {
                bail!(Config, "segment condition {} is not benign", s.condition);
            }
        }
        Ok(())
    }

    /// Per-minute condition labels.
    pub fn minute_labels(&self) -> Vec<ConditionLabel> {
        self.segments
            .iter()
            .flat_map(|s| core::iter::repeat_n(s.condition, s.minutes as usize))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackConfig {
    pub rate_per_hour: f64,
    pub duration_min: u32,
    pub duration_max: u32,
    pub enabled_threats: Vec<ConditionLabel>,
    pub seed: u64,
    /// Preferred target of `TamperedDevice`; `None` picks uniformly like the other threats.
    pub tamper_target: Option<DeviceKind>,
}

impl Default for AttackConfig {
    fn default() -> Self {
        let (duration_min, duration_max) = (5, 30);
        AttackConfig {
            rate_per_hour: rate_for_fraction(DEFAULT_MALICIOUS_FRACTION, duration_min, duration_max),
            duration_min,
            duration_max,
            enabled_threats: ConditionLabel::ATTACKS.to_vec(),
            seed: 1,
            tamper_target: Some(DeviceKind::SleepMotionWatch),
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rate_per_hour >= 0.0 && self.rate_per_hour.is_finite()) {
            bail!(Config, "rate_per_hour must be a finite non-negative number");
        }
        if self.duration_min == 0 || self.duration_min > self.duration_max {
            bail!(Config, "duration range [{}, {}] is invalid", self.duration_min, self.duration_max);
        }
        if self.enabled_threats.is_empty() {
            bail!(Config, "no threats enabled");
        }
        if let Some(t) = self.enabled_threats.iter().find(|t| t.is_benign()) {
            bail!(Config, "{t} is not a threat");
        }
        Ok(())
    }
}

/// Poisson rate (per hour) whose attack windows cover `fraction` of the timeline
/// in expectation, for durations uniform on `[dmin, dmax]` minutes.
pub fn rate_for_fraction(fraction: f64, dmin: u32, dmax: u32) -> f64 {
    let mean_duration = 0.5 * (dmin as f64 + dmax as f64);
    -libm::log(1.0 - fraction) * 60.0 / mean_duration
}

/// One device report at `t_seconds`. Only the first `device.features().len()`
/// slots of `values` are meaningful.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reading {
    pub device: DeviceKind,
    pub t_seconds: u32,
    pub values: [f64; 3],
}

impl Reading {
    pub fn minute(&self) -> usize {
        (self.t_seconds / 60) as usize
    }

    pub fn value(&self, feature: FeatureKind) -> Option<f64> {
        self.device.features().iter().position(|&f| f == feature).map(|i| self.values[i])
    }

    pub fn set(&mut self, feature: FeatureKind, v: f64) {
        if let Some(i) = self.device.features().iter().position(|&f| f == feature) {
            self.values[i] = v;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttackEvent {
    pub kind: ConditionLabel,
    pub target: DeviceKind,
    pub onset_minute: u32,
    pub duration_minutes: u32,
}

impl AttackEvent {
    pub fn end_minute(&self) -> u32 {
        self.onset_minute + self.duration_minutes
    }

    pub fn covers(&self, minute: usize) -> bool {
        (self.onset_minute as usize..self.end_minute() as usize).contains(&minute)
    }

    fn covers_seconds(&self, t: u32) -> bool {
        (self.onset_minute * 60..self.end_minute() * 60).contains(&t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TelemetryStream {
    pub devices: DeviceSet,
    pub noise_scale: f64,
    /// Indexed by [`DeviceKind::index`]; disabled devices have no readings.
    pub readings: Vec<Vec<Reading>>,
    pub ground_truth: Vec<ConditionLabel>,
    pub events: Vec<AttackEvent>,
}

impl TelemetryStream {
    pub fn minutes(&self) -> usize {
        self.ground_truth.len()
    }

    pub fn device_readings(&self, d: DeviceKind) -> &[Reading] {
        &self.readings[d.index()]
    }

    pub fn total_readings(&self) -> usize {
        self.readings.iter().map(Vec::len).sum()
    }
}

fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Draws one value of `feature`. `shift` selects the displaced distribution of
/// an affected feature; `None` draws around the nominal midpoint.
pub(crate) fn draw_value(
    feature: FeatureKind,
    shift: Option<Shift>,
    noise_scale: f64,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let range = nominal_range(feature);
    let width = range.width();
    let sigma = noise_scale * width;
    let center = match shift {
        None => range.midpoint(),
        Some(Shift::High) => range.hi + SHIFT_FRACTION * width,
        Some(Shift::Low) => range.lo - SHIFT_FRACTION * width,
    };
    let z = if sigma == 0.0 {
        0.0
    } else if shift.is_some() {
        loop {
            let z = standard_normal(rng);
            if z.abs() <= SHIFT_TRUNCATION_SIGMAS {
                break z;
            }
        }
    } else {
        standard_normal(rng)
    };
    let (lo, hi) = feature.physical_bounds();
    let v = (center + sigma * z).clamp(lo, hi);
    if feature.is_categorical() {
        libm::round(v).clamp(lo, hi)
    } else {
        v
    }
}

/// Synthesizes benign readings for every enabled device at its native cadence.
pub fn generate_benign(config: &ScenarioConfig) -> Result<TelemetryStream> {
    config.validate()?;
    let labels = config.minute_labels();
    let effects = ConditionLabel::BENIGN
        .iter()
        .map(|&c| EffectEntry::for_condition(c))
        .collect::<Result<Vec<_>>>()?;
    let horizon_s = labels.len() as u32 * 60;
    let mut rng = seeded_rng(config.seed, BENIGN_STREAM);
    let mut readings = vec![Vec::new(); NUM_DEVICES];
    for device in config.enabled_devices.iter() {
        let period = device.period_seconds();
        let out = &mut readings[device.index()];
        out.reserve((horizon_s / period) as usize + 1);
        for t in (0..horizon_s).step_by(period as usize) {
            let effect = &effects[labels[(t / 60) as usize].index()];
            let mut values = [0.0; 3];
            for (slot, &f) in values.iter_mut().zip(device.features()) {
                *slot = draw_value(f, effect.direction(f), config.noise_scale, &mut rng);
            }
            out.push(Reading { device, t_seconds: t, values });
        }
    }
    Ok(TelemetryStream {
        devices: config.enabled_devices,
        noise_scale: config.noise_scale,
        readings,
        ground_truth: labels,
        events: Vec::new(),
    })
}

fn onsets_from(rate_per_hour: f64, horizon_minutes: usize, rng: &mut ChaCha8Rng) -> Result<Vec<u32>> {
    if !(rate_per_hour >= 0.0) || !rate_per_hour.is_finite() {
        bail!(Domain, "rate_per_hour must be finite and non-negative, got {rate_per_hour}");
    }
    if horizon_minutes == 0 {
        bail!(Domain, "horizon must be at least one minute");
    }
    let mut onsets = Vec::new();
    if rate_per_hour == 0.0 {
        return Ok(onsets);
    }
    let gap = Exp::new(rate_per_hour / 60.0).map_err(|e| Error::Domain(alloc::format!("{e}")))?;
    let horizon = horizon_minutes as f64;
    let mut t = 0.0;
    loop {
        t += gap.sample(rng);
        if t >= horizon {
            break;
        }
        onsets.push(libm::floor(t) as u32);
    }
    Ok(onsets)
}

/// Onset minutes of a homogeneous Poisson process with `rate_per_hour / 60`
/// events per minute on `[0, horizon_minutes)`, ascending.
pub fn sample_attack_onsets(rate_per_hour: f64, horizon_minutes: usize, seed: u64) -> Result<Vec<u32>> {
    onsets_from(rate_per_hour, horizon_minutes, &mut seeded_rng(seed, ATTACK_STREAM))
}

fn pick_target(kind: ConditionLabel, ac: &AttackConfig, devices: DeviceSet, rng: &mut ChaCha8Rng) -> DeviceKind {
    if kind == ConditionLabel::TamperedDevice {
        if let Some(t) = ac.tamper_target.filter(|t| devices.contains(*t)) {
            return t;
        }
    }
    let enabled: Vec<DeviceKind> = devices.iter().collect();
    enabled[rng.random_range(0..enabled.len())]
}

fn check_injectable(stream: &TelemetryStream, ac: &AttackConfig) -> Result<()> {
    ac.validate()?;
    if !stream.events.is_empty() {
        bail!(Config, "stream already carries attack events");
    }
    if stream.devices.is_empty() {
        bail!(Config, "stream has no enabled devices");
    }
    Ok(())
}

/// Injects Poisson-timed attacks and relabels the affected minutes.
pub fn inject_attacks(stream: &TelemetryStream, ac: &AttackConfig) -> Result<TelemetryStream> {
    check_injectable(stream, ac)?;
    let horizon = stream.minutes();
    let mut rng = seeded_rng(ac.seed, ATTACK_STREAM);
    let mut events = Vec::new();
    for onset in onsets_from(ac.rate_per_hour, horizon, &mut rng)? {
        let kind = ac.enabled_threats[rng.random_range(0..ac.enabled_threats.len())];
        let target = pick_target(kind, ac, stream.devices, &mut rng);
        let duration = rng.random_range(ac.duration_min..=ac.duration_max);
        let duration = duration.min(horizon as u32 - onset);
        events.push(AttackEvent { kind, target, onset_minute: onset, duration_minutes: duration });
    }
    apply_events(stream, events, &mut rng)
}

/// Injects incidents in which `kinds` distinct threats hit at once.
///
/// Incidents start at Poisson onsets (at least one per stream); an onset that
/// falls inside the previous incident is dropped. Inside an
/// incident the i-th threat starts `i * stagger_minutes` after the first and all
/// share one duration, so every threat keeps some minutes of its own label.
pub fn inject_concurrent_attacks(
    stream: &TelemetryStream,
    ac: &AttackConfig,
    kinds: usize,
    stagger_minutes: u32,
) -> Result<TelemetryStream> {
    check_injectable(stream, ac)?;
    if kinds == 0 || kinds > ac.enabled_threats.len() {
        bail!(Config, "cannot run {kinds} concurrent threats out of {}", ac.enabled_threats.len());
    }
    let horizon = stream.minutes() as u32;
    let span = |d: u32| d + (kinds as u32 - 1) * stagger_minutes;
    if span(ac.duration_max) > horizon {
        bail!(Config, "incident span {} exceeds the {horizon}-minute stream", span(ac.duration_max));
    }
    let mut rng = seeded_rng(ac.seed, ATTACK_STREAM);
    let mut onsets = onsets_from(ac.rate_per_hour, horizon as usize, &mut rng)?;
    if onsets.is_empty() {
        onsets.push(rng.random_range(0..horizon));
    }
    let mut events = Vec::new();
    let mut free_from = 0;
    for onset in onsets {
        let duration = rng.random_range(ac.duration_min..=ac.duration_max);
        let onset = onset.min(horizon - span(duration));
        // Incidents never overlap each other.
        if onset < free_from {
            continue;
        }
        free_from = onset + span(duration);
        let mut threats = ac.enabled_threats.clone();
        threats.shuffle(&mut rng);
        for (i, &kind) in threats[..kinds].iter().enumerate() {
            let target = pick_target(kind, ac, stream.devices, &mut rng);
            events.push(AttackEvent {
                kind,
                target,
                onset_minute: onset + i as u32 * stagger_minutes,
                duration_minutes: duration,
            });
        }
    }
    apply_events(stream, events, &mut rng)
}

/// Fuses overlapping or touching windows of the same threat on the same device.
fn merge_events(mut events: Vec<AttackEvent>) -> Vec<AttackEvent> {
    // Stable: equal onsets keep sampling order, which decides label ties.
    events.sort_by_key(|e| e.onset_minute);
    let mut merged: Vec<AttackEvent> = Vec::with_capacity(events.len());
    for e in events {
        if let Some(prev) = merged
            .iter_mut()
            .find(|p| p.kind == e.kind && p.target == e.target && e.onset_minute <= p.end_minute())
        {
            let end = prev.end_minute().max(e.end_minute());
            prev.duration_minutes = end - prev.onset_minute;
        } else {
            merged.push(e);
        }
    }
    merged
}

fn apply_events(
    stream: &TelemetryStream,
    events: Vec<AttackEvent>,
    rng: &mut ChaCha8Rng,
) -> Result<TelemetryStream> {
    let events = merge_events(events);
    let mut out = stream.clone();
    for e in &events {
        if !out.devices.contains(e.target) {
            bail!(Config, "attack target {} is not enabled", e.target);
        }
        if e.end_minute() as usize > out.minutes() {
            bail!(Integrity, "attack window ends after the stream");
        }
        let readings = &mut out.readings[e.target.index()];
        match e.kind {
            ConditionLabel::DenialOfService => readings.retain(|r| !e.covers_seconds(r.t_seconds)),
            ConditionLabel::FalseDataInjection => {
                forge_readings(readings, e, &stream.ground_truth, stream.noise_scale, rng)?
            }
            ConditionLabel::TamperedDevice => tamper_readings(readings, e),
            other => bail!(Config, "{other} is not a threat"),
        }
    }
    for (minute, label) in out.ground_truth.iter_mut().enumerate() {
        // Events are sorted by onset, so the first hit is the earliest.
        if let Some(e) = events.iter().find(|e| e.covers(minute)) {
            *label = e.kind;
        }
    }
    out.events = events;
    Ok(out)
}

/// Replaces readings inside the window with forged values. When the true
/// condition already displaces the device, the forgery masks it with healthy
/// values; when the device is healthy, the forgery fabricates a depressed reading.
fn forge_readings(
    readings: &mut [Reading],
    e: &AttackEvent,
    truth: &[ConditionLabel],
    noise_scale: f64,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    for r in readings.iter_mut().filter(|r| e.covers_seconds(r.t_seconds)) {
        let effect = EffectEntry::for_condition(truth[r.minute()])?;
        let displaced = e.target.features().iter().any(|&f| effect.direction(f).is_some());
        let shift = if displaced { None } else { Some(Shift::Low) };
        for (slot, &f) in r.values.iter_mut().zip(e.target.features()) {
            *slot = draw_value(f, shift, noise_scale, rng);
        }
    }
    Ok(())
}

/// The device stops entering sleep: sleep state reads awake and every other
/// value stays frozen at its last pre-attack report.
fn tamper_readings(readings: &mut [Reading], e: &AttackEvent) {
    let start = e.onset_minute * 60;
    let frozen = readings.iter().rev().find(|r| r.t_seconds < start).map(|r| r.values);
    let frozen = frozen.unwrap_or_else(|| {
        let mut v = [0.0; 3];
        for (slot, &f) in v.iter_mut().zip(e.target.features()) {
            *slot = nominal_range(f).midpoint();
        }
        v
    });
    for r in readings.iter_mut().filter(|r| e.covers_seconds(r.t_seconds)) {
        r.values = frozen;
        r.set(FeatureKind::SleepState, sleep_code::AWAKE);
    }
}

/// Everything needed to synthesize a labeled dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub scenario: ScenarioConfig,
    pub attack: AttackConfig,
    /// Number of independent streams (patients); stream `i` uses seeds `seed ^ i`.
    pub streams: u32,
    /// Shuffle segment order per stream.
    pub shuffle_segments: bool,
}

impl Default for DatasetConfig {
    /// 20 streams of 1,000 minutes: 20,000 instances, about 15% malicious.
    fn default() -> Self {
        DatasetConfig {
            scenario: ScenarioConfig::default(),
            attack: AttackConfig::default(),
            streams: 20,
            shuffle_segments: true,
        }
    }
}

impl DatasetConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.scenario.seed = seed;
        self.attack.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.attack.validate()?;
        if self.streams == 0 {
            bail!(Config, "streams must be at least 1");
        }
        if self.attack.rate_per_hour > 0.0
            && !self.attack.enabled_threats.is_empty()
            && self.scenario.enabled_devices.is_empty()
        {
            bail!(Config, "attacks need at least one enabled device");
        }
        Ok(())
    }

    /// Scenario of stream `index` with derived seed and (optionally) shuffled segments.
    pub fn stream_scenario(&self, index: u32) -> ScenarioConfig {
        let mut sc = self.scenario.clone();
        sc.seed ^= index as u64;
        if self.shuffle_segments {
            sc.segments.shuffle(&mut seeded_rng(sc.seed, SHUFFLE_STREAM));
        }
        sc
    }

    pub fn stream_attack(&self, index: u32) -> AttackConfig {
        let mut ac = self.attack.clone();
        ac.seed ^= index as u64;
        ac
    }
}

/// Benign stream plus injected attacks for stream `index`.
pub fn build_stream(cfg: &DatasetConfig, index: u32) -> Result<TelemetryStream> {
    let benign = generate_benign(&cfg.stream_scenario(index))?;
    inject_attacks(&benign, &cfg.stream_attack(index))
}

/// Turns a stream into labeled per-minute instances.
pub fn stream_instances(stream: &TelemetryStream, mask: DeviceSet) -> Result<Vec<LabeledInstance>> {
    let vectors = pipeline::preprocess(stream, mask)?;
    Ok(vectors
        .into_iter()
        .zip(&stream.ground_truth)
        .map(|(vector, &label)| LabeledInstance { vector, label })
        .collect())
}

/// Generates, attacks and merges every stream of `cfg` into one dataset.
pub fn build_dataset(cfg: &DatasetConfig) -> Result<LabeledDataset> {
    cfg.validate()?;
    let mask = cfg.scenario.enabled_devices;
    let one = |i: u32| build_stream(cfg, i).and_then(|s| stream_instances(&s, mask));
    #[cfg(feature = "std")]
    let parts: Vec<Result<Vec<LabeledInstance>>> = {
        use rayon::prelude::*;
        (0..cfg.streams).into_par_iter().map(one).collect()
    };
    #[cfg(not(feature = "std"))]
    let parts: Vec<Result<Vec<LabeledInstance>>> = (0..cfg.streams).map(one).collect();
    let mut instances = Vec::with_capacity(cfg.streams as usize * cfg.scenario.total_minutes());
    for p in parts {
        instances.extend(p?);
    }
    LabeledDataset::new(instances, mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{affected_features, in_nominal};

    fn scenario(segments: &[(ConditionLabel, u32)], seed: u64) -> ScenarioConfig {
        ScenarioConfig {
            segments: segments.iter().map(|&(condition, minutes)| Segment { condition, minutes }).collect(),
            seed,
            enabled_devices: DeviceSet::all(),
            noise_scale: 0.05,
        }
    }

    fn feature_mean(stream: &TelemetryStream, f: FeatureKind) -> f64 {
        let rs = stream.device_readings(f.device());
        rs.iter().map(|r| r.value(f).unwrap()).sum::<f64>() / rs.len() as f64
    }

    #[test]
    fn exercise_moves_vitals_in_stated_directions() {
        let s = generate_benign(&scenario(&[(ConditionLabel::Exercise, 60)], 3)).unwrap();
        use FeatureKind as F;
        for r in s.device_readings(DeviceKind::HeartBpMonitor) {
            assert!(r.value(F::HeartRate).unwrap() > 100.0);
        }
        for f in [F::Glucose, F::Spo2] {
            assert!(feature_mean(&s, f) < nominal_range(f).midpoint(), "{f}");
            assert!(feature_mean(&s, f) < nominal_range(f).lo, "{f}");
        }
        assert!(feature_mean(&s, F::SweatRate) > nominal_range(F::SweatRate).hi);
        // Hemoglobin is not affected by exercise in the effect table.
        assert!(in_nominal(F::Hemoglobin, feature_mean(&s, F::Hemoglobin)).unwrap());
    }

    #[test]
    fn zero_noise_keeps_unaffected_features_at_midpoint() {
        let mut sc = scenario(&[(ConditionLabel::Sleeping, 10)], 9);
        sc.noise_scale = 0.0;
        let s = generate_benign(&sc).unwrap();
        let affected = affected_features(ConditionLabel::Sleeping).unwrap();
        for &f in FeatureKind::ALL.iter().filter(|f| !affected.contains(**f)) {
            for r in s.device_readings(f.device()) {
                assert_eq!(r.value(f).unwrap(), nominal_range(f).midpoint(), "{f}");
            }
        }
        assert_eq!(s.ground_truth, vec![ConditionLabel::Sleeping; 10]);
    }

    #[test]
    fn generation_is_deterministic() {
        let sc = scenario(&[(ConditionLabel::Walking, 20), (ConditionLabel::Drunk, 15)], 77);
        assert_eq!(generate_benign(&sc).unwrap(), generate_benign(&sc).unwrap());
        let other = ScenarioConfig { seed: 78, ..sc.clone() };
        assert_ne!(generate_benign(&sc).unwrap(), generate_benign(&other).unwrap());
    }

    #[test]
    fn native_cadences_and_ordering() {
        let s = generate_benign(&scenario(&[(ConditionLabel::Stress, 10)], 1)).unwrap();
        for &d in DeviceKind::ALL {
            let rs = s.device_readings(d);
            assert_eq!(rs.len() as u32, 600 / d.period_seconds(), "{d}");
            assert!(rs.windows(2).all(|w| w[0].t_seconds < w[1].t_seconds));
            assert!(rs.iter().all(|r| r.device == d && r.values.iter().all(|v| v.is_finite())));
        }
    }

    #[test]
    fn config_errors() {
        let mut sc = scenario(&[(ConditionLabel::Stress, 10)], 1);
        sc.enabled_devices = DeviceSet::empty();
        assert!(matches!(generate_benign(&sc), Err(Error::Config(_))));
        let sc = scenario(&[(ConditionLabel::DenialOfService, 10)], 1);
        assert!(generate_benign(&sc).is_err());
        let sc = scenario(&[], 1);
        assert!(generate_benign(&sc).is_err());
        let s = generate_benign(&scenario(&[(ConditionLabel::Stress, 10)], 1)).unwrap();
        let ac = AttackConfig { enabled_threats: vec![], ..AttackConfig::default() };
        assert!(matches!(inject_attacks(&s, &ac), Err(Error::Config(_))));
    }

    #[test]
    fn zero_rate_gives_no_onsets() {
        for seed in 0..20 {
            assert!(sample_attack_onsets(0.0, 1000, seed).unwrap().is_empty());
        }
        assert!(matches!(sample_attack_onsets(-1.0, 10, 0), Err(Error::Domain(_))));
        assert!(sample_attack_onsets(1.0, 0, 0).is_err());
    }

    #[test]
    fn onsets_sorted_and_bounded() {
        let o = sample_attack_onsets(30.0, 120, 5).unwrap();
        assert!(!o.is_empty());
        assert!(o.windows(2).all(|w| w[0] <= w[1]));
        assert!(o.iter().all(|&m| m < 120));
    }

    #[test]
    fn zero_rate_injection_is_identity() {
        let s = generate_benign(&scenario(&[(ConditionLabel::Walking, 30)], 4)).unwrap();
        let ac = AttackConfig { rate_per_hour: 0.0, ..AttackConfig::default() };
        let out = inject_attacks(&s, &ac).unwrap();
        assert_eq!(out, s);
        assert!(out.events.is_empty());
    }

    #[test]
    fn dos_window_removes_readings_and_relabels() {
        let s = generate_benign(&scenario(&[(ConditionLabel::Walking, 30)], 4)).unwrap();
        let ev = AttackEvent {
            kind: ConditionLabel::DenialOfService,
            target: DeviceKind::PulseOximeter,
            onset_minute: 10,
            duration_minutes: 5,
        };
        let out = apply_events(&s, vec![ev], &mut seeded_rng(0, 1)).unwrap();
        let ox = out.device_readings(DeviceKind::PulseOximeter);
        assert!(ox.iter().all(|r| !(600..900).contains(&r.t_seconds)));
        assert_eq!(ox.len(), s.device_readings(DeviceKind::PulseOximeter).len() - 30);
        for m in 0..30 {
            let want = if (10..15).contains(&m) { ConditionLabel::DenialOfService } else { ConditionLabel::Walking };
            assert_eq!(out.ground_truth[m], want);
        }
        for &d in DeviceKind::ALL.iter().filter(|&&d| d != DeviceKind::PulseOximeter) {
            assert_eq!(out.device_readings(d), s.device_readings(d));
        }
    }

    #[test]
    fn tampering_forces_awake_during_sleep() {
        let s = generate_benign(&scenario(&[(ConditionLabel::Sleeping, 30)], 8)).unwrap();
        assert!(s
            .device_readings(DeviceKind::SleepMotionWatch)
            .iter()
            .all(|r| r.value(FeatureKind::SleepState) == Some(sleep_code::NREM)));
        let ev = AttackEvent {
            kind: ConditionLabel::TamperedDevice,
            target: DeviceKind::SleepMotionWatch,
            onset_minute: 5,
            duration_minutes: 10,
        };
        let out = apply_events(&s, vec![ev], &mut seeded_rng(0, 1)).unwrap();
        let watch = out.device_readings(DeviceKind::SleepMotionWatch);
        let last_motion = watch.iter().rev().find(|r| r.t_seconds < 300).unwrap().value(FeatureKind::MotionLevel);
        for r in watch.iter().filter(|r| (300..900).contains(&r.t_seconds)) {
            assert_eq!(r.value(FeatureKind::SleepState), Some(sleep_code::AWAKE));
            assert_eq!(r.value(FeatureKind::MotionLevel), last_motion);
        }
        assert_eq!(out.ground_truth[4], ConditionLabel::Sleeping);
        assert_eq!(out.ground_truth[5], ConditionLabel::TamperedDevice);
    }

    #[test]
    fn false_data_masks_or_fabricates() {
        let s = generate_benign(&scenario(&[(ConditionLabel::Exercise, 20), (ConditionLabel::Stress, 20)], 2)).unwrap();
        let ev = |onset| AttackEvent {
            kind: ConditionLabel::FalseDataInjection,
            target: DeviceKind::InsulinPump,
            onset_minute: onset,
            duration_minutes: 5,
        };
        let out = apply_events(&s, vec![ev(5), ev(25)], &mut seeded_rng(0, 1)).unwrap();
        let gl = out.device_readings(DeviceKind::InsulinPump);
        // Exercise depresses glucose; the forgery reports healthy values.
        for r in &gl[5..10] {
            assert!(in_nominal(FeatureKind::Glucose, r.value(FeatureKind::Glucose).unwrap()).unwrap());
        }
        // Stress leaves glucose alone; the forgery fabricates a low reading.
        for r in &gl[25..30] {
            assert!(r.value(FeatureKind::Glucose).unwrap() < nominal_range(FeatureKind::Glucose).lo);
        }
        assert_eq!(out.events.len(), 2);
    }

    #[test]
    fn same_kind_windows_on_same_device_merge() {
        let a = AttackEvent { kind: ConditionLabel::DenialOfService, target: DeviceKind::InsulinPump, onset_minute: 3, duration_minutes: 5 };
        let b = AttackEvent { onset_minute: 6, duration_minutes: 6, ..a };
        let c = AttackEvent { kind: ConditionLabel::FalseDataInjection, onset_minute: 4, duration_minutes: 2, ..a };
        let merged = merge_events(vec![b, c, a]);
        assert_eq!(merged.len(), 2);
        assert_eq!(merged[0], AttackEvent { onset_minute: 3, duration_minutes: 9, ..a });
    }

    #[test]
    fn overlap_label_goes_to_earliest_onset() {
        let s = generate_benign(&scenario(&[(ConditionLabel::Walking, 40)], 4)).unwrap();
        let dos = AttackEvent { kind: ConditionLabel::DenialOfService, target: DeviceKind::InsulinPump, onset_minute: 10, duration_minutes: 10 };
        let fdi = AttackEvent { kind: ConditionLabel::FalseDataInjection, target: DeviceKind::PulseOximeter, onset_minute: 5, duration_minutes: 10 };
        let out = apply_events(&s, vec![dos, fdi], &mut seeded_rng(0, 1)).unwrap();
        assert!(out.ground_truth[5..15].iter().all(|&l| l == ConditionLabel::FalseDataInjection));
        assert!(out.ground_truth[15..20].iter().all(|&l| l == ConditionLabel::DenialOfService));
        assert_eq!(out.ground_truth[20], ConditionLabel::Walking);
    }

    #[test]
    fn concurrent_incidents_carry_every_kind() {
        let s = generate_benign(&scenario(&[(ConditionLabel::Walking, 200)], 4)).unwrap();
        for seed in 0..10 {
            let ac = AttackConfig { seed, ..AttackConfig::default() };
            let out = inject_concurrent_attacks(&s, &ac, 3, 2).unwrap();
            for &k in ConditionLabel::ATTACKS {
                assert!(out.ground_truth.contains(&k), "seed {seed} lacks {k}");
            }
        }
        assert!(inject_concurrent_attacks(&s, &AttackConfig::default(), 4, 2).is_err());
    }

    #[test]
    fn default_rate_targets_fifteen_percent() {
        let r = rate_for_fraction(0.15, 5, 30);
        let covered = 1.0 - libm::exp(-r / 60.0 * 17.5);
        assert!((covered - 0.15).abs() < 1e-12);
    }
}
