//! Device catalog, nominal vital-sign ranges and the condition effect tables.
//!
//! Everything here is constant data. The effect tables are transcribed per
//! monitoring column (ECG, BP, GL, ...) and translated to features, so a
//! column such as BP maps to both `Systolic` and `Diastolic`.

use alloc::string::String;
use core::fmt;
use core::str::FromStr;

use crate::error::{bail, Error, Result};

pub const NUM_FEATURES: usize = 12;
pub const NUM_DEVICES: usize = 8;
pub const NUM_CLASSES: usize = 15;
/// Width of a merged per-minute vector: feature values then availability flags.
pub const VECTOR_DIM: usize = NUM_FEATURES + NUM_DEVICES;

macro_rules! string_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum $name { $($variant),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn index(self) -> usize {
                self as usize
            }

            pub fn from_index(i: usize) -> Option<Self> {
                Self::ALL.get(i).copied()
            }

            pub fn name(self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                let s = s.trim();
                Self::ALL
                    .iter()
                    .copied()
                    .find(|v| v.name().eq_ignore_ascii_case(s))
                    .ok_or_else(|| Error::Domain(alloc::format!(
                        concat!("unknown ", stringify!($name), " '{}'"), s)))
            }
        }
    };
}

string_enum! {
    /// Physiological features of the merged per-minute vector, in column order.
    FeatureKind {
        HeartRate => "heart_rate",
        Systolic => "systolic",
        Diastolic => "diastolic",
        Glucose => "glucose",
        Spo2 => "spo2",
        Respiration => "respiration",
        SweatRate => "sweat_rate",
        Alcohol => "alcohol",
        Hemoglobin => "hemoglobin",
        EegDominantFreq => "eeg_dominant_freq",
        SleepState => "sleep_state",
        MotionLevel => "motion_level",
    }
}

string_enum! {
    /// The eight monitored devices.
    DeviceKind {
        HeartBpMonitor => "heart_bp_monitor",
        InsulinPump => "insulin_pump",
        PulseOximeter => "pulse_oximeter",
        RespSweatMonitor => "resp_sweat_monitor",
        AlcoholMonitor => "alcohol_monitor",
        HemoglobinMeter => "hemoglobin_meter",
        NeuralHeadset => "neural_headset",
        SleepMotionWatch => "sleep_motion_watch",
    }
}

string_enum! {
    /// Ground-truth class: seven activities, five diseases, three attacks.
    ConditionLabel {
        Sleeping => "Sleeping",
        Walking => "Walking",
        Stress => "Stress",
        Exercise => "Exercise",
        Drunk => "Drunk",
        HeartAttack => "HeartAttack",
        Stroke => "Stroke",
        HighBloodPressure => "HighBloodPressure",
        HighCholesterol => "HighCholesterol",
        ExcessiveSweating => "ExcessiveSweating",
        AbnormalOxygen => "AbnormalOxygen",
        AbnormalBloodSugar => "AbnormalBloodSugar",
        FalseDataInjection => "FalseDataInjection",
        TamperedDevice => "TamperedDevice",
        DenialOfService => "DenialOfService",
    }
}

/// Sleep-state codes carried in [`FeatureKind::SleepState`].
pub mod sleep_code {
    pub const AWAKE: f64 = 0.0;
    pub const NREM: f64 = 1.0;
    pub const REM: f64 = 2.0;
}

impl FeatureKind {
    pub fn device(self) -> DeviceKind {
        use FeatureKind::*;
        match self {
            HeartRate | Systolic | Diastolic => DeviceKind::HeartBpMonitor,
            Glucose => DeviceKind::InsulinPump,
            Spo2 => DeviceKind::PulseOximeter,
            Respiration | SweatRate => DeviceKind::RespSweatMonitor,
            Alcohol => DeviceKind::AlcoholMonitor,
            Hemoglobin => DeviceKind::HemoglobinMeter,
            EegDominantFreq => DeviceKind::NeuralHeadset,
            SleepState | MotionLevel => DeviceKind::SleepMotionWatch,
        }
    }

    /// Categorical features are aggregated by mode and drawn as integer codes.
    pub fn is_categorical(self) -> bool {
        self == FeatureKind::SleepState
    }

    /// Hard limits applied to every simulated value.
    pub fn physical_bounds(self) -> (f64, f64) {
        use FeatureKind::*;
        match self {
            HeartRate => (20.0, 250.0),
            Systolic => (50.0, 250.0),
            Diastolic => (30.0, 150.0),
            Glucose => (20.0, 600.0),
            Spo2 => (50.0, 100.0),
            Respiration => (4.0, 60.0),
            SweatRate => (0.0, 5.0),
            Alcohol => (0.0, 0.5),
            Hemoglobin => (3.0, 25.0),
            EegDominantFreq => (0.1, 50.0),
            SleepState => (sleep_code::AWAKE, sleep_code::REM),
            MotionLevel => (0.0, 1.0),
        }
    }
}

impl DeviceKind {
    /// Features owned by this device, in feature-column order.
    pub fn features(self) -> &'static [FeatureKind] {
        use FeatureKind::*;
        match self {
            DeviceKind::HeartBpMonitor => &[HeartRate, Systolic, Diastolic],
            DeviceKind::InsulinPump => &[Glucose],
            DeviceKind::PulseOximeter => &[Spo2],
            DeviceKind::RespSweatMonitor => &[Respiration, SweatRate],
            DeviceKind::AlcoholMonitor => &[Alcohol],
            DeviceKind::HemoglobinMeter => &[Hemoglobin],
            DeviceKind::NeuralHeadset => &[EegDominantFreq],
            DeviceKind::SleepMotionWatch => &[SleepState, MotionLevel],
        }
    }

    /// Native reporting period in seconds.
    pub fn period_seconds(self) -> u32 {
        match self {
            DeviceKind::HeartBpMonitor => 10,
            DeviceKind::PulseOximeter => 10,
            DeviceKind::RespSweatMonitor => 15,
            DeviceKind::NeuralHeadset => 10,
            DeviceKind::SleepMotionWatch => 30,
            DeviceKind::InsulinPump => 60,
            DeviceKind::AlcoholMonitor => 60,
            DeviceKind::HemoglobinMeter => 300,
        }
    }
}

impl ConditionLabel {
    pub const BENIGN: &'static [ConditionLabel] = &[
        ConditionLabel::Sleeping,
        ConditionLabel::Walking,
        ConditionLabel::Stress,
        ConditionLabel::Exercise,
        ConditionLabel::Drunk,
        ConditionLabel::HeartAttack,
        ConditionLabel::Stroke,
        ConditionLabel::HighBloodPressure,
        ConditionLabel::HighCholesterol,
        ConditionLabel::ExcessiveSweating,
        ConditionLabel::AbnormalOxygen,
        ConditionLabel::AbnormalBloodSugar,
    ];
    pub const ATTACKS: &'static [ConditionLabel] = &[
        ConditionLabel::FalseDataInjection,
        ConditionLabel::TamperedDevice,
        ConditionLabel::DenialOfService,
    ];

    pub fn is_benign(self) -> bool {
        self.index() < ConditionLabel::FalseDataInjection.index()
    }

    pub fn is_malicious(self) -> bool {
        !self.is_benign()
    }

    pub fn is_activity(self) -> bool {
        self.index() <= ConditionLabel::Stroke.index()
    }

    pub fn is_disease(self) -> bool {
        self.is_benign() && !self.is_activity()
    }
}

/// A set of devices stored as a bit mask over [`DeviceKind`] indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct DeviceSet(u8);

impl DeviceSet {
    pub const fn empty() -> Self {
        DeviceSet(0)
    }

    pub const fn all() -> Self {
        DeviceSet(0xff)
    }

    pub fn from_bits(bits: u8) -> Self {
        DeviceSet(bits)
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn contains(self, d: DeviceKind) -> bool {
        self.0 & (1 << d.index()) != 0
    }

    pub fn insert(&mut self, d: DeviceKind) {
        self.0 |= 1 << d.index();
    }

    pub fn remove(&mut self, d: DeviceKind) {
        self.0 &= !(1 << d.index());
    }

    pub fn without(mut self, d: DeviceKind) -> Self {
        self.remove(d);
        self
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = DeviceKind> {
        DeviceKind::ALL.iter().copied().filter(move |d| self.contains(*d))
    }
}

impl FromIterator<DeviceKind> for DeviceSet {
    fn from_iter<I: IntoIterator<Item = DeviceKind>>(iter: I) -> Self {
        let mut s = DeviceSet::empty();
        for d in iter {
            s.insert(d);
        }
        s
    }
}

/// A set of features stored as a bit mask over [`FeatureKind`] indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct FeatureSet(u16);

impl FeatureSet {
    pub const fn empty() -> Self {
        FeatureSet(0)
    }

    pub fn contains(self, f: FeatureKind) -> bool {
        self.0 & (1 << f.index()) != 0
    }

    pub fn insert(&mut self, f: FeatureKind) {
        self.0 |= 1 << f.index();
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn is_subset(self, other: FeatureSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = FeatureKind> {
        FeatureKind::ALL.iter().copied().filter(move |f| self.contains(*f))
    }
}

impl FromIterator<FeatureKind> for FeatureSet {
    fn from_iter<I: IntoIterator<Item = FeatureKind>>(iter: I) -> Self {
        let mut s = FeatureSet::empty();
        for f in iter {
            s.insert(f);
        }
        s
    }
}

/// Closed, open or half-open real interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueRange {
    pub lo: f64,
    pub hi: f64,
    pub lo_inclusive: bool,
    pub hi_inclusive: bool,
}

impl ValueRange {
    pub fn new(lo: f64, hi: f64, lo_inclusive: bool, hi_inclusive: bool) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo > hi {
            bail!(Domain, "invalid range [{lo}, {hi}]");
        }
        if lo == hi && !(lo_inclusive && hi_inclusive) {
            bail!(Domain, "degenerate range at {lo} must be closed");
        }
        Ok(ValueRange { lo, hi, lo_inclusive, hi_inclusive })
    }

    pub const fn closed(lo: f64, hi: f64) -> Self {
        ValueRange { lo, hi, lo_inclusive: true, hi_inclusive: true }
    }

    pub fn contains(&self, v: f64) -> bool {
        let above = if self.lo_inclusive { v >= self.lo } else { v > self.lo };
        let below = if self.hi_inclusive { v <= self.hi } else { v < self.hi };
        above && below
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Healthy reference interval for a feature.
pub fn nominal_range(feature: FeatureKind) -> ValueRange {
    use FeatureKind::*;
    match feature {
        HeartRate => ValueRange::closed(60.0, 100.0),
        Systolic => ValueRange::closed(90.0, 120.0),
        Diastolic => ValueRange::closed(60.0, 80.0),
        Glucose => ValueRange::closed(70.0, 130.0),
        Spo2 => ValueRange::closed(94.0, 99.0),
        Respiration => ValueRange::closed(12.0, 20.0),
        SweatRate => ValueRange::closed(0.1, 0.5),
        // 0.08 g/dl is the legal limit, so it is already out of range.
        Alcohol => ValueRange { lo: 0.0, hi: 0.08, lo_inclusive: true, hi_inclusive: false },
        Hemoglobin => ValueRange::closed(12.3, 17.5),
        EegDominantFreq => ValueRange::closed(0.5, 24.0),
        SleepState => ValueRange::closed(sleep_code::AWAKE, sleep_code::REM),
        MotionLevel => ValueRange::closed(0.1, 0.5),
    }
}

pub fn in_nominal(feature: FeatureKind, value: f64) -> Result<bool> {
    if !value.is_finite() {
        bail!(Domain, "non-finite value {value} for {feature}");
    }
    Ok(nominal_range(feature).contains(value))
}

/// Direction in which a condition pushes an affected feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Shift {
    High,
    Low,
}

impl Shift {
    pub fn mark(self) -> char {
        match self {
            Shift::High => 'H',
            Shift::Low => 'L',
        }
    }
}

/// Monitoring columns of the effect tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Column {
    Ecg,
    Sw,
    Bp,
    Gl,
    Br,
    Ox,
    Sl,
    Hg,
    Al,
    Na,
    Hm,
}

impl Column {
    fn features(self) -> &'static [FeatureKind] {
        use FeatureKind::*;
        match self {
            Column::Ecg => &[HeartRate],
            Column::Sw => &[SweatRate],
            Column::Bp => &[Systolic, Diastolic],
            Column::Gl => &[Glucose],
            Column::Br => &[Respiration],
            Column::Ox => &[Spo2],
            Column::Sl => &[SleepState],
            Column::Hg => &[Hemoglobin],
            Column::Al => &[Alcohol],
            Column::Na => &[EegDominantFreq],
            Column::Hm => &[MotionLevel],
        }
    }
}

fn checked_columns(condition: ConditionLabel) -> Option<&'static [Column]> {
    use Column::*;
    use ConditionLabel as C;
    let cols: &'static [Column] = match condition {
        C::Sleeping => &[Ecg, Bp, Gl, Br, Ox],
        C::Walking => &[Ecg, Gl, Br, Ox, Sw, Hm, Hg, Na],
        C::Stress => &[Ecg, Bp, Br, Sw, Na],
        C::Exercise => &[Ecg, Bp, Gl, Br, Ox, Sw, Hm, Na],
        C::Drunk => &[Bp, Gl, Br, Al],
        C::HeartAttack => &[Ecg, Br, Sw, Na],
        C::Stroke => &[Ecg, Bp, Hm, Hg, Na],
        C::HighBloodPressure => &[Sw, Bp, Gl, Ox, Sl, Hg, Al, Na],
        C::HighCholesterol => &[Sw, Bp, Gl, Ox, Hg, Na],
        C::ExcessiveSweating => &[Ecg, Sw, Bp, Gl, Ox, Hg, Na, Hm],
        C::AbnormalOxygen => &[Ecg, Bp, Gl, Br, Ox, Sl, Na, Hm],
        C::AbnormalBloodSugar => &[Ecg, Sw, Bp, Gl, Ox, Hg, Na],
        C::FalseDataInjection | C::TamperedDevice | C::DenialOfService => return None,
    };
    Some(cols)
}

/// Features a benign condition moves out of nominal.
pub fn affected_features(condition: ConditionLabel) -> Result<FeatureSet> {
    let cols = checked_columns(condition)
        .ok_or_else(|| Error::Domain(alloc::format!("{condition} has no effect entry")))?;
    Ok(cols.iter().flat_map(|c| c.features().iter().copied()).collect())
}

/// Affected features of a benign condition together with their shift direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectEntry {
    pub condition: ConditionLabel,
    pub affected: FeatureSet,
}

impl EffectEntry {
    pub fn for_condition(condition: ConditionLabel) -> Result<Self> {
        Ok(EffectEntry { condition, affected: affected_features(condition)? })
    }

    /// `None` when the feature is not affected.
    pub fn direction(&self, feature: FeatureKind) -> Option<Shift> {
        if !self.affected.contains(feature) {
            return None;
        }
        use ConditionLabel as C;
        use FeatureKind as F;
        let low = matches!(
            (self.condition, feature),
            (C::Exercise, F::Glucose | F::Spo2 | F::Hemoglobin)
                | (C::Sleeping, F::HeartRate | F::Respiration)
        );
        Some(if low { Shift::Low } else { Shift::High })
    }
}

/// Effect matrix as CSV: one row per benign condition, H/L/- per feature.
pub fn effects_csv() -> String {
    let mut out = String::from("condition");
    for f in FeatureKind::ALL {
        out.push(',');
        out.push_str(f.name());
    }
    out.push('\n');
    for &c in ConditionLabel::BENIGN {
        let entry = EffectEntry::for_condition(c).expect("benign condition");
        out.push_str(c.name());
        for &f in FeatureKind::ALL {
            out.push(',');
            out.push(entry.direction(f).map_or('-', Shift::mark));
        }
        out.push('\n');
    }
    out
}

/// Nominal and physical ranges as CSV, one row per feature.
pub fn ranges_csv() -> String {
    use core::fmt::Write;
    let mut out = String::from("feature,device,nominal_lo,nominal_hi,lo_inclusive,hi_inclusive,physical_lo,physical_hi\n");
    for &f in FeatureKind::ALL {
        let r = nominal_range(f);
        let (plo, phi) = f.physical_bounds();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            f, f.device(), r.lo, r.hi, r.lo_inclusive, r.hi_inclusive, plo, phi
        );
    }
    out
}
