//! Alerts raised for malicious predictions.
//!
//! One line per alert: `minute,<kind>,<confidence>,<device>,<message>`.

use std::fmt;

use healthguard_core::classifiers::{Model, Prediction};
use healthguard_core::domain::{nominal_range, ConditionLabel, DeviceKind};
use healthguard_core::pipeline::FeatureVector;

#[derive(Debug, Clone, PartialEq)]
pub struct Alert {
    pub minute: u32,
    pub kind: ConditionLabel,
    pub confidence: f64,
    pub device: DeviceKind,
    pub message: String,
}

impl fmt::Display for Alert {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{:.4},{},{}", self.minute, self.kind, self.confidence, self.device, self.message)
    }
}

/// Whether `device` would normally deliver a reading during `minute`.
fn expected_in(device: DeviceKind, minute: u32) -> bool {
    let p = device.period_seconds() as u64;
    let start = minute as u64 * 60;
    start.div_ceil(p) * p < start + 60
}

/// Largest standardized distance from the nominal midpoint over the device's features.
fn deviation(model: &Model, v: &FeatureVector, device: DeviceKind) -> f64 {
    device
        .features()
        .iter()
        .map(|&f| {
            let j = f.index();
            (v.values[j] - nominal_range(f).midpoint()).abs() / model.standardizer.std[j]
        })
        .fold(0.0, f64::max)
}

/// A device that missed a reading it was due to send; otherwise the most deviant one.
pub fn implicated_device(model: &Model, v: &FeatureVector) -> (DeviceKind, Option<f64>) {
    if let Some(d) = DeviceKind::ALL.iter().copied().find(|&d| !v.available(d) && expected_in(d, v.minute)) {
        return (d, None);
    }
    let mut best = (DeviceKind::ALL[0], f64::NEG_INFINITY);
    for &d in DeviceKind::ALL {
        let dev = deviation(model, v, d);
        if dev > best.1 {
            best = (d, dev);
        }
    }
    (best.0, Some(best.1))
}

/// `None` for benign predictions.
pub fn alert_for(model: &Model, v: &FeatureVector, p: &Prediction) -> Option<Alert> {
    if !p.label.is_malicious() {
        return None;
    }
    let (device, dev) = implicated_device(model, v);
    let message = match dev {
        None => format!("{} suspected: {device} missed its scheduled reading", p.label),
        Some(z) => format!("{} suspected: {device} reads {z:.1} sd from nominal", p.label),
    };
    Some(Alert { minute: v.minute, kind: p.label, confidence: p.confidence(), device, message })
}
