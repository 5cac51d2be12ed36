//! Dataset files: a header row, then one row per minute.
//!
//! Columns are `minute`, the twelve feature names, `avail_<device>` for the
//! eight devices, and `label`. Reals carry six decimals.

use std::io::{Read, Write};
use std::path::Path;

use healthguard_core::domain::{
    nominal_range, ConditionLabel, DeviceKind, DeviceSet, FeatureKind, NUM_DEVICES, NUM_FEATURES,
};
use healthguard_core::pipeline::{FeatureVector, LabeledDataset, LabeledInstance};

use crate::error::CliError;

pub fn header() -> Vec<String> {
    let mut h = vec!["minute".to_string()];
    h.extend(FeatureKind::ALL.iter().map(|f| f.name().to_string()));
    h.extend(DeviceKind::ALL.iter().map(|d| format!("avail_{}", d.name())));
    h.push("label".into());
    h
}

pub fn write<W: Write>(out: W, instances: &[LabeledInstance]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header())?;
    let mut row: Vec<String> = Vec::with_capacity(1 + NUM_FEATURES + NUM_DEVICES + 1);
    for inst in instances {
        let v = &inst.vector;
        row.clear();
        row.push(v.minute.to_string());
        row.extend(v.values.iter().map(|x| format!("{x:.6}")));
        row.extend(v.availability.iter().map(|&a| if a { "1" } else { "0" }.to_string()));
        row.push(inst.label.name().to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_bytes(instances: &[LabeledInstance]) -> Vec<u8> {
    let mut buf = Vec::new();
    write(&mut buf, instances).expect("writing to memory cannot fail");
    buf
}

/// Schema problem at a 1-based file line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchemaError {
    pub line: u64,
    pub message: String,
}

impl std::fmt::Display for SchemaError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

fn schema(line: u64, message: impl Into<String>) -> SchemaError {
    SchemaError { line, message: message.into() }
}

/// Parses every row; an input with only a header yields no instances.
pub fn read<R: Read>(input: R) -> Result<Vec<LabeledInstance>, SchemaError> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let expected = header();
    let got = r.headers().map_err(|e| schema(1, e.to_string()))?;
    if got.iter().ne(expected.iter().map(String::as_str)) {
        return Err(schema(1, format!("header does not match the dataset schema (expected {})", expected.join(","))));
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| schema(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let real = |i: usize| -> Result<f64, SchemaError> {
            let s = &rec[i];
            match s.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(schema(line, format!("column {} holds '{s}', not a finite number", expected[i]))),
            }
        };
        let minute = rec[0].parse().map_err(|_| schema(line, format!("minute '{}' is not an integer", &rec[0])))?;
        let mut values = [0.0; NUM_FEATURES];
        for (j, v) in values.iter_mut().enumerate() {
            *v = real(1 + j)?;
        }
        let mut availability = [false; NUM_DEVICES];
        for (d, a) in availability.iter_mut().enumerate() {
            let col = 1 + NUM_FEATURES + d;
            *a = match &rec[col] {
                "1" => true,
                "0" => false,
                s => return Err(schema(line, format!("column {} holds '{s}', expected 0 or 1", expected[col]))),
            };
        }
        let label: ConditionLabel = rec[expected.len() - 1].parse().map_err(|e| schema(line, format!("{e}")))?;
        out.push(LabeledInstance { vector: FeatureVector { minute, values, availability }, label });
    }
    Ok(out)
}

/// Devices whose columns are pinned at the nominal midpoint and always available,
/// which is how masked-out devices are written.
pub fn infer_mask(instances: &[LabeledInstance]) -> DeviceSet {
    DeviceKind::ALL
        .iter()
        .copied()
        .filter(|&d| {
            instances.is_empty()
                || !instances.iter().all(|i| {
                    i.vector.availability[d.index()]
                        && d.features().iter().all(|&f| {
                            let mid = format!("{:.6}", nominal_range(f).midpoint());
                            format!("{:.6}", i.vector.values[f.index()]) == mid
                        })
                })
        })
        .collect()
}

pub fn save(path: &Path, instances: &[LabeledInstance]) -> Result<(), CliError> {
    std::fs::write(path, to_bytes(instances)).map_err(|e| CliError::io(path, e))
}

pub fn load_instances(path: &Path) -> Result<Vec<LabeledInstance>, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    read(std::io::BufReader::new(file)).map_err(|e| CliError::format(path, e))
}

pub fn load(path: &Path) -> Result<LabeledDataset, CliError> {
    let instances = load_instances(path)?;
    let mask = infer_mask(&instances);
    LabeledDataset::new(instances, mask).map_err(|e| CliError::format(path, e))
}
