//! `key = value` run configuration.
//!
//! ```text
//! # one patient day, every benign condition
//! segments = Sleeping:120, Walking:60, Stress:30
//! devices = all
//! rate_per_hour = auto
//! knn_k = 7
//! ```

use std::collections::HashSet;
use std::path::Path;

use healthguard_core::classifiers::Hyperparams;
use healthguard_core::domain::{ConditionLabel, DeviceKind, DeviceSet};
use healthguard_core::simulator::{rate_for_fraction, DatasetConfig, Segment, DEFAULT_MALICIOUS_FRACTION};

use crate::error::{CliError, ConfigError};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub hyperparams: Hyperparams,
}

fn list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn number<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::at(line, format!("{key}: cannot parse '{value}'")))
}

fn segments(line: usize, value: &str) -> Result<Vec<Segment>, ConfigError> {
    list(value)
        .map(|item| {
            let (cond, minutes) = item
                .split_once(':')
                .ok_or_else(|| ConfigError::at(line, format!("segment '{item}' is not Condition:minutes")))?;
            let condition: ConditionLabel = cond.parse().map_err(|e| ConfigError::at(line, e))?;
            Ok(Segment { condition, minutes: number(line, "segments", minutes.trim())? })
        })
        .collect()
}

fn devices(line: usize, value: &str) -> Result<DeviceSet, ConfigError> {
    if value.eq_ignore_ascii_case("all") {
        return Ok(DeviceSet::all());
    }
    list(value).map(|d| d.parse::<DeviceKind>().map_err(|e| ConfigError::at(line, e))).collect()
}

fn boolean(line: usize, key: &str, value: &str) -> Result<bool, ConfigError> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(ConfigError::at(line, format!("{key}: expected true or false, got '{value}'"))),
    }
}

/// Parses config text. Unset keys keep their defaults; `rate_per_hour = auto`
/// (or leaving it unset) targets the default malicious fraction for the configured durations.
pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
    let mut cfg = RunConfig::default();
    let mut rate: Option<f64> = None;
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| ConfigError::at(line, format!("expected key = value, got '{content}'")))?;
        let (key, value) = (key.trim(), value.trim());
        if !seen.insert(key.to_string()) {
            return Err(ConfigError::at(line, format!("duplicate key '{key}'")));
        }
        let d = &mut cfg.dataset;
        match key {
            "segments" => d.scenario.segments = segments(line, value)?,
            "seed" => {
                let seed = number(line, key, value)?;
                d.scenario.seed = seed;
                d.attack.seed = seed;
            }
            "devices" => d.scenario.enabled_devices = devices(line, value)?,
            "noise_scale" => d.scenario.noise_scale = number(line, key, value)?,
            "rate_per_hour" if value.eq_ignore_ascii_case("auto") => rate = None,
            "rate_per_hour" => rate = Some(number(line, key, value)?),
            "duration_min" => d.attack.duration_min = number(line, key, value)?,
            "duration_max" => d.attack.duration_max = number(line, key, value)?,
            "threats" => {
                d.attack.enabled_threats =
                    list(value).map(|t| t.parse().map_err(|e| ConfigError::at(line, e))).collect::<Result<_, _>>()?;
            }
            "streams" => d.streams = number(line, key, value)?,
            "shuffle" => d.shuffle_segments = boolean(line, key, value)?,
            "tamper_target" if value.eq_ignore_ascii_case("none") => d.attack.tamper_target = None,
            "tamper_target" => d.attack.tamper_target = Some(value.parse().map_err(|e| ConfigError::at(line, e))?),
            _ if Hyperparams::KEYS.contains(&key) => {
                cfg.hyperparams.set(key, value).map_err(|e| ConfigError::at(line, e))?;
            }
            _ => return Err(ConfigError::at(line, format!("unknown key '{key}'"))),
        }
    }
    let a = &mut cfg.dataset.attack;
    a.rate_per_hour = rate.unwrap_or_else(|| rate_for_fraction(DEFAULT_MALICIOUS_FRACTION, a.duration_min, a.duration_max));
    let whole = |e: healthguard_core::Error| ConfigError { line: None, message: e.to_string() };
    cfg.dataset.validate().map_err(whole)?;
    let horizon = cfg.dataset.scenario.total_minutes();
    if cfg.dataset.attack.duration_max as usize > horizon {
        return Err(ConfigError { line: None, message: format!("duration_max exceeds the {horizon}-minute scenario") });
    }
    cfg.hyperparams.validate().map_err(whole)?;
    Ok(cfg)
}

/// Reads and parses a config file; a missing file is a config error, not an I/O one.
pub fn load(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config {
        path: path.to_path_buf(),
        source: ConfigError { line: None, message: format!("cannot read config: {e}") },
    })?;
    parse(&text).map_err(|source| CliError::Config { path: path.to_path_buf(), source })
}
