//! One TOML file drives the whole pipeline. Section and key names mirror
//! the config structs exactly, so a run is replayable from one artifact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bench::BenchConfig;
use crate::error::{Error, Result};
use crate::optics::OpticsConfig;
use crate::scan::{ScanPlan, TimingModel};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Settings {
    pub optics: OpticsConfig,
    pub scan: ScanPlan,
    pub timing: TimingModel,
    pub bench: BenchConfig,
}

impl Settings {
    pub fn validate(&self) -> Result<()> {
        self.optics.validate()?;
        self.scan.validate()?;
        self.timing.validate()?;
        self.bench.validate()
    }
}

pub fn load_settings(path: &Path) -> Result<Settings> {
    let text = fs::read_to_string(path)?;
    Ok(toml::from_str(&text)?)
}

fn parse_scalar(raw: &str) -> toml::Value {
    if let Ok(b) = raw.parse::<bool>() {
        return toml::Value::Boolean(b);
    }
    if let Ok(i) = raw.parse::<i64>() {
        return toml::Value::Integer(i);
    }
    if let Ok(f) = raw.parse::<f64>() {
        return toml::Value::Float(f);
    }
    // Arrays and quoted strings arrive in TOML syntax, e.g. ratios=[1,3].
    if let Ok(table) = format!("v = {raw}").parse::<toml::Table>() {
        if let Some(v) = table.get("v") {
            return v.clone();
        }
    }
    toml::Value::String(raw.to_string())
}

fn set_path(root: &mut toml::Table, dotted: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = dotted.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::InvalidConfig(format!("bad override key '{dotted}'")));
    }
    let mut table = root;
    for part in &parts[..parts.len() - 1] {
        table = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| {
                Error::InvalidConfig(format!("'{part}' in '{dotted}' is not a table"))
            })?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Apply `section.key=value` overrides on top of existing settings.
/// Values are parsed as bool, integer, float, TOML literal (arrays, quoted
/// strings), then bare string, in that order.
pub fn apply_overrides(settings: &Settings, overrides: &[(String, String)]) -> Result<Settings> {
    if overrides.is_empty() {
        return Ok(settings.clone());
    }
    let value =
        toml::Value::try_from(settings).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut root = match value {
        toml::Value::Table(t) => t,
        _ => return Err(Error::InvalidConfig("settings did not serialize to a table".into())),
    };
    for (key, raw) in overrides {
        set_path(&mut root, key, parse_scalar(raw))?;
    }
    Ok(toml::Value::Table(root).try_into()?)
}

/// Split a `key=value` argument.
pub fn parse_override(arg: &str) -> Result<(String, String)> {
    match arg.split_once('=') {
        Some((k, v)) if !k.is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => Err(Error::InvalidConfig(format!(
            "override '{arg}' is not of the form key=value"
        ))),
    }
}
