//! Line-oriented `key = value` schema describing a survival CSV.
//!
//! ```text
//! # GBSG2
//! time = time
//! event = cens
//! event_values = 1
//! censored_values = 0
//! numeric = age, tsize, pnodes, progrec, estrec
//! categorical = menostat, tgrade
//! binary = horTh
//! standardize = true
//! ```
//!
//! Feature keys may repeat; columns keep the order in which they appear.
//! Column names are trimmed and may not contain `,` or `#`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    /// Real-valued, standardized when enabled.
    Numeric,
    /// One 0/1 column per level seen at fit time.
    Categorical,
    /// At most two levels, encoded as one 0/1 column.
    Binary,
    /// Already 0/1; passed through.
    Indicator,
}

impl ColumnKind {
    fn key(self) -> &'static str {
        match self {
            ColumnKind::Numeric => "numeric",
            ColumnKind::Categorical => "categorical",
            ColumnKind::Binary => "binary",
            ColumnKind::Indicator => "indicator",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub time_column: String,
    pub event_column: String,
    /// Event-column cells meaning an observed event.
    pub event_values: Vec<String>,
    /// Event-column cells meaning censoring.
    pub censored_values: Vec<String>,
    pub features: Vec<(String, ColumnKind)>,
    pub standardize: bool,
}

impl DatasetSchema {
    /// Schema with the default event coding (`1` event, `0` censored).
    pub fn new(time: &str, event: &str, features: Vec<(String, ColumnKind)>) -> Result<Self> {
        let schema = Self {
            time_column: time.into(),
            event_column: event.into(),
            event_values: vec!["1".into()],
            censored_values: vec!["0".into()],
            features,
            standardize: true,
        };
        schema
            .validate()
            .map_err(|message| Error::Schema { line: 0, message })?;
        Ok(schema)
    }

    fn validate(&self) -> std::result::Result<(), String> {
        let names = std::iter::once(&self.time_column)
            .chain(std::iter::once(&self.event_column))
            .chain(self.features.iter().map(|f| &f.0));
        let mut seen = std::collections::BTreeSet::new();
        for name in names {
            if !valid_name(name) {
                return Err(format!("invalid column name '{name}'"));
            }
            if !seen.insert(name.as_str()) {
                return Err(format!("column '{name}' listed more than once"));
            }
        }
        if self.features.is_empty() {
            return Err("no feature columns".into());
        }
        if self.event_values.is_empty() || self.censored_values.is_empty() {
            return Err("event_values and censored_values must be nonempty".into());
        }
        if let Some(v) = self
            .event_values
            .iter()
            .find(|v| self.censored_values.contains(v))
        {
            return Err(format!("'{v}' is both an event and a censored value"));
        }
        Ok(())
    }

    /// `Some(true)` for an event, `Some(false)` for censoring.
    pub fn event_status(&self, cell: &str) -> Option<bool> {
        let matches = |values: &[String]| {
            values.iter().any(|v| {
                v == cell
                    || matches!((v.parse::<f64>(), cell.parse::<f64>()), (Ok(a), Ok(b)) if a == b)
            })
        };
        if matches(&self.event_values) {
            Some(true)
        } else if matches(&self.censored_values) {
            Some(false)
        } else {
            None
        }
    }
}

fn valid_name(name: &str) -> bool {
    !name.is_empty() && name.trim() == name && !name.contains([',', '#', '\n', '\r'])
}

fn list(value: &str) -> Vec<String> {
    value.split(',').map(|s| s.trim().to_string()).collect()
}

impl FromStr for DatasetSchema {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut time = None;
        let mut event = None;
        let mut event_values = None;
        let mut censored_values = None;
        let mut standardize = None;
        let mut features = Vec::new();

        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let err = |message: String| Error::Schema {
                line: line_no,
                message,
            };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected 'key = value', got '{line}'")))?;
            let (key, value) = (key.trim(), value.trim());
            if value.is_empty() {
                return Err(err(format!("empty value for '{key}'")));
            }
            let set_once = |slot: &mut Option<String>| {
                if slot.replace(value.to_string()).is_some() {
                    Err(err(format!("'{key}' given more than once")))
                } else {
                    Ok(())
                }
            };
            let kind = match key {
                "time" => {
                    set_once(&mut time)?;
                    continue;
                }
                "event" => {
                    set_once(&mut event)?;
                    continue;
                }
                "event_values" | "censored_values" => {
                    let slot = if key == "event_values" {
                        &mut event_values
                    } else {
                        &mut censored_values
                    };
                    let values = list(value);
                    if values.iter().any(|v| v.is_empty()) {
                        return Err(err(format!("empty entry in '{key}'")));
                    }
                    if slot.replace(values).is_some() {
                        return Err(err(format!("'{key}' given more than once")));
                    }
                    continue;
                }
                "standardize" => {
                    let flag = match value {
                        "true" => true,
                        "false" => false,
                        _ => {
                            return Err(err(format!(
                                "standardize must be true or false, got '{value}'"
                            )))
                        }
                    };
                    if standardize.replace(flag).is_some() {
                        return Err(err("'standardize' given more than once".into()));
                    }
                    continue;
                }
                "numeric" => ColumnKind::Numeric,
                "categorical" => ColumnKind::Categorical,
                "binary" => ColumnKind::Binary,
                "indicator" => ColumnKind::Indicator,
                _ => return Err(err(format!("unknown key '{key}'"))),
            };
            for name in list(value) {
                if name.is_empty() {
                    return Err(err(format!("empty column name in '{key}'")));
                }
                features.push((name, kind));
            }
        }

        let end = text.lines().count().max(1);
        let missing = |what: &str| Error::Schema {
            line: end,
            message: format!("missing required key '{what}'"),
        };
        let schema = DatasetSchema {
            time_column: time.ok_or_else(|| missing("time"))?,
            event_column: event.ok_or_else(|| missing("event"))?,
            event_values: event_values.unwrap_or_else(|| vec!["1".into()]),
            censored_values: censored_values.unwrap_or_else(|| vec!["0".into()]),
            features,
            standardize: standardize.unwrap_or(true),
        };
        schema
            .validate()
            .map_err(|message| Error::Schema { line: end, message })?;
        Ok(schema)
    }
}

impl fmt::Display for DatasetSchema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "time = {}", self.time_column)?;
        writeln!(f, "event = {}", self.event_column)?;
        writeln!(f, "event_values = {}", self.event_values.join(", "))?;
        writeln!(f, "censored_values = {}", self.censored_values.join(", "))?;
        // consecutive columns of one kind share a line so order survives a reparse
        let mut start = 0;
        while start < self.features.len() {
            let kind = self.features[start].1;
            let end = self.features[start..]
                .iter()
                .position(|c| c.1 != kind)
                .map_or(self.features.len(), |p| start + p);
            let names: Vec<&str> = self.features[start..end]
                .iter()
                .map(|c| c.0.as_str())
                .collect();
            writeln!(f, "{} = {}", kind.key(), names.join(", "))?;
            start = end;
        }
        writeln!(f, "standardize = {}", self.standardize)
    }
}
