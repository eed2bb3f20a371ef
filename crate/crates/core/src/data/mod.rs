//! CSV ingestion: schema-driven parsing, encoding of categorical columns,
//! standardization, splitting and export.

mod schema;

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::survival::{FeatureKind, Sample, SurvivalDataset};

pub use schema::{ColumnKind, DatasetSchema};

const MAX_SPLIT_ATTEMPTS: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub enum RawColumn {
    Numbers(Vec<f64>),
    Levels(Vec<String>),
}

/// Parsed but not yet encoded CSV contents.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    pub schema: DatasetSchema,
    pub times: Vec<f64>,
    pub events: Vec<bool>,
    /// One entry per schema feature, in schema order.
    pub columns: Vec<RawColumn>,
    /// Data rows dropped for a missing time or event.
    pub dropped: usize,
}

fn is_missing(cell: &str) -> bool {
    cell.is_empty() || cell == "NA"
}

impl RawDataset {
    pub fn from_reader<R: Read>(reader: R, schema: &DatasetSchema) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        let position = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Data(format!("missing column '{name}'")))
        };
        let time_at = position(&schema.time_column)?;
        let event_at = position(&schema.event_column)?;
        let feature_at: Vec<usize> = schema
            .features
            .iter()
            .map(|(name, _)| position(name))
            .collect::<Result<_>>()?;

        let mut times = Vec::new();
        let mut events = Vec::new();
        let mut columns: Vec<RawColumn> = schema
            .features
            .iter()
            .map(|(_, kind)| match kind {
                ColumnKind::Numeric | ColumnKind::Indicator => RawColumn::Numbers(Vec::new()),
                ColumnKind::Categorical | ColumnKind::Binary => RawColumn::Levels(Vec::new()),
            })
            .collect();
        let mut dropped = 0;

        for (r, record) in rdr.records().enumerate() {
            let record = record?;
            let row = r + 1;
            let cell = |i: usize| record.get(i).unwrap_or("");
            let (time_cell, event_cell) = (cell(time_at), cell(event_at));
            if is_missing(time_cell) || is_missing(event_cell) {
                log::warn!("row {row}: missing time or event, dropped");
                dropped += 1;
                continue;
            }
            let time: f64 = time_cell
                .parse()
                .map_err(|_| Error::Data(format!("row {row}: unparseable time '{time_cell}'")))?;
            if !(time.is_finite() && time >= 0.0) {
                return Err(Error::Data(format!("row {row}: invalid time {time}")));
            }
            let event = schema.event_status(event_cell).ok_or_else(|| {
                Error::Data(format!(
                    "row {row}: unrecognized event value '{event_cell}'"
                ))
            })?;
            for (k, ((name, kind), column)) in schema.features.iter().zip(&mut columns).enumerate()
            {
                let value = cell(feature_at[k]);
                if is_missing(value) {
                    return Err(Error::Data(format!(
                        "row {row}: missing value in column '{name}'"
                    )));
                }
                match column {
                    RawColumn::Numbers(values) => {
                        let v: f64 = value.parse().map_err(|_| {
                            Error::Data(format!(
                                "row {row}: unparseable value '{value}' in column '{name}'"
                            ))
                        })?;
                        if !v.is_finite() {
                            return Err(Error::Data(format!(
                                "row {row}: non-finite value in column '{name}'"
                            )));
                        }
                        if *kind == ColumnKind::Indicator && v != 0.0 && v != 1.0 {
                            return Err(Error::Data(format!(
                                "row {row}: indicator column '{name}' holds {v}, expected 0 or 1"
                            )));
                        }
                        values.push(v);
                    }
                    RawColumn::Levels(levels) => levels.push(value.to_string()),
                }
            }
            times.push(time);
            events.push(event);
        }
        if dropped > 0 {
            log::warn!("{dropped} rows dropped for missing time or event");
        }
        Ok(Self {
            schema: schema.clone(),
            times,
            events,
            columns,
            dropped,
        })
    }

    pub fn from_path(path: &Path, schema: &DatasetSchema) -> Result<Self> {
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Data(format!("cannot open '{}': {e}", path.display())))?;
        Self::from_reader(file, schema)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            schema: self.schema.clone(),
            times: indices.iter().map(|&i| self.times[i]).collect(),
            events: indices.iter().map(|&i| self.events[i]).collect(),
            columns: self
                .columns
                .iter()
                .map(|c| match c {
                    RawColumn::Numbers(v) => {
                        RawColumn::Numbers(indices.iter().map(|&i| v[i]).collect())
                    }
                    RawColumn::Levels(v) => {
                        RawColumn::Levels(indices.iter().map(|&i| v[i].clone()).collect())
                    }
                })
                .collect(),
            dropped: 0,
        }
    }
}

/// Fitted column transforms, learned from one split and reused on others.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EncodedColumn {
    Numeric {
        name: String,
        mean: f64,
        std: f64,
    },
    Indicator {
        name: String,
    },
    Categorical {
        name: String,
        levels: Vec<String>,
    },
    /// `levels[1]` (when present) encodes as 1.
    Binary {
        name: String,
        levels: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub columns: Vec<EncodedColumn>,
}

impl Encoder {
    /// Population mean/std per numeric column (std 0 is replaced by 1) and
    /// sorted level lists per categorical column.
    pub fn fit(raw: &RawDataset) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::Data("cannot fit an encoder on zero rows".into()));
        }
        let columns = raw
            .schema
            .features
            .iter()
            .zip(&raw.columns)
            .map(|((name, kind), column)| {
                let name = name.clone();
                Ok(match (kind, column) {
                    (ColumnKind::Numeric, RawColumn::Numbers(v)) => {
                        let (mean, std) = if raw.schema.standardize {
                            let n = v.len() as f64;
                            let mean = v.iter().sum::<f64>() / n;
                            let std =
                                (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
                            (mean, if std > 0.0 { std } else { 1.0 })
                        } else {
                            (0.0, 1.0)
                        };
                        EncodedColumn::Numeric { name, mean, std }
                    }
                    (ColumnKind::Indicator, RawColumn::Numbers(_)) => {
                        EncodedColumn::Indicator { name }
                    }
                    (ColumnKind::Categorical, RawColumn::Levels(v)) => EncodedColumn::Categorical {
                        name,
                        levels: distinct(v),
                    },
                    (ColumnKind::Binary, RawColumn::Levels(v)) => {
                        let levels = distinct(v);
                        if levels.len() > 2 {
                            return Err(Error::Data(format!(
                                "binary column '{name}' has {} levels: {}",
                                levels.len(),
                                levels.join(", ")
                            )));
                        }
                        EncodedColumn::Binary { name, levels }
                    }
                    _ => {
                        return Err(Error::Data(format!(
                            "column '{name}' does not match its kind"
                        )))
                    }
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { columns })
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.columns
            .iter()
            .flat_map(|c| match c {
                EncodedColumn::Numeric { name, .. }
                | EncodedColumn::Indicator { name }
                | EncodedColumn::Binary { name, .. } => vec![name.clone()],
                EncodedColumn::Categorical { name, levels } => {
                    levels.iter().map(|l| format!("{name}={l}")).collect()
                }
            })
            .collect()
    }

    pub fn feature_kinds(&self) -> Vec<FeatureKind> {
        self.columns
            .iter()
            .flat_map(|c| match c {
                EncodedColumn::Numeric { .. } => vec![FeatureKind::Numeric],
                EncodedColumn::Categorical { levels, .. } => {
                    vec![FeatureKind::Indicator; levels.len()]
                }
                _ => vec![FeatureKind::Indicator],
            })
            .collect()
    }

    /// Encoded width.
    pub fn m(&self) -> usize {
        self.feature_names().len()
    }

    /// Encodes one row given as raw cells, one per schema feature.
    pub fn encode_row(&self, cells: &[&str]) -> Result<Vec<f64>> {
        if cells.len() != self.columns.len() {
            return Err(Error::DimensionMismatch {
                expected: self.columns.len(),
                got: cells.len(),
            });
        }
        let mut row = Vec::with_capacity(self.m());
        for (enc, cell) in self.columns.iter().zip(cells) {
            let cell = cell.trim();
            let number = |name: &str| {
                cell.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        Error::Data(format!("unparseable value '{cell}' for column '{name}'"))
                    })
            };
            match enc {
                EncodedColumn::Numeric { name, mean, std } => {
                    row.push((number(name)? - mean) / std)
                }
                EncodedColumn::Indicator { name } => {
                    let v = number(name)?;
                    if v != 0.0 && v != 1.0 {
                        return Err(Error::Data(format!(
                            "indicator column '{name}' needs 0 or 1, got {v}"
                        )));
                    }
                    row.push(v);
                }
                EncodedColumn::Categorical { name, levels } => {
                    let at = lookup(levels, cell, name, None)?;
                    row.extend((0..levels.len()).map(|l| if l == at { 1.0 } else { 0.0 }));
                }
                EncodedColumn::Binary { name, levels } => {
                    row.push(lookup(levels, cell, name, None)? as f64)
                }
            }
        }
        Ok(row)
    }

    pub fn transform(&self, raw: &RawDataset) -> Result<SurvivalDataset> {
        if raw.columns.len() != self.columns.len() {
            return Err(Error::DimensionMismatch {
                expected: self.columns.len(),
                got: raw.columns.len(),
            });
        }
        let mut rows = vec![Vec::with_capacity(self.m()); raw.len()];
        for (enc, column) in self.columns.iter().zip(&raw.columns) {
            match (enc, column) {
                (EncodedColumn::Numeric { mean, std, .. }, RawColumn::Numbers(v)) => {
                    for (row, x) in rows.iter_mut().zip(v) {
                        row.push((x - mean) / std);
                    }
                }
                (EncodedColumn::Indicator { .. }, RawColumn::Numbers(v)) => {
                    for (row, x) in rows.iter_mut().zip(v) {
                        row.push(*x);
                    }
                }
                (EncodedColumn::Categorical { name, levels }, RawColumn::Levels(v)) => {
                    for (i, (row, level)) in rows.iter_mut().zip(v).enumerate() {
                        let at = lookup(levels, level, name, Some(i))?;
                        row.extend((0..levels.len()).map(|l| if l == at { 1.0 } else { 0.0 }));
                    }
                }
                (EncodedColumn::Binary { name, levels }, RawColumn::Levels(v)) => {
                    for (i, (row, level)) in rows.iter_mut().zip(v).enumerate() {
                        row.push(lookup(levels, level, name, Some(i))? as f64);
                    }
                }
                _ => {
                    return Err(Error::Data(
                        "raw column kind does not match the encoder".into(),
                    ))
                }
            }
        }
        let samples = rows
            .into_iter()
            .zip(raw.times.iter().zip(&raw.events))
            .map(|(f, (&t, &e))| Sample::new(f, t, e))
            .collect();
        SurvivalDataset::new(samples, self.feature_names(), self.feature_kinds())
    }
}

fn distinct(values: &[String]) -> Vec<String> {
    let mut levels = values.to_vec();
    levels.sort();
    levels.dedup();
    levels
}

fn lookup(levels: &[String], level: &str, column: &str, row: Option<usize>) -> Result<usize> {
    levels.iter().position(|l| l == level).ok_or_else(|| {
        let at = row.map(|r| format!("row {}: ", r + 1)).unwrap_or_default();
        Error::Data(format!(
            "{at}level '{level}' of column '{column}' was not seen when fitting"
        ))
    })
}

/// Loads, fits the encoder on every row and encodes.
pub fn load_csv(path: &Path, schema: &DatasetSchema) -> Result<SurvivalDataset> {
    let raw = RawDataset::from_path(path, schema)?;
    Encoder::fit(&raw)?.transform(&raw)
}

/// Seeded shuffle into `(train, test)` index lists with
/// `round(n * test_fraction)` test rows; reshuffles until both sides hold an event.
pub fn split_indices(
    events: &[bool],
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidInput(format!(
            "test fraction must be in (0, 1), got {test_fraction}"
        )));
    }
    let n = events.len();
    let n_test = (n as f64 * test_fraction).round() as usize;
    if n_test == 0 || n_test >= n {
        return Err(Error::Data(format!(
            "test fraction {test_fraction} leaves an empty part for {n} rows"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..MAX_SPLIT_ATTEMPTS {
        order.shuffle(&mut rng);
        let (test, train) = order.split_at(n_test);
        if test.iter().any(|&i| events[i]) && train.iter().any(|&i| events[i]) {
            let (mut train, mut test) = (train.to_vec(), test.to_vec());
            train.sort_unstable();
            test.sort_unstable();
            return Ok((train, test));
        }
    }
    Err(Error::Data(format!(
        "no split with events on both sides after {MAX_SPLIT_ATTEMPTS} attempts"
    )))
}

pub fn train_test_split(
    dataset: &SurvivalDataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(SurvivalDataset, SurvivalDataset)> {
    let (train, test) = split_indices(&dataset.events(), test_fraction, seed)?;
    Ok((dataset.select(&train)?, dataset.select(&test)?))
}

/// Column names used by [`write_csv`] for the time and event columns;
/// suffixed with `_` until they clash with no feature name.
pub fn export_columns(dataset: &SurvivalDataset) -> (String, String) {
    let free = |base: &str| {
        let mut name = base.to_string();
        while dataset.feature_names().contains(&name) {
            name.push('_');
        }
        name
    };
    (free("time"), free("event"))
}

/// Schema that reads back what [`write_csv`] writes, without re-standardizing.
pub fn export_schema(dataset: &SurvivalDataset) -> Result<DatasetSchema> {
    let (time, event) = export_columns(dataset);
    let features = dataset
        .feature_names()
        .iter()
        .zip(dataset.feature_kinds())
        .map(|(n, k)| {
            let kind = match k {
                FeatureKind::Numeric => ColumnKind::Numeric,
                FeatureKind::Indicator => ColumnKind::Indicator,
            };
            (n.clone(), kind)
        })
        .collect();
    let mut schema = DatasetSchema::new(&time, &event, features)?;
    schema.standardize = false;
    Ok(schema)
}

/// Features, then time and event (1/0). Values use shortest round-trip formatting.
pub fn write_csv<W: Write>(dataset: &SurvivalDataset, writer: W) -> Result<()> {
    let (time, event) = export_columns(dataset);
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = dataset.feature_names().iter().map(String::as_str).collect();
    header.push(&time);
    header.push(&event);
    w.write_record(&header)?;
    for s in dataset.samples() {
        let mut record: Vec<String> = s.features.iter().map(|v| v.to_string()).collect();
        record.push(s.time.to_string());
        record.push(if s.event { "1" } else { "0" }.into());
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}
