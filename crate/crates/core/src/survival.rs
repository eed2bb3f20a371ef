//! Censored survival data, the event-time grid and piecewise-constant
//! cumulative hazard / survival functions defined on it.
//!
//! Every CHF in this crate is a step function over a [`TimeGrid`]: the
//! value `H_j` holds on `[t_j, t_{j+1})` and the last value holds on
//! `[t_s, t_s + gamma]`. Nothing is defined before `t_0`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a feature column was produced, which decides whether it may be perturbed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureKind {
    Numeric,
    /// 0/1 indicator (one-hot level or binary category); never perturbed.
    Indicator,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub time: f64,
    pub event: bool,
}

impl Sample {
    pub fn new(features: Vec<f64>, time: f64, event: bool) -> Self {
        Self {
            features,
            time,
            event,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalDataset {
    samples: Vec<Sample>,
    feature_names: Vec<String>,
    feature_kinds: Vec<FeatureKind>,
}

impl SurvivalDataset {
    pub fn new(
        samples: Vec<Sample>,
        feature_names: Vec<String>,
        feature_kinds: Vec<FeatureKind>,
    ) -> Result<Self> {
        let m = feature_names.len();
        if feature_kinds.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: feature_kinds.len(),
            });
        }
        if samples.len() < 2 {
            return Err(Error::Data(format!(
                "dataset needs at least 2 samples, got {}",
                samples.len()
            )));
        }
        for (i, s) in samples.iter().enumerate() {
            if s.features.len() != m {
                return Err(Error::Data(format!(
                    "sample {i} has {} features, expected {m}",
                    s.features.len()
                )));
            }
            if !(s.time.is_finite() && s.time >= 0.0) {
                return Err(Error::Data(format!(
                    "sample {i} has invalid time {}",
                    s.time
                )));
            }
            if let Some(v) = s.features.iter().find(|v| !v.is_finite()) {
                return Err(Error::Data(format!(
                    "sample {i} has non-finite feature {v}"
                )));
            }
        }
        if !samples.iter().any(|s| s.event) {
            return Err(Error::Data("dataset contains no observed events".into()));
        }
        Ok(Self {
            samples,
            feature_names,
            feature_kinds,
        })
    }

    /// Dataset with generated names `x1..xm`, all numeric.
    pub fn from_samples(samples: Vec<Sample>) -> Result<Self> {
        let m = samples.first().map_or(0, |s| s.features.len());
        let names = (1..=m).map(|k| format!("x{k}")).collect();
        Self::new(samples, names, vec![FeatureKind::Numeric; m])
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn feature_kinds(&self) -> &[FeatureKind] {
        &self.feature_kinds
    }

    pub fn n(&self) -> usize {
        self.samples.len()
    }

    pub fn m(&self) -> usize {
        self.feature_names.len()
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.time).collect()
    }

    pub fn events(&self) -> Vec<bool> {
        self.samples.iter().map(|s| s.event).collect()
    }

    pub fn feature_rows(&self) -> Vec<Vec<f64>> {
        self.samples.iter().map(|s| s.features.clone()).collect()
    }

    /// Subset by row indices (repeats allowed). Validated like `new`.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let samples = indices.iter().map(|&i| self.samples[i].clone()).collect();
        Self::new(
            samples,
            self.feature_names.clone(),
            self.feature_kinds.clone(),
        )
    }

    /// Copy with the feature columns replaced, keeping times and events.
    pub fn with_features(&self, rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.len() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                got: rows.len(),
            });
        }
        let samples = self
            .samples
            .iter()
            .zip(rows)
            .map(|(s, f)| Sample::new(f, s.time, s.event))
            .collect();
        Self::new(
            samples,
            self.feature_names.clone(),
            self.feature_kinds.clone(),
        )
    }
}

/// Partition of `[t_0, t_s + gamma]` at the distinct event times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    event_times: Vec<f64>,
    gamma: f64,
}

impl TimeGrid {
    pub fn new(event_times: Vec<f64>, gamma: f64) -> Result<Self> {
        if event_times.len() < 2 {
            return Err(Error::GridDegenerate(format!(
                "need at least 2 distinct times, got {}",
                event_times.len()
            )));
        }
        if event_times.iter().any(|t| !t.is_finite()) {
            return Err(Error::GridDegenerate("non-finite time".into()));
        }
        if event_times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::GridDegenerate(
                "times must be strictly increasing".into(),
            ));
        }
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::GridDegenerate(format!(
                "gamma must be positive, got {gamma}"
            )));
        }
        Ok(Self { event_times, gamma })
    }

    pub fn times(&self) -> &[f64] {
        &self.event_times
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Number of intervals, `s + 1`.
    pub fn len(&self) -> usize {
        self.event_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.event_times.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        self.event_times[self.event_times.len() - 1] + self.gamma
    }

    /// Interval widths `tau_j`; the last one is `gamma`.
    pub fn widths(&self) -> Vec<f64> {
        let mut tau: Vec<f64> = self.event_times.windows(2).map(|w| w[1] - w[0]).collect();
        tau.push(self.gamma);
        tau
    }

    /// Index of the interval containing `t`, or `None` for `t < t_0`.
    /// Times past the horizon map to the last interval.
    pub fn interval_of(&self, t: f64) -> Option<usize> {
        let count = self.event_times.partition_point(|&e| e <= t);
        count.checked_sub(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseChf {
    grid: Arc<TimeGrid>,
    values: Vec<f64>,
}

impl PiecewiseChf {
    pub fn new(grid: Arc<TimeGrid>, values: Vec<f64>) -> Result<Self> {
        validate_chf_values(&values, grid.len())?;
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &Arc<TimeGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Right-continuous step lookup; 0 before the first grid time.
    pub fn at(&self, t: f64) -> f64 {
        self.grid.interval_of(t).map_or(0.0, |j| self.values[j])
    }

    /// `sum_j H_j tau_j`, the integral of the CHF over the grid.
    pub fn integrated(&self) -> f64 {
        integrated_chf(&self.values, &self.grid.widths())
    }
}

pub(crate) fn validate_chf_values(values: &[f64], expected_len: usize) -> Result<()> {
    if values.len() != expected_len {
        return Err(Error::DimensionMismatch {
            expected: expected_len,
            got: values.len(),
        });
    }
    if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Numeric(
            "CHF values must be finite and nonnegative".into(),
        ));
    }
    if values.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Numeric("CHF values must be nondecreasing".into()));
    }
    Ok(())
}

pub fn integrated_chf(values: &[f64], widths: &[f64]) -> f64 {
    values.iter().zip(widths).map(|(h, w)| h * w).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseSf {
    grid: Arc<TimeGrid>,
    values: Vec<f64>,
}

impl PiecewiseSf {
    pub fn grid(&self) -> &Arc<TimeGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Anything that maps a feature vector to a CHF on a fixed grid.
pub trait ChfPredictor: Sync {
    fn grid(&self) -> &Arc<TimeGrid>;

    fn n_features(&self) -> usize;

    fn predict_chf(&self, x: &[f64]) -> Result<PiecewiseChf>;

    /// Integrated CHF; larger means an earlier expected event.
    fn risk_score(&self, x: &[f64]) -> Result<f64> {
        Ok(self.predict_chf(x)?.integrated())
    }
}

/// Grid over the distinct event times (falling back to all observed times
/// when fewer than two distinct event times exist), with
/// `gamma = gamma_fraction * (t_s - t_0)`.
pub fn build_time_grid(dataset: &SurvivalDataset, gamma_fraction: f64) -> Result<TimeGrid> {
    if !(gamma_fraction.is_finite() && gamma_fraction > 0.0) {
        return Err(Error::InvalidInput(format!(
            "gamma_fraction must be positive, got {gamma_fraction}"
        )));
    }
    let distinct = |event_only: bool| {
        let mut times: Vec<f64> = dataset
            .samples()
            .iter()
            .filter(|s| s.event || !event_only)
            .map(|s| s.time)
            .collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        times
    };
    let mut times = distinct(true);
    if times.len() < 2 {
        times = distinct(false);
    }
    if times.len() < 2 {
        return Err(Error::GridDegenerate(format!(
            "only {} distinct time(s) in dataset",
            times.len()
        )));
    }
    let gamma = gamma_fraction * (times[times.len() - 1] - times[0]);
    TimeGrid::new(times, gamma)
}

/// Nelson-Aalen estimate for arbitrary (time, event) pairs evaluated at the
/// grid times: `H_j = sum_{t_e <= t_j} d_e / n_e`.
///
/// Event times need not lie on the grid, so this also serves as the
/// projection of a subset's estimator onto a shared grid.
pub fn nelson_aalen_values(times: &[f64], events: &[bool], grid: &TimeGrid) -> Result<Vec<f64>> {
    if times.len() != events.len() {
        return Err(Error::DimensionMismatch {
            expected: times.len(),
            got: events.len(),
        });
    }
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));

    // (event time, increment d/n), ascending
    let mut increments: Vec<(f64, f64)> = Vec::new();
    let n = times.len();
    let mut i = 0;
    while i < n {
        let t = times[order[i]];
        let at_risk = n - i;
        let mut deaths = 0usize;
        let mut k = i;
        while k < n && times[order[k]] == t {
            if events[order[k]] {
                deaths += 1;
            }
            k += 1;
        }
        if deaths > 0 {
            if at_risk == 0 {
                return Err(Error::EstimatorUndefined(format!(
                    "empty risk set at t = {t}"
                )));
            }
            increments.push((t, deaths as f64 / at_risk as f64));
        }
        i = k;
    }

    let mut values = Vec::with_capacity(grid.len());
    let mut acc = 0.0;
    let mut next = 0;
    for &t in grid.times() {
        while next < increments.len() && increments[next].0 <= t {
            acc += increments[next].1;
            next += 1;
        }
        values.push(acc);
    }
    Ok(values)
}

pub fn nelson_aalen(dataset: &SurvivalDataset, grid: &Arc<TimeGrid>) -> Result<PiecewiseChf> {
    let values = nelson_aalen_values(&dataset.times(), &dataset.events(), grid)?;
    PiecewiseChf::new(Arc::clone(grid), values)
}

pub fn chf_to_sf(chf: &PiecewiseChf) -> PiecewiseSf {
    PiecewiseSf {
        grid: Arc::clone(&chf.grid),
        values: chf.values.iter().map(|h| (-h).exp()).collect(),
    }
}

/// Re-express `chf` on `target`: the value on target interval `j` is the
/// source CHF evaluated at `target.times()[j]`.
pub fn project_chf(chf: &PiecewiseChf, target: &Arc<TimeGrid>) -> PiecewiseChf {
    let values = target.times().iter().map(|&t| chf.at(t)).collect();
    PiecewiseChf {
        grid: Arc::clone(target),
        values,
    }
}

/// Harrell's C-index; higher risk means earlier expected event.
pub fn concordance_index(risk_scores: &[f64], dataset: &SurvivalDataset) -> Result<f64> {
    concordance_index_raw(risk_scores, &dataset.times(), &dataset.events())
}

/// C-index over raw arrays.
///
/// A pair is admissible when the earlier time is an observed event. With
/// tied times, the pair is admissible only if exactly one of the two is an
/// event, which is then treated as the earlier one.
pub fn concordance_index_raw(risk: &[f64], times: &[f64], events: &[bool]) -> Result<f64> {
    let n = times.len();
    if risk.len() != n || events.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: risk.len().min(events.len()),
        });
    }
    let mut admissible = 0u64;
    let mut score = 0.0;
    for i in 0..n {
        if !events[i] {
            continue;
        }
        for j in 0..n {
            if i == j {
                continue;
            }
            let earlier = times[i] < times[j] || (times[i] == times[j] && !events[j]);
            if !earlier {
                continue;
            }
            admissible += 1;
            if risk[i] > risk[j] {
                score += 1.0;
            } else if risk[i] == risk[j] {
                score += 0.5;
            }
        }
    }
    if admissible == 0 {
        return Err(Error::MetricUndefined("no admissible pairs".into()));
    }
    Ok(score / admissible as f64)
}
