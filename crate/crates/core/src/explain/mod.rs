//! Explanation pipeline: sample points around an instance (or take the whole
//! training set), query the black box, turn its CHFs into log-ratio targets
//! against a baseline and fit an additive network to them.

mod export;

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nam::{
    init_model, shape_curve, train, NamConfig, NamModel, ShapeCurve, TrainingSet, Variant,
};
use crate::survival::{
    concordance_index, nelson_aalen, ChfPredictor, FeatureKind, PiecewiseChf, SurvivalDataset,
};

pub use export::{explanation_csv, explanation_svg};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainConfig {
    /// Number of generated points in local mode.
    pub n_points: usize,
    /// Perturbation std as a fraction of the dataset's largest pairwise distance.
    pub spread: f64,
    /// Floor applied to black-box and baseline CHF values before taking logs.
    pub epsilon: f64,
    /// Grid points per numeric shape curve.
    pub curve_points: usize,
    pub nam: NamConfig,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        Self {
            n_points: 100,
            spread: 0.10,
            epsilon: 1e-5,
            curve_points: 50,
            nam: NamConfig::default(),
        }
    }
}

impl ExplainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_points == 0 {
            return Err(Error::InvalidInput("n_points must be at least 1".into()));
        }
        if !(self.spread.is_finite() && self.spread > 0.0) {
            return Err(Error::InvalidInput("spread must be positive".into()));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::InvalidInput("epsilon must be positive".into()));
        }
        if self.curve_points < 2 {
            return Err(Error::InvalidInput(
                "curve_points must be at least 2".into(),
            ));
        }
        self.nam.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Local,
    Global,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Local => "local",
            Mode::Global => "global",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "local" => Ok(Mode::Local),
            "global" => Ok(Mode::Global),
            _ => Err(Error::InvalidInput(format!(
                "unknown mode '{s}' (expected local or global)"
            ))),
        }
    }
}

/// Generated points around `center` with their kernel weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighborhood {
    pub center: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    /// Largest distance from the center to a generated point.
    pub radius: f64,
}

impl Neighborhood {
    pub fn sample(
        x: &[f64],
        dataset: &SurvivalDataset,
        n: usize,
        spread: f64,
        seed: u64,
    ) -> Result<Self> {
        let points = perturb(x, dataset, n, spread, seed)?;
        let radius = points.iter().map(|p| distance(x, p)).fold(0.0, f64::max);
        if radius <= 0.0 {
            return Err(Error::InvalidInput(
                "all generated points coincide with the center; no numeric feature to perturb"
                    .into(),
            ));
        }
        let weights = neighborhood_weights(x, &points, radius)?;
        Ok(Self {
            center: x.to_vec(),
            points,
            weights,
            radius,
        })
    }
}

/// Black-box targets for a set of points.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetBatch {
    /// `phi[i][j] = ln max(H_j(x_i), eps) - ln max(H0_j, eps)`
    pub phi: Vec<Vec<f64>>,
    pub tau: Vec<f64>,
    pub weights: Vec<f64>,
    pub epsilon: f64,
}

/// Per-feature head values; which are present depends on the variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureCoefficients {
    pub beta: Option<f64>,
    pub alpha: Option<f64>,
    pub omega: Option<f64>,
    /// Slope of the linear bypass, `(1 - alpha) * omega`.
    pub linear: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub initial_loss: f64,
    pub final_loss: f64,
    pub min_loss: f64,
    pub epochs: usize,
    pub c_blackbox: Option<f64>,
    pub c_surrogate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Explanation {
    pub variant: Variant,
    pub mode: Mode,
    pub lambda: f64,
    pub mu: f64,
    pub center: Option<Vec<f64>>,
    pub feature_names: Vec<String>,
    pub feature_kinds: Vec<FeatureKind>,
    pub curves: Vec<ShapeCurve>,
    pub coefficients: Vec<FeatureCoefficients>,
    pub diagnostics: Diagnostics,
    /// Per feature, the values the curve was centered over (sorted).
    pub reference: Vec<Vec<f64>>,
    pub model: NamModel,
}

impl Explanation {
    pub fn surrogate_psi(&self, x: &[f64]) -> Result<f64> {
        self.model.psi(x)
    }

    /// Feature indices ordered by decreasing curve range.
    pub fn ranking(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.curves.len()).collect();
        order.sort_by(|&a, &b| self.curves[b].range().total_cmp(&self.curves[a].range()));
        order
    }
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Largest pairwise Euclidean distance between dataset rows.
pub fn dataset_diameter(dataset: &SurvivalDataset) -> Result<f64> {
    let rows = dataset.feature_rows();
    if rows.len() < 2 {
        return Err(Error::InvalidInput(
            "diameter needs at least 2 points".into(),
        ));
    }
    Ok((0..rows.len())
        .into_par_iter()
        .map(|i| {
            rows[i + 1..]
                .iter()
                .map(|r| distance(&rows[i], r))
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max))
}

fn perturb(
    x: &[f64],
    dataset: &SurvivalDataset,
    n: usize,
    spread: f64,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if x.len() != dataset.m() {
        return Err(Error::DimensionMismatch {
            expected: dataset.m(),
            got: x.len(),
        });
    }
    if n == 0 {
        return Err(Error::InvalidInput(
            "need at least one generated point".into(),
        ));
    }
    if !(spread.is_finite() && spread > 0.0) {
        return Err(Error::InvalidInput("spread must be positive".into()));
    }
    let diameter = dataset_diameter(dataset)?;
    if diameter <= 0.0 {
        return Err(Error::InvalidInput(
            "all dataset rows coincide; diameter is zero".into(),
        ));
    }
    let noise = Normal::new(0.0, spread * diameter).map_err(|e| Error::Numeric(e.to_string()))?;
    let kinds = dataset.feature_kinds();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| {
            x.iter()
                .zip(kinds)
                .map(|(&v, kind)| match kind {
                    FeatureKind::Numeric => v + noise.sample(&mut rng),
                    FeatureKind::Indicator => v,
                })
                .collect()
        })
        .collect())
}

/// `n` points around `x`: numeric coordinates get independent normal noise
/// with std `0.10 * diameter(dataset)`, indicator coordinates are copied.
pub fn generate_perturbations(
    x: &[f64],
    dataset: &SurvivalDataset,
    n: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    perturb(x, dataset, n, ExplainConfig::default().spread, seed)
}

/// `v_k = max(0, 1 - sqrt(|x - x_k| / r))`.
pub fn neighborhood_weights(x: &[f64], points: &[Vec<f64>], r: f64) -> Result<Vec<f64>> {
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::InvalidInput(format!(
            "radius must be positive, got {r}"
        )));
    }
    Ok(points
        .iter()
        .map(|p| (1.0 - (distance(x, p) / r).sqrt()).max(0.0))
        .collect())
}

/// Nelson-Aalen estimate over `dataset` on the black box's grid.
pub fn baseline_chf<P: ChfPredictor + ?Sized>(
    blackbox: &P,
    dataset: &SurvivalDataset,
) -> Result<PiecewiseChf> {
    nelson_aalen(dataset, blackbox.grid())
}

pub fn build_targets<P: ChfPredictor + ?Sized>(
    blackbox: &P,
    baseline: &PiecewiseChf,
    points: &[Vec<f64>],
    weights: &[f64],
    epsilon: f64,
) -> Result<TargetBatch> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::InvalidInput("epsilon must be positive".into()));
    }
    if points.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: points.len(),
            got: weights.len(),
        });
    }
    let grid: &Arc<_> = baseline.grid();
    if blackbox.grid().as_ref() != grid.as_ref() {
        return Err(Error::GridMismatch(
            "black-box and baseline CHFs are on different grids".into(),
        ));
    }
    let log_base: Vec<f64> = baseline
        .values()
        .iter()
        .map(|h| h.max(epsilon).ln())
        .collect();
    let phi = points
        .par_iter()
        .map(|x| {
            let chf = blackbox.predict_chf(x)?;
            if chf.grid().as_ref() != grid.as_ref() {
                return Err(Error::GridMismatch(
                    "black-box prediction left its grid".into(),
                ));
            }
            Ok(chf
                .values()
                .iter()
                .zip(&log_base)
                .map(|(h, b)| h.max(epsilon).ln() - b)
                .collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok(TargetBatch {
        phi,
        tau: grid.widths(),
        weights: weights.to_vec(),
        epsilon,
    })
}

/// Points to explain over and their weights.
#[derive(Debug, Clone, PartialEq)]
pub enum Region {
    Local(Neighborhood),
    /// Every training row, each with weight 1.
    Global(Vec<Vec<f64>>),
}

impl Region {
    pub fn points(&self) -> &[Vec<f64>] {
        match self {
            Region::Local(nb) => &nb.points,
            Region::Global(points) => points,
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        match self {
            Region::Local(nb) => nb.weights.clone(),
            Region::Global(points) => vec![1.0; points.len()],
        }
    }

    pub fn mode(&self) -> Mode {
        match self {
            Region::Local(_) => Mode::Local,
            Region::Global(_) => Mode::Global,
        }
    }
}

pub fn explain_local<P: ChfPredictor + ?Sized>(
    blackbox: &P,
    dataset: &SurvivalDataset,
    x: &[f64],
    config: &ExplainConfig,
    lambda: f64,
    mu: f64,
    seed: u64,
) -> Result<Explanation> {
    config.validate()?;
    let baseline = baseline_chf(blackbox, dataset)?;
    let region = Region::Local(Neighborhood::sample(
        x,
        dataset,
        config.n_points,
        config.spread,
        seed,
    )?);
    explain_region(
        blackbox, &baseline, dataset, &region, config, lambda, mu, seed,
    )
}

pub fn explain_global<P: ChfPredictor + ?Sized>(
    blackbox: &P,
    dataset: &SurvivalDataset,
    config: &ExplainConfig,
    lambda: f64,
    mu: f64,
    seed: u64,
) -> Result<Explanation> {
    config.validate()?;
    let baseline = baseline_chf(blackbox, dataset)?;
    let region = Region::Global(dataset.feature_rows());
    explain_region(
        blackbox, &baseline, dataset, &region, config, lambda, mu, seed,
    )
}

/// The shared pipeline with an explicit baseline and point set. `dataset`
/// only supplies the feature schema.
#[allow(clippy::too_many_arguments)]
pub fn explain_region<P: ChfPredictor + ?Sized>(
    blackbox: &P,
    baseline: &PiecewiseChf,
    dataset: &SurvivalDataset,
    region: &Region,
    config: &ExplainConfig,
    lambda: f64,
    mu: f64,
    seed: u64,
) -> Result<Explanation> {
    config.validate()?;
    let m = dataset.m();
    if blackbox.n_features() != m {
        return Err(Error::DimensionMismatch {
            expected: blackbox.n_features(),
            got: m,
        });
    }
    let points = region.points();
    let batch = build_targets(
        blackbox,
        baseline,
        points,
        &region.weights(),
        config.epsilon,
    )?;
    let set = TrainingSet::new(points.to_vec(), &batch.phi, batch.weights, &batch.tau)?;
    let nam = NamConfig {
        seed,
        ..config.nam.clone()
    };
    let (model, report) = train(init_model(m, &nam)?, &set, &nam, lambda, mu)?;

    let mut curves = Vec::with_capacity(m);
    let mut reference = Vec::with_capacity(m);
    for (k, kind) in dataset.feature_kinds().iter().enumerate() {
        let mut values: Vec<f64> = points.iter().map(|p| p[k]).collect();
        values.sort_by(f64::total_cmp);
        let grid = curve_grid(&values, *kind, config.curve_points);
        curves.push(shape_curve(&model, k, &grid, &values)?);
        reference.push(values);
    }
    let coefficients = coefficients(&model);
    let diagnostics = Diagnostics {
        initial_loss: report.initial_loss(),
        final_loss: report.final_loss(),
        min_loss: report.trace.iter().copied().fold(f64::INFINITY, f64::min),
        epochs: report.epochs(),
        c_blackbox: None,
        c_surrogate: None,
    };
    if !(diagnostics.initial_loss.is_finite() && diagnostics.final_loss.is_finite()) {
        return Err(Error::Numeric("non-finite training diagnostics".into()));
    }
    Ok(Explanation {
        variant: nam.variant,
        mode: region.mode(),
        lambda,
        mu,
        center: match region {
            Region::Local(nb) => Some(nb.center.clone()),
            Region::Global(_) => None,
        },
        feature_names: dataset.feature_names().to_vec(),
        feature_kinds: dataset.feature_kinds().to_vec(),
        curves,
        coefficients,
        diagnostics,
        reference,
        model,
    })
}

/// Distinct values for indicators, an even grid over the observed range otherwise.
fn curve_grid(sorted: &[f64], kind: FeatureKind, resolution: usize) -> Vec<f64> {
    let (lo, hi) = (sorted[0], sorted[sorted.len() - 1]);
    if kind == FeatureKind::Indicator || lo == hi {
        let mut distinct = sorted.to_vec();
        distinct.dedup();
        return distinct;
    }
    (0..resolution)
        .map(|i| lo + (hi - lo) * i as f64 / (resolution - 1) as f64)
        .collect()
}

fn coefficients(model: &NamModel) -> Vec<FeatureCoefficients> {
    let beta = model.beta();
    let alpha = model.alpha();
    let omega = model.omega();
    (0..model.m())
        .map(|k| {
            let a = alpha.as_ref().map(|v| v[k]);
            let o = omega.as_ref().map(|v| v[k]);
            FeatureCoefficients {
                beta: beta.as_ref().map(|v| v[k]),
                alpha: a,
                omega: o,
                linear: a.zip(o).map(|(a, o)| (1.0 - a) * o),
            }
        })
        .collect()
}

/// C-index of the black box (integrated CHF) and of the surrogate (`psi`)
/// on held-out data.
pub fn surrogate_c_index<P: ChfPredictor + ?Sized>(
    explanation: &Explanation,
    blackbox: &P,
    test: &SurvivalDataset,
) -> Result<(f64, f64)> {
    c_index_pair(&explanation.model, blackbox, test)
}

/// Same as [`surrogate_c_index`] for a bare trained model.
pub fn c_index_pair<P: ChfPredictor + ?Sized>(
    surrogate: &NamModel,
    blackbox: &P,
    test: &SurvivalDataset,
) -> Result<(f64, f64)> {
    let rows = test.feature_rows();
    let black: Vec<f64> = rows
        .par_iter()
        .map(|x| blackbox.risk_score(x))
        .collect::<Result<_>>()?;
    let psi: Vec<f64> = rows
        .iter()
        .map(|x| surrogate.psi(x))
        .collect::<Result<_>>()?;
    Ok((
        concordance_index(&black, test)?,
        concordance_index(&psi, test)?,
    ))
}

#[cfg(test)]
mod tests;
