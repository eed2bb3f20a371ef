//! Random survival forest used as the reference black box.
//!
//! Trees split on the two-sample log-rank statistic over a random feature
//! subset and store the Nelson-Aalen CHF of each leaf, already projected
//! onto the dataset-level grid, so prediction is a plain mean of vectors.

mod codec;
mod importance;
mod logrank;
mod tree;

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::survival::{
    build_time_grid, ChfPredictor, FeatureKind, PiecewiseChf, SurvivalDataset, TimeGrid,
};

pub use codec::{decode_forest, encode_forest, FOREST_FORMAT_VERSION};
pub use importance::permutation_importance;
pub use logrank::{log_rank_statistic, log_rank_statistic_raw};
pub use tree::{Node, Tree};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// Minimum number of observed events in each child of a split.
    pub min_leaf_events: usize,
    pub max_depth: Option<usize>,
    /// Defaults to `ceil(sqrt(m))` when unset.
    pub features_per_split: Option<usize>,
    pub seed: u64,
    pub gamma_fraction: f64,
    /// Draw a bootstrap resample per tree. Disabling it is mostly useful in tests.
    pub bootstrap: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 500,
            min_leaf_events: 3,
            max_depth: None,
            features_per_split: None,
            seed: 0,
            gamma_fraction: 0.01,
            bootstrap: true,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::InvalidInput("n_trees must be at least 1".into()));
        }
        if self.min_leaf_events == 0 {
            return Err(Error::InvalidInput(
                "min_leaf_events must be at least 1".into(),
            ));
        }
        if self.features_per_split == Some(0) {
            return Err(Error::InvalidInput(
                "features_per_split must be at least 1".into(),
            ));
        }
        if self.max_depth == Some(0) {
            return Err(Error::InvalidInput("max_depth must be at least 1".into()));
        }
        if !(self.gamma_fraction.is_finite() && self.gamma_fraction > 0.0) {
            return Err(Error::InvalidInput(
                "gamma_fraction must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn resolved_features_per_split(&self, m: usize) -> usize {
        self.features_per_split
            .unwrap_or_else(|| (m as f64).sqrt().ceil() as usize)
            .clamp(1, m.max(1))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalForest {
    pub(crate) trees: Vec<Tree>,
    pub(crate) grid: Arc<TimeGrid>,
    pub(crate) feature_names: Vec<String>,
    pub(crate) feature_kinds: Vec<FeatureKind>,
    /// Free-form key/value blobs carried through serialization
    /// (the CLI stores its preprocessing state here).
    pub attachments: BTreeMap<String, String>,
}

impl SurvivalForest {
    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn feature_kinds(&self) -> &[FeatureKind] {
        &self.feature_kinds
    }

    /// Risk scores for many rows at once.
    pub fn risk_scores(&self, rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        rows.par_iter().map(|x| self.risk_score(x)).collect()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.feature_names.len() {
            return Err(Error::DimensionMismatch {
                expected: self.feature_names.len(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite feature value".into()));
        }
        Ok(())
    }
}

impl ChfPredictor for SurvivalForest {
    fn grid(&self) -> &Arc<TimeGrid> {
        &self.grid
    }

    fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    fn predict_chf(&self, x: &[f64]) -> Result<PiecewiseChf> {
        self.check_input(x)?;
        let mut acc = vec![0.0; self.grid.len()];
        for tree in &self.trees {
            for (a, v) in acc.iter_mut().zip(tree.leaf_chf(x)) {
                *a += v;
            }
        }
        let count = self.trees.len() as f64;
        for a in &mut acc {
            *a /= count;
        }
        PiecewiseChf::new(Arc::clone(&self.grid), acc)
    }
}

/// Per-tree RNG: one ChaCha stream per tree index, so results do not depend
/// on how trees are scheduled across threads.
fn tree_rng(seed: u64, tree: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree as u64);
    rng
}

pub fn fit_forest(dataset: &SurvivalDataset, config: &ForestConfig) -> Result<SurvivalForest> {
    config.validate()?;
    let grid = Arc::new(build_time_grid(dataset, config.gamma_fraction)?);
    let rows = dataset.feature_rows();
    let times = dataset.times();
    let events = dataset.events();
    let n = dataset.n();
    let builder = tree::TreeBuilder {
        rows: &rows,
        times: &times,
        events: &events,
        grid: &grid,
        config,
        features_per_split: config.resolved_features_per_split(dataset.m()),
    };

    let trees: Vec<Tree> = (0..config.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = tree_rng(config.seed, t);
            let indices = if config.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            builder.build(indices, &mut rng)
        })
        .collect();

    if trees.iter().all(Tree::is_leaf_only) {
        log::warn!(
            "no admissible split found in any of {} trees; forest is a single-leaf model",
            trees.len()
        );
    }

    Ok(SurvivalForest {
        trees,
        grid,
        feature_names: dataset.feature_names().to_vec(),
        feature_kinds: dataset.feature_kinds().to_vec(),
        attachments: BTreeMap::new(),
    })
}
