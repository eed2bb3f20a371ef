use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::Result;
use crate::survival::{concordance_index, ChfPredictor, SurvivalDataset};

/// Mean drop in C-index when one feature column is shuffled, per feature.
pub fn permutation_importance<P: ChfPredictor>(
    model: &P,
    dataset: &SurvivalDataset,
    n_repeats: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let rows = dataset.feature_rows();
    let score = |rows: &[Vec<f64>]| -> Result<f64> {
        let risk = rows
            .par_iter()
            .map(|x| model.risk_score(x))
            .collect::<Result<Vec<f64>>>()?;
        concordance_index(&risk, dataset)
    };
    let baseline = score(&rows)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut importances = Vec::with_capacity(dataset.m());
    for k in 0..dataset.m() {
        let mut total = 0.0;
        for _ in 0..n_repeats.max(1) {
            let mut column: Vec<f64> = rows.iter().map(|r| r[k]).collect();
            column.shuffle(&mut rng);
            let permuted: Vec<Vec<f64>> = rows
                .iter()
                .zip(&column)
                .map(|(r, &v)| {
                    let mut r = r.clone();
                    r[k] = v;
                    r
                })
                .collect();
            total += baseline - score(&permuted)?;
        }
        importances.push(total / n_repeats.max(1) as f64);
    }
    Ok(importances)
}
