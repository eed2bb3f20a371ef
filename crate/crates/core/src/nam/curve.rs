use serde::{Deserialize, Serialize};

use super::NamModel;
use crate::error::{Error, Result};

/// Contribution of one feature to `psi`, evaluated on a grid of values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeCurve {
    pub feature: usize,
    /// `(x, contribution(x) - offset)` pairs in grid order.
    pub points: Vec<(f64, f64)>,
    /// Mean contribution over the reference points, subtracted from every value.
    pub offset: f64,
    /// False when no reference points were supplied and nothing was subtracted.
    pub centered: bool,
}

impl ShapeCurve {
    /// `max - min` of the curve values.
    pub fn range(&self) -> f64 {
        let (lo, hi) = self
            .points
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, c)| {
                (lo.min(c), hi.max(c))
            });
        if lo.is_finite() {
            hi - lo
        } else {
            0.0
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.points.iter().map(|p| p.1.abs()).fold(0.0, f64::max)
    }
}

/// Feature `k`'s contribution (base: `g_k`, lasso: `beta_k g_k`,
/// shortcut: `alpha_k g_k + (1 - alpha_k) omega_k x`) on `grid`, shifted to
/// have zero mean over `reference`.
pub fn shape_curve(
    model: &NamModel,
    k: usize,
    grid: &[f64],
    reference: &[f64],
) -> Result<ShapeCurve> {
    if k >= model.m() {
        return Err(Error::InvalidInput(format!(
            "feature index {k} out of range for {} features",
            model.m()
        )));
    }
    if grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidInput("curve grid must be sorted".into()));
    }
    let value = |x: f64| model.contribution(k, model.subnet_output(k, x), x);
    let centered = !reference.is_empty();
    let offset = if centered {
        reference.iter().map(|&x| value(x)).sum::<f64>() / reference.len() as f64
    } else {
        log::warn!("no reference points for feature {k}; curve left uncentered");
        0.0
    };
    Ok(ShapeCurve {
        feature: k,
        points: grid.iter().map(|&x| (x, value(x) - offset)).collect(),
        offset,
        centered,
    })
}
