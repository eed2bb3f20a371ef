use super::{NamModel, Variant};
use crate::error::{Error, Result};

/// Training examples with their targets reduced to sufficient statistics.
///
/// For one example, `sum_j tau_j (phi_j - psi)^2 = A (psi - psi*)^2 + R` with
/// `A = sum_j tau_j`, `psi* = sum_j tau_j phi_j / A` and `R` the residual at
/// `psi*`. The loss only ever needs `(A, psi*, R)`.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
    tau_sum: f64,
    psi_star: Vec<f64>,
    residual: Vec<f64>,
}

impl TrainingSet {
    pub fn new(
        points: Vec<Vec<f64>>,
        phi: &[Vec<f64>],
        weights: Vec<f64>,
        tau: &[f64],
    ) -> Result<Self> {
        let n = points.len();
        if n == 0 {
            return Err(Error::InvalidInput("training set is empty".into()));
        }
        if phi.len() != n || weights.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: if phi.len() != n {
                    phi.len()
                } else {
                    weights.len()
                },
            });
        }
        if tau.iter().any(|t| !(t.is_finite() && *t > 0.0)) || tau.is_empty() {
            return Err(Error::Numeric(
                "interval widths must be finite and positive".into(),
            ));
        }
        if weights.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Numeric(
                "weights must be finite and nonnegative".into(),
            ));
        }
        let m = points[0].len();
        if points.iter().any(|p| p.len() != m) {
            return Err(Error::InvalidInput(
                "points have inconsistent dimensions".into(),
            ));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite feature value".into()));
        }
        let tau_sum: f64 = tau.iter().sum();
        let mut psi_star = Vec::with_capacity(n);
        let mut residual = Vec::with_capacity(n);
        for row in phi {
            if row.len() != tau.len() {
                return Err(Error::DimensionMismatch {
                    expected: tau.len(),
                    got: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric("non-finite target value".into()));
            }
            let star = row.iter().zip(tau).map(|(p, t)| p * t).sum::<f64>() / tau_sum;
            let r = row
                .iter()
                .zip(tau)
                .map(|(p, t)| t * (p - star).powi(2))
                .sum();
            psi_star.push(star);
            residual.push(r);
        }
        Ok(Self {
            points,
            weights,
            tau_sum,
            psi_star,
            residual,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Per-example minimizer of the data term.
    pub fn psi_star(&self) -> &[f64] {
        &self.psi_star
    }

    fn example_loss(&self, i: usize, psi: f64) -> f64 {
        self.weights[i] * (self.tau_sum * (psi - self.psi_star[i]).powi(2) + self.residual[i])
    }

    fn example_dpsi(&self, i: usize, psi: f64) -> f64 {
        2.0 * self.weights[i] * self.tau_sum * (psi - self.psi_star[i])
    }
}

fn regularization(model: &NamModel, lambda: f64, mu: f64) -> f64 {
    let m = model.m();
    match model.variant() {
        Variant::Base => 0.0,
        Variant::Lasso => {
            lambda
                * (0..m)
                    .map(|k| model.params[model.beta_index(k)].abs())
                    .sum::<f64>()
        }
        Variant::Shortcut => {
            let l1: f64 = (0..m)
                .map(|k| model.params[model.alpha_index(k)].abs())
                .sum();
            let l2: f64 = model.params[..model.bias_index()]
                .iter()
                .map(|w| w * w)
                .sum();
            lambda * l1 + mu * l2
        }
    }
}

fn check_penalties(lambda: f64, mu: f64) -> Result<()> {
    if !(lambda.is_finite() && lambda >= 0.0 && mu.is_finite() && mu >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "penalties must be finite and nonnegative (lambda {lambda}, mu {mu})"
        )));
    }
    Ok(())
}

/// Loss over the examples at `indices` (all when `None`), without gradients.
pub(crate) fn batch_loss(
    model: &NamModel,
    set: &TrainingSet,
    indices: Option<&[usize]>,
    lambda: f64,
    mu: f64,
) -> Result<f64> {
    let mut data = 0.0;
    let mut visit = |i: usize| -> Result<()> {
        let psi = model.psi(&set.points[i])?;
        data += set.example_loss(i, psi);
        Ok(())
    };
    match indices {
        Some(idx) => idx.iter().try_for_each(|&i| visit(i))?,
        None => (0..set.len()).try_for_each(&mut visit)?,
    }
    Ok(data + regularization(model, lambda, mu))
}

/// Full objective value: weighted interval-width squared error plus the
/// variant's penalty terms.
pub fn loss_value(model: &NamModel, set: &TrainingSet, lambda: f64, mu: f64) -> Result<f64> {
    check_penalties(lambda, mu)?;
    batch_loss(model, set, None, lambda, mu)
}

pub fn loss_and_gradient(
    model: &NamModel,
    set: &TrainingSet,
    lambda: f64,
    mu: f64,
) -> Result<(f64, Vec<f64>)> {
    check_penalties(lambda, mu)?;
    let all: Vec<usize> = (0..set.len()).collect();
    batch_loss_and_gradient(model, set, &all, lambda, mu)
}

pub(crate) fn batch_loss_and_gradient(
    model: &NamModel,
    set: &TrainingSet,
    indices: &[usize],
    lambda: f64,
    mu: f64,
) -> Result<(f64, Vec<f64>)> {
    let m = model.m();
    if set.points[0].len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: set.points[0].len(),
        });
    }
    let variant = model.variant();
    let mut grad = vec![0.0; model.params.len()];
    let bias_idx = model.bias_index();
    let mut loss = 0.0;
    for &i in indices {
        let x = &set.points[i];
        let traces: Vec<_> = (0..m).map(|k| model.subnet_forward(k, x[k])).collect();
        let g: Vec<f64> = traces.iter().map(|t| t.output).collect();
        let psi = model.psi_from_g(&g, x);
        loss += set.example_loss(i, psi);
        let dpsi = set.example_dpsi(i, psi);
        grad[bias_idx] += dpsi;
        for k in 0..m {
            let dg = match variant {
                Variant::Base => dpsi,
                Variant::Lasso => {
                    let b = model.beta_index(k);
                    grad[b] += dpsi * g[k];
                    dpsi * model.params[b]
                }
                Variant::Shortcut => {
                    let a = model.alpha_index(k);
                    let o = model.omega_index(k);
                    let alpha = model.params[a];
                    let omega = model.params[o];
                    grad[a] += dpsi * (g[k] - omega * x[k]);
                    grad[o] += dpsi * (1.0 - alpha) * x[k];
                    dpsi * alpha
                }
            };
            if dg != 0.0 {
                model.subnet_backward(k, x[k], &traces[k], dg, &mut grad);
            }
        }
    }

    // subgradient of |.| is taken as 0 at the kink
    let sign = |v: f64| {
        if v > 0.0 {
            1.0
        } else if v < 0.0 {
            -1.0
        } else {
            0.0
        }
    };
    match variant {
        Variant::Base => {}
        Variant::Lasso => {
            for k in 0..m {
                let b = model.beta_index(k);
                grad[b] += lambda * sign(model.params[b]);
            }
        }
        Variant::Shortcut => {
            for k in 0..m {
                let a = model.alpha_index(k);
                grad[a] += lambda * sign(model.params[a]);
            }
            for (g, w) in grad[..bias_idx].iter_mut().zip(&model.params[..bias_idx]) {
                *g += 2.0 * mu * w;
            }
        }
    }
    loss += regularization(model, lambda, mu);
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("loss is not finite ({loss})")));
    }
    Ok((loss, grad))
}
