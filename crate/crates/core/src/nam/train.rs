use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{batch_loss, batch_loss_and_gradient};
use super::{NamConfig, NamModel, TrainingSet, Variant};
use crate::error::{Error, Result};

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Full-data loss before training (index 0) and after each epoch.
    pub trace: Vec<f64>,
}

impl TrainReport {
    pub fn initial_loss(&self) -> f64 {
        self.trace[0]
    }

    pub fn final_loss(&self) -> f64 {
        self.trace[self.trace.len() - 1]
    }

    pub fn epochs(&self) -> usize {
        self.trace.len() - 1
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
    lr: f64,
}

impl Adam {
    fn new(len: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
            lr,
        }
    }

    fn update(&mut self, params: &mut [f64], grad: &[f64]) {
        self.step += 1;
        let c1 = 1.0 - BETA1.powi(self.step);
        let c2 = 1.0 - BETA2.powi(self.step);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
        }
    }
}

/// Adam on the full objective for `config.epochs` epochs.
///
/// The intercept is first set to the weighted mean of the per-example
/// targets (minus the initial additive part); in the shortcut variant the
/// mixing weights are clamped to `[0, 1]` after every step.
pub fn train(
    mut model: NamModel,
    set: &TrainingSet,
    config: &NamConfig,
    lambda: f64,
    mu: f64,
) -> Result<(NamModel, TrainReport)> {
    config.validate()?;
    if set.points()[0].len() != model.m() {
        return Err(Error::DimensionMismatch {
            expected: model.m(),
            got: set.points()[0].len(),
        });
    }
    warm_start_bias(&mut model, set)?;

    let n = set.len();
    let mut order: Vec<usize> = (0..n).collect();
    let batch = config.batch.unwrap_or(n).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_ba7c);
    let mut adam = Adam::new(model.params().len(), config.learning_rate);
    let mut trace = Vec::with_capacity(config.epochs + 1);
    trace.push(batch_loss(&model, set, None, lambda, mu)?);

    for epoch in 1..=config.epochs {
        if batch < n {
            order.shuffle(&mut rng);
        }
        for chunk in order.chunks(batch) {
            let (loss, grad) = match batch_loss_and_gradient(&model, set, chunk, lambda, mu) {
                Ok(v) => v,
                Err(Error::Numeric(_)) => return Err(diverged(epoch, f64::NAN, trace)),
                Err(e) => return Err(e),
            };
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(diverged(epoch, loss, trace));
            }
            adam.update(model.params_mut(), &grad);
            if model.variant() == Variant::Shortcut {
                for k in 0..model.m() {
                    let a = model.alpha_index(k);
                    model.params_mut()[a] = model.params()[a].clamp(0.0, 1.0);
                }
            }
        }
        let loss = batch_loss(&model, set, None, lambda, mu)?;
        if !loss.is_finite() {
            return Err(diverged(epoch, loss, trace));
        }
        trace.push(loss);
    }
    Ok((model, TrainReport { trace }))
}

fn warm_start_bias(model: &mut NamModel, set: &TrainingSet) -> Result<()> {
    let total: f64 = set.weights().iter().sum();
    if total <= 0.0 {
        return Ok(());
    }
    let bias = model.bias();
    let mut acc = 0.0;
    for (i, x) in set.points().iter().enumerate() {
        let additive = model.psi(x)? - bias;
        acc += set.weights()[i] * (set.psi_star()[i] - additive);
    }
    model.set_bias(acc / total);
    Ok(())
}

fn diverged(epoch: usize, loss: f64, trace: Vec<f64>) -> Error {
    Error::TrainingDiverged { epoch, loss, trace }
}
