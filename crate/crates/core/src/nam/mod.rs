//! Neural additive model: one small scalar-to-scalar network per feature.
//!
//! All trainable values live in one flat parameter vector so the optimizer
//! and gradient checks can treat the model uniformly. Layout:
//!
//! ```text
//! [subnet 0][subnet 1]...[subnet m-1][bias][heads]
//! subnet  = for each layer: weights (out x in, row-major), then biases (out)
//! heads   = lasso: beta_1..beta_m | shortcut: alpha_1..alpha_m, omega_1..omega_m
//! ```

mod checkpoint;
mod curve;
mod loss;
mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use checkpoint::{decode_checkpoint, encode_checkpoint, NamCheckpoint, CHECKPOINT_VERSION};
pub use curve::{shape_curve, ShapeCurve};
pub use loss::{loss_and_gradient, loss_value, TrainingSet};
pub use train::{train, TrainReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// `psi = sum_k g_k(x_k) + bias`
    Base,
    /// `psi = sum_k beta_k g_k(x_k) + bias`, L1 penalty on beta
    Lasso,
    /// `psi = sum_k [alpha_k g_k(x_k) + (1 - alpha_k) omega_k x_k] + bias`,
    /// L1 penalty on alpha and L2 penalty on the subnetwork weights
    Shortcut,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "base" => Ok(Variant::Base),
            "lasso" => Ok(Variant::Lasso),
            "shortcut" => Ok(Variant::Shortcut),
            _ => Err(Error::InvalidInput(format!(
                "unknown variant '{s}' (expected base, lasso or shortcut)"
            ))),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Base => "base",
            Variant::Lasso => "lasso",
            Variant::Shortcut => "shortcut",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            _ => Err(Error::InvalidInput(format!("unknown activation '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamConfig {
    pub hidden_sizes: Vec<usize>,
    pub activation: Activation,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Mini-batch size; `None` means full batch.
    pub batch: Option<usize>,
    pub seed: u64,
    pub variant: Variant,
}

impl Default for NamConfig {
    fn default() -> Self {
        Self {
            hidden_sizes: vec![64, 32],
            activation: Activation::Relu,
            learning_rate: 1e-3,
            epochs: 2000,
            batch: None,
            seed: 0,
            variant: Variant::Base,
        }
    }
}

impl NamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_sizes.is_empty() || self.hidden_sizes.contains(&0) {
            return Err(Error::InvalidInput(
                "hidden_sizes must be a nonempty list of positive sizes".into(),
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidInput("learning_rate must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidInput("epochs must be at least 1".into()));
        }
        if self.batch == Some(0) {
            return Err(Error::InvalidInput("batch must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub m: usize,
    pub hidden_sizes: Vec<usize>,
    pub activation: Activation,
    pub variant: Variant,
}

impl Architecture {
    fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.hidden_sizes.len() + 2);
        sizes.push(1);
        sizes.extend_from_slice(&self.hidden_sizes);
        sizes.push(1);
        sizes
    }

    /// Parameter count of one subnetwork; `None` on overflow.
    pub fn subnet_len(&self) -> Option<usize> {
        self.layer_sizes().windows(2).try_fold(0usize, |acc, w| {
            w[0].checked_mul(w[1])?.checked_add(w[1])?.checked_add(acc)
        })
    }

    fn head_len(&self) -> usize {
        match self.variant {
            Variant::Base => 0,
            Variant::Lasso => self.m,
            Variant::Shortcut => 2 * self.m,
        }
    }

    /// Total parameter count; `None` on overflow.
    pub fn param_len(&self) -> Option<usize> {
        self.subnet_len()?
            .checked_mul(self.m)?
            .checked_add(1)?
            .checked_add(self.head_len())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeValues {
    pub g: Vec<f64>,
    pub psi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamModel {
    arch: Architecture,
    params: Vec<f64>,
}

/// Per-layer activations of one subnetwork for one input, kept for backprop.
pub(crate) struct SubnetTrace {
    /// `pre[l]` and `post[l]` for hidden layer `l`
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
    pub output: f64,
}

pub fn init_model(m: usize, config: &NamConfig) -> Result<NamModel> {
    if m == 0 {
        return Err(Error::InvalidInput(
            "model needs at least one feature".into(),
        ));
    }
    config.validate()?;
    let arch = Architecture {
        m,
        hidden_sizes: config.hidden_sizes.clone(),
        activation: config.activation,
        variant: config.variant,
    };
    let len = arch
        .param_len()
        .ok_or_else(|| Error::InvalidInput("architecture too large".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = Vec::with_capacity(len);
    let sizes = arch.layer_sizes();
    let last = sizes.len() - 2;
    for _ in 0..m {
        for (l, w) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = if l == last {
                (6.0 / (fan_in + fan_out) as f64).sqrt()
            } else {
                (6.0 / fan_in as f64).sqrt()
            };
            for _ in 0..fan_in * fan_out {
                params.push(rng.random_range(-bound..bound));
            }
            // first-layer biases spread the hinge locations over the input range
            for _ in 0..fan_out {
                params.push(if l == 0 {
                    rng.random_range(-1.0..1.0)
                } else {
                    0.0
                });
            }
        }
    }
    params.push(0.0);
    match arch.variant {
        Variant::Base => {}
        Variant::Lasso => params.extend(std::iter::repeat_n(1.0, m)),
        Variant::Shortcut => {
            params.extend(std::iter::repeat_n(0.5, m));
            params.extend(std::iter::repeat_n(0.0, m));
        }
    }
    debug_assert_eq!(params.len(), len);
    Ok(NamModel { arch, params })
}

impl NamModel {
    pub(crate) fn from_parts(arch: Architecture, params: Vec<f64>) -> Result<Self> {
        let expected = arch
            .param_len()
            .ok_or_else(|| Error::InvalidInput("architecture too large".into()))?;
        if params.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: params.len(),
            });
        }
        Ok(Self { arch, params })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn m(&self) -> usize {
        self.arch.m
    }

    pub fn variant(&self) -> Variant {
        self.arch.variant
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn subnet_len(&self) -> usize {
        self.arch.subnet_len().expect("validated at construction")
    }

    fn bias_index(&self) -> usize {
        self.subnet_len() * self.arch.m
    }

    pub fn bias(&self) -> f64 {
        self.params[self.bias_index()]
    }

    pub fn set_bias(&mut self, b: f64) {
        let i = self.bias_index();
        self.params[i] = b;
    }

    pub(crate) fn subnet_range(&self, k: usize) -> std::ops::Range<usize> {
        let len = self.subnet_len();
        k * len..(k + 1) * len
    }

    pub(crate) fn beta_index(&self, k: usize) -> usize {
        debug_assert_eq!(self.arch.variant, Variant::Lasso);
        self.bias_index() + 1 + k
    }

    pub(crate) fn alpha_index(&self, k: usize) -> usize {
        debug_assert_eq!(self.arch.variant, Variant::Shortcut);
        self.bias_index() + 1 + k
    }

    pub(crate) fn omega_index(&self, k: usize) -> usize {
        debug_assert_eq!(self.arch.variant, Variant::Shortcut);
        self.bias_index() + 1 + self.arch.m + k
    }

    pub fn beta(&self) -> Option<Vec<f64>> {
        (self.arch.variant == Variant::Lasso).then(|| {
            (0..self.arch.m)
                .map(|k| self.params[self.beta_index(k)])
                .collect()
        })
    }

    /// Mixing weights, reported clamped to `[0, 1]`.
    pub fn alpha(&self) -> Option<Vec<f64>> {
        (self.arch.variant == Variant::Shortcut).then(|| {
            (0..self.arch.m)
                .map(|k| self.params[self.alpha_index(k)].clamp(0.0, 1.0))
                .collect()
        })
    }

    pub fn omega(&self) -> Option<Vec<f64>> {
        (self.arch.variant == Variant::Shortcut).then(|| {
            (0..self.arch.m)
                .map(|k| self.params[self.omega_index(k)])
                .collect()
        })
    }

    /// Raw subnetwork output `g_k(x)`.
    pub fn subnet_output(&self, k: usize, x: f64) -> f64 {
        self.subnet_forward(k, x).output
    }

    pub(crate) fn subnet_forward(&self, k: usize, x: f64) -> SubnetTrace {
        let p = &self.params[self.subnet_range(k)];
        let sizes = self.arch.layer_sizes();
        let n_layers = sizes.len() - 1;
        let mut pre = Vec::with_capacity(n_layers - 1);
        let mut post = Vec::with_capacity(n_layers - 1);
        let mut input = vec![x];
        let mut offset = 0;
        let mut output = 0.0;
        for l in 0..n_layers {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let w = &p[offset..offset + fan_in * fan_out];
            let b = &p[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            offset += fan_in * fan_out + fan_out;
            let z: Vec<f64> = (0..fan_out)
                .map(|o| {
                    let row = &w[o * fan_in..(o + 1) * fan_in];
                    b[o] + row.iter().zip(&input).map(|(a, c)| a * c).sum::<f64>()
                })
                .collect();
            if l + 1 == n_layers {
                output = z[0];
            } else {
                let a: Vec<f64> = z.iter().map(|&v| self.arch.activation.apply(v)).collect();
                pre.push(z);
                post.push(a.clone());
                input = a;
            }
        }
        SubnetTrace { pre, post, output }
    }

    /// Accumulates `upstream * d g_k / d params` into `grad` (subnet slice only).
    pub(crate) fn subnet_backward(
        &self,
        k: usize,
        x: f64,
        trace: &SubnetTrace,
        upstream: f64,
        grad: &mut [f64],
    ) {
        let range = self.subnet_range(k);
        let p = &self.params[range.clone()];
        let g = &mut grad[range];
        let sizes = self.arch.layer_sizes();
        let n_layers = sizes.len() - 1;

        let mut offsets = Vec::with_capacity(n_layers);
        let mut off = 0;
        for l in 0..n_layers {
            offsets.push(off);
            off += sizes[l] * sizes[l + 1] + sizes[l + 1];
        }

        // delta: dL/dz for the current layer's outputs
        let mut delta = vec![upstream];
        for l in (0..n_layers).rev() {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let w_off = offsets[l];
            let b_off = w_off + fan_in * fan_out;
            let input: &[f64] = if l == 0 {
                std::slice::from_ref(&x)
            } else {
                &trace.post[l - 1]
            };
            for o in 0..fan_out {
                let d = delta[o];
                g[b_off + o] += d;
                for i in 0..fan_in {
                    g[w_off + o * fan_in + i] += d * input[i];
                }
            }
            if l > 0 {
                let mut next = vec![0.0; fan_in];
                for (i, nx) in next.iter_mut().enumerate() {
                    let mut s = 0.0;
                    for o in 0..fan_out {
                        s += p[w_off + o * fan_in + i] * delta[o];
                    }
                    let z = trace.pre[l - 1][i];
                    let a = trace.post[l - 1][i];
                    *nx = s * self.arch.activation.derivative(z, a);
                }
                delta = next;
            }
        }
    }

    /// Contribution of feature `k` to `psi` given its subnet output.
    pub fn contribution(&self, k: usize, g: f64, x: f64) -> f64 {
        match self.arch.variant {
            Variant::Base => g,
            Variant::Lasso => self.params[self.beta_index(k)] * g,
            Variant::Shortcut => {
                let alpha = self.params[self.alpha_index(k)];
                let omega = self.params[self.omega_index(k)];
                alpha * g + (1.0 - alpha) * omega * x
            }
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<ShapeValues> {
        if x.len() != self.arch.m {
            return Err(Error::DimensionMismatch {
                expected: self.arch.m,
                got: x.len(),
            });
        }
        let g: Vec<f64> = (0..self.arch.m)
            .map(|k| self.subnet_output(k, x[k]))
            .collect();
        let psi = self.psi_from_g(&g, x);
        Ok(ShapeValues { g, psi })
    }

    pub fn psi_from_g(&self, g: &[f64], x: &[f64]) -> f64 {
        self.bias()
            + (0..self.arch.m)
                .map(|k| self.contribution(k, g[k], x[k]))
                .sum::<f64>()
    }

    pub fn psi(&self, x: &[f64]) -> Result<f64> {
        Ok(self.forward(x)?.psi)
    }
}
