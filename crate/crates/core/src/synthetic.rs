//! Ground truth from Cox models with known log-risk, and the independent
//! oracles (per-example minimizer, finite differences) used to check the
//! explanation pipeline.

use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::survival::{ChfPredictor, PiecewiseChf, Sample, SurvivalDataset, TimeGrid};

/// A univariate term of an additive log-risk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ShapeFn {
    Zero,
    Linear(f64),
    /// `sin(freq * x)`
    Sine(f64),
    /// `coef * x^2`
    Quadratic(f64),
}

impl ShapeFn {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            ShapeFn::Zero => 0.0,
            ShapeFn::Linear(c) => c * x,
            ShapeFn::Sine(f) => (f * x).sin(),
            ShapeFn::Quadratic(c) => c * x * x,
        }
    }
}

impl FromStr for ShapeFn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n.trim(), Some(a.trim())),
            None => (s, None),
        };
        let num = |default: f64| -> Result<f64> {
            arg.map_or(Ok(default), |a| {
                a.parse()
                    .map_err(|_| Error::InvalidInput(format!("bad number '{a}' in shape '{s}'")))
            })
        };
        match name {
            "zero" | "0" => Ok(ShapeFn::Zero),
            "linear" => Ok(ShapeFn::Linear(num(1.0)?)),
            "sine" => Ok(ShapeFn::Sine(num(1.0)?)),
            "quadratic" => Ok(ShapeFn::Quadratic(num(1.0)?)),
            _ => Err(Error::InvalidInput(format!("unknown shape function '{s}'"))),
        }
    }
}

impl std::fmt::Display for ShapeFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ShapeFn::Zero => write!(f, "zero"),
            ShapeFn::Linear(c) => write!(f, "linear:{c}"),
            ShapeFn::Sine(c) => write!(f, "sine:{c}"),
            ShapeFn::Quadratic(c) => write!(f, "quadratic:{c}"),
        }
    }
}

/// The true log-risk `psi(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PsiSpec {
    /// `psi = b . x`
    Linear(Vec<f64>),
    /// `psi = sum_k f_k(x_k)`
    Additive(Vec<ShapeFn>),
}

impl PsiSpec {
    pub fn m(&self) -> usize {
        match self {
            PsiSpec::Linear(b) => b.len(),
            PsiSpec::Additive(f) => f.len(),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            PsiSpec::Linear(b) => b.iter().zip(x).map(|(b, x)| b * x).sum(),
            PsiSpec::Additive(f) => f.iter().zip(x).map(|(f, &x)| f.eval(x)).sum(),
        }
    }
}

/// `linear:1,0.5,0` or `additive:linear:1,sine:3,zero`.
impl FromStr for PsiSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, rest) = s.split_once(':').ok_or_else(|| {
            Error::InvalidInput(format!("psi '{s}' needs a 'linear:' or 'additive:' prefix"))
        })?;
        match kind.trim() {
            "linear" => rest
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::InvalidInput(format!("bad coefficient '{v}'")))
                })
                .collect::<Result<Vec<_>>>()
                .map(PsiSpec::Linear),
            "additive" => rest
                .split(',')
                .map(ShapeFn::from_str)
                .collect::<Result<Vec<_>>>()
                .map(PsiSpec::Additive),
            other => Err(Error::InvalidInput(format!("unknown psi kind '{other}'"))),
        }
    }
}

impl std::fmt::Display for PsiSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PsiSpec::Linear(b) => {
                let parts: Vec<String> = b.iter().map(f64::to_string).collect();
                write!(f, "linear:{}", parts.join(","))
            }
            PsiSpec::Additive(fs) => {
                let parts: Vec<String> = fs.iter().map(ShapeFn::to_string).collect();
                write!(f, "additive:{}", parts.join(","))
            }
        }
    }
}

/// Weibull baseline `H_0(t) = (t / scale)^shape`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weibull {
    pub scale: f64,
    pub shape: f64,
}

impl Weibull {
    pub fn chf(&self, t: f64) -> f64 {
        (t.max(0.0) / self.scale).powf(self.shape)
    }

    pub fn inverse_chf(&self, h: f64) -> f64 {
        self.scale * h.powf(1.0 / self.shape)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FeatureDistribution {
    Uniform { low: f64, high: f64 },
    StandardNormal,
}

impl FromStr for FeatureDistribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(FeatureDistribution::Uniform {
                low: -1.0,
                high: 1.0,
            }),
            "normal" => Ok(FeatureDistribution::StandardNormal),
            _ => Err(Error::InvalidInput(format!(
                "unknown feature distribution '{s}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n: usize,
    pub psi: PsiSpec,
    pub baseline: Weibull,
    pub censoring_rate: f64,
    pub features: FeatureDistribution,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn m(&self) -> usize {
        self.psi.m()
    }

    fn validate(&self) -> Result<()> {
        if self.n < 2 || self.m() == 0 {
            return Err(Error::InvalidInput(
                "need n >= 2 and at least one feature".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.censoring_rate) {
            return Err(Error::InvalidInput(format!(
                "censoring rate must be in [0, 1), got {}",
                self.censoring_rate
            )));
        }
        if !(self.baseline.scale > 0.0 && self.baseline.shape > 0.0)
            || !self.baseline.scale.is_finite()
            || !self.baseline.shape.is_finite()
        {
            return Err(Error::InvalidInput(
                "Weibull scale and shape must be positive".into(),
            ));
        }
        if let FeatureDistribution::Uniform { low, high } = self.features {
            if !(low < high && low.is_finite() && high.is_finite()) {
                return Err(Error::InvalidInput(
                    "uniform bounds must satisfy low < high".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub dataset: SurvivalDataset,
    /// True `psi(x_i)` per sample.
    pub psi: Vec<f64>,
    /// Uncensored event times, before censoring was applied.
    pub event_times: Vec<f64>,
    /// Upper end of the uniform censoring distribution (`inf` without censoring).
    pub censoring_bound: f64,
}

/// Samples event times by inverting the Cox survival law:
/// `T = H_0^{-1}(-ln U / exp(psi(x)))`, then censors with `C ~ U[0, c]`,
/// `c` bisected until the censored fraction is within 0.05 of the target.
pub fn generate_cox_data(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let (n, m) = (spec.n, spec.m());
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..m)
                .map(|_| match spec.features {
                    FeatureDistribution::Uniform { low, high } => rng.random_range(low..high),
                    FeatureDistribution::StandardNormal => rng.sample(StandardNormal),
                })
                .collect()
        })
        .collect();
    let psi: Vec<f64> = rows.iter().map(|x| spec.psi.eval(x)).collect();
    let event_times: Vec<f64> = psi
        .iter()
        .map(|&p| {
            // open interval keeps ln(u) finite
            let u: f64 = rng.random_range(f64::EPSILON..1.0);
            spec.baseline.inverse_chf(-u.ln() / p.exp())
        })
        .collect();
    let fractions: Vec<f64> = (0..n)
        .map(|_| rng.random_range(f64::EPSILON..1.0))
        .collect();

    let censored_fraction = |c: f64| {
        event_times
            .iter()
            .zip(&fractions)
            .filter(|(&t, &v)| c * v < t)
            .count() as f64
            / n as f64
    };

    let bound = if spec.censoring_rate == 0.0 {
        f64::INFINITY
    } else {
        let max_t = event_times.iter().copied().fold(0.0, f64::max);
        let min_v = fractions.iter().copied().fold(1.0, f64::min);
        let (mut lo, mut hi) = (0.0, max_t / min_v * 2.0);
        let mut best = (hi, censored_fraction(hi));
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let rate = censored_fraction(mid);
            if (rate - spec.censoring_rate).abs() < (best.1 - spec.censoring_rate).abs() {
                best = (mid, rate);
            }
            if rate > spec.censoring_rate {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        if (best.1 - spec.censoring_rate).abs() > 0.05 {
            return Err(Error::Calibration {
                achieved: best.1,
                target: spec.censoring_rate,
            });
        }
        best.0
    };

    let samples: Vec<Sample> = rows
        .into_iter()
        .enumerate()
        .map(|(i, x)| {
            let censor = bound * fractions[i];
            let event = event_times[i] <= censor;
            Sample::new(x, if event { event_times[i] } else { censor }, event)
        })
        .collect();
    let dataset = SurvivalDataset::from_samples(samples)?;
    Ok(SyntheticData {
        dataset,
        psi,
        event_times,
        censoring_bound: bound,
    })
}

/// The exact Cox model `H(t|x) = H_0(t) exp(psi(x))` on a fixed grid.
#[derive(Debug, Clone)]
pub struct CoxBlackBox {
    grid: Arc<TimeGrid>,
    baseline: Weibull,
    psi: PsiSpec,
}

impl CoxBlackBox {
    pub fn new(grid: Arc<TimeGrid>, baseline: Weibull, psi: PsiSpec) -> Self {
        Self {
            grid,
            baseline,
            psi,
        }
    }
}

impl ChfPredictor for CoxBlackBox {
    fn grid(&self) -> &Arc<TimeGrid> {
        &self.grid
    }

    fn n_features(&self) -> usize {
        self.psi.m()
    }

    fn predict_chf(&self, x: &[f64]) -> Result<PiecewiseChf> {
        if x.len() != self.psi.m() {
            return Err(Error::DimensionMismatch {
                expected: self.psi.m(),
                got: x.len(),
            });
        }
        let risk = self.psi.eval(x).exp();
        let values = self
            .grid
            .times()
            .iter()
            .map(|&t| self.baseline.chf(t) * risk)
            .collect();
        PiecewiseChf::new(Arc::clone(&self.grid), values)
    }
}

/// Returns the same CHF for every input.
#[derive(Debug, Clone)]
pub struct ConstantBlackBox {
    chf: PiecewiseChf,
    m: usize,
}

impl ConstantBlackBox {
    pub fn new(chf: PiecewiseChf, m: usize) -> Self {
        Self { chf, m }
    }
}

impl ChfPredictor for ConstantBlackBox {
    fn grid(&self) -> &Arc<TimeGrid> {
        self.chf.grid()
    }

    fn n_features(&self) -> usize {
        self.m
    }

    fn predict_chf(&self, x: &[f64]) -> Result<PiecewiseChf> {
        if x.len() != self.m {
            return Err(Error::DimensionMismatch {
                expected: self.m,
                got: x.len(),
            });
        }
        Ok(self.chf.clone())
    }
}

/// `psi*_i = sum_j tau_j phi_ij / sum_j tau_j`, the minimizer of each
/// example's squared-error term.
pub fn oracle_psi_star(phi: &[Vec<f64>], tau: &[f64]) -> Result<Vec<f64>> {
    let total: f64 = tau.iter().sum();
    if total.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::Numeric(
            "interval widths must sum to a positive value".into(),
        ));
    }
    phi.iter()
        .map(|row| {
            if row.len() != tau.len() {
                return Err(Error::DimensionMismatch {
                    expected: tau.len(),
                    got: row.len(),
                });
            }
            Ok(row.iter().zip(tau).map(|(p, t)| p * t).sum::<f64>() / total)
        })
        .collect()
}

/// Central differences `(L(theta + h e_i) - L(theta - h e_i)) / 2h`.
pub fn finite_difference_gradient<F>(mut loss: F, params: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut probe = params.to_vec();
    let mut grad = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let up = loss(&probe)?;
        probe[i] = orig - h;
        let down = loss(&probe)?;
        probe[i] = orig;
        if !(up.is_finite() && down.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite loss around parameter {i}"
            )));
        }
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(psi: PsiSpec, n: usize, censoring: f64) -> SyntheticSpec {
        SyntheticSpec {
            n,
            psi,
            baseline: Weibull {
                scale: 1.0,
                shape: 1.0,
            },
            censoring_rate: censoring,
            features: FeatureDistribution::Uniform {
                low: -1.0,
                high: 1.0,
            },
            seed: 17,
        }
    }

    #[test]
    fn null_model_gives_unit_exponential_times() {
        let data = generate_cox_data(&spec(PsiSpec::Linear(vec![0.0]), 2000, 0.0)).unwrap();
        assert!(data.dataset.samples().iter().all(|s| s.event));
        let mut t = data.dataset.times();
        t.sort_by(f64::total_cmp);
        let n = t.len() as f64;
        let ks = t
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = 1.0 - (-x).exp();
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max);
        // 1% critical value 1.628 / sqrt(n)
        assert!(ks < 1.628 / n.sqrt(), "KS statistic {ks}");
    }

    #[test]
    fn high_risk_group_fails_earlier() {
        let data = generate_cox_data(&spec(PsiSpec::Linear(vec![1.0, 0.0]), 1000, 0.0)).unwrap();
        let median = |mut v: Vec<f64>| {
            v.sort_by(f64::total_cmp);
            v[v.len() / 2]
        };
        let (hi, lo): (Vec<_>, Vec<_>) = data
            .dataset
            .samples()
            .iter()
            .partition(|s| s.features[0] > 0.0);
        assert!(
            median(hi.iter().map(|s| s.time).collect())
                < median(lo.iter().map(|s| s.time).collect())
        );
    }

    #[test]
    fn censoring_is_calibrated() {
        for rate in [0.2, 0.5] {
            let data =
                generate_cox_data(&spec(PsiSpec::Linear(vec![1.0, 0.5]), 500, rate)).unwrap();
            let realized =
                data.dataset.samples().iter().filter(|s| !s.event).count() as f64 / 500.0;
            assert!((realized - rate).abs() <= 0.05, "{realized} vs {rate}");
        }
    }

    #[test]
    fn reproducible() {
        let s = spec(
            PsiSpec::Additive(vec![ShapeFn::Linear(1.0), ShapeFn::Sine(3.0)]),
            50,
            0.2,
        );
        let a = generate_cox_data(&s).unwrap();
        let b = generate_cox_data(&s).unwrap();
        assert_eq!(a.dataset, b.dataset);
        assert_eq!(a.psi, b.psi);
    }

    #[test]
    fn ranking_follows_psi() {
        let mut s = spec(PsiSpec::Linear(vec![1.0, 0.5, 0.0]), 500, 0.0);
        s.features = FeatureDistribution::StandardNormal;
        let data = generate_cox_data(&s).unwrap();
        // Kendall tau between psi and -T
        let (psi, t) = (&data.psi, &data.event_times);
        let mut concordant = 0i64;
        let mut discordant = 0i64;
        for i in 0..psi.len() {
            for j in i + 1..psi.len() {
                let s = (psi[i] - psi[j]) * (t[j] - t[i]);
                if s > 0.0 {
                    concordant += 1;
                } else if s < 0.0 {
                    discordant += 1;
                }
            }
        }
        let tau = (concordant - discordant) as f64 / (concordant + discordant) as f64;
        assert!(tau > 0.3, "kendall tau {tau}");
    }

    #[test]
    fn psi_star_cases() {
        let tau = [1.0, 1.0];
        assert_eq!(oracle_psi_star(&[vec![4.0, 4.0]], &tau).unwrap(), vec![4.0]);
        assert_eq!(oracle_psi_star(&[vec![0.0, 2.0]], &tau).unwrap(), vec![1.0]);
        assert_eq!(
            oracle_psi_star(&[vec![0.0, 3.0]], &[2.0, 1.0]).unwrap(),
            vec![1.0]
        );
    }

    #[test]
    fn psi_star_matches_scalar_minimization() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let tau: Vec<f64> = (0..6).map(|_| rng.random_range(0.01..2.0)).collect();
            let row: Vec<f64> = (0..6).map(|_| rng.random_range(-3.0..3.0)).collect();
            let f = |p: f64| {
                row.iter()
                    .zip(&tau)
                    .map(|(r, t)| t * (r - p) * (r - p))
                    .sum::<f64>()
            };
            // golden-section search
            let (mut a, mut b) = (-5.0f64, 5.0f64);
            let g = (5f64.sqrt() - 1.0) / 2.0;
            for _ in 0..200 {
                let c = b - g * (b - a);
                let d = a + g * (b - a);
                if f(c) < f(d) {
                    b = d;
                } else {
                    a = c;
                }
            }
            let star = oracle_psi_star(std::slice::from_ref(&row), &tau).unwrap()[0];
            assert!((star - 0.5 * (a + b)).abs() < 1e-7);
        }
    }

    #[test]
    fn finite_differences() {
        let g = finite_difference_gradient(|p| Ok(p[0] * p[0]), &[3.0], 1e-4).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-6);
        let g = finite_difference_gradient(|_| Ok(2.5), &[1.0, -1.0], 1e-4).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
        assert!(finite_difference_gradient(|p| Ok(1.0 / (p[0] - 1.0)), &[1.0], 0.0).is_err());
    }

    #[test]
    fn spec_strings_roundtrip() {
        let s: PsiSpec = "additive:linear:1,sine:3,zero".parse().unwrap();
        assert_eq!(
            s,
            PsiSpec::Additive(vec![
                ShapeFn::Linear(1.0),
                ShapeFn::Sine(3.0),
                ShapeFn::Zero
            ])
        );
        assert_eq!(s.to_string().parse::<PsiSpec>().unwrap(), s);
        let l: PsiSpec = "linear:1,0.5,0".parse().unwrap();
        assert_eq!(l, PsiSpec::Linear(vec![1.0, 0.5, 0.0]));
        assert!("quadratic".parse::<PsiSpec>().is_err());
    }

    #[test]
    fn cox_black_box_is_proportional() {
        let grid = Arc::new(TimeGrid::new(vec![0.5, 1.0, 2.0], 0.1).unwrap());
        let bb = CoxBlackBox::new(
            grid,
            Weibull {
                scale: 1.0,
                shape: 2.0,
            },
            PsiSpec::Linear(vec![1.0]),
        );
        let a = bb.predict_chf(&[0.0]).unwrap();
        let b = bb.predict_chf(&[2.0]).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((y / x - 2f64.exp()).abs() < 1e-12);
        }
    }
}
