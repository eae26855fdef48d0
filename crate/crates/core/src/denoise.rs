//! Denoisers in both parameterizations, and the conversions between them.
//!
//! A noise-prediction denoiser returns `eps_hat(x_t, t)`. An x0-prediction
//! denoiser returns the unknown part `s0_hat = f(x_t, t, y, d)` of the clean
//! sample; the full prediction is `x0_hat = s0_hat + y`.
//!
//! [`DenoiserModel`] is an exact oracle: it evaluates the posterior mean
//! `E[x0 | x_t]` of a known Gaussian or isotropic Gaussian-mixture data law
//! under the noising kernel `N(sqrt(alpha_bar_t) x0, (1 − alpha_bar_t) I)`.

use std::f64::consts::PI;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::standard_normal;
use crate::schedule::NoiseSchedule;
use crate::state::StateVector;

/// What a denoiser predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameterization {
    NoisePrediction,
    X0Prediction,
}

/// The known component `y` of the clean sample plus an opaque condition tag `d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub y: StateVector,
    /// Carried through to the denoiser, never interpreted by the samplers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
}

impl Condition {
    pub fn new(y: StateVector) -> Self {
        Self { y, tag: None }
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.tag = Some(tag.into());
        self
    }
}

/// Anything the samplers can query for a prediction.
///
/// Implementations must be pure: the samplers evaluate them from many chains at once.
pub trait Denoiser: Sync {
    fn parameterization(&self) -> Parameterization;

    fn condition(&self) -> Option<&Condition>;

    /// Dimension `D` of the states this denoiser accepts.
    fn dim(&self) -> usize;

    /// `eps_hat` or `s0_hat` depending on [`Denoiser::parameterization`].
    fn predict(&self, x_t: &StateVector, t: usize, schedule: &NoiseSchedule) -> Result<StateVector>;
}

/// Law of the clean sample `x0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataLaw {
    Gaussian {
        mean: StateVector,
        std: f64,
    },
    GaussianMixture {
        weights: Vec<f64>,
        means: Vec<StateVector>,
        stds: Vec<f64>,
    },
}

const WEIGHT_SUM_TOLERANCE: f64 = 1e-12;

impl DataLaw {
    pub fn gaussian(mean: StateVector, std: f64) -> Result<Self> {
        let law = DataLaw::Gaussian { mean, std };
        law.validate()?;
        Ok(law)
    }

    pub fn mixture(weights: Vec<f64>, means: Vec<StateVector>, stds: Vec<f64>) -> Result<Self> {
        let law = DataLaw::GaussianMixture { weights, means, stds };
        law.validate()?;
        Ok(law)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DataLaw::Gaussian { std, .. } => check_std(*std),
            DataLaw::GaussianMixture { weights, means, stds } => {
                if weights.is_empty() {
                    return Err(Error::invalid("mixture needs at least one component"));
                }
                if means.len() != weights.len() || stds.len() != weights.len() {
                    return Err(Error::invalid(format!(
                        "mixture has {} weights, {} means and {} stds",
                        weights.len(),
                        means.len(),
                        stds.len()
                    )));
                }
                if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
                    return Err(Error::invalid("mixture weights must be positive"));
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
                    return Err(Error::invalid(format!("mixture weights sum to {total}, not 1")));
                }
                let dim = means[0].dim();
                for m in means {
                    m.check_dim(dim)?;
                }
                stds.iter().try_for_each(|s| check_std(*s))
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DataLaw::Gaussian { mean, .. } => mean.dim(),
            DataLaw::GaussianMixture { means, .. } => means[0].dim(),
        }
    }

    fn components(&self) -> Vec<(f64, &StateVector, f64)> {
        match self {
            DataLaw::Gaussian { mean, std } => vec![(1.0, mean, *std)],
            DataLaw::GaussianMixture { weights, means, stds } => weights
                .iter()
                .zip(means)
                .zip(stds)
                .map(|((w, m), s)| (*w, m, *s))
                .collect(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> StateVector {
        let (mean, std) = match self {
            DataLaw::Gaussian { mean, std } => (mean, *std),
            DataLaw::GaussianMixture { weights, means, stds } => {
                let k = WeightedIndex::new(weights)
                    .expect("validated mixture weights")
                    .sample(rng);
                (&means[k], stds[k])
            }
        };
        let z = standard_normal(rng, mean.dim());
        mean.lincomb(1.0, &z, std).expect("finite sample")
    }

    /// `sum_k w_k mu_k`.
    pub fn mean(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (w, m, _) in self.components() {
            for (o, v) in out.iter_mut().zip(m.iter()) {
                *o += w * v;
            }
        }
        out
    }

    /// Row-major `D × D` covariance `sum_k w_k (s_k² I + mu_k mu_kᵀ) − m mᵀ`.
    pub fn covariance(&self) -> Vec<f64> {
        let d = self.dim();
        let mean = self.mean();
        let mut cov = vec![0.0; d * d];
        for (w, m, s) in self.components() {
            for i in 0..d {
                cov[i * d + i] += w * s * s;
                for j in 0..d {
                    cov[i * d + j] += w * m[i] * m[j];
                }
            }
        }
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] -= mean[i] * mean[j];
            }
        }
        cov
    }

    /// Posterior responsibilities of each component given `x_t`; a single
    /// Gaussian always has responsibility 1.
    pub fn responsibilities(&self, x_t: &StateVector, t: usize, schedule: &NoiseSchedule) -> Result<Vec<f64>> {
        schedule.check_level(t)?;
        x_t.check_dim(self.dim())?;
        let ab = schedule.alpha_bar(t);
        let scale = ab.sqrt();
        let d = x_t.dim() as f64;
        let logs: Vec<f64> = self
            .components()
            .iter()
            .map(|(w, m, s)| {
                let var = ab * s * s + (1.0 - ab);
                let sq: f64 = x_t
                    .iter()
                    .zip(m.iter())
                    .map(|(x, mu)| (x - scale * mu).powi(2))
                    .sum();
                w.ln() - 0.5 * d * (2.0 * PI * var).ln() - sq / (2.0 * var)
            })
            .collect();
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::Numerical("all mixture log-densities are non-finite".into()));
        }
        let weights: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = weights.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::Numerical("mixture responsibilities underflowed".into()));
        }
        Ok(weights.into_iter().map(|w| w / total).collect())
    }

    /// Exact `E[x0 | x_t]`.
    pub fn posterior_mean(&self, x_t: &StateVector, t: usize, schedule: &NoiseSchedule) -> Result<StateVector> {
        let resp = self.responsibilities(x_t, t, schedule)?;
        let ab = schedule.alpha_bar(t);
        let scale = ab.sqrt();
        let mut out = vec![0.0; x_t.dim()];
        for ((_, m, s), r) in self.components().into_iter().zip(resp) {
            let s2 = s * s;
            let denom = ab * s2 + (1.0 - ab);
            let a = scale * s2 / denom;
            let b = (1.0 - ab) / denom;
            for ((o, x), mu) in out.iter_mut().zip(x_t.iter()).zip(m.iter()) {
                *o += r * (a * x + b * mu);
            }
        }
        StateVector::new(out)
    }
}

fn check_std(std: f64) -> Result<()> {
    if !(std > 0.0 && std.is_finite()) {
        return Err(Error::invalid(format!("std must be positive, got {std}")));
    }
    Ok(())
}

/// Closed-form oracle denoiser over a known [`DataLaw`].
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserModel {
    parameterization: Parameterization,
    law: DataLaw,
    condition: Option<Condition>,
}

impl DenoiserModel {
    pub fn new(parameterization: Parameterization, law: DataLaw, condition: Option<Condition>) -> Result<Self> {
        law.validate()?;
        if let Some(c) = &condition {
            c.y.check_dim(law.dim())?;
        }
        if parameterization == Parameterization::X0Prediction && condition.is_none() {
            return Err(Error::invalid("x0-prediction denoiser requires a condition y"));
        }
        Ok(Self {
            parameterization,
            law,
            condition,
        })
    }

    pub fn noise_prediction(law: DataLaw) -> Result<Self> {
        Self::new(Parameterization::NoisePrediction, law, None)
    }

    pub fn x0_prediction(law: DataLaw, condition: Condition) -> Result<Self> {
        Self::new(Parameterization::X0Prediction, law, Some(condition))
    }

    pub fn law(&self) -> &DataLaw {
        &self.law
    }

}

impl Denoiser for DenoiserModel {
    fn parameterization(&self) -> Parameterization {
        self.parameterization
    }

    fn condition(&self) -> Option<&Condition> {
        self.condition.as_ref()
    }

    fn dim(&self) -> usize {
        self.law.dim()
    }

    fn predict(&self, x_t: &StateVector, t: usize, schedule: &NoiseSchedule) -> Result<StateVector> {
        schedule.check_step(t)?;
        let x0_hat = self.law.posterior_mean(x_t, t, schedule)?;
        match self.parameterization {
            Parameterization::X0Prediction => {
                let y = &self.condition.as_ref().expect("checked in constructor").y;
                x0_hat.sub(y)
            }
            Parameterization::NoisePrediction => eps_from_x0(x_t, &x0_hat, t, schedule),
        }
    }
}

/// `(x_t − sqrt(1 − alpha_bar_t) · eps_hat) / sqrt(alpha_bar_t)`.
pub fn x0_from_eps(x_t: &StateVector, eps_hat: &StateVector, t: usize, schedule: &NoiseSchedule) -> Result<StateVector> {
    schedule.check_step(t)?;
    let ab = schedule.alpha_bar(t);
    let root = ab.sqrt();
    x_t.lincomb(1.0 / root, eps_hat, -(1.0 - ab).sqrt() / root)
}

/// `(x_t − sqrt(alpha_bar_t) · x0_hat) / sqrt(1 − alpha_bar_t)`.
pub fn eps_from_x0(x_t: &StateVector, x0_hat: &StateVector, t: usize, schedule: &NoiseSchedule) -> Result<StateVector> {
    schedule.check_step(t)?;
    let ab = schedule.alpha_bar(t);
    let root = (1.0 - ab).sqrt();
    x_t.lincomb(1.0 / root, x0_hat, -ab.sqrt() / root)
}
