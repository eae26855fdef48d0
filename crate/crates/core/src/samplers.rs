//! Reverse-process samplers.
//!
//! Each sampler is split into a *transition* (the Gaussian `N(mean, std² I)`
//! the step draws from) and a *step* that samples it. When `std == 0` no noise
//! is drawn at all, so deterministic chains consume no randomness after `x_T`.

use std::fmt;
use std::time::{Duration, Instant};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::denoise::{eps_from_x0, x0_from_eps, Condition, Denoiser, Parameterization};
use crate::error::{Error, Result};
use crate::rng::{standard_normal, stream_rng};
use crate::schedule::{NoiseSchedule, SubSequence};
use crate::state::StateVector;

/// Radicands of the DDIM direction term in `[-RADICAND_SLACK, 0)` are clamped to zero.
pub const RADICAND_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    /// Ancestral sampling with a noise-prediction denoiser.
    #[value(name = "ddpm_eps")]
    DdpmEps,
    /// Ancestral sampling with an x0-prediction denoiser.
    #[value(name = "ddpm_x0")]
    DdpmX0,
    /// DDIM along a subsequence with a noise-prediction denoiser.
    #[value(name = "ddim_eps")]
    DdimEps,
    /// DDIM along a subsequence with an x0-prediction denoiser and known part `y`.
    #[value(name = "ddim_x0_pcdm")]
    DdimX0Pcdm,
}

impl SamplerKind {
    pub fn parameterization(self) -> Parameterization {
        match self {
            SamplerKind::DdpmEps | SamplerKind::DdimEps => Parameterization::NoisePrediction,
            SamplerKind::DdpmX0 | SamplerKind::DdimX0Pcdm => Parameterization::X0Prediction,
        }
    }

    pub fn is_ddim(self) -> bool {
        matches!(self, SamplerKind::DdimEps | SamplerKind::DdimX0Pcdm)
    }

    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::DdpmEps => "ddpm_eps",
            SamplerKind::DdpmX0 => "ddpm_x0",
            SamplerKind::DdimEps => "ddim_eps",
            SamplerKind::DdimX0Pcdm => "ddim_x0_pcdm",
        }
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The Gaussian a reverse step samples from.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub mean: StateVector,
    pub std: f64,
}

impl Transition {
    /// `mean + std · z`; `z` is drawn only when `std > 0`.
    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> Result<StateVector> {
        if self.std == 0.0 {
            return Ok(self.mean);
        }
        let z = standard_normal(rng, self.mean.dim());
        self.mean.lincomb(1.0, &z, self.std)
    }
}

/// Posterior `q(x_{t−1} | x_t, x0 = x0_hat)`: mean
/// `[sqrt(1−beta_t)(1−ab_{t−1})/(1−ab_t)] x_t + [sqrt(ab_{t−1}) beta_t/(1−ab_t)] x0_hat`,
/// std `sqrt(beta_tilde_t)`.
pub fn ddpm_transition_x0(
    x_t: &StateVector,
    t: usize,
    x0_hat: &StateVector,
    schedule: &NoiseSchedule,
) -> Result<Transition> {
    schedule.check_step(t)?;
    let beta = schedule.beta(t);
    let ab = schedule.alpha_bar(t);
    let ab_prev = schedule.alpha_bar(t - 1);
    let denom = 1.0 - ab;
    let mean = if denom > 0.0 {
        let c_x = (1.0 - beta).sqrt() * (1.0 - ab_prev) / denom;
        let c_0 = ab_prev.sqrt() * beta / denom;
        x_t.lincomb(c_x, x0_hat, c_0)?
    } else {
        // alpha_bar_t = 1 (degenerate fixture): nothing to remove.
        x0_hat.check_dim(x_t.dim())?;
        x_t.clone()
    };
    Ok(Transition {
        mean,
        std: schedule.beta_tilde(t).sqrt(),
    })
}

pub fn ddpm_step_x0<R: Rng + ?Sized>(
    x_t: &StateVector,
    t: usize,
    x0_hat: &StateVector,
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<StateVector> {
    ddpm_transition_x0(x_t, t, x0_hat, schedule)?.sample(rng)
}

/// Mean `(x_t − beta_t/sqrt(1−ab_t) · eps_hat) / sqrt(1−beta_t)`, std `sqrt(beta_tilde_t)`.
pub fn ddpm_transition_eps(
    x_t: &StateVector,
    t: usize,
    eps_hat: &StateVector,
    schedule: &NoiseSchedule,
) -> Result<Transition> {
    schedule.check_step(t)?;
    let beta = schedule.beta(t);
    let ab = schedule.alpha_bar(t);
    let inv = 1.0 / (1.0 - beta).sqrt();
    let mean = x_t.lincomb(inv, eps_hat, -inv * beta / (1.0 - ab).sqrt())?;
    Ok(Transition {
        mean,
        std: schedule.beta_tilde(t).sqrt(),
    })
}

pub fn ddpm_step_eps<R: Rng + ?Sized>(
    x_t: &StateVector,
    t: usize,
    eps_hat: &StateVector,
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<StateVector> {
    ddpm_transition_eps(x_t, t, eps_hat, schedule)?.sample(rng)
}

fn check_index(i: usize, subseq: &SubSequence, schedule: &NoiseSchedule) -> Result<()> {
    if i == 0 || i > subseq.len() {
        return Err(Error::invalid(format!(
            "subsequence index {i} outside 1..={}",
            subseq.len()
        )));
    }
    if subseq.tau(subseq.len()) > schedule.horizon() {
        return Err(Error::invalid("subsequence does not belong to this schedule"));
    }
    Ok(())
}

/// `sqrt(ab_prev) · x0_hat + sqrt(1 − ab_prev − sigma²) · eps` with std `sigma`.
fn ddim_combine(
    x0_hat: &StateVector,
    eps: &StateVector,
    i: usize,
    subseq: &SubSequence,
    schedule: &NoiseSchedule,
) -> Result<Transition> {
    let ab_prev = schedule.alpha_bar(subseq.tau(i - 1));
    let sigma = subseq.sigma(i);
    let mut radicand = 1.0 - ab_prev - sigma * sigma;
    if radicand < -RADICAND_SLACK {
        return Err(Error::NegativeRadicand { value: radicand });
    }
    if radicand < 0.0 {
        radicand = 0.0;
    }
    let mean = x0_hat.lincomb(ab_prev.sqrt(), eps, radicand.sqrt())?;
    Ok(Transition { mean, std: sigma })
}

/// DDIM update from `x_{tau_i}` to `x_{tau_{i−1}}` given a noise prediction.
///
/// `x0_hat` is recovered as `(x − sqrt(1 − ab_i) eps_hat) / sqrt(ab_i)`. With
/// `tau_0 = 0` the `i = 1` update returns that recovery exactly.
pub fn ddim_transition_eps(
    x_tau_i: &StateVector,
    i: usize,
    subseq: &SubSequence,
    eps_hat: &StateVector,
    schedule: &NoiseSchedule,
) -> Result<Transition> {
    check_index(i, subseq, schedule)?;
    let x0_hat = x0_from_eps(x_tau_i, eps_hat, subseq.tau(i), schedule)?;
    ddim_combine(&x0_hat, eps_hat, i, subseq, schedule)
}

pub fn ddim_step_eps<R: Rng + ?Sized>(
    x_tau_i: &StateVector,
    i: usize,
    subseq: &SubSequence,
    eps_hat: &StateVector,
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<StateVector> {
    ddim_transition_eps(x_tau_i, i, subseq, eps_hat, schedule)?.sample(rng)
}

/// DDIM update for an x0-prediction denoiser.
///
/// The clean-sample prediction is `s0_hat + y`; the implied noise is
/// `(x − sqrt(ab_i) x0_hat) / sqrt(1 − ab_i)` and it alone drives the direction term.
pub fn ddim_transition_x0_pcdm(
    x_tau_i: &StateVector,
    i: usize,
    subseq: &SubSequence,
    s0_hat: &StateVector,
    condition: &Condition,
    schedule: &NoiseSchedule,
) -> Result<Transition> {
    check_index(i, subseq, schedule)?;
    let x0_hat = s0_hat.add(&condition.y)?;
    let eps = eps_from_x0(x_tau_i, &x0_hat, subseq.tau(i), schedule)?;
    ddim_combine(&x0_hat, &eps, i, subseq, schedule)
}

pub fn ddim_step_x0_pcdm<R: Rng + ?Sized>(
    x_tau_i: &StateVector,
    i: usize,
    subseq: &SubSequence,
    s0_hat: &StateVector,
    condition: &Condition,
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<StateVector> {
    ddim_transition_x0_pcdm(x_tau_i, i, subseq, s0_hat, condition, schedule)?.sample(rng)
}

/// One reverse chain: sampler, schedule, denoiser and the seed of its random stream.
#[derive(Debug, Clone, Copy)]
pub struct SamplerRun<'a, M: ?Sized> {
    pub kind: SamplerKind,
    pub schedule: &'a NoiseSchedule,
    /// Required by the DDIM kinds, rejected by the DDPM kinds.
    pub subsequence: Option<&'a SubSequence>,
    pub denoiser: &'a M,
    pub seed: u64,
    /// Stream of `seed` this chain draws from; batch runs use the chain index.
    pub chain: u64,
    pub record_trajectory: bool,
}

impl<'a, M: Denoiser + ?Sized> SamplerRun<'a, M> {
    pub fn new(kind: SamplerKind, schedule: &'a NoiseSchedule, denoiser: &'a M, seed: u64) -> Self {
        Self {
            kind,
            schedule,
            subsequence: None,
            denoiser,
            seed,
            chain: 0,
            record_trajectory: false,
        }
    }

    pub fn with_subsequence(mut self, subsequence: &'a SubSequence) -> Self {
        self.subsequence = Some(subsequence);
        self
    }

    pub fn with_trajectory(mut self, record: bool) -> Self {
        self.record_trajectory = record;
        self
    }

    pub fn validate(&self) -> Result<()> {
        match (self.kind.is_ddim(), self.subsequence) {
            (true, None) => {
                return Err(Error::invalid(format!("{} requires a subsequence", self.kind)));
            }
            (false, Some(_)) => {
                return Err(Error::invalid(format!(
                    "{} runs the full chain and takes no subsequence",
                    self.kind
                )));
            }
            (true, Some(sub)) if sub.tau(sub.len()) != self.schedule.horizon() => {
                return Err(Error::invalid("subsequence must end at the schedule horizon"));
            }
            _ => {}
        }
        if self.kind.parameterization() != self.denoiser.parameterization() {
            return Err(Error::invalid(format!(
                "{} needs a {:?} denoiser, got {:?}",
                self.kind,
                self.kind.parameterization(),
                self.denoiser.parameterization()
            )));
        }
        if self.kind.parameterization() == Parameterization::X0Prediction && self.denoiser.condition().is_none() {
            return Err(Error::invalid(format!("{} requires a condition y", self.kind)));
        }
        Ok(())
    }

    /// Number of denoiser evaluations one chain performs.
    pub fn steps(&self) -> usize {
        match self.subsequence {
            Some(sub) if self.kind.is_ddim() => sub.len(),
            _ => self.schedule.horizon(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainResult {
    pub x0_hat_final: StateVector,
    pub denoiser_calls: usize,
    /// `(t, x_t)` after every step, ending with `(0, x0_hat_final)`.
    pub trajectory: Option<Vec<(usize, StateVector)>>,
    pub wall_time: Duration,
}

/// Runs one reverse chain from `x_T ~ N(0, I)` down to `x0_hat`.
pub fn run_chain<M: Denoiser + ?Sized>(run: &SamplerRun<'_, M>) -> Result<ChainResult> {
    run.validate()?;
    let started = Instant::now();
    let schedule = run.schedule;
    let denoiser = run.denoiser;
    let mut rng = stream_rng(run.seed, run.chain);
    let mut x = standard_normal(&mut rng, denoiser.dim());
    let mut calls = 0usize;
    let mut trajectory = run.record_trajectory.then(|| Vec::with_capacity(run.steps()));

    if let Some(sub) = run.subsequence {
        for i in (1..=sub.len()).rev() {
            let t = sub.tau(i);
            let step = || -> Result<Transition> {
                let prediction = denoiser.predict(&x, t, schedule)?;
                match run.kind {
                    SamplerKind::DdimEps => ddim_transition_eps(&x, i, sub, &prediction, schedule),
                    _ => {
                        let condition = denoiser.condition().expect("validated");
                        ddim_transition_x0_pcdm(&x, i, sub, &prediction, condition, schedule)
                    }
                }
            };
            let transition = step().map_err(|e| Error::Step {
                label: "i",
                index: i,
                source: Box::new(e),
            })?;
            calls += 1;
            x = transition.sample(&mut rng)?;
            if let Some(tr) = trajectory.as_mut() {
                tr.push((sub.tau(i - 1), x.clone()));
            }
        }
    } else {
        for t in (1..=schedule.horizon()).rev() {
            let step = || -> Result<Transition> {
                let prediction = denoiser.predict(&x, t, schedule)?;
                match run.kind {
                    SamplerKind::DdpmEps => ddpm_transition_eps(&x, t, &prediction, schedule),
                    _ => {
                        let y = &denoiser.condition().expect("validated").y;
                        ddpm_transition_x0(&x, t, &prediction.add(y)?, schedule)
                    }
                }
            };
            let transition = step().map_err(|e| Error::Step {
                label: "t",
                index: t,
                source: Box::new(e),
            })?;
            calls += 1;
            x = transition.sample(&mut rng)?;
            if let Some(tr) = trajectory.as_mut() {
                tr.push((t - 1, x.clone()));
            }
        }
    }

    Ok(ChainResult {
        x0_hat_final: x,
        denoiser_calls: calls,
        trajectory,
        wall_time: started.elapsed(),
    })
}

/// Runs `n_chains` chains in parallel; chain `k` uses stream `k` of `run.seed`.
///
/// Results come back in chain order regardless of scheduling.
pub fn run_batch<M: Denoiser + ?Sized>(run: &SamplerRun<'_, M>, n_chains: usize) -> Result<Vec<ChainResult>> {
    run.validate()?;
    (0..n_chains as u64)
        .into_par_iter()
        .map(|chain| run_chain(&SamplerRun { chain, ..*run }))
        .collect()
}
