//! Noise schedules and sampling subsequences.
//!
//! `alpha_bar` is stored on `0..=T` with `alpha_bar[0] = 1`. The virtual step
//! `tau_0 = 0` therefore has `alpha_bar = 1`, which turns the last DDIM update
//! into an exact collapse onto the current clean-sample prediction.

use std::f64::consts::FRAC_PI_2;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_HORIZON: usize = 1000;
pub const DEFAULT_S_OFFSET: f64 = 0.008;
pub const DEFAULT_BETA_MAX: f64 = 0.999;

/// Relative tolerance of the product identity `prod(1 - beta_s) = alpha_bar_t`.
pub const PRODUCT_IDENTITY_TOLERANCE: f64 = 1e-10;

/// Parameters of the cosine schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleParams {
    #[serde(rename = "T")]
    pub horizon: usize,
    pub s_offset: f64,
    pub beta_max: f64,
}

impl Default for ScheduleParams {
    fn default() -> Self {
        Self {
            horizon: DEFAULT_HORIZON,
            s_offset: DEFAULT_S_OFFSET,
            beta_max: DEFAULT_BETA_MAX,
        }
    }
}

impl ScheduleParams {
    pub fn build(&self) -> Result<NoiseSchedule> {
        build_cosine_schedule(self.horizon, self.s_offset, self.beta_max)
    }
}

/// Precomputed `alpha_bar`, `beta` and posterior variance `beta_tilde` for a horizon `T`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    alpha_bar: Vec<f64>,
    beta: Vec<f64>,
    beta_tilde: Vec<f64>,
}

/// A violated schedule invariant, as reported by [`NoiseSchedule::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleViolation {
    Shape,
    AlphaBarStart(f64),
    NotDecreasing { t: usize },
    BetaOutOfRange { t: usize, beta: f64 },
    ProductIdentity { t: usize, relative_error: f64 },
    BetaTildeStart(f64),
    NegativeBetaTilde { t: usize },
}

impl fmt::Display for ScheduleViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Shape => write!(f, "array lengths disagree with the horizon"),
            Self::AlphaBarStart(v) => write!(f, "alpha_bar[0] = {v}, expected 1"),
            Self::NotDecreasing { t } => write!(f, "alpha_bar not strictly decreasing at t = {t}"),
            Self::BetaOutOfRange { t, beta } => write!(f, "beta[{t}] = {beta} outside (0, 1)"),
            Self::ProductIdentity { t, relative_error } => write!(
                f,
                "product identity broken at t = {t} (relative error {relative_error:e})"
            ),
            Self::BetaTildeStart(v) => write!(f, "beta_tilde[1] = {v}, expected 0"),
            Self::NegativeBetaTilde { t } => write!(f, "beta_tilde[{t}] is negative"),
        }
    }
}

fn cosine_level(t: f64, horizon: f64, s_offset: f64) -> f64 {
    let phase = ((t / horizon + s_offset) / (1.0 + s_offset)) * FRAC_PI_2;
    let c = phase.cos();
    c * c
}

/// Cosine schedule: `alpha_bar_t = f(t)/f(0)` with
/// `f(t) = cos²(((t/T + s) / (1 + s)) · π/2)`, `beta_t = 1 − alpha_bar_t/alpha_bar_{t−1}`
/// clipped to `beta_max`, then `alpha_bar` re-accumulated from the clipped betas.
pub fn build_cosine_schedule(horizon: usize, s_offset: f64, beta_max: f64) -> Result<NoiseSchedule> {
    if horizon == 0 {
        return Err(Error::invalid("T must be at least 1"));
    }
    if !(s_offset > 0.0 && s_offset.is_finite()) {
        return Err(Error::invalid(format!("s_offset must be positive, got {s_offset}")));
    }
    if !(beta_max > 0.0 && beta_max < 1.0) {
        return Err(Error::invalid(format!("beta_max must lie in (0, 1), got {beta_max}")));
    }
    let big_t = horizon as f64;
    let f0 = cosine_level(0.0, big_t, s_offset);
    let mut prev = 1.0;
    let mut betas = Vec::with_capacity(horizon);
    for t in 1..=horizon {
        let level = cosine_level(t as f64, big_t, s_offset) / f0;
        let beta = (1.0 - level / prev).min(beta_max);
        betas.push(beta);
        prev = level;
    }
    let schedule = NoiseSchedule::from_betas_unchecked(betas);
    schedule
        .validate()
        .map_err(|v| Error::Numerical(format!("cosine schedule: {v}")))?;
    Ok(schedule)
}

impl NoiseSchedule {
    /// Builds a schedule from `beta_1..beta_T`, enforcing every invariant.
    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::invalid("at least one beta is required"));
        }
        let schedule = Self::from_betas_unchecked(betas);
        schedule
            .validate()
            .map_err(|v| Error::invalid(v.to_string()))?;
        Ok(schedule)
    }

    /// Accumulates `alpha_bar` and `beta_tilde` without validation.
    ///
    /// Meant for degenerate test fixtures (e.g. `beta_t = 0`); samplers accept
    /// the result but [`NoiseSchedule::validate`] will reject it.
    pub fn from_betas_unchecked(betas: Vec<f64>) -> Self {
        let mut alpha_bar = Vec::with_capacity(betas.len() + 1);
        alpha_bar.push(1.0);
        for &b in &betas {
            let last = *alpha_bar.last().unwrap();
            alpha_bar.push(last * (1.0 - b));
        }
        let beta_tilde = betas
            .iter()
            .enumerate()
            .map(|(i, &b)| posterior_variance(alpha_bar[i], alpha_bar[i + 1], b))
            .collect();
        Self {
            alpha_bar,
            beta: betas,
            beta_tilde,
        }
    }

    /// Assembles a schedule from raw arrays with no consistency checks.
    ///
    /// `alpha_bar` covers `0..=T`; `beta` and `beta_tilde` cover `1..=T`.
    pub fn from_raw_parts_unchecked(alpha_bar: Vec<f64>, beta: Vec<f64>, beta_tilde: Vec<f64>) -> Self {
        Self {
            alpha_bar,
            beta,
            beta_tilde,
        }
    }

    pub fn validate(&self) -> Result<(), ScheduleViolation> {
        let horizon = self.beta.len();
        if horizon == 0 || self.alpha_bar.len() != horizon + 1 || self.beta_tilde.len() != horizon {
            return Err(ScheduleViolation::Shape);
        }
        if self.alpha_bar[0] != 1.0 {
            return Err(ScheduleViolation::AlphaBarStart(self.alpha_bar[0]));
        }
        let mut product = 1.0;
        for t in 1..=horizon {
            let beta = self.beta[t - 1];
            if !(beta > 0.0 && beta < 1.0) {
                return Err(ScheduleViolation::BetaOutOfRange { t, beta });
            }
            if !(self.alpha_bar[t] < self.alpha_bar[t - 1]) {
                return Err(ScheduleViolation::NotDecreasing { t });
            }
            product *= 1.0 - beta;
            let relative_error = ((product - self.alpha_bar[t]) / self.alpha_bar[t]).abs();
            if !(relative_error <= PRODUCT_IDENTITY_TOLERANCE) {
                return Err(ScheduleViolation::ProductIdentity { t, relative_error });
            }
            if !(self.beta_tilde[t - 1] >= 0.0) {
                return Err(ScheduleViolation::NegativeBetaTilde { t });
            }
        }
        if self.beta_tilde[0] != 0.0 {
            return Err(ScheduleViolation::BetaTildeStart(self.beta_tilde[0]));
        }
        Ok(())
    }

    /// The horizon `T`.
    pub fn horizon(&self) -> usize {
        self.beta.len()
    }

    /// `alpha_bar_t` for `t` in `0..=T`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    /// `beta_t` for `t` in `1..=T`.
    pub fn beta(&self, t: usize) -> f64 {
        assert!(t >= 1, "beta is indexed from 1");
        self.beta[t - 1]
    }

    /// `beta_tilde_t` for `t` in `1..=T`.
    pub fn beta_tilde(&self, t: usize) -> f64 {
        assert!(t >= 1, "beta_tilde is indexed from 1");
        self.beta_tilde[t - 1]
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    pub fn betas(&self) -> &[f64] {
        &self.beta
    }

    pub fn beta_tildes(&self) -> &[f64] {
        &self.beta_tilde
    }

    pub(crate) fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.horizon() {
            return Err(Error::TimeStepOutOfRange {
                t,
                min: 1,
                max: self.horizon(),
            });
        }
        Ok(())
    }

    pub(crate) fn check_level(&self, t: usize) -> Result<()> {
        if t > self.horizon() {
            return Err(Error::TimeStepOutOfRange {
                t,
                min: 0,
                max: self.horizon(),
            });
        }
        Ok(())
    }

    /// `1 − alpha_bar_to / alpha_bar_from` for `from < to`, evaluated from the
    /// betas in between so that short gaps keep full relative precision.
    fn transition_noise(&self, from: usize, to: usize) -> f64 {
        let log_keep: f64 = self.beta[from..to].iter().map(|b| (-b).ln_1p()).sum();
        -log_keep.exp_m1()
    }
}

fn posterior_variance(alpha_bar_prev: f64, alpha_bar: f64, beta: f64) -> f64 {
    let denom = 1.0 - alpha_bar;
    if denom > 0.0 {
        (1.0 - alpha_bar_prev) / denom * beta
    } else {
        0.0
    }
}

/// How the interior points of a subsequence are placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SpacingStrategy {
    /// `round(1 + (T − 1) · u)` on an even grid `u`.
    #[default]
    Uniform,
    /// `round(1 + (T − 1) · u²)`, denser near `t = 1`.
    Quadratic,
}

impl fmt::Display for SpacingStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Uniform => "uniform",
            Self::Quadratic => "quadratic",
        })
    }
}

/// A strictly increasing subset `tau_1 = 1 < … < tau_S = T` with its per-step `sigma(eta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubSequence {
    tau: Vec<usize>,
    eta: f64,
    sigma: Vec<f64>,
}

impl SubSequence {
    /// Builds a subsequence from explicit steps, computing `sigma` for `eta`.
    pub fn from_steps(schedule: &NoiseSchedule, tau: Vec<usize>, eta: f64) -> Result<Self> {
        check_eta(eta)?;
        let horizon = schedule.horizon();
        if tau.len() < 2 {
            return Err(Error::invalid("a subsequence needs at least 2 steps"));
        }
        if tau[0] != 1 || *tau.last().unwrap() != horizon {
            return Err(Error::invalid(format!(
                "subsequence must start at 1 and end at T = {horizon}"
            )));
        }
        if tau.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("subsequence must be strictly increasing"));
        }
        let mut sigma = Vec::with_capacity(tau.len());
        let mut prev = 0;
        for &t in &tau {
            sigma.push(sigma_tau(schedule, t, prev, eta)?);
            prev = t;
        }
        Ok(Self { tau, eta, sigma })
    }

    /// Subsequence length `S`.
    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }

    /// `tau_i` for `i` in `0..=S`, with `tau_0 = 0`.
    pub fn tau(&self, i: usize) -> usize {
        if i == 0 {
            0
        } else {
            self.tau[i - 1]
        }
    }

    /// `sigma_{tau_i}` for `i` in `1..=S`.
    pub fn sigma(&self, i: usize) -> f64 {
        assert!(i >= 1, "sigma is indexed from 1");
        self.sigma[i - 1]
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn steps(&self) -> &[usize] {
        &self.tau
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigma
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(Error::invalid(format!("eta must be a finite nonnegative number, got {eta}")));
    }
    Ok(())
}

/// Builds `S` steps over `1..=T` with both endpoints pinned.
///
/// Candidates are rounded half away from zero. Collisions after rounding are
/// resolved by shifting later steps upward (and, near `T`, earlier steps down)
/// so the result always has exactly `S` distinct steps.
pub fn build_subsequence(
    schedule: &NoiseSchedule,
    steps: usize,
    strategy: SpacingStrategy,
    eta: f64,
) -> Result<SubSequence> {
    let horizon = schedule.horizon();
    if steps < 2 {
        return Err(Error::invalid(format!("S must be at least 2, got {steps}")));
    }
    if steps > horizon {
        return Err(Error::invalid(format!("S = {steps} exceeds T = {horizon}")));
    }
    let tau = spaced_steps(horizon, steps, strategy);
    SubSequence::from_steps(schedule, tau, eta)
}

fn spaced_steps(horizon: usize, steps: usize, strategy: SpacingStrategy) -> Vec<usize> {
    let span = (horizon - 1) as f64;
    let last = (steps - 1) as f64;
    let mut tau: Vec<usize> = (0..steps)
        .map(|k| {
            let u = k as f64 / last;
            let u = match strategy {
                SpacingStrategy::Uniform => u,
                SpacingStrategy::Quadratic => u * u,
            };
            (1.0 + span * u).round() as usize
        })
        .collect();
    tau[0] = 1;
    tau[steps - 1] = horizon;
    for i in 1..steps {
        tau[i] = tau[i].max(tau[i - 1] + 1);
    }
    // Upward shifts can overrun T; pull the tail back below the pinned end.
    for i in (0..steps - 1).rev() {
        tau[i] = tau[i].min(tau[i + 1] - 1);
    }
    tau
}

/// `eta · sqrt((1 − ab_prev)/(1 − ab_i)) · sqrt(1 − ab_i/ab_prev)`, with
/// `tau_prev = 0` meaning `ab_prev = 1`.
pub fn sigma_tau(schedule: &NoiseSchedule, tau_i: usize, tau_prev: usize, eta: f64) -> Result<f64> {
    check_eta(eta)?;
    schedule.check_step(tau_i)?;
    if tau_prev >= tau_i {
        return Err(Error::invalid(format!(
            "tau_prev = {tau_prev} must be smaller than tau_i = {tau_i}"
        )));
    }
    if eta == 0.0 {
        return Ok(0.0);
    }
    let ab_i = schedule.alpha_bar(tau_i);
    let ab_prev = schedule.alpha_bar(tau_prev);
    let denom = 1.0 - ab_i;
    if denom <= 0.0 {
        return Ok(0.0);
    }
    let variance = (1.0 - ab_prev) / denom * schedule.transition_noise(tau_prev, tau_i);
    Ok(eta * variance.max(0.0).sqrt())
}
