//! The invariant suite behind `diffsample verify`.
//!
//! Every property runs with fixed internal seeds. Monte Carlo sizes are
//! chosen so the whole suite finishes in well under a minute on one core.

use std::fmt;
use std::io::Write;

use rand::Rng;

use crate::denoise::{eps_from_x0, x0_from_eps, Condition, DataLaw, Denoiser, DenoiserModel};
use crate::forward::add_noise;
use crate::metrics::energy_distance;
use crate::rng::{standard_normal, stream_rng};
use crate::samplers::{
    ddim_transition_eps, ddim_transition_x0_pcdm, ddpm_transition_eps, ddpm_transition_x0, run_batch, run_chain,
    SamplerKind, SamplerRun,
};
use crate::schedule::{build_subsequence, sigma_tau, NoiseSchedule, ScheduleViolation, SpacingStrategy, PRODUCT_IDENTITY_TOLERANCE};
use crate::state::StateVector;

const SEED: u64 = 20_240_611;

/// Relative error allowed for a conversion whose input was rounded once and
/// then amplified by `amplification`.
fn conditioned_tolerance(amplification: f64) -> f64 {
    1e-12_f64.max(16.0 * f64::EPSILON * amplification)
}

type Check = Box<dyn Fn(&NoiseSchedule) -> Result<(), String>>;

pub struct Property {
    pub name: &'static str,
    check: Check,
}

impl fmt::Debug for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Property").field("name", &self.name).finish()
    }
}

impl Property {
    fn new(name: &'static str, check: impl Fn(&NoiseSchedule) -> Result<(), String> + 'static) -> Self {
        Self {
            name,
            check: Box::new(check),
        }
    }

    pub fn check(&self, schedule: &NoiseSchedule) -> Result<(), String> {
        (self.check)(schedule)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub name: &'static str,
    pub result: Result<(), String>,
}

pub fn properties() -> Vec<Property> {
    vec![
        Property::new("schedule.product_identity", product_identity),
        Property::new("schedule.invariants", schedule_invariants),
        Property::new("schedule.sigma_reduction", sigma_reduction),
        Property::new("schedule.subsequence_endpoints", subsequence_endpoints),
        Property::new("denoise.round_trip", round_trip),
        Property::new("denoise.parameterization_equivalence", denoiser_equivalence),
        Property::new("denoise.oracle_vs_monte_carlo", oracle_vs_monte_carlo),
        Property::new("samplers.ddpm_parameterization_equivalence", ddpm_equivalence),
        Property::new("samplers.ddim_pcdm_equivalence", ddim_pcdm_equivalence),
        Property::new("samplers.ddpm_degeneration", ddpm_degeneration),
        Property::new("samplers.eta0_determinism", eta0_determinism),
        Property::new("samplers.call_counts", call_counts),
        Property::new("samplers.ddpm_moment_recovery", ddpm_moments),
        Property::new("metrics.energy_distance_identities", energy_identities),
    ]
}

/// Runs every property against `schedule`, printing one line each.
pub fn run_suite(schedule: &NoiseSchedule, out: &mut dyn Write) -> Vec<Outcome> {
    properties()
        .into_iter()
        .map(|p| {
            let result = p.check(schedule);
            let _ = match &result {
                Ok(()) => writeln!(out, "PASS {}", p.name),
                Err(msg) => writeln!(out, "FAIL {}: {msg}", p.name),
            };
            Outcome { name: p.name, result }
        })
        .collect()
}

fn product_identity(s: &NoiseSchedule) -> Result<(), String> {
    let mut product = 1.0;
    for t in 1..=s.horizon() {
        product *= 1.0 - s.beta(t);
        let rel = ((product - s.alpha_bar(t)) / s.alpha_bar(t)).abs();
        if !(rel <= PRODUCT_IDENTITY_TOLERANCE) {
            return Err(format!("t = {t}: relative error {rel:e}"));
        }
    }
    Ok(())
}

fn schedule_invariants(s: &NoiseSchedule) -> Result<(), String> {
    match s.validate() {
        Ok(()) | Err(ScheduleViolation::ProductIdentity { .. }) => {}
        Err(v) => return Err(v.to_string()),
    }
    Ok(())
}

fn sigma_reduction(s: &NoiseSchedule) -> Result<(), String> {
    for t in 1..=s.horizon() {
        let sigma = sigma_tau(s, t, t - 1, 1.0).map_err(|e| e.to_string())?;
        let expected = s.beta_tilde(t).sqrt();
        let rel = if expected > 0.0 {
            (sigma - expected).abs() / expected
        } else {
            sigma
        };
        if rel > 1e-12 {
            return Err(format!("t = {t}: sigma {sigma} vs sqrt(beta_tilde) {expected}"));
        }
        if sigma_tau(s, t, t - 1, 0.0).map_err(|e| e.to_string())? != 0.0 {
            return Err(format!("t = {t}: sigma(0) != 0"));
        }
    }
    Ok(())
}

fn subsequence_endpoints(s: &NoiseSchedule) -> Result<(), String> {
    let horizon = s.horizon();
    for strategy in [SpacingStrategy::Uniform, SpacingStrategy::Quadratic] {
        for steps in [2, 3, 10, 20, 50, 100, horizon / 2, horizon] {
            if !(2..=horizon).contains(&steps) {
                continue;
            }
            let sub = build_subsequence(s, steps, strategy, 0.5).map_err(|e| e.to_string())?;
            if sub.len() != steps || sub.tau(1) != 1 || sub.tau(steps) != horizon {
                return Err(format!("{strategy} S = {steps}: bad endpoints or length"));
            }
        }
    }
    Ok(())
}

fn random_state<R: Rng>(rng: &mut R, dim: usize, scale: f64) -> StateVector {
    standard_normal(rng, dim).scale(scale).unwrap()
}

fn round_trip(s: &NoiseSchedule) -> Result<(), String> {
    let mut rng = stream_rng(SEED, 1);
    for _ in 0..1000 {
        let t = rng.random_range(1..=s.horizon());
        let x_t = random_state(&mut rng, 3, 1.0);
        let x0 = random_state(&mut rng, 3, 1.0);
        let ab = s.alpha_bar(t);
        let back = x0_from_eps(&x_t, &eps_from_x0(&x_t, &x0, t, s).unwrap(), t, s).unwrap();
        let tol = conditioned_tolerance((x_t.norm() / ab.sqrt() + x0.norm()) / x0.norm());
        let err = back.relative_error(&x0);
        if err > tol {
            return Err(format!("x0 -> eps -> x0 at t = {t}: {err:e} > {tol:e}"));
        }
        let eps = random_state(&mut rng, 3, 1.0);
        let back = eps_from_x0(&x_t, &x0_from_eps(&x_t, &eps, t, s).unwrap(), t, s).unwrap();
        let tol = conditioned_tolerance((x_t.norm() / (1.0 - ab).sqrt() + eps.norm()) / eps.norm());
        let err = back.relative_error(&eps);
        if err > tol {
            return Err(format!("eps -> x0 -> eps at t = {t}: {err:e} > {tol:e}"));
        }
    }
    Ok(())
}

fn reference_law() -> DataLaw {
    let v = |a: f64, b: f64| StateVector::new(vec![a, b]).unwrap();
    DataLaw::mixture(
        vec![0.2, 0.5, 0.3],
        vec![v(-1.5, 0.5), v(1.0, 1.0), v(0.0, -2.0)],
        vec![0.4, 0.7, 0.3],
    )
    .unwrap()
}

fn denoiser_equivalence(s: &NoiseSchedule) -> Result<(), String> {
    let law = reference_law();
    let y = StateVector::new(vec![0.3, -0.2]).unwrap();
    let eps_model = DenoiserModel::noise_prediction(law.clone()).unwrap();
    let x0_model = DenoiserModel::x0_prediction(law, Condition::new(y.clone())).unwrap();
    let mut rng = stream_rng(SEED, 2);
    for _ in 0..500 {
        let t = rng.random_range(1..=s.horizon());
        let x_t = random_state(&mut rng, 2, 2.0);
        let from_eps = x0_from_eps(&x_t, &eps_model.predict(&x_t, t, s).unwrap(), t, s).unwrap();
        let direct = x0_model.predict(&x_t, t, s).unwrap().add(&y).unwrap();
        let tol = conditioned_tolerance((x_t.norm() / s.alpha_bar(t).sqrt() + direct.norm()) / direct.norm());
        let err = from_eps.relative_error(&direct);
        if err > tol {
            return Err(format!("t = {t}: {err:e} > {tol:e}"));
        }
    }
    Ok(())
}

fn oracle_vs_monte_carlo(s: &NoiseSchedule) -> Result<(), String> {
    let law = reference_law();
    let mut rng = stream_rng(SEED, 3);
    let draws: Vec<StateVector> = (0..1_000_000).map(|_| law.sample(&mut rng)).collect();
    let horizon = s.horizon();
    let mut grid = vec![1, horizon / 4, horizon / 2, horizon];
    grid.retain(|&t| t >= 1);
    grid.dedup();
    for t in grid {
        for _ in 0..5 {
            let x0 = law.sample(&mut rng);
            let x_t = add_noise(&x0, &standard_normal(&mut rng, 2), t, s).unwrap();
            let exact = law.posterior_mean(&x_t, t, s).unwrap();
            let (estimate, se) = importance_posterior_mean(&draws, &x_t, t, s);
            for k in 0..2 {
                if (exact[k] - estimate[k]).abs() > 3.0 * se[k] {
                    return Err(format!(
                        "t = {t}, coord {k}: exact {} vs Monte Carlo {} ± {}",
                        exact[k], estimate[k], se[k]
                    ));
                }
            }
        }
    }
    Ok(())
}

/// Self-normalized estimate of `E[x0 | x_t]` from prior draws weighted by the
/// noising kernel, with delta-method standard errors.
fn importance_posterior_mean(draws: &[StateVector], x_t: &StateVector, t: usize, s: &NoiseSchedule) -> (Vec<f64>, Vec<f64>) {
    let ab = s.alpha_bar(t);
    let scale = ab.sqrt();
    let var = 1.0 - ab;
    let log_w: Vec<f64> = draws
        .iter()
        .map(|x0| {
            let sq: f64 = x_t.iter().zip(x0.iter()).map(|(x, m)| (x - scale * m).powi(2)).sum();
            -sq / (2.0 * var)
        })
        .collect();
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    let d = x_t.dim();
    let mut mean = vec![0.0; d];
    for (wi, x0) in w.iter().zip(draws) {
        for k in 0..d {
            mean[k] += wi * x0[k];
        }
    }
    mean.iter_mut().for_each(|m| *m /= total);
    let mut se = vec![0.0; d];
    for (wi, x0) in w.iter().zip(draws) {
        for k in 0..d {
            se[k] += (wi * (x0[k] - mean[k])).powi(2);
        }
    }
    se.iter_mut().for_each(|v| *v = v.sqrt() / total);
    (mean, se)
}

fn ddpm_equivalence(s: &NoiseSchedule) -> Result<(), String> {
    let mut rng = stream_rng(SEED, 4);
    for _ in 0..1000 {
        let t = rng.random_range(1..=s.horizon());
        let x_t = random_state(&mut rng, 2, 1.0);
        let x0 = random_state(&mut rng, 2, 1.0);
        let eps = eps_from_x0(&x_t, &x0, t, s).unwrap();
        let a = ddpm_transition_x0(&x_t, t, &x0, s).unwrap();
        let b = ddpm_transition_eps(&x_t, t, &eps, s).unwrap();
        let err = b.mean.relative_error(&a.mean);
        if err > 1e-10 {
            return Err(format!("t = {t}: means differ by {err:e}"));
        }
    }
    Ok(())
}

fn ddim_pcdm_equivalence(s: &NoiseSchedule) -> Result<(), String> {
    let mut rng = stream_rng(SEED, 5);
    let horizon = s.horizon();
    for _ in 0..1000 {
        let steps = [10, 20, 50, 100, horizon][rng.random_range(0..5)].clamp(2, horizon);
        let eta: f64 = rng.random();
        let sub = build_subsequence(s, steps, SpacingStrategy::Uniform, eta).unwrap();
        let i = rng.random_range(1..=steps);
        let x = random_state(&mut rng, 2, 1.0);
        let s0 = random_state(&mut rng, 2, 1.0);
        let cond = Condition::new(random_state(&mut rng, 2, 1.0));
        let x0 = s0.add(&cond.y).unwrap();
        let eps = eps_from_x0(&x, &x0, sub.tau(i), s).unwrap();
        let a = ddim_transition_x0_pcdm(&x, i, &sub, &s0, &cond, s).unwrap();
        let b = ddim_transition_eps(&x, i, &sub, &eps, s).unwrap();
        let z = standard_normal(&mut rng, 2);
        let out_a = a.mean.lincomb(1.0, &z, a.std).unwrap();
        let out_b = b.mean.lincomb(1.0, &z, b.std).unwrap();
        let ab_i = s.alpha_bar(sub.tau(i));
        let ab_prev = s.alpha_bar(sub.tau(i - 1));
        let amplification = (ab_prev / ab_i).sqrt() * (x.norm() + eps.norm()) / out_a.norm().max(f64::MIN_POSITIVE);
        let tol = conditioned_tolerance(amplification);
        let err = out_b.relative_error(&out_a);
        if err > tol {
            return Err(format!("S = {steps}, i = {i}: {err:e} > {tol:e}"));
        }
    }
    Ok(())
}

fn ddpm_degeneration(s: &NoiseSchedule) -> Result<(), String> {
    let sub = build_subsequence(s, s.horizon(), SpacingStrategy::Uniform, 1.0).map_err(|e| e.to_string())?;
    let mut rng = stream_rng(SEED, 6);
    for t in 1..=s.horizon() {
        let expected_sigma = s.beta_tilde(t).sqrt();
        let sigma = sub.sigma(t);
        let rel = if expected_sigma > 0.0 {
            (sigma - expected_sigma).abs() / expected_sigma
        } else {
            sigma
        };
        if rel > 1e-12 {
            return Err(format!("t = {t}: sigma {sigma} vs {expected_sigma}"));
        }
        for _ in 0..10 {
            let x_t = random_state(&mut rng, 2, 1.0);
            let x0 = random_state(&mut rng, 2, 1.0);
            let eps = eps_from_x0(&x_t, &x0, t, s).unwrap();
            let ddim = ddim_transition_eps(&x_t, t, &sub, &eps, s).unwrap();
            let ddpm = ddpm_transition_x0(&x_t, t, &x0, s).unwrap();
            let err = ddim.mean.relative_error(&ddpm.mean);
            if err > 1e-10 {
                return Err(format!("t = {t}: means differ by {err:e}"));
            }
        }
    }
    Ok(())
}

fn eta0_determinism(s: &NoiseSchedule) -> Result<(), String> {
    let law = reference_law();
    let model = DenoiserModel::x0_prediction(law, Condition::new(StateVector::zeros(2))).unwrap();
    let steps = 10.min(s.horizon()).max(2);
    let sub = build_subsequence(s, steps, SpacingStrategy::Uniform, 0.0).map_err(|e| e.to_string())?;
    let run = SamplerRun::new(SamplerKind::DdimX0Pcdm, s, &model, SEED).with_subsequence(&sub);
    let a = run_batch(&run, 8).map_err(|e| e.to_string())?;
    let b = run_batch(&run, 8).map_err(|e| e.to_string())?;
    for (x, y) in a.iter().zip(&b) {
        let bits = |v: &StateVector| v.iter().map(|f| f.to_bits()).collect::<Vec<_>>();
        if bits(&x.x0_hat_final) != bits(&y.x0_hat_final) {
            return Err("repeated eta = 0 runs differ".into());
        }
    }
    Ok(())
}

fn call_counts(s: &NoiseSchedule) -> Result<(), String> {
    let law = reference_law();
    let cond = Condition::new(StateVector::zeros(2));
    let x0_model = DenoiserModel::x0_prediction(law.clone(), cond).unwrap();
    let eps_model = DenoiserModel::noise_prediction(law).unwrap();
    let horizon = s.horizon();
    for steps in [10, 20, 50, 100] {
        if steps > horizon {
            continue;
        }
        let sub = build_subsequence(s, steps, SpacingStrategy::Uniform, 0.0).map_err(|e| e.to_string())?;
        for (kind, model) in [(SamplerKind::DdimX0Pcdm, &x0_model), (SamplerKind::DdimEps, &eps_model)] {
            let out = run_chain(&SamplerRun::new(kind, s, model, SEED).with_subsequence(&sub)).map_err(|e| e.to_string())?;
            if out.denoiser_calls != steps {
                return Err(format!("{kind} S = {steps}: {} calls", out.denoiser_calls));
            }
        }
    }
    for (kind, model) in [(SamplerKind::DdpmX0, &x0_model), (SamplerKind::DdpmEps, &eps_model)] {
        let out = run_chain(&SamplerRun::new(kind, s, model, SEED)).map_err(|e| e.to_string())?;
        if out.denoiser_calls != horizon {
            return Err(format!("{kind}: {} calls, expected {horizon}", out.denoiser_calls));
        }
    }
    Ok(())
}

fn ddpm_moments(s: &NoiseSchedule) -> Result<(), String> {
    let mean = StateVector::new(vec![1.0, -0.5]).unwrap();
    let std = 0.7;
    let law = DataLaw::gaussian(mean.clone(), std).unwrap();
    let model = DenoiserModel::noise_prediction(law).unwrap();
    let n = 2000;
    let run = SamplerRun::new(SamplerKind::DdpmEps, s, &model, SEED);
    let samples = run_batch(&run, n).map_err(|e| e.to_string())?;
    for k in 0..2 {
        let xs: Vec<f64> = samples.iter().map(|c| c.x0_hat_final[k]).collect();
        let m = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se_mean = std / (n as f64).sqrt();
        let se_var = std * std * (2.0 / (n - 1) as f64).sqrt();
        if (m - mean[k]).abs() > 3.0 * se_mean {
            return Err(format!("coord {k}: mean {m} vs {}", mean[k]));
        }
        if (var - std * std).abs() > 3.0 * se_var {
            return Err(format!("coord {k}: variance {var} vs {}", std * std));
        }
    }
    Ok(())
}

fn energy_identities(_: &NoiseSchedule) -> Result<(), String> {
    let law = reference_law();
    let mut rng = stream_rng(SEED, 7);
    let a: Vec<StateVector> = (0..300).map(|_| law.sample(&mut rng)).collect();
    let b: Vec<StateVector> = (0..200).map(|_| law.sample(&mut rng)).collect();
    let self_distance = energy_distance(&a, &a).map_err(|e| e.to_string())?;
    if self_distance != 0.0 {
        return Err(format!("E(A, A) = {self_distance}"));
    }
    let ab = energy_distance(&a, &b).map_err(|e| e.to_string())?;
    let ba = energy_distance(&b, &a).map_err(|e| e.to_string())?;
    if ab != ba || ab < 0.0 {
        return Err(format!("E(A, B) = {ab}, E(B, A) = {ba}"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::build_cosine_schedule;

    #[test]
    fn corrupted_schedule_fails_product_identity() {
        let s = build_cosine_schedule(1000, 0.008, 0.999).unwrap();
        let mut alpha_bar = s.alpha_bars().to_vec();
        alpha_bar[321] *= 0.999;
        let bad = NoiseSchedule::from_raw_parts_unchecked(alpha_bar, s.betas().to_vec(), s.beta_tildes().to_vec());
        let names = properties();
        let product = names.iter().find(|p| p.name == "schedule.product_identity").unwrap();
        let err = product.check(&bad).unwrap_err();
        assert!(err.contains("t = 321"), "{err}");
        assert!(product.check(&s).is_ok());
    }
}
