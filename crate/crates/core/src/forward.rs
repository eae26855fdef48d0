//! Forward diffusion: single Markov steps, the closed-form marginal and the
//! reparameterized noising map.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::standard_normal;
use crate::schedule::NoiseSchedule;
use crate::state::StateVector;

/// One step of `q(x_t | x_{t−1})`: `sqrt(1 − beta_t) · x_prev + sqrt(beta_t) · z`.
pub fn diffuse_step<R: Rng + ?Sized>(
    x_prev: &StateVector,
    t: usize,
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<StateVector> {
    schedule.check_step(t)?;
    let beta = schedule.beta(t);
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::invalid(format!("beta[{t}] = {beta} outside [0, 1)")));
    }
    let z = standard_normal(rng, x_prev.dim());
    x_prev.lincomb((1.0 - beta).sqrt(), &z, beta.sqrt())
}

/// Samples `x_t ~ q(x_t | x_0)` and returns it together with the noise used.
pub fn diffuse_to<R: Rng + ?Sized>(
    x0: &StateVector,
    t: usize,
    schedule: &NoiseSchedule,
    rng: &mut R,
) -> Result<(StateVector, StateVector)> {
    schedule.check_level(t)?;
    let eps = standard_normal(rng, x0.dim());
    let x_t = add_noise(x0, &eps, t, schedule)?;
    Ok((x_t, eps))
}

/// `sqrt(alpha_bar_t) · x0 + sqrt(1 − alpha_bar_t) · eps` for a caller-supplied `eps`.
pub fn add_noise(x0: &StateVector, eps: &StateVector, t: usize, schedule: &NoiseSchedule) -> Result<StateVector> {
    schedule.check_level(t)?;
    let ab = schedule.alpha_bar(t);
    x0.lincomb(ab.sqrt(), eps, (1.0 - ab).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use crate::schedule::build_cosine_schedule;

    fn v(values: &[f64]) -> StateVector {
        StateVector::new(values.to_vec()).unwrap()
    }

    #[test]
    fn t_zero_is_identity() {
        let s = build_cosine_schedule(100, 0.008, 0.999).unwrap();
        let x0 = v(&[0.3, -1.2, 4.0]);
        let (x_t, _) = diffuse_to(&x0, 0, &s, &mut stream_rng(1, 0)).unwrap();
        assert_eq!(x_t, x0);
        assert_eq!(add_noise(&x0, &v(&[5.0, 5.0, 5.0]), 0, &s).unwrap(), x0);
    }

    #[test]
    fn zero_noise_branch() {
        let s = build_cosine_schedule(100, 0.008, 0.999).unwrap();
        let x0 = v(&[2.0, -1.0]);
        let out = add_noise(&x0, &StateVector::zeros(2), 40, &s).unwrap();
        let k = s.alpha_bar(40).sqrt();
        assert_eq!(out, v(&[2.0 * k, -k]));
    }

    #[test]
    fn scalar_check() {
        // alpha_bar_1 = 0.25 exactly.
        let s = NoiseSchedule::from_betas(vec![0.75]).unwrap();
        let out = add_noise(&v(&[1.0, 0.0]), &v(&[0.0, 1.0]), 1, &s).unwrap();
        assert_eq!(out[0], 0.5);
        assert!((out[1] - 0.75f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn zero_beta_step_is_identity() {
        let s = NoiseSchedule::from_betas_unchecked(vec![0.0, 0.1]);
        let x = v(&[1.5, -2.5]);
        assert_eq!(diffuse_step(&x, 1, &s, &mut stream_rng(3, 0)).unwrap(), x);
    }

    #[test]
    fn rejects_out_of_range_steps() {
        let s = build_cosine_schedule(10, 0.008, 0.999).unwrap();
        let x = v(&[0.0]);
        let mut rng = stream_rng(0, 0);
        assert!(diffuse_step(&x, 0, &s, &mut rng).is_err());
        assert!(diffuse_step(&x, 11, &s, &mut rng).is_err());
        assert!(diffuse_to(&x, 11, &s, &mut rng).is_err());
        assert!(add_noise(&x, &v(&[0.0, 0.0]), 3, &s).is_err());
    }

    #[test]
    fn seeded_determinism() {
        let s = build_cosine_schedule(10, 0.008, 0.999).unwrap();
        let x = v(&[0.1, 0.2]);
        let a = diffuse_step(&x, 5, &s, &mut stream_rng(9, 2)).unwrap();
        let b = diffuse_step(&x, 5, &s, &mut stream_rng(9, 2)).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
    }
}
