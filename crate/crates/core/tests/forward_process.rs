//! Monte Carlo checks of the forward noising process.

use diffsample::rng::stream_rng;
use diffsample::{build_cosine_schedule, diffuse_step, diffuse_to, NoiseSchedule, StateVector};

const SEED: u64 = 7;
const DRAWS: usize = 100_000;

fn schedule() -> NoiseSchedule {
    build_cosine_schedule(1000, 0.008, 0.999).unwrap()
}

/// Per-coordinate sample mean and unbiased variance.
fn moments(xs: &[StateVector]) -> (Vec<f64>, Vec<f64>) {
    let n = xs.len() as f64;
    let dim = xs[0].dim();
    let mean: Vec<f64> = (0..dim).map(|k| xs.iter().map(|x| x[k]).sum::<f64>() / n).collect();
    let var = (0..dim)
        .map(|k| xs.iter().map(|x| (x[k] - mean[k]).powi(2)).sum::<f64>() / (n - 1.0))
        .collect();
    (mean, var)
}

/// `|observed − expected|` in standard errors of a Gaussian sample variance.
fn variance_z(observed: f64, expected: f64, n: usize) -> f64 {
    (observed - expected).abs() / (expected * (2.0 / (n as f64 - 1.0)).sqrt())
}

#[test]
fn single_step_from_zero_has_variance_beta() {
    let s = schedule();
    let zero = StateVector::zeros(2);
    for (stream, t) in [1, 500, 1000].into_iter().enumerate() {
        let mut rng = stream_rng(SEED, stream as u64);
        let xs: Vec<_> = (0..DRAWS).map(|_| diffuse_step(&zero, t, &s, &mut rng).unwrap()).collect();
        let (_, var) = moments(&xs);
        for v in var {
            assert!(variance_z(v, s.beta(t), DRAWS) < 3.0, "t = {t}: var {v} vs beta {}", s.beta(t));
        }
    }
}

#[test]
fn terminal_marginal_is_nearly_standard_normal() {
    let s = schedule();
    let zero = StateVector::zeros(2);
    let mut rng = stream_rng(SEED, 10);
    let xs: Vec<_> = (0..DRAWS).map(|_| diffuse_to(&zero, 1000, &s, &mut rng).unwrap().0).collect();
    let (mean, var) = moments(&xs);
    let expected = 1.0 - s.alpha_bar(1000);
    for k in 0..2 {
        assert!(mean[k].abs() < 3.0 / (DRAWS as f64).sqrt());
        assert!(variance_z(var[k], expected, DRAWS) < 3.0);
    }
}

#[test]
fn stepwise_noising_matches_closed_form_marginal() {
    let s = schedule();
    let x0 = StateVector::new(vec![1.5, -2.0]).unwrap();
    for (stream, t) in [1usize, 10, 100].into_iter().enumerate() {
        let mut rng = stream_rng(SEED, 20 + stream as u64);
        let chained: Vec<_> = (0..DRAWS)
            .map(|_| {
                let mut x = x0.clone();
                for step in 1..=t {
                    x = diffuse_step(&x, step, &s, &mut rng).unwrap();
                }
                x
            })
            .collect();
        let (mean, var) = moments(&chained);
        let ab = s.alpha_bar(t);
        for k in 0..2 {
            let want_mean = ab.sqrt() * x0[k];
            let want_var = 1.0 - ab;
            let se_mean = (want_var / DRAWS as f64).sqrt();
            assert!((mean[k] - want_mean).abs() < 3.0 * se_mean, "t = {t}: mean {} vs {want_mean}", mean[k]);
            assert!(variance_z(var[k], want_var, DRAWS) < 3.0, "t = {t}: var {} vs {want_var}", var[k]);
        }
        // Coordinates stay uncorrelated.
        let cov = chained.iter().map(|x| (x[0] - mean[0]) * (x[1] - mean[1])).sum::<f64>() / (DRAWS - 1) as f64;
        assert!(cov.abs() < 3.0 * (1.0 - ab) / (DRAWS as f64).sqrt(), "t = {t}: cov {cov}");
    }
}

#[test]
fn diffuse_to_returns_the_noise_it_used() {
    let s = schedule();
    let x0 = StateVector::new(vec![0.3, 0.7]).unwrap();
    let mut rng = stream_rng(SEED, 30);
    let (x_t, eps) = diffuse_to(&x0, 321, &s, &mut rng).unwrap();
    let rebuilt = diffsample::add_noise(&x0, &eps, 321, &s).unwrap();
    assert_eq!(x_t, rebuilt);
}
