//! Energy distance against a brute-force evaluation and a closed form.

use diffsample::rng::{standard_normal, stream_rng};
use diffsample::{energy_distance, StateVector};

fn gaussian_1d(n: usize, mean: f64, stream: u64) -> Vec<StateVector> {
    let mut rng = stream_rng(7, stream);
    (0..n)
        .map(|_| StateVector::new(vec![mean + standard_normal(&mut rng, 1)[0]]).unwrap())
        .collect()
}

fn brute_force(a: &[StateVector], b: &[StateVector]) -> f64 {
    let mean = |x: &[StateVector], y: &[StateVector]| {
        let mut total = 0.0;
        for p in x {
            for q in y {
                total += p.iter().zip(q.iter()).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
            }
        }
        total / (x.len() * y.len()) as f64
    };
    2.0 * mean(a, b) - mean(a, a) - mean(b, b)
}

#[test]
fn separated_gaussians_match_the_closed_form() {
    let a = gaussian_1d(2000, 0.0, 0);
    let b = gaussian_1d(2000, 10.0, 1);
    let ed = energy_distance(&a, &b).unwrap();
    let brute = brute_force(&a, &b);
    assert!((ed - brute).abs() <= 1e-12 * brute, "{ed} vs {brute}");
    // 2 E|X − Y| − 2 E|X − X'| for unit variances and mean gap 10: E|X − X'| = 2/sqrt(pi).
    let population = 20.0 - 4.0 / std::f64::consts::PI.sqrt();
    assert!((ed - population).abs() < 0.15, "{ed} vs {population}");
}

#[test]
fn identical_sets_are_at_distance_zero_and_order_does_not_matter() {
    let a = gaussian_1d(300, 0.0, 2);
    let b = gaussian_1d(400, 0.5, 3);
    assert_eq!(energy_distance(&a, &a).unwrap(), 0.0);
    assert_eq!(energy_distance(&a, &b).unwrap(), energy_distance(&b, &a).unwrap());
    assert!(energy_distance(&a, &b).unwrap() > 0.0);
}

#[test]
fn independent_draws_shrink_with_sample_size() {
    let small = energy_distance(&gaussian_1d(200, 0.0, 4), &gaussian_1d(200, 0.0, 5)).unwrap();
    let large = energy_distance(&gaussian_1d(4000, 0.0, 6), &gaussian_1d(4000, 0.0, 7)).unwrap();
    assert!(large < small, "{large} !< {small}");
}
