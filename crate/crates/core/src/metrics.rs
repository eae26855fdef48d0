//! Sample-quality metrics against a known target law.

use std::cmp::Ordering;
use std::time::Duration;

use rand::seq::index::sample as sample_indices;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::denoise::DataLaw;
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::state::StateVector;

/// Above this many points per set the energy distance is estimated on a subsample.
pub const ENERGY_SUBSAMPLE_THRESHOLD: usize = 20_000;
/// Seed of the subsample draw.
pub const ENERGY_SUBSAMPLE_SEED: u64 = 0x5EED_E4E6;
/// A generated set is "close to target" when its energy distance is at most
/// this multiple of the independent-draw baseline.
pub const CLOSENESS_FACTOR: f64 = 1.5;

/// Two-sample energy distance `2 E‖a − b‖ − E‖a − a'‖ − E‖b − b'‖`.
///
/// All expectations are averages over all ordered pairs, diagonal included,
/// which makes the estimate nonnegative, exactly symmetric and exactly zero
/// for identical sets. Sets larger than [`ENERGY_SUBSAMPLE_THRESHOLD`] are
/// subsampled without replacement with a fixed seed.
pub fn energy_distance(a: &[StateVector], b: &[StateVector]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("energy distance needs two non-empty sets"));
    }
    let dim = a[0].dim();
    for x in a.iter().chain(b) {
        x.check_dim(dim)?;
    }
    let (a, b) = match canonical_order(a, b) {
        Ordering::Greater => (b, a),
        _ => (a, b),
    };
    let a = subsample(a, 0);
    let b = subsample(b, 0);
    let cross = mean_pair_distance(&a, &b);
    let within_a = mean_pair_distance(&a, &a);
    let within_b = mean_pair_distance(&b, &b);
    Ok((2.0 * cross - within_a - within_b).max(0.0))
}

fn canonical_order(a: &[StateVector], b: &[StateVector]) -> Ordering {
    a.len().cmp(&b.len()).then_with(|| {
        a.iter()
            .flat_map(|x| x.iter())
            .zip(b.iter().flat_map(|x| x.iter()))
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    })
}

fn subsample(set: &[StateVector], stream: u64) -> Vec<&StateVector> {
    if set.len() <= ENERGY_SUBSAMPLE_THRESHOLD {
        return set.iter().collect();
    }
    let mut rng = stream_rng(ENERGY_SUBSAMPLE_SEED, stream);
    let mut idx = sample_indices(&mut rng, set.len(), ENERGY_SUBSAMPLE_THRESHOLD).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| &set[i]).collect()
}

// Row sums run in parallel; the final reduction is sequential in row order.
fn mean_pair_distance(a: &[&StateVector], b: &[&StateVector]) -> f64 {
    let rows: Vec<f64> = a
        .par_iter()
        .map(|x| b.iter().map(|y| x.distance(y)).sum::<f64>())
        .collect();
    rows.iter().sum::<f64>() / (a.len() as f64 * b.len() as f64)
}

/// Empirical moments of a sample set compared with the target law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub n_samples: usize,
    pub empirical_mean: Vec<f64>,
    /// Row-major, unbiased (`n − 1`) estimate; all zeros when `n = 1`.
    pub empirical_cov: Vec<f64>,
    pub target_mean: Vec<f64>,
    pub target_cov: Vec<f64>,
    /// Euclidean distance between the empirical and target means.
    pub mean_error: f64,
    /// Largest absolute entrywise covariance deviation.
    pub cov_error: f64,
    /// Set when `n < 2` and the covariance is not estimable.
    pub low_n_warning: bool,
}

pub fn moment_report(samples: &[StateVector], target: &DataLaw) -> Result<MomentReport> {
    if samples.is_empty() {
        return Err(Error::invalid("moment report needs at least one sample"));
    }
    let d = target.dim();
    for x in samples {
        x.check_dim(d)?;
    }
    let n = samples.len();
    let mut mean = vec![0.0; d];
    for x in samples {
        for (m, v) in mean.iter_mut().zip(x.iter()) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let mut cov = vec![0.0; d * d];
    if n > 1 {
        for x in samples {
            for i in 0..d {
                for j in 0..d {
                    cov[i * d + j] += (x[i] - mean[i]) * (x[j] - mean[j]);
                }
            }
        }
        cov.iter_mut().for_each(|c| *c /= (n - 1) as f64);
    }

    let target_mean = target.mean();
    let target_cov = target.covariance();
    let mean_error = mean
        .iter()
        .zip(&target_mean)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    let cov_error = cov
        .iter()
        .zip(&target_cov)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(MomentReport {
        n_samples: n,
        empirical_mean: mean,
        empirical_cov: cov,
        target_mean,
        target_cov,
        mean_error,
        cov_error,
        low_n_warning: n < 2,
    })
}

/// Quality, cost and timing of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_samples: usize,
    pub mean_error: f64,
    pub cov_error: f64,
    pub energy_distance: f64,
    pub baseline_energy_distance: f64,
    /// Total denoiser evaluations over all chains.
    pub denoiser_calls: u64,
    pub denoiser_calls_per_chain: usize,
    /// Seconds.
    pub wall_time: f64,
    pub low_n_warning: bool,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "n_samples,mean_error,cov_error,energy_distance,baseline_energy_distance,denoiser_calls,denoiser_calls_per_chain,wall_time";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.n_samples,
            self.mean_error,
            self.cov_error,
            self.energy_distance,
            self.baseline_energy_distance,
            self.denoiser_calls,
            self.denoiser_calls_per_chain,
            self.wall_time
        )
    }

    /// `energy_distance ≤ CLOSENESS_FACTOR × baseline_energy_distance`.
    pub fn close_to_target(&self) -> bool {
        self.energy_distance <= CLOSENESS_FACTOR * self.baseline_energy_distance
    }
}

/// Two independent target draws of `n` points each from `seed`.
///
/// The first is the reference the generated set is compared with; the energy
/// distance between the two is the baseline.
pub fn reference_sets(law: &DataLaw, n: usize, seed: u64) -> (Vec<StateVector>, Vec<StateVector>) {
    let draw = |stream| {
        let mut rng = stream_rng(seed, stream);
        (0..n).map(|_| law.sample(&mut rng)).collect::<Vec<_>>()
    };
    (draw(0), draw(1))
}

/// Full report for a generated set, using `reference_sets(law, n, reference_seed)`.
pub fn evaluate(
    samples: &[StateVector],
    law: &DataLaw,
    reference_seed: u64,
    calls_per_chain: usize,
    wall_time: Duration,
) -> Result<MetricsReport> {
    let (reference, second) = reference_sets(law, samples.len(), reference_seed);
    let baseline = energy_distance(&reference, &second)?;
    evaluate_against(samples, law, &reference, baseline, calls_per_chain, wall_time)
}

/// Like [`evaluate`], with a precomputed reference set and baseline.
pub fn evaluate_against(
    samples: &[StateVector],
    law: &DataLaw,
    reference: &[StateVector],
    baseline_energy_distance: f64,
    calls_per_chain: usize,
    wall_time: Duration,
) -> Result<MetricsReport> {
    let moments = moment_report(samples, law)?;
    let energy = energy_distance(samples, reference)?;
    Ok(MetricsReport {
        n_samples: samples.len(),
        mean_error: moments.mean_error,
        cov_error: moments.cov_error,
        energy_distance: energy,
        baseline_energy_distance,
        denoiser_calls: (calls_per_chain as u64) * samples.len() as u64,
        denoiser_calls_per_chain: calls_per_chain,
        wall_time: wall_time.as_secs_f64(),
        low_n_warning: moments.low_n_warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn points(values: &[&[f64]]) -> Vec<StateVector> {
        values.iter().map(|v| StateVector::new(v.to_vec()).unwrap()).collect()
    }

    #[test]
    fn identical_sets_have_zero_distance() {
        let a = points(&[&[0.1, 2.0], &[-3.0, 0.5], &[1.7, 1.7]]);
        assert_eq!(energy_distance(&a, &a.clone()).unwrap(), 0.0);
    }

    #[test]
    fn symmetric_exactly() {
        let a = points(&[&[0.1], &[2.0], &[-0.3], &[0.9]]);
        let b = points(&[&[1.1], &[-2.0], &[0.3]]);
        assert_eq!(energy_distance(&a, &b).unwrap(), energy_distance(&b, &a).unwrap());
    }

    #[test]
    fn two_points() {
        // a = {0}, b = {1}: 2·1 − 0 − 0.
        let a = points(&[&[0.0]]);
        let b = points(&[&[1.0]]);
        assert_eq!(energy_distance(&a, &b).unwrap(), 2.0);
    }

    #[test]
    fn rejects_empty_and_mismatched() {
        let a = points(&[&[0.0]]);
        assert!(energy_distance(&a, &[]).is_err());
        assert!(energy_distance(&a, &points(&[&[0.0, 1.0]])).is_err());
        assert!(moment_report(&[], &DataLaw::gaussian(a[0].clone(), 1.0).unwrap()).is_err());
    }

    #[test]
    fn single_sample_moments() {
        let law = DataLaw::gaussian(StateVector::new(vec![1.0, 1.0]).unwrap(), 1.0).unwrap();
        let r = moment_report(&points(&[&[2.0, 1.0]]), &law).unwrap();
        assert!(r.low_n_warning);
        assert_eq!(r.empirical_cov, vec![0.0; 4]);
        assert_eq!(r.mean_error, 1.0);
        assert_eq!(r.cov_error, 1.0);
    }

    #[test]
    fn csv_row_matches_header() {
        let r = MetricsReport {
            n_samples: 3,
            mean_error: 0.5,
            cov_error: 0.25,
            energy_distance: 0.1,
            baseline_energy_distance: 0.2,
            denoiser_calls: 30,
            denoiser_calls_per_chain: 10,
            wall_time: 1.5,
            low_n_warning: false,
        };
        assert_eq!(
            r.csv_row().split(',').count(),
            MetricsReport::CSV_HEADER.split(',').count()
        );
        assert!(r.close_to_target());
    }
}
