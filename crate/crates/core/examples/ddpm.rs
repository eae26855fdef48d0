//! Full-length ancestral sampling of a Gaussian, checked against its moments.
//!
//!     cargo run --release --example ddpm

use diffsample::{
    build_cosine_schedule, moment_report, run_batch, DataLaw, DenoiserModel, SamplerKind, SamplerRun, StateVector,
};

fn main() -> diffsample::Result<()> {
    let s = build_cosine_schedule(1000, 0.008, 0.999)?;
    let law = DataLaw::gaussian(StateVector::new(vec![1.0, -0.5])?, 0.7)?;
    let model = DenoiserModel::noise_prediction(law.clone())?;

    let chains = run_batch(&SamplerRun::new(SamplerKind::DdpmEps, &s, &model, 7), 4000)?;
    let samples: Vec<_> = chains.iter().map(|c| c.x0_hat_final.clone()).collect();
    let m = moment_report(&samples, &law)?;
    println!("{} chains, {} denoiser calls each", chains.len(), chains[0].denoiser_calls);
    println!("mean       {:?}  (target {:?})", m.empirical_mean, m.target_mean);
    println!("covariance {:?}  (target {:?})", m.empirical_cov, m.target_cov);
    Ok(())
}
