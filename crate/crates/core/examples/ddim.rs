//! DDIM along subsequences of different lengths and stochasticity.
//!
//! With an exact denoiser the deterministic sampler (`eta = 0`) contracts the
//! spread of a Gaussian target when the subsequence is short; `eta = 1`
//! injects the posterior noise back.
//!
//!     cargo run --release --example ddim

use diffsample::{
    build_cosine_schedule, build_subsequence, moment_report, run_batch, DataLaw, DenoiserModel, SamplerKind,
    SamplerRun, SpacingStrategy, StateVector,
};

fn main() -> diffsample::Result<()> {
    let s = build_cosine_schedule(1000, 0.008, 0.999)?;
    let law = DataLaw::gaussian(StateVector::new(vec![0.0])?, 0.7)?;
    let model = DenoiserModel::noise_prediction(law.clone())?;

    println!("{:>4} {:>5} {:>10} {:>10}", "S", "eta", "mean", "variance");
    for steps in [10, 20, 50, 100] {
        for eta in [0.0, 1.0] {
            let sub = build_subsequence(&s, steps, SpacingStrategy::Uniform, eta)?;
            let run = SamplerRun::new(SamplerKind::DdimEps, &s, &model, 7).with_subsequence(&sub);
            let samples: Vec<_> = run_batch(&run, 4000)?.into_iter().map(|c| c.x0_hat_final).collect();
            let m = moment_report(&samples, &law)?;
            println!("{steps:>4} {eta:>5} {:>10.4} {:>10.4}", m.empirical_mean[0], m.empirical_cov[0]);
        }
    }
    println!("target variance {:.4}", 0.49);
    Ok(())
}
