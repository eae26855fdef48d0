//! DDIM with an x0-prediction denoiser that only predicts the unknown part.
//!
//! The data law lives around a known offset `y`; the denoiser returns
//! `s0_hat = E[x0 | x_t] − y` and the sampler adds `y` back before each update.
//!
//!     cargo run --release --example pcdm_ddim

use diffsample::{
    build_cosine_schedule, build_subsequence, run_batch, Condition, DataLaw, DenoiserModel, SamplerKind,
    SamplerRun, SpacingStrategy, StateVector,
};

fn main() -> diffsample::Result<()> {
    let s = build_cosine_schedule(1000, 0.008, 0.999)?;
    let y = StateVector::new(vec![3.0, 3.0])?;
    let law = DataLaw::mixture(
        vec![0.5, 0.5],
        vec![StateVector::new(vec![2.0, 3.0])?, StateVector::new(vec![4.0, 3.0])?],
        vec![0.3, 0.3],
    )?;
    let model = DenoiserModel::x0_prediction(law, Condition::new(y).with_tag("offset"))?;
    let sub = build_subsequence(&s, 20, SpacingStrategy::Uniform, 0.0)?;
    let run = SamplerRun::new(SamplerKind::DdimX0Pcdm, &s, &model, 7).with_subsequence(&sub);

    let chains = run_batch(&run, 2000)?;
    let left = chains.iter().filter(|c| c.x0_hat_final[0] < 3.0).count();
    println!("{} chains x {} calls", chains.len(), chains[0].denoiser_calls);
    println!("mode split: {left} left / {} right", chains.len() - left);
    for c in chains.iter().take(5) {
        println!("  {:?}", c.x0_hat_final.as_slice());
    }
    Ok(())
}
