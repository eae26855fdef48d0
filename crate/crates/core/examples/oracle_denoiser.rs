//! Closed-form posterior means for a Gaussian mixture, in both parameterizations.
//!
//!     cargo run --example oracle_denoiser

use diffsample::config::reference_mixture;
use diffsample::rng::stream_rng;
use diffsample::{
    build_cosine_schedule, diffuse_to, x0_from_eps, Condition, Denoiser, DenoiserModel, StateVector,
};

fn main() -> diffsample::Result<()> {
    let s = build_cosine_schedule(1000, 0.008, 0.999)?;
    let law = reference_mixture(2)?;
    let eps_model = DenoiserModel::noise_prediction(law.clone())?;
    let x0_model = DenoiserModel::x0_prediction(law.clone(), Condition::new(StateVector::zeros(2)))?;
    let mut rng = stream_rng(7, 0);

    let x0 = law.sample(&mut rng);
    println!("clean sample x0 = {:?}", x0.as_slice());
    for t in [1, 250, 500, 750, 1000] {
        let (x_t, _) = diffuse_to(&x0, t, &s, &mut rng)?;
        let x0_hat = x0_model.predict(&x_t, t, &s)?;
        let eps_hat = eps_model.predict(&x_t, t, &s)?;
        let via_eps = x0_from_eps(&x_t, &eps_hat, t, &s)?;
        let r = law.responsibilities(&x_t, t, &s)?;
        println!(
            "t = {t:>4}  E[x0 | x_t] = [{:+.4}, {:+.4}]  via eps [{:+.4}, {:+.4}]  responsibilities [{:.3}, {:.3}, {:.3}]",
            x0_hat[0], x0_hat[1], via_eps[0], via_eps[1], r[0], r[1], r[2]
        );
    }
    Ok(())
}
