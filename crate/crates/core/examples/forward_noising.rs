//! Noise one point step by step and in closed form.
//!
//!     cargo run --example forward_noising

use diffsample::rng::stream_rng;
use diffsample::{build_cosine_schedule, diffuse_step, diffuse_to, StateVector};

fn main() -> diffsample::Result<()> {
    let s = build_cosine_schedule(1000, 0.008, 0.999)?;
    let x0 = StateVector::new(vec![2.0, -1.0])?;
    let mut rng = stream_rng(7, 0);

    let mut x = x0.clone();
    for t in 1..=1000 {
        x = diffuse_step(&x, t, &s, &mut rng)?;
        if [1, 100, 500, 1000].contains(&t) {
            println!("step-by-step   t = {t:>4}: {:?}", x.as_slice());
        }
    }

    for t in [1, 100, 500, 1000] {
        let (x_t, eps) = diffuse_to(&x0, t, &s, &mut rng)?;
        println!(
            "closed form    t = {t:>4}: {:?}  (signal scale {:.4}, noise {:?})",
            x_t.as_slice(),
            s.alpha_bar(t).sqrt(),
            eps.as_slice()
        );
    }
    Ok(())
}
