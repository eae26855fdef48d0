//! Build the cosine schedule and print a few of its levels.
//!
//!     cargo run --example schedule

use diffsample::build_cosine_schedule;

fn main() -> diffsample::Result<()> {
    let s = build_cosine_schedule(1000, 0.008, 0.999)?;
    s.validate().expect("the default schedule satisfies its invariants");

    println!("{:>5} {:>22} {:>22} {:>22}", "t", "alpha_bar", "beta", "beta_tilde");
    for t in [1, 10, 100, 250, 500, 750, 900, 990, 999, 1000] {
        println!(
            "{t:>5} {:>22.15e} {:>22.15e} {:>22.15e}",
            s.alpha_bar(t),
            s.beta(t),
            s.beta_tilde(t)
        );
    }
    // The last betas are clipped; the schedule never reaches pure noise.
    let clipped = s.betas().iter().filter(|&&b| b == 0.999).count();
    println!("{clipped} clipped betas; signal left at T: alpha_bar_T = {:.3e}", s.alpha_bar(1000));
    Ok(())
}
