//! The subsequence-length sweep behind `diffsample bench`, printed as markdown.
//!
//!     cargo run --release --example bench_table

use diffsample::cli::{bench_markdown, run_bench};
use diffsample::RunConfig;

fn main() -> diffsample::Result<()> {
    let config = RunConfig {
        seed: 7,
        n_chains: 2000,
        ..RunConfig::default()
    };
    print!("{}", bench_markdown(&run_bench(&config)?));
    Ok(())
}
