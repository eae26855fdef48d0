//! Score a sampler with the energy distance and moment errors.
//!
//!     cargo run --release --example energy_metrics

use diffsample::cli::generate;
use diffsample::metrics::evaluate;
use diffsample::{RunConfig, SamplerKind};

fn main() -> diffsample::Result<()> {
    let config = RunConfig {
        seed: 7,
        n_chains: 3000,
        ..RunConfig::default()
    };
    let schedule = config.schedule()?;
    let law = config.data_law()?;

    println!("{}", diffsample::MetricsReport::CSV_HEADER);
    for (kind, steps) in [(SamplerKind::DdpmX0, 1000), (SamplerKind::DdimX0Pcdm, 10), (SamplerKind::DdimX0Pcdm, 100)] {
        let generated = generate(&config, &schedule, kind, steps)?;
        let report = evaluate(
            &generated.samples(),
            &law,
            config.reference_seed(),
            generated.calls_per_chain,
            generated.wall_time,
        )?;
        println!("{}   # {kind}, close to target: {}", report.csv_row(), report.close_to_target());
    }
    Ok(())
}
