//! Command-line front end: `sample`, `bench`, `verify` and `schedule-dump`.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::metrics::{energy_distance, evaluate_against, reference_sets, MetricsReport};
use crate::samplers::{run_batch, ChainResult, SamplerKind, SamplerRun};
use crate::schedule::{build_cosine_schedule, NoiseSchedule, ScheduleParams, SpacingStrategy};
use crate::state::StateVector;
use crate::verify;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_IO: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "diffsample", version, about = "DDPM and DDIM sampling against closed-form oracle denoisers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate samples with one sampler and report their quality.
    Sample(RunArgs),
    /// Sweep DDIM subsequence lengths against the full DDPM chain.
    Bench(RunArgs),
    /// Run the invariant suite.
    Verify,
    /// Write the noise schedule as CSV.
    ScheduleDump(DumpArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub sampler: Option<SamplerKind>,
    /// Subsequence length; `bench` accepts a comma-separated list.
    #[arg(long, value_delimiter = ',')]
    pub steps: Vec<usize>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long, value_enum)]
    pub strategy: Option<SpacingStrategy>,
    #[arg(long = "T")]
    pub horizon: Option<usize>,
    #[arg(long = "n")]
    pub n_chains: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write every intermediate state, not just the final sample.
    #[arg(long)]
    pub trajectory: bool,
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct DumpArgs {
    #[arg(long = "T", default_value_t = crate::schedule::DEFAULT_HORIZON)]
    pub horizon: usize,
    #[arg(long, default_value_t = crate::schedule::DEFAULT_S_OFFSET)]
    pub s_offset: f64,
    #[arg(long, default_value_t = crate::schedule::DEFAULT_BETA_MAX)]
    pub beta_max: f64,
    #[arg(long, default_value = "schedule.csv")]
    pub out: PathBuf,
}

impl RunArgs {
    /// Loads `--config` (if any) and applies the flags on top.
    pub fn resolve(&self, bench: bool) -> Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(kind) = self.sampler {
            config.sampler.kind = kind;
        }
        if bench {
            if !self.steps.is_empty() {
                config.sampler.bench_steps = self.steps.clone();
            }
        } else {
            match self.steps.as_slice() {
                [] => {}
                [s] => config.sampler.steps = *s,
                _ => return Err(Error::Config("--steps takes a single value for sample".into())),
            }
        }
        if let Some(eta) = self.eta {
            config.sampler.eta = eta;
        }
        if let Some(strategy) = self.strategy {
            config.sampler.strategy = strategy;
        }
        if let Some(horizon) = self.horizon {
            config.schedule.horizon = horizon;
        }
        if let Some(n) = self.n_chains {
            config.n_chains = n;
        }
        if let Some(dim) = self.dim {
            config.dim = dim;
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(dir) = &self.out {
            config.outputs = crate::config::OutputConfig::in_dir(dir);
        }
        if self.trajectory {
            config.trajectory = true;
        }
        if let Some(workers) = self.workers {
            config.workers = workers;
        }
        Ok(config)
    }
}

/// Maps an error onto the exit-code contract.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. } => EXIT_IO,
        _ => EXIT_FAILURE,
    }
}

pub fn run(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Sample(args) => args.resolve(false).and_then(|c| cmd_sample(&c)).map(|_| EXIT_OK),
        Command::Bench(args) => args.resolve(true).and_then(|c| cmd_bench(&c)).map(|_| EXIT_OK),
        Command::Verify => Ok(cmd_verify()),
        Command::ScheduleDump(args) => {
            let params = ScheduleParams {
                horizon: args.horizon,
                s_offset: args.s_offset,
                beta_max: args.beta_max,
            };
            cmd_schedule_dump(&params, &args.out).map(|_| EXIT_OK)
        }
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code(&err)
        }
    }
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("workers: {e}")))
}

/// Writes `contents` to every path or to none of them.
fn write_all_or_nothing(files: &[(&Path, String)]) -> Result<()> {
    for (i, (path, contents)) in files.iter().enumerate() {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            if let Err(e) = fs::create_dir_all(parent) {
                cleanup(&files[..i]);
                return Err(Error::io(parent, e));
            }
        }
        if let Err(e) = fs::write(path, contents) {
            cleanup(&files[..=i]);
            return Err(Error::io(*path, e));
        }
    }
    Ok(())
}

fn cleanup(files: &[(&Path, String)]) {
    for (path, _) in files {
        let _ = fs::remove_file(path);
    }
}

/// Result of [`generate`]: one entry per chain in chain order.
#[derive(Debug, Clone)]
pub struct Generated {
    pub chains: Vec<ChainResult>,
    pub calls_per_chain: usize,
    pub wall_time: std::time::Duration,
}

impl Generated {
    pub fn samples(&self) -> Vec<StateVector> {
        self.chains.iter().map(|c| c.x0_hat_final.clone()).collect()
    }
}

/// Runs `config.n_chains` chains of `kind` (with `steps` for DDIM kinds).
pub fn generate(config: &RunConfig, schedule: &NoiseSchedule, kind: SamplerKind, steps: usize) -> Result<Generated> {
    let denoiser = config.denoiser(kind)?;
    let subsequence = if kind.is_ddim() {
        Some(config.subsequence(schedule, steps)?)
    } else {
        None
    };
    let mut run = SamplerRun::new(kind, schedule, &denoiser, config.seed).with_trajectory(config.trajectory);
    if let Some(sub) = &subsequence {
        run = run.with_subsequence(sub);
    }
    run.validate().map_err(|e| Error::Config(e.to_string()))?;
    let pool = thread_pool(config.workers)?;
    let started = Instant::now();
    let chains = pool.install(|| run_batch(&run, config.n_chains))?;
    Ok(Generated {
        chains,
        calls_per_chain: run.steps(),
        wall_time: started.elapsed(),
    })
}

/// Samples CSV: `chain_index,x0,..` (or `chain_index,t,x0,..` with trajectories).
pub fn samples_csv(chains: &[ChainResult], dim: usize, trajectory: bool) -> String {
    let mut out = String::from("chain_index");
    if trajectory {
        out.push_str(",t");
    }
    for k in 0..dim {
        let _ = write!(out, ",x{k}");
    }
    out.push('\n');
    let mut row = |index: usize, t: Option<usize>, x: &StateVector| {
        let _ = write!(out, "{index}");
        if let Some(t) = t {
            let _ = write!(out, ",{t}");
        }
        for v in x.iter() {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    };
    for (index, chain) in chains.iter().enumerate() {
        match (&chain.trajectory, trajectory) {
            (Some(states), true) => states.iter().for_each(|(t, x)| row(index, Some(*t), x)),
            _ => row(index, trajectory.then_some(0), &chain.x0_hat_final),
        }
    }
    out
}

pub fn cmd_sample(config: &RunConfig) -> Result<MetricsReport> {
    config.validate()?;
    let schedule = config.schedule()?;
    let kind = config.sampler.kind;
    let generated = generate(config, &schedule, kind, config.sampler.steps)?;
    let samples = generated.samples();
    let law = config.data_law()?;
    let pool = thread_pool(config.workers)?;
    let report = pool.install(|| -> Result<MetricsReport> {
        let (reference, second) = reference_sets(&law, samples.len(), config.reference_seed());
        let baseline = energy_distance(&reference, &second)?;
        evaluate_against(
            &samples,
            &law,
            &reference,
            baseline,
            generated.calls_per_chain,
            generated.wall_time,
        )
    })?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Numerical(e.to_string()))?;
    write_all_or_nothing(&[
        (
            config.outputs.samples.as_path(),
            samples_csv(&generated.chains, config.dim, config.trajectory),
        ),
        (config.outputs.metrics.as_path(), json + "\n"),
    ])?;
    println!(
        "{kind}: {} chains, {} denoiser calls/chain, {:.3}s, energy distance {:.6e} (baseline {:.6e})",
        report.n_samples,
        report.denoiser_calls_per_chain,
        report.wall_time,
        report.energy_distance,
        report.baseline_energy_distance
    );
    Ok(report)
}

/// One row of the benchmark table.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub sampler: SamplerKind,
    pub length: usize,
    pub denoiser_calls: usize,
    pub wall_time: f64,
    pub speedup_vs_t: f64,
    pub energy_distance: f64,
    pub baseline_energy_distance: f64,
}

pub const BENCH_HEADER: &str =
    "sampler,length,denoiser_calls,wall_time,speedup_vs_T,energy_distance,baseline_energy_distance";

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = format!("{BENCH_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.sampler, r.length, r.denoiser_calls, r.wall_time, r.speedup_vs_t, r.energy_distance, r.baseline_energy_distance
        );
    }
    out
}

pub fn bench_markdown(rows: &[BenchRow]) -> String {
    let mut out = String::from(
        "| sampler | length | denoiser calls | wall time (s) | speedup vs T | energy distance | baseline |\n\
         |---|---:|---:|---:|---:|---:|---:|\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {:.3} | {}x | {:.4e} | {:.4e} |",
            r.sampler, r.length, r.denoiser_calls, r.wall_time, r.speedup_vs_t, r.energy_distance, r.baseline_energy_distance
        );
    }
    out
}

/// The DDPM sampler matching the parameterization of a DDIM kind.
pub fn ddpm_counterpart(kind: SamplerKind) -> SamplerKind {
    match kind {
        SamplerKind::DdimEps | SamplerKind::DdpmEps => SamplerKind::DdpmEps,
        SamplerKind::DdimX0Pcdm | SamplerKind::DdpmX0 => SamplerKind::DdpmX0,
    }
}

/// Runs every DDIM length in `sampler.bench_steps` and the full-length DDPM chain.
pub fn run_bench(config: &RunConfig) -> Result<Vec<BenchRow>> {
    let mut probe = config.clone();
    probe.sampler.steps = config.sampler.bench_steps.iter().copied().min().unwrap_or(2);
    probe.validate()?;
    if config.sampler.bench_steps.is_empty() {
        return Err(Error::Config("sampler.bench_steps must not be empty".into()));
    }
    let schedule = config.schedule()?;
    let horizon = schedule.horizon();
    let ddim_kind = match config.sampler.kind {
        SamplerKind::DdpmEps => SamplerKind::DdimEps,
        SamplerKind::DdpmX0 => SamplerKind::DdimX0Pcdm,
        other => other,
    };
    let law = config.data_law()?;
    let pool = thread_pool(config.workers)?;
    let (reference, baseline) = pool.install(|| -> Result<_> {
        let (reference, second) = reference_sets(&law, config.n_chains, config.reference_seed());
        let baseline = energy_distance(&reference, &second)?;
        Ok((reference, baseline))
    })?;

    let mut plan: Vec<(SamplerKind, usize)> = config.sampler.bench_steps.iter().map(|&s| (ddim_kind, s)).collect();
    plan.push((ddpm_counterpart(ddim_kind), horizon));

    plan.into_iter()
        .map(|(kind, length)| {
            let generated = generate(config, &schedule, kind, length)?;
            let samples = generated.samples();
            let report = pool.install(|| {
                evaluate_against(
                    &samples,
                    &law,
                    &reference,
                    baseline,
                    generated.calls_per_chain,
                    generated.wall_time,
                )
            })?;
            Ok(BenchRow {
                sampler: kind,
                length,
                denoiser_calls: generated.calls_per_chain,
                wall_time: report.wall_time,
                speedup_vs_t: horizon as f64 / generated.calls_per_chain as f64,
                energy_distance: report.energy_distance,
                baseline_energy_distance: baseline,
            })
        })
        .collect()
}

pub fn cmd_bench(config: &RunConfig) -> Result<Vec<BenchRow>> {
    let rows = run_bench(config)?;
    let markdown = bench_markdown(&rows);
    let md_path = config.outputs.bench.with_extension("md");
    write_all_or_nothing(&[
        (config.outputs.bench.as_path(), bench_csv(&rows)),
        (md_path.as_path(), markdown.clone()),
    ])?;
    print!("{markdown}");
    Ok(rows)
}

/// Runs the invariant suite on the default schedule; returns the exit code.
pub fn cmd_verify() -> i32 {
    let schedule = build_cosine_schedule(
        crate::schedule::DEFAULT_HORIZON,
        crate::schedule::DEFAULT_S_OFFSET,
        crate::schedule::DEFAULT_BETA_MAX,
    )
    .expect("default schedule is valid");
    verify_schedule(&schedule, &mut io::stdout())
}

/// Runs the suite against `schedule`; exit 0 iff every property passes.
pub fn verify_schedule(schedule: &NoiseSchedule, out: &mut dyn Write) -> i32 {
    let outcomes = verify::run_suite(schedule, out);
    match outcomes.iter().find(|o| o.result.is_err()) {
        None => {
            let _ = writeln!(out, "all {} properties passed", outcomes.len());
            EXIT_OK
        }
        Some(first) => {
            let _ = writeln!(out, "first failing property: {}", first.name);
            EXIT_FAILURE
        }
    }
}

/// `t,alpha_bar,beta,beta_tilde` for `t = 0..=T`; the `t = 0` row leaves the betas blank.
pub fn schedule_csv(schedule: &NoiseSchedule) -> String {
    let mut out = String::from("t,alpha_bar,beta,beta_tilde\n");
    let _ = writeln!(out, "0,{},,", schedule.alpha_bar(0));
    for t in 1..=schedule.horizon() {
        let _ = writeln!(
            out,
            "{t},{},{},{}",
            schedule.alpha_bar(t),
            schedule.beta(t),
            schedule.beta_tilde(t)
        );
    }
    out
}

pub fn cmd_schedule_dump(params: &ScheduleParams, out: &Path) -> Result<()> {
    let schedule = params.build()?;
    write_all_or_nothing(&[(out, schedule_csv(&schedule))])
}
