//! Diffusion sampling with exact oracle denoisers.
//!
//! The crate implements the forward noising process, DDPM ancestral sampling
//! in both the noise- and x0-parameterizations, DDIM sampling along a
//! subsequence of time steps, and the x0-parameterized DDIM variant in which
//! the denoiser predicts only the unknown part `s0` of a sample whose known
//! part `y` is given. Instead of a trained network, the samplers are driven by
//! [`DenoiserModel`], which evaluates the exact posterior mean of a Gaussian or
//! Gaussian-mixture data law, so every sampler can be checked against the law
//! it should reproduce.
//!
//! ```no_run
//! use diffsample::{build_cosine_schedule, build_subsequence, run_chain, Condition, DataLaw,
//!     DenoiserModel, SamplerKind, SamplerRun, SpacingStrategy, StateVector};
//!
//! let schedule = build_cosine_schedule(1000, 0.008, 0.999)?;
//! let law = DataLaw::gaussian(StateVector::new(vec![1.0, -1.0])?, 0.5)?;
//! let denoiser = DenoiserModel::x0_prediction(law, Condition::new(StateVector::zeros(2)))?;
//! let tau = build_subsequence(&schedule, 10, SpacingStrategy::Uniform, 0.0)?;
//! let run = SamplerRun::new(SamplerKind::DdimX0Pcdm, &schedule, &denoiser, 7).with_subsequence(&tau);
//! let out = run_chain(&run)?;
//! assert_eq!(out.denoiser_calls, 10);
//! # Ok::<(), diffsample::Error>(())
//! ```

// Invariant checks are written as `!(x <= limit)` so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod denoise;
pub mod error;
pub mod forward;
pub mod metrics;
pub mod rng;
pub mod samplers;
pub mod schedule;
pub mod state;
pub mod verify;

pub use config::RunConfig;
pub use denoise::{eps_from_x0, x0_from_eps, Condition, DataLaw, Denoiser, DenoiserModel, Parameterization};
pub use error::{Error, Result};
pub use forward::{add_noise, diffuse_step, diffuse_to};
pub use metrics::{energy_distance, moment_report, MetricsReport, MomentReport};
pub use samplers::{
    ddim_step_eps, ddim_step_x0_pcdm, ddpm_step_eps, ddpm_step_x0, run_batch, run_chain, ChainResult, SamplerKind,
    SamplerRun, Transition,
};
pub use schedule::{build_cosine_schedule, build_subsequence, sigma_tau, NoiseSchedule, SpacingStrategy, SubSequence};
pub use state::StateVector;
