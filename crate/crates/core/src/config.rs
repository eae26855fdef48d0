//! Experiment configuration: a TOML document with command-line overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::denoise::{Condition, DataLaw, DenoiserModel};
use crate::error::{Error, Result};
use crate::samplers::SamplerKind;
use crate::schedule::{build_subsequence, NoiseSchedule, ScheduleParams, SpacingStrategy, SubSequence};
use crate::state::StateVector;

pub const DEFAULT_DIM: usize = 2;
pub const DEFAULT_BENCH_STEPS: [usize; 4] = [10, 20, 50, 100];

/// Key for the reference draws; keeps them independent of the chain streams of the same seed.
pub const REFERENCE_SEED_SALT: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub kind: SamplerKind,
    /// Subsequence length `S` for the DDIM kinds.
    pub steps: usize,
    pub strategy: SpacingStrategy,
    pub eta: f64,
    /// Lengths swept by `bench`.
    pub bench_steps: Vec<usize>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            kind: SamplerKind::DdimX0Pcdm,
            steps: 10,
            strategy: SpacingStrategy::Uniform,
            eta: 0.0,
            bench_steps: DEFAULT_BENCH_STEPS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub samples: PathBuf,
    pub metrics: PathBuf,
    pub bench: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            samples: PathBuf::from("samples.csv"),
            metrics: PathBuf::from("metrics.json"),
            bench: PathBuf::from("bench.csv"),
        }
    }
}

impl OutputConfig {
    /// Default file names inside `dir`.
    pub fn in_dir(dir: &Path) -> Self {
        let d = Self::default();
        Self {
            samples: dir.join(d.samples),
            metrics: dir.join(d.metrics),
            bench: dir.join(d.bench),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub n_chains: usize,
    pub dim: usize,
    /// Worker threads; 0 uses every available core.
    pub workers: usize,
    pub trajectory: bool,
    pub schedule: ScheduleParams,
    pub sampler: SamplerConfig,
    /// Target law; the reference mixture in `dim` dimensions when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data_law: Option<DataLaw>,
    /// Known part `y` of the sample; zero when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub condition_y: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub condition_tag: Option<String>,
    pub outputs: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_chains: 1000,
            dim: DEFAULT_DIM,
            workers: 0,
            trajectory: false,
            schedule: ScheduleParams::default(),
            sampler: SamplerConfig::default(),
            data_law: None,
            condition_y: None,
            condition_tag: None,
            outputs: OutputConfig::default(),
        }
    }
}

/// Three well-separated isotropic components in the first two coordinates.
pub fn reference_mixture(dim: usize) -> Result<DataLaw> {
    if dim == 0 {
        return Err(Error::Config("dim must be positive".into()));
    }
    let point = |x: f64, y: f64| {
        let mut v = vec![0.0; dim];
        v[0] = x;
        if dim > 1 {
            v[1] = y;
        }
        StateVector::new(v)
    };
    DataLaw::mixture(
        vec![0.3, 0.3, 0.4],
        vec![point(-2.0, 0.0)?, point(2.0, 0.0)?, point(0.0, 2.5)?],
        vec![0.5, 0.5, 0.5],
    )
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn data_law(&self) -> Result<DataLaw> {
        let law = match &self.data_law {
            Some(law) => law.clone(),
            None => reference_mixture(self.dim)?,
        };
        law.validate().map_err(|e| Error::Config(format!("data_law: {e}")))?;
        if law.dim() != self.dim {
            return Err(Error::Config(format!(
                "data_law has dimension {} but dim = {}",
                law.dim(),
                self.dim
            )));
        }
        Ok(law)
    }

    pub fn condition(&self) -> Result<Condition> {
        let y = match &self.condition_y {
            Some(values) => {
                if values.len() != self.dim {
                    return Err(Error::Config(format!(
                        "condition_y has {} entries but dim = {}",
                        values.len(),
                        self.dim
                    )));
                }
                StateVector::new(values.clone()).map_err(|e| Error::Config(format!("condition_y: {e}")))?
            }
            None => StateVector::zeros(self.dim),
        };
        let condition = Condition::new(y);
        Ok(match &self.condition_tag {
            Some(tag) => condition.with_tag(tag.clone()),
            None => condition,
        })
    }

    pub fn schedule(&self) -> Result<NoiseSchedule> {
        self.schedule
            .build()
            .map_err(|e| Error::Config(format!("schedule: {e}")))
    }

    /// The oracle denoiser in the parameterization `kind` needs.
    pub fn denoiser(&self, kind: SamplerKind) -> Result<DenoiserModel> {
        let law = self.data_law()?;
        DenoiserModel::new(kind.parameterization(), law, Some(self.condition()?))
            .map_err(|e| Error::Config(format!("data_law: {e}")))
    }

    pub fn subsequence(&self, schedule: &NoiseSchedule, steps: usize) -> Result<SubSequence> {
        build_subsequence(schedule, steps, self.sampler.strategy, self.sampler.eta)
            .map_err(|e| Error::Config(format!("sampler.steps: {e}")))
    }

    /// Checks every field that does not need the schedule.
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("dim must be positive".into()));
        }
        if self.n_chains == 0 {
            return Err(Error::Config("n_chains must be positive".into()));
        }
        if !(self.sampler.eta >= 0.0 && self.sampler.eta.is_finite()) {
            return Err(Error::Config(format!(
                "sampler.eta must be nonnegative, got {}",
                self.sampler.eta
            )));
        }
        if self.sampler.kind.is_ddim() && self.sampler.steps < 2 {
            return Err(Error::Config(format!(
                "sampler.steps must be at least 2, got {}",
                self.sampler.steps
            )));
        }
        self.data_law()?;
        self.condition()?;
        let schedule = self.schedule()?;
        if self.sampler.kind.is_ddim() {
            self.subsequence(&schedule, self.sampler.steps)?;
        }
        Ok(())
    }

    pub fn reference_seed(&self) -> u64 {
        self.seed ^ REFERENCE_SEED_SALT
    }
}
