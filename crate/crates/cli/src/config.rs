use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use mixlab_core::dynamics::catalog::system;
use mixlab_core::noise::{KernelSpec, MarkovKernel};
use mixlab_core::reduction::{MemoryOne, NoiseModel, StationaryNoiseModel, DEFAULT_BURN_IN, DEFAULT_IOTA};
use mixlab_core::RdsSystem;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot parse {path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    ReduceCheck,
    Mixing,
    Certify,
    PushforwardCheck,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::ReduceCheck => "reduce-check",
            Command::Mixing => "mixing",
            Command::Certify => "certify",
            Command::PushforwardCheck => "pushforward-check",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// The kernel drives the noise directly.
    #[default]
    Markov,
    /// The kernel read through a finite past buffer.
    MemoryOne,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub kernel: String,
    #[serde(default, skip_serializing_if = "is_default")]
    pub model: ModelKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub memory: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iota: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub half_width: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shift: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cells: Option<usize>,
}

fn is_default<T: Default + PartialEq>(v: &T) -> bool {
    *v == T::default()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Cells per state axis of the main histogram.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cells: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub n: usize,
    pub horizon: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StartConfig {
    /// Initial state; the upper corner of `X` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub state: Option<Vec<f64>>,
    /// Initial noise for commands that condition on it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyConfig {
    /// Target radius of the recurrence certificate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    /// Start pairs of the coupling certificate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pairs: Option<usize>,
    /// Probe points of the domination check.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probe_samples: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    pub system: SystemConfig,
    pub noise: NoiseConfig,
    pub ensemble: EnsembleConfig,
    #[serde(default, skip_serializing_if = "is_default")]
    pub grid: GridConfig,
    #[serde(default, skip_serializing_if = "is_default")]
    pub start: StartConfig,
    #[serde(default, skip_serializing_if = "is_default")]
    pub certify: CertifyConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|source| ConfigError::Parse { path: path.to_path_buf(), source })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
        Self::from_toml(&text, path)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.ensemble.n == 0 || self.ensemble.horizon == 0 {
            return Err(invalid("ensemble.n and ensemble.horizon must be at least 1"));
        }
        if self.threads == Some(0) {
            return Err(invalid("threads must be at least 1"));
        }
        if self.grid.cells == Some(0) {
            return Err(invalid("grid.cells must be at least 1"));
        }
        self.kernel_spec()?;
        let sys = self.system()?;
        for (what, v, dim) in [
            ("start.state", &self.start.state, sys.dim_state()),
            ("start.noise", &self.start.noise, sys.dim_noise()),
        ] {
            if let Some(v) = v {
                if v.len() != dim {
                    return Err(invalid(format!("{what} needs {dim} coordinates")));
                }
            }
        }
        if self.noise.model == ModelKind::Markov
            && (self.noise.memory.is_some() || self.noise.iota.is_some() || self.noise.burn_in.is_some())
        {
            return Err(invalid("memory, iota and burn_in apply to model = \"memory_one\" only"));
        }
        self.noise_model()?;
        Ok(())
    }

    /// Catalog kernel with the configured parameters; parameters that the
    /// kernel does not take are rejected.
    pub fn kernel_spec(&self) -> Result<KernelSpec, ConfigError> {
        let n = &self.noise;
        let spec = KernelSpec::from_name(&n.kernel).map_err(|e| invalid(e.to_string()))?;
        let stray = |names: &[(&str, bool)]| -> Result<(), ConfigError> {
            match names.iter().find(|(_, set)| *set) {
                Some((name, _)) => Err(invalid(format!("kernel {} takes no parameter `{name}`", n.kernel))),
                None => Ok(()),
            }
        };
        Ok(match spec {
            KernelSpec::IidUniform { dim, half_width } => {
                stray(&[("a", n.a.is_some()), ("s", n.s.is_some()), ("shift", n.shift.is_some()), ("cells", n.cells.is_some())])?;
                KernelSpec::IidUniform { dim: n.dim.unwrap_or(dim), half_width: n.half_width.unwrap_or(half_width) }
            }
            KernelSpec::Ar1TruncGauss { a, s, half_width } => {
                stray(&[("dim", n.dim.is_some()), ("shift", n.shift.is_some()), ("cells", n.cells.is_some())])?;
                KernelSpec::Ar1TruncGauss {
                    a: n.a.unwrap_or(a),
                    s: n.s.unwrap_or(s),
                    half_width: n.half_width.unwrap_or(half_width),
                }
            }
            KernelSpec::DriftAway { shift, half_width, cells } => {
                stray(&[("dim", n.dim.is_some()), ("a", n.a.is_some()), ("s", n.s.is_some())])?;
                KernelSpec::DriftAway {
                    shift: n.shift.unwrap_or(shift),
                    half_width: n.half_width.unwrap_or(half_width),
                    cells: n.cells.unwrap_or(cells),
                }
            }
        })
    }

    pub fn kernel(&self) -> Result<Arc<dyn MarkovKernel>, ConfigError> {
        self.kernel_spec()?.build().map_err(|e| invalid(format!("noise: {e}")))
    }

    pub fn system(&self) -> Result<RdsSystem, ConfigError> {
        let k = self.kernel()?;
        system(&self.system.name, k.support()).map_err(|e| invalid(format!("system: {e}")))
    }

    pub fn noise_model(&self) -> Result<NoiseModel, ConfigError> {
        let k = self.kernel()?;
        Ok(match self.noise.model {
            ModelKind::Markov => NoiseModel::markov(k),
            ModelKind::MemoryOne => NoiseModel::Stationary(
                StationaryNoiseModel::new(
                    Arc::new(MemoryOne::new(k)),
                    self.noise.memory.unwrap_or(1),
                    self.noise.iota.unwrap_or(DEFAULT_IOTA),
                    self.noise.burn_in.unwrap_or(DEFAULT_BURN_IN),
                )
                .map_err(|e| invalid(format!("noise: {e}")))?,
            ),
        })
    }
}
