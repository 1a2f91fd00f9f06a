//! Experiment configuration, read from TOML.
//!
//! ```toml
//! horizon = 30
//! trials = 100000
//! seed = 7
//!
//! [model]
//! a = [[0.99, 0.3], [0.1, 0.7]]
//! c = [[2.3, 1.0], [1.0, 1.8]]
//! q = [[1.0, 0.0], [0.0, 1.0]]
//! r = [[1.0, 0.0], [0.0, 1.0]]
//!
//! [channel]
//! alpha = 1.0
//! n0w = 3.0
//!
//! [[policy]]
//! kind = "optimal_data_driven"
//! budget = 5.0
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::channel::{ChannelError, ChannelParams};
use crate::plant::{ModelError, SystemModel};
use crate::policy::PolicyKind;
use crate::psdlin::{LinalgError, Matrix, PsdMatrix};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Plant matrices as nested row arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub a: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pi0: Option<Vec<Vec<f64>>>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            a: vec![vec![0.99, 0.3], vec![0.1, 0.7]],
            c: vec![vec![2.3, 1.0], vec![1.0, 1.8]],
            q: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            r: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            pi0: None,
        }
    }
}

fn matrix_from_rows(name: &str, rows: &[Vec<f64>]) -> Result<Matrix, ConfigError> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if nrows == 0 || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(ConfigError::Invalid(format!("matrix `{name}` must be a nonempty rectangular array")));
    }
    Ok(Matrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn psd_from_rows(name: &str, rows: &[Vec<f64>]) -> Result<PsdMatrix, ConfigError> {
    Ok(PsdMatrix::new(matrix_from_rows(name, rows)?)?)
}

impl ModelConfig {
    pub fn build(&self) -> Result<SystemModel, ConfigError> {
        let pi0 = self
            .pi0
            .as_deref()
            .map(|rows| psd_from_rows("pi0", rows))
            .transpose()?;
        Ok(SystemModel::new(
            matrix_from_rows("a", &self.a)?,
            matrix_from_rows("c", &self.c)?,
            psd_from_rows("q", &self.q)?,
            psd_from_rows("r", &self.r)?,
            pi0,
        )?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InversionSpec {
    pub budget: f64,
    pub h_star: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyConfig {
    ConstantBaseline {
        budget: f64,
    },
    OptimalDataDriven {
        budget: f64,
    },
    /// Explicit weights `Q_τ`, one per holding time; the last one repeats.
    DataDriven {
        weights: Vec<Vec<Vec<f64>>>,
        base_power: f64,
    },
    /// Per-slot budgets, either a sequence that cycles over the horizon or
    /// the slot power truncated inversion would spend.
    TimeVaryingOptimal {
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        budgets: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        match_inversion: Option<InversionSpec>,
    },
    TruncatedInversion {
        budget: f64,
        h_star: f64,
    },
}

impl PolicyConfig {
    pub fn kind(&self) -> PolicyKind {
        match self {
            PolicyConfig::ConstantBaseline { .. } => PolicyKind::ConstantBaseline,
            PolicyConfig::OptimalDataDriven { .. } => PolicyKind::OptimalDataDriven,
            PolicyConfig::DataDriven { .. } => PolicyKind::DataDriven,
            PolicyConfig::TimeVaryingOptimal { .. } => PolicyKind::TimeVaryingOptimal,
            PolicyConfig::TruncatedInversion { .. } => PolicyKind::TruncatedInversion,
        }
    }

    /// Nominal average power, where the policy has one.
    pub fn budget(&self) -> Option<f64> {
        match self {
            PolicyConfig::ConstantBaseline { budget }
            | PolicyConfig::OptimalDataDriven { budget }
            | PolicyConfig::TruncatedInversion { budget, .. } => Some(*budget),
            PolicyConfig::TimeVaryingOptimal {
                match_inversion: Some(spec),
                ..
            } => Some(spec.budget),
            PolicyConfig::TimeVaryingOptimal { budgets, .. } if !budgets.is_empty() => {
                Some(budgets.iter().sum::<f64>() / budgets.len() as f64)
            }
            _ => None,
        }
    }

    /// The same policy with its budget replaced; `None` for policies
    /// without a scalar budget.
    pub fn with_budget(&self, budget: f64) -> Option<Self> {
        match self {
            PolicyConfig::ConstantBaseline { .. } => Some(PolicyConfig::ConstantBaseline { budget }),
            PolicyConfig::OptimalDataDriven { .. } => Some(PolicyConfig::OptimalDataDriven { budget }),
            PolicyConfig::TruncatedInversion { h_star, .. } => Some(PolicyConfig::TruncatedInversion {
                budget,
                h_star: *h_star,
            }),
            PolicyConfig::TimeVaryingOptimal {
                match_inversion: Some(spec),
                ..
            } => Some(PolicyConfig::TimeVaryingOptimal {
                budgets: Vec::new(),
                match_inversion: Some(InversionSpec {
                    budget,
                    h_star: spec.h_star,
                }),
            }),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let check = |b: f64| {
            if b >= 0.0 && b.is_finite() {
                Ok(())
            } else {
                Err(ConfigError::Invalid(format!("budget must be nonnegative, got {b}")))
            }
        };
        match self {
            PolicyConfig::ConstantBaseline { budget } | PolicyConfig::OptimalDataDriven { budget } => check(*budget),
            PolicyConfig::DataDriven { weights, base_power } => {
                if weights.is_empty() {
                    return Err(ConfigError::Invalid("data_driven needs at least one weight".into()));
                }
                check(*base_power)
            }
            PolicyConfig::TimeVaryingOptimal {
                budgets,
                match_inversion,
            } => match (budgets.is_empty(), match_inversion) {
                (false, None) => budgets.iter().try_for_each(|&b| check(b)),
                (true, Some(spec)) => check(spec.budget),
                _ => Err(ConfigError::Invalid(
                    "time_varying_optimal needs exactly one of `budgets` or `match_inversion`".into(),
                )),
            },
            PolicyConfig::TruncatedInversion { budget, h_star } => {
                if !(*h_star > 0.0) {
                    return Err(ConfigError::Invalid(format!("h_star must be positive, got {h_star}")));
                }
                check(*budget)
            }
        }
    }

    /// Weight matrices for `DataDriven`.
    pub fn weight_matrices(&self) -> Result<Vec<PsdMatrix>, ConfigError> {
        match self {
            PolicyConfig::DataDriven { weights, .. } => weights
                .iter()
                .enumerate()
                .map(|(i, w)| psd_from_rows(&format!("weights[{i}]"), w))
                .collect(),
            _ => Ok(Vec::new()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub budgets: Vec<f64>,
}

fn default_channel() -> ChannelParams {
    ChannelParams::with_noise_ratio(3.0).expect("positive noise")
}

fn default_horizon() -> usize {
    30
}

fn default_trials() -> usize {
    100_000
}

fn default_burn_in() -> usize {
    50
}

fn default_output() -> PathBuf {
    PathBuf::from("ddpc_out")
}

fn default_policies() -> Vec<PolicyConfig> {
    vec![
        PolicyConfig::OptimalDataDriven { budget: 5.0 },
        PolicyConfig::ConstantBaseline { budget: 5.0 },
    ]
}

fn one_or_many<'de, D: Deserializer<'de>>(de: D) -> Result<Vec<PolicyConfig>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(PolicyConfig),
        Many(Vec<PolicyConfig>),
    }
    Ok(match OneOrMany::deserialize(de)? {
        OneOrMany::One(p) => vec![p],
        OneOrMany::Many(v) => v,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default = "default_channel")]
    pub channel: ChannelParams,
    #[serde(default = "default_policies", deserialize_with = "one_or_many")]
    pub policy: Vec<PolicyConfig>,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    /// Local-filter warm-up slots before the first scored slot.
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            channel: default_channel(),
            policy: default_policies(),
            horizon: default_horizon(),
            trials: default_trials(),
            seed: 0,
            burn_in: default_burn_in(),
            sweep: None,
            output: default_output(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub horizon: Option<usize>,
    pub output: Option<PathBuf>,
    pub budget: Option<f64>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.horizon == 0 {
            return Err(ConfigError::Invalid("horizon must be at least 1".into()));
        }
        if self.trials == 0 {
            return Err(ConfigError::Invalid("trials must be at least 1".into()));
        }
        if self.policy.is_empty() {
            return Err(ConfigError::Invalid("at least one policy is required".into()));
        }
        self.channel.validate()?;
        for p in &self.policy {
            p.validate()?;
        }
        if let Some(sweep) = &self.sweep {
            if sweep.budgets.iter().any(|b| !(*b >= 0.0 && b.is_finite())) {
                return Err(ConfigError::Invalid("sweep budgets must be nonnegative".into()));
            }
        }
        Ok(())
    }

    pub fn apply(mut self, o: &Overrides) -> Result<Self, ConfigError> {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(trials) = o.trials {
            self.trials = trials;
        }
        if let Some(horizon) = o.horizon {
            self.horizon = horizon;
        }
        if let Some(out) = &o.output {
            self.output = out.clone();
        }
        if let Some(budget) = o.budget {
            self.policy = self
                .policy
                .iter()
                .map(|p| p.with_budget(budget).unwrap_or_else(|| p.clone()))
                .collect();
        }
        self.validate()?;
        Ok(self)
    }

    pub fn build_model(&self) -> Result<SystemModel, ConfigError> {
        self.model.build()
    }
}
