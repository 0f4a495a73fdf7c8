//! Experiment configuration files.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use cccb::{FeatureLaw, GeneratorConfig, NoiseModel, PolicyKind, RecomputeMode, RewardFunction};
use serde::{Deserialize, Serialize};

pub const DEFAULT_TABLE_ALPHAS: [f64; 5] = [0.01, 0.15, 0.3, 0.6, 0.9];
pub const DEFAULT_ENDURANCE_ALPHAS: [f64; 3] = [0.1, 0.3, 0.6];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    /// Average-regret curves for each policy.
    RegretCurves,
    /// Constraint violations and selection counts over an α grid.
    Table1,
    /// Time for CCConUCB to overtake the conservative policy.
    Endurance,
    /// Runtime checks of the analytic inequalities and coverage.
    Probes,
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Experiment::RegretCurves => "regret_curves",
            Experiment::Table1 => "table1",
            Experiment::Endurance => "endurance",
            Experiment::Probes => "probes",
        };
        f.write_str(name)
    }
}

/// A policy as named in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicySpec {
    CcconucbKnown,
    CcconucbUnknown,
    C2ucb,
    AlwaysConservative,
}

impl PolicySpec {
    pub fn kind(self) -> PolicyKind {
        match self {
            PolicySpec::CcconucbKnown | PolicySpec::CcconucbUnknown => PolicyKind::CcconUcb,
            PolicySpec::C2ucb => PolicyKind::C2Ucb,
            PolicySpec::AlwaysConservative => PolicyKind::AlwaysConservative,
        }
    }

    pub fn known_mu0(self) -> bool {
        self != PolicySpec::CcconucbUnknown
    }

    pub fn name(self) -> &'static str {
        match self {
            PolicySpec::CcconucbKnown => "ccconucb_known",
            PolicySpec::CcconucbUnknown => "ccconucb_unknown",
            PolicySpec::C2ucb => "c2ucb",
            PolicySpec::AlwaysConservative => "always_conservative",
        }
    }
}

/// Experiment description as read from JSON. Omitted fields take the
/// desk-scale defaults; unknown fields are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(rename = "M")]
    pub num_arms: usize,
    pub d: usize,
    #[serde(rename = "K")]
    pub max_arms: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    /// Conservatism level for `regret_curves` and `probes`.
    pub alpha: f64,
    /// α values for `table1` and `endurance`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_grid: Option<Vec<f64>>,
    pub delta: f64,
    /// Ridge regularizer; defaults to `L`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    /// Bound on `‖θ*‖₂`; defaults to `√d`.
    #[serde(rename = "S", skip_serializing_if = "Option::is_none")]
    pub theta_norm_bound: Option<f64>,
    /// Bound on `‖x‖₂²`; defaults to `d`.
    #[serde(rename = "L", skip_serializing_if = "Option::is_none")]
    pub feature_norm_bound: Option<f64>,
    /// Policies for `regret_curves` and `probes`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policies: Option<Vec<PolicySpec>>,
    pub n_seeds: usize,
    /// First instance seed; seed `i` is `base_seed + seed_offset + i`.
    pub base_seed: u64,
    /// Episodes per instance in the `endurance` experiment.
    pub replicates: usize,
    pub reward_function: RewardFunction,
    pub noise: NoiseModel,
    pub feature_law: FeatureLaw,
    /// Size of the conservative set; defaults to `K`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub num_conservative: Option<usize>,
    /// `[low, high]` ranks (1 = best) bracketing the conservative arms' weights.
    pub conservative_ranks: [usize; 2],
    pub recompute_mode: RecomputeMode,
    /// Write one NDJSON log per episode.
    pub write_logs: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: Experiment::RegretCurves,
            num_arms: 20,
            d: 5,
            max_arms: 2,
            horizon: 2000,
            alpha: 0.2,
            alpha_grid: None,
            delta: 0.1,
            lambda: None,
            theta_norm_bound: None,
            feature_norm_bound: None,
            policies: None,
            n_seeds: 50,
            base_seed: 0,
            replicates: 5,
            reward_function: RewardFunction::LinearSum,
            noise: NoiseModel::default(),
            feature_law: FeatureLaw::default(),
            num_conservative: None,
            conservative_ranks: [9, 8],
            recompute_mode: RecomputeMode::Fresh,
            write_logs: true,
            output_dir: None,
        }
    }
}

/// Why a configuration was rejected.
#[derive(Debug)]
pub enum ConfigError {
    Read { path: PathBuf, source: std::io::Error },
    Parse { path: PathBuf, field: String, message: String },
    Invalid { field: String, message: String },
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Read { path, source } => write!(f, "cannot read {}: {source}", path.display()),
            ConfigError::Parse { path, field, message } if path.as_os_str().is_empty() => {
                write!(f, "at `{field}`: {message}")
            }
            ConfigError::Parse { path, field, message } => {
                write!(f, "{}: at `{field}`: {message}", path.display())
            }
            ConfigError::Invalid { field, message } => write!(f, "invalid `{field}`: {message}"),
        }
    }
}

impl std::error::Error for ConfigError {}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        message: message.into(),
    }
}

/// Read, parse and validate a configuration file.
pub fn parse_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let config = parse_str(&text).map_err(|e| match e {
        ConfigError::Parse { field, message, .. } => ConfigError::Parse {
            path: path.to_path_buf(),
            field,
            message,
        },
        other => other,
    })?;
    Ok(config)
}

/// Parse and validate a configuration document.
pub fn parse_str(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        ConfigError::Parse {
            path: PathBuf::new(),
            field,
            message: e.into_inner().to_string(),
        }
    })?;
    config.validate()?;
    Ok(config)
}

fn check_alpha(field: &str, alpha: f64) -> Result<(), ConfigError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("must lie in (0, 1), got {alpha}")))
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        check_alpha("alpha", self.alpha)?;
        if let Some(grid) = &self.alpha_grid {
            if !matches!(self.experiment, Experiment::Table1 | Experiment::Endurance) {
                return Err(invalid("alpha_grid", format!("not used by experiment {}", self.experiment)));
            }
            if grid.is_empty() {
                return Err(invalid("alpha_grid", "must not be empty"));
            }
            for (i, &a) in grid.iter().enumerate() {
                check_alpha(&format!("alpha_grid[{i}]"), a)?;
            }
            if grid.windows(2).any(|w| w[1] <= w[0]) {
                return Err(invalid("alpha_grid", "entries must be strictly increasing"));
            }
        }
        if let Some(policies) = &self.policies {
            if !matches!(self.experiment, Experiment::RegretCurves | Experiment::Probes) {
                return Err(invalid("policies", format!("not used by experiment {}", self.experiment)));
            }
            if policies.is_empty() {
                return Err(invalid("policies", "must not be empty"));
            }
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(invalid("delta", format!("must lie in (0, 1), got {}", self.delta)));
        }
        if let Some(lambda) = self.lambda {
            if !(lambda.is_finite() && lambda > 0.0) {
                return Err(invalid("lambda", format!("must be finite and > 0, got {lambda}")));
            }
        }
        if self.horizon == 0 {
            return Err(invalid("T", "must be at least 1"));
        }
        if self.n_seeds == 0 {
            return Err(invalid("n_seeds", "must be at least 1"));
        }
        if self.replicates == 0 {
            return Err(invalid("replicates", "must be at least 1"));
        }
        if self.experiment == Experiment::Endurance && self.n_seeds < 3 {
            return Err(invalid("n_seeds", "endurance needs at least 3 instances to form gap terciles"));
        }
        self.generator().validate().map_err(|e| match e {
            cccb::Error::InvalidParameter { name, reason } => invalid(name, reason),
            other => invalid("generator", other.to_string()),
        })
    }

    /// Instance-generation settings implied by this configuration.
    pub fn generator(&self) -> GeneratorConfig {
        let mut g = GeneratorConfig::new(self.num_arms, self.d, self.max_arms);
        if let Some(s) = self.theta_norm_bound {
            g.theta_norm_bound = s;
        }
        if let Some(l) = self.feature_norm_bound {
            g.feature_norm_bound = l;
        }
        if let Some(n) = self.num_conservative {
            g.num_conservative = n;
        }
        g.conservative_rank_low = self.conservative_ranks[0];
        g.conservative_rank_high = self.conservative_ranks[1];
        g.noise = self.noise;
        g.feature_law = self.feature_law;
        g.reward_function = self.reward_function;
        g
    }

    pub fn policies(&self) -> Vec<PolicySpec> {
        self.policies.clone().unwrap_or_else(|| {
            vec![
                PolicySpec::C2ucb,
                PolicySpec::CcconucbKnown,
                PolicySpec::CcconucbUnknown,
            ]
        })
    }

    pub fn alpha_grid(&self) -> Vec<f64> {
        self.alpha_grid.clone().unwrap_or_else(|| match self.experiment {
            Experiment::Endurance => DEFAULT_ENDURANCE_ALPHAS.to_vec(),
            _ => DEFAULT_TABLE_ALPHAS.to_vec(),
        })
    }

    /// Instance seeds for this run.
    pub fn seeds(&self, seed_offset: u64) -> Vec<u64> {
        (0..self.n_seeds as u64).map(|i| self.base_seed + seed_offset + i).collect()
    }
}
