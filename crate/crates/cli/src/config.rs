//! Command-line and config-file resolution.

use std::path::{Path, PathBuf};

use clap::Parser;
use multi_ucrl::environments::{EnvError, EnvKind, EnvSpec, RewardMode};
use multi_ucrl::ucrl::SharingMode;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("missing required field `{0}`")]
    Missing(&'static str),
    #[error("`{field}` out of range: {message}")]
    OutOfRange { field: &'static str, message: String },
    #[error("`{field}`: cannot parse `{value}`: {message}")]
    Parse { field: &'static str, value: String, message: String },
    #[error("config file {path}: {message}")]
    File { path: PathBuf, message: String },
}

fn out_of_range(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::OutOfRange { field, message: message.into() }
}

/// Experiment settings. Every key of the JSON config file has the same name
/// as the corresponding flag. Flags override values from the file.
#[derive(Debug, Clone, Default, PartialEq, Parser, Deserialize)]
#[command(name = "multi-ucrl", version, about = "Seeded multi-agent UCRL experiments")]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct Settings {
    /// JSON file with default values for any of the flags below
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// riverswim, random or two-state
    #[arg(long)]
    pub env: Option<String>,
    /// Load the environment from an MDP JSON file instead of `--env`
    #[arg(long)]
    pub mdp: Option<PathBuf>,
    #[arg(long)]
    pub states: Option<usize>,
    #[arg(long)]
    pub actions: Option<usize>,
    #[arg(long)]
    pub agents: Option<usize>,
    /// One or more sharing modes, comma separated
    #[arg(long)]
    pub mode: Option<String>,
    /// distinct or shared
    #[arg(long)]
    pub reward_mode: Option<String>,
    /// Seed of the random environment generator
    #[arg(long)]
    pub env_seed: Option<u64>,
    #[arg(long)]
    pub horizon: Option<u64>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub replications: Option<u64>,
    /// Base seed; replication i runs on a stream derived from seed + i
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Keep every k-th step in trace files (episode starts are always kept)
    #[arg(long)]
    pub trace_stride: Option<u64>,
    /// Regret checkpoints, comma separated; defaults to powers of two and T
    #[arg(long)]
    pub checkpoints: Option<String>,
}

impl Settings {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let file_err = |message: String| ConfigError::File { path: path.to_path_buf(), message };
        let text = std::fs::read_to_string(path).map_err(|e| file_err(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| file_err(e.to_string()))
    }

    /// Fills every unset field from `base`.
    pub fn or(self, base: Settings) -> Settings {
        Settings {
            config: self.config.or(base.config),
            env: self.env.or(base.env),
            mdp: self.mdp.or(base.mdp),
            states: self.states.or(base.states),
            actions: self.actions.or(base.actions),
            agents: self.agents.or(base.agents),
            mode: self.mode.or(base.mode),
            reward_mode: self.reward_mode.or(base.reward_mode),
            env_seed: self.env_seed.or(base.env_seed),
            horizon: self.horizon.or(base.horizon),
            delta: self.delta.or(base.delta),
            replications: self.replications.or(base.replications),
            seed: self.seed.or(base.seed),
            out: self.out.or(base.out),
            jobs: self.jobs.or(base.jobs),
            trace_stride: self.trace_stride.or(base.trace_stride),
            checkpoints: self.checkpoints.or(base.checkpoints),
        }
    }

    /// Merges the config file, if any, under the flags and validates the result.
    pub fn resolve(self) -> Result<ExperimentConfig, ConfigError> {
        let merged = match &self.config {
            Some(path) => {
                let file = Settings::from_file(path)?;
                self.or(file)
            }
            None => self,
        };
        ExperimentConfig::from_settings(merged)
    }
}

/// Where the environment comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvSource {
    Builtin(EnvSpec),
    File { path: PathBuf, num_agents: usize },
}

/// Fully resolved experiment, echoed into every output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub env: EnvSource,
    pub modes: Vec<SharingMode>,
    pub delta: f64,
    pub horizon: u64,
    pub replications: u64,
    pub base_seed: u64,
    pub out: PathBuf,
    pub trace_stride: u64,
    pub checkpoints: Option<Vec<u64>>,
    /// Does not affect any output.
    #[serde(skip)]
    pub jobs: usize,
}

fn parse_list<T: std::str::FromStr>(field: &'static str, text: &str) -> Result<Vec<T>, ConfigError>
where
    T::Err: std::fmt::Display,
{
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse().map_err(|e: T::Err| ConfigError::Parse {
                field,
                value: s.to_string(),
                message: e.to_string(),
            })
        })
        .collect()
}

fn env_field(e: EnvError) -> ConfigError {
    let field = match &e {
        EnvError::TooSmall { what: "num_agents", .. } => "agents",
        EnvError::TooSmall { what: "num_actions", .. } | EnvError::RiverswimActions(_) => "actions",
        EnvError::TooSmall { .. } => "states",
        EnvError::TwoStateShape => "states",
        EnvError::Unknown { .. } => "env",
    };
    out_of_range(field, e.to_string())
}

impl ExperimentConfig {
    pub fn from_settings(s: Settings) -> Result<Self, ConfigError> {
        let agents = s.agents.unwrap_or(1);
        if agents < 1 {
            return Err(out_of_range("agents", "must be at least 1"));
        }
        let reward_mode: RewardMode = match &s.reward_mode {
            Some(text) => text.parse().map_err(|e: EnvError| ConfigError::Parse {
                field: "reward-mode",
                value: text.clone(),
                message: e.to_string(),
            })?,
            None => RewardMode::DistinctPerAgent,
        };
        let env = match (&s.env, &s.mdp) {
            (Some(_), Some(_)) => return Err(out_of_range("mdp", "give either `env` or `mdp`, not both")),
            (None, None) => return Err(ConfigError::Missing("env")),
            (None, Some(path)) => EnvSource::File { path: path.clone(), num_agents: agents },
            (Some(name), None) => {
                let kind: EnvKind = name.parse().map_err(|e: EnvError| ConfigError::Parse {
                    field: "env",
                    value: name.clone(),
                    message: e.to_string(),
                })?;
                let (default_states, default_actions) = match kind {
                    EnvKind::Riverswim => (Some(6), Some(2)),
                    EnvKind::TwoState => (Some(2), Some(2)),
                    EnvKind::Random => (None, None),
                };
                let spec = EnvSpec {
                    kind,
                    num_states: s.states.or(default_states).ok_or(ConfigError::Missing("states"))?,
                    num_actions: s.actions.or(default_actions).ok_or(ConfigError::Missing("actions"))?,
                    num_agents: agents,
                    seed: s.env_seed.unwrap_or(0),
                    reward_mode,
                };
                spec.validate().map_err(env_field)?;
                EnvSource::Builtin(spec)
            }
        };

        let modes: Vec<SharingMode> = match &s.mode {
            Some(text) => parse_list("mode", text)?,
            None => vec![SharingMode::SharedTransitions],
        };
        if modes.is_empty() {
            return Err(out_of_range("mode", "no sharing mode given"));
        }
        if modes.iter().enumerate().any(|(i, m)| modes[..i].contains(m)) {
            return Err(out_of_range("mode", "a sharing mode is listed twice"));
        }
        if let EnvSource::Builtin(spec) = &env {
            if modes.contains(&SharingMode::SharedAll) && spec.reward_mode != RewardMode::Shared && spec.num_agents > 1 {
                return Err(out_of_range("reward-mode", "shared-all needs `--reward-mode shared`"));
            }
        }

        let delta = s.delta.unwrap_or(0.05);
        if !(delta > 0.0 && delta < 1.0) {
            return Err(out_of_range("delta", format!("must lie in (0, 1), got {delta}")));
        }
        let horizon = s.horizon.ok_or(ConfigError::Missing("horizon"))?;
        if horizon < 1 {
            return Err(out_of_range("horizon", "must be at least 1"));
        }
        let replications = s.replications.unwrap_or(1);
        if replications < 1 {
            return Err(out_of_range("replications", "must be at least 1"));
        }
        let trace_stride = s.trace_stride.unwrap_or(1);
        if trace_stride < 1 {
            return Err(out_of_range("trace-stride", "must be at least 1"));
        }
        let jobs = s.jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
        if jobs < 1 {
            return Err(out_of_range("jobs", "must be at least 1"));
        }
        let checkpoints = match &s.checkpoints {
            Some(text) => {
                let c: Vec<u64> = parse_list("checkpoints", text)?;
                if c.is_empty() {
                    return Err(out_of_range("checkpoints", "empty list"));
                }
                if c[0] < 1 || c.windows(2).any(|w| w[0] >= w[1]) || *c.last().unwrap() > horizon {
                    return Err(out_of_range("checkpoints", format!("must increase strictly within [1, {horizon}]")));
                }
                Some(c)
            }
            None => None,
        };
        let out = s.out.ok_or(ConfigError::Missing("out"))?;

        Ok(ExperimentConfig {
            env,
            modes,
            delta,
            horizon,
            replications,
            base_seed: s.seed.unwrap_or(0),
            out,
            trace_stride,
            checkpoints,
            jobs,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}
