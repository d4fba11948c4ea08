//! Experiment configuration: a documented `key = value` text format.
//!
//! Every key has a default, unknown keys are rejected, and the parsed
//! result can be echoed back out as a resolved-config file that parses to
//! the same configuration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::agents::{AgentConfig, AgentSpec};
use crate::embedding::SeparationForm;
use crate::grid::{GridEnv, GridError, GridSpec};

/// Environment variable that re-roots relative output directories.
pub const OUT_ROOT_ENV: &str = "DYNEMB_OUT_ROOT";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: expected `key = value`, got {text:?}")]
    BadLine { line: usize, text: String },
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("key {key:?}: {reason}")]
    BadValue { key: String, reason: String },
    #[error("layout error: {0}")]
    Layout(#[from] GridError),
}

/// Which grid the experiment runs on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EnvChoice {
    EmptyRoom,
    FourRoom,
    MultiRoom,
    /// Text layout loaded from a file.
    Layout(PathBuf),
}

impl EnvChoice {
    pub fn label(&self) -> String {
        match self {
            EnvChoice::EmptyRoom => "er".into(),
            EnvChoice::FourRoom => "fr".into(),
            EnvChoice::MultiRoom => "mr".into(),
            EnvChoice::Layout(p) => p.display().to_string(),
        }
    }

    pub fn build(&self) -> Result<GridEnv, ConfigError> {
        let spec = match self {
            EnvChoice::EmptyRoom => GridSpec::empty_room(),
            EnvChoice::FourRoom => GridSpec::four_room(),
            EnvChoice::MultiRoom => GridSpec::multi_room(),
            EnvChoice::Layout(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
                    path: path.clone(),
                    source,
                })?;
                GridSpec::parse(&text)?.0
            }
        };
        Ok(GridEnv::build(spec)?)
    }
}

/// A fully resolved experiment description.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub env: EnvChoice,
    pub agents: Vec<AgentSpec>,
    pub tasks: usize,
    pub episodes_per_task: u32,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    /// Episode budget override; `None` uses the layout default.
    pub n_max: Option<u32>,
    pub smooth_window: usize,
    pub agent: AgentConfig,
}

impl Default for ExperimentConfig {
    fn default() -> ExperimentConfig {
        ExperimentConfig {
            env: EnvChoice::EmptyRoom,
            agents: vec![AgentSpec::parse("emb_dqn+ir").unwrap()],
            tasks: 4,
            episodes_per_task: 1000,
            seeds: vec![0],
            out_dir: PathBuf::from("runs"),
            n_max: None,
            smooth_window: 20,
            agent: AgentConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parses a config file. A relative layout path is resolved against the
    /// config file's directory, so configs stay portable.
    pub fn parse_file(path: &Path) -> Result<ExperimentConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = ExperimentConfig::parse_str(&text)?;
        if let EnvChoice::Layout(layout) = &cfg.env {
            if layout.is_relative() {
                if let Some(dir) = path.parent() {
                    if !dir.as_os_str().is_empty() && !layout.exists() {
                        cfg.env = EnvChoice::Layout(dir.join(layout));
                    }
                }
            }
        }
        Ok(cfg)
    }

    pub fn parse_str(text: &str) -> Result<ExperimentConfig, ConfigError> {
        let mut cfg = ExperimentConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(ConfigError::BadLine {
                    line: idx + 1,
                    text: raw.to_string(),
                });
            };
            cfg.apply(key.trim(), value.trim())?;
        }
        cfg.validate()?;
        if cfg.out_dir.is_relative() {
            if let Ok(root) = std::env::var(OUT_ROOT_ENV) {
                if !root.is_empty() {
                    cfg.out_dir = PathBuf::from(root).join(&cfg.out_dir);
                }
            }
        }
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = |reason: String| ConfigError::BadValue {
            key: key.to_string(),
            reason,
        };
        match key {
            "env" => {
                self.env = match value {
                    "er" => EnvChoice::EmptyRoom,
                    "fr" => EnvChoice::FourRoom,
                    "mr" => EnvChoice::MultiRoom,
                    other => EnvChoice::Layout(PathBuf::from(other)),
                };
            }
            "agents" => {
                let mut agents = Vec::new();
                for name in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                    agents.push(AgentSpec::parse(name).map_err(&bad)?);
                }
                if agents.is_empty() {
                    return Err(bad("need at least one agent".into()));
                }
                self.agents = agents;
            }
            "tasks" => self.tasks = parse_num(key, value)?,
            "episodes_per_task" => self.episodes_per_task = parse_num(key, value)?,
            "seeds" => {
                let mut seeds = Vec::new();
                for s in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                    seeds.push(s.parse().map_err(|_| bad(format!("bad seed {s:?}")))?);
                }
                if seeds.is_empty() {
                    return Err(bad("need at least one seed".into()));
                }
                self.seeds = seeds;
            }
            "out_dir" => self.out_dir = PathBuf::from(value),
            "n_max" => {
                self.n_max = if value.is_empty() {
                    None
                } else {
                    Some(parse_num(key, value)?)
                }
            }
            "smooth_window" => self.smooth_window = parse_num(key, value)?,
            "beta" => self.agent.reward.beta = parse_num(key, value)?,
            "beta_target" => {
                self.agent.beta_target = if value.is_empty() {
                    None
                } else {
                    Some(parse_num(key, value)?)
                }
            }
            "gamma" => self.agent.reward.gamma = parse_num(key, value)?,
            "epsilon_init" => self.agent.reward.epsilon_init = parse_num(key, value)?,
            "epsilon_decay" => self.agent.reward.epsilon_decay = parse_num(key, value)?,
            "epsilon_floor" => self.agent.reward.epsilon_floor = parse_num(key, value)?,
            "alpha" => self.agent.alpha = parse_num(key, value)?,
            "lr" => self.agent.lr = parse_num(key, value)?,
            "embed_lr" => self.agent.embed_lr = parse_num(key, value)?,
            "embed_dim" => self.agent.embed_dim = parse_num(key, value)?,
            "embed_hidden" => self.agent.embed_hidden = parse_num(key, value)?,
            "value_hidden" => self.agent.value_hidden = parse_num(key, value)?,
            "w_margin" => self.agent.w_margin = parse_num(key, value)?,
            "embed_loss_weight" => self.agent.embed_loss_weight = parse_num(key, value)?,
            "separation_form" => {
                self.agent.separation_form = match value {
                    "push_apart" => SeparationForm::PushApart,
                    "pull_together" => SeparationForm::PullTogether,
                    other => return Err(bad(format!("unknown separation form {other:?}"))),
                }
            }
            "batch_size" => self.agent.batch_size = parse_num(key, value)?,
            "embed_batch_size" => self.agent.embed_batch_size = parse_num(key, value)?,
            "replay_capacity" => self.agent.replay_capacity = parse_num(key, value)?,
            "t_freq" => self.agent.t_freq = parse_num(key, value)?,
            "target_sync" => self.agent.target_sync = parse_num(key, value)?,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let check = |ok: bool, key: &str, reason: &str| {
            if ok {
                Ok(())
            } else {
                Err(ConfigError::BadValue {
                    key: key.into(),
                    reason: reason.into(),
                })
            }
        };
        check(self.tasks >= 1, "tasks", "must be at least 1")?;
        check(
            self.episodes_per_task >= 1,
            "episodes_per_task",
            "must be at least 1",
        )?;
        check(
            self.smooth_window >= 1,
            "smooth_window",
            "must be at least 1",
        )?;
        check(self.agent.reward.beta >= 0.0, "beta", "must be nonnegative")?;
        let g = self.agent.reward.gamma;
        check(g > 0.0 && g < 1.0, "gamma", "must lie in (0, 1)")?;
        check(self.agent.embed_dim >= 2, "embed_dim", "must be at least 2")?;
        check(self.agent.w_margin > 0.0, "w_margin", "must be positive")?;
        check(self.agent.t_freq >= 1, "t_freq", "must be at least 1")?;
        check(
            self.agent.batch_size >= 1,
            "batch_size",
            "must be at least 1",
        )?;
        Ok(())
    }

    /// Renders the full configuration, defaults included, in a form that
    /// parses back to `self`.
    pub fn resolved_text(&self) -> String {
        let mut keys: BTreeMap<&str, String> = BTreeMap::new();
        keys.insert("env", self.env.label());
        keys.insert(
            "agents",
            self.agents
                .iter()
                .map(|a| a.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        keys.insert("tasks", self.tasks.to_string());
        keys.insert("episodes_per_task", self.episodes_per_task.to_string());
        keys.insert(
            "seeds",
            self.seeds
                .iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        keys.insert("out_dir", self.out_dir.display().to_string());
        keys.insert(
            "n_max",
            self.n_max.map(|n| n.to_string()).unwrap_or_default(),
        );
        keys.insert("smooth_window", self.smooth_window.to_string());
        keys.insert("beta", self.agent.reward.beta.to_string());
        keys.insert(
            "beta_target",
            self.agent
                .beta_target
                .map(|b| b.to_string())
                .unwrap_or_default(),
        );
        keys.insert("gamma", self.agent.reward.gamma.to_string());
        keys.insert("epsilon_init", self.agent.reward.epsilon_init.to_string());
        keys.insert("epsilon_decay", self.agent.reward.epsilon_decay.to_string());
        keys.insert("epsilon_floor", self.agent.reward.epsilon_floor.to_string());
        keys.insert("alpha", self.agent.alpha.to_string());
        keys.insert("lr", self.agent.lr.to_string());
        keys.insert("embed_lr", self.agent.embed_lr.to_string());
        keys.insert("embed_dim", self.agent.embed_dim.to_string());
        keys.insert("embed_hidden", self.agent.embed_hidden.to_string());
        keys.insert("value_hidden", self.agent.value_hidden.to_string());
        keys.insert("w_margin", self.agent.w_margin.to_string());
        keys.insert(
            "embed_loss_weight",
            self.agent.embed_loss_weight.to_string(),
        );
        keys.insert(
            "separation_form",
            match self.agent.separation_form {
                SeparationForm::PushApart => "push_apart".into(),
                SeparationForm::PullTogether => "pull_together".into(),
            },
        );
        keys.insert("batch_size", self.agent.batch_size.to_string());
        keys.insert("embed_batch_size", self.agent.embed_batch_size.to_string());
        keys.insert("replay_capacity", self.agent.replay_capacity.to_string());
        keys.insert("t_freq", self.agent.t_freq.to_string());
        keys.insert("target_sync", self.agent.target_sync.to_string());
        let mut out = String::new();
        for (k, v) in keys {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// Per-task episode budget on a given environment.
    pub fn max_steps_on(&self, env: &GridEnv) -> u32 {
        self.n_max.unwrap_or(env.default_max_steps)
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::BadValue {
        key: key.to_string(),
        reason: format!("cannot parse {value:?}"),
    })
}
