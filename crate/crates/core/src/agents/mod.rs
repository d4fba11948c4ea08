//! Learning agents and the episode driver.
//!
//! Every agent is composable with the intrinsic-reward wrapper: a `+ir`
//! suffix on its name turns the bonus on. With `beta = 0` the wrapper is an
//! exact no-op, by construction: the bonus enters only through the scalar
//! reward used in updates and never consumes random draws.

mod actor_critic;
mod deep;
mod pvf;
mod runner;
mod tabular;

pub use actor_critic::{ActorCriticAgent, ActorCriticCheckpoint};
pub use deep::{sibling_tracker_path, DeepValueAgent, ValueCheckpoint};
pub use pvf::{pvf_basis, PvfAgent, PvfBasis, PvfError};
pub use runner::{run_episode, EpisodeMetrics};
pub use tabular::{sr_update, tabular_q_update, QTableAgent, SrAgent, TabularSr};

use std::collections::VecDeque;
use std::fmt;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::dynamics::DynamicsTracker;
use crate::embedding::SeparationForm;
use crate::grid::{Action, GridEnv, StateId};
use crate::intrinsic::RewardConfig;
use crate::rng::RngStreams;

/// One transition as stored for learning: extrinsic reward and the intrinsic
/// bonus of the arrival state are both kept, so replayed updates reuse the
/// bonus computed at transition time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperienceRecord {
    pub s: StateId,
    pub a: Action,
    pub r_e: f64,
    pub rho: f64,
    pub s_next: StateId,
    pub done: bool,
}

impl ExperienceRecord {
    /// The reward an agent trains on: compound when the bonus is enabled.
    pub fn reward(&self, use_ir: bool, beta: f64) -> f64 {
        if use_ir {
            self.r_e + beta * self.rho
        } else {
            self.r_e
        }
    }
}

/// Bounded FIFO of experience with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    buf: VecDeque<ExperienceRecord>,
    capacity: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> ReplayBuffer {
        assert!(capacity > 0);
        ReplayBuffer {
            buf: VecDeque::with_capacity(capacity.min(4096)),
            capacity,
        }
    }

    pub fn push(&mut self, rec: ExperienceRecord) {
        if self.buf.len() == self.capacity {
            self.buf.pop_front();
        }
        self.buf.push_back(rec);
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn clear(&mut self) {
        self.buf.clear();
    }

    /// Uniform sample with replacement.
    pub fn sample<R: Rng>(&self, k: usize, rng: &mut R) -> Vec<ExperienceRecord> {
        assert!(!self.buf.is_empty(), "sampling from empty replay buffer");
        (0..k)
            .map(|_| self.buf[rng.random_range(0..self.buf.len())])
            .collect()
    }
}

/// The agent families in the registry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AgentKind {
    /// Tabular Q-learning, reset per task.
    Q,
    /// Tabular successor representation; occupancy persists across tasks,
    /// reward weights are refit.
    Sr,
    /// Deep value learner over a fixed random state projection, value net
    /// from scratch per task.
    Dqn,
    /// Deep value learner over the dynamics-aligned embedding; the embedding
    /// trains on the source task and is frozen on targets.
    EmbDqn,
    /// Actor-critic over a fixed random state projection.
    Ac,
    /// Actor-critic over the dynamics-aligned embedding.
    EmbAc,
    /// Spectral features from a uniform-random source phase; value learner
    /// on target tasks.
    Pvf,
}

/// An agent name as it appears in configs: a kind plus the optional
/// intrinsic-reward wrapper.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AgentSpec {
    pub kind: AgentKind,
    pub use_ir: bool,
}

impl AgentSpec {
    pub fn parse(name: &str) -> Result<AgentSpec, String> {
        let (base, use_ir) = match name.strip_suffix("+ir") {
            Some(base) => (base, true),
            None => (name, false),
        };
        let kind = match base {
            "q" => AgentKind::Q,
            "sr" => AgentKind::Sr,
            "dqn" => AgentKind::Dqn,
            "emb_dqn" => AgentKind::EmbDqn,
            "ac" => AgentKind::Ac,
            "emb_ac" => AgentKind::EmbAc,
            "pvf" => AgentKind::Pvf,
            other => return Err(format!("unknown agent {other:?}")),
        };
        Ok(AgentSpec { kind, use_ir })
    }

    pub fn base(self) -> AgentSpec {
        AgentSpec {
            use_ir: false,
            ..self
        }
    }
}

impl fmt::Display for AgentSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let base = match self.kind {
            AgentKind::Q => "q",
            AgentKind::Sr => "sr",
            AgentKind::Dqn => "dqn",
            AgentKind::EmbDqn => "emb_dqn",
            AgentKind::Ac => "ac",
            AgentKind::EmbAc => "emb_ac",
            AgentKind::Pvf => "pvf",
        };
        write!(f, "{base}{}", if self.use_ir { "+ir" } else { "" })
    }
}

/// Hyperparameters shared by all agent families. Unused fields are ignored
/// by families that do not need them.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub reward: RewardConfig,
    /// Tabular learning rate.
    pub alpha: f64,
    /// Value / policy network learning rate.
    pub lr: f64,
    /// Embedding network learning rate.
    pub embed_lr: f64,
    pub embed_dim: usize,
    pub embed_hidden: usize,
    pub value_hidden: usize,
    pub w_margin: f64,
    pub embed_loss_weight: f64,
    pub separation_form: SeparationForm,
    pub batch_size: usize,
    pub embed_batch_size: usize,
    pub replay_capacity: usize,
    /// Train every this many environment steps.
    pub t_freq: u32,
    /// Sync the target network every this many environment steps.
    pub target_sync: u32,
    /// Intrinsic-reward scale on target tasks; `None` keeps the source beta.
    pub beta_target: Option<f64>,
}

impl Default for AgentConfig {
    fn default() -> AgentConfig {
        AgentConfig {
            reward: RewardConfig::default(),
            alpha: 0.1,
            lr: 1e-3,
            embed_lr: 0.1,
            embed_dim: 10,
            embed_hidden: 64,
            value_hidden: 64,
            w_margin: 0.5,
            embed_loss_weight: 1.0,
            separation_form: SeparationForm::PushApart,
            batch_size: 32,
            embed_batch_size: 32,
            replay_capacity: 10_000,
            t_freq: 4,
            target_sync: 200,
            beta_target: None,
        }
    }
}

impl AgentConfig {
    /// Effective intrinsic scale for a task phase.
    pub fn beta_for_task(&self, task_index: usize) -> f64 {
        if task_index == 0 {
            self.reward.beta
        } else {
            self.beta_target.unwrap_or(self.reward.beta)
        }
    }
}

/// Loss summary from one training tick.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TickLosses {
    pub td: f64,
    pub l_s: f64,
    pub l_csc: f64,
    /// False when the tick did nothing (e.g. replay not yet warm).
    pub trained: bool,
}

/// Common control surface of every agent family.
pub trait Agent {
    fn spec(&self) -> AgentSpec;

    /// Picks an action. Value-based agents act epsilon-greedily with ties
    /// broken toward the lowest action index; actor-critic agents sample
    /// their softmax policy and ignore epsilon.
    fn select_action(&mut self, s: StateId, epsilon: f64, rng: &mut ChaCha8Rng) -> Action;

    /// Ingests one transition (tabular agents update online here).
    fn record(&mut self, rec: &ExperienceRecord);

    /// Runs the training blocks; called every `t_freq` environment steps.
    fn train_tick(&mut self, tracker: &DynamicsTracker, rngs: &mut RngStreams) -> TickLosses;

    /// Task boundary. Index 0 is the source task; later indexes freeze or
    /// reinitialize parts according to the family's transfer rule.
    fn start_task(&mut self, task_index: usize, tracker: &DynamicsTracker, rngs: &mut RngStreams);

    /// Digest over value/policy parameters, for identity tests.
    fn value_digest(&self) -> u64;

    /// Digest over the embedding parameters, if the family has them.
    fn embedding_digest(&self) -> Option<u64> {
        None
    }

    /// Writes any post-run artifacts (parameter checkpoint, embedding
    /// export) under `dir` with the given label. Default: nothing.
    fn save_artifacts(
        &self,
        _env: &GridEnv,
        _tracker: &DynamicsTracker,
        _dir: &std::path::Path,
        _label: &str,
    ) -> std::io::Result<()> {
        Ok(())
    }
}

/// Builds an agent by spec. All families draw their initialization from the
/// same stream in the same order, which is what makes ablation pairs
/// bit-comparable.
pub fn build_agent(
    spec: AgentSpec,
    env: &GridEnv,
    cfg: &AgentConfig,
    rngs: &mut RngStreams,
) -> Box<dyn Agent> {
    match spec.kind {
        AgentKind::Q => Box::new(QTableAgent::new(spec, env.num_states(), cfg)),
        AgentKind::Sr => Box::new(SrAgent::new(spec, env, cfg)),
        AgentKind::Dqn => Box::new(DeepValueAgent::new(
            spec,
            env.num_states(),
            false,
            cfg,
            rngs,
        )),
        AgentKind::EmbDqn => Box::new(DeepValueAgent::new(spec, env.num_states(), true, cfg, rngs)),
        AgentKind::Ac => Box::new(ActorCriticAgent::new(
            spec,
            env.num_states(),
            false,
            cfg,
            rngs,
        )),
        AgentKind::EmbAc => Box::new(ActorCriticAgent::new(
            spec,
            env.num_states(),
            true,
            cfg,
            rngs,
        )),
        AgentKind::Pvf => Box::new(PvfAgent::new(spec, env.num_states(), cfg, rngs)),
    }
}

/// Epsilon-greedy over a slice of action values; ties go to the lowest
/// action index.
pub(crate) fn epsilon_greedy<R: Rng>(values: &[f64; 4], epsilon: f64, rng: &mut R) -> Action {
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        return Action::from_index(rng.random_range(0..Action::COUNT));
    }
    greedy(values)
}

pub(crate) fn greedy(values: &[f64; 4]) -> Action {
    let mut best = 0;
    for i in 1..values.len() {
        if values[i] > values[best] {
            best = i;
        }
    }
    Action::from_index(best)
}
