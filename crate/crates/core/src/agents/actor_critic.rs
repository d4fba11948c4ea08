//! Actor-critic over an embedding front-end.
//!
//! The critic learns state values by one-step TD; the actor follows the TD
//! error as its advantage signal. Both heads read the embedding with
//! gradients blocked, mirroring the value-based agent, and the embedding
//! trains from the tracker when the dynamics-aligned variant is selected.

use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::deep::sibling_tracker_path;
use super::{Agent, AgentConfig, AgentSpec, ExperienceRecord, ReplayBuffer, TickLosses};
use crate::dynamics::DynamicsTracker;
use crate::embedding::{EmbedTrainParams, EmbeddingTable};
use crate::grid::{Action, StateId};
use crate::nn::{DenseNet, Gradients, Optimizer};
use crate::rng::RngStreams;

/// On-disk form of an actor-critic agent.
#[derive(Debug, Serialize, Deserialize)]
pub struct ActorCriticCheckpoint {
    pub agent: String,
    pub embed_frozen: bool,
    pub embed_net: DenseNet,
    pub policy_net: DenseNet,
    pub critic_net: DenseNet,
}

pub struct ActorCriticAgent {
    spec: AgentSpec,
    cfg: AgentConfig,
    train_embedding: bool,
    embed: EmbeddingTable,
    policy: DenseNet,
    critic: DenseNet,
    replay: ReplayBuffer,
    policy_opt: Optimizer,
    critic_opt: Optimizer,
    embed_opt: Optimizer,
    beta: f64,
}

impl ActorCriticAgent {
    pub fn new(
        spec: AgentSpec,
        num_states: usize,
        train_embedding: bool,
        cfg: &AgentConfig,
        rngs: &mut RngStreams,
    ) -> ActorCriticAgent {
        let embed =
            EmbeddingTable::init(num_states, cfg.embed_hidden, cfg.embed_dim, &mut rngs.init);
        let policy = DenseNet::mlp(
            cfg.embed_dim,
            &[cfg.value_hidden],
            Action::COUNT,
            &mut rngs.init,
        );
        let critic = DenseNet::mlp(cfg.embed_dim, &[cfg.value_hidden], 1, &mut rngs.init);
        ActorCriticAgent {
            spec,
            cfg: cfg.clone(),
            train_embedding,
            embed,
            policy,
            critic,
            replay: ReplayBuffer::new(cfg.replay_capacity),
            policy_opt: Optimizer::sgd(cfg.lr),
            critic_opt: Optimizer::sgd(cfg.lr),
            embed_opt: Optimizer::sgd(cfg.embed_lr),
            beta: cfg.reward.beta,
        }
    }

    fn policy_probs(&self, s: StateId) -> [f64; 4] {
        let phi = self.embed.embed(s);
        let logits = self.policy.forward(&phi);
        softmax4(&logits)
    }

    /// Writes the agent parameters to `<path>` and the tracker snapshot to
    /// `<path>.tracker.jsonl`.
    pub fn save_checkpoint(&self, tracker: &DynamicsTracker, path: &Path) -> std::io::Result<()> {
        let checkpoint = ActorCriticCheckpoint {
            agent: self.spec.to_string(),
            embed_frozen: self.embed.is_frozen(),
            embed_net: self.embed.net().clone(),
            policy_net: self.policy.clone(),
            critic_net: self.critic.clone(),
        };
        let mut out = BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(&mut out, &checkpoint).map_err(std::io::Error::other)?;
        out.flush()?;
        let mut out = BufWriter::new(std::fs::File::create(sibling_tracker_path(path))?);
        tracker
            .write_snapshot(&mut out)
            .map_err(|e| std::io::Error::other(e.to_string()))?;
        out.flush()
    }

    /// Rebuilds an evaluation-only agent with a frozen embedding.
    pub fn load_checkpoint(path: &Path, cfg: &AgentConfig) -> std::io::Result<ActorCriticAgent> {
        let text = std::fs::read_to_string(path)?;
        let checkpoint: ActorCriticCheckpoint =
            serde_json::from_str(&text).map_err(std::io::Error::other)?;
        let spec = AgentSpec::parse(&checkpoint.agent).map_err(std::io::Error::other)?;
        Ok(ActorCriticAgent {
            spec,
            cfg: cfg.clone(),
            train_embedding: false,
            embed: crate::embedding::EmbeddingTable::from_net(checkpoint.embed_net, true),
            policy: checkpoint.policy_net,
            critic: checkpoint.critic_net,
            replay: ReplayBuffer::new(cfg.replay_capacity),
            policy_opt: Optimizer::sgd(cfg.lr),
            critic_opt: Optimizer::sgd(cfg.lr),
            embed_opt: Optimizer::sgd(cfg.embed_lr),
            beta: cfg.reward.beta,
        })
    }

    /// One batch update of critic and actor. Returns (policy loss, value
    /// loss); the policy loss is `-mean(delta * log pi(a|s))` with the TD
    /// error treated as a constant.
    pub fn actor_critic_update(&mut self, batch: &[ExperienceRecord], use_ir: bool) -> (f64, f64) {
        assert!(!batch.is_empty(), "empty actor-critic batch");
        let inv = 1.0 / batch.len() as f64;
        let gamma = self.cfg.reward.gamma;
        let mut policy_grads = Gradients::zeros_like(&self.policy);
        let mut critic_grads = Gradients::zeros_like(&self.critic);
        let mut policy_loss = 0.0;
        let mut value_loss = 0.0;
        for rec in batch {
            let phi = self.embed.embed(rec.s);
            let r = rec.reward(use_ir, self.beta);
            let critic_trace = self.critic.trace(&phi);
            let v = critic_trace.output()[0];
            let v_next = if rec.done {
                0.0
            } else {
                self.critic.forward(&self.embed.embed(rec.s_next))[0]
            };
            let delta = r + gamma * v_next - v;

            // Critic: squared TD error against a detached target.
            value_loss += delta * delta * inv;
            self.critic
                .backward_into(&critic_trace, &[-2.0 * delta * inv], &mut critic_grads);

            // Actor: advantage-weighted log-likelihood.
            let policy_trace = self.policy.trace(&phi);
            let probs = softmax4(policy_trace.output());
            let log_prob = probs[rec.a.index()].max(1e-300).ln();
            policy_loss -= delta * log_prob * inv;
            let mut upstream = [0.0; 4];
            for (j, u) in upstream.iter_mut().enumerate() {
                let indicator = if j == rec.a.index() { 1.0 } else { 0.0 };
                *u = -delta * inv * (indicator - probs[j]);
            }
            self.policy
                .backward_into(&policy_trace, &upstream, &mut policy_grads);
        }
        self.policy_opt.step(&mut self.policy, &policy_grads);
        self.critic_opt.step(&mut self.critic, &critic_grads);
        (policy_loss, value_loss)
    }
}

impl Agent for ActorCriticAgent {
    fn spec(&self) -> AgentSpec {
        self.spec
    }

    /// Samples the softmax policy; epsilon is ignored.
    fn select_action(&mut self, s: StateId, _epsilon: f64, rng: &mut ChaCha8Rng) -> Action {
        let probs = self.policy_probs(s);
        let draw: f64 = rng.random();
        let mut acc = 0.0;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if draw < acc {
                return Action::from_index(i);
            }
        }
        Action::Right
    }

    fn record(&mut self, rec: &ExperienceRecord) {
        self.replay.push(*rec);
    }

    fn train_tick(&mut self, tracker: &DynamicsTracker, rngs: &mut RngStreams) -> TickLosses {
        if self.replay.len() < self.cfg.batch_size {
            return TickLosses::default();
        }
        let batch = self.replay.sample(self.cfg.batch_size, &mut rngs.replay);
        let (_, value_loss) = self.actor_critic_update(&batch, self.spec.use_ir);
        let mut out = TickLosses {
            td: value_loss,
            trained: true,
            ..TickLosses::default()
        };
        if self.train_embedding && !self.embed.is_frozen() {
            let params = EmbedTrainParams {
                batch_size: self.cfg.embed_batch_size,
                w_margin: self.cfg.w_margin,
                loss_weight: self.cfg.embed_loss_weight,
                form: self.cfg.separation_form,
            };
            if let Ok(report) =
                self.embed
                    .train_step(tracker, &params, &mut self.embed_opt, &mut rngs.embed)
            {
                out.l_s = report.l_s;
                out.l_csc = report.l_csc;
            }
        }
        out
    }

    fn start_task(&mut self, task_index: usize, _tracker: &DynamicsTracker, rngs: &mut RngStreams) {
        if task_index == 0 {
            return;
        }
        if self.train_embedding {
            self.embed.freeze();
        }
        self.policy = DenseNet::mlp(
            self.cfg.embed_dim,
            &[self.cfg.value_hidden],
            Action::COUNT,
            &mut rngs.init,
        );
        self.critic = DenseNet::mlp(
            self.cfg.embed_dim,
            &[self.cfg.value_hidden],
            1,
            &mut rngs.init,
        );
        self.replay.clear();
        self.beta = self.cfg.beta_for_task(task_index);
    }

    fn value_digest(&self) -> u64 {
        // Fold both heads into one digest.
        self.policy
            .params_digest()
            .rotate_left(1)
            .wrapping_add(self.critic.params_digest())
    }

    fn embedding_digest(&self) -> Option<u64> {
        Some(self.embed.params_digest())
    }

    fn save_artifacts(
        &self,
        env: &crate::grid::GridEnv,
        tracker: &DynamicsTracker,
        dir: &Path,
        label: &str,
    ) -> std::io::Result<()> {
        self.save_checkpoint(tracker, &dir.join(format!("checkpoint_{label}.json")))?;
        let mut out = BufWriter::new(std::fs::File::create(
            dir.join(format!("embedding_{label}.csv")),
        )?);
        self.embed.export_csv(env, &mut out)?;
        out.flush()
    }
}

fn softmax4(logits: &[f64]) -> [f64; 4] {
    debug_assert_eq!(logits.len(), 4);
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut exps = [0.0; 4];
    let mut total = 0.0;
    for (e, &z) in exps.iter_mut().zip(logits) {
        *e = (z - max).exp();
        total += *e;
    }
    for e in &mut exps {
        *e /= total;
    }
    exps
}
