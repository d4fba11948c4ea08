//! Deep value learner: replay buffer, target network, and an embedding
//! front-end.
//!
//! The same struct backs two registry entries. With `train_embedding` the
//! front-end is trained from the tracker (source task) and frozen on target
//! tasks; without it the front-end stays at its random initialization
//! forever and only the value head learns, which is the plain deep
//! baseline. TD gradients never cross the embedding boundary either way.

use std::io::{BufWriter, Write};
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    epsilon_greedy, Agent, AgentConfig, AgentSpec, ExperienceRecord, ReplayBuffer, TickLosses,
};
use crate::dynamics::DynamicsTracker;
use crate::embedding::{EmbedTrainParams, EmbeddingTable};
use crate::grid::{Action, StateId};
use crate::nn::{DenseNet, Gradients, Optimizer};
use crate::rng::RngStreams;

/// On-disk form of a value-based agent: everything needed to act greedily,
/// plus the tracker snapshot alongside for post-hoc analysis.
#[derive(Debug, Serialize, Deserialize)]
pub struct ValueCheckpoint {
    pub agent: String,
    pub num_states: usize,
    pub embed_frozen: bool,
    pub embed_net: DenseNet,
    pub value_net: DenseNet,
}

pub struct DeepValueAgent {
    spec: AgentSpec,
    cfg: AgentConfig,
    train_embedding: bool,
    embed: EmbeddingTable,
    value: DenseNet,
    target: DenseNet,
    replay: ReplayBuffer,
    value_opt: Optimizer,
    embed_opt: Optimizer,
    steps_seen: u64,
    last_sync: u64,
    beta: f64,
}

impl DeepValueAgent {
    pub fn new(
        spec: AgentSpec,
        num_states: usize,
        train_embedding: bool,
        cfg: &AgentConfig,
        rngs: &mut RngStreams,
    ) -> DeepValueAgent {
        let embed =
            EmbeddingTable::init(num_states, cfg.embed_hidden, cfg.embed_dim, &mut rngs.init);
        let value = DenseNet::mlp(
            cfg.embed_dim,
            &[cfg.value_hidden],
            Action::COUNT,
            &mut rngs.init,
        );
        let target = value.clone();
        DeepValueAgent {
            spec,
            cfg: cfg.clone(),
            train_embedding,
            embed,
            value,
            target,
            replay: ReplayBuffer::new(cfg.replay_capacity),
            value_opt: Optimizer::sgd(cfg.lr),
            embed_opt: Optimizer::sgd(cfg.embed_lr),
            steps_seen: 0,
            last_sync: 0,
            beta: cfg.reward.beta,
        }
    }

    pub fn embedding(&self) -> &EmbeddingTable {
        &self.embed
    }

    fn action_values(&self, s: StateId) -> [f64; 4] {
        let phi = self.embed.embed(s);
        let q = self.value.forward(&phi);
        [q[0], q[1], q[2], q[3]]
    }

    /// One TD step on the value head. Targets bootstrap through the target
    /// network; gradients stop at the embedding. Returns the mean squared
    /// TD error of the batch.
    pub fn td_value_update(&mut self, batch: &[ExperienceRecord], use_ir: bool) -> f64 {
        assert!(!batch.is_empty(), "empty TD batch");
        let inv = 1.0 / batch.len() as f64;
        let mut grads = Gradients::zeros_like(&self.value);
        let mut loss = 0.0;
        for rec in batch {
            let phi = self.embed.embed(rec.s);
            let trace = self.value.trace(&phi);
            let predicted = trace.output()[rec.a.index()];
            let r = rec.reward(use_ir, self.beta);
            let y = if rec.done {
                r
            } else {
                let phi_next = self.embed.embed(rec.s_next);
                let q_next = self.target.forward(&phi_next);
                r + self.cfg.reward.gamma * q_next.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            };
            let err = predicted - y;
            loss += err * err * inv;
            let mut upstream = [0.0; 4];
            upstream[rec.a.index()] = 2.0 * err * inv;
            self.value.backward_into(&trace, &upstream, &mut grads);
        }
        self.value_opt.step(&mut self.value, &grads);
        loss
    }

    fn maybe_sync_target(&mut self) {
        if self.steps_seen - self.last_sync >= self.cfg.target_sync as u64 {
            self.target = self.value.clone();
            self.last_sync = self.steps_seen;
        }
    }

    /// Writes the agent parameters to `<path>` and the tracker snapshot to
    /// `<path>.tracker.jsonl`.
    pub fn save_checkpoint(&self, tracker: &DynamicsTracker, path: &Path) -> std::io::Result<()> {
        let checkpoint = ValueCheckpoint {
            agent: self.spec.to_string(),
            num_states: self.embed.num_states(),
            embed_frozen: self.embed.is_frozen(),
            embed_net: self.embed.net().clone(),
            value_net: self.value.clone(),
        };
        let mut out = BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(&mut out, &checkpoint).map_err(std::io::Error::other)?;
        out.flush()?;
        let tracker_path = sibling_tracker_path(path);
        let mut out = BufWriter::new(std::fs::File::create(tracker_path)?);
        tracker
            .write_snapshot(&mut out)
            .map_err(|e| std::io::Error::other(e.to_string()))?;
        out.flush()
    }

    /// Rebuilds an evaluation-only agent: parameters restored bit-exactly,
    /// embedding frozen, empty replay.
    pub fn load_checkpoint(path: &Path, cfg: &AgentConfig) -> std::io::Result<DeepValueAgent> {
        let text = std::fs::read_to_string(path)?;
        let checkpoint: ValueCheckpoint =
            serde_json::from_str(&text).map_err(std::io::Error::other)?;
        let spec = AgentSpec::parse(&checkpoint.agent).map_err(std::io::Error::other)?;
        let target = checkpoint.value_net.clone();
        Ok(DeepValueAgent {
            spec,
            cfg: cfg.clone(),
            train_embedding: false,
            embed: EmbeddingTable::from_net(checkpoint.embed_net, true),
            value: checkpoint.value_net,
            target,
            replay: ReplayBuffer::new(cfg.replay_capacity),
            value_opt: Optimizer::sgd(cfg.lr),
            embed_opt: Optimizer::sgd(cfg.embed_lr),
            steps_seen: 0,
            last_sync: 0,
            beta: cfg.reward.beta,
        })
    }
}

/// `agent.json` -> `agent.json.tracker.jsonl`
pub fn sibling_tracker_path(path: &Path) -> std::path::PathBuf {
    let mut name = path.as_os_str().to_os_string();
    name.push(".tracker.jsonl");
    std::path::PathBuf::from(name)
}

impl Agent for DeepValueAgent {
    fn spec(&self) -> AgentSpec {
        self.spec
    }

    fn select_action(&mut self, s: StateId, epsilon: f64, rng: &mut ChaCha8Rng) -> Action {
        epsilon_greedy(&self.action_values(s), epsilon, rng)
    }

    fn record(&mut self, rec: &ExperienceRecord) {
        self.replay.push(*rec);
        self.steps_seen += 1;
    }

    fn train_tick(&mut self, tracker: &DynamicsTracker, rngs: &mut RngStreams) -> TickLosses {
        if self.replay.len() < self.cfg.batch_size {
            return TickLosses::default();
        }
        let batch = self.replay.sample(self.cfg.batch_size, &mut rngs.replay);
        let td = self.td_value_update(&batch, self.spec.use_ir);
        self.maybe_sync_target();

        let mut out = TickLosses {
            td,
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
            // The learned embedding is the transferable asset.
            self.embed.freeze();
        }
        // Value learning starts over for the new reward function.
        self.value = DenseNet::mlp(
            self.cfg.embed_dim,
            &[self.cfg.value_hidden],
            Action::COUNT,
            &mut rngs.init,
        );
        self.target = self.value.clone();
        self.replay.clear();
        self.last_sync = self.steps_seen;
        self.beta = self.cfg.beta_for_task(task_index);
    }

    fn value_digest(&self) -> u64 {
        self.value.params_digest()
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

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;

    fn agent(train_embedding: bool, seed: u64) -> (DeepValueAgent, RngStreams) {
        let mut rngs = RngStreams::from_seed(seed);
        let cfg = AgentConfig::default();
        let spec = AgentSpec::parse(if train_embedding { "emb_dqn" } else { "dqn" }).unwrap();
        let a = DeepValueAgent::new(spec, 9, train_embedding, &cfg, &mut rngs);
        (a, rngs)
    }

    fn rec(s: u32, a: Action, r_e: f64, s_next: u32, done: bool) -> ExperienceRecord {
        ExperienceRecord {
            s: StateId(s),
            a,
            r_e,
            rho: 0.5,
            s_next: StateId(s_next),
            done,
        }
    }

    #[test]
    fn zero_value_net_on_terminal_reward_has_unit_squared_error() {
        let (mut a, _) = agent(false, 3);
        // Zero out the value head so every prediction is exactly 0.
        for l in a.value.layers_mut() {
            l.w.iter_mut().for_each(|w| *w = 0.0);
            l.b.iter_mut().for_each(|b| *b = 0.0);
        }
        let loss = a.td_value_update(&[rec(0, Action::Up, 1.0, 1, true)], false);
        assert!((loss - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_gamma_reduces_target_to_reward() {
        let mut rngs = RngStreams::from_seed(5);
        let mut cfg = AgentConfig::default();
        cfg.reward.gamma = 0.0;
        let spec = AgentSpec::parse("dqn").unwrap();
        let mut a = DeepValueAgent::new(spec, 9, false, &cfg, &mut rngs);
        let batch = vec![
            rec(0, Action::Up, 0.25, 1, false),
            rec(1, Action::Down, 0.75, 2, false),
        ];
        // Oracle: with gamma = 0 the target is the reward itself.
        let mut expected = 0.0;
        for r in &batch {
            let q = a.action_values(r.s)[r.a.index()];
            expected += (q - r.r_e).powi(2) / batch.len() as f64;
        }
        let loss = a.td_value_update(&batch, false);
        assert!((loss - expected).abs() < 1e-12);
    }

    #[test]
    fn batch_loss_matches_per_sample_oracle() {
        let (mut a, _) = agent(false, 11);
        let mut r = ChaCha8Rng::seed_from_u64(1);
        let batch: Vec<ExperienceRecord> = (0..6)
            .map(|_| {
                rec(
                    r.random_range(0..9),
                    Action::from_index(r.random_range(0..4)),
                    r.random_range(0.0..1.0),
                    r.random_range(0..9),
                    r.random::<f64>() < 0.3,
                )
            })
            .collect();
        let gamma = a.cfg.reward.gamma;
        let mut expected = 0.0;
        for rc in &batch {
            let q = a.action_values(rc.s)[rc.a.index()];
            let y = if rc.done {
                rc.r_e
            } else {
                let next = a.target.forward(&a.embed.embed(rc.s_next));
                rc.r_e + gamma * next.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            };
            expected += (q - y).powi(2) / batch.len() as f64;
        }
        let loss = a.td_value_update(&batch, false);
        assert!((loss - expected).abs() < 1e-12);
    }

    #[test]
    fn td_update_never_touches_the_embedding() {
        let (mut a, _) = agent(true, 77);
        let digest = a.embedding_digest().unwrap();
        for i in 0..40 {
            a.td_value_update(&[rec(i % 9, Action::Left, 0.1, (i + 1) % 9, false)], true);
        }
        assert_eq!(a.embedding_digest().unwrap(), digest);
    }

    #[test]
    fn freeze_on_task_switch_keeps_embedding_and_reinits_value() {
        let (mut a, mut rngs) = agent(true, 21);
        let tracker = DynamicsTracker::new();
        let emb_before = a.embedding_digest().unwrap();
        let val_before = a.value_digest();
        a.start_task(1, &tracker, &mut rngs);
        assert_eq!(a.embedding_digest().unwrap(), emb_before);
        assert_ne!(a.value_digest(), val_before);
        assert!(a.embedding().is_frozen());
    }

    #[test]
    fn checkpoint_reload_preserves_greedy_behavior() {
        let (mut a, mut rngs) = agent(true, 40);
        let mut tracker = DynamicsTracker::new();
        for i in 0..60u32 {
            let r = rec(
                i % 9,
                Action::from_index((i % 4) as usize),
                0.1,
                (i + 3) % 9,
                i % 9 == 0,
            );
            a.record(&r);
            tracker.observe(r.s, r.s_next);
        }
        for _ in 0..10 {
            a.train_tick(&tracker, &mut rngs);
        }
        let dir = std::env::temp_dir().join("dynemb_checkpoint_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("agent.json");
        a.save_checkpoint(&tracker, &path).unwrap();
        let restored = DeepValueAgent::load_checkpoint(&path, &AgentConfig::default()).unwrap();
        assert_eq!(restored.value_digest(), a.value_digest());
        assert_eq!(restored.embedding_digest(), a.embedding_digest());
        assert!(restored.embedding().is_frozen());
        for s in 0..9u32 {
            assert_eq!(
                restored.action_values(StateId(s)),
                a.action_values(StateId(s))
            );
        }
        let records = DynamicsTracker::read_snapshot(
            &std::fs::read(sibling_tracker_path(&path)).unwrap()[..],
        )
        .unwrap();
        assert!(!records.is_empty());
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn plain_baseline_never_trains_embedding() {
        let (mut a, mut rngs) = agent(false, 2);
        let mut tracker = DynamicsTracker::new();
        for i in 0..8u32 {
            tracker.observe(StateId(i % 9), StateId((i + 1) % 9));
        }
        let digest = a.embedding_digest().unwrap();
        for i in 0..200u32 {
            a.record(&rec(i % 9, Action::Up, 0.0, (i + 1) % 9, false));
        }
        for _ in 0..20 {
            a.train_tick(&tracker, &mut rngs);
        }
        assert_eq!(a.embedding_digest().unwrap(), digest);
    }
}
