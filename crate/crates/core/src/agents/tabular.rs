//! Tabular baselines: Q-learning and the successor representation.

use rand_chacha::ChaCha8Rng;

use super::{epsilon_greedy, Agent, AgentConfig, AgentSpec, ExperienceRecord, TickLosses};
use crate::dynamics::DynamicsTracker;
use crate::grid::{Action, GridEnv, StateId};
use crate::rng::RngStreams;

/// One-step Q update: `Q(s,a) += alpha * (r + gamma * max_a' Q(s',a') * (1 -
/// done) - Q(s,a))`. The reward is compound when `use_ir` is set.
pub fn tabular_q_update(
    q: &mut [[f64; 4]],
    rec: &ExperienceRecord,
    alpha: f64,
    gamma: f64,
    use_ir: bool,
    beta: f64,
) {
    let r = rec.reward(use_ir, beta);
    let bootstrap = if rec.done {
        0.0
    } else {
        let next = &q[rec.s_next.idx()];
        next.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    };
    let target = r + gamma * bootstrap;
    let cell = &mut q[rec.s.idx()][rec.a.index()];
    *cell += alpha * (target - *cell);
}

/// Tabular Q-learning; the table resets at every task boundary.
pub struct QTableAgent {
    spec: AgentSpec,
    q: Vec<[f64; 4]>,
    alpha: f64,
    gamma: f64,
    beta: f64,
    beta_source: f64,
    beta_target: Option<f64>,
}

impl QTableAgent {
    pub fn new(spec: AgentSpec, num_states: usize, cfg: &AgentConfig) -> QTableAgent {
        QTableAgent {
            spec,
            q: vec![[0.0; 4]; num_states],
            alpha: cfg.alpha,
            gamma: cfg.reward.gamma,
            beta: cfg.reward.beta,
            beta_source: cfg.reward.beta,
            beta_target: cfg.beta_target,
        }
    }

    pub fn q_values(&self) -> &[[f64; 4]] {
        &self.q
    }

    pub fn q_values_mut(&mut self) -> &mut [[f64; 4]] {
        &mut self.q
    }
}

impl Agent for QTableAgent {
    fn spec(&self) -> AgentSpec {
        self.spec
    }

    fn select_action(&mut self, s: StateId, epsilon: f64, rng: &mut ChaCha8Rng) -> Action {
        epsilon_greedy(&self.q[s.idx()], epsilon, rng)
    }

    fn record(&mut self, rec: &ExperienceRecord) {
        tabular_q_update(
            &mut self.q,
            rec,
            self.alpha,
            self.gamma,
            self.spec.use_ir,
            self.beta,
        );
    }

    fn train_tick(&mut self, _tracker: &DynamicsTracker, _rngs: &mut RngStreams) -> TickLosses {
        TickLosses::default()
    }

    fn start_task(
        &mut self,
        task_index: usize,
        _tracker: &DynamicsTracker,
        _rngs: &mut RngStreams,
    ) {
        if task_index > 0 {
            for row in &mut self.q {
                *row = [0.0; 4];
            }
            self.beta = self.beta_target.unwrap_or(self.beta_source);
        }
    }

    fn value_digest(&self) -> u64 {
        digest_f64(self.q.iter().flatten().copied())
    }
}

/// State-by-state expected discounted occupancy plus per-state reward
/// weights. Value decomposes as `V(s) = M[s] . w`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularSr {
    pub m: Vec<Vec<f64>>,
    pub w: Vec<f64>,
}

impl TabularSr {
    /// Occupancy starts at the identity: every state occupies itself once.
    pub fn new(num_states: usize) -> TabularSr {
        let mut m = vec![vec![0.0; num_states]; num_states];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        TabularSr {
            m,
            w: vec![0.0; num_states],
        }
    }

    pub fn value(&self, s: StateId) -> f64 {
        self.m[s.idx()]
            .iter()
            .zip(&self.w)
            .map(|(m, w)| m * w)
            .sum()
    }
}

/// TD update of the occupancy row of `s` toward `1_s + gamma * M[s']`, and a
/// running regression of the arrival-state reward weight.
pub fn sr_update(
    sr: &mut TabularSr,
    rec: &ExperienceRecord,
    alpha: f64,
    gamma: f64,
    use_ir: bool,
    beta: f64,
) {
    let n = sr.w.len();
    let (si, ni) = (rec.s.idx(), rec.s_next.idx());
    for j in 0..n {
        let indicator = if j == si { 1.0 } else { 0.0 };
        let bootstrap = if rec.done { 0.0 } else { sr.m[ni][j] };
        let target = indicator + gamma * bootstrap;
        let cell = &mut sr.m[si][j];
        *cell += alpha * (target - *cell);
    }
    sr_refit_weights(sr, rec, alpha, use_ir, beta);
}

/// The reward-weight half of the update alone, used on target tasks where
/// the occupancy learned on the source is reused as-is.
pub fn sr_refit_weights(
    sr: &mut TabularSr,
    rec: &ExperienceRecord,
    alpha: f64,
    use_ir: bool,
    beta: f64,
) {
    let r = rec.reward(use_ir, beta);
    let cell = &mut sr.w[rec.s_next.idx()];
    *cell += alpha * (r - *cell);
}

/// Successor-representation control. Greedy choice scores each action by the
/// value of its successor state through the deterministic move table. On a
/// task switch the source-policy occupancy is kept as the transferable
/// asset and only the reward weights are refit; that reuse, not relearning,
/// is what this baseline measures.
pub struct SrAgent {
    spec: AgentSpec,
    sr: TabularSr,
    /// Deterministic successor of each (state, action).
    next: Vec<[StateId; 4]>,
    /// Set after the source task; later tasks refit only the weights.
    occupancy_frozen: bool,
    alpha: f64,
    gamma: f64,
    beta: f64,
    beta_source: f64,
    beta_target: Option<f64>,
}

impl SrAgent {
    pub fn new(spec: AgentSpec, env: &GridEnv, cfg: &AgentConfig) -> SrAgent {
        let next = env
            .states()
            .map(|s| {
                let mut row = [StateId(0); 4];
                for a in Action::ALL {
                    row[a.index()] = env.next_state(s, a);
                }
                row
            })
            .collect();
        SrAgent {
            spec,
            sr: TabularSr::new(env.num_states()),
            next,
            occupancy_frozen: false,
            alpha: cfg.alpha,
            gamma: cfg.reward.gamma,
            beta: cfg.reward.beta,
            beta_source: cfg.reward.beta,
            beta_target: cfg.beta_target,
        }
    }

    pub fn sr(&self) -> &TabularSr {
        &self.sr
    }
}

impl Agent for SrAgent {
    fn spec(&self) -> AgentSpec {
        self.spec
    }

    fn select_action(&mut self, s: StateId, epsilon: f64, rng: &mut ChaCha8Rng) -> Action {
        let succ = &self.next[s.idx()];
        let values = [
            self.sr.value(succ[0]),
            self.sr.value(succ[1]),
            self.sr.value(succ[2]),
            self.sr.value(succ[3]),
        ];
        epsilon_greedy(&values, epsilon, rng)
    }

    fn record(&mut self, rec: &ExperienceRecord) {
        if self.occupancy_frozen {
            sr_refit_weights(&mut self.sr, rec, self.alpha, self.spec.use_ir, self.beta);
        } else {
            sr_update(
                &mut self.sr,
                rec,
                self.alpha,
                self.gamma,
                self.spec.use_ir,
                self.beta,
            );
        }
    }

    fn train_tick(&mut self, _tracker: &DynamicsTracker, _rngs: &mut RngStreams) -> TickLosses {
        TickLosses::default()
    }

    fn start_task(
        &mut self,
        task_index: usize,
        _tracker: &DynamicsTracker,
        _rngs: &mut RngStreams,
    ) {
        if task_index > 0 {
            // Occupancy transfers; rewards are task-specific.
            self.occupancy_frozen = true;
            self.sr.w.iter_mut().for_each(|w| *w = 0.0);
            self.beta = self.beta_target.unwrap_or(self.beta_source);
        }
    }

    fn value_digest(&self) -> u64 {
        digest_f64(
            self.sr
                .m
                .iter()
                .flatten()
                .copied()
                .chain(self.sr.w.iter().copied()),
        )
    }
}

fn digest_f64(values: impl Iterator<Item = f64>) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for v in values {
        for byte in v.to_bits().to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    h
}
