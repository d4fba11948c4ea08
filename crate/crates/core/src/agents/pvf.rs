//! Spectral state features from the graph Laplacian.
//!
//! The baseline spends its source-task budget on a uniform random policy to
//! estimate the state graph, then fixes the smoothest Laplacian
//! eigenvectors as features and trains a value head over them on target
//! tasks. The contrast in source-task reward against agents that learn
//! while estimating is the point of carrying this baseline.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::{
    epsilon_greedy, Agent, AgentConfig, AgentSpec, ExperienceRecord, ReplayBuffer, TickLosses,
};
use crate::dynamics::{DynamicsTracker, NeighborMap};
use crate::grid::{Action, StateId};
use crate::nn::{DenseNet, Gradients, Optimizer};
use crate::rng::RngStreams;

#[derive(Debug, Error)]
pub enum PvfError {
    #[error("requested {requested} eigenvectors but the graph has {available} states")]
    TooFewStates { requested: usize, available: usize },
    #[error("adjacency is empty")]
    EmptyGraph,
}

/// The `d` smoothest eigenpairs of the combinatorial Laplacian `L = D - A`
/// over the observed states. Vectors are orthonormal, eigenvalues ascend.
#[derive(Debug, Clone)]
pub struct PvfBasis {
    /// Observed states in ascending id order; row index into the vectors.
    pub states: Vec<StateId>,
    pub eigenvalues: Vec<f64>,
    /// One vector per eigenvalue, each of length `states.len()`.
    pub vectors: Vec<Vec<f64>>,
}

impl PvfBasis {
    /// Feature vector of a state: its coordinate in each basis vector.
    /// States never observed get the zero vector.
    pub fn feature(&self, s: StateId) -> Vec<f64> {
        match self.states.binary_search(&s) {
            Ok(row) => self.vectors.iter().map(|v| v[row]).collect(),
            Err(_) => vec![0.0; self.vectors.len()],
        }
    }

    /// Worst infinity-norm residual `||L v - lambda v||` over the basis,
    /// recomputed against the given adjacency.
    #[allow(clippy::needless_range_loop)]
    pub fn max_residual(&self, adjacency: &NeighborMap) -> f64 {
        let (states, lap) = laplacian(adjacency);
        assert_eq!(states, self.states);
        let n = states.len();
        let mut worst: f64 = 0.0;
        for (v, &lambda) in self.vectors.iter().zip(&self.eigenvalues) {
            for i in 0..n {
                let mut lv = 0.0;
                for j in 0..n {
                    lv += lap[i][j] * v[j];
                }
                worst = worst.max((lv - lambda * v[i]).abs());
            }
        }
        worst
    }
}

/// Symmetrized combinatorial Laplacian over the states of an adjacency map.
/// Self-loops cancel out of `D - A` and are ignored.
fn laplacian(adjacency: &NeighborMap) -> (Vec<StateId>, Vec<Vec<f64>>) {
    let mut all = std::collections::BTreeSet::new();
    for (s, neigh) in adjacency.iter() {
        all.insert(s);
        all.extend(neigh.iter().copied());
    }
    let states: Vec<StateId> = all.into_iter().collect();
    let n = states.len();
    let index = |s: StateId| states.binary_search(&s).expect("state in list");
    let mut lap = vec![vec![0.0; n]; n];
    for (s, neigh) in adjacency.iter() {
        let i = index(s);
        for &t in neigh {
            let j = index(t);
            if i == j {
                continue;
            }
            if lap[i][j] == 0.0 {
                lap[i][j] = -1.0;
                lap[j][i] = -1.0;
                lap[i][i] += 1.0;
                lap[j][j] += 1.0;
            }
        }
    }
    (states, lap)
}

/// The `d` smoothest Laplacian eigenpairs via cyclic Jacobi rotations.
pub fn pvf_basis(adjacency: &NeighborMap, d: usize) -> Result<PvfBasis, PvfError> {
    if adjacency.is_empty() {
        return Err(PvfError::EmptyGraph);
    }
    let (states, lap) = laplacian(adjacency);
    let n = states.len();
    if d > n {
        return Err(PvfError::TooFewStates {
            requested: d,
            available: n,
        });
    }
    let (eigenvalues, vectors) = jacobi_eigen(lap);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eigenvalues[a].partial_cmp(&eigenvalues[b]).unwrap());
    let eigenvalues = order.iter().take(d).map(|&i| eigenvalues[i]).collect();
    let vectors = order
        .iter()
        .take(d)
        .map(|&i| vectors.iter().map(|row| row[i]).collect())
        .collect();
    Ok(PvfBasis {
        states,
        eigenvalues,
        vectors,
    })
}

/// Full symmetric eigendecomposition by cyclic Jacobi sweeps. Returns
/// eigenvalues and the matrix whose columns are the eigenvectors.
#[allow(clippy::needless_range_loop)]
fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p][q] * a[p][q];
            }
        }
        if off < 1e-22 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[p][q].abs() < 1e-15 {
                    continue;
                }
                // Rotation angle that annihilates a[p][q].
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    1.0 / (theta - (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k][p];
                    let vkq = v[k][q];
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let eigenvalues = (0..n).map(|i| a[i][i]).collect();
    (eigenvalues, v)
}

enum Phase {
    /// Source task: behave uniformly at random and let the tracker watch.
    RandomWalk,
    /// Target tasks: value learning over the fixed spectral features.
    Value { basis: PvfBasis },
}

pub struct PvfAgent {
    spec: AgentSpec,
    cfg: AgentConfig,
    phase: Phase,
    value: DenseNet,
    target: DenseNet,
    replay: ReplayBuffer,
    value_opt: Optimizer,
    steps_seen: u64,
    last_sync: u64,
    beta: f64,
}

impl PvfAgent {
    pub fn new(
        spec: AgentSpec,
        _num_states: usize,
        cfg: &AgentConfig,
        rngs: &mut RngStreams,
    ) -> PvfAgent {
        let value = DenseNet::mlp(
            cfg.embed_dim,
            &[cfg.value_hidden],
            Action::COUNT,
            &mut rngs.init,
        );
        let target = value.clone();
        PvfAgent {
            spec,
            cfg: cfg.clone(),
            phase: Phase::RandomWalk,
            value,
            target,
            replay: ReplayBuffer::new(cfg.replay_capacity),
            value_opt: Optimizer::sgd(cfg.lr),
            steps_seen: 0,
            last_sync: 0,
            beta: cfg.reward.beta,
        }
    }

    pub fn basis(&self) -> Option<&PvfBasis> {
        match &self.phase {
            Phase::Value { basis } => Some(basis),
            Phase::RandomWalk => None,
        }
    }

    fn action_values(&self, s: StateId, basis: &PvfBasis) -> [f64; 4] {
        let q = self.value.forward(&basis.feature(s));
        [q[0], q[1], q[2], q[3]]
    }
}

impl Agent for PvfAgent {
    fn spec(&self) -> AgentSpec {
        self.spec
    }

    fn select_action(&mut self, s: StateId, epsilon: f64, rng: &mut ChaCha8Rng) -> Action {
        match &self.phase {
            Phase::RandomWalk => Action::from_index(rng.random_range(0..Action::COUNT)),
            Phase::Value { basis } => {
                let values = self.action_values(s, basis);
                epsilon_greedy(&values, epsilon, rng)
            }
        }
    }

    fn record(&mut self, rec: &ExperienceRecord) {
        if matches!(self.phase, Phase::Value { .. }) {
            self.replay.push(*rec);
            self.steps_seen += 1;
        }
    }

    fn train_tick(&mut self, _tracker: &DynamicsTracker, rngs: &mut RngStreams) -> TickLosses {
        let Phase::Value { basis } = &self.phase else {
            return TickLosses::default();
        };
        if self.replay.len() < self.cfg.batch_size {
            return TickLosses::default();
        }
        let batch = self.replay.sample(self.cfg.batch_size, &mut rngs.replay);
        let inv = 1.0 / batch.len() as f64;
        let mut grads = Gradients::zeros_like(&self.value);
        let mut loss = 0.0;
        for rec in &batch {
            let trace = self.value.trace(&basis.feature(rec.s));
            let predicted = trace.output()[rec.a.index()];
            let r = rec.reward(self.spec.use_ir, self.beta);
            let y = if rec.done {
                r
            } else {
                let q_next = self.target.forward(&basis.feature(rec.s_next));
                r + self.cfg.reward.gamma * q_next.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            };
            let err = predicted - y;
            loss += err * err * inv;
            let mut upstream = [0.0; 4];
            upstream[rec.a.index()] = 2.0 * err * inv;
            self.value.backward_into(&trace, &upstream, &mut grads);
        }
        self.value_opt.step(&mut self.value, &grads);
        if self.steps_seen - self.last_sync >= self.cfg.target_sync as u64 {
            self.target = self.value.clone();
            self.last_sync = self.steps_seen;
        }
        TickLosses {
            td: loss,
            trained: true,
            ..TickLosses::default()
        }
    }

    fn start_task(&mut self, task_index: usize, tracker: &DynamicsTracker, rngs: &mut RngStreams) {
        if task_index == 0 {
            return;
        }
        if matches!(self.phase, Phase::RandomWalk) {
            // Freeze the estimate gathered during the random source phase.
            let d = self.cfg.embed_dim.min(tracker.buffer_len().max(1));
            match pvf_basis(tracker.neighbor_map(), d) {
                Ok(mut basis) => {
                    // Pad up to the configured width so the value head fits.
                    while basis.vectors.len() < self.cfg.embed_dim {
                        basis.vectors.push(vec![0.0; basis.states.len()]);
                        basis.eigenvalues.push(0.0);
                    }
                    self.phase = Phase::Value { basis };
                }
                Err(_) => {
                    // Nothing observed: fall back to an empty basis.
                    self.phase = Phase::Value {
                        basis: PvfBasis {
                            states: Vec::new(),
                            eigenvalues: vec![0.0; self.cfg.embed_dim],
                            vectors: vec![Vec::new(); self.cfg.embed_dim],
                        },
                    };
                }
            }
        }
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
}
