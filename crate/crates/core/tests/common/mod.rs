//! Shared helpers for the integration and acceptance suites.

use dynemb::agents::{
    build_agent, run_episode, Agent, AgentConfig, AgentSpec, ExperienceRecord, TickLosses,
};
use dynemb::dynamics::DynamicsTracker;
use dynemb::grid::{Action, GridEnv, GridSpec, StateId, Task};
use dynemb::rng::{task_rng, RngStreams};
use rand_chacha::ChaCha8Rng;

/// Wraps an agent and logs every selected action.
pub struct Recorder {
    pub inner: Box<dyn Agent>,
    pub actions: Vec<Action>,
}

impl Agent for Recorder {
    fn spec(&self) -> AgentSpec {
        self.inner.spec()
    }
    fn select_action(&mut self, s: StateId, epsilon: f64, rng: &mut ChaCha8Rng) -> Action {
        let a = self.inner.select_action(s, epsilon, rng);
        self.actions.push(a);
        a
    }
    fn record(&mut self, rec: &ExperienceRecord) {
        self.inner.record(rec);
    }
    fn train_tick(&mut self, tracker: &DynamicsTracker, rngs: &mut RngStreams) -> TickLosses {
        self.inner.train_tick(tracker, rngs)
    }
    fn start_task(&mut self, task_index: usize, tracker: &DynamicsTracker, rngs: &mut RngStreams) {
        self.inner.start_task(task_index, tracker, rngs);
    }
    fn value_digest(&self) -> u64 {
        self.inner.value_digest()
    }
    fn embedding_digest(&self) -> Option<u64> {
        self.inner.embedding_digest()
    }
}

pub struct SuiteTrace {
    pub actions: Vec<Action>,
    pub returns: Vec<f64>,
    pub value_digest: u64,
    /// Per-episode snapshots; not every suite inspects them.
    #[allow(dead_code)]
    pub embedding_digests: Vec<u64>,
}

/// Runs a small multi-task suite on the standard empty room and records
/// everything comparable between agents.
pub fn run_suite(
    name: &str,
    cfg: &AgentConfig,
    seed: u64,
    tasks: usize,
    episodes: u32,
) -> SuiteTrace {
    let env = GridEnv::build(GridSpec::empty_room()).unwrap();
    let mut rngs = RngStreams::from_seed(seed);
    let spec = AgentSpec::parse(name).unwrap();
    let mut agent = Recorder {
        inner: build_agent(spec, &env, cfg, &mut rngs),
        actions: Vec::new(),
    };
    let mut task_stream = task_rng(seed);
    let mut tracker = DynamicsTracker::new();
    let mut step = 0u64;
    let mut returns = Vec::new();
    let mut embedding_digests = Vec::new();
    for task_index in 0..tasks {
        let mut task: Task = env.sample_task(&mut task_stream).unwrap();
        task.max_steps = 120;
        agent.start_task(task_index, &tracker, &mut rngs);
        for episode in 0..episodes {
            let eps = cfg.reward.epsilon_at(episode);
            let m = run_episode(
                &mut agent,
                &env,
                &task,
                &mut tracker,
                eps,
                cfg.t_freq,
                &mut step,
                &mut rngs,
                None,
            );
            returns.push(m.extrinsic_return);
            if let Some(d) = agent.embedding_digest() {
                embedding_digests.push(d);
            }
        }
    }
    SuiteTrace {
        value_digest: agent.value_digest(),
        actions: agent.actions,
        returns,
        embedding_digests,
    }
}
