//! The consecutive-task transfer protocol.
//!
//! Task 0 is the source: agents that learn an embedding do so here. Every
//! later task reuses the frozen transferable parts and relearns the rest.
//! Each (agent, seed) pair is an isolated replica writing its own metrics
//! file; the task sequence depends only on the seed, so every agent faces
//! the same goals.

use std::path::PathBuf;
use std::time::Instant;

use super::config::ExperimentConfig;
use super::metrics::{MetricsRecord, MetricsWriter, SCHEMA_VERSION};
use super::HarnessError;
use crate::agents::{build_agent, run_episode, AgentSpec};
use crate::dynamics::DynamicsTracker;
use crate::grid::{GridEnv, Task};
use crate::rng::{task_rng, RngStreams};

/// Samples the task sequence one seed faces, identically for every agent.
pub fn tasks_for_seed(
    env: &GridEnv,
    cfg: &ExperimentConfig,
    seed: u64,
) -> Result<Vec<Task>, HarnessError> {
    let mut rng = task_rng(seed);
    let max_steps = cfg.max_steps_on(env);
    (0..cfg.tasks)
        .map(|_| {
            let mut task = env.sample_task(&mut rng)?;
            task.max_steps = max_steps;
            Ok(task)
        })
        .collect()
}

/// Runs the full suite; returns the metrics files written, one per
/// (agent, seed).
pub fn run_transfer_suite(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, HarnessError> {
    std::fs::create_dir_all(&cfg.out_dir).map_err(|source| HarnessError::Io {
        path: cfg.out_dir.clone(),
        source,
    })?;
    std::fs::write(cfg.out_dir.join("resolved.cfg"), cfg.resolved_text()).map_err(|source| {
        HarnessError::Io {
            path: cfg.out_dir.join("resolved.cfg"),
            source,
        }
    })?;
    // Replicas are fully isolated (own env, own rng streams, own file), so
    // they run on their own threads; results keep (agent, seed) order.
    let replicas: Vec<(AgentSpec, u64)> = cfg
        .agents
        .iter()
        .flat_map(|spec| cfg.seeds.iter().map(move |&seed| (*spec, seed)))
        .collect();
    let mut written = Vec::with_capacity(replicas.len());
    std::thread::scope(|scope| {
        let handles: Vec<_> = replicas
            .iter()
            .map(|&(spec, seed)| scope.spawn(move || run_replica(cfg, spec, seed)))
            .collect();
        for handle in handles {
            written.push(handle.join().expect("replica thread panicked"));
        }
    });
    written.into_iter().collect()
}

/// One isolated (agent, seed) replica over the whole task sequence.
pub fn run_replica(
    cfg: &ExperimentConfig,
    spec: AgentSpec,
    seed: u64,
) -> Result<PathBuf, HarnessError> {
    let env = cfg.env.build()?;
    let tasks = tasks_for_seed(&env, cfg, seed)?;
    let mut rngs = RngStreams::from_seed(seed);
    let mut agent = build_agent(spec, &env, &cfg.agent, &mut rngs);
    let mut tracker = DynamicsTracker::new();
    let mut global_step = 0u64;

    let path = cfg.out_dir.join(format!("metrics_{spec}_{seed}.csv"));
    let mut writer = MetricsWriter::create(&path)?;
    let run_id = format!("{spec}-s{seed}");

    for (task_index, task) in tasks.iter().enumerate() {
        agent.start_task(task_index, &tracker, &mut rngs);
        for episode in 0..cfg.episodes_per_task {
            let clock = Instant::now();
            let epsilon = cfg.agent.reward.epsilon_at(episode);
            let metrics = run_episode(
                agent.as_mut(),
                &env,
                task,
                &mut tracker,
                epsilon,
                cfg.agent.t_freq,
                &mut global_step,
                &mut rngs,
                None,
            );
            writer.append(&MetricsRecord {
                schema: SCHEMA_VERSION,
                run_id: run_id.clone(),
                agent: spec.to_string(),
                seed,
                task: task_index as u32,
                episode,
                extrinsic_return: metrics.extrinsic_return,
                steps: metrics.steps,
                unique_states: metrics.unique_states as u64,
                l_s: metrics.l_s,
                l_csc: metrics.l_csc,
                wall_ms: clock.elapsed().as_secs_f64() * 1e3,
            })?;
        }
    }
    agent
        .save_artifacts(&env, &tracker, &cfg.out_dir, &run_id)
        .map_err(|source| HarnessError::Io {
            path: cfg.out_dir.clone(),
            source,
        })?;
    Ok(path)
}
