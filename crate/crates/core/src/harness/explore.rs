//! The exploration study: base agents against their intrinsic-reward
//! counterparts on a single task, with visitation and bonus-field heatmaps.

use std::path::PathBuf;
use std::time::Instant;

use super::config::ExperimentConfig;
use super::heatmap::emit_heatmap;
use super::metrics::{MetricsRecord, MetricsWriter, SCHEMA_VERSION};
use super::snapshot::write_run_snapshot;
use super::HarnessError;
use crate::agents::{build_agent, run_episode, AgentSpec};
use crate::dynamics::DynamicsTracker;
use crate::intrinsic::intrinsic_reward;
use crate::rng::{task_rng, RngStreams};

/// Artifacts of one (agent, seed) exploration replica.
#[derive(Debug, Clone)]
pub struct ExploreArtifacts {
    pub agent: AgentSpec,
    pub seed: u64,
    pub metrics: PathBuf,
    pub visits_map: PathBuf,
    pub ir_map: PathBuf,
    pub snapshot: PathBuf,
    /// Arrival counts per state.
    pub visits: Vec<u64>,
    /// Final bonus field per state (zero where never visited).
    pub ir_field: Vec<f64>,
    /// Unique states known after each episode.
    pub unique_curve: Vec<usize>,
}

/// Requires the agent list to pair every base agent with its `+ir`
/// counterpart, then runs each agent for `episodes_per_task` episodes on
/// the seed's first task.
pub fn run_exploration_study(
    cfg: &ExperimentConfig,
) -> Result<Vec<ExploreArtifacts>, HarnessError> {
    for spec in &cfg.agents {
        let partner = AgentSpec {
            use_ir: !spec.use_ir,
            ..*spec
        };
        if !cfg.agents.contains(&partner) {
            return Err(HarnessError::UnpairedAgent(spec.to_string()));
        }
    }
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
    // Same replica-parallel layout as the transfer suite.
    let replicas: Vec<(AgentSpec, u64)> = cfg
        .agents
        .iter()
        .flat_map(|spec| cfg.seeds.iter().map(move |&seed| (*spec, seed)))
        .collect();
    let mut artifacts = Vec::with_capacity(replicas.len());
    std::thread::scope(|scope| {
        let handles: Vec<_> = replicas
            .iter()
            .map(|&(spec, seed)| scope.spawn(move || run_explore_replica(cfg, spec, seed)))
            .collect();
        for handle in handles {
            artifacts.push(handle.join().expect("replica thread panicked"));
        }
    });
    artifacts.into_iter().collect()
}

/// One exploration replica on the fixed task of its seed.
pub fn run_explore_replica(
    cfg: &ExperimentConfig,
    spec: AgentSpec,
    seed: u64,
) -> Result<ExploreArtifacts, HarnessError> {
    let env = cfg.env.build()?;
    let mut task = env.sample_task(&mut task_rng(seed))?;
    task.max_steps = cfg.max_steps_on(&env);

    let mut rngs = RngStreams::from_seed(seed);
    let mut agent = build_agent(spec, &env, &cfg.agent, &mut rngs);
    let mut tracker = DynamicsTracker::new();
    let mut visits = vec![0u64; env.num_states()];
    let mut unique_curve = Vec::with_capacity(cfg.episodes_per_task as usize);
    let mut global_step = 0u64;

    let metrics_path = cfg.out_dir.join(format!("metrics_{spec}_{seed}.csv"));
    let mut writer = MetricsWriter::create(&metrics_path)?;
    let run_id = format!("{spec}-s{seed}");

    agent.start_task(0, &tracker, &mut rngs);
    for episode in 0..cfg.episodes_per_task {
        let clock = Instant::now();
        let epsilon = cfg.agent.reward.epsilon_at(episode);
        let metrics = run_episode(
            agent.as_mut(),
            &env,
            &task,
            &mut tracker,
            epsilon,
            cfg.agent.t_freq,
            &mut global_step,
            &mut rngs,
            Some(&mut visits),
        );
        unique_curve.push(metrics.unique_states);
        writer.append(&MetricsRecord {
            schema: SCHEMA_VERSION,
            run_id: run_id.clone(),
            agent: spec.to_string(),
            seed,
            task: 0,
            episode,
            extrinsic_return: metrics.extrinsic_return,
            steps: metrics.steps,
            unique_states: metrics.unique_states as u64,
            l_s: metrics.l_s,
            l_csc: metrics.l_csc,
            wall_ms: clock.elapsed().as_secs_f64() * 1e3,
        })?;
    }

    // Final intrinsic-reward field from the tracker's own counters.
    let ir_field: Vec<f64> = env
        .states()
        .map(|s| {
            let n = tracker.visit_count(s);
            if n == 0 {
                0.0
            } else {
                intrinsic_reward(n, tracker.episodic_neighborhood(s))
            }
        })
        .collect();
    let visits_field: Vec<f64> = visits.iter().map(|&v| v as f64).collect();

    let visits_map = cfg.out_dir.join(format!("visits_{spec}_{seed}.pgm"));
    let ir_map = cfg.out_dir.join(format!("ir_{spec}_{seed}.pgm"));
    let snapshot = cfg.out_dir.join(format!("snapshot_{spec}_{seed}.jsonl"));
    emit_heatmap(&env, &visits_field, &visits_map)?;
    emit_heatmap(&env, &ir_field, &ir_map)?;
    write_run_snapshot(&env, &tracker, &snapshot)?;

    Ok(ExploreArtifacts {
        agent: spec,
        seed,
        metrics: metrics_path,
        visits_map,
        ir_map,
        snapshot,
        visits,
        ir_field,
        unique_curve,
    })
}
