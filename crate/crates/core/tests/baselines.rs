//! Behavioral checks on the transfer rules of the baseline families.

#![allow(clippy::field_reassign_with_default)]

use dynemb::agents::{run_episode, AgentConfig, AgentSpec, PvfAgent, SrAgent};
use dynemb::dynamics::DynamicsTracker;
use dynemb::grid::{GridEnv, GridSpec};
use dynemb::rng::{task_rng, RngStreams};
use dynemb::stats::chi_square_uniform;

#[test]
fn pvf_spends_the_source_task_on_a_uniform_random_policy() {
    let env = GridEnv::build(GridSpec::empty_room()).unwrap();
    let cfg = AgentConfig::default();
    let mut rngs = RngStreams::from_seed(2);
    let mut agent = PvfAgent::new(
        AgentSpec::parse("pvf").unwrap(),
        env.num_states(),
        &cfg,
        &mut rngs,
    );
    let mut counts = [0u64; 4];
    let s = env.states().next().unwrap();
    for _ in 0..10_000 {
        let a = dynemb::agents::Agent::select_action(&mut agent, s, 0.0, &mut rngs.action);
        counts[a.index()] += 1;
    }
    let (stat, bound) = chi_square_uniform(&counts);
    assert!(
        stat < bound,
        "source-phase actions not uniform: {stat} vs {bound}"
    );
    assert!(agent.basis().is_none());
}

#[test]
fn pvf_freezes_a_spectral_basis_at_the_first_boundary_and_learns_on_targets() {
    let env = GridEnv::build(GridSpec::empty_room()).unwrap();
    let cfg = AgentConfig {
        lr: 0.03,
        ..AgentConfig::default()
    };
    let mut rngs = RngStreams::from_seed(5);
    let mut agent = PvfAgent::new(
        AgentSpec::parse("pvf").unwrap(),
        env.num_states(),
        &cfg,
        &mut rngs,
    );
    let mut tracker = DynamicsTracker::new();
    let mut task_stream = task_rng(5);
    let mut step = 0u64;

    // Source task: random behavior feeds the tracker.
    dynemb::agents::Agent::start_task(&mut agent, 0, &tracker, &mut rngs);
    let task0 = env.sample_task(&mut task_stream).unwrap();
    for episode in 0..40 {
        let eps = cfg.reward.epsilon_at(episode);
        run_episode(
            &mut agent,
            &env,
            &task0,
            &mut tracker,
            eps,
            cfg.t_freq,
            &mut step,
            &mut rngs,
            None,
        );
    }
    // Boundary: the basis appears, built from what the tracker saw.
    dynemb::agents::Agent::start_task(&mut agent, 1, &tracker, &mut rngs);
    let basis = agent.basis().expect("basis after first boundary");
    assert_eq!(basis.vectors.len(), cfg.embed_dim);
    assert!(basis.eigenvalues[0].abs() < 1e-6);
    let states_in_basis = basis.states.len();
    assert!(
        states_in_basis > 50,
        "random source phase should cover the room"
    );

    // Target task: value learning actually moves parameters now.
    let before = dynemb::agents::Agent::value_digest(&agent);
    let task1 = env.sample_task(&mut task_stream).unwrap();
    for episode in 0..20 {
        let eps = cfg.reward.epsilon_at(episode);
        run_episode(
            &mut agent,
            &env,
            &task1,
            &mut tracker,
            eps,
            cfg.t_freq,
            &mut step,
            &mut rngs,
            None,
        );
    }
    assert_ne!(dynemb::agents::Agent::value_digest(&agent), before);

    // Later boundaries keep the basis.
    let frozen: Vec<f64> = agent.basis().unwrap().eigenvalues.clone();
    dynemb::agents::Agent::start_task(&mut agent, 2, &tracker, &mut rngs);
    assert_eq!(agent.basis().unwrap().eigenvalues, frozen);
}

#[test]
fn sr_keeps_occupancy_and_refits_weights_at_the_boundary() {
    let env = GridEnv::build(GridSpec::empty_room()).unwrap();
    let cfg = AgentConfig::default();
    let mut rngs = RngStreams::from_seed(9);
    let mut agent = SrAgent::new(AgentSpec::parse("sr").unwrap(), &env, &cfg);
    let mut tracker = DynamicsTracker::new();
    let mut task_stream = task_rng(9);
    let mut step = 0u64;
    dynemb::agents::Agent::start_task(&mut agent, 0, &tracker, &mut rngs);
    let task0 = env.sample_task(&mut task_stream).unwrap();
    for episode in 0..30 {
        let eps = cfg.reward.epsilon_at(episode);
        run_episode(
            &mut agent,
            &env,
            &task0,
            &mut tracker,
            eps,
            cfg.t_freq,
            &mut step,
            &mut rngs,
            None,
        );
    }
    let m_before = agent.sr().m.clone();
    assert!(
        agent.sr().w.iter().any(|&w| w != 0.0),
        "source rewards were seen"
    );
    dynemb::agents::Agent::start_task(&mut agent, 1, &tracker, &mut rngs);
    assert_eq!(agent.sr().m, m_before, "occupancy must survive the switch");
    assert!(agent.sr().w.iter().all(|&w| w == 0.0), "weights must reset");

    // During the target task the occupancy stays frozen.
    let task1 = env.sample_task(&mut task_stream).unwrap();
    for episode in 0..10 {
        let eps = cfg.reward.epsilon_at(episode);
        run_episode(
            &mut agent,
            &env,
            &task1,
            &mut tracker,
            eps,
            cfg.t_freq,
            &mut step,
            &mut rngs,
            None,
        );
    }
    assert_eq!(agent.sr().m, m_before);
    assert!(agent.sr().w.iter().any(|&w| w != 0.0));
}

#[test]
fn full_stack_runs_on_every_builtin_layout() {
    use dynemb::harness::{read_metrics, run_transfer_suite, EnvChoice, ExperimentConfig};
    for (label, env) in [("fr", EnvChoice::FourRoom), ("mr", EnvChoice::MultiRoom)] {
        let dir = std::env::temp_dir().join(format!("dynemb_stack_{label}"));
        std::fs::remove_dir_all(&dir).ok();
        let mut cfg = ExperimentConfig::default();
        cfg.env = env;
        cfg.agents = ["emb_dqn+ir", "sr", "pvf", "emb_ac"]
            .iter()
            .map(|n| dynemb::agents::AgentSpec::parse(n).unwrap())
            .collect();
        cfg.tasks = 2;
        cfg.episodes_per_task = 4;
        cfg.seeds = vec![0];
        cfg.n_max = Some(120);
        cfg.out_dir = dir.clone();
        let files = run_transfer_suite(&cfg).unwrap();
        assert_eq!(files.len(), 4, "{label}");
        for file in &files {
            let rows = read_metrics(file).unwrap();
            assert_eq!(rows.len(), 8, "{label}");
            assert!(rows.iter().all(|r| r.steps >= 1 && r.steps <= 120));
        }
        std::fs::remove_dir_all(&dir).ok();
    }
}

#[test]
fn sr_diagonal_stays_at_least_one() {
    let env = GridEnv::build(GridSpec::empty_room()).unwrap();
    let cfg = AgentConfig::default();
    let mut rngs = RngStreams::from_seed(3);
    let mut agent = SrAgent::new(AgentSpec::parse("sr").unwrap(), &env, &cfg);
    let mut tracker = DynamicsTracker::new();
    let mut step = 0u64;
    let task = env.sample_task(&mut task_rng(3)).unwrap();
    for episode in 0..30 {
        let eps = cfg.reward.epsilon_at(episode);
        run_episode(
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
    }
    for (i, row) in agent.sr().m.iter().enumerate() {
        assert!(row[i] >= 1.0 - 1e-9, "diagonal m[{i}][{i}] = {}", row[i]);
    }
}
