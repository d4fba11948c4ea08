//! The per-episode driver shared by every agent and protocol.
//!
//! Step order within the loop: select action, step the environment, update
//! the tracker (counts, neighbors, episodic neighborhoods, unique-state
//! buffer), compute the arrival bonus from the fresh counters, hand the
//! record to the agent, then run the training blocks every `t_freq` steps.

use super::{Agent, ExperienceRecord, TickLosses};
use crate::dynamics::DynamicsTracker;
use crate::grid::{GridEnv, Task};
use crate::intrinsic::intrinsic_reward;
use crate::rng::RngStreams;

/// Per-episode outcomes recorded by the harness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeMetrics {
    /// Sum of extrinsic rewards (the goal payment, or zero).
    pub extrinsic_return: f64,
    pub steps: u32,
    /// Unique states seen over the whole run so far.
    pub unique_states: usize,
    /// States first seen during this episode.
    pub new_states: usize,
    pub td_loss: f64,
    pub l_s: f64,
    pub l_csc: f64,
}

/// Runs one episode. `global_step` carries the training cadence across
/// episodes; `visits` (when given) accumulates arrival counts per state.
#[allow(clippy::too_many_arguments)]
pub fn run_episode(
    agent: &mut dyn Agent,
    env: &GridEnv,
    task: &Task,
    tracker: &mut DynamicsTracker,
    epsilon: f64,
    t_freq: u32,
    global_step: &mut u64,
    rngs: &mut RngStreams,
    mut visits: Option<&mut [u64]>,
) -> EpisodeMetrics {
    tracker.episodic_reset();
    let unique_before = tracker.buffer_len();
    let mut state = task.start;
    let mut extrinsic_return = 0.0;
    let mut steps = 0;
    let mut tick_sum = TickLosses::default();
    let mut ticks = 0u32;

    for n_e in 1..=task.max_steps {
        let action = agent.select_action(state, epsilon, &mut rngs.action);
        let out = env.step(task, state, action, n_e);
        tracker.observe(state, out.next_state);
        let rho = intrinsic_reward(
            tracker.visit_count(out.next_state),
            tracker.episodic_neighborhood(out.next_state),
        );
        let rec = ExperienceRecord {
            s: state,
            a: action,
            r_e: out.extrinsic_reward,
            rho,
            s_next: out.next_state,
            done: out.done,
        };
        agent.record(&rec);
        if let Some(v) = visits.as_deref_mut() {
            v[out.next_state.idx()] += 1;
        }
        *global_step += 1;
        if (*global_step).is_multiple_of(t_freq as u64) {
            let losses = agent.train_tick(tracker, rngs);
            if losses.trained {
                tick_sum.td += losses.td;
                tick_sum.l_s += losses.l_s;
                tick_sum.l_csc += losses.l_csc;
                ticks += 1;
            }
        }
        extrinsic_return += out.extrinsic_reward;
        steps = n_e;
        state = out.next_state;
        if out.done {
            break;
        }
    }

    let scale = if ticks > 0 { 1.0 / ticks as f64 } else { 0.0 };
    EpisodeMetrics {
        extrinsic_return,
        steps,
        unique_states: tracker.buffer_len(),
        new_states: tracker.buffer_len() - unique_before,
        td_loss: tick_sum.td * scale,
        l_s: tick_sum.l_s * scale,
        l_csc: tick_sum.l_csc * scale,
    }
}
