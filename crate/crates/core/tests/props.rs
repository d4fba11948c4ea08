//! Property tests over the environment and tracker invariants.

#![allow(clippy::needless_range_loop)]

use dynemb::dynamics::DynamicsTracker;
use dynemb::grid::{Action, GridEnv, GridSpec, StateId};
use proptest::prelude::*;

fn arb_layout() -> impl Strategy<Value = GridSpec> {
    prop_oneof![
        Just(GridSpec::empty_room()),
        Just(GridSpec::four_room()),
        Just(GridSpec::multi_room()),
    ]
}

fn arb_actions(max_len: usize) -> impl Strategy<Value = Vec<Action>> {
    prop::collection::vec((0usize..4).prop_map(Action::from_index), 1..max_len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn identical_inputs_replay_identically(spec in arb_layout(), actions in arb_actions(200), pick in any::<u64>()) {
        let env = GridEnv::build(spec).unwrap();
        let n = env.num_states() as u64;
        let start = StateId((pick % n) as u32);
        let goal = StateId(((pick / n) % n) as u32);
        prop_assume!(start != goal);
        let task = dynemb::grid::Task { start, goal, max_steps: 500 };
        let run = || {
            let mut s = start;
            let mut outcomes = Vec::new();
            for (i, &a) in actions.iter().enumerate() {
                let out = env.step(&task, s, a, (i + 1) as u32);
                outcomes.push((out.next_state, out.extrinsic_reward.to_bits(), out.done));
                if out.done {
                    break;
                }
                s = out.next_state;
            }
            outcomes
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn rewards_are_zero_or_in_the_success_band(spec in arb_layout(), actions in arb_actions(200), pick in any::<u64>()) {
        let env = GridEnv::build(spec).unwrap();
        let n = env.num_states() as u64;
        let start = StateId((pick % n) as u32);
        let goal = StateId(((pick / n) % n) as u32);
        prop_assume!(start != goal);
        let task = dynemb::grid::Task { start, goal, max_steps: 300 };
        let mut s = start;
        for (i, &a) in actions.iter().enumerate() {
            let out = env.step(&task, s, a, (i + 1) as u32);
            if out.extrinsic_reward != 0.0 {
                prop_assert!(out.extrinsic_reward >= 0.1 && out.extrinsic_reward < 1.0);
                prop_assert!(out.done);
            }
            if out.done {
                break;
            }
            s = out.next_state;
        }
    }

    #[test]
    fn quicker_success_never_pays_less(n1 in 1u32..500, n2 in 1u32..500) {
        prop_assume!(n1 < n2);
        let pay = |n: u32| 1.0 - 0.9 * (n as f64 / 500.0);
        prop_assert!(pay(n1) > pay(n2));
    }

    #[test]
    fn every_step_transition_is_a_true_edge(spec in arb_layout(), actions in arb_actions(300), pick in any::<u64>()) {
        let env = GridEnv::build(spec).unwrap();
        let oracle = env.true_binary_dynamics();
        let n = env.num_states() as u64;
        let start = StateId((pick % n) as u32);
        let goal = StateId(((pick / n) % n) as u32);
        prop_assume!(start != goal);
        let task = dynemb::grid::Task { start, goal, max_steps: 500 };
        let mut s = start;
        for (i, &a) in actions.iter().enumerate() {
            let out = env.step(&task, s, a, (i + 1) as u32);
            prop_assert!(oracle.contains_edge(s, out.next_state));
            if out.done {
                break;
            }
            s = out.next_state;
        }
    }

    #[test]
    fn inferred_edges_depend_only_on_the_transition_set(transitions in prop::collection::vec((0u32..30, 0u32..30), 1..120), seed in any::<u64>()) {
        // Policy agnosticism: any reordering of the same transitions yields
        // the same neighbor map and unique-state set.
        let mut in_order = DynamicsTracker::new();
        for &(s, t) in &transitions {
            in_order.observe(StateId(s), StateId(t));
        }
        let mut shuffled = transitions.clone();
        // Deterministic Fisher-Yates driven by the seed.
        let mut state = seed | 1;
        for i in (1..shuffled.len()).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let j = (state >> 33) as usize % (i + 1);
            shuffled.swap(i, j);
        }
        let mut reordered = DynamicsTracker::new();
        for &(s, t) in &shuffled {
            reordered.observe(StateId(s), StateId(t));
        }
        prop_assert_eq!(in_order.neighbor_map(), reordered.neighbor_map());
        let mut a: Vec<StateId> = in_order.state_buffer().to_vec();
        let mut b: Vec<StateId> = reordered.state_buffer().to_vec();
        a.sort();
        b.sort();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn tracker_only_grows(transitions in prop::collection::vec((0u32..20, 0u32..20), 1..80)) {
        let mut tracker = DynamicsTracker::new();
        let mut last_edges = 0;
        let mut last_unique = 0;
        for (i, &(s, t)) in transitions.iter().enumerate() {
            tracker.observe(StateId(s), StateId(t));
            if i % 7 == 3 {
                tracker.episodic_reset();
            }
            let edges = tracker.neighbor_map().edge_count();
            let unique = tracker.buffer_len();
            prop_assert!(edges >= last_edges);
            prop_assert!(unique >= last_unique);
            last_edges = edges;
            last_unique = unique;
        }
    }

    #[test]
    fn w_matrix_is_symmetric_with_unit_diagonal(transitions in prop::collection::vec((0u32..12, 0u32..12), 1..60), k in 1usize..8) {
        let mut tracker = DynamicsTracker::new();
        for &(s, t) in &transitions {
            tracker.observe(StateId(s), StateId(t));
        }
        let batch: Vec<StateId> = tracker.state_buffer().iter().copied().take(k).collect();
        prop_assume!(!batch.is_empty());
        let w = tracker.build_w_matrix(&batch);
        for i in 0..batch.len() {
            prop_assert_eq!(w[i][i], 1.0);
            for j in 0..batch.len() {
                prop_assert_eq!(w[i][j], w[j][i]);
                prop_assert!(w[i][j] == 1.0 || w[i][j] == -1.0);
            }
        }
    }

    #[test]
    fn episodic_neighborhood_is_bounded_by_degree(transitions in prop::collection::vec((0u32..15, 0u32..15), 1..100)) {
        let mut tracker = DynamicsTracker::new();
        for (i, &(s, t)) in transitions.iter().enumerate() {
            if i % 11 == 5 {
                tracker.episodic_reset();
            }
            tracker.observe(StateId(s), StateId(t));
            let d_e = tracker.episodic_neighborhood(StateId(s)) as usize;
            prop_assert!(d_e <= tracker.neighbor_map().degree(StateId(s)) + 1);
            prop_assert!(d_e >= 1);
        }
    }
}
