//! Neighbor-count intrinsic reward, compound reward, and the exploration
//! schedule shared by all agents.

use serde::{Deserialize, Serialize};

/// Reward and exploration hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    /// Intrinsic-reward scaling. Zero disables the bonus entirely.
    pub beta: f64,
    /// Discount factor.
    pub gamma: f64,
    pub epsilon_init: f64,
    pub epsilon_decay: f64,
    pub epsilon_floor: f64,
}

impl Default for RewardConfig {
    fn default() -> RewardConfig {
        RewardConfig {
            beta: 0.1,
            gamma: 0.99,
            epsilon_init: 0.9,
            epsilon_decay: 0.95,
            epsilon_floor: 0.1,
        }
    }
}

impl RewardConfig {
    /// Exploration probability for a 0-based episode index within a task:
    /// `init * decay^t + floor`.
    pub fn epsilon_at(&self, episode_index: u32) -> f64 {
        self.epsilon_init * self.epsilon_decay.powi(episode_index as i32) + self.epsilon_floor
    }
}

/// Exploration bonus for arriving in a state with life-long visit count `n`
/// and episodic neighborhood size `d_e`: `1 / sqrt(n * d_e)`.
///
/// Both counts must be at least one; the tracker bumps the arrival count
/// before this is evaluated.
pub fn intrinsic_reward(n: u64, d_e: u32) -> f64 {
    assert!(
        n >= 1 && d_e >= 1,
        "counts must be positive, got n={n} d_e={d_e}"
    );
    1.0 / ((n as f64) * (d_e as f64)).sqrt()
}

/// Compound reward `r_e + beta * rho`.
pub fn compound_reward(r_e: f64, rho: f64, beta: f64) -> f64 {
    r_e + beta * rho
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_state_earns_full_bonus() {
        assert_eq!(intrinsic_reward(1, 1), 1.0);
    }

    #[test]
    fn bonus_shrinks_with_counts() {
        assert_eq!(intrinsic_reward(4, 4), 0.25);
        assert!((intrinsic_reward(100, 1) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn bonus_is_monotone_decreasing_in_each_count() {
        let mut prev = f64::INFINITY;
        for n in 1..50 {
            let r = intrinsic_reward(n, 3);
            assert!(r < prev && r <= 1.0);
            prev = r;
        }
        let mut prev = f64::INFINITY;
        for d in 1..50 {
            let r = intrinsic_reward(7, d);
            assert!(r < prev && r <= 1.0);
            prev = r;
        }
    }

    #[test]
    #[should_panic]
    fn zero_count_violates_the_contract() {
        intrinsic_reward(0, 1);
    }

    #[test]
    fn compound_reward_is_affine() {
        assert_eq!(compound_reward(0.91, 0.25, 0.1), 0.935);
        assert_eq!(compound_reward(0.0, 1.0, 0.1), 0.1);
        let r = 0.42;
        assert_eq!(compound_reward(r, 0.77, 0.0), r);
    }

    #[test]
    fn epsilon_schedule_matches_formula() {
        let cfg = RewardConfig::default();
        assert_eq!(cfg.epsilon_at(0), 1.0);
        assert!((cfg.epsilon_at(1) - 0.955).abs() < 1e-12);
        assert!((cfg.epsilon_at(500) - 0.1).abs() < 1e-9);
    }
}
