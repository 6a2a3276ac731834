//! Reinforcement learning on finite MDPs (Q-learning, REINFORCE,
//! actor-critic, A3C), a Game of Giving and Asking for Reasons scorekeeping
//! engine, the bridge that turns deterministic policies into GOGAR counter
//! universes, and the population-based GOGAR-A3C trainer that joins them.

pub mod a3c;
pub mod approx;
pub mod bridge;
pub mod error;
pub mod gogar;
pub mod harness;
pub mod mdp;
pub mod pg;
pub mod population;
pub mod qlearning;
pub mod rng;

pub use error::{Error, Result};

/// Per-episode (or per-segment) training summary.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeStats {
    pub index: usize,
    /// Undiscounted sum of rewards.
    pub total_reward: f64,
    pub length: usize,
    pub td_abs_sum: f64,
}

impl EpisodeStats {
    pub fn new(index: usize) -> Self {
        EpisodeStats {
            index,
            total_reward: 0.0,
            length: 0,
            td_abs_sum: 0.0,
        }
    }

    pub fn record(&mut self, reward: f64, td: f64) {
        self.total_reward += reward;
        self.length += 1;
        self.td_abs_sum += td.abs();
    }

    pub fn td_abs_mean(&self) -> f64 {
        if self.length == 0 {
            0.0
        } else {
            self.td_abs_sum / self.length as f64
        }
    }
}
