//! Goal inference from the observed gripper trajectory.
//!
//! The score of goal `g` is the posterior `P(g | ξ_{S→U})` under a uniform
//! prior, with likelihood `exp(-β (C(S→U) + C*(U→G_g) - C*(S→G_g)))`.
//! `C` sums squared velocities over the observed path; `C*` is the cost of
//! the straight full-speed path. Costs are expressed in units of one
//! full-speed step (`max_speed² · dt`), so a detour of one step length
//! lowers a goal's log-likelihood by roughly one.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;


use crate::env::{EnvConfig, WorkspaceState};
use crate::error::{Error, Result};
use crate::math::{argmax, softmax, Vec2};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct IntentParams {
    /// Rationality β multiplying the log-likelihoods.
    pub rationality: f64,
    /// Exponential smoothing weight on the fresh posterior; 1.0 disables
    /// smoothing.
    pub smoothing: f64,
}

impl Default for IntentParams {
    fn default() -> Self {
        IntentParams {
            rationality: 1.0,
            smoothing: 1.0,
        }
    }
}

/// Observed positions and executed velocities since the episode start.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryHistory {
    start: Vec2,
    entries: Vec<(Vec2, Vec2)>,
}

impl TrajectoryHistory {
    pub fn new(start: Vec2) -> Self {
        TrajectoryHistory {
            start,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, position: Vec2, velocity: Vec2) {
        self.entries.push((position, velocity));
    }

    pub fn reset(&mut self, start: Vec2) {
        self.start = start;
        self.entries.clear();
    }

    pub fn start(&self) -> Vec2 {
        self.start
    }

    pub fn entries(&self) -> &[(Vec2, Vec2)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `Σ ‖v‖² dt` in full-speed-step units.
    pub fn path_cost(&self, config: &EnvConfig) -> f64 {
        let unit = config.max_speed * config.max_speed;
        self.entries.iter().map(|(_, v)| v.norm_sq()).sum::<f64>() / unit
    }
}

/// Cost of the straight full-speed path from `a` to `b`, in full-speed-step
/// units.
pub fn optimal_cost(a: Vec2, b: Vec2, config: &EnvConfig) -> f64 {
    a.distance(b) / config.max_step_length()
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GoalBelief {
    pub scores: Vec<f64>,
    /// `C(S→U)` of the history the scores were computed from.
    pub history_cost: f64,
}

impl GoalBelief {
    pub fn uniform(goal_count: usize) -> Self {
        GoalBelief {
            scores: vec![1.0 / goal_count as f64; goal_count],
            history_cost: 0.0,
        }
    }

    /// `alpha·self + (1-alpha)·previous`, renormalised.
    pub fn smoothed(mut self, previous: &GoalBelief, alpha: f64) -> GoalBelief {
        if alpha >= 1.0 || previous.scores.len() != self.scores.len() {
            return self;
        }
        for (s, p) in self.scores.iter_mut().zip(&previous.scores) {
            *s = alpha * *s + (1.0 - alpha) * p;
        }
        let total: f64 = self.scores.iter().sum();
        self.scores.iter_mut().for_each(|s| *s /= total);
        self
    }
}

/// Per-goal log-likelihoods `ℓ_g` before the softmax.
pub fn goal_log_likelihoods(
    history: &TrajectoryHistory,
    state: &WorkspaceState,
    config: &EnvConfig,
    params: &IntentParams,
) -> Vec<f64> {
    let start = history.start();
    let here = state.gripper_pos;
    let travelled = history.path_cost(config);
    state
        .goal_positions
        .iter()
        .map(|&goal| {
            let via_here = travelled + optimal_cost(here, goal, config);
            let direct = optimal_cost(start, goal, config);
            -params.rationality * (via_here - direct)
        })
        .collect()
}

/// Posterior goal scores for the trajectory observed so far.
pub fn update_belief(
    history: &TrajectoryHistory,
    state: &WorkspaceState,
    config: &EnvConfig,
    params: &IntentParams,
) -> Result<GoalBelief> {
    if state.goal_positions.is_empty() {
        return Err(Error::Input("state has no goals".into()));
    }
    let logits = goal_log_likelihoods(history, state, config, params);
    if logits.iter().any(|l| !l.is_finite()) {
        return Err(Error::Input(format!("non-finite goal likelihoods {logits:?}")));
    }
    let mut scores = vec![0.0; logits.len()];
    softmax(&logits, &mut scores);
    Ok(GoalBelief {
        scores,
        history_cost: history.path_cost(config),
    })
}

/// Most likely goal, lowest index on ties.
pub fn predicted_goal(belief: &GoalBelief) -> usize {
    argmax(&belief.scores)
}
