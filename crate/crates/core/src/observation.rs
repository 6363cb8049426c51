//! The arbitration agent's input vector.
//!
//! Layout for `G` goals (`4G + 5` entries):
//!
//! | slice                     | size | units                         |
//! |---------------------------|------|-------------------------------|
//! | user action `a^H`         | 2    | m/s                           |
//! | sub-policy actions `a^R_g`| 2G   | m/s, goal-index order         |
//! | belief scores `b_g`       | G    | probability                   |
//! | goal distances            | G    | fraction of workspace side    |
//! | gripper position          | 2    | fraction of workspace side    |
//! | obstacle surface distance | 1    | fraction of workspace side    |

use alloc::format;
use alloc::vec::Vec;

use crate::env::{distances, Action2D, EnvConfig, WorkspaceState};
use crate::error::{Error, Result};
use crate::intent::GoalBelief;
use crate::math::Vec2;
use crate::subpolicy::SubpolicyAction;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ArbitrationObservation {
    values: Vec<f64>,
    goal_count: usize,
}

pub const fn observation_dim(goal_count: usize) -> usize {
    4 * goal_count + 5
}

impl ArbitrationObservation {
    pub fn from_values(values: Vec<f64>, goal_count: usize) -> Result<Self> {
        if values.len() != observation_dim(goal_count) {
            return Err(Error::Input(format!(
                "observation of length {} for {goal_count} goals",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("non-finite observation entry".into()));
        }
        Ok(ArbitrationObservation { values, goal_count })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn goal_count(&self) -> usize {
        self.goal_count
    }

    pub fn user_action(&self) -> Action2D {
        Vec2::new(self.values[0], self.values[1])
    }

    /// Everything except the user action: the input of the shared head.
    pub fn without_user_action(&self) -> &[f64] {
        &self.values[2..]
    }

    pub fn sub_action(&self, goal: usize) -> Action2D {
        let i = 2 + 2 * goal;
        Vec2::new(self.values[i], self.values[i + 1])
    }

    pub fn sub_actions(&self) -> Vec<SubpolicyAction> {
        (0..self.goal_count)
            .map(|goal| SubpolicyAction {
                goal,
                action: self.sub_action(goal),
            })
            .collect()
    }

    pub fn scores(&self) -> &[f64] {
        let i = 2 + 2 * self.goal_count;
        &self.values[i..i + self.goal_count]
    }

    pub fn goal_distances(&self) -> &[f64] {
        let i = 2 + 3 * self.goal_count;
        &self.values[i..i + self.goal_count]
    }

    pub fn gripper_position(&self) -> Vec2 {
        let i = 2 + 4 * self.goal_count;
        Vec2::new(self.values[i], self.values[i + 1])
    }

    pub fn obstacle_distance(&self) -> f64 {
        self.values[4 + 4 * self.goal_count]
    }
}

/// Lays out the observation for the current state.
pub fn assemble_observation(
    config: &EnvConfig,
    state: &WorkspaceState,
    user_action: Action2D,
    sub_actions: &[SubpolicyAction],
    belief: &GoalBelief,
) -> Result<ArbitrationObservation> {
    let g = state.goal_positions.len();
    if sub_actions.len() != g || belief.scores.len() != g {
        return Err(Error::Input(format!(
            "{} sub-actions and {} scores for {g} goals",
            sub_actions.len(),
            belief.scores.len()
        )));
    }
    let side = config.workspace_side;
    let (goal_dist, obstacle_dist) = distances(config, state);

    let mut values = Vec::with_capacity(observation_dim(g));
    values.extend([user_action.x, user_action.y]);
    for sa in sub_actions {
        values.extend([sa.action.x, sa.action.y]);
    }
    values.extend_from_slice(&belief.scores);
    values.extend(goal_dist.iter().map(|d| d / side));
    values.extend([state.gripper_pos.x / side, state.gripper_pos.y / side]);
    values.push(obstacle_dist / side);
    ArbitrationObservation::from_values(values, g)
}
