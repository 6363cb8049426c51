//! Goal-conditioned robot sub-policies.
//!
//! Each sub-policy is an analytic vector field: an attractive unit vector
//! toward its goal, blended with a tangential circumnavigation vector while
//! the obstacle blocks the way. The blend weight ramps from 0 at the
//! influence radius (3 obstacle radii from the centre) to 1 at 1.5 radii, and
//! is gated by how squarely the obstacle sits in front of the goal bearing.
//! Inside half a radius of the obstacle surface the inward radial component
//! is removed, so the field never drives into the obstacle.

use alloc::vec::Vec;


use crate::env::{Action2D, EnvConfig, WorkspaceState};
use crate::math::Vec2;

/// Influence radius in obstacle radii.
pub const INFLUENCE_RADII: f64 = 3.0;
/// Full-circumnavigation radius in obstacle radii.
pub const INNER_RADII: f64 = 1.5;
/// Outer edge of the inward-projection ramp, in obstacle radii.
const PROJECTION_RADII: f64 = 2.0;
/// Blockage (cosine between goal bearing and obstacle bearing) at which the
/// circumnavigation term is fully on.
const BLOCKAGE_FULL: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SubpolicyAction {
    pub goal: usize,
    pub action: Action2D,
}

/// Action of the sub-policy for goal index `goal`.
pub fn subpolicy_action(state: &WorkspaceState, goal: usize, config: &EnvConfig) -> Action2D {
    assert!(
        goal < state.goal_positions.len(),
        "goal index {goal} out of range"
    );
    action_toward(state, state.goal_positions[goal], config)
}

/// The same field steered toward an arbitrary target point. Used by
/// simulated users that misperceive the goal location.
pub fn action_toward(state: &WorkspaceState, target: Vec2, config: &EnvConfig) -> Action2D {
    let pos = state.gripper_pos;
    let to_goal = target - pos;
    let goal_dist = to_goal.norm();
    if goal_dist == 0.0 {
        return Vec2::ZERO;
    }
    let attract = to_goal * (1.0 / goal_dist);
    let direction = avoid_obstacle(pos, attract, state.obstacle_pos, config.obstacle_radius);

    let slow_radius = 2.0 * config.reach_radius;
    let speed = config.max_speed * (goal_dist / slow_radius).min(1.0);
    (direction * speed).clamp_norm(config.max_speed)
}

fn avoid_obstacle(pos: Vec2, attract: Vec2, obstacle: Vec2, radius: f64) -> Vec2 {
    let offset = pos - obstacle;
    let dist = offset.norm();
    if dist >= INFLUENCE_RADII * radius || dist == 0.0 {
        return attract;
    }
    let normal = offset * (1.0 / dist);

    let proximity = ramp(dist, INNER_RADII * radius, INFLUENCE_RADII * radius);
    let blockage = (attract.dot(-normal) / BLOCKAGE_FULL).clamp(0.0, 1.0);
    let weight = proximity * blockage;

    let ccw = normal.perp();
    // Pick the tangent closer to the goal bearing; ties go counterclockwise.
    let tangent = if attract.dot(ccw) >= 0.0 { ccw } else { -ccw };

    let mut dir = attract * (1.0 - weight) + tangent * weight;

    let inward = dir.dot(normal);
    if inward < 0.0 {
        let strip = ramp(dist, INNER_RADII * radius, PROJECTION_RADII * radius);
        dir = dir - normal * (inward * strip);
    }
    let n = dir.norm();
    if n < 1e-9 {
        tangent
    } else {
        dir * (1.0 / n)
    }
}

/// 1 for `x ≤ lo`, 0 for `x ≥ hi`, linear between.
fn ramp(x: f64, lo: f64, hi: f64) -> f64 {
    ((hi - x) / (hi - lo)).clamp(0.0, 1.0)
}

/// Sub-policy actions for every goal, in goal-index order.
pub fn subpolicy_batch(state: &WorkspaceState, config: &EnvConfig) -> Vec<SubpolicyAction> {
    (0..state.goal_positions.len())
        .map(|goal| SubpolicyAction {
            goal,
            action: subpolicy_action(state, goal, config),
        })
        .collect()
}
