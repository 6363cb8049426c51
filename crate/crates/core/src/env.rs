//! Planar reach-and-avoid workspace.
//!
//! A square table of side `workspace_side` with `goal_count` goal objects
//! along the far edge (`y ≈ side`), one circular obstacle in the middle band,
//! and a velocity-controlled gripper that starts on the near side with the
//! obstacle between it and the goals. Collisions are recorded as events; the
//! gripper is not stopped by the obstacle.

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::math::{wrap_angle, Vec2};

/// Velocity command in m/s.
pub type Action2D = Vec2;

const PLACEMENT_ATTEMPTS: usize = 256;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct EnvConfig {
    /// Side length of the square workspace (m).
    pub workspace_side: f64,
    pub goal_count: usize,
    pub goal_radius: f64,
    pub obstacle_radius: f64,
    /// The gripper reaches a goal when its centre is closer than this.
    pub reach_radius: f64,
    /// Simulation step (s).
    pub dt: f64,
    pub max_steps: usize,
    pub max_speed: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            workspace_side: 0.5,
            goal_count: 3,
            goal_radius: 0.02,
            obstacle_radius: 0.06,
            reach_radius: 0.02,
            dt: 0.05,
            max_steps: 200,
            max_speed: 0.2,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("workspace_side", self.workspace_side),
            ("goal_radius", self.goal_radius),
            ("obstacle_radius", self.obstacle_radius),
            ("reach_radius", self.reach_radius),
            ("dt", self.dt),
            ("max_speed", self.max_speed),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {value}")));
            }
        }
        if self.goal_count < 2 {
            return Err(Error::Config(format!(
                "goal_count must be at least 2, got {}",
                self.goal_count
            )));
        }
        if self.obstacle_radius >= self.workspace_side / 4.0 {
            return Err(Error::Config(format!(
                "obstacle_radius {} must be below workspace_side/4",
                self.obstacle_radius
            )));
        }
        if self.max_steps == 0 {
            return Err(Error::Config("max_steps must be positive".into()));
        }
        // Goals sit in equal slots along the far edge; each slot must hold a goal.
        if self.workspace_side / self.goal_count as f64 <= 4.0 * self.goal_radius {
            return Err(Error::Config(format!(
                "{} goals of radius {} do not fit along the far edge",
                self.goal_count, self.goal_radius
            )));
        }
        Ok(())
    }

    /// Distance travelled in one step at full speed.
    pub fn max_step_length(&self) -> f64 {
        self.max_speed * self.dt
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WorkspaceState {
    pub gripper_pos: Vec2,
    /// Velocity executed on the last step (m/s).
    pub gripper_vel: Vec2,
    /// Gripper heading in `(-π, π]`.
    pub gripper_heading: f64,
    pub obstacle_pos: Vec2,
    pub goal_positions: Vec<Vec2>,
    pub step_index: usize,
}

impl WorkspaceState {
    /// Heading as the unit vector `[cos φ, sin φ]`.
    pub fn heading_vector(&self) -> Vec2 {
        Vec2::from_angle(self.gripper_heading)
    }

    pub fn goal_count(&self) -> usize {
        self.goal_positions.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EnvEvents {
    pub obstacle_collision: bool,
    pub boundary_contact: bool,
    pub goal_reached: Option<usize>,
    pub terminated: bool,
}

/// Samples a fresh scene. Identical `(config, seed)` pairs give identical
/// states.
pub fn reset(config: &EnvConfig, seed: u64) -> Result<WorkspaceState> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..PLACEMENT_ATTEMPTS {
        if let Some(state) = try_place(config, &mut rng) {
            return Ok(state);
        }
    }
    Err(Error::Config(format!(
        "scene placement failed after {PLACEMENT_ATTEMPTS} attempts"
    )))
}

fn try_place(config: &EnvConfig, rng: &mut ChaCha8Rng) -> Option<WorkspaceState> {
    let side = config.workspace_side;
    let count = config.goal_count;
    let slot = side / count as f64;
    let goal_y = side - 2.0 * config.goal_radius;

    let goals: Vec<Vec2> = (0..count)
        .map(|g| {
            let jitter = rng.random_range(-0.25..0.25) * slot;
            Vec2::new((g as f64 + 0.5) * slot + jitter, goal_y)
        })
        .collect();
    for (i, a) in goals.iter().enumerate() {
        if a.x < config.goal_radius || a.x > side - config.goal_radius {
            return None;
        }
        if goals[i + 1..]
            .iter()
            .any(|b| a.distance(*b) < 2.0 * config.goal_radius)
        {
            return None;
        }
    }

    let obstacle = Vec2::new(
        rng.random_range(side / 3.0..2.0 * side / 3.0),
        rng.random_range(side / 3.0..2.0 * side / 3.0),
    );

    let centroid = goals.iter().fold(Vec2::ZERO, |acc, g| acc + *g) * (1.0 / count as f64);
    let back = (obstacle - centroid).normalized();
    if back.y >= -1e-6 {
        return None;
    }
    let start_y = side * rng.random_range(0.08..0.16);
    let along = (start_y - obstacle.y) / back.y;
    let lateral = rng.random_range(-0.5..0.5) * config.obstacle_radius;
    let start = obstacle + back * along + back.perp() * lateral;

    let margin = 2.0 * config.reach_radius;
    if start.x < margin || start.x > side - margin || start.y < margin || start.y > side - margin {
        return None;
    }
    let clearance = config.obstacle_radius + config.reach_radius;
    if start.distance(obstacle) <= clearance {
        return None;
    }
    if goals
        .iter()
        .any(|g| g.distance(obstacle) <= clearance + config.goal_radius)
    {
        return None;
    }

    Some(WorkspaceState {
        gripper_pos: start,
        gripper_vel: Vec2::ZERO,
        gripper_heading: wrap_angle((centroid - start).angle()),
        obstacle_pos: obstacle,
        goal_positions: goals,
        step_index: 0,
    })
}

/// Advances the state by one `dt` under a velocity command.
pub fn step(
    config: &EnvConfig,
    state: &WorkspaceState,
    action: Action2D,
) -> Result<(WorkspaceState, EnvEvents)> {
    if !action.is_finite() {
        return Err(Error::Input(format!("non-finite action {action:?}")));
    }
    let side = config.workspace_side;
    let velocity = action.clamp_norm(config.max_speed);
    let target = state.gripper_pos + velocity * config.dt;
    let pos = Vec2::new(target.x.clamp(0.0, side), target.y.clamp(0.0, side));
    let boundary_contact = pos != target;

    let displacement = pos - state.gripper_pos;
    let heading = if displacement.norm_sq() > 0.0 {
        wrap_angle(displacement.angle())
    } else {
        state.gripper_heading
    };

    let obstacle_collision = pos.distance(state.obstacle_pos) < config.obstacle_radius;
    let goal_reached = state
        .goal_positions
        .iter()
        .enumerate()
        .map(|(g, goal)| (g, pos.distance(*goal)))
        .filter(|&(_, d)| d < config.reach_radius)
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(g, _)| g);

    let step_index = state.step_index + 1;
    let terminated = goal_reached.is_some() || step_index >= config.max_steps;

    let next = WorkspaceState {
        gripper_pos: pos,
        gripper_vel: displacement * (1.0 / config.dt),
        gripper_heading: heading,
        obstacle_pos: state.obstacle_pos,
        goal_positions: state.goal_positions.clone(),
        step_index,
    };
    let events = EnvEvents {
        obstacle_collision,
        boundary_contact,
        goal_reached,
        terminated,
    };
    Ok((next, events))
}

/// Euclidean distance to every goal, and surface distance to the obstacle
/// (centre distance minus radius, floored at zero).
pub fn distances(config: &EnvConfig, state: &WorkspaceState) -> (Vec<f64>, f64) {
    let pos = state.gripper_pos;
    let goals = state.goal_positions.iter().map(|g| pos.distance(*g)).collect();
    let obstacle = (pos.distance(state.obstacle_pos) - config.obstacle_radius).max(0.0);
    (goals, obstacle)
}
