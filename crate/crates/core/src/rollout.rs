//! The per-step pipeline shared by training, evaluation, tracing and the live
//! service: sub-policies, belief update, observation assembly, env step.

use alloc::vec::Vec;

use crate::env::{reset, step, Action2D, EnvConfig, EnvEvents, WorkspaceState};
use crate::error::{Error, Result};
use crate::intent::{predicted_goal, update_belief, GoalBelief, IntentParams, TrajectoryHistory};
use crate::observation::{assemble_observation, ArbitrationObservation};
use crate::subpolicy::{subpolicy_batch, SubpolicyAction};

/// SplitMix64 finaliser; used to derive independent seeds from a run seed.
pub fn mix_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_mul(0xD6E8_FEB8_6659_FD93))
        .wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_ENV: u64 = 1;
const STREAM_GOAL: u64 = 2;
const STREAM_USER: u64 = 3;

/// Everything random about one episode, derived from the run seed so that
/// runs with equal seeds see the same scenes, goals and users.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpisodeSpec {
    pub index: usize,
    pub env_seed: u64,
    pub true_goal: usize,
    pub user_seed: u64,
}

pub fn episode_spec(run_seed: u64, index: usize, goal_count: usize) -> EpisodeSpec {
    let i = index as u64;
    EpisodeSpec {
        index,
        env_seed: mix_seed(run_seed, STREAM_ENV, i),
        true_goal: (mix_seed(run_seed, STREAM_GOAL, i) % goal_count as u64) as usize,
        user_seed: mix_seed(run_seed, STREAM_USER, i),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpisodeStats {
    pub steps: usize,
    pub collision_steps: usize,
    pub boundary_steps: usize,
    /// Path length in metres.
    pub travel: f64,
    pub reached: Option<usize>,
}

impl EpisodeStats {
    pub fn success(&self, true_goal: usize) -> bool {
        self.reached == Some(true_goal)
    }

    pub fn travel_cm(&self) -> f64 {
        self.travel * 100.0
    }
}

/// One episode in flight.
#[derive(Debug, Clone)]
pub struct Rollout {
    env: EnvConfig,
    intent: IntentParams,
    state: WorkspaceState,
    history: TrajectoryHistory,
    belief: GoalBelief,
    sub_actions: Vec<SubpolicyAction>,
    stats: EpisodeStats,
    done: bool,
}

impl Rollout {
    pub fn start(env: &EnvConfig, intent: &IntentParams, env_seed: u64) -> Result<Self> {
        let state = reset(env, env_seed)?;
        Rollout::from_state(env, intent, state)
    }

    pub fn from_state(env: &EnvConfig, intent: &IntentParams, state: WorkspaceState) -> Result<Self> {
        let history = TrajectoryHistory::new(state.gripper_pos);
        let belief = update_belief(&history, &state, env, intent)?;
        let sub_actions = subpolicy_batch(&state, env);
        Ok(Rollout {
            env: env.clone(),
            intent: *intent,
            state,
            history,
            belief,
            sub_actions,
            stats: EpisodeStats::default(),
            done: false,
        })
    }

    pub fn env(&self) -> &EnvConfig {
        &self.env
    }

    pub fn state(&self) -> &WorkspaceState {
        &self.state
    }

    pub fn belief(&self) -> &GoalBelief {
        &self.belief
    }

    pub fn sub_actions(&self) -> &[SubpolicyAction] {
        &self.sub_actions
    }

    pub fn stats(&self) -> &EpisodeStats {
        &self.stats
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn predicted_goal(&self) -> usize {
        predicted_goal(&self.belief)
    }

    /// Sub-policy action for the currently most likely goal.
    pub fn predicted_robot_action(&self) -> Action2D {
        self.sub_actions[self.predicted_goal()].action
    }

    pub fn observe(&self, user_action: Action2D) -> Result<ArbitrationObservation> {
        assemble_observation(
            &self.env,
            &self.state,
            user_action,
            &self.sub_actions,
            &self.belief,
        )
    }

    /// Executes `action`, then refreshes belief and sub-policies for the new
    /// state.
    pub fn advance(&mut self, action: Action2D) -> Result<EnvEvents> {
        if self.done {
            return Err(Error::State("episode already terminated".into()));
        }
        let (next, events) = step(&self.env, &self.state, action)?;
        self.stats.steps += 1;
        self.stats.travel += next.gripper_pos.distance(self.state.gripper_pos);
        self.stats.collision_steps += events.obstacle_collision as usize;
        self.stats.boundary_steps += events.boundary_contact as usize;
        if events.goal_reached.is_some() {
            self.stats.reached = events.goal_reached;
        }
        self.history.push(next.gripper_pos, next.gripper_vel);
        let fresh = update_belief(&self.history, &next, &self.env, &self.intent)?;
        self.belief = fresh.smoothed(&self.belief, self.intent.smoothing);
        self.sub_actions = subpolicy_batch(&next, &self.env);
        self.state = next;
        self.done = events.terminated;
        Ok(events)
    }
}
