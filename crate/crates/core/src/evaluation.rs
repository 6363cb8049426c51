//! Noise-free rollouts with per-step records, for evaluation tables and
//! arbitration traces.

use alloc::format;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

#[allow(unused_imports)] // inherent float methods shadow it when std is linked
use num_traits::Float;

use crate::agent::Agent;
use crate::circular::{build_fvmm, classify_modality, KappaMapping, ModalityClass, ModalityParams};
use crate::env::{Action2D, EnvConfig};
use crate::error::{Error, Result};
use crate::intent::IntentParams;
use crate::math::Vec2;
use crate::rollout::{episode_spec, mix_seed, EpisodeSpec, Rollout};
use crate::users::{sample_user, UserMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Assistance {
    #[default]
    Shared,
    Direct,
}

impl fmt::Display for Assistance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Assistance::Shared => "shared",
            Assistance::Direct => "direct",
        })
    }
}

impl FromStr for Assistance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "shared" => Ok(Assistance::Shared),
            "direct" => Ok(Assistance::Direct),
            other => Err(Error::Config(format!(
                "unknown assistance '{other}' (expected shared or direct)"
            ))),
        }
    }
}

/// Who produces the executed action.
#[derive(Debug, Clone, Copy)]
pub enum Arbiter<'a> {
    Shared(&'a Agent),
    /// The user's command, clamped to the speed limit.
    Direct,
}

impl Arbiter<'_> {
    pub fn assistance(&self) -> Assistance {
        match self {
            Arbiter::Shared(_) => Assistance::Shared,
            Arbiter::Direct => Assistance::Direct,
        }
    }

    pub fn arbitrate(
        &self,
        rollout: &Rollout,
        user_action: Action2D,
    ) -> Result<Action2D> {
        match self {
            Arbiter::Shared(agent) => agent.actor_forward(&rollout.observe(user_action)?),
            Arbiter::Direct => Ok(user_action.clamp_norm(rollout.env().max_speed)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalSettings {
    pub env: EnvConfig,
    pub intent: IntentParams,
    pub kappa: KappaMapping,
    pub modality: ModalityParams,
    pub user: UserMode,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StepRecord {
    pub step: usize,
    pub position: Vec2,
    pub user_action: Action2D,
    pub arbitrated: Action2D,
    /// Sub-policy action of the currently most likely goal.
    pub robot_action: Action2D,
    pub predicted_goal: usize,
    pub scores: Vec<f64>,
    pub modality: ModalityClass,
    pub peak: f64,
    /// Distance to the obstacle surface before the step.
    pub obstacle_distance: f64,
    pub collision: bool,
}

impl StepRecord {
    pub fn l2_human(&self) -> f64 {
        (self.user_action - self.arbitrated).norm()
    }

    pub fn l2_robot(&self) -> f64 {
        (self.robot_action - self.arbitrated).norm()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpisodeRecord {
    pub spec: EpisodeSpec,
    pub success: bool,
    pub reached: Option<usize>,
    pub steps: usize,
    pub travel_cm: f64,
    /// Steps spent inside the obstacle.
    pub collisions: usize,
    pub trace: Vec<StepRecord>,
}

impl EpisodeRecord {
    pub fn collided(&self) -> bool {
        self.collisions > 0
    }
}

/// Seed base for evaluation episodes, disjoint from the training stream of
/// the same run seed.
pub fn eval_seed(run_seed: u64) -> u64 {
    mix_seed(run_seed, 41, 0)
}

pub fn run_episode(
    arbiter: Arbiter<'_>,
    settings: &EvalSettings,
    spec: EpisodeSpec,
) -> Result<EpisodeRecord> {
    let env = &settings.env;
    let mut rollout = Rollout::start(env, &settings.intent, spec.env_seed)?;
    let mut user = sample_user(settings.user, spec.true_goal, spec.user_seed, env)?;
    let mut trace = Vec::new();
    while !rollout.is_done() {
        let a_h = user.action(rollout.state(), env);
        let a_s = arbiter.arbitrate(&rollout, a_h)?;
        let scores = rollout.belief().scores.clone();
        let fvmm = build_fvmm(rollout.sub_actions(), &scores, settings.kappa)?;
        let modality = classify_modality(
            &fvmm.mixture,
            settings.modality.n_samples,
            settings.modality.peak_threshold,
        );
        let position = rollout.state().gripper_pos;
        let obstacle_distance =
            (position.distance(rollout.state().obstacle_pos) - env.obstacle_radius).max(0.0);
        let predicted_goal = rollout.predicted_goal();
        let robot_action = rollout.predicted_robot_action();
        let events = rollout.advance(a_s)?;
        trace.push(StepRecord {
            step: trace.len(),
            position,
            user_action: a_h,
            arbitrated: a_s,
            robot_action,
            predicted_goal,
            scores,
            modality: modality.class,
            peak: modality.peak,
            obstacle_distance,
            collision: events.obstacle_collision,
        });
    }
    let stats = rollout.stats();
    Ok(EpisodeRecord {
        spec,
        success: stats.success(spec.true_goal),
        reached: stats.reached,
        steps: stats.steps,
        travel_cm: stats.travel_cm(),
        collisions: stats.collision_steps,
        trace,
    })
}

/// `episodes` matched-seed episodes starting at index 0 of `seed`'s stream.
pub fn evaluate(
    arbiter: Arbiter<'_>,
    settings: &EvalSettings,
    seed: u64,
    episodes: usize,
) -> Result<Vec<EpisodeRecord>> {
    (0..episodes)
        .map(|i| run_episode(arbiter, settings, episode_spec(seed, i, settings.env.goal_count)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalSummary {
    pub episodes: usize,
    pub successes: usize,
    pub collision_episodes: usize,
    pub travel_mean_cm: f64,
    pub travel_std_cm: f64,
}

pub fn summarize(records: &[EpisodeRecord]) -> EvalSummary {
    let n = records.len();
    let mean = if n == 0 {
        0.0
    } else {
        records.iter().map(|r| r.travel_cm).sum::<f64>() / n as f64
    };
    let std = if n < 2 {
        0.0
    } else {
        let ss: f64 = records.iter().map(|r| (r.travel_cm - mean).powi(2)).sum();
        (ss / (n - 1) as f64).sqrt()
    };
    EvalSummary {
        episodes: n,
        successes: records.iter().filter(|r| r.success).count(),
        collision_episodes: records.iter().filter(|r| r.collided()).count(),
        travel_mean_cm: mean,
        travel_std_cm: std,
    }
}
