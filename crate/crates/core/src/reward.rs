//! Training reward: environment term plus modality-dependent agreement term.
//!
//! At a decision point (multimodal mixture) the arbitrated action is pulled
//! toward the human's direction; elsewhere toward the true goal's
//! sub-policy. A speed term always pulls the arbitrated speed toward the
//! human's.

use crate::circular::{build_fvmm, classify_modality, KappaMapping, Modality, ModalityParams};
use crate::env::{Action2D, EnvEvents};
use crate::error::Result;
use crate::observation::ArbitrationObservation;

pub const COLLISION_PENALTY: f64 = -10.0;
pub const BOUNDARY_PENALTY: f64 = -2.0;
pub const GOAL_BONUS: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum RewardMode {
    /// `R_agree + R_env`.
    #[default]
    Combined,
    /// `R_env` only.
    EnvOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct RewardParams {
    pub mode: RewardMode,
    pub kappa: KappaMapping,
    pub modality: ModalityParams,
    /// When positive, the direction term is skipped if either compared
    /// action is slower than this (m/s). Zero keeps the default behaviour
    /// where a zero action normalises to the zero vector.
    pub agreement_min_speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardBreakdown {
    pub r_env: f64,
    /// Agreement term, already including `r_speed`.
    pub r_agree: f64,
    pub r_speed: f64,
    pub total: f64,
    pub modality: Modality,
}

/// Environment reward; the goal bonus is paid only for the true goal.
pub fn r_env(events: &EnvEvents, true_goal: usize) -> f64 {
    let mut r = 0.0;
    if events.obstacle_collision {
        r += COLLISION_PENALTY;
    }
    if events.boundary_contact {
        r += BOUNDARY_PENALTY;
    }
    if events.goal_reached == Some(true_goal) {
        r += GOAL_BONUS;
    }
    r
}

/// Returns `(r_agree, r_speed)` where `r_agree` includes `r_speed`.
pub fn r_agree(
    user: Action2D,
    arbitrated: Action2D,
    robot_true_goal: Action2D,
    modality: &Modality,
) -> (f64, f64) {
    r_agree_with(user, arbitrated, robot_true_goal, modality, 0.0)
}

fn r_agree_with(
    user: Action2D,
    arbitrated: Action2D,
    robot_true_goal: Action2D,
    modality: &Modality,
    min_speed: f64,
) -> (f64, f64) {
    let reference = if modality.is_multimodal() {
        user
    } else {
        robot_true_goal
    };
    let skip = min_speed > 0.0 && (reference.norm() < min_speed || arbitrated.norm() < min_speed);
    let base = if skip {
        0.0
    } else {
        -(reference.normalized() - arbitrated.normalized()).norm_sq()
    };
    let r_speed = -(user.norm() - arbitrated.norm()).abs();
    (base + r_speed, r_speed)
}

/// Full reward for one stored transition, labelled with the true goal.
pub fn compute_reward(
    obs: &ArbitrationObservation,
    arbitrated: Action2D,
    events: &EnvEvents,
    true_goal: usize,
    params: &RewardParams,
) -> Result<RewardBreakdown> {
    let sub_actions = obs.sub_actions();
    let built = build_fvmm(&sub_actions, obs.scores(), params.kappa)?;
    let modality = classify_modality(
        &built.mixture,
        params.modality.n_samples,
        params.modality.peak_threshold,
    );
    let env = r_env(events, true_goal);
    let (agree, speed) = match params.mode {
        RewardMode::Combined => r_agree_with(
            obs.user_action(),
            arbitrated,
            obs.sub_action(true_goal),
            &modality,
            params.agreement_min_speed,
        ),
        RewardMode::EnvOnly => (0.0, 0.0),
    };
    Ok(RewardBreakdown {
        r_env: env,
        r_agree: agree,
        r_speed: speed,
        total: env + agree,
        modality,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circular::ModalityClass;
    use crate::math::Vec2;

    fn modality(class: ModalityClass) -> Modality {
        Modality { class, peak: 0.0 }
    }

    #[test]
    fn env_reward_cases() {
        assert_eq!(r_env(&EnvEvents::default(), 0), 0.0);
        let hit = EnvEvents {
            obstacle_collision: true,
            ..Default::default()
        };
        assert_eq!(r_env(&hit, 0), -10.0);
        let both = EnvEvents {
            obstacle_collision: true,
            boundary_contact: true,
            ..Default::default()
        };
        assert_eq!(r_env(&both, 0), -12.0);
        let reached = EnvEvents {
            goal_reached: Some(1),
            terminated: true,
            ..Default::default()
        };
        assert_eq!(r_env(&reached, 1), 10.0);
        assert_eq!(r_env(&reached, 2), 0.0);
    }

    #[test]
    fn agreement_cases() {
        let multi = modality(ModalityClass::Multimodal);
        let uni = modality(ModalityClass::Unimodal);
        let a = Vec2::new(0.1, 0.05);
        assert_eq!(r_agree(a, a, Vec2::new(0.0, 1.0), &multi), (0.0, 0.0));

        let (r, s) = r_agree(Vec2::new(0.2, 0.0), Vec2::new(-0.2, 0.0), Vec2::ZERO, &multi);
        assert_eq!((r, s), (-4.0, 0.0));

        let robot = Vec2::new(0.0, 0.2);
        let (r, s) = r_agree(Vec2::new(0.2, 0.0), Vec2::new(0.0, 0.1), robot, &uni);
        assert!((r + 0.1).abs() < 1e-15 && (s + 0.1).abs() < 1e-15);

        let (r, _) = r_agree(Vec2::new(0.2, 0.0), Vec2::new(0.0, 0.2), robot, &multi);
        assert!((r + 2.0).abs() < 1e-15);
    }

    #[test]
    fn branch_isolation() {
        let multi = modality(ModalityClass::Multimodal);
        let uni = modality(ModalityClass::Unimodal);
        let h = Vec2::new(0.15, 0.05);
        let s = Vec2::new(0.1, 0.1);
        // multimodal ignores the robot reference
        assert_eq!(
            r_agree(h, s, Vec2::new(0.0, 0.2), &multi),
            r_agree(h, s, Vec2::new(-0.2, 0.0), &multi)
        );
        // unimodal sees the human only through the speed term
        let h2 = Vec2::new(-0.05, 0.15);
        let (r1, s1) = r_agree(h, s, Vec2::new(0.0, 0.2), &uni);
        let (r2, s2) = r_agree(h2, s, Vec2::new(0.0, 0.2), &uni);
        assert_eq!(s1, s2);
        assert_eq!(r1, r2);
    }

    #[test]
    fn zero_action_normalises_to_zero() {
        let uni = modality(ModalityClass::Unimodal);
        let (r, s) = r_agree(Vec2::ZERO, Vec2::ZERO, Vec2::new(0.0, 0.2), &uni);
        assert_eq!(s, 0.0);
        assert_eq!(r, -1.0);
        let (r, _) = r_agree_with(Vec2::ZERO, Vec2::ZERO, Vec2::new(0.0, 0.2), &uni, 1e-6);
        assert_eq!(r, 0.0);
    }
}
