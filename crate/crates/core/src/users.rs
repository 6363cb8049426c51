//! Simulated human controllers.

use alloc::format;
use alloc::string::String;
use core::fmt;
use core::str::FromStr;

#[allow(unused_imports)] // inherent float methods shadow it when std is linked
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::env::{Action2D, EnvConfig, WorkspaceState};
use crate::error::{Error, Result};
use crate::math::Vec2;
use crate::subpolicy::{action_toward, subpolicy_action};

pub const DEFAULT_OFFSET_SCALE: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(into = "String", try_from = "String"))]
pub enum UserMode {
    /// Sub-policy action plus per-component Gaussian noise with standard
    /// deviation `sigma · max_speed`.
    Noisy { sigma: f64 },
    /// Full speed straight at the goal, ignoring the obstacle.
    Straight,
    /// Sub-policy toward a goal position shifted by a per-episode offset of
    /// up to `offset_scale · workspace_side`.
    Biased { offset_scale: f64 },
}

impl UserMode {
    pub fn validate(&self) -> Result<()> {
        match *self {
            UserMode::Noisy { sigma } if !(sigma > 0.0 && sigma.is_finite()) => {
                Err(Error::Config(format!("noisy user sigma {sigma} must be positive")))
            }
            UserMode::Biased { offset_scale } if !(offset_scale >= 0.0 && offset_scale.is_finite()) => {
                Err(Error::Config(format!("biased offset scale {offset_scale} must be non-negative")))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for UserMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            UserMode::Noisy { sigma } if (sigma * 10.0).fract() == 0.0 => {
                write!(f, "noisy{sigma:.1}")
            }
            UserMode::Noisy { sigma } => write!(f, "noisy{sigma}"),
            UserMode::Straight => f.write_str("straight"),
            UserMode::Biased { offset_scale } if offset_scale == DEFAULT_OFFSET_SCALE => {
                f.write_str("biased")
            }
            UserMode::Biased { offset_scale } => write!(f, "biased{offset_scale}"),
        }
    }
}

impl FromStr for UserMode {
    type Err = Error;

    /// Accepts `straight`, `noisy<σ>` and `biased` or `biased<scale>`.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let number = |rest: &str| {
            rest.parse::<f64>()
                .map_err(|_| Error::Config(format!("unknown user mode '{s}'")))
        };
        let mode = if lower == "straight" {
            UserMode::Straight
        } else if lower == "biased" {
            UserMode::Biased {
                offset_scale: DEFAULT_OFFSET_SCALE,
            }
        } else if let Some(rest) = lower.strip_prefix("biased") {
            UserMode::Biased {
                offset_scale: number(rest)?,
            }
        } else if let Some(rest) = lower.strip_prefix("noisy") {
            UserMode::Noisy {
                sigma: number(rest)?,
            }
        } else {
            return Err(Error::Config(format!(
                "unknown user mode '{s}' (expected noisy<sigma>, straight or biased)"
            )));
        };
        mode.validate()?;
        Ok(mode)
    }
}

impl From<UserMode> for String {
    fn from(mode: UserMode) -> String {
        format!("{mode}")
    }
}

impl TryFrom<String> for UserMode {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// One episode's simulated operator.
#[derive(Debug, Clone)]
pub struct UserModel {
    mode: UserMode,
    true_goal: usize,
    offset: Vec2,
    rng: ChaCha8Rng,
}

/// Builds the user for one episode; Biased users draw their offset here.
pub fn sample_user(
    mode: UserMode,
    true_goal: usize,
    seed: u64,
    config: &EnvConfig,
) -> Result<UserModel> {
    mode.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offset = match mode {
        UserMode::Biased { offset_scale } => {
            let radius = offset_scale * config.workspace_side;
            // uniform in the disc
            let r = radius * rng.random::<f64>().sqrt();
            let theta = rng.random_range(-core::f64::consts::PI..core::f64::consts::PI);
            Vec2::from_angle(theta) * r
        }
        _ => Vec2::ZERO,
    };
    Ok(UserModel {
        mode,
        true_goal,
        offset,
        rng,
    })
}

impl UserModel {
    pub fn mode(&self) -> UserMode {
        self.mode
    }

    pub fn true_goal(&self) -> usize {
        self.true_goal
    }

    pub fn offset(&self) -> Vec2 {
        self.offset
    }

    pub fn action(&mut self, state: &WorkspaceState, config: &EnvConfig) -> Action2D {
        let goal = state.goal_positions[self.true_goal];
        match self.mode {
            UserMode::Noisy { sigma } => {
                let base = subpolicy_action(state, self.true_goal, config);
                let normal = Normal::new(0.0, sigma * config.max_speed)
                    .expect("sigma validated positive");
                let noise = Vec2::new(normal.sample(&mut self.rng), normal.sample(&mut self.rng));
                (base + noise).clamp_norm(config.max_speed)
            }
            UserMode::Straight => (goal - state.gripper_pos).normalized() * config.max_speed,
            UserMode::Biased { .. } => action_toward(state, goal + self.offset, config),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn scene() -> WorkspaceState {
        WorkspaceState {
            gripper_pos: Vec2::new(0.1, 0.1),
            gripper_vel: Vec2::ZERO,
            gripper_heading: 0.0,
            obstacle_pos: Vec2::new(0.25, 0.35),
            goal_positions: vec![Vec2::new(0.4, 0.1), Vec2::new(0.25, 0.46)],
            step_index: 0,
        }
    }

    #[test]
    fn straight_user_due_east() {
        let config = EnvConfig::default();
        let mut u = sample_user(UserMode::Straight, 0, 1, &config).unwrap();
        assert_eq!(u.action(&scene(), &config), Vec2::new(config.max_speed, 0.0));
    }

    #[test]
    fn tiny_noise_approaches_subpolicy() {
        let config = EnvConfig::default();
        let s = scene();
        let mut u = sample_user(UserMode::Noisy { sigma: 1e-12 }, 1, 3, &config).unwrap();
        let a = u.action(&s, &config);
        assert!(a.distance(subpolicy_action(&s, 1, &config)) < 1e-10);
    }

    #[test]
    fn zero_offset_matches_subpolicy() {
        let config = EnvConfig::default();
        let s = scene();
        let mut u = sample_user(UserMode::Biased { offset_scale: 0.0 }, 1, 3, &config).unwrap();
        assert_eq!(u.offset(), Vec2::ZERO);
        assert_eq!(u.action(&s, &config), subpolicy_action(&s, 1, &config));
    }

    #[test]
    fn offsets_are_seeded_and_bounded() {
        let config = EnvConfig::default();
        let mode = UserMode::Biased {
            offset_scale: DEFAULT_OFFSET_SCALE,
        };
        let a = sample_user(mode, 0, 9, &config).unwrap().offset();
        let b = sample_user(mode, 0, 9, &config).unwrap().offset();
        assert_eq!(a, b);
        for seed in 0..500 {
            let o = sample_user(mode, 0, seed, &config).unwrap().offset();
            assert!(o.norm() <= DEFAULT_OFFSET_SCALE * config.workspace_side);
        }
    }

    #[test]
    fn parse_modes() {
        assert_eq!("noisy0.5".parse::<UserMode>().unwrap(), UserMode::Noisy { sigma: 0.5 });
        assert_eq!("noisy1.0".parse::<UserMode>().unwrap(), UserMode::Noisy { sigma: 1.0 });
        assert_eq!("Straight".parse::<UserMode>().unwrap(), UserMode::Straight);
        assert_eq!(
            "biased".parse::<UserMode>().unwrap(),
            UserMode::Biased {
                offset_scale: DEFAULT_OFFSET_SCALE
            }
        );
        assert!("noisy0".parse::<UserMode>().is_err());
        assert!("wobbly".parse::<UserMode>().is_err());
        for m in ["noisy0.5", "noisy1.0", "straight", "biased"] {
            let parsed: UserMode = m.parse().unwrap();
            assert_eq!(String::from(parsed), m);
        }
    }

    #[test]
    fn noisy_mean_converges_to_subpolicy() {
        let config = EnvConfig::default();
        // close to the goal the sub-policy slows down, so clamping never bites
        let mut s = scene();
        s.gripper_pos = s.goal_positions[0] - Vec2::new(0.006, 0.0);
        let sigma = 0.05;
        let base = subpolicy_action(&s, 0, &config);
        assert!(base.norm() < 0.2 * config.max_speed);
        let mut u = sample_user(UserMode::Noisy { sigma }, 0, 11, &config).unwrap();
        let n = 10_000;
        let sum = (0..n).fold(Vec2::ZERO, |acc, _| acc + u.action(&s, &config));
        let mean = sum * (1.0 / n as f64);
        let se = sigma * config.max_speed / (n as f64).sqrt();
        assert!((mean.x - base.x).abs() < 3.0 * se, "{mean:?} vs {base:?}");
        assert!((mean.y - base.y).abs() < 3.0 * se, "{mean:?} vs {base:?}");
    }
}
