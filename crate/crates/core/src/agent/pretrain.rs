//! Supervised warm start: the head and then the actor trunk learn to output
//! the sub-policy action of the highest-score goal.

use alloc::format;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent float methods shadow it when std is linked
use num_traits::Float;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{squash, Agent};
use crate::env::{Action2D, EnvConfig};
use crate::error::{Error, Result};
use crate::intent::IntentParams;
use crate::math::{argmax, Vec2};
use crate::nn::{Adam, AdamConfig, DenseNetwork, ForwardTrace, ParamGrads};
use crate::observation::ArbitrationObservation;
use crate::rollout::{episode_spec, mix_seed, Rollout};
use crate::users::{sample_user, UserMode};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct PretrainConfig {
    pub train_samples: usize,
    pub validation_samples: usize,
    /// States whose two best scores are closer than this are not sampled:
    /// the highest-score goal is not well defined there.
    pub min_score_margin: f64,
    /// Keep every n-th visited state.
    pub sample_stride: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Learning rate halves every this many epochs.
    pub lr_half_life: usize,
    pub head_max_epochs: usize,
    pub actor_max_epochs: usize,
    /// Validation mean L2 error bound, as a fraction of `max_speed`.
    pub tolerance: f64,
    /// Stop a stage early once validation error falls below
    /// `early_stop · tolerance`.
    pub early_stop: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            train_samples: 30_000,
            validation_samples: 3_000,
            min_score_margin: 0.05,
            sample_stride: 2,
            batch_size: 64,
            learning_rate: 1e-3,
            lr_half_life: 40,
            head_max_epochs: 300,
            actor_max_epochs: 200,
            tolerance: 0.01,
            early_stop: 0.6,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.train_samples == 0 || self.validation_samples == 0 || self.batch_size == 0 {
            return Err(Error::Config("pretrain: sample and batch counts must be positive".into()));
        }
        if self.sample_stride == 0 || self.lr_half_life == 0 {
            return Err(Error::Config("pretrain: stride and half-life must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.tolerance > 0.0) {
            return Err(Error::Config("pretrain: learning rate and tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// A visited state (user action slot zero) and its supervised target.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub obs: ArbitrationObservation,
    pub target: Action2D,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum PretrainStage {
    Head,
    Actor,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PretrainReport {
    /// Mean L2 error of the head on held-out states, in `max_speed` units.
    pub head_error: f64,
    /// Mean L2 error of the full actor under random user actions.
    pub actor_error: f64,
    /// Mean output variance under random user actions, in `max_speed²`.
    pub user_sensitivity: f64,
    pub head_epochs: usize,
    pub actor_epochs: usize,
    pub train_samples: usize,
    pub validation_samples: usize,
}

#[derive(Clone, Copy)]
enum Driver {
    TrueGoal,
    Predicted,
    User(UserMode),
}

const DRIVERS: [Driver; 5] = [
    Driver::TrueGoal,
    Driver::Predicted,
    Driver::User(UserMode::Straight),
    Driver::User(UserMode::Noisy { sigma: 1.0 }),
    Driver::User(UserMode::Biased { offset_scale: 0.15 }),
];

/// Visits states by rolling out a mix of robot-like and simulated-user
/// drivers, keeping states with an unambiguous highest-score goal.
pub fn sample_scenarios(
    env: &EnvConfig,
    intent: &IntentParams,
    count: usize,
    seed: u64,
    min_margin: f64,
    stride: usize,
) -> Result<Vec<Scenario>> {
    let mut out = Vec::with_capacity(count);
    let mut episode = 0usize;
    while out.len() < count {
        let spec = episode_spec(seed, episode, env.goal_count);
        let driver = DRIVERS[(mix_seed(seed, 11, episode as u64) % DRIVERS.len() as u64) as usize];
        episode += 1;
        let mut rollout = Rollout::start(env, intent, spec.env_seed)?;
        let mut user = match driver {
            Driver::User(mode) => Some(sample_user(mode, spec.true_goal, spec.user_seed, env)?),
            _ => None,
        };
        let mut t = 0usize;
        let mut last_kept: Option<Vec2> = None;
        let min_move = 0.25 * env.max_step_length();
        while !rollout.is_done() && out.len() < count {
            let scores = &rollout.belief().scores;
            let best = argmax(scores);
            let runner_up = scores
                .iter()
                .enumerate()
                .filter(|&(g, _)| g != best)
                .map(|(_, &s)| s)
                .fold(0.0, f64::max);
            let pos = rollout.state().gripper_pos;
            // a gripper pinned against a wall would flood the set with copies
            let moved = last_kept.is_none_or(|p| p.distance(pos) >= min_move);
            if t.is_multiple_of(stride) && moved && scores[best] - runner_up >= min_margin {
                last_kept = Some(pos);
                out.push(Scenario {
                    obs: rollout.observe(Vec2::ZERO)?,
                    target: rollout.sub_actions()[best].action,
                });
            }
            let action = match (driver, user.as_mut()) {
                (Driver::TrueGoal, _) => rollout.sub_actions()[spec.true_goal].action,
                (Driver::Predicted, _) => rollout.predicted_robot_action(),
                (_, Some(u)) => u.action(rollout.state(), env),
                (Driver::User(_), None) => unreachable!("user drivers always build a user"),
            };
            rollout.advance(action)?;
            t += 1;
        }
    }
    Ok(out)
}

fn with_user_action(obs: &ArbitrationObservation, user: Action2D) -> Result<ArbitrationObservation> {
    let mut v = obs.as_slice().to_vec();
    v[0] = user.x;
    v[1] = user.y;
    ArbitrationObservation::from_values(v, obs.goal_count())
}

fn random_in_disc<R: Rng + ?Sized>(rng: &mut R, radius: f64) -> Vec2 {
    let r = radius * rng.random::<f64>().sqrt();
    let theta = rng.random_range(-core::f64::consts::PI..core::f64::consts::PI);
    Vec2::from_angle(theta) * r
}

fn learning_rate(cfg: &PretrainConfig, epoch: usize) -> f64 {
    cfg.learning_rate * 0.5f64.powf(epoch as f64 / cfg.lr_half_life as f64)
}

/// Fits the head, freezes it, then fits the actor trunk. The critic trunk
/// and the targets are left for RL (targets are synchronised to the new
/// actor).
pub fn pretrain(
    agent: &mut Agent,
    env: &EnvConfig,
    intent: &IntentParams,
    cfg: &PretrainConfig,
    seed: u64,
) -> Result<PretrainReport> {
    cfg.validate()?;
    if env.goal_count != agent.goal_count() || env.max_speed != agent.max_speed() {
        return Err(Error::Config("pretrain environment does not match the agent".into()));
    }
    let ms = agent.max_speed();
    let train = sample_scenarios(
        env,
        intent,
        cfg.train_samples,
        mix_seed(seed, 21, 0),
        cfg.min_score_margin,
        cfg.sample_stride,
    )?;
    let valid = sample_scenarios(
        env,
        intent,
        cfg.validation_samples,
        mix_seed(seed, 22, 0),
        cfg.min_score_margin,
        cfg.sample_stride,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 23, 0));

    // Stage 1: head regression.
    let xs: Vec<Vec<f64>> = train.iter().map(|s| agent.head_input(&s.obs)).collect();
    let ys: Vec<Vec2> = train.iter().map(|s| s.target * (1.0 / ms)).collect();
    let mut head = agent.networks().head.clone();
    head.set_frozen(false);
    let head_error_of = |net: &DenseNetwork| -> Result<f64> {
        let mut total = 0.0;
        for s in &valid {
            let h = net.forward(&agent.head_input(&s.obs))?;
            total += Vec2::new(h[0], h[1]).distance(s.target * (1.0 / ms));
        }
        Ok(total / valid.len() as f64)
    };
    let (head_error, head_epochs) = fit(
        &mut head,
        cfg,
        cfg.head_max_epochs,
        &mut rng,
        xs.len(),
        |i, out: &mut Vec<f64>| {
            out.clear();
            out.extend_from_slice(&xs[i]);
            ys[i]
        },
        false,
        &head_error_of,
    )?;
    if head_error >= cfg.tolerance {
        return Err(Error::Pretrain {
            stage: 1,
            validation_error: head_error,
            threshold: cfg.tolerance,
        });
    }
    head.set_frozen(true);
    agent.networks_mut().head = head;

    // Stage 2: actor trunk on [frozen head, random user action].
    let heads: Vec<[f64; 2]> = train
        .iter()
        .map(|s| agent.head_output(&s.obs))
        .collect::<Result<_>>()?;
    let mut probe_rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 24, 0));
    let probes: Vec<Vec2> = (0..valid.len()).map(|_| random_in_disc(&mut probe_rng, ms)).collect();
    let mut actor = agent.networks().actor.clone();
    let probe_agent = agent.clone();
    let actor_error_of = |net: &DenseNetwork| -> Result<f64> {
        let mut total = 0.0;
        for (s, &u) in valid.iter().zip(&probes) {
            let head = probe_agent.head_output(&s.obs)?;
            let a = probe_agent.actor_with(net, head, u)?;
            total += a.distance(s.target) / ms;
        }
        Ok(total / valid.len() as f64)
    };
    let mut user_rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 25, 0));
    let (actor_error, actor_epochs) = fit(
        &mut actor,
        cfg,
        cfg.actor_max_epochs,
        &mut rng,
        heads.len(),
        |i, out: &mut Vec<f64>| {
            let u = random_in_disc(&mut user_rng, 1.0);
            out.clear();
            out.extend_from_slice(&[heads[i][0], heads[i][1], u.x, u.y]);
            ys[i]
        },
        true,
        &actor_error_of,
    )?;
    if actor_error >= cfg.tolerance {
        return Err(Error::Pretrain {
            stage: 2,
            validation_error: actor_error,
            threshold: cfg.tolerance,
        });
    }
    let nets = agent.networks_mut();
    nets.actor_target = actor.clone();
    nets.actor = actor;
    nets.critic_target = nets.critic.clone();
    agent.reset_optimizers();

    let user_sensitivity = user_sensitivity(agent, &valid, 64, mix_seed(seed, 26, 0))?;
    Ok(PretrainReport {
        head_error,
        actor_error,
        user_sensitivity,
        head_epochs,
        actor_epochs,
        train_samples: train.len(),
        validation_samples: valid.len(),
    })
}

/// Mean over states of the total output variance under random user actions,
/// in `max_speed²` units.
pub(crate) fn user_sensitivity(
    agent: &Agent,
    states: &[Scenario],
    draws: usize,
    seed: u64,
) -> Result<f64> {
    let ms = agent.max_speed();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for s in states {
        let outs: Vec<Vec2> = (0..draws)
            .map(|_| {
                let u = random_in_disc(&mut rng, ms);
                agent.actor_forward(&with_user_action(&s.obs, u)?)
            })
            .collect::<Result<_>>()?;
        let mean = outs.iter().fold(Vec2::ZERO, |a, &b| a + b) * (1.0 / draws as f64);
        let var = outs.iter().map(|o| (*o - mean).norm_sq()).sum::<f64>() / draws as f64;
        total += var / (ms * ms);
    }
    Ok(total / states.len() as f64)
}

/// Minibatch MSE regression of a 2-output network. With `squashed` the
/// output passes through the actor's norm clamp before the loss. Returns the
/// final validation error and the number of epochs run.
#[allow(clippy::too_many_arguments)]
fn fit<R: Rng>(
    net: &mut DenseNetwork,
    cfg: &PretrainConfig,
    max_epochs: usize,
    rng: &mut R,
    n: usize,
    mut sample: impl FnMut(usize, &mut Vec<f64>) -> Vec2,
    squashed: bool,
    validate: &dyn Fn(&DenseNetwork) -> Result<f64>,
) -> Result<(f64, usize)> {
    let mut opt = Adam::new(net, AdamConfig::with_learning_rate(cfg.learning_rate));
    let mut grads = ParamGrads::zeros_like(net);
    let mut trace = ForwardTrace::default();
    let mut input = Vec::new();
    let mut ig = Vec::new();
    let mut order: Vec<usize> = (0..n).collect();
    let mut error = validate(net)?;
    let mut epochs = 0;
    for epoch in 0..max_epochs {
        opt.config.learning_rate = learning_rate(cfg, epoch);
        order.shuffle(rng);
        for chunk in order.chunks(cfg.batch_size) {
            grads.fill_zero();
            let scale = 2.0 / chunk.len() as f64;
            for &i in chunk {
                let target = sample(i, &mut input);
                net.forward_trace(&input, &mut trace)?;
                let out = trace.output();
                let up = if squashed {
                    let (a, j) = squash(out);
                    let (dx, dy) = (a.x - target.x, a.y - target.y);
                    [
                        scale * (j[0][0] * dx + j[1][0] * dy),
                        scale * (j[0][1] * dx + j[1][1] * dy),
                    ]
                } else {
                    [scale * (out[0] - target.x), scale * (out[1] - target.y)]
                };
                net.backward_trace(&input, &trace, &up, &mut grads, &mut ig)?;
            }
            opt.step(net, &grads)?;
        }
        epochs = epoch + 1;
        if epochs % 5 == 0 || epochs == max_epochs {
            error = validate(net)?;
            if error < cfg.early_stop * cfg.tolerance {
                break;
            }
        }
    }
    if !error.is_finite() {
        return Err(Error::State(format!("pretraining diverged after {epochs} epochs")));
    }
    Ok((error, epochs))
}
