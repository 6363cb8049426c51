//! The outer training loop: simulated user in the loop, hindsight labelling
//! at episode end, minibatch updates after the warmup episodes.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::agent::{hindsight_label, Agent, AgentConfig, EpisodeBuffer, ReplayBuffer, Transition};
use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::intent::IntentParams;
use crate::reward::{compute_reward, RewardParams};
use crate::rollout::{episode_spec, mix_seed, Rollout};
use crate::users::{sample_user, UserMode};

const STREAM_NOISE: u64 = 31;
const STREAM_BATCH: u64 = 32;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainingConfig {
    pub env: EnvConfig,
    pub intent: IntentParams,
    pub reward: RewardParams,
    pub agent: AgentConfig,
    pub user: UserMode,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            env: EnvConfig::default(),
            intent: IntentParams::default(),
            reward: RewardParams::default(),
            agent: AgentConfig::default(),
            user: UserMode::Straight,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.agent.validate()?;
        self.user.validate()
    }
}

/// One row of the training metrics stream.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpisodeMetrics {
    pub episode: usize,
    pub true_goal: usize,
    pub reached: Option<usize>,
    pub success: bool,
    pub steps: usize,
    /// Sum of the hindsight rewards.
    pub return_total: f64,
    pub return_env: f64,
    /// Steps spent inside the obstacle.
    pub collisions: usize,
    pub boundary_contacts: usize,
    pub travel_cm: f64,
    pub mean_l2_human: f64,
    pub mean_l2_robot: f64,
    pub noise: f64,
    pub updates: usize,
    pub mean_critic_loss: Option<f64>,
    pub mean_actor_objective: Option<f64>,
}

/// Stateful training run; one call to [`Trainer::run_episode`] per episode.
#[derive(Debug, Clone)]
pub struct Trainer {
    agent: Agent,
    config: TrainingConfig,
    seed: u64,
    episode: usize,
    replay: ReplayBuffer,
    pending: EpisodeBuffer,
    noise_rng: ChaCha8Rng,
    batch_rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(agent: Agent, config: TrainingConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        if agent.goal_count() != config.env.goal_count || agent.max_speed() != config.env.max_speed {
            return Err(Error::Config("agent does not match the environment".into()));
        }
        let replay = ReplayBuffer::new(config.agent.replay_capacity)?;
        // the run uses the trainer config's hyperparameters
        let nets = agent.networks().clone();
        let agent = Agent::from_networks(config.agent.clone(), agent.goal_count(), agent.max_speed(), nets)?;
        Ok(Trainer {
            agent,
            config,
            seed,
            episode: 0,
            replay,
            pending: EpisodeBuffer::new(),
            noise_rng: ChaCha8Rng::seed_from_u64(mix_seed(seed, STREAM_NOISE, 0)),
            batch_rng: ChaCha8Rng::seed_from_u64(mix_seed(seed, STREAM_BATCH, 0)),
        })
    }

    pub fn agent(&self) -> &Agent {
        &self.agent
    }

    pub fn into_agent(self) -> Agent {
        self.agent
    }

    pub fn replay(&self) -> &ReplayBuffer {
        &self.replay
    }

    /// Transitions of the episode in flight; empty between episodes.
    pub fn pending(&self) -> &EpisodeBuffer {
        &self.pending
    }

    pub fn episodes_done(&self) -> usize {
        self.episode
    }

    pub fn config(&self) -> &TrainingConfig {
        &self.config
    }

    pub fn run_episode(&mut self) -> Result<EpisodeMetrics> {
        let cfg = &self.config;
        let env = &cfg.env;
        let ep = self.episode;
        let spec = episode_spec(self.seed, ep, env.goal_count);
        let mut rollout = Rollout::start(env, &cfg.intent, spec.env_seed)?;
        let mut user = sample_user(cfg.user, spec.true_goal, spec.user_seed, env)?;
        let sigma = cfg.agent.noise_scale(ep, env.max_speed);
        let learning = ep >= cfg.agent.warmup_episodes;

        let mut a_h = user.action(rollout.state(), env);
        let mut obs = rollout.observe(a_h)?;
        let (mut l2_h, mut l2_r) = (0.0, 0.0);
        let (mut loss, mut objective, mut updates) = (0.0, 0.0, 0usize);
        loop {
            let a_s = self.agent.select_action(&obs, sigma, &mut self.noise_rng)?;
            l2_h += (a_h - a_s).norm();
            l2_r += (rollout.predicted_robot_action() - a_s).norm();
            let events = rollout.advance(a_s)?;
            let done = rollout.is_done();
            let next_a_h = user.action(rollout.state(), env);
            let next_obs = rollout.observe(next_a_h)?;
            self.pending.push(Transition {
                obs,
                action: a_s,
                reward: None,
                true_goal: None,
                next_obs: next_obs.clone(),
                done,
                events,
            })?;
            if learning && self.replay.len() >= cfg.agent.batch_size {
                let batch = self.replay.sample(cfg.agent.batch_size, &mut self.batch_rng);
                let stats = self.agent.train_step(&batch)?;
                loss += stats.critic_loss;
                objective += stats.actor_objective;
                updates += 1;
            }
            if done {
                break;
            }
            obs = next_obs;
            a_h = next_a_h;
        }

        let labelled = hindsight_label(&mut self.pending, spec.true_goal, &cfg.reward)?;
        let mut return_total = 0.0;
        let mut return_env = 0.0;
        for t in &labelled {
            return_total += t.reward.unwrap_or(0.0);
            return_env += crate::reward::r_env(&t.events, spec.true_goal);
        }
        self.replay.extend(labelled)?;
        self.episode += 1;

        let stats = rollout.stats();
        let steps = stats.steps.max(1) as f64;
        Ok(EpisodeMetrics {
            episode: ep,
            true_goal: spec.true_goal,
            reached: stats.reached,
            success: stats.success(spec.true_goal),
            steps: stats.steps,
            return_total,
            return_env,
            collisions: stats.collision_steps,
            boundary_contacts: stats.boundary_steps,
            travel_cm: stats.travel_cm(),
            mean_l2_human: l2_h / steps,
            mean_l2_robot: l2_r / steps,
            noise: sigma,
            updates,
            mean_critic_loss: (updates > 0).then(|| loss / updates as f64),
            mean_actor_objective: (updates > 0).then(|| objective / updates as f64),
        })
    }
}

/// Runs `config.agent.episodes` episodes, calling `on_episode` after each.
pub fn run_training(
    agent: Agent,
    config: TrainingConfig,
    seed: u64,
    mut on_episode: impl FnMut(&EpisodeMetrics, &Agent) -> Result<()>,
) -> Result<(Agent, Vec<EpisodeMetrics>)> {
    let episodes = config.agent.episodes;
    let mut trainer = Trainer::new(agent, config, seed)?;
    let mut metrics = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let m = trainer.run_episode()?;
        on_episode(&m, trainer.agent())?;
        metrics.push(m);
    }
    Ok((trainer.into_agent(), metrics))
}

/// Re-derives a labelled transition's reward from its stored fields.
pub fn relabel(t: &Transition, params: &RewardParams) -> Result<f64> {
    let goal = t
        .true_goal
        .ok_or_else(|| Error::State("transition has not been labelled".into()))?;
    Ok(compute_reward(&t.obs, t.action, &t.events, goal, params)?.total)
}

/// Success rate over the last `window` episodes.
pub fn trailing_success(metrics: &[EpisodeMetrics], window: usize) -> f64 {
    let tail = &metrics[metrics.len().saturating_sub(window)..];
    if tail.is_empty() {
        return 0.0;
    }
    tail.iter().filter(|m| m.success).count() as f64 / tail.len() as f64
}
