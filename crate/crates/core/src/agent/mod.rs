//! DDPG arbitration agent.
//!
//! All four networks share one frozen head that maps the observation minus
//! the user action to a two-unit predicted action. The actor trunk sees
//! `[head, a^H]`, the critic trunk `[head, a^H, a^S]`. Inside the networks
//! actions are expressed in units of `max_speed`.

mod pretrain;
mod replay;

pub use pretrain::{
    pretrain, sample_scenarios, PretrainConfig, PretrainReport, PretrainStage, Scenario,
};
pub use replay::{hindsight_label, EpisodeBuffer, ReplayBuffer, Transition};

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent float methods shadow it when std is linked
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::env::Action2D;
use crate::error::{Error, Result};
use crate::math::Vec2;
use crate::nn::{soft_update, Activation, Adam, AdamConfig, DenseNetwork, ForwardTrace, ParamGrads};
use crate::observation::{observation_dim, ArbitrationObservation};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct AgentConfig {
    pub gamma: f64,
    pub tau: f64,
    pub actor_learning_rate: f64,
    pub critic_learning_rate: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    /// Episodes collected before the first update.
    pub warmup_episodes: usize,
    pub episodes: usize,
    /// Exploration std at the first episode, as a fraction of `max_speed`.
    pub noise_start: f64,
    /// Exploration std from the midpoint of training on.
    pub noise_end: f64,
    pub head_hidden: Vec<usize>,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    /// Half-width of the uniform init of the actor and critic output layers.
    pub final_init: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            gamma: 0.95,
            tau: 0.005,
            actor_learning_rate: 1e-4,
            critic_learning_rate: 1e-3,
            batch_size: 64,
            replay_capacity: 100_000,
            warmup_episodes: 10,
            episodes: 300,
            noise_start: 0.3,
            noise_end: 0.05,
            head_hidden: vec![32, 32, 32],
            actor_hidden: vec![16, 16, 16],
            critic_hidden: vec![128, 128],
            final_init: 3e-3,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("agent: {what}")));
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return bad("tau must lie in [0, 1]");
        }
        if !(self.actor_learning_rate > 0.0 && self.critic_learning_rate > 0.0) {
            return bad("learning rates must be positive");
        }
        if self.batch_size == 0 || self.replay_capacity < self.batch_size {
            return bad("batch size must be positive and fit in the replay buffer");
        }
        if !(self.noise_start >= 0.0 && self.noise_end >= 0.0) {
            return bad("noise scales must be non-negative");
        }
        if self.head_hidden.contains(&0) || self.actor_hidden.contains(&0) || self.critic_hidden.contains(&0) {
            return bad("hidden layers must have at least one unit");
        }
        if !(self.final_init > 0.0) {
            return bad("final_init must be positive");
        }
        Ok(())
    }

    /// Exploration std (m/s) for an episode: linear decay over the first
    /// half of training, constant afterwards.
    pub fn noise_scale(&self, episode: usize, max_speed: f64) -> f64 {
        let half = (self.episodes / 2).max(1) as f64;
        let frac = (episode as f64 / half).min(1.0);
        max_speed * (self.noise_start + (self.noise_end - self.noise_start) * frac)
    }
}

/// Head output width.
pub const HEAD_OUTPUT: usize = 2;

/// The five parameter sets of an agent.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentNetworks {
    pub head: DenseNetwork,
    pub actor: DenseNetwork,
    pub critic: DenseNetwork,
    pub actor_target: DenseNetwork,
    pub critic_target: DenseNetwork,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainStats {
    pub critic_loss: f64,
    pub actor_objective: f64,
}

#[derive(Debug, Clone)]
pub struct Agent {
    config: AgentConfig,
    goal_count: usize,
    max_speed: f64,
    nets: AgentNetworks,
    actor_opt: Adam,
    critic_opt: Adam,
}

fn layer_sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut sizes = vec![input];
    sizes.extend_from_slice(hidden);
    sizes.push(output);
    sizes
}

/// `ms · clamp_norm(v, 1)` and the Jacobian of `clamp_norm(v, 1)`.
fn squash(v: &[f64]) -> (Vec2, [[f64; 2]; 2]) {
    let u = Vec2::new(v[0], v[1]);
    let n = u.norm();
    if n <= 1.0 {
        (u, [[1.0, 0.0], [0.0, 1.0]])
    } else {
        let d = u * (1.0 / n);
        let j = [
            [(1.0 - d.x * d.x) / n, -d.x * d.y / n],
            [-d.x * d.y / n, (1.0 - d.y * d.y) / n],
        ];
        (d, j)
    }
}

impl Agent {
    /// Randomly initialised agent; the head is frozen from the start and is
    /// meant to be fitted by [`pretrain`] before RL.
    pub fn new(config: AgentConfig, goal_count: usize, max_speed: f64, seed: u64) -> Result<Self> {
        config.validate()?;
        if goal_count == 0 || !(max_speed > 0.0) {
            return Err(Error::Config("agent needs goals and a positive max speed".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let head_in = observation_dim(goal_count) - 2;
        let mut head = DenseNetwork::mlp(
            &layer_sizes(head_in, &config.head_hidden, HEAD_OUTPUT),
            Activation::Relu,
            Activation::Identity,
            1.0 / (*config.head_hidden.last().unwrap_or(&head_in) as f64).sqrt(),
            &mut rng,
        )?;
        head.set_frozen(true);
        let actor = DenseNetwork::mlp(
            &layer_sizes(HEAD_OUTPUT + 2, &config.actor_hidden, 2),
            Activation::Relu,
            Activation::Tanh,
            config.final_init,
            &mut rng,
        )?;
        let critic = DenseNetwork::mlp(
            &layer_sizes(HEAD_OUTPUT + 4, &config.critic_hidden, 1),
            Activation::Relu,
            Activation::Identity,
            config.final_init,
            &mut rng,
        )?;
        let nets = AgentNetworks {
            head,
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor,
            critic,
        };
        Agent::from_networks(config, goal_count, max_speed, nets)
    }

    /// Reassembles an agent, e.g. from a checkpoint. Optimiser state starts
    /// fresh.
    pub fn from_networks(
        config: AgentConfig,
        goal_count: usize,
        max_speed: f64,
        mut nets: AgentNetworks,
    ) -> Result<Self> {
        config.validate()?;
        let head_in = observation_dim(goal_count) - 2;
        let shape_err = |what: &str| Err(Error::Input(format!("{what} has the wrong shape")));
        if nets.head.input_dim() != head_in || nets.head.output_dim() != HEAD_OUTPUT {
            return shape_err("head");
        }
        if nets.actor.input_dim() != HEAD_OUTPUT + 2 || nets.actor.output_dim() != 2 {
            return shape_err("actor");
        }
        if nets.critic.input_dim() != HEAD_OUTPUT + 4 || nets.critic.output_dim() != 1 {
            return shape_err("critic");
        }
        if !nets.actor_target.same_shape(&nets.actor) || !nets.critic_target.same_shape(&nets.critic)
        {
            return shape_err("target network");
        }
        let hidden = |net: &DenseNetwork| -> Vec<usize> {
            let layers = net.layers();
            layers[..layers.len() - 1].iter().map(|l| l.outputs).collect()
        };
        if hidden(&nets.head) != config.head_hidden {
            return shape_err("head");
        }
        if hidden(&nets.actor) != config.actor_hidden {
            return shape_err("actor");
        }
        if hidden(&nets.critic) != config.critic_hidden {
            return shape_err("critic");
        }
        nets.head.set_frozen(true);
        let actor_opt = Adam::new(&nets.actor, AdamConfig::with_learning_rate(config.actor_learning_rate));
        let critic_opt =
            Adam::new(&nets.critic, AdamConfig::with_learning_rate(config.critic_learning_rate));
        Ok(Agent {
            config,
            goal_count,
            max_speed,
            nets,
            actor_opt,
            critic_opt,
        })
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn goal_count(&self) -> usize {
        self.goal_count
    }

    pub fn max_speed(&self) -> f64 {
        self.max_speed
    }

    pub fn networks(&self) -> &AgentNetworks {
        &self.nets
    }

    pub(crate) fn networks_mut(&mut self) -> &mut AgentNetworks {
        &mut self.nets
    }

    /// Changes learning rates and resets optimiser moments.
    pub fn reset_optimizers(&mut self) {
        self.actor_opt = Adam::new(
            &self.nets.actor,
            AdamConfig::with_learning_rate(self.config.actor_learning_rate),
        );
        self.critic_opt = Adam::new(
            &self.nets.critic,
            AdamConfig::with_learning_rate(self.config.critic_learning_rate),
        );
    }

    fn check_obs(&self, obs: &ArbitrationObservation) -> Result<()> {
        if obs.goal_count() != self.goal_count {
            return Err(Error::Input(format!(
                "observation for {} goals given to a {}-goal agent",
                obs.goal_count(),
                self.goal_count
            )));
        }
        Ok(())
    }

    /// Head input: the observation without `a^H`, with the sub-policy
    /// actions rescaled to `max_speed` units.
    pub fn head_input(&self, obs: &ArbitrationObservation) -> Vec<f64> {
        let mut x = obs.without_user_action().to_vec();
        let inv = 1.0 / self.max_speed;
        x[..2 * self.goal_count].iter_mut().for_each(|v| *v *= inv);
        x
    }

    /// Head output in `max_speed` units.
    pub fn head_output(&self, obs: &ArbitrationObservation) -> Result<[f64; 2]> {
        self.check_obs(obs)?;
        let h = self.nets.head.forward(&self.head_input(obs))?;
        Ok([h[0], h[1]])
    }

    /// Head output as an action in m/s.
    pub fn head_action(&self, obs: &ArbitrationObservation) -> Result<Action2D> {
        let h = self.head_output(obs)?;
        Ok(Vec2::new(h[0], h[1]) * self.max_speed)
    }

    fn actor_input(&self, head: [f64; 2], user: Action2D) -> [f64; 4] {
        let inv = 1.0 / self.max_speed;
        [head[0], head[1], user.x * inv, user.y * inv]
    }

    fn critic_input(&self, head: [f64; 2], user: Action2D, action_units: Vec2) -> [f64; 6] {
        let inv = 1.0 / self.max_speed;
        [
            head[0],
            head[1],
            user.x * inv,
            user.y * inv,
            action_units.x,
            action_units.y,
        ]
    }

    fn actor_with(&self, net: &DenseNetwork, head: [f64; 2], user: Action2D) -> Result<Action2D> {
        let v = net.forward(&self.actor_input(head, user))?;
        Ok(squash(&v).0 * self.max_speed)
    }

    /// Deterministic arbitrated action `μ(s)`; its norm never exceeds
    /// `max_speed`.
    pub fn actor_forward(&self, obs: &ArbitrationObservation) -> Result<Action2D> {
        let head = self.head_output(obs)?;
        self.actor_with(&self.nets.actor, head, obs.user_action())
    }

    /// `μ(s)` plus Gaussian noise of std `sigma` (m/s) per component,
    /// clamped to `max_speed`.
    pub fn select_action<R: Rng + ?Sized>(
        &self,
        obs: &ArbitrationObservation,
        sigma: f64,
        rng: &mut R,
    ) -> Result<Action2D> {
        let a = self.actor_forward(obs)?;
        if sigma <= 0.0 {
            return Ok(a);
        }
        let normal = Normal::new(0.0, sigma)
            .map_err(|e| Error::Input(format!("noise scale {sigma}: {e}")))?;
        let noisy = a + Vec2::new(normal.sample(rng), normal.sample(rng));
        Ok(noisy.clamp_norm(self.max_speed))
    }

    fn critic_with(
        &self,
        net: &DenseNetwork,
        head: [f64; 2],
        user: Action2D,
        action: Action2D,
    ) -> Result<f64> {
        let units = action * (1.0 / self.max_speed);
        Ok(net.forward(&self.critic_input(head, user, units))?[0])
    }

    pub fn critic_forward(&self, obs: &ArbitrationObservation, action: Action2D) -> Result<f64> {
        let head = self.head_output(obs)?;
        self.critic_with(&self.nets.critic, head, obs.user_action(), action)
    }

    /// `∂Q/∂a^S` with `a^S` in m/s.
    pub fn critic_action_gradient(
        &self,
        obs: &ArbitrationObservation,
        action: Action2D,
    ) -> Result<Vec2> {
        let head = self.head_output(obs)?;
        let input = self.critic_input(head, obs.user_action(), action * (1.0 / self.max_speed));
        let mut trace = ForwardTrace::default();
        self.nets.critic.forward_trace(&input, &mut trace)?;
        let mut g = Vec::new();
        self.nets.critic.input_gradient(&input, &trace, &[1.0], &mut g)?;
        Ok(Vec2::new(g[4], g[5]) * (1.0 / self.max_speed))
    }

    /// One DDPG update on a labelled minibatch: critic regression to
    /// `r + γ(1-d) Q'(s', μ'(s'))`, actor ascent on `Q(s, μ(s))`, then soft
    /// target updates.
    pub fn train_step(&mut self, batch: &[&Transition]) -> Result<TrainStats> {
        if batch.is_empty() {
            return Err(Error::Input("empty minibatch".into()));
        }
        let n = batch.len() as f64;
        let gamma = self.config.gamma;

        let mut heads = Vec::with_capacity(batch.len());
        let mut targets = Vec::with_capacity(batch.len());
        for t in batch {
            let r = t
                .reward
                .ok_or_else(|| Error::State("unlabelled transition in minibatch".into()))?;
            let head = self.head_output(&t.obs)?;
            heads.push(head);
            let y = if t.done || gamma == 0.0 {
                r
            } else {
                let next_head = self.head_output(&t.next_obs)?;
                let user = t.next_obs.user_action();
                let a_next = self.actor_with(&self.nets.actor_target, next_head, user)?;
                r + gamma * self.critic_with(&self.nets.critic_target, next_head, user, a_next)?
            };
            targets.push(y);
        }

        let mut trace = ForwardTrace::default();
        let mut input_grad = Vec::new();
        let mut critic_grads = ParamGrads::zeros_like(&self.nets.critic);
        let mut loss = 0.0;
        for ((t, head), y) in batch.iter().zip(&heads).zip(&targets) {
            let units = t.action * (1.0 / self.max_speed);
            let input = self.critic_input(*head, t.obs.user_action(), units);
            self.nets.critic.forward_trace(&input, &mut trace)?;
            let diff = trace.output()[0] - y;
            loss += diff * diff;
            self.nets.critic.backward_trace(
                &input,
                &trace,
                &[2.0 * diff / n],
                &mut critic_grads,
                &mut input_grad,
            )?;
        }
        self.critic_opt.step(&mut self.nets.critic, &critic_grads)?;

        let mut actor_trace = ForwardTrace::default();
        let mut actor_grads = ParamGrads::zeros_like(&self.nets.actor);
        let mut objective = 0.0;
        for (t, head) in batch.iter().zip(&heads) {
            let user = t.obs.user_action();
            let actor_in = self.actor_input(*head, user);
            self.nets.actor.forward_trace(&actor_in, &mut actor_trace)?;
            let (units, jac) = squash(actor_trace.output());
            let critic_in = self.critic_input(*head, user, units);
            self.nets.critic.forward_trace(&critic_in, &mut trace)?;
            objective += trace.output()[0];
            self.nets
                .critic
                .input_gradient(&critic_in, &trace, &[1.0], &mut input_grad)?;
            let (gx, gy) = (input_grad[4], input_grad[5]);
            // ascend Q: descend -Q / n
            let up = [
                -(jac[0][0] * gx + jac[1][0] * gy) / n,
                -(jac[0][1] * gx + jac[1][1] * gy) / n,
            ];
            self.nets.actor.backward_trace(
                &actor_in,
                &actor_trace,
                &up,
                &mut actor_grads,
                &mut input_grad,
            )?;
        }
        self.actor_opt.step(&mut self.nets.actor, &actor_grads)?;

        let tau = self.config.tau;
        soft_update(&mut self.nets.critic_target, &self.nets.critic, tau)?;
        soft_update(&mut self.nets.actor_target, &self.nets.actor, tau)?;

        Ok(TrainStats {
            critic_loss: loss / n,
            actor_objective: objective / n,
        })
    }
}
