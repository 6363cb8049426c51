//! One live teleoperation session: the wire protocol and a synchronous state
//! machine advanced one tick at a time. The server owns the clock; tests
//! drive [`Session::tick`] directly.

use std::sync::Arc;

use arbiter_core::agent::Agent;
use arbiter_core::circular::{build_fvmm, classify_modality, ModalityClass};
use arbiter_core::env::{Action2D, EnvEvents};
use arbiter_core::evaluation::{Arbiter, Assistance, EvalSettings};
use arbiter_core::math::Vec2;
use arbiter_core::rollout::{episode_spec, EpisodeSpec, Rollout};
use arbiter_core::users::{sample_user, UserMode, UserModel};
use serde::{Deserialize, Serialize};

/// Where the operator command comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InputSource {
    /// The connected client's latest `input` message.
    Remote,
    Simulated(UserMode),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Start,
    Reset,
    SetMode,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ClientMessage {
    Input {
        #[serde(default)]
        session: Option<String>,
        vx: f64,
        vy: f64,
    },
    Control {
        #[serde(default)]
        session: Option<String>,
        command: Command,
        #[serde(default)]
        mode: Option<Assistance>,
        #[serde(default)]
        goal: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleView {
    pub position: Vec2,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalityView {
    pub class: ModalityClass,
    pub peak: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeView {
    pub index: usize,
    pub steps: usize,
    pub done: bool,
    /// `None` while running, or when no intended goal is known.
    pub success: Option<bool>,
    pub true_goal: Option<usize>,
    pub collisions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFrame {
    pub session: String,
    pub tick: u64,
    pub gripper: Vec2,
    pub heading: f64,
    pub obstacle: ObstacleView,
    pub goals: Vec<Vec2>,
    pub scores: Vec<f64>,
    pub sub_actions: Vec<Action2D>,
    pub user_action: Action2D,
    pub arbitrated_action: Action2D,
    pub modality: ModalityView,
    pub events: EnvEvents,
    pub episode: EpisodeView,
    pub mode: Assistance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ServerMessage {
    /// First message on every connection.
    Hello {
        session: String,
        mode: Assistance,
        tick_hz: f64,
    },
    State(StateFrame),
    Error {
        session: String,
        reason: String,
    },
    /// Acknowledges a control command that produced no new state.
    Ack {
        session: String,
        command: Command,
        mode: Assistance,
    },
}

impl ServerMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages hold only finite numbers")
    }
}

#[derive(Debug, Clone)]
pub struct SessionOptions {
    pub settings: EvalSettings,
    pub seed: u64,
    pub stale_ticks: u64,
    pub assistance: Assistance,
    pub source: InputSource,
}

struct Episode {
    spec: EpisodeSpec,
    true_goal: Option<usize>,
    rollout: Rollout,
    user: Option<UserModel>,
}

pub struct Session {
    id: String,
    options: SessionOptions,
    agent: Option<Arc<Agent>>,
    mode: Assistance,
    tick: u64,
    next_index: usize,
    episode: Option<Episode>,
    latest: Option<(Action2D, u64)>,
    last_user: Action2D,
    last_arbitrated: Action2D,
    last_events: EnvEvents,
}

impl Session {
    /// Fails when shared assistance is requested without an agent.
    pub fn new(id: impl Into<String>, options: SessionOptions, agent: Option<Arc<Agent>>) -> Result<Self, String> {
        if options.assistance == Assistance::Shared && agent.is_none() {
            return Err("shared assistance needs a checkpoint".into());
        }
        if let InputSource::Simulated(mode) = options.source {
            mode.validate().map_err(|e| e.to_string())?;
        }
        Ok(Session {
            id: id.into(),
            mode: options.assistance,
            options,
            agent,
            tick: 0,
            next_index: 0,
            episode: None,
            latest: None,
            last_user: Vec2::ZERO,
            last_arbitrated: Vec2::ZERO,
            last_events: EnvEvents::default(),
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn mode(&self) -> Assistance {
        self.mode
    }

    pub fn tick_count(&self) -> u64 {
        self.tick
    }

    /// An episode exists and has not terminated.
    pub fn is_active(&self) -> bool {
        self.episode.as_ref().is_some_and(|e| !e.rollout.is_done())
    }

    pub fn latest_input(&self) -> Option<(Action2D, u64)> {
        self.latest
    }

    pub fn rollout(&self) -> Option<&Rollout> {
        self.episode.as_ref().map(|e| &e.rollout)
    }

    fn error(&self, reason: impl Into<String>) -> ServerMessage {
        ServerMessage::Error {
            session: self.id.clone(),
            reason: reason.into(),
        }
    }

    /// Parses and applies one text frame.
    pub fn handle_text(&mut self, text: &str) -> Vec<ServerMessage> {
        match serde_json::from_str::<ClientMessage>(text) {
            Ok(msg) => self.handle(msg),
            Err(e) => vec![self.error(format!("malformed message: {e}"))],
        }
    }

    pub fn handle(&mut self, msg: ClientMessage) -> Vec<ServerMessage> {
        let session = match &msg {
            ClientMessage::Input { session, .. } | ClientMessage::Control { session, .. } => session,
        };
        if session.as_ref().is_some_and(|s| *s != self.id) {
            return vec![self.error("message addressed to another session")];
        }
        match msg {
            ClientMessage::Input { vx, vy, .. } => {
                if !(vx.is_finite() && vy.is_finite()) {
                    return vec![self.error("input components must be finite")];
                }
                if self.is_active() {
                    self.latest = Some((Vec2::new(vx, vy), self.tick));
                }
                Vec::new()
            }
            ClientMessage::Control { command, mode, goal, .. } => match command {
                Command::Start => {
                    let spec = episode_spec(self.options.seed, self.next_index, self.options.settings.env.goal_count);
                    match self.begin(spec, goal) {
                        Ok(()) => {
                            self.next_index += 1;
                            vec![ServerMessage::State(self.frame())]
                        }
                        Err(reason) => vec![self.error(reason)],
                    }
                }
                Command::Reset => {
                    let Some(ep) = &self.episode else {
                        return vec![self.error("no episode to reset")];
                    };
                    let (spec, true_goal) = (ep.spec, goal.or(ep.true_goal));
                    match self.begin(spec, true_goal) {
                        Ok(()) => vec![ServerMessage::State(self.frame())],
                        Err(reason) => vec![self.error(reason)],
                    }
                }
                Command::SetMode => {
                    let Some(mode) = mode else {
                        return vec![self.error("set_mode needs a mode")];
                    };
                    if self.is_active() {
                        return vec![self.error("mode can only change between episodes")];
                    }
                    if mode == Assistance::Shared && self.agent.is_none() {
                        return vec![self.error("shared assistance needs a checkpoint")];
                    }
                    self.mode = mode;
                    vec![ServerMessage::Ack {
                        session: self.id.clone(),
                        command,
                        mode,
                    }]
                }
            },
        }
    }

    fn begin(&mut self, spec: EpisodeSpec, goal: Option<usize>) -> Result<(), String> {
        let s = &self.options.settings;
        let g = s.env.goal_count;
        if let Some(goal) = goal.filter(|&goal| goal >= g) {
            return Err(format!("goal {goal} out of range (0..{g})"));
        }
        let rollout = Rollout::start(&s.env, &s.intent, spec.env_seed).map_err(|e| e.to_string())?;
        let (true_goal, user) = match self.options.source {
            InputSource::Remote => (goal, None),
            InputSource::Simulated(mode) => {
                let true_goal = goal.unwrap_or(spec.true_goal);
                let user = sample_user(mode, true_goal, spec.user_seed, &s.env).map_err(|e| e.to_string())?;
                (Some(true_goal), Some(user))
            }
        };
        self.episode = Some(Episode {
            spec,
            true_goal,
            rollout,
            user,
        });
        self.latest = None;
        self.last_user = Vec2::ZERO;
        self.last_arbitrated = Vec2::ZERO;
        self.last_events = EnvEvents::default();
        Ok(())
    }

    /// Remote input still fresh at the current tick, or zero.
    pub fn remote_action(&self) -> Action2D {
        match self.latest {
            Some((a, at)) if self.tick - at <= self.options.stale_ticks => a,
            _ => Vec2::ZERO,
        }
    }

    /// Advances the clock; steps the episode when one is active and returns
    /// the resulting state frame.
    pub fn tick(&mut self) -> Option<Result<ServerMessage, String>> {
        let out = if self.is_active() { Some(self.step()) } else { None };
        self.tick += 1;
        out
    }

    fn step(&mut self) -> Result<ServerMessage, String> {
        let remote = self.remote_action();
        let env = self.options.settings.env.clone();
        let arbiter = match (self.mode, &self.agent) {
            (Assistance::Shared, Some(agent)) => Arbiter::Shared(agent),
            _ => Arbiter::Direct,
        };
        let ep = self.episode.as_mut().expect("step requires an episode");
        let a_h = match &mut ep.user {
            Some(user) => user.action(ep.rollout.state(), &env),
            None => remote,
        };
        let a_s = arbiter.arbitrate(&ep.rollout, a_h).map_err(|e| e.to_string())?;
        let events = ep.rollout.advance(a_s).map_err(|e| e.to_string())?;
        self.last_user = a_h;
        self.last_arbitrated = a_s;
        self.last_events = events;
        Ok(ServerMessage::State(self.frame()))
    }

    fn frame(&self) -> StateFrame {
        let ep = self.episode.as_ref().expect("frame requires an episode");
        let s = &self.options.settings;
        let r = &ep.rollout;
        let state = r.state();
        let scores = r.belief().scores.clone();
        let modality = build_fvmm(r.sub_actions(), &scores, s.kappa)
            .map(|f| classify_modality(&f.mixture, s.modality.n_samples, s.modality.peak_threshold))
            .map(|m| ModalityView {
                class: m.class,
                peak: m.peak,
            })
            .unwrap_or(ModalityView {
                class: ModalityClass::Unimodal,
                peak: 0.0,
            });
        let stats = r.stats();
        let done = r.is_done();
        StateFrame {
            session: self.id.clone(),
            tick: self.tick,
            gripper: state.gripper_pos,
            heading: state.gripper_heading,
            obstacle: ObstacleView {
                position: state.obstacle_pos,
                radius: s.env.obstacle_radius,
            },
            goals: state.goal_positions.clone(),
            scores,
            sub_actions: r.sub_actions().iter().map(|sa| sa.action).collect(),
            user_action: self.last_user,
            arbitrated_action: self.last_arbitrated,
            modality,
            events: self.last_events,
            episode: EpisodeView {
                index: ep.spec.index,
                steps: stats.steps,
                done,
                success: ep.true_goal.filter(|_| done).map(|g| stats.success(g)),
                true_goal: ep.true_goal,
                collisions: stats.collision_steps,
            },
            mode: self.mode,
        }
    }
}
