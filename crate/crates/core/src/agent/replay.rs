use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::env::{Action2D, EnvEvents};
use crate::error::{Error, Result};
use crate::observation::ArbitrationObservation;
use crate::reward::{compute_reward, RewardParams};

/// `(s, a^S, r, s', d)`. The reward and the goal it was computed for stay
/// `None` until hindsight labelling; the env events are kept so the label can
/// be recomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: ArbitrationObservation,
    pub action: Action2D,
    pub reward: Option<f64>,
    pub true_goal: Option<usize>,
    pub next_obs: ArbitrationObservation,
    pub done: bool,
    pub events: EnvEvents,
}

/// Transitions of the episode in flight.
#[derive(Debug, Clone, Default)]
pub struct EpisodeBuffer {
    transitions: Vec<Transition>,
}

impl EpisodeBuffer {
    pub fn new() -> Self {
        EpisodeBuffer::default()
    }

    pub fn push(&mut self, transition: Transition) -> Result<()> {
        if transition.reward.is_some() || transition.true_goal.is_some() {
            return Err(Error::State("episode buffer takes unlabelled transitions".into()));
        }
        if self.is_terminated() {
            return Err(Error::State("episode buffer already holds a final transition".into()));
        }
        self.transitions.push(transition);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn is_terminated(&self) -> bool {
        self.transitions.last().is_some_and(|t| t.done)
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }
}

/// Labels every transition with the reward for the now-known true goal and
/// empties the buffer.
pub fn hindsight_label(
    episode: &mut EpisodeBuffer,
    true_goal: usize,
    params: &RewardParams,
) -> Result<Vec<Transition>> {
    if !episode.is_terminated() {
        return Err(Error::State(format!(
            "labelling an episode that has not terminated ({} transitions)",
            episode.len()
        )));
    }
    let mut labelled = core::mem::take(&mut episode.transitions);
    for t in &mut labelled {
        let r = compute_reward(&t.obs, t.action, &t.events, true_goal, params)?;
        t.reward = Some(r.total);
        t.true_goal = Some(true_goal);
    }
    Ok(labelled)
}

/// Ring buffer of labelled transitions; oldest evicted first.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: Vec<Transition>,
    capacity: usize,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be positive".into()));
        }
        Ok(ReplayBuffer {
            items: Vec::new(),
            capacity,
            next: 0,
        })
    }

    pub fn push(&mut self, transition: Transition) -> Result<()> {
        if transition.reward.is_none() || transition.true_goal.is_none() {
            return Err(Error::State("replay buffer rejects unlabelled transitions".into()));
        }
        if self.items.len() < self.capacity {
            self.items.push(transition);
        } else {
            self.items[self.next] = transition;
        }
        self.next = (self.next + 1) % self.capacity;
        Ok(())
    }

    pub fn extend(&mut self, transitions: Vec<Transition>) -> Result<()> {
        transitions.into_iter().try_for_each(|t| self.push(t))
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Stored transitions in storage order (not insertion order once full).
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// Uniform minibatch, drawn with replacement.
    pub fn sample<'a, R: Rng + ?Sized>(&'a self, n: usize, rng: &mut R) -> Vec<&'a Transition> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..n)
            .map(|_| &self.items[rng.random_range(0..self.items.len())])
            .collect()
    }
}
