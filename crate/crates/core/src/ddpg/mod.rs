//! Deep deterministic policy gradient agent that picks one preserved ratio
//! per prunable layer.
//!
//! The critic target is undiscounted and baseline-corrected:
//! `y = r − b + Q'(s', μ'(s'))`, with the bootstrap term dropped on the last
//! layer of an episode. `b` is an exponential moving average of batch-mean
//! rewards.

mod adam;
mod explore;
mod mlp;
mod replay;
mod search;

pub use adam::Adam;
pub use explore::{explore_action, truncated_normal};
pub use mlp::{ForwardCache, MlpParams, OutputActivation};
pub use replay::{ReplayBuffer, Transition};
pub use search::{run_search, EpisodeRecord, SearchError, SearchFailure, SearchResult, TraceRow, Trainer};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netgraph::STATE_DIM;

#[derive(Debug, Error, PartialEq)]
pub enum AgentError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("network input has {found} components, expected {expected}")]
    InputDim { expected: usize, found: usize },
    #[error("parameter shapes differ")]
    ShapeMismatch,
    #[error("tau {0} outside (0, 1]")]
    InvalidTau(f64),
    #[error("empty batch")]
    EmptyBatch,
}

/// Agent and training-loop hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DdpgConfig {
    pub episodes: usize,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub tau: f64,
    pub sigma_init: f64,
    pub sigma_decay: f64,
    pub sigma_min: f64,
    pub baseline_decay: f64,
    pub hidden: usize,
    pub action_floor: f64,
}

impl Default for DdpgConfig {
    fn default() -> Self {
        Self {
            episodes: 1100,
            buffer_capacity: 2000,
            batch_size: 64,
            lr_actor: 1e-3,
            lr_critic: 1e-4,
            tau: 0.01,
            sigma_init: 0.5,
            sigma_decay: 0.99,
            sigma_min: 0.05,
            baseline_decay: 0.95,
            hidden: 300,
            action_floor: 0.001,
        }
    }
}

impl DdpgConfig {
    /// Stored transitions needed before the first update: two thirds of
    /// the buffer.
    pub fn warmup(&self) -> usize {
        (2 * self.buffer_capacity / 3).max(1)
    }
}

/// θ' ← τ·θ + (1 − τ)·θ'
pub fn soft_update(online: &MlpParams, target: &mut MlpParams, tau: f64) -> Result<(), AgentError> {
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(AgentError::InvalidTau(tau));
    }
    if !online.same_shape(target) {
        return Err(AgentError::ShapeMismatch);
    }
    for (t, &o) in target.params_mut().iter_mut().zip(online.params()) {
        *t = tau * o + (1.0 - tau) * *t;
    }
    Ok(())
}

fn critic_input(state: &[f64], action: f64) -> Vec<f64> {
    let mut x = Vec::with_capacity(state.len() + 1);
    x.extend_from_slice(state);
    x.push(action);
    x
}

/// Q(s, a).
pub fn critic_forward(critic: &MlpParams, state: &[f64], action: f64) -> Result<f64, AgentError> {
    critic.forward(&critic_input(state, action))
}

/// μ(s).
pub fn actor_forward(actor: &MlpParams, state: &[f64]) -> Result<f64, AgentError> {
    actor.forward(state)
}

/// ∂μ(s)/∂s.
pub fn actor_input_gradient(actor: &MlpParams, state: &[f64]) -> Result<Vec<f64>, AgentError> {
    let mut cache = ForwardCache::default();
    actor.forward_cached(state, &mut cache)?;
    let mut dx = vec![0.0; state.len()];
    actor.backward(&cache, 1.0, None, Some(&mut dx));
    Ok(dx)
}

/// One sample of a critic regression batch.
#[derive(Debug, Clone, Copy)]
pub struct CriticSample<'a> {
    pub state: &'a [f64],
    pub action: f64,
    pub target: f64,
}

/// J(θ^Q) = (1/N) Σ (y − Q(s, a))², with its parameter gradient added to
/// `grad` when given.
pub fn critic_loss(
    critic: &MlpParams,
    batch: &[CriticSample<'_>],
    mut grad: Option<&mut [f64]>,
) -> Result<f64, AgentError> {
    if batch.is_empty() {
        return Err(AgentError::EmptyBatch);
    }
    let n = batch.len() as f64;
    let mut cache = ForwardCache::default();
    let mut loss = 0.0;
    for s in batch {
        let q = critic.forward_cached(&critic_input(s.state, s.action), &mut cache)?;
        let err = s.target - q;
        loss += err * err / n;
        if let Some(g) = grad.as_deref_mut() {
            critic.backward(&cache, -2.0 * err / n, Some(g), None);
        }
    }
    if !loss.is_finite() {
        return Err(AgentError::NonFinite("critic loss"));
    }
    Ok(loss)
}

/// J(θ^μ) = −(1/N) Σ Q(s, μ(s)), with its actor-parameter gradient added to
/// `grad` when given.
pub fn actor_loss(
    actor: &MlpParams,
    critic: &MlpParams,
    states: &[&[f64]],
    mut grad: Option<&mut [f64]>,
) -> Result<f64, AgentError> {
    if states.is_empty() {
        return Err(AgentError::EmptyBatch);
    }
    let n = states.len() as f64;
    let mut a_cache = ForwardCache::default();
    let mut q_cache = ForwardCache::default();
    let mut dx = vec![0.0; critic.input_dim()];
    let mut loss = 0.0;
    for s in states {
        let a = actor.forward_cached(s, &mut a_cache)?;
        let q = critic.forward_cached(&critic_input(s, a), &mut q_cache)?;
        loss -= q / n;
        if let Some(g) = grad.as_deref_mut() {
            critic.backward(&q_cache, 1.0, None, Some(&mut dx));
            let dq_da = dx[dx.len() - 1];
            actor.backward(&a_cache, -dq_da / n, Some(g), None);
        }
    }
    if !loss.is_finite() {
        return Err(AgentError::NonFinite("actor loss"));
    }
    Ok(loss)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub baseline: f64,
}

/// Online and target networks, their optimizers and the reward baseline.
#[derive(Debug, Clone)]
pub struct Agent {
    pub actor: MlpParams,
    pub critic: MlpParams,
    pub actor_target: MlpParams,
    pub critic_target: MlpParams,
    actor_opt: Adam,
    critic_opt: Adam,
    baseline: Option<f64>,
    baseline_decay: f64,
    tau: f64,
    updates: u64,
}

impl Agent {
    pub fn new<R: Rng + ?Sized>(config: &DdpgConfig, rng: &mut R) -> Self {
        let h = config.hidden;
        let actor = MlpParams::random(&[STATE_DIM, h, h, 1], OutputActivation::Sigmoid, rng);
        let critic = MlpParams::random(&[STATE_DIM + 1, h, h, 1], OutputActivation::Linear, rng);
        Self::from_networks(actor, critic, config)
    }

    pub fn from_networks(actor: MlpParams, critic: MlpParams, config: &DdpgConfig) -> Self {
        Self {
            actor_opt: Adam::new(config.lr_actor, actor.num_params()),
            critic_opt: Adam::new(config.lr_critic, critic.num_params()),
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor,
            critic,
            baseline: None,
            baseline_decay: config.baseline_decay,
            tau: config.tau,
            updates: 0,
        }
    }

    pub fn act(&self, state: &[f64]) -> Result<f64, AgentError> {
        actor_forward(&self.actor, state)
    }

    pub fn baseline(&self) -> Option<f64> {
        self.baseline
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// Critic targets for a batch using the target networks and baseline `b`.
    pub fn targets(&self, batch: &[&Transition], b: f64) -> Result<Vec<f64>, AgentError> {
        batch
            .iter()
            .map(|t| {
                let boot = if t.terminal {
                    0.0
                } else {
                    let a = actor_forward(&self.actor_target, t.next_state.as_slice())?;
                    critic_forward(&self.critic_target, t.next_state.as_slice(), a)?
                };
                Ok(t.reward - b + boot)
            })
            .collect()
    }

    /// One critic step, one actor step (against the updated critic), then
    /// the baseline update. Target networks are left to [`Agent::soft_update_targets`].
    pub fn update_networks(&mut self, batch: &[&Transition]) -> Result<UpdateStats, AgentError> {
        if batch.is_empty() {
            return Err(AgentError::EmptyBatch);
        }
        let mean_r = batch.iter().map(|t| t.reward).sum::<f64>() / batch.len() as f64;
        let b = *self.baseline.get_or_insert(mean_r);
        let targets = self.targets(batch, b)?;
        let samples: Vec<CriticSample<'_>> = batch
            .iter()
            .zip(&targets)
            .map(|(t, &y)| CriticSample {
                state: t.state.as_slice(),
                action: t.action,
                target: y,
            })
            .collect();

        let mut g_critic = vec![0.0; self.critic.num_params()];
        let critic_loss = critic_loss(&self.critic, &samples, Some(&mut g_critic))?;
        self.critic_opt.step(self.critic.params_mut(), &g_critic);

        let states: Vec<&[f64]> = batch.iter().map(|t| t.state.as_slice()).collect();
        let mut g_actor = vec![0.0; self.actor.num_params()];
        let actor_loss = actor_loss(&self.actor, &self.critic, &states, Some(&mut g_actor))?;
        self.actor_opt.step(self.actor.params_mut(), &g_actor);

        let d = self.baseline_decay;
        let b = d * b + (1.0 - d) * mean_r;
        self.baseline = Some(b);
        self.updates += 1;
        Ok(UpdateStats {
            critic_loss,
            actor_loss,
            baseline: b,
        })
    }

    pub fn soft_update_targets(&mut self) -> Result<(), AgentError> {
        soft_update(&self.actor, &mut self.actor_target, self.tau)?;
        soft_update(&self.critic, &mut self.critic_target, self.tau)
    }
}
