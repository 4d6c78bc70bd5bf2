use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{explore_action, Agent, AgentError, DdpgConfig, ReplayBuffer, Transition};
use crate::env::{EnvError, EpisodeOutcome, Environment};
use crate::netgraph::StateVector;

/// One line of the episode trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub episode: usize,
    pub reward: f64,
    pub kappa: f64,
    pub nu: f64,
    pub rho: f64,
    pub sigma: f64,
    pub best_so_far: f64,
}

#[derive(Debug, Error)]
pub enum SearchFailure {
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Agent(#[from] AgentError),
}

#[derive(Debug, Error)]
#[error("search aborted in episode {episode}: {cause}")]
pub struct SearchError {
    pub episode: usize,
    pub cause: SearchFailure,
    /// Trace of the episodes completed before the failure.
    pub partial: Vec<TraceRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub actions: Vec<f64>,
    pub outcome: EpisodeOutcome,
    /// Gradient updates performed while storing this episode.
    pub updates: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub best_actions: Vec<f64>,
    pub best_reward: f64,
    pub best_outcome: Option<EpisodeOutcome>,
    pub trace: Vec<TraceRow>,
    pub total_updates: u64,
}

/// Training loop state: agent, replay buffer, exploration noise and the
/// best episode seen so far.
pub struct Trainer {
    config: DdpgConfig,
    agent: Agent,
    buffer: ReplayBuffer,
    rng: ChaCha8Rng,
    sigma: f64,
    episode: usize,
    best_reward: f64,
    best_actions: Vec<f64>,
    best_outcome: Option<EpisodeOutcome>,
    trace: Vec<TraceRow>,
}

impl Trainer {
    pub fn new(config: DdpgConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let agent = Agent::new(&config, &mut rng);
        Self::with_agent(config, agent, rng)
    }

    pub fn with_agent(config: DdpgConfig, agent: Agent, rng: ChaCha8Rng) -> Self {
        Self {
            buffer: ReplayBuffer::new(config.buffer_capacity),
            sigma: config.sigma_init,
            agent,
            rng,
            episode: 0,
            best_reward: 0.0,
            best_actions: Vec::new(),
            best_outcome: None,
            trace: Vec::new(),
            config,
        }
    }

    pub fn agent(&self) -> &Agent {
        &self.agent
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn trace(&self) -> &[TraceRow] {
        &self.trace
    }

    pub fn best(&self) -> (f64, &[f64]) {
        (self.best_reward, &self.best_actions)
    }

    pub fn warmed_up(&self) -> bool {
        self.buffer.len() >= self.config.warmup()
    }

    /// Rolls out one episode, scores it, stores its transitions (updating
    /// the agent once per stored transition after warm-up) and tracks the
    /// best episode.
    pub fn run_episode(&mut self, env: &mut dyn Environment) -> Result<EpisodeRecord, SearchFailure> {
        let layers = env.max_layer();
        let mut actions = Vec::with_capacity(layers);
        let mut states: Vec<StateVector> = Vec::with_capacity(layers);
        let sigma = self.sigma;
        for t in 0..layers {
            let s = env.observe(t, &actions)?;
            let mean = self.agent.act(s.as_slice())?;
            actions.push(explore_action(mean, sigma, self.config.action_floor, &mut self.rng));
            states.push(s);
        }
        let outcome = env.evaluate(&actions)?;
        let reward = outcome.reward();

        let mut updates = 0;
        for t in 0..layers {
            let terminal = t + 1 == layers;
            self.buffer.push(Transition {
                state: states[t],
                action: actions[t],
                reward,
                next_state: if terminal { states[t] } else { states[t + 1] },
                terminal,
            });
            if self.warmed_up() {
                let batch = self.buffer.sample(self.config.batch_size, &mut self.rng);
                self.agent.update_networks(&batch)?;
                self.agent.soft_update_targets()?;
                updates += 1;
            }
        }

        self.episode += 1;
        if reward >= self.best_reward {
            self.best_reward = reward;
            self.best_actions = actions.clone();
            self.best_outcome = Some(outcome.clone());
        }
        self.trace.push(TraceRow {
            episode: self.episode,
            reward,
            kappa: outcome.terms.kappa,
            nu: outcome.terms.nu,
            rho: outcome.terms.rho,
            sigma,
            best_so_far: self.best_reward,
        });
        if self.warmed_up() {
            self.sigma = (self.sigma * self.config.sigma_decay).max(self.config.sigma_min);
        }
        Ok(EpisodeRecord {
            actions,
            outcome,
            updates,
        })
    }

    pub fn finish(self) -> SearchResult {
        SearchResult {
            best_actions: self.best_actions,
            best_reward: self.best_reward,
            best_outcome: self.best_outcome,
            total_updates: self.agent.updates(),
            trace: self.trace,
        }
    }
}

/// Runs `config.episodes` episodes and returns the best plan found.
pub fn run_search(env: &mut dyn Environment, config: &DdpgConfig, seed: u64) -> Result<SearchResult, SearchError> {
    let mut trainer = Trainer::new(config.clone(), seed);
    for _ in 0..config.episodes {
        if let Err(cause) = trainer.run_episode(env) {
            return Err(SearchError {
                episode: trainer.episode + 1,
                cause,
                partial: trainer.trace,
            });
        }
        log::debug!(
            "episode {} reward {:.6} best {:.6}",
            trainer.episode,
            trainer.trace.last().map_or(0.0, |r| r.reward),
            trainer.best_reward
        );
    }
    Ok(trainer.finish())
}
