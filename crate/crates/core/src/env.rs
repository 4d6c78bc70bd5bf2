//! The decision process the agent interacts with: one episode walks the
//! prunable layers of a device partition, then the resulting plan is scored.

use serde::Serialize;
use thiserror::Error;

use crate::compressor::{apply_plan, synthetic_banks, CompressError, CompressedModel, DevicePartition, FilterBank};
use crate::netgraph::{build_state, NetError, NetworkGraph, StateNormalizer, StateVector};
use crate::oracle::{AccuracyOracle, OracleError, PlanView};
use crate::reward::{score, RewardError, RewardTerms};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Compress(#[from] CompressError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error("accuracy oracle failed: {0}")]
    Oracle(#[from] OracleError),
    #[error("expected {expected} actions, got {found}")]
    ActionCount { expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpisodeOutcome {
    pub terms: RewardTerms,
    pub device_flops: u64,
    pub server_flops: u64,
    pub feature_elements: usize,
}

impl EpisodeOutcome {
    pub fn reward(&self) -> f64 {
        self.terms.reward
    }
}

/// Sequential decision problem: `max_layer` actions per episode, one reward
/// at the end.
pub trait Environment {
    fn max_layer(&self) -> usize;
    /// Observation for layer `t` given the actions already taken
    /// (`actions.len() >= t`; entries from `t` on are ignored).
    fn observe(&self, t: usize, actions: &[f64]) -> Result<StateVector, EnvError>;
    fn evaluate(&mut self, actions: &[f64]) -> Result<EpisodeOutcome, EnvError>;
}

/// Co-inference environment for one split of one backbone.
pub struct CoInferenceEnv {
    graph: NetworkGraph,
    partition: DevicePartition,
    banks: Vec<FilterBank>,
    normalizer: StateNormalizer,
    beta: f64,
    oracle: Box<dyn AccuracyOracle>,
}

impl CoInferenceEnv {
    pub fn new(
        graph: &NetworkGraph,
        split_layer: usize,
        beta: f64,
        oracle: Box<dyn AccuracyOracle>,
        bank_seed: u64,
    ) -> Result<Self, EnvError> {
        let partition = DevicePartition::new(graph, split_layer)?;
        Ok(Self::with_partition(graph, partition, beta, oracle, bank_seed))
    }

    pub fn with_partition(
        graph: &NetworkGraph,
        partition: DevicePartition,
        beta: f64,
        oracle: Box<dyn AccuracyOracle>,
        bank_seed: u64,
    ) -> Self {
        let banks = synthetic_banks(&partition, bank_seed);
        let normalizer = StateNormalizer::new(&partition.prunable, partition.autoencoder.feature_elements());
        Self {
            graph: graph.clone(),
            partition,
            banks,
            normalizer,
            beta,
            oracle,
        }
    }

    pub fn partition(&self) -> &DevicePartition {
        &self.partition
    }

    pub fn graph(&self) -> &NetworkGraph {
        &self.graph
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn compress(&self, actions: &[f64]) -> Result<CompressedModel, EnvError> {
        if actions.len() != self.max_layer() {
            return Err(EnvError::ActionCount {
                expected: self.max_layer(),
                found: actions.len(),
            });
        }
        Ok(apply_plan(&self.graph, &self.partition, actions, &self.banks)?)
    }
}

impl Environment for CoInferenceEnv {
    fn max_layer(&self) -> usize {
        self.partition.len()
    }

    fn observe(&self, t: usize, actions: &[f64]) -> Result<StateVector, EnvError> {
        let decided = &actions[..t.min(actions.len())];
        let keep = self.partition.keep_counts(decided);
        let flops = self.partition.resolve(&self.graph, &keep)?;
        Ok(build_state(
            &self.partition.prunable,
            &self.normalizer,
            t,
            &flops.per_prunable[..decided.len()],
            decided,
        )?)
    }

    fn evaluate(&mut self, actions: &[f64]) -> Result<EpisodeOutcome, EnvError> {
        let model = self.compress(actions)?;
        let kappa = self.oracle.accuracy(&PlanView {
            split_layer_id: self.partition.split.layer_id,
            actions,
            masked: &self.partition.masked,
            encoder_ratio: model.plan.encoder_ratio,
        })?;
        let terms = score(
            kappa,
            model.flops.device_flops as f64,
            model.original_device_flops as f64,
            model.flops.feature_elements as f64,
            model.original_feature_elements as f64,
            self.beta,
        )?;
        Ok(EpisodeOutcome {
            terms,
            device_flops: model.flops.device_flops,
            server_flops: model.flops.server_flops,
            feature_elements: model.flops.feature_elements,
        })
    }
}
