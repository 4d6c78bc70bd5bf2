//! Planner for device-edge co-inference: picks per-layer filter-pruning
//! ratios for the on-device partition and a compression ratio for the
//! transmitted feature, with a DDPG agent driving the search.

pub mod cli;
pub mod compressor;
pub mod config;
pub mod ddpg;
pub mod env;
pub mod latency;
pub mod netgraph;
pub mod oracle;
pub mod report;
pub mod reward;

use thiserror::Error;

pub use compressor::{apply_plan, prune_filters, AutoencoderSpec, CompressError, DevicePartition, FilterBank};
pub use config::{load_config, ConfigError, RunConfig, SplitSelection};
pub use ddpg::{run_search, DdpgConfig, SearchError, SearchResult, TraceRow};
pub use env::{CoInferenceEnv, EnvError, Environment, EpisodeOutcome};
pub use latency::{end_to_end_latency, tradeoff_frontier, DeploymentProfile, FrontierError, PlanCost, TradeoffPoint};
pub use netgraph::{layer_flops, parse_network, LayerDescriptor, LayerKind, NetError, NetworkGraph};
pub use oracle::{grid_search_reference, AccuracyOracle, GridError, GridSpec, OracleError, SurrogateModel};
pub use report::ReportError;
pub use reward::{episode_reward, RewardError, RewardTerms};

/// Any failure surfaced by the command line.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Compress(#[from] CompressError),
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Frontier(#[from] FrontierError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Report(#[from] ReportError),
}

impl Error {
    /// Name of the error class, printed on standard error.
    pub fn class(&self) -> &'static str {
        match self {
            Error::Config(_) => "ConfigError",
            Error::Net(_) => "NetError",
            Error::Compress(_) => "CompressError",
            Error::Reward(_) => "RewardError",
            Error::Oracle(_) => "OracleError",
            Error::Env(e) => env_class(e),
            Error::Search(e) => match &e.cause {
                ddpg::SearchFailure::Env(e) => env_class(e),
                ddpg::SearchFailure::Agent(_) => "AgentError",
            },
            Error::Frontier(FrontierError::Env { source, .. }) => env_class(source),
            Error::Frontier(FrontierError::Search { source, .. }) => match &source.cause {
                ddpg::SearchFailure::Env(e) => env_class(e),
                ddpg::SearchFailure::Agent(_) => "AgentError",
            },
            Error::Frontier(_) => "FrontierError",
            Error::Grid(GridError::Env(e)) => env_class(e),
            Error::Grid(_) => "GridError",
            Error::Report(_) => "ReportError",
        }
    }
}

fn env_class(e: &EnvError) -> &'static str {
    match e {
        EnvError::Net(_) => "NetError",
        EnvError::Compress(_) => "CompressError",
        EnvError::Reward(_) => "RewardError",
        EnvError::Oracle(_) => "OracleError",
        EnvError::ActionCount { .. } => "EnvError",
    }
}
