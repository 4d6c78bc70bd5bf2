//! Command dispatch: `search`, `frontier`, `latency`, `gridcheck`.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Parser, Subcommand};

use crate::config::{load_config_file, OracleConfig, RunConfig, SplitSelection};
use crate::ddpg::{run_search, SearchResult};
use crate::env::{CoInferenceEnv, EnvError, Environment};
use crate::latency::{latency_breakdown, tradeoff_frontier, DeploymentProfile, Frontier, FrontierSettings, PlanCost};
use crate::netgraph::{parse_network, NetError, NetworkGraph};
use crate::oracle::{grid_search_reference, AccuracyOracle, ExternalOracle, GridSpec, SurrogateModel};
use crate::report::{
    write_frontier, write_json, write_latency, write_trace, GridCheckReport, LatencyRow, PlanReport, ReportError,
};
use crate::Error;

pub const PLAN_FILE: &str = "plan.json";
pub const TRACE_FILE: &str = "trace.csv";
pub const FRONTIER_FILE: &str = "frontier.csv";
pub const LATENCY_FILE: &str = "latency.csv";
pub const GRIDCHECK_FILE: &str = "gridcheck.json";

#[derive(Debug, Parser)]
#[command(name = "coinfer", version, about = "Joint pruning and feature-compression planner for split inference")]
pub struct Cli {
    /// Log verbosity (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "warn")]
    pub log: String,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Search the compression plan of one split (writes plan JSON and trace CSV).
    Search {
        #[arg(long)]
        config: PathBuf,
    },
    /// Search every split candidate and write the trade-off frontier CSV.
    Frontier {
        #[arg(long)]
        config: PathBuf,
    },
    /// Latency of the searched, uncompressed and server-only plans over a rate sweep.
    Latency {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated link rates in bit/s.
        #[arg(long, value_delimiter = ',', required = true)]
        rates: Vec<f64>,
    },
    /// Compare the searched plan with an exhaustive grid optimum.
    Gridcheck {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated preserved ratios in (0, 1].
        #[arg(long, value_delimiter = ',', required = true)]
        grid: Vec<f64>,
    },
}

pub fn load_network(cfg: &RunConfig) -> Result<NetworkGraph, Error> {
    let path = cfg.network_path();
    let content = std::fs::read_to_string(path)
        .map_err(|e| NetError::Malformed(format!("{}: {e}", path.display())))?;
    Ok(parse_network(&content)?)
}

/// Splits selected by the config, ascending.
pub fn selected_splits(graph: &NetworkGraph, selection: SplitSelection) -> Result<Vec<usize>, Error> {
    let mut candidates = graph.split_candidates.clone();
    candidates.sort_unstable();
    match selection {
        SplitSelection::All if candidates.is_empty() => {
            Err(NetError::InvalidSplit(0, "network declares no split candidates".into()).into())
        }
        SplitSelection::All => Ok(candidates),
        SplitSelection::Layer(id) if candidates.contains(&id) => Ok(vec![id]),
        SplitSelection::Layer(id) => Err(NetError::InvalidSplit(id, "not a split candidate".into()).into()),
    }
}

/// Environment for `split` wired to the configured accuracy oracle.
pub fn build_env(graph: &NetworkGraph, split: usize, cfg: &RunConfig) -> Result<CoInferenceEnv, EnvError> {
    let partition = crate::compressor::DevicePartition::new(graph, split)?;
    let oracle: Box<dyn AccuracyOracle> = match &cfg.oracle {
        OracleConfig::Surrogate {
            base_accuracy,
            exponent,
            weights: Some(w),
            ..
        } => {
            if w.len() != partition.len() {
                return Err(EnvError::ActionCount {
                    expected: partition.len(),
                    found: w.len(),
                });
            }
            Box::new(SurrogateModel::new(*base_accuracy, w.clone(), *exponent)?)
        }
        OracleConfig::Surrogate {
            base_accuracy,
            damage_total,
            exponent,
            weights: None,
        } => Box::new(SurrogateModel::flops_weighted(&partition, *base_accuracy, *damage_total, *exponent)?),
        OracleConfig::External { command, timeout_s, .. } => Box::new(ExternalOracle::new(
            command.clone(),
            Duration::from_secs_f64(*timeout_s),
            std::env::temp_dir(),
        )?),
    };
    Ok(CoInferenceEnv::with_partition(graph, partition, cfg.beta, oracle, cfg.seed))
}

fn create(dir: &Path, name: &str) -> Result<(BufWriter<File>, PathBuf), Error> {
    std::fs::create_dir_all(dir).map_err(ReportError::from)?;
    let path = dir.join(name);
    let f = File::create(&path).map_err(ReportError::from)?;
    Ok((BufWriter::new(f), path))
}

fn search_one(graph: &NetworkGraph, split: usize, cfg: &RunConfig) -> Result<(CoInferenceEnv, SearchResult), Error> {
    let mut env = build_env(graph, split, cfg)?;
    match run_search(&mut env, &cfg.ddpg, cfg.seed) {
        Ok(r) => Ok((env, r)),
        Err(e) => {
            // keep what was learned before the failure
            if !e.partial.is_empty() {
                let (w, path) = create(&cfg.output_dir, TRACE_FILE)?;
                write_trace(w, &e.partial)?;
                log::warn!("partial trace ({} episodes) written to {}", e.partial.len(), path.display());
            }
            Err(e.into())
        }
    }
}

fn plan_report(env: &CoInferenceEnv, result: &SearchResult, cfg: &RunConfig) -> Result<PlanReport, Error> {
    let model = env.compress(&result.best_actions)?;
    let terms = result.best_outcome.as_ref().map(|o| o.terms).unwrap_or_default();
    Ok(PlanReport::new(&model, terms, cfg.seed, cfg.ddpg.episodes))
}

/// `search`: plan JSON and trace CSV for the configured split. With
/// `split = "all"` this runs the frontier instead.
pub fn cmd_search(cfg: &RunConfig) -> Result<Vec<PathBuf>, Error> {
    if cfg.split == SplitSelection::All {
        return cmd_frontier(cfg);
    }
    let graph = load_network(cfg)?;
    let split = selected_splits(&graph, cfg.split)?[0];
    let (env, result) = search_one(&graph, split, cfg)?;
    let report = plan_report(&env, &result, cfg)?;
    let (w, plan_path) = create(&cfg.output_dir, PLAN_FILE)?;
    write_json(w, &report)?;
    let (w, trace_path) = create(&cfg.output_dir, TRACE_FILE)?;
    write_trace(w, &result.trace)?;
    Ok(vec![plan_path, trace_path])
}

pub fn frontier_settings(cfg: &RunConfig) -> FrontierSettings {
    FrontierSettings {
        ddpg: cfg.ddpg.clone(),
        seed: cfg.seed,
        beta: cfg.beta,
        base_accuracy: cfg.oracle.base_accuracy(),
        accuracy_loss_budget: cfg.accuracy_loss_budget,
        reference_profile: cfg.profiles[0].clone(),
    }
}

pub fn compute_frontier(cfg: &RunConfig) -> Result<Frontier, Error> {
    let graph = load_network(cfg)?;
    let splits = selected_splits(&graph, cfg.split)?;
    Ok(tradeoff_frontier(&splits, |s| build_env(&graph, s, cfg), &frontier_settings(cfg))?)
}

pub fn cmd_frontier(cfg: &RunConfig) -> Result<Vec<PathBuf>, Error> {
    let frontier = compute_frontier(cfg)?;
    let (w, path) = create(&cfg.output_dir, FRONTIER_FILE)?;
    write_frontier(w, &frontier.points)?;
    Ok(vec![path])
}

/// Latency rows for every profile, plan and rate; rates ascending within
/// each (profile, plan) block.
pub fn latency_rows(cfg: &RunConfig, rates: &[f64]) -> Result<Vec<LatencyRow>, Error> {
    if rates.is_empty() || rates.iter().any(|r| !(*r > 0.0)) {
        return Err(crate::config::ConfigError::Range("rates must be positive".into()).into());
    }
    let mut rates = rates.to_vec();
    rates.sort_by(f64::total_cmp);
    rates.dedup();

    let graph = load_network(cfg)?;
    let splits = selected_splits(&graph, cfg.split)?;
    let mut plans: Vec<(&str, Option<usize>, PlanCost)> = Vec::new();
    for &split in &splits {
        let (env, result) = search_one(&graph, split, cfg)?;
        let outcome = result.best_outcome.expect("at least one episode");
        plans.push((
            "searched",
            Some(split),
            PlanCost {
                device_flops: outcome.device_flops as f64,
                server_flops: outcome.server_flops as f64,
                feature_elements: outcome.feature_elements as f64,
            },
        ));
        let part = env.partition();
        plans.push((
            "reference",
            Some(split),
            PlanCost {
                device_flops: part.original_device_flops as f64,
                server_flops: part.server_backbone_flops as f64,
                feature_elements: part.split.feature_elements() as f64,
            },
        ));
    }
    plans.push((
        "server",
        None,
        PlanCost {
            device_flops: 0.0,
            server_flops: graph.total_flops() as f64,
            feature_elements: graph.input_elements() as f64,
        },
    ));

    let mut rows = Vec::new();
    for profile in &cfg.profiles {
        for (name, split, cost) in &plans {
            for &rate in &rates {
                let b = latency_breakdown(cost, &DeploymentProfile::with_rate(profile, rate));
                rows.push(LatencyRow {
                    profile: profile.name.clone(),
                    plan: name.to_string(),
                    split_id: *split,
                    rate,
                    device_s: b.device_s,
                    transmit_s: b.transmit_s,
                    server_s: b.server_s,
                    latency_s: b.total(),
                });
            }
        }
    }
    Ok(rows)
}

pub fn cmd_latency(cfg: &RunConfig, rates: &[f64]) -> Result<Vec<PathBuf>, Error> {
    let rows = latency_rows(cfg, rates)?;
    let (w, path) = create(&cfg.output_dir, LATENCY_FILE)?;
    write_latency(w, &rows)?;
    Ok(vec![path])
}

pub fn gridcheck(cfg: &RunConfig, grid: &[f64]) -> Result<GridCheckReport, Error> {
    let grid = GridSpec::new(grid.to_vec())?;
    let graph = load_network(cfg)?;
    let split = match cfg.split {
        SplitSelection::Layer(id) => selected_splits(&graph, SplitSelection::Layer(id))?[0],
        SplitSelection::All => {
            return Err(NetError::InvalidSplit(0, "gridcheck needs a single split id".into()).into());
        }
    };
    let mut env = build_env(&graph, split, cfg)?;
    let reference = grid_search_reference(&mut env, &grid, cfg.grid_budget)?;
    let (_, result) = search_one(&graph, split, cfg)?;
    let ratio = if reference.reward > 0.0 {
        result.best_reward / reference.reward
    } else {
        0.0
    };
    debug_assert_eq!(env.max_layer(), reference.actions.len());
    Ok(GridCheckReport {
        split_layer_id: split,
        grid: grid.values().to_vec(),
        evaluated: reference.evaluated,
        grid_actions: reference.actions,
        grid_reward: reference.reward,
        search_actions: result.best_actions,
        search_reward: result.best_reward,
        ratio,
    })
}

pub fn cmd_gridcheck(cfg: &RunConfig, grid: &[f64]) -> Result<Vec<PathBuf>, Error> {
    let report = gridcheck(cfg, grid)?;
    println!(
        "split {}: R* = {:.6}, R_opt = {:.6}, R_opt/R* = {:.4}",
        report.split_layer_id, report.grid_reward, report.search_reward, report.ratio
    );
    let (w, path) = create(&cfg.output_dir, GRIDCHECK_FILE)?;
    write_json(w, &report)?;
    Ok(vec![path])
}

pub fn execute(cfg: &RunConfig, command: &Command) -> Result<Vec<PathBuf>, Error> {
    match command {
        Command::Search { .. } => cmd_search(cfg),
        Command::Frontier { .. } => cmd_frontier(cfg),
        Command::Latency { rates, .. } => cmd_latency(cfg, rates),
        Command::Gridcheck { grid, .. } => cmd_gridcheck(cfg, grid),
    }
}

fn config_path(command: &Command) -> &Path {
    match command {
        Command::Search { config }
        | Command::Frontier { config }
        | Command::Latency { config, .. }
        | Command::Gridcheck { config, .. } => config,
    }
}

/// Parses the config named by `cli` and runs the command. Returns the
/// written artifact paths.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>, Error> {
    let cfg = load_config_file(config_path(&cli.command))?;
    execute(&cfg, &cli.command)
}

/// Process entry point; returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    let _ = env_logger::Builder::new().parse_filters(&cli.log).try_init();
    match run(&cli) {
        Ok(paths) => {
            for p in paths {
                println!("wrote {}", p.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error[{}]: {e}", e.class());
            1
        }
    }
}
