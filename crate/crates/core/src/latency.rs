//! End-to-end latency model and the communication–computation trade-off
//! frontier over split points.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ddpg::{run_search, DdpgConfig, SearchError};
use crate::env::{CoInferenceEnv, EnvError};
use crate::reward::episode_reward;

/// Device/server compute speeds and the link between them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeploymentProfile {
    #[serde(default = "default_profile_name")]
    pub name: String,
    /// FLOPs per second.
    pub device_throughput: f64,
    pub server_throughput: f64,
    /// Bits per second.
    pub rate: f64,
    #[serde(default = "default_bytes")]
    pub bytes_per_element: u32,
}

fn default_profile_name() -> String {
    "default".to_string()
}

fn default_bytes() -> u32 {
    1
}

impl Default for DeploymentProfile {
    fn default() -> Self {
        Self {
            name: default_profile_name(),
            device_throughput: 1e9,
            server_throughput: 1e12,
            rate: 1e7,
            bytes_per_element: 1,
        }
    }
}

impl DeploymentProfile {
    pub fn validate(&self) -> Result<(), String> {
        let ok = |v: f64| v > 0.0 && !v.is_nan();
        if !ok(self.device_throughput) || !ok(self.server_throughput) || !ok(self.rate) || self.bytes_per_element == 0 {
            return Err(format!("profile {:?}: all rates and sizes must be positive", self.name));
        }
        Ok(())
    }

    pub fn with_rate(&self, rate: f64) -> Self {
        Self { rate, ..self.clone() }
    }
}

/// What a resolved plan costs: device FLOPs, server FLOPs, transmitted
/// elements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlanCost {
    pub device_flops: f64,
    pub server_flops: f64,
    pub feature_elements: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatencyBreakdown {
    pub device_s: f64,
    pub transmit_s: f64,
    pub server_s: f64,
}

impl LatencyBreakdown {
    pub fn total(&self) -> f64 {
        self.device_s + self.transmit_s + self.server_s
    }
}

pub fn latency_breakdown(cost: &PlanCost, profile: &DeploymentProfile) -> LatencyBreakdown {
    let bits = cost.feature_elements * profile.bytes_per_element as f64 * 8.0;
    LatencyBreakdown {
        device_s: cost.device_flops / profile.device_throughput,
        transmit_s: bits / profile.rate,
        server_s: cost.server_flops / profile.server_throughput,
    }
}

/// Seconds from input to result: device compute + transmission + server
/// compute.
pub fn end_to_end_latency(cost: &PlanCost, profile: &DeploymentProfile) -> f64 {
    latency_breakdown(cost, profile).total()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    pub split_id: usize,
    pub device_flops: u64,
    pub server_flops: u64,
    pub feature_elements: u64,
    pub kappa: f64,
    pub reward: f64,
    pub latency_s: f64,
    pub dominated: bool,
    /// Uncompressed partition at this split.
    pub reference: bool,
}

/// `true` for every point some other point dominates when minimizing both
/// coordinates (no worse in both, strictly better in one).
pub fn dominated_flags(points: &[(f64, f64)]) -> Vec<bool> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| {
        points[a]
            .0
            .total_cmp(&points[b].0)
            .then(points[a].1.total_cmp(&points[b].1))
    });
    let mut flags = vec![false; points.len()];
    // smallest second coordinate among strictly smaller first coordinates
    let mut best_before = f64::INFINITY;
    let mut i = 0;
    while i < order.len() {
        let x = points[order[i]].0;
        let mut j = i;
        while j < order.len() && points[order[j]].0 == x {
            j += 1;
        }
        // sorted by y within the group, so the group minimum comes first
        let group_min = points[order[i]].1;
        for &k in &order[i..j] {
            let y = points[k].1;
            flags[k] = best_before <= y || group_min < y;
        }
        best_before = best_before.min(group_min);
        i = j;
    }
    flags
}

#[derive(Debug, Error)]
pub enum FrontierError {
    #[error("no split candidates")]
    NoCandidates,
    #[error("split {split}: {source}")]
    Env { split: usize, source: EnvError },
    #[error("split {split}: {source}")]
    Search { split: usize, source: SearchError },
}

#[derive(Debug, Clone)]
pub struct FrontierSettings {
    pub ddpg: DdpgConfig,
    pub seed: u64,
    pub beta: f64,
    /// Accuracy of the uncompressed backbone (κ0).
    pub base_accuracy: f64,
    /// Points with κ < κ0 − budget are dropped.
    pub accuracy_loss_budget: f64,
    pub reference_profile: DeploymentProfile,
}

#[derive(Debug, Clone)]
pub struct Frontier {
    /// Sorted by split id; the searched point precedes the reference point.
    pub points: Vec<TradeoffPoint>,
    /// (split id, κ) of searched points that fell below the accuracy floor.
    pub excluded: Vec<(usize, f64)>,
    pub diagnostic: Option<String>,
}

/// Searches every split in `splits` (one independent trainer each, run
/// concurrently) and assembles the frontier.
pub fn tradeoff_frontier<F>(splits: &[usize], make_env: F, settings: &FrontierSettings) -> Result<Frontier, FrontierError>
where
    F: Fn(usize) -> Result<CoInferenceEnv, EnvError> + Sync,
{
    if splits.is_empty() {
        return Err(FrontierError::NoCandidates);
    }
    let results: Vec<Result<(TradeoffPoint, TradeoffPoint), FrontierError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = splits
            .iter()
            .map(|&split| {
                let make_env = &make_env;
                scope.spawn(move || search_split(split, make_env, settings))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("search thread panicked")).collect()
    });

    let floor = settings.base_accuracy - settings.accuracy_loss_budget;
    let mut points = Vec::new();
    let mut excluded = Vec::new();
    for r in results {
        let (searched, reference) = r?;
        if searched.kappa >= floor {
            points.push(searched);
        } else {
            excluded.push((searched.split_id, searched.kappa));
        }
        points.push(reference);
    }
    points.sort_by_key(|p| (p.split_id, p.reference));
    let coords: Vec<(f64, f64)> = points
        .iter()
        .map(|p| (p.device_flops as f64, p.feature_elements as f64))
        .collect();
    for (p, d) in points.iter_mut().zip(dominated_flags(&coords)) {
        p.dominated = d;
    }
    let diagnostic = (excluded.len() == splits.len()).then(|| {
        format!(
            "every searched split lost more than {} accuracy (floor {floor:.4}); only reference points remain",
            settings.accuracy_loss_budget
        )
    });
    if let Some(d) = &diagnostic {
        log::warn!("{d}");
    }
    Ok(Frontier {
        points,
        excluded,
        diagnostic,
    })
}

fn search_split<F>(split: usize, make_env: &F, settings: &FrontierSettings) -> Result<(TradeoffPoint, TradeoffPoint), FrontierError>
where
    F: Fn(usize) -> Result<CoInferenceEnv, EnvError>,
{
    let mut env = make_env(split).map_err(|source| FrontierError::Env { split, source })?;
    let result =
        run_search(&mut env, &settings.ddpg, settings.seed).map_err(|source| FrontierError::Search { split, source })?;
    let outcome = result.best_outcome.expect("at least one episode");
    let searched = TradeoffPoint {
        split_id: split,
        device_flops: outcome.device_flops,
        server_flops: outcome.server_flops,
        feature_elements: outcome.feature_elements as u64,
        kappa: outcome.terms.kappa,
        reward: outcome.terms.reward,
        latency_s: end_to_end_latency(
            &PlanCost {
                device_flops: outcome.device_flops as f64,
                server_flops: outcome.server_flops as f64,
                feature_elements: outcome.feature_elements as f64,
            },
            &settings.reference_profile,
        ),
        dominated: false,
        reference: false,
    };
    let part = env.partition();
    let omega = part.autoencoder.feature_elements();
    let reference_reward = episode_reward(settings.base_accuracy, 0.0, 0.0, settings.beta)
        .map(|t| t.reward)
        .unwrap_or(0.0);
    let reference = TradeoffPoint {
        split_id: split,
        device_flops: part.original_device_flops,
        server_flops: part.server_backbone_flops,
        feature_elements: omega as u64,
        kappa: settings.base_accuracy,
        reward: reference_reward,
        latency_s: end_to_end_latency(
            &PlanCost {
                device_flops: part.original_device_flops as f64,
                server_flops: part.server_backbone_flops as f64,
                feature_elements: omega as f64,
            },
            &settings.reference_profile,
        ),
        dominated: false,
        reference: true,
    };
    Ok((searched, reference))
}
