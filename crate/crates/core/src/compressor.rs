//! One-shot ℓ1 filter pruning, the bottleneck feature autoencoder, and the
//! FLOP / feature-size accounting of a compressed device partition.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netgraph::{
    flops_at, layer_flops, split_plan, LayerKind, NetError, NetworkGraph, PrunableLayer, SplitPlan,
};

#[derive(Debug, Error, PartialEq)]
pub enum CompressError {
    #[error("preserved ratio {0} outside (0, 1]")]
    RatioOutOfRange(f64),
    #[error("filter bank for layer {0} contains non-finite weights")]
    NonFinite(usize),
    #[error("filter bank for layer {layer}: expected {expected} weights, got {found}")]
    BankShape {
        layer: usize,
        expected: usize,
        found: usize,
    },
    #[error("split feature {0}x{1}x{1} cannot be halved spatially")]
    CannotHalve(usize, usize),
    #[error("plan mismatch: {0}")]
    PlanMismatch(String),
    #[error(transparent)]
    Net(#[from] NetError),
}

/// Kernel size of the encoder convolution and the decoder's transposed
/// convolution.
pub const AUTOENCODER_KERNEL: usize = 3;

/// Weights of one prunable layer: `out × in × k × k` (k = 1 for fc).
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    pub layer: usize,
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel: usize,
    weights: Vec<f64>,
    norms: Vec<f64>,
}

impl FilterBank {
    pub fn new(
        layer: usize,
        out_channels: usize,
        in_channels: usize,
        kernel: usize,
        weights: Vec<f64>,
    ) -> Result<Self, CompressError> {
        let expected = out_channels * in_channels * kernel * kernel;
        if weights.len() != expected || expected == 0 {
            return Err(CompressError::BankShape {
                layer,
                expected,
                found: weights.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(CompressError::NonFinite(layer));
        }
        let per = in_channels * kernel * kernel;
        let norms = weights
            .chunks(per)
            .map(|f| f.iter().map(|w| w.abs()).sum())
            .collect();
        Ok(Self {
            layer,
            out_channels,
            in_channels,
            kernel,
            weights,
            norms,
        })
    }

    /// Seeded stand-in for trained weights, uniform in ±(fan_in)^-1/2 with a
    /// per-filter scale so that filter norms spread out.
    pub fn synthetic(layer: usize, shape: &PrunableLayer, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (layer as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let k = shape.kernel_size;
        let per = shape.in_channels * k * k;
        let bound = 1.0 / (per as f64).sqrt();
        let mut weights = Vec::with_capacity(per * shape.out_channels);
        for _ in 0..shape.out_channels {
            let scale: f64 = rng.random_range(0.1..1.0);
            weights.extend((0..per).map(|_| scale * rng.random_range(-bound..bound)));
        }
        Self::new(layer, shape.out_channels, shape.in_channels, k, weights)
            .expect("synthetic bank has consistent shape")
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// ℓ1 norm of every output filter.
    pub fn l1_norms(&self) -> &[f64] {
        &self.norms
    }
}

/// Filters kept at preserved ratio `a`: `max(1, round(a * n))`.
pub fn keep_count(a: f64, n: usize) -> usize {
    ((a * n as f64).round() as usize).clamp(1, n)
}

/// Indices (ascending) of the filters with the largest ℓ1 norms. Ties go to
/// the lower index.
pub fn prune_filters(bank: &FilterBank, a: f64) -> Result<Vec<usize>, CompressError> {
    if !(a > 0.0 && a <= 1.0) {
        return Err(CompressError::RatioOutOfRange(a));
    }
    let norms = bank.l1_norms();
    let n = keep_count(a, norms.len());
    let mut order: Vec<usize> = (0..norms.len()).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));
    let mut keep = order[..n].to_vec();
    keep.sort_unstable();
    Ok(keep)
}

/// Encoder: stride-2 conv C → ceil(C/8) channels, then fc to a quarter of
/// the flattened length. The decoder mirrors both stages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderSpec {
    pub feature: (usize, usize, usize),
    pub conv_out_channels: usize,
    pub conv_out_spatial: usize,
    pub fc_in: usize,
    pub fc_out: usize,
}

impl AutoencoderSpec {
    pub fn for_feature(c: usize, h: usize, w: usize) -> Result<Self, CompressError> {
        if h < 2 || w < 2 || h != w {
            return Err(CompressError::CannotHalve(c, h));
        }
        let conv_out_channels = c.div_ceil(8).max(1);
        let conv_out_spatial = h.div_ceil(2);
        let fc_in = conv_out_channels * conv_out_spatial * conv_out_spatial;
        Ok(Self {
            feature: (c, h, w),
            conv_out_channels,
            conv_out_spatial,
            fc_in,
            fc_out: fc_in.div_ceil(4).max(1),
        })
    }

    /// Elements of the uncompressed split feature (Ω).
    pub fn feature_elements(&self) -> usize {
        self.feature.0 * self.feature.1 * self.feature.2
    }

    /// Shape the decoder restores.
    pub fn decoder_output(&self) -> (usize, usize, usize) {
        self.feature
    }

    fn spatial_sq(&self) -> u64 {
        (self.conv_out_spatial * self.conv_out_spatial) as u64
    }

    /// Encoder conv FLOPs at the given input / output channel counts.
    pub fn encoder_conv_flops(&self, c_in: usize, c_out: usize) -> u64 {
        let k = AUTOENCODER_KERNEL as u64;
        2 * k * k * c_in as u64 * c_out as u64 * self.spatial_sq()
    }

    pub fn encoder_fc_flops(&self, conv_width: usize, fc_width: usize) -> u64 {
        2 * conv_width as u64 * self.spatial_sq() * fc_width as u64
    }

    /// Decoder fc (ω → conv-out elements) plus the transposed conv back to C.
    pub fn decoder_flops(&self, conv_width: usize, fc_width: usize) -> u64 {
        let k = AUTOENCODER_KERNEL as u64;
        let fc = 2 * fc_width as u64 * conv_width as u64 * self.spatial_sq();
        let tconv = 2 * k * k * conv_width as u64 * self.feature.0 as u64 * self.spatial_sq();
        fc + tconv
    }

    /// The two prunable encoder stages, conv first.
    pub fn prunable_layers(&self) -> [PrunableLayer; 2] {
        let (c, h, _) = self.feature;
        [
            PrunableLayer {
                kind: LayerKind::Conv,
                kernel_size: AUTOENCODER_KERNEL,
                stride: 2,
                in_channels: c,
                out_channels: self.conv_out_channels,
                in_spatial: h,
                original_flops: self.encoder_conv_flops(c, self.conv_out_channels),
                transmitted: 0,
            },
            PrunableLayer {
                kind: LayerKind::Fc,
                kernel_size: 1,
                stride: 1,
                in_channels: self.fc_in,
                out_channels: self.fc_out,
                in_spatial: 1,
                original_flops: self.encoder_fc_flops(self.conv_out_channels, self.fc_out),
                transmitted: self.fc_out,
            },
        ]
    }
}

/// Encoder/decoder pair for the feature at `split`.
pub fn attach_autoencoder(graph: &NetworkGraph, split: &SplitPlan) -> Result<AutoencoderSpec, CompressError> {
    if split.layer_id >= graph.layers.len() {
        return Err(CompressError::PlanMismatch(format!("no layer {}", split.layer_id)));
    }
    let (c, h, w) = split.feature;
    AutoencoderSpec::for_feature(c, h, w)
}

/// ω: transmitted elements at encoder preserved ratio `encoder_ratio`.
pub fn compressed_feature_size(fc_out_base: usize, encoder_ratio: f64) -> usize {
    if encoder_ratio.is_nan() || encoder_ratio <= 0.0 {
        return 1;
    }
    keep_count(encoder_ratio.min(1.0), fc_out_base)
}

/// Device side of one split with the encoder attached: the ordered list of
/// prunable layers the agent walks through (device convs, encoder conv,
/// encoder fc) and the static FLOP totals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DevicePartition {
    pub split: SplitPlan,
    pub autoencoder: AutoencoderSpec,
    pub prunable: Vec<PrunableLayer>,
    /// Backbone layer id of each prunable device conv, in decision order.
    pub backbone_ids: Vec<usize>,
    /// Prunable layers whose width is pinned because they feed an add.
    pub masked: Vec<bool>,
    /// Λ: device backbone FLOPs of the original model (no encoder).
    pub original_device_flops: u64,
    /// Server backbone FLOPs; the server partition is never pruned.
    pub server_backbone_flops: u64,
}

impl DevicePartition {
    pub fn new(graph: &NetworkGraph, split_layer: usize) -> Result<Self, CompressError> {
        if split_layer >= graph.layers.len() {
            return Err(CompressError::PlanMismatch(format!("no layer {split_layer}")));
        }
        let split = split_plan(graph, split_layer);
        let autoencoder = attach_autoencoder(graph, &split)?;
        let add_fed = graph.add_fed_layers();
        let mut prunable = Vec::new();
        let mut backbone_ids = Vec::new();
        let mut masked = Vec::new();
        for l in &graph.layers[..=split_layer] {
            if l.kind == LayerKind::Conv {
                prunable.push(PrunableLayer {
                    kind: l.kind,
                    kernel_size: l.kernel_size,
                    stride: l.stride,
                    in_channels: l.in_channels,
                    out_channels: l.out_channels,
                    in_spatial: l.in_spatial,
                    original_flops: layer_flops(l),
                    transmitted: 0,
                });
                backbone_ids.push(l.id);
                masked.push(add_fed[l.id]);
            }
        }
        prunable.extend(autoencoder.prunable_layers());
        masked.extend([false, false]);
        let original_device_flops = graph.layers[..=split_layer].iter().map(layer_flops).sum();
        let server_backbone_flops = graph.layers[split_layer + 1..].iter().map(layer_flops).sum();
        Ok(Self {
            split,
            autoencoder,
            prunable,
            backbone_ids,
            masked,
            original_device_flops,
            server_backbone_flops,
        })
    }

    /// Number of decisions per episode.
    pub fn len(&self) -> usize {
        self.prunable.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prunable.is_empty()
    }

    pub fn encoder_conv_index(&self) -> usize {
        self.prunable.len() - 2
    }

    pub fn encoder_fc_index(&self) -> usize {
        self.prunable.len() - 1
    }

    /// Output width of every prunable layer under `actions` (masked layers
    /// keep their full width). Missing trailing actions count as 1.
    pub fn keep_counts(&self, actions: &[f64]) -> Vec<usize> {
        self.prunable
            .iter()
            .enumerate()
            .map(|(i, l)| match actions.get(i) {
                Some(_) if self.masked[i] => l.out_channels,
                Some(&a) => keep_count(a, l.out_channels),
                None => l.out_channels,
            })
            .collect()
    }

    /// FLOP accounting at the given prunable output widths.
    pub fn resolve(&self, graph: &NetworkGraph, keep: &[usize]) -> Result<ResolvedFlops, CompressError> {
        if keep.len() != self.prunable.len() {
            return Err(CompressError::PlanMismatch(format!(
                "expected {} widths, got {}",
                self.prunable.len(),
                keep.len()
            )));
        }
        let mut requested: Vec<usize> = graph.layers.iter().map(|l| l.out_channels).collect();
        for (k, &id) in self.backbone_ids.iter().enumerate() {
            requested[id] = keep[k];
        }
        let eff = graph.resolve_widths(&requested)?;
        let mut per_prunable = Vec::with_capacity(self.prunable.len());
        let mut device_backbone = 0;
        for l in &graph.layers[..=self.split.layer_id] {
            let (ci, co) = eff[l.id];
            let f = flops_at(l, ci, co);
            device_backbone += f;
            if l.kind == LayerKind::Conv {
                per_prunable.push(f);
            }
        }
        let split_width = eff[self.split.layer_id].1;
        let ae = &self.autoencoder;
        let conv_w = keep[self.encoder_conv_index()];
        let fc_w = keep[self.encoder_fc_index()];
        if conv_w > ae.conv_out_channels || fc_w > ae.fc_out || conv_w == 0 || fc_w == 0 {
            return Err(CompressError::PlanMismatch("encoder width out of range".into()));
        }
        let enc_conv = ae.encoder_conv_flops(split_width, conv_w);
        let enc_fc = ae.encoder_fc_flops(conv_w, fc_w);
        per_prunable.push(enc_conv);
        per_prunable.push(enc_fc);
        Ok(ResolvedFlops {
            per_prunable,
            device_flops: device_backbone + enc_conv + enc_fc,
            encoder_flops: enc_conv + enc_fc,
            server_flops: self.server_backbone_flops + ae.decoder_flops(conv_w, fc_w),
            feature_elements: fc_w,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedFlops {
    /// FLOPs of each prunable layer at the resolved widths.
    pub per_prunable: Vec<u64>,
    /// λ: pruned device backbone plus encoder.
    pub device_flops: u64,
    pub encoder_flops: u64,
    /// Server backbone plus decoder.
    pub server_flops: u64,
    /// ω.
    pub feature_elements: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeepSet {
    /// Backbone layer id, or `None` for encoder stages.
    pub layer: Option<usize>,
    pub stage: String,
    pub masked: bool,
    pub kept: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionPlan {
    pub split_layer_id: usize,
    pub actions: Vec<f64>,
    pub encoder_ratio: f64,
    pub keep_sets: Vec<KeepSet>,
}

/// Compressed partition: the resolved plan plus its FLOP accounting.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompressedModel {
    pub plan: CompressionPlan,
    pub flops: ResolvedFlops,
    /// Λ.
    pub original_device_flops: u64,
    /// Ω.
    pub original_feature_elements: usize,
}

/// Prunes every layer of `partition` per `actions` (one per prunable layer;
/// the last is the encoder ratio) and accounts the result.
pub fn apply_plan(
    graph: &NetworkGraph,
    partition: &DevicePartition,
    actions: &[f64],
    banks: &[FilterBank],
) -> Result<CompressedModel, CompressError> {
    if actions.len() != partition.len() || banks.len() != partition.len() {
        return Err(CompressError::PlanMismatch(format!(
            "{} prunable layers, {} actions, {} banks",
            partition.len(),
            actions.len(),
            banks.len()
        )));
    }
    let mut keep_sets = Vec::with_capacity(actions.len());
    let mut widths = Vec::with_capacity(actions.len());
    for (i, (&a, bank)) in actions.iter().zip(banks).enumerate() {
        let layer = &partition.prunable[i];
        if bank.out_channels != layer.out_channels {
            return Err(CompressError::PlanMismatch(format!("bank {i} has wrong shape")));
        }
        let masked = partition.masked[i];
        let kept = if masked {
            if !(a > 0.0 && a <= 1.0) {
                return Err(CompressError::RatioOutOfRange(a));
            }
            (0..layer.out_channels).collect()
        } else {
            prune_filters(bank, a)?
        };
        widths.push(kept.len());
        let (layer_id, stage) = if i < partition.backbone_ids.len() {
            (Some(partition.backbone_ids[i]), "backbone")
        } else if i == partition.encoder_conv_index() {
            (None, "encoder_conv")
        } else {
            (None, "encoder_fc")
        };
        keep_sets.push(KeepSet {
            layer: layer_id,
            stage: stage.to_string(),
            masked,
            kept,
        });
    }
    let flops = partition.resolve(graph, &widths)?;
    Ok(CompressedModel {
        plan: CompressionPlan {
            split_layer_id: partition.split.layer_id,
            actions: actions.to_vec(),
            encoder_ratio: actions[actions.len() - 1],
            keep_sets,
        },
        flops,
        original_device_flops: partition.original_device_flops,
        original_feature_elements: partition.autoencoder.feature_elements(),
    })
}

/// Seeded banks for every prunable layer of `partition`.
pub fn synthetic_banks(partition: &DevicePartition, seed: u64) -> Vec<FilterBank> {
    partition
        .prunable
        .iter()
        .enumerate()
        .map(|(i, l)| FilterBank::synthetic(i, l, seed))
        .collect()
}
