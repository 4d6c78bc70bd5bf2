//! Abstract backbone description: layers, FLOP counting, split candidates and
//! the per-layer observation handed to the agent.
//!
//! Layers execute in list order. Layer `i` reads the output of layer `i - 1`
//! (layer 0 reads the network input); an `add` layer additionally reads the
//! output of `residual_from`. Feature maps are square.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NetError {
    #[error("malformed network description: {0}")]
    Malformed(String),
    #[error("network has no layers")]
    Empty,
    #[error("layer {id}: {msg}")]
    InvalidLayer { id: usize, msg: String },
    #[error("layer {id}: expected {expected} input channels, found {found}")]
    ChannelMismatch {
        id: usize,
        expected: usize,
        found: usize,
    },
    #[error("layer {id}: expected input spatial size {expected}, found {found}")]
    SpatialMismatch {
        id: usize,
        expected: usize,
        found: usize,
    },
    #[error("add layer {0} has no residual_from")]
    MissingResidual(usize),
    #[error("split candidate {0}: {1}")]
    InvalidSplit(usize, String),
    #[error("layer {id}: width {width} outside 1..={max}")]
    WidthOutOfRange { id: usize, width: usize, max: usize },
    #[error("prunable index {0} out of range (0..{1})")]
    IndexOutOfRange(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Conv,
    Fc,
    Add,
    Pool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    #[default]
    Same,
    Valid,
}

/// One backbone layer. For `fc` layers `in_channels` is the flattened input
/// length and `in_spatial` is 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerDescriptor {
    pub id: usize,
    pub kind: LayerKind,
    #[serde(rename = "kernel", default = "one")]
    pub kernel_size: usize,
    #[serde(default = "one")]
    pub stride: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    #[serde(default = "one")]
    pub in_spatial: usize,
    #[serde(default)]
    pub padding: Padding,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_from: Option<usize>,
}

fn one() -> usize {
    1
}

impl LayerDescriptor {
    pub fn conv(id: usize, k: usize, stride: usize, c_in: usize, c_out: usize, f_in: usize) -> Self {
        Self {
            id,
            kind: LayerKind::Conv,
            kernel_size: k,
            stride,
            in_channels: c_in,
            out_channels: c_out,
            in_spatial: f_in,
            padding: Padding::Same,
            residual_from: None,
        }
    }

    pub fn fc(id: usize, n_in: usize, n_out: usize) -> Self {
        Self {
            id,
            kind: LayerKind::Fc,
            kernel_size: 1,
            stride: 1,
            in_channels: n_in,
            out_channels: n_out,
            in_spatial: 1,
            padding: Padding::Same,
            residual_from: None,
        }
    }

    pub fn out_spatial(&self) -> usize {
        match self.kind {
            LayerKind::Fc => 1,
            LayerKind::Add => self.in_spatial,
            LayerKind::Conv | LayerKind::Pool => {
                conv_out_spatial(self.in_spatial, self.kernel_size, self.stride, self.padding)
            }
        }
    }

    /// Number of output elements (C * H * W).
    pub fn out_elements(&self) -> usize {
        let s = self.out_spatial();
        self.out_channels * s * s
    }

    pub fn is_weighted(&self) -> bool {
        matches!(self.kind, LayerKind::Conv | LayerKind::Fc)
    }
}

/// Output side length of a square convolution / pooling window.
/// Returns 0 when a `valid` window does not fit.
pub fn conv_out_spatial(f_in: usize, k: usize, stride: usize, padding: Padding) -> usize {
    match padding {
        Padding::Same => f_in.div_ceil(stride),
        Padding::Valid if f_in >= k => (f_in - k) / stride + 1,
        Padding::Valid => 0,
    }
}

/// FLOPs of a layer at its own channel counts (1 MAC = 2 FLOPs).
pub fn layer_flops(layer: &LayerDescriptor) -> u64 {
    flops_at(layer, layer.in_channels, layer.out_channels)
}

/// FLOPs of `layer` evaluated at the given effective input/output widths.
pub fn flops_at(layer: &LayerDescriptor, c_in: usize, c_out: usize) -> u64 {
    match layer.kind {
        LayerKind::Conv => {
            let k = layer.kernel_size as u64;
            let f = layer.out_spatial() as u64;
            2 * k * k * c_in as u64 * c_out as u64 * f * f
        }
        LayerKind::Fc => 2 * c_in as u64 * c_out as u64,
        LayerKind::Add | LayerKind::Pool => 0,
    }
}

/// Split point: everything up to and including `layer_id` runs on the device.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitPlan {
    pub layer_id: usize,
    pub device_layers: Vec<usize>,
    /// Split feature (C, H, W).
    pub feature: (usize, usize, usize),
}

impl SplitPlan {
    /// Elements of the uncompressed split feature.
    pub fn feature_elements(&self) -> usize {
        self.feature.0 * self.feature.1 * self.feature.2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkGraph {
    #[serde(default)]
    pub name: String,
    pub input_channels: usize,
    pub input_spatial: usize,
    pub layers: Vec<LayerDescriptor>,
    #[serde(default)]
    pub split_candidates: Vec<usize>,
}

impl NetworkGraph {
    pub fn from_json(content: &str) -> Result<Self, NetError> {
        parse_network(content)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serializes")
    }

    pub fn total_flops(&self) -> u64 {
        self.layers.iter().map(layer_flops).sum()
    }

    pub fn input_elements(&self) -> usize {
        self.input_channels * self.input_spatial * self.input_spatial
    }

    /// Output (channels, spatial) of the tensor a layer reads on its main path.
    fn producer_shape(&self, id: usize) -> (usize, usize) {
        if id == 0 {
            (self.input_channels, self.input_spatial)
        } else {
            let p = &self.layers[id - 1];
            (p.out_channels, p.out_spatial())
        }
    }

    /// Checks every structural invariant; called by the parser.
    pub fn validate(&self) -> Result<(), NetError> {
        if self.layers.is_empty() {
            return Err(NetError::Empty);
        }
        if self.input_channels == 0 || self.input_spatial == 0 {
            return Err(NetError::Malformed("input dimensions must be positive".into()));
        }
        for (pos, l) in self.layers.iter().enumerate() {
            let bad = |msg: &str| NetError::InvalidLayer {
                id: l.id,
                msg: msg.to_string(),
            };
            if l.id != pos {
                return Err(bad(&format!("id must equal its position {pos}")));
            }
            if l.kernel_size == 0 || l.stride == 0 {
                return Err(bad("kernel and stride must be >= 1"));
            }
            if l.in_channels == 0 || l.out_channels == 0 || l.in_spatial == 0 {
                return Err(bad("channels and spatial size must be positive"));
            }
            let (pc, ps) = self.producer_shape(pos);
            match l.kind {
                LayerKind::Fc => {
                    let flat = pc * ps * ps;
                    if l.in_channels != flat {
                        return Err(NetError::ChannelMismatch {
                            id: l.id,
                            expected: flat,
                            found: l.in_channels,
                        });
                    }
                    if l.in_spatial != 1 || l.kernel_size != 1 {
                        return Err(bad("fc layers take kernel 1 and in_spatial 1"));
                    }
                }
                _ => {
                    if l.in_channels != pc {
                        return Err(NetError::ChannelMismatch {
                            id: l.id,
                            expected: pc,
                            found: l.in_channels,
                        });
                    }
                    if l.in_spatial != ps {
                        return Err(NetError::SpatialMismatch {
                            id: l.id,
                            expected: ps,
                            found: l.in_spatial,
                        });
                    }
                }
            }
            match l.kind {
                LayerKind::Add => {
                    let src = l.residual_from.ok_or(NetError::MissingResidual(l.id))?;
                    if src >= pos {
                        return Err(bad("residual_from must reference an earlier layer"));
                    }
                    let s = &self.layers[src];
                    if s.out_channels != l.in_channels || s.out_spatial() != l.in_spatial {
                        return Err(bad("add inputs have different shapes"));
                    }
                    if l.out_channels != l.in_channels {
                        return Err(bad("add must preserve channel count"));
                    }
                }
                LayerKind::Pool => {
                    if l.out_channels != l.in_channels {
                        return Err(bad("pool must preserve channel count"));
                    }
                }
                _ => {
                    if l.residual_from.is_some() {
                        return Err(bad("residual_from is only valid on add layers"));
                    }
                }
            }
            if l.out_spatial() == 0 {
                return Err(bad("output spatial size collapses to 0"));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for &c in &self.split_candidates {
            if c >= self.layers.len() {
                return Err(NetError::InvalidSplit(c, "not a layer id".into()));
            }
            if !seen.insert(c) {
                return Err(NetError::InvalidSplit(c, "listed twice".into()));
            }
            if c + 1 == self.layers.len() {
                return Err(NetError::InvalidSplit(c, "nothing left for the server".into()));
            }
            if self.layers[c].kind == LayerKind::Fc {
                return Err(NetError::InvalidSplit(c, "split after an fc layer".into()));
            }
            for l in &self.layers {
                if let Some(r) = l.residual_from {
                    if r < c && l.id > c {
                        return Err(NetError::InvalidSplit(
                            c,
                            format!("skip edge {r} -> {} crosses the split", l.id),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Resolves effective (in, out) widths for every layer given requested
    /// output widths for weighted layers. Entries for `add`/`pool` layers are
    /// ignored; their width follows their main input.
    pub fn resolve_widths(&self, requested_out: &[usize]) -> Result<Vec<(usize, usize)>, NetError> {
        if requested_out.len() != self.layers.len() {
            return Err(NetError::Malformed(format!(
                "expected {} widths, got {}",
                self.layers.len(),
                requested_out.len()
            )));
        }
        let mut out: Vec<(usize, usize)> = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            let (prev_c, prev_s) = if i == 0 {
                (self.input_channels, self.input_spatial)
            } else {
                (out[i - 1].1, self.layers[i - 1].out_spatial())
            };
            let c_in = match l.kind {
                LayerKind::Fc => prev_c * prev_s * prev_s,
                _ => prev_c,
            };
            let c_out = match l.kind {
                LayerKind::Conv | LayerKind::Fc => {
                    let w = requested_out[i];
                    if w == 0 || w > l.out_channels {
                        return Err(NetError::WidthOutOfRange {
                            id: l.id,
                            width: w,
                            max: l.out_channels,
                        });
                    }
                    w
                }
                LayerKind::Add | LayerKind::Pool => prev_c,
            };
            out.push((c_in, c_out));
        }
        Ok(out)
    }

    /// Weighted layers whose output tensor (directly or through pooling)
    /// feeds an elementwise add. Their width must stay intact.
    pub fn add_fed_layers(&self) -> Vec<bool> {
        let mut masked = vec![false; self.layers.len()];
        let mut mark = |mut id: usize| loop {
            let l = &self.layers[id];
            match l.kind {
                LayerKind::Conv | LayerKind::Fc => {
                    masked[id] = true;
                    return;
                }
                LayerKind::Pool if id > 0 => id -= 1,
                _ => return,
            }
        };
        for l in &self.layers {
            if l.kind == LayerKind::Add {
                if l.id > 0 {
                    mark(l.id - 1);
                }
                if let Some(r) = l.residual_from {
                    mark(r);
                }
            }
        }
        masked
    }
}

/// Parses and validates a network description (JSON).
pub fn parse_network(content: &str) -> Result<NetworkGraph, NetError> {
    let g: NetworkGraph =
        serde_json::from_str(content).map_err(|e| NetError::Malformed(e.to_string()))?;
    g.validate()?;
    Ok(g)
}

/// One plan per split candidate, ascending by layer id.
pub fn enumerate_split_points(graph: &NetworkGraph) -> Vec<SplitPlan> {
    let mut ids = graph.split_candidates.clone();
    ids.sort_unstable();
    ids.into_iter().map(|id| split_plan(graph, id)).collect()
}

/// Split plan after `layer_id` (no candidate check).
pub fn split_plan(graph: &NetworkGraph, layer_id: usize) -> SplitPlan {
    let l = &graph.layers[layer_id];
    let s = l.out_spatial();
    SplitPlan {
        layer_id,
        device_layers: (0..=layer_id).collect(),
        feature: (l.out_channels, s, s),
    }
}

/// (device, server) backbone FLOPs at the given requested output widths.
pub fn partition_flops(
    graph: &NetworkGraph,
    split: &SplitPlan,
    widths: &[usize],
) -> Result<(u64, u64), NetError> {
    let eff = graph.resolve_widths(widths)?;
    let mut device = 0;
    let mut server = 0;
    for (l, &(ci, co)) in graph.layers.iter().zip(&eff) {
        let f = flops_at(l, ci, co);
        if l.id <= split.layer_id {
            device += f;
        } else {
            server += f;
        }
    }
    Ok((device, server))
}

/// Number of components in an observation.
pub const STATE_DIM: usize = 12;

/// Normalized observation of one prunable layer. Component order:
/// index, type, kernel, stride, c_in, c_out, f_in, flops, reduced, rest,
/// transmitted size, previous action.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateVector(pub [f64; STATE_DIM]);

impl StateVector {
    pub const D: usize = 10;
    pub const A_PREV: usize = 11;

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_normalized(&self) -> bool {
        self.0.iter().all(|v| (0.0..=1.0).contains(v))
    }
}

/// Static description of a layer the agent acts on, in decision order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrunableLayer {
    pub kind: LayerKind,
    pub kernel_size: usize,
    pub stride: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub in_spatial: usize,
    pub original_flops: u64,
    /// Transmitted elements at full width; non-zero only for the last
    /// encoder layer.
    pub transmitted: usize,
}

/// Raw observation before scaling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawState {
    pub index: usize,
    pub layer: usize,
    pub flops: u64,
    pub reduced: u64,
    pub rest: u64,
    pub prev_action: f64,
}

/// Scaling constants fixed once per (graph, split).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateNormalizer {
    pub layers: usize,
    pub max_kernel: usize,
    pub max_stride: usize,
    pub max_in: usize,
    pub max_out: usize,
    pub max_spatial: usize,
    pub total_flops: u64,
    pub feature_elements: usize,
}

impl StateNormalizer {
    pub fn new(layers: &[PrunableLayer], feature_elements: usize) -> Self {
        let max = |f: fn(&PrunableLayer) -> usize| layers.iter().map(f).max().unwrap_or(1).max(1);
        Self {
            layers: layers.len().max(1),
            max_kernel: max(|l| l.kernel_size),
            max_stride: max(|l| l.stride),
            max_in: max(|l| l.in_channels),
            max_out: max(|l| l.out_channels),
            max_spatial: max(|l| l.in_spatial),
            total_flops: layers.iter().map(|l| l.original_flops).sum::<u64>().max(1),
            feature_elements: feature_elements.max(1),
        }
    }

    pub fn normalize(&self, layers: &[PrunableLayer], raw: &RawState) -> StateVector {
        let l = &layers[raw.layer];
        let tf = self.total_flops as f64;
        let v = [
            (raw.index + 1) as f64 / self.layers as f64,
            if l.kind == LayerKind::Fc { 1.0 } else { 0.0 },
            l.kernel_size as f64 / self.max_kernel as f64,
            l.stride as f64 / self.max_stride as f64,
            l.in_channels as f64 / self.max_in as f64,
            l.out_channels as f64 / self.max_out as f64,
            l.in_spatial as f64 / self.max_spatial as f64,
            raw.flops as f64 / tf,
            raw.reduced as f64 / tf,
            raw.rest as f64 / tf,
            l.transmitted as f64 / self.feature_elements as f64,
            raw.prev_action,
        ];
        StateVector(v.map(|x| x.clamp(0.0, 1.0)))
    }
}

/// Builds the observation for prunable layer `t`.
///
/// `decided_flops[j]` is the FLOPs of decided layer `j < t` at its pruned
/// widths. `reduced` is the FLOPs those decisions removed relative to the
/// original widths, so that for every `t`:
/// `total = reduced + Σ decided_flops + flops_t + rest`.
pub fn build_state(
    layers: &[PrunableLayer],
    norm: &StateNormalizer,
    t: usize,
    decided_flops: &[u64],
    actions: &[f64],
) -> Result<StateVector, NetError> {
    if t >= layers.len() {
        return Err(NetError::IndexOutOfRange(t, layers.len()));
    }
    let decided = &decided_flops[..t.min(decided_flops.len())];
    let reduced: u64 = layers[..decided.len()]
        .iter()
        .zip(decided)
        .map(|(l, &f)| l.original_flops.saturating_sub(f))
        .sum();
    let rest: u64 = layers[t + 1..].iter().map(|l| l.original_flops).sum();
    let prev_action = if t == 0 { 1.0 } else { actions[t - 1] };
    Ok(norm.normalize(
        layers,
        &RawState {
            index: t,
            layer: t,
            flops: layers[t].original_flops,
            reduced,
            rest,
            prev_action,
        },
    ))
}
