//! Shared fixtures and brute-force reference implementations.
#![allow(dead_code)]

use std::path::PathBuf;

use coinfer_core::netgraph::{LayerDescriptor, LayerKind, NetworkGraph, Padding};
use coinfer_core::{parse_network, CoInferenceEnv, SurrogateModel};

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

pub fn load_graph(name: &str) -> NetworkGraph {
    let content = std::fs::read_to_string(data_path(name)).expect("shipped network");
    parse_network(&content).expect("shipped network parses")
}

/// Environment with the default FLOP-weighted surrogate.
pub fn surrogate_env(graph: &NetworkGraph, split: usize, beta: f64, seed: u64) -> CoInferenceEnv {
    let partition = coinfer_core::DevicePartition::new(graph, split).unwrap();
    let oracle = SurrogateModel::flops_weighted(
        &partition,
        coinfer_core::oracle::DEFAULT_BASE_ACCURACY,
        coinfer_core::oracle::DEFAULT_DAMAGE_TOTAL,
        coinfer_core::oracle::DEFAULT_DAMAGE_EXPONENT,
    )
    .unwrap();
    CoInferenceEnv::with_partition(graph, partition, beta, Box::new(oracle), seed)
}

/// Window start positions along one axis, found by sliding the window.
fn window_starts(f_in: usize, k: usize, stride: usize, padding: Padding) -> usize {
    let mut count = 0;
    let mut pos = 0;
    match padding {
        Padding::Valid => {
            while pos + k <= f_in {
                count += 1;
                pos += stride;
            }
        }
        Padding::Same => {
            while pos < f_in {
                count += 1;
                pos += stride;
            }
        }
    }
    count
}

/// Multiply-accumulates of a layer, one increment per innermost iteration.
pub fn count_macs(layer: &LayerDescriptor) -> u64 {
    let mut macs = 0u64;
    match layer.kind {
        LayerKind::Fc => {
            for _o in 0..layer.out_channels {
                for _i in 0..layer.in_channels {
                    macs += 1;
                }
            }
        }
        LayerKind::Conv => {
            let side = window_starts(layer.in_spatial, layer.kernel_size, layer.stride, layer.padding);
            for _y in 0..side {
                for _x in 0..side {
                    for _co in 0..layer.out_channels {
                        for _ci in 0..layer.in_channels {
                            for _ky in 0..layer.kernel_size {
                                for _kx in 0..layer.kernel_size {
                                    macs = std::hint::black_box(macs + 1);
                                }
                            }
                        }
                    }
                }
            }
        }
        LayerKind::Add | LayerKind::Pool => {}
    }
    macs
}

/// Top-n filters by ℓ1 norm by repeated selection of the current maximum;
/// the first (lowest) index wins ties. Returned ascending.
pub fn brute_force_top_n(weights: &[f64], per_filter: usize, n: usize) -> Vec<usize> {
    let norms: Vec<f64> = weights
        .chunks(per_filter)
        .map(|f| {
            let mut s = 0.0;
            for w in f {
                s += w.abs();
            }
            s
        })
        .collect();
    let mut taken = vec![false; norms.len()];
    let mut chosen = Vec::new();
    for _ in 0..n {
        let mut best: Option<usize> = None;
        for (i, &v) in norms.iter().enumerate() {
            if taken[i] {
                continue;
            }
            if best.is_none_or(|b| v > norms[b]) {
                best = Some(i);
            }
        }
        let b = best.unwrap();
        taken[b] = true;
        chosen.push(b);
    }
    chosen.sort_unstable();
    chosen
}

/// Keep count as the nearest integer to a·c, at least 1.
pub fn expected_keep(a: f64, c: usize) -> usize {
    let x = a * c as f64;
    let lower = x.floor();
    let n = if x - lower >= 0.5 { lower + 1.0 } else { lower };
    (n as usize).max(1).min(c)
}

/// O(n²) dominance check in (x, y) minimization.
pub fn brute_force_dominated(points: &[(f64, f64)]) -> Vec<bool> {
    points
        .iter()
        .map(|&(x, y)| {
            points
                .iter()
                .any(|&(u, v)| u <= x && v <= y && (u < x || v < y))
        })
        .collect()
}

/// Exact rational arithmetic for reward reference values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ratio {
    pub num: i128,
    pub den: i128,
}

fn gcd(a: i128, b: i128) -> i128 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

impl Ratio {
    pub fn new(num: i128, den: i128) -> Self {
        assert!(den != 0);
        let g = gcd(num, den).max(1);
        let s = if den < 0 { -1 } else { 1 };
        Self {
            num: s * num / g,
            den: s * den / g,
        }
    }
    pub fn add(self, o: Self) -> Self {
        Self::new(self.num * o.den + o.num * self.den, self.den * o.den)
    }
    pub fn mul(self, o: Self) -> Self {
        Self::new(self.num * o.num, self.den * o.den)
    }
    pub fn div(self, o: Self) -> Self {
        Self::new(self.num * o.den, self.den * o.num)
    }
    pub fn to_f64(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

/// (R1 + R2 + βR3) / 3 with every operand given as a ratio.
pub fn exact_reward(kappa: Ratio, nu: Ratio, rho: Ratio, beta: Ratio) -> Ratio {
    let two = Ratio::new(2, 1);
    let h = |x: Ratio, y: Ratio| {
        let s = x.add(y);
        if s.num == 0 {
            Ratio::new(0, 1)
        } else {
            two.mul(x).mul(y).div(s)
        }
    };
    h(kappa, nu)
        .add(h(kappa, rho))
        .add(beta.mul(h(nu, rho)))
        .div(Ratio::new(3, 1))
}
