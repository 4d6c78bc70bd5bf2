//! Python bindings: network parsing, FLOP counting, reward, pruning, latency
//! and the plan search.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use coinfer_core::latency::PlanCost;
use coinfer_core::netgraph::{LayerDescriptor, LayerKind, Padding};
use coinfer_core::oracle::{DEFAULT_BASE_ACCURACY, DEFAULT_DAMAGE_EXPONENT, DEFAULT_DAMAGE_TOTAL};
use coinfer_core::{
    CoInferenceEnv, DdpgConfig, DeploymentProfile, DevicePartition, Environment, FilterBank, GridSpec, NetworkGraph,
    RewardTerms, SurrogateModel,
};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn terms_dict<'py>(py: Python<'py>, t: &RewardTerms) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("kappa", t.kappa)?;
    d.set_item("nu", t.nu)?;
    d.set_item("rho", t.rho)?;
    d.set_item("beta", t.beta)?;
    d.set_item("r1", t.r1)?;
    d.set_item("r2", t.r2)?;
    d.set_item("r3", t.r3)?;
    d.set_item("reward", t.reward)?;
    d.set_item("nu_clamped", t.nu_clamped)?;
    d.set_item("rho_clamped", t.rho_clamped)?;
    Ok(d)
}

/// A parsed and validated backbone description.
#[pyclass(name = "Network", module = "coinfer")]
pub struct PyNetwork {
    inner: NetworkGraph,
}

#[pymethods]
impl PyNetwork {
    #[staticmethod]
    fn from_json(content: &str) -> PyResult<Self> {
        Ok(Self {
            inner: coinfer_core::parse_network(content).map_err(value_err)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        let content = std::fs::read_to_string(path).map_err(value_err)?;
        Self::from_json(&content)
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn num_layers(&self) -> usize {
        self.inner.layers.len()
    }

    #[getter]
    fn split_candidates(&self) -> Vec<usize> {
        let mut c = self.inner.split_candidates.clone();
        c.sort_unstable();
        c
    }

    fn total_flops(&self) -> u64 {
        self.inner.total_flops()
    }

    fn layer_flops(&self) -> Vec<u64> {
        self.inner.layers.iter().map(coinfer_core::layer_flops).collect()
    }

    fn to_json(&self) -> String {
        self.inner.to_json()
    }

    fn __repr__(&self) -> String {
        format!("Network({:?}, {} layers)", self.inner.name, self.inner.layers.len())
    }
}

/// FLOPs (2 × MACs) of one conv or fc layer.
#[pyfunction]
#[pyo3(signature = (kind, in_channels, out_channels, kernel=1, stride=1, in_spatial=1, padding="same"))]
fn layer_flops(
    kind: &str,
    in_channels: usize,
    out_channels: usize,
    kernel: usize,
    stride: usize,
    in_spatial: usize,
    padding: &str,
) -> PyResult<u64> {
    let mut layer = match kind {
        "conv" => LayerDescriptor::conv(0, kernel, stride, in_channels, out_channels, in_spatial),
        "fc" => LayerDescriptor::fc(0, in_channels, out_channels),
        other => return Err(value_err(format!("unknown layer kind {other:?}"))),
    };
    layer.padding = match padding {
        "same" => Padding::Same,
        "valid" => Padding::Valid,
        other => return Err(value_err(format!("unknown padding {other:?}"))),
    };
    debug_assert!(matches!(layer.kind, LayerKind::Conv | LayerKind::Fc));
    Ok(coinfer_core::layer_flops(&layer))
}

/// Reward terms for accuracy κ, sparsity ν, compression ρ and weight β.
#[pyfunction]
fn episode_reward<'py>(py: Python<'py>, kappa: f64, nu: f64, rho: f64, beta: f64) -> PyResult<Bound<'py, PyDict>> {
    let t = coinfer_core::episode_reward(kappa, nu, rho, beta).map_err(value_err)?;
    terms_dict(py, &t)
}

/// Indices of the filters kept at preserved ratio `a` (flat `out × in × k × k` weights).
#[pyfunction]
fn prune_filters(weights: Vec<f64>, out_channels: usize, in_channels: usize, kernel: usize, a: f64) -> PyResult<Vec<usize>> {
    let bank = FilterBank::new(0, out_channels, in_channels, kernel, weights).map_err(value_err)?;
    coinfer_core::prune_filters(&bank, a).map_err(value_err)
}

/// Seconds for device compute, transmission and server compute.
#[pyfunction]
#[pyo3(signature = (device_flops, server_flops, feature_elements, device_throughput, server_throughput, rate, bytes_per_element=1))]
fn end_to_end_latency(
    device_flops: f64,
    server_flops: f64,
    feature_elements: f64,
    device_throughput: f64,
    server_throughput: f64,
    rate: f64,
    bytes_per_element: u32,
) -> PyResult<f64> {
    let profile = DeploymentProfile {
        name: "python".into(),
        device_throughput,
        server_throughput,
        rate,
        bytes_per_element,
    };
    profile.validate().map_err(value_err)?;
    Ok(coinfer_core::end_to_end_latency(
        &PlanCost {
            device_flops,
            server_flops,
            feature_elements,
        },
        &profile,
    ))
}

/// Compression search for one split with the surrogate accuracy model.
#[pyclass(name = "Planner", module = "coinfer", unsendable)]
pub struct PyPlanner {
    env: CoInferenceEnv,
    seed: u64,
}

#[pymethods]
impl PyPlanner {
    #[new]
    #[pyo3(signature = (network, split, beta=0.5, seed=0, base_accuracy=DEFAULT_BASE_ACCURACY, damage_total=DEFAULT_DAMAGE_TOTAL, exponent=DEFAULT_DAMAGE_EXPONENT))]
    fn new(
        network: &PyNetwork,
        split: usize,
        beta: f64,
        seed: u64,
        base_accuracy: f64,
        damage_total: f64,
        exponent: f64,
    ) -> PyResult<Self> {
        let graph = &network.inner;
        if !graph.split_candidates.contains(&split) {
            return Err(value_err(format!("layer {split} is not a split candidate")));
        }
        let partition = DevicePartition::new(graph, split).map_err(value_err)?;
        let oracle =
            SurrogateModel::flops_weighted(&partition, base_accuracy, damage_total, exponent).map_err(value_err)?;
        Ok(Self {
            env: CoInferenceEnv::with_partition(graph, partition, beta, Box::new(oracle), seed),
            seed,
        })
    }

    /// Number of decisions per episode.
    #[getter]
    fn num_actions(&self) -> usize {
        self.env.max_layer()
    }

    /// Scores one action vector.
    fn evaluate<'py>(&mut self, py: Python<'py>, actions: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
        let o = self.env.evaluate(&actions).map_err(value_err)?;
        let d = terms_dict(py, &o.terms)?;
        d.set_item("device_flops", o.device_flops)?;
        d.set_item("server_flops", o.server_flops)?;
        d.set_item("feature_elements", o.feature_elements)?;
        Ok(d)
    }

    /// Runs the agent; returns best actions, best reward and the trace.
    #[pyo3(signature = (episodes=1100, buffer_capacity=2000, batch_size=64, hidden=300))]
    fn search<'py>(
        &mut self,
        py: Python<'py>,
        episodes: usize,
        buffer_capacity: usize,
        batch_size: usize,
        hidden: usize,
    ) -> PyResult<Bound<'py, PyDict>> {
        if episodes == 0 || buffer_capacity == 0 || batch_size == 0 || hidden == 0 {
            return Err(value_err("episodes, buffer_capacity, batch_size and hidden must be >= 1"));
        }
        let config = DdpgConfig {
            episodes,
            buffer_capacity,
            batch_size,
            hidden,
            ..Default::default()
        };
        let r = coinfer_core::run_search(&mut self.env, &config, self.seed).map_err(runtime_err)?;
        let d = PyDict::new(py);
        d.set_item("best_actions", r.best_actions)?;
        d.set_item("best_reward", r.best_reward)?;
        d.set_item("updates", r.total_updates)?;
        let trace: Vec<(usize, f64, f64)> = r.trace.iter().map(|t| (t.episode, t.reward, t.best_so_far)).collect();
        d.set_item("trace", trace)?;
        Ok(d)
    }

    /// Exhaustive search over `grid` for every action.
    #[pyo3(signature = (grid, budget=1_000_000))]
    fn grid_reference<'py>(&mut self, py: Python<'py>, grid: Vec<f64>, budget: u64) -> PyResult<Bound<'py, PyDict>> {
        let spec = GridSpec::new(grid).map_err(value_err)?;
        let r = coinfer_core::grid_search_reference(&mut self.env, &spec, budget).map_err(value_err)?;
        let d = PyDict::new(py);
        d.set_item("actions", r.actions)?;
        d.set_item("reward", r.reward)?;
        d.set_item("evaluated", r.evaluated)?;
        Ok(d)
    }
}

/// Runs the command line with `args` (without the program name); returns
/// the exit status.
#[pyfunction]
fn run_cli(args: Vec<String>) -> i32 {
    coinfer_core::cli::main_with_args(std::iter::once("coinfer".to_string()).chain(args))
}

#[pymodule]
fn coinfer(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyNetwork>()?;
    m.add_class::<PyPlanner>()?;
    m.add_function(wrap_pyfunction!(layer_flops, m)?)?;
    m.add_function(wrap_pyfunction!(episode_reward, m)?)?;
    m.add_function(wrap_pyfunction!(prune_filters, m)?)?;
    m.add_function(wrap_pyfunction!(end_to_end_latency, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
