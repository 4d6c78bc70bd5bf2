//! Fully connected network with ReLU hidden layers and a single output unit.
//!
//! Parameters live in one flat buffer: for each layer, the `out × in`
//! weight matrix (row-major) followed by the `out` biases. Gradients use the
//! same layout, which keeps Adam and the soft target update elementwise.

use rand::Rng;

use super::AgentError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputActivation {
    /// Logistic squashing onto (0, 1).
    Sigmoid,
    Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    sizes: Vec<usize>,
    params: Vec<f64>,
    output: OutputActivation,
}

/// Per-layer inputs recorded by a forward pass. `inputs[l]` is the input of
/// layer `l`; `output` is the final activation.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    inputs: Vec<Vec<f64>>,
    output: f64,
}

impl ForwardCache {
    pub fn output(&self) -> f64 {
        self.output
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl MlpParams {
    pub fn zeros(sizes: &[usize], output: OutputActivation) -> Self {
        assert!(sizes.len() >= 2 && *sizes.last().unwrap() == 1, "scalar-output network");
        let n = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Self {
            sizes: sizes.to_vec(),
            params: vec![0.0; n],
            output,
        }
    }

    /// Uniform ±(fan_in)^-1/2 for weights and biases of every layer.
    pub fn random<R: Rng + ?Sized>(sizes: &[usize], output: OutputActivation, rng: &mut R) -> Self {
        let mut m = Self::zeros(sizes, output);
        let mut off = 0;
        for w in sizes.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            for p in &mut m.params[off..off + w[0] * w[1] + w[1]] {
                *p = rng.random_range(-bound..bound);
            }
            off += w[0] * w[1] + w[1];
        }
        m
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.sizes == other.sizes && self.output == other.output
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64, AgentError> {
        let mut cache = ForwardCache::default();
        self.forward_cached(x, &mut cache)
    }

    pub fn forward_cached(&self, x: &[f64], cache: &mut ForwardCache) -> Result<f64, AgentError> {
        if x.len() != self.sizes[0] {
            return Err(AgentError::InputDim {
                expected: self.sizes[0],
                found: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(AgentError::NonFinite("network input"));
        }
        let layers = self.sizes.len() - 1;
        cache.inputs.resize(layers, Vec::new());
        cache.inputs[0].clear();
        cache.inputs[0].extend_from_slice(x);
        let mut off = 0;
        let mut z_out = 0.0;
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[off..off + n_in * n_out];
            let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_in * n_out + n_out;
            let (head, tail) = cache.inputs.split_at_mut(l + 1);
            let input = &head[l];
            if l + 1 < layers {
                let next = &mut tail[0];
                next.clear();
                next.extend(w.chunks_exact(n_in).zip(b).map(|(row, bias)| {
                    let z: f64 = row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>() + bias;
                    z.max(0.0)
                }));
            } else {
                z_out = w.iter().zip(input).map(|(a, b)| a * b).sum::<f64>() + b[0];
            }
        }
        let y = match self.output {
            OutputActivation::Sigmoid => sigmoid(z_out),
            OutputActivation::Linear => z_out,
        };
        if !y.is_finite() {
            return Err(AgentError::NonFinite("network output"));
        }
        cache.output = y;
        Ok(y)
    }

    /// Backpropagates `d_out = ∂L/∂y` through the cached pass. Parameter
    /// gradients are accumulated into `grad`; the input gradient, if
    /// requested, is overwritten.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        d_out: f64,
        mut grad: Option<&mut [f64]>,
        d_input: Option<&mut [f64]>,
    ) {
        let layers = self.sizes.len() - 1;
        let y = cache.output;
        let mut delta = vec![match self.output {
            OutputActivation::Sigmoid => d_out * y * (1.0 - y),
            OutputActivation::Linear => d_out,
        }];
        let mut offsets = Vec::with_capacity(layers);
        let mut off = 0;
        for l in 0..layers {
            offsets.push(off);
            off += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
        }
        let mut d_input = d_input;
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let input = &cache.inputs[l];
            if let Some(g) = grad.as_deref_mut() {
                let (gw, gb) = g[off..off + n_in * n_out + n_out].split_at_mut(n_in * n_out);
                for (o, &d) in delta.iter().enumerate() {
                    gb[o] += d;
                    for (gi, &x) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(input) {
                        *gi += d * x;
                    }
                }
            }
            if l == 0 && d_input.is_none() {
                break;
            }
            let w = &self.params[off..off + n_in * n_out];
            let mut d_in = vec![0.0; n_in];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                for (di, &wi) in d_in.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                    *di += d * wi;
                }
            }
            if l == 0 {
                if let Some(dx) = d_input.as_deref_mut() {
                    dx.copy_from_slice(&d_in);
                }
                break;
            }
            // input of layer l is the ReLU output of layer l-1
            for (di, &x) in d_in.iter_mut().zip(input) {
                if x <= 0.0 {
                    *di = 0.0;
                }
            }
            delta = d_in;
        }
    }
}
