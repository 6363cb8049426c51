use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)] // inherent float methods shadow it when std is linked
use num_traits::Float;
use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the pre- and post-activation values.
    #[inline]
    fn derivative(self, pre: f64, post: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - post * post,
            Activation::Identity => 1.0,
        }
    }
}

/// Fully connected layer; `weights` is `outputs × inputs`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
    pub frozen: bool,
}

impl DenseLayer {
    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        DenseLayer {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
            activation,
            frozen: false,
        }
    }

    /// Weights and biases uniform in `[-limit, limit]`.
    pub fn uniform<R: Rng + ?Sized>(
        inputs: usize,
        outputs: usize,
        activation: Activation,
        limit: f64,
        rng: &mut R,
    ) -> Self {
        let mut layer = DenseLayer::zeros(inputs, outputs, activation);
        for w in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
            *w = rng.random_range(-limit..=limit);
        }
        layer
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    #[inline]
    fn affine(&self, input: &[f64], out: &mut [f64]) {
        for (o, (row, b)) in out
            .iter_mut()
            .zip(self.weights.chunks_exact(self.inputs).zip(&self.bias))
        {
            *o = row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>() + b;
        }
    }
}

/// Sequential stack of dense layers.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNetwork {
    layers: Vec<DenseLayer>,
}

/// Per-layer pre- and post-activation values from one forward pass.
#[derive(Debug, Clone, Default)]
pub struct ForwardTrace {
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
}

impl ForwardTrace {
    pub fn output(&self) -> &[f64] {
        self.post.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Gradients shaped like a network's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub layers: Vec<LayerGrads>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ParamGrads {
    pub fn zeros_like(net: &DenseNetwork) -> Self {
        ParamGrads {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGrads {
                    weights: vec![0.0; l.weights.len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn fill_zero(&mut self) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|w| *w = 0.0);
            l.bias.iter_mut().for_each(|b| *b = 0.0);
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()))
    }
}

/// Result of [`DenseNetwork::backward`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub params: ParamGrads,
    pub input: Vec<f64>,
}

impl DenseNetwork {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Input("network needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(Error::Input(format!("layer {i} has inconsistent tensor sizes")));
            }
            if l.weights.iter().chain(&l.bias).any(|v| !v.is_finite()) {
                return Err(Error::Input(format!("layer {i} has non-finite parameters")));
            }
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::Input(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    pair[0].outputs,
                    i + 1,
                    pair[1].inputs
                )));
            }
        }
        Ok(DenseNetwork { layers })
    }

    /// Multi-layer perceptron with fan-in uniform initialisation on hidden
    /// layers and `[-final_limit, final_limit]` on the output layer.
    pub fn mlp<R: Rng + ?Sized>(
        sizes: &[usize],
        hidden: Activation,
        output: Activation,
        final_limit: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::Input("mlp needs input and output sizes".into()));
        }
        let n = sizes.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let (fan_in, fan_out) = (sizes[i], sizes[i + 1]);
                if i + 1 == n {
                    DenseLayer::uniform(fan_in, fan_out, output, final_limit, rng)
                } else {
                    let limit = 1.0 / (fan_in as f64).sqrt();
                    DenseLayer::uniform(fan_in, fan_out, hidden, limit, rng)
                }
            })
            .collect();
        DenseNetwork::new(layers)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    /// Mutable access for optimisers and tests; callers must keep shapes.
    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::parameter_count).sum()
    }

    pub fn set_frozen(&mut self, frozen: bool) {
        self.layers.iter_mut().for_each(|l| l.frozen = frozen);
    }

    pub fn is_frozen(&self) -> bool {
        self.layers.iter().all(|l| l.frozen)
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::Input(format!(
                "network expects {} inputs, got {}",
                self.input_dim(),
                input.len()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut current = input.to_vec();
        for layer in &self.layers {
            let mut out = vec![0.0; layer.outputs];
            layer.affine(&current, &mut out);
            out.iter_mut().for_each(|v| *v = layer.activation.apply(*v));
            current = out;
        }
        Ok(current)
    }

    /// Forward pass that keeps intermediate values for [`Self::backward_trace`].
    /// `trace` is reused across calls to avoid reallocation.
    pub fn forward_trace(&self, input: &[f64], trace: &mut ForwardTrace) -> Result<()> {
        self.check_input(input)?;
        let n = self.layers.len();
        trace.pre.resize_with(n, Vec::new);
        trace.post.resize_with(n, Vec::new);
        for (i, layer) in self.layers.iter().enumerate() {
            let (done, rest) = trace.post.split_at_mut(i);
            let source = if i == 0 { input } else { &done[i - 1] };
            let pre = &mut trace.pre[i];
            pre.resize(layer.outputs, 0.0);
            layer.affine(source, pre);
            let post = &mut rest[0];
            post.clear();
            post.extend(pre.iter().map(|&v| layer.activation.apply(v)));
        }
        Ok(())
    }

    /// Reverse pass for the trace of `input`, accumulating parameter
    /// gradients of `output · upstream` into `grads` (frozen layers are
    /// skipped) and writing the input gradient into `input_grad`.
    pub fn backward_trace(
        &self,
        input: &[f64],
        trace: &ForwardTrace,
        upstream: &[f64],
        grads: &mut ParamGrads,
        input_grad: &mut Vec<f64>,
    ) -> Result<()> {
        if grads.layers.len() != self.layers.len() {
            return Err(Error::Input("gradient shape mismatch".into()));
        }
        self.reverse(input, trace, upstream, Some(grads), input_grad)
    }

    /// Input gradient only; no parameter gradients are formed.
    pub fn input_gradient(
        &self,
        input: &[f64],
        trace: &ForwardTrace,
        upstream: &[f64],
        input_grad: &mut Vec<f64>,
    ) -> Result<()> {
        self.reverse(input, trace, upstream, None, input_grad)
    }

    fn reverse(
        &self,
        input: &[f64],
        trace: &ForwardTrace,
        upstream: &[f64],
        mut grads: Option<&mut ParamGrads>,
        input_grad: &mut Vec<f64>,
    ) -> Result<()> {
        if upstream.len() != self.output_dim() {
            return Err(Error::Input(format!(
                "upstream gradient of length {} for {} outputs",
                upstream.len(),
                self.output_dim()
            )));
        }
        if trace.post.len() != self.layers.len() {
            return Err(Error::Input("trace does not match the network".into()));
        }
        let mut delta: Vec<f64> = upstream.to_vec();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            for ((d, &pre), &post) in delta.iter_mut().zip(&trace.pre[i]).zip(&trace.post[i]) {
                *d *= layer.activation.derivative(pre, post);
            }
            let source = if i == 0 { input } else { &trace.post[i - 1] };
            if let (false, Some(grads)) = (layer.frozen, grads.as_deref_mut()) {
                let g = &mut grads.layers[i];
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let row = &mut g.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (w, &x) in row.iter_mut().zip(source) {
                        *w += d * x;
                    }
                    g.bias[o] += d;
                }
            }
            let mut next = vec![0.0; layer.inputs];
            for (row, &d) in layer.weights.chunks_exact(layer.inputs).zip(&delta) {
                if d == 0.0 {
                    continue;
                }
                for (n, &w) in next.iter_mut().zip(row) {
                    *n += w * d;
                }
            }
            delta = next;
        }
        *input_grad = delta;
        Ok(())
    }

    /// Exact gradients of `output · upstream` with respect to every parameter
    /// and to the input.
    pub fn backward(&self, input: &[f64], upstream: &[f64]) -> Result<GradientBundle> {
        let mut trace = ForwardTrace::default();
        self.forward_trace(input, &mut trace)?;
        let mut params = ParamGrads::zeros_like(self);
        let mut input_grad = Vec::new();
        self.backward_trace(input, &trace, upstream, &mut params, &mut input_grad)?;
        Ok(GradientBundle {
            params,
            input: input_grad,
        })
    }

    pub fn same_shape(&self, other: &DenseNetwork) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.inputs == b.inputs && a.outputs == b.outputs)
    }

    /// Euclidean distance between the parameter vectors of two networks of
    /// the same shape.
    pub fn parameter_distance(&self, other: &DenseNetwork) -> f64 {
        self.layers
            .iter()
            .zip(&other.layers)
            .flat_map(|(a, b)| {
                a.weights
                    .iter()
                    .zip(&b.weights)
                    .chain(a.bias.iter().zip(&b.bias))
            })
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }
}

/// Polyak averaging `target ← τ·source + (1-τ)·target`. Frozen target layers
/// are left untouched.
pub fn soft_update(target: &mut DenseNetwork, source: &DenseNetwork, tau: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Input(format!("tau {tau} outside [0, 1]")));
    }
    if !target.same_shape(source) {
        return Err(Error::Input("soft update between different shapes".into()));
    }
    for (t, s) in target.layers.iter_mut().zip(&source.layers) {
        if t.frozen {
            continue;
        }
        for (tw, sw) in t
            .weights
            .iter_mut()
            .zip(&s.weights)
            .chain(t.bias.iter_mut().zip(&s.bias))
        {
            *tw = if tau == 1.0 {
                *sw
            } else {
                tau * sw + (1.0 - tau) * *tw
            };
        }
    }
    Ok(())
}
