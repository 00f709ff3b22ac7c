//! A small feed-forward engine: dense and 1-D convolutional layers with
//! ReLU/sigmoid activations, MSE loss and reverse-mode gradients.
//!
//! All trainable parameters live in one flat vector owned by the model; each
//! layer records where its weights and biases sit in it. Gradients use the
//! same layout, which keeps the optimizer and the checkpoint code trivial.
//!
//! Feature maps are stored position-major: element `(position, channel)` of a
//! map with `C` channels is at index `position * C + channel`. Flattening a
//! map into the dense head is therefore the identity on the buffer.

mod adam;
mod checkpoint;
mod gradcheck;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
pub use checkpoint::{ModelMeta, CHECKPOINT_VERSION};
pub use gradcheck::{gradient_check, GradCheckReport};

pub const KERNEL_WIDTH: usize = 3;
pub const HIDDEN_LAYERS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArchKind {
    Mlp,
    Cnn,
}

impl fmt::Display for ArchKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Mlp => "mlp",
            Self::Cnn => "cnn",
        })
    }
}

/// Network family plus the hidden layer sizes `h = [h1, h2, h3]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub kind: ArchKind,
    pub hidden: Vec<usize>,
    pub input_len: usize,
    pub output_len: usize,
}

impl ArchitectureSpec {
    pub fn new(kind: ArchKind, hidden: Vec<usize>, input_len: usize, output_len: usize) -> Result<Self> {
        let spec = Self {
            kind,
            hidden,
            input_len,
            output_len,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// A decoder for `frames` 4B6B frames: 6 LLRs in, 4 bits out per frame.
    pub fn for_frames(kind: ArchKind, hidden: Vec<usize>, frames: usize) -> Result<Self> {
        Self::new(kind, hidden, 6 * frames, 4 * frames)
    }

    /// The networks used per frame count: MLP and CNN rows of the reference
    /// parameter table, for 1 to 5 frames.
    pub fn reference(kind: ArchKind, frames: usize) -> Result<Self> {
        let hidden = match (kind, frames) {
            (ArchKind::Mlp, 1) => vec![32, 16, 8],
            (ArchKind::Mlp, 2) => vec![64, 32, 16],
            (ArchKind::Mlp, 3) => vec![128, 64, 32],
            (ArchKind::Mlp, 4) => vec![128, 128, 64],
            (ArchKind::Mlp, 5) => vec![256, 128, 64],
            (ArchKind::Cnn, 1) => vec![8, 12, 8],
            (ArchKind::Cnn, 2) => vec![8, 14, 8],
            (ArchKind::Cnn, 3) => vec![8, 16, 8],
            (ArchKind::Cnn, 4) => vec![16, 16, 12],
            (ArchKind::Cnn, 5) => vec![16, 32, 12],
            _ => {
                return Err(Error::InvalidArchitecture(format!(
                    "no reference {kind} for {frames} frames"
                )))
            }
        };
        Self::for_frames(kind, hidden, frames)
    }

    fn validate(&self) -> Result<()> {
        if self.hidden.len() != HIDDEN_LAYERS {
            return Err(Error::InvalidArchitecture(format!(
                "expected {HIDDEN_LAYERS} hidden layers, got {}",
                self.hidden.len()
            )));
        }
        if self.hidden.contains(&0) || self.input_len == 0 || self.output_len == 0 {
            return Err(Error::InvalidArchitecture("layer sizes must be positive".into()));
        }
        if self.kind == ArchKind::Cnn && self.input_len < KERNEL_WIDTH {
            return Err(Error::InvalidArchitecture(format!(
                "a CNN needs at least {KERNEL_WIDTH} inputs, got {}",
                self.input_len
            )));
        }
        Ok(())
    }
}

impl fmt::Display for ArchitectureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let h: Vec<String> = self.hidden.iter().map(|h| h.to_string()).collect();
        write!(f, "{}:{}", self.kind, h.join(","))
    }
}

/// Parses `mlp:32,16,8` / `cnn:8,12,8` into a kind and hidden sizes.
pub fn parse_arch(s: &str) -> Result<(ArchKind, Vec<usize>)> {
    let bad = || Error::InvalidArchitecture(format!("cannot parse {s:?}; expected e.g. mlp:32,16,8"));
    let (kind, sizes) = s.split_once(':').ok_or_else(bad)?;
    let kind = match kind.trim().to_ascii_lowercase().as_str() {
        "mlp" => ArchKind::Mlp,
        "cnn" => ArchKind::Cnn,
        _ => return Err(bad()),
    };
    let hidden = sizes
        .split(',')
        .map(|h| h.trim().parse::<usize>().map_err(|_| bad()))
        .collect::<Result<Vec<_>>>()?;
    Ok((kind, hidden))
}

impl FromStr for ArchKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mlp" => Ok(Self::Mlp),
            "cnn" => Ok(Self::Cnn),
            _ => Err(Error::InvalidArchitecture(format!("unknown network kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    None,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Self::Relu => z.max(0.0),
            Self::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Self::None => z,
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Self::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Sigmoid => y * (1.0 - y),
            Self::None => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    /// Valid convolution: output length is input length − 2.
    None,
    /// One zero on each side: output length equals input length.
    Same,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerShape {
    /// Weights are `outputs × inputs`, row-major.
    Dense { inputs: usize, outputs: usize },
    /// Weights are `filters × KERNEL_WIDTH × in_channels`, row-major.
    Conv {
        in_channels: usize,
        filters: usize,
        in_len: usize,
        padding: Padding,
    },
}

impl LayerShape {
    pub fn weight_count(&self) -> usize {
        match *self {
            Self::Dense { inputs, outputs } => inputs * outputs,
            Self::Conv {
                in_channels, filters, ..
            } => filters * KERNEL_WIDTH * in_channels,
        }
    }

    pub fn bias_count(&self) -> usize {
        match *self {
            Self::Dense { outputs, .. } => outputs,
            Self::Conv { filters, .. } => filters,
        }
    }

    pub fn param_count(&self) -> usize {
        self.weight_count() + self.bias_count()
    }

    pub fn input_size(&self) -> usize {
        match *self {
            Self::Dense { inputs, .. } => inputs,
            Self::Conv {
                in_channels, in_len, ..
            } => in_channels * in_len,
        }
    }

    pub fn out_len(&self) -> usize {
        match *self {
            Self::Dense { outputs, .. } => outputs,
            Self::Conv { in_len, padding, .. } => match padding {
                Padding::None => in_len + 1 - KERNEL_WIDTH,
                Padding::Same => in_len,
            },
        }
    }

    pub fn output_size(&self) -> usize {
        match *self {
            Self::Dense { outputs, .. } => outputs,
            Self::Conv { filters, .. } => filters * self.out_len(),
        }
    }

    fn fans(&self) -> (usize, usize) {
        match *self {
            Self::Dense { inputs, outputs } => (inputs, outputs),
            Self::Conv {
                in_channels, filters, ..
            } => (KERNEL_WIDTH * in_channels, KERNEL_WIDTH * filters),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub shape: LayerShape,
    pub activation: Activation,
    weight_offset: usize,
}

impl Layer {
    pub fn weight_range(&self) -> std::ops::Range<usize> {
        self.weight_offset..self.weight_offset + self.shape.weight_count()
    }

    pub fn bias_range(&self) -> std::ops::Range<usize> {
        let start = self.weight_offset + self.shape.weight_count();
        start..start + self.shape.bias_count()
    }

    fn param_range(&self) -> std::ops::Range<usize> {
        self.weight_offset..self.weight_offset + self.shape.param_count()
    }

    /// `z = W x + b` followed by the activation, written into `out`.
    fn forward(&self, params: &[f64], input: &[f64], out: &mut [f64]) {
        let w = &params[self.weight_range()];
        let b = &params[self.bias_range()];
        match self.shape {
            LayerShape::Dense { inputs, .. } => {
                for ((o, row), &bias) in out.iter_mut().zip(w.chunks_exact(inputs)).zip(b) {
                    let z = bias + row.iter().zip(input).map(|(a, x)| a * x).sum::<f64>();
                    *o = self.activation.apply(z);
                }
            }
            LayerShape::Conv {
                in_channels,
                filters,
                in_len,
                padding,
            } => {
                let pad = usize::from(padding == Padding::Same);
                let kc = KERNEL_WIDTH * in_channels;
                for pos in 0..self.shape.out_len() {
                    // Taps at input positions pos - pad + l, clipped to the map.
                    let first = pad.saturating_sub(pos);
                    let last = KERNEL_WIDTH.min(in_len + pad - pos);
                    let window = &input[(pos + first - pad) * in_channels..(pos + last - pad) * in_channels];
                    let out_row = &mut out[pos * filters..(pos + 1) * filters];
                    for (f, o) in out_row.iter_mut().enumerate() {
                        let kernel = &w[f * kc + first * in_channels..f * kc + last * in_channels];
                        let z = b[f] + kernel.iter().zip(window).map(|(a, x)| a * x).sum::<f64>();
                        *o = self.activation.apply(z);
                    }
                }
            }
        }
    }

    /// Given `grad_out = ∂L/∂y` (overwritten with `∂L/∂z`), accumulates the
    /// parameter gradient and writes `∂L/∂x` into `grad_in` when requested.
    fn backward(
        &self,
        params: &[f64],
        input: &[f64],
        output: &[f64],
        grad_out: &mut [f64],
        grads: &mut [f64],
        grad_in: Option<&mut [f64]>,
    ) {
        for (g, &y) in grad_out.iter_mut().zip(output) {
            *g *= self.activation.derivative_from_output(y);
        }
        let w = &params[self.weight_range()];
        let (gw, gb) = grads[self.param_range()].split_at_mut(self.shape.weight_count());
        match self.shape {
            LayerShape::Dense { inputs, .. } => {
                for ((grow, gbias), &d) in gw.chunks_exact_mut(inputs).zip(gb.iter_mut()).zip(grad_out.iter()) {
                    if d == 0.0 {
                        continue;
                    }
                    *gbias += d;
                    for (g, x) in grow.iter_mut().zip(input) {
                        *g += d * x;
                    }
                }
                if let Some(gi) = grad_in {
                    gi.fill(0.0);
                    for (row, &d) in w.chunks_exact(inputs).zip(grad_out.iter()) {
                        if d == 0.0 {
                            continue;
                        }
                        for (g, a) in gi.iter_mut().zip(row) {
                            *g += d * a;
                        }
                    }
                }
            }
            LayerShape::Conv {
                in_channels,
                filters,
                in_len,
                padding,
            } => {
                let pad = usize::from(padding == Padding::Same);
                let kc = KERNEL_WIDTH * in_channels;
                let mut gi = grad_in;
                if let Some(gi) = gi.as_deref_mut() {
                    gi.fill(0.0);
                }
                for pos in 0..self.shape.out_len() {
                    let first = pad.saturating_sub(pos);
                    let last = KERNEL_WIDTH.min(in_len + pad - pos);
                    let lo = (pos + first - pad) * in_channels;
                    let hi = (pos + last - pad) * in_channels;
                    let window = &input[lo..hi];
                    for f in 0..filters {
                        let d = grad_out[pos * filters + f];
                        if d == 0.0 {
                            continue;
                        }
                        gb[f] += d;
                        let span = f * kc + first * in_channels..f * kc + last * in_channels;
                        for (g, x) in gw[span.clone()].iter_mut().zip(window) {
                            *g += d * x;
                        }
                        if let Some(gi) = gi.as_deref_mut() {
                            for (g, a) in gi[lo..hi].iter_mut().zip(&w[span]) {
                                *g += d * a;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// A built network: topology, flat parameters and training metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuralModel {
    spec: ArchitectureSpec,
    layers: Vec<Layer>,
    params: Vec<f64>,
    pub meta: ModelMeta,
}

/// Per-layer outputs of one forward pass; `values[0]` is the input.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    values: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.values.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

impl NeuralModel {
    /// Lays out the topology for `spec` and draws Glorot-uniform weights
    /// `U(±sqrt(6/(fan_in+fan_out)))`; biases start at zero.
    pub fn build(spec: &ArchitectureSpec, init_seed: u64) -> Result<Self> {
        spec.validate()?;
        let h = &spec.hidden;
        let shapes: Vec<(LayerShape, Activation)> = match spec.kind {
            ArchKind::Mlp => {
                let widths = [spec.input_len, h[0], h[1], h[2], spec.output_len];
                widths
                    .windows(2)
                    .enumerate()
                    .map(|(i, w)| {
                        let act = if i == HIDDEN_LAYERS {
                            Activation::Sigmoid
                        } else {
                            Activation::Relu
                        };
                        (
                            LayerShape::Dense {
                                inputs: w[0],
                                outputs: w[1],
                            },
                            act,
                        )
                    })
                    .collect()
            }
            ArchKind::Cnn => {
                let len = spec.input_len - (KERNEL_WIDTH - 1);
                vec![
                    (
                        LayerShape::Conv {
                            in_channels: 1,
                            filters: h[0],
                            in_len: spec.input_len,
                            padding: Padding::None,
                        },
                        Activation::Relu,
                    ),
                    (
                        LayerShape::Conv {
                            in_channels: h[0],
                            filters: h[1],
                            in_len: len,
                            padding: Padding::Same,
                        },
                        Activation::Relu,
                    ),
                    (
                        LayerShape::Conv {
                            in_channels: h[1],
                            filters: h[2],
                            in_len: len,
                            padding: Padding::Same,
                        },
                        Activation::Relu,
                    ),
                    (
                        LayerShape::Dense {
                            inputs: len * h[2],
                            outputs: spec.output_len,
                        },
                        Activation::Sigmoid,
                    ),
                ]
            }
        };
        let mut offset = 0;
        let layers: Vec<Layer> = shapes
            .into_iter()
            .map(|(shape, activation)| {
                let layer = Layer {
                    shape,
                    activation,
                    weight_offset: offset,
                };
                offset += shape.param_count();
                layer
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(init_seed);
        let mut params = vec![0.0; offset];
        for layer in &layers {
            let (fan_in, fan_out) = layer.shape.fans();
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for p in &mut params[layer.weight_range()] {
                *p = rng.random_range(-limit..limit);
            }
        }
        Ok(Self {
            spec: spec.clone(),
            layers,
            params,
            meta: ModelMeta {
                seed: init_seed,
                ..ModelMeta::default()
            },
        })
    }

    pub fn spec(&self) -> &ArchitectureSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn total_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn new_trace(&self) -> Trace {
        let mut values = vec![vec![0.0; self.spec.input_len]];
        values.extend(self.layers.iter().map(|l| vec![0.0; l.shape.output_size()]));
        let deltas = values.iter().map(|v| vec![0.0; v.len()]).collect();
        Trace { values, deltas }
    }

    fn check_len(expected: usize, actual: usize) -> Result<()> {
        if expected == actual {
            Ok(())
        } else {
            Err(Error::ShapeMismatch { expected, actual })
        }
    }

    /// Runs the network, keeping every layer output in `trace`.
    pub fn forward_traced(&self, input: &[f64], trace: &mut Trace) -> Result<()> {
        Self::check_len(self.spec.input_len, input.len())?;
        if trace.values.len() != self.layers.len() + 1 {
            *trace = self.new_trace();
        }
        trace.values[0].copy_from_slice(input);
        for (i, layer) in self.layers.iter().enumerate() {
            let (before, after) = trace.values.split_at_mut(i + 1);
            layer.forward(&self.params, &before[i], &mut after[0]);
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let mut trace = self.new_trace();
        self.forward_traced(input, &mut trace)?;
        Ok(trace.output().to_vec())
    }

    /// MSE `(1/|t|) Σ (t_i − y_i)²` of the traced output.
    pub fn loss(output: &[f64], targets: &[f64]) -> f64 {
        output.iter().zip(targets).map(|(y, t)| (t - y).powi(2)).sum::<f64>() / targets.len() as f64
    }

    /// Forward and backward pass for one sample; adds `scale · ∂L/∂θ` into
    /// `grads` and returns the sample's loss.
    pub fn accumulate_gradient(
        &self,
        input: &[f64],
        targets: &[f64],
        scale: f64,
        trace: &mut Trace,
        grads: &mut [f64],
    ) -> Result<f64> {
        Self::check_len(self.spec.output_len, targets.len())?;
        Self::check_len(self.params.len(), grads.len())?;
        self.forward_traced(input, trace)?;
        let n = self.layers.len();
        let loss = Self::loss(&trace.values[n], targets);
        let coef = 2.0 * scale / targets.len() as f64;
        for ((d, y), t) in trace.deltas[n].iter_mut().zip(&trace.values[n]).zip(targets) {
            *d = coef * (y - t);
        }
        for i in (0..n).rev() {
            let (lower, upper) = trace.deltas.split_at_mut(i + 1);
            let grad_in = if i > 0 { Some(lower[i].as_mut_slice()) } else { None };
            self.layers[i].backward(
                &self.params,
                &trace.values[i],
                &trace.values[i + 1],
                &mut upper[0],
                grads,
                grad_in,
            );
        }
        Ok(loss)
    }

    /// Loss and full gradient for one `(input, target)` pair.
    pub fn backward(&self, input: &[f64], targets: &[f64]) -> Result<(Vec<f64>, f64)> {
        let mut grads = vec![0.0; self.params.len()];
        let mut trace = self.new_trace();
        let loss = self.accumulate_gradient(input, targets, 1.0, &mut trace, &mut grads)?;
        Ok((grads, loss))
    }

    /// Hard decisions on the sigmoid outputs.
    pub fn decide(output: &[f64]) -> Vec<u8> {
        output.iter().map(|&y| u8::from(y >= 0.5)).collect()
    }
}
