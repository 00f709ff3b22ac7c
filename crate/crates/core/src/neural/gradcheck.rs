//! Central finite-difference check of the analytic gradients.

use rand::seq::index::sample;
use rand::Rng;

use super::{Activation, NeuralModel, Trace};
use crate::error::Result;

/// Denominator floor for the relative error, so gradients that are zero up
/// to round-off do not inflate the ratio.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GradCheckReport {
    pub checked: usize,
    /// Perturbations that moved a ReLU across its kink, where the
    /// derivative is undefined and the difference quotient is meaningless.
    pub skipped_kinks: usize,
    pub max_relative_error: f64,
    pub worst_param: usize,
}

impl GradCheckReport {
    pub fn merge(self, other: Self) -> Self {
        let (max_relative_error, worst_param) = if other.max_relative_error > self.max_relative_error {
            (other.max_relative_error, other.worst_param)
        } else {
            (self.max_relative_error, self.worst_param)
        };
        Self {
            checked: self.checked + other.checked,
            skipped_kinks: self.skipped_kinks + other.skipped_kinks,
            max_relative_error,
            worst_param,
        }
    }
}

fn relu_mask(model: &NeuralModel, trace: &Trace) -> Vec<bool> {
    model
        .layers
        .iter()
        .zip(&trace.values[1..])
        .filter(|(l, _)| l.activation == Activation::Relu)
        .flat_map(|(_, v)| v.iter().map(|&y| y > 0.0))
        .collect()
}

/// Compares backpropagated gradients against `(L(θ+h) − L(θ−h)) / 2h`.
///
/// Every parameter of a layer is checked when the layer has at most
/// `max_per_layer` of them; larger layers are sampled uniformly.
pub fn gradient_check(
    model: &NeuralModel,
    input: &[f64],
    targets: &[f64],
    step: f64,
    max_per_layer: usize,
    rng: &mut impl Rng,
) -> Result<GradCheckReport> {
    let (analytic, _) = model.backward(input, targets)?;
    let mut probe = model.clone();
    let mut trace = model.new_trace();
    model.forward_traced(input, &mut trace)?;
    let base_mask = relu_mask(model, &trace);

    let mut indices = Vec::new();
    for layer in &model.layers {
        for range in [layer.weight_range(), layer.bias_range()] {
            let len = range.len();
            if len <= max_per_layer {
                indices.extend(range);
            } else {
                indices.extend(sample(rng, len, max_per_layer).into_iter().map(|i| range.start + i));
            }
        }
    }

    let mut report = GradCheckReport::default();
    for idx in indices {
        let original = probe.params[idx];
        let mut eval = |value: f64, trace: &mut Trace| -> Result<(f64, bool)> {
            probe.params[idx] = value;
            probe.forward_traced(input, trace)?;
            let same = relu_mask(&probe, trace) == base_mask;
            Ok((NeuralModel::loss(trace.output(), targets), same))
        };
        let (plus, same_plus) = eval(original + step, &mut trace)?;
        let (minus, same_minus) = eval(original - step, &mut trace)?;
        probe.params[idx] = original;
        if !(same_plus && same_minus) {
            report.skipped_kinks += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * step);
        let a = analytic[idx];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR);
        report.checked += 1;
        if rel > report.max_relative_error {
            report.max_relative_error = rel;
            report.worst_param = idx;
        }
    }
    Ok(report)
}
