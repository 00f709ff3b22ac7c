//! JSON checkpoints.
//!
//! ```text
//! { "format_version": 1,
//!   "spec":   { "kind": "mlp", "hidden": [32,16,8], "input_len": 6, "output_len": 4 },
//!   "total_params": 924,
//!   "layers": [ { "type": "dense", "in": 6, "out": 32, "activation": "relu",
//!                 "weights": [...], "bias": [...] },
//!               { "type": "conv", "in": 8, "out": 12, "length": 4, "padding": "same", ... } ],
//!   "meta":   { "train_snr_db": 1.0, "seed": 7, "epochs": 3000 } }
//! ```
//!
//! Dense weights are `out × in` row-major; conv weights are
//! `out × 3 × in` row-major (filter, tap, input channel).

use serde::{Deserialize, Serialize};

use super::{Activation, ArchitectureSpec, LayerShape, NeuralModel, Padding};
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ModelMeta {
    pub train_snr_db: Option<f64>,
    pub seed: u64,
    pub epochs: usize,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format_version: u32,
    spec: ArchitectureSpec,
    total_params: usize,
    layers: Vec<LayerRecord>,
    meta: ModelMeta,
}

#[derive(Serialize, Deserialize)]
struct LayerRecord {
    #[serde(rename = "type")]
    kind: String,
    #[serde(rename = "in")]
    inputs: usize,
    #[serde(rename = "out")]
    outputs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    length: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    padding: Option<Padding>,
    activation: Activation,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl NeuralModel {
    pub fn to_checkpoint(&self) -> Result<String> {
        let layers = self
            .layers
            .iter()
            .map(|l| {
                let (kind, inputs, outputs, length, padding) = match l.shape {
                    LayerShape::Dense { inputs, outputs } => ("dense", inputs, outputs, None, None),
                    LayerShape::Conv {
                        in_channels,
                        filters,
                        in_len,
                        padding,
                    } => ("conv", in_channels, filters, Some(in_len), Some(padding)),
                };
                LayerRecord {
                    kind: kind.into(),
                    inputs,
                    outputs,
                    length,
                    padding,
                    activation: l.activation,
                    weights: self.params[l.weight_range()].to_vec(),
                    bias: self.params[l.bias_range()].to_vec(),
                }
            })
            .collect();
        let file = CheckpointFile {
            format_version: CHECKPOINT_VERSION,
            spec: self.spec.clone(),
            total_params: self.total_params(),
            layers,
            meta: self.meta.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let probe: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::MalformedCheckpoint(e.to_string()))?;
        match probe.get("format_version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(CHECKPOINT_VERSION) => {}
            Some(v) => return Err(Error::UnsupportedVersion(v as u32)),
            None => return Err(Error::MalformedCheckpoint("missing format_version".into())),
        }
        let file: CheckpointFile =
            serde_json::from_value(probe).map_err(|e| Error::MalformedCheckpoint(e.to_string()))?;
        let mut model = NeuralModel::build(&file.spec, 0)?;
        if file.layers.len() != model.layers.len() {
            return Err(Error::MalformedCheckpoint(format!(
                "expected {} layers, found {}",
                model.layers.len(),
                file.layers.len()
            )));
        }
        if file.total_params != model.total_params() {
            return Err(Error::MalformedCheckpoint(format!(
                "total_params {} does not match the architecture ({})",
                file.total_params,
                model.total_params()
            )));
        }
        for (i, (layer, record)) in model.layers.iter().zip(&file.layers).enumerate() {
            let matches = match layer.shape {
                LayerShape::Dense { inputs, outputs } => {
                    record.kind == "dense" && record.inputs == inputs && record.outputs == outputs
                }
                LayerShape::Conv {
                    in_channels,
                    filters,
                    in_len,
                    padding,
                } => {
                    record.kind == "conv"
                        && record.inputs == in_channels
                        && record.outputs == filters
                        && record.length.is_none_or(|l| l == in_len)
                        && record.padding == Some(padding)
                }
            };
            if !matches
                || record.activation != layer.activation
                || record.weights.len() != layer.shape.weight_count()
                || record.bias.len() != layer.shape.bias_count()
            {
                return Err(Error::MalformedCheckpoint(format!("layer {i} does not match the architecture")));
            }
        }
        let ranges: Vec<_> = model.layers.iter().map(|l| (l.weight_range(), l.bias_range())).collect();
        for ((w, b), record) in ranges.into_iter().zip(&file.layers) {
            model.params[w].copy_from_slice(&record.weights);
            model.params[b].copy_from_slice(&record.bias);
        }
        model.meta = file.meta;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_checkpoint()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_checkpoint(&std::fs::read_to_string(path)?)
    }
}
