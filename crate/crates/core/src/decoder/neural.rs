use std::path::Path;
use std::sync::Arc;

use super::{Decoder, DecoderVerdict};
use crate::channel::ReceivedWord;
use crate::codebook::{BitWord, Codebook};
use crate::error::{Error, Result};
use crate::neural::NeuralModel;

/// Feeds the detector LLRs through a trained network and thresholds each
/// sigmoid output at one half.
pub struct NeuralDecoder {
    model: NeuralModel,
    label: String,
}

impl NeuralDecoder {
    pub fn new(codebook: Arc<Codebook>, model: NeuralModel) -> Result<Self> {
        let spec = model.spec();
        if spec.input_len != codebook.total_code_len() {
            return Err(Error::ShapeMismatch {
                expected: codebook.total_code_len(),
                actual: spec.input_len,
            });
        }
        if spec.output_len != codebook.total_source_len() {
            return Err(Error::ShapeMismatch {
                expected: codebook.total_source_len(),
                actual: spec.output_len,
            });
        }
        let label = spec.to_string();
        Ok(Self { model, label })
    }

    pub fn load(codebook: Arc<Codebook>, path: impl AsRef<Path>) -> Result<Self> {
        Self::new(codebook, NeuralModel::load(path)?)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn model(&self) -> &NeuralModel {
        &self.model
    }
}

impl Decoder for NeuralDecoder {
    fn name(&self) -> &str {
        &self.label
    }

    fn decode(&self, received: &ReceivedWord) -> Result<DecoderVerdict> {
        let out = self.model.forward(received.llrs())?;
        Ok(DecoderVerdict {
            source_estimate: BitWord::new(NeuralModel::decide(&out))?,
            per_frame_distances: Vec::new(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{ArchKind, ArchitectureSpec};

    #[test]
    fn shape_must_match_codebook() {
        let model = NeuralModel::build(&ArchitectureSpec::reference(ArchKind::Mlp, 2).unwrap(), 0).unwrap();
        assert!(NeuralDecoder::new(Arc::new(Codebook::base_4b6b()), model.clone()).is_err());
        let d = NeuralDecoder::new(Arc::new(Codebook::repeated(2)), model).unwrap();
        assert_eq!(d.name(), "mlp:64,32,16");
        let rx = ReceivedWord::new(vec![0.0; 12], 0.5);
        assert_eq!(d.decode(&rx).unwrap().source_estimate.len(), 8);
    }
}
