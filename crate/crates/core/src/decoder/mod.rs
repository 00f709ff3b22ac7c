//! Decoders map a received word back to a source-word estimate.
//!
//! Every decoding strategy implements [`Decoder`] and is registered by name in
//! a [`DecoderRegistry`], so the evaluation harness and the command line can
//! pick strategies at runtime from strings like `lookup`, `ml` or
//! `neural=model.json`.

mod classical;
mod neural;

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::channel::ReceivedWord;
use crate::codebook::{BitWord, Codebook};
use crate::error::{Error, Result};

pub use classical::{ExhaustiveMapDecoder, LookupDecoder, MlDecoder};
pub use neural::NeuralDecoder;

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderVerdict {
    pub source_estimate: BitWord,
    /// Metric achieved per frame: Hamming distance for lookup decoding,
    /// squared Euclidean distance for ML/MAP. Empty for decoders without one.
    pub per_frame_distances: Vec<f64>,
}

pub trait Decoder: Send + Sync {
    /// Label used in reports.
    fn name(&self) -> &str;

    fn decode(&self, received: &ReceivedWord) -> Result<DecoderVerdict>;
}

/// Builds a decoder for a codebook from an optional argument (the text after
/// `=` in a decoder spec).
pub type DecoderFactory = fn(Arc<Codebook>, Option<&str>) -> Result<Box<dyn Decoder>>;

struct Entry {
    factory: DecoderFactory,
    summary: &'static str,
}

pub struct DecoderRegistry {
    entries: BTreeMap<&'static str, Entry>,
}

impl Default for DecoderRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

impl DecoderRegistry {
    pub fn empty() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    pub fn with_builtins() -> Self {
        let mut registry = Self::empty();
        registry.register("lookup", "hard decisions, table lookup, Hamming-nearest fallback", |cb, _| {
            Ok(Box::new(LookupDecoder::new(cb)))
        });
        registry.register("ml", "frame-wise minimum Euclidean distance (ML = MAP)", |cb, _| {
            Ok(Box::new(MlDecoder::new(cb)))
        });
        registry.register(
            "exhaustive-map",
            "minimum Euclidean distance over every concatenated codeword",
            |cb, _| Ok(Box::new(ExhaustiveMapDecoder::new(cb)?)),
        );
        registry.register("neural", "trained MLP/CNN checkpoint: neural=PATH", |cb, arg| {
            let path = arg.ok_or_else(|| Error::InvalidConfig("the neural decoder needs a checkpoint: neural=PATH".into()))?;
            Ok(Box::new(NeuralDecoder::load(cb, path)?))
        });
        registry
    }

    pub fn register(&mut self, name: &'static str, summary: &'static str, factory: DecoderFactory) {
        self.entries.insert(name, Entry { factory, summary });
    }

    pub fn names(&self) -> impl Iterator<Item = (&'static str, &'static str)> + '_ {
        self.entries.iter().map(|(k, e)| (*k, e.summary))
    }

    /// Instantiates `spec`, which is `NAME` or `NAME=ARG`.
    pub fn create(&self, spec: &str, codebook: Arc<Codebook>) -> Result<Box<dyn Decoder>> {
        let (name, arg) = match spec.split_once('=') {
            Some((n, a)) => (n.trim(), Some(a.trim())),
            None => (spec.trim(), None),
        };
        let entry = self
            .entries
            .get(name)
            .ok_or_else(|| Error::UnknownDecoder(spec.to_string()))?;
        (entry.factory)(codebook, arg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_creates_builtins() {
        let registry = DecoderRegistry::with_builtins();
        let cb = Arc::new(Codebook::base_4b6b());
        for name in ["lookup", "ml", "exhaustive-map"] {
            let d = registry.create(name, cb.clone()).unwrap();
            assert_eq!(d.name(), name);
        }
        assert!(matches!(registry.create("viterbi", cb.clone()), Err(Error::UnknownDecoder(_))));
        assert!(registry.create("neural", cb).is_err());
        assert_eq!(registry.names().count(), 4);
    }

    struct Constant;

    impl Decoder for Constant {
        fn name(&self) -> &str {
            "zeros"
        }

        fn decode(&self, _: &ReceivedWord) -> Result<DecoderVerdict> {
            Ok(DecoderVerdict {
                source_estimate: BitWord::zeros(4),
                per_frame_distances: Vec::new(),
            })
        }
    }

    #[test]
    fn custom_strategies_can_be_registered() {
        let mut registry = DecoderRegistry::empty();
        registry.register("zeros", "always 0000", |_, _| Ok(Box::new(Constant)));
        let d = registry.create("zeros", Arc::new(Codebook::base_4b6b())).unwrap();
        let rx = ReceivedWord::new(vec![1.0; 6], 0.5);
        assert_eq!(d.decode(&rx).unwrap().source_estimate, BitWord::zeros(4));
    }
}
