//! Table-lookup and maximum-likelihood decoding.

use std::sync::Arc;

use super::{Decoder, DecoderVerdict};
use crate::channel::ReceivedWord;
use crate::codebook::{BitWord, Codebook, MAX_ENUMERABLE_FRAMES};
use crate::error::{Error, Result};

/// Hard decisions per frame; exact table hits map directly, misses fall back
/// to the Hamming-nearest codeword.
pub struct LookupDecoder {
    codebook: Arc<Codebook>,
}

impl LookupDecoder {
    pub fn new(codebook: Arc<Codebook>) -> Self {
        Self { codebook }
    }
}

impl Decoder for LookupDecoder {
    fn name(&self) -> &str {
        "lookup"
    }

    fn decode(&self, received: &ReceivedWord) -> Result<DecoderVerdict> {
        let cb = &self.codebook;
        received.expect_len(cb.total_code_len())?;
        let mut sources = Vec::with_capacity(cb.frames());
        let mut distances = Vec::with_capacity(cb.frames());
        for (f, frame) in received.hard_bits().chunks(cb.code_len()).enumerate() {
            let (_, source, d) = cb.nearest_codeword(f, &frame)?;
            sources.push(source);
            distances.push(d as f64);
        }
        Ok(DecoderVerdict {
            source_estimate: BitWord::concat(&sources),
            per_frame_distances: distances,
        })
    }
}

/// Per frame, the codeword whose OOK image is closest to the received
/// samples in Euclidean distance. With equiprobable source words this is
/// also the MAP decision.
pub struct MlDecoder {
    codebook: Arc<Codebook>,
    /// `levels[f][s]` is the modulated codeword for source value `s` in frame `f`.
    levels: Vec<Vec<Vec<f64>>>,
}

impl MlDecoder {
    pub fn new(codebook: Arc<Codebook>) -> Self {
        let levels = (0..codebook.frames())
            .map(|f| {
                codebook
                    .frame_entries(f)
                    .map(|(_, c)| crate::channel::modulate_ook(&c))
                    .collect()
            })
            .collect();
        Self { codebook, levels }
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl Decoder for MlDecoder {
    fn name(&self) -> &str {
        "ml"
    }

    fn decode(&self, received: &ReceivedWord) -> Result<DecoderVerdict> {
        let cb = &self.codebook;
        received.expect_len(cb.total_code_len())?;
        let mut sources = Vec::with_capacity(cb.frames());
        let mut distances = Vec::with_capacity(cb.frames());
        for (f, samples) in received.samples().chunks(cb.code_len()).enumerate() {
            // Strict `<` keeps the lowest source value on ties.
            let mut best = (0usize, f64::INFINITY);
            for (s, level) in self.levels[f].iter().enumerate() {
                let d = squared_distance(samples, level);
                if d < best.1 {
                    best = (s, d);
                }
            }
            sources.push(BitWord::from_value(best.0 as u64, cb.source_len()));
            distances.push(best.1);
        }
        Ok(DecoderVerdict {
            source_estimate: BitWord::concat(&sources),
            per_frame_distances: distances,
        })
    }
}

/// Brute-force MAP over every codeword of the concatenated code, without
/// exploiting frame structure. Used as an oracle for [`MlDecoder`].
pub struct ExhaustiveMapDecoder {
    codebook: Arc<Codebook>,
    /// All concatenated codewords back to back, in source order.
    codewords: Vec<u8>,
}

impl ExhaustiveMapDecoder {
    pub fn new(codebook: Arc<Codebook>) -> Result<Self> {
        if codebook.frames() > MAX_ENUMERABLE_FRAMES {
            return Err(Error::TooManyFrames(codebook.frames()));
        }
        let mut codewords = Vec::with_capacity(codebook.num_mappings() as usize * codebook.total_code_len());
        for (_, code) in codebook.mappings()? {
            codewords.extend_from_slice(code.bits());
        }
        Ok(Self { codebook, codewords })
    }
}

impl Decoder for ExhaustiveMapDecoder {
    fn name(&self) -> &str {
        "exhaustive-map"
    }

    fn decode(&self, received: &ReceivedWord) -> Result<DecoderVerdict> {
        let cb = &self.codebook;
        let n = cb.total_code_len();
        received.expect_len(n)?;
        let r = received.samples();
        let mut best = (0usize, f64::INFINITY);
        for (s, code) in self.codewords.chunks_exact(n).enumerate() {
            let d: f64 = code
                .iter()
                .zip(r)
                .map(|(&b, &x)| (x - f64::from(b)) * (x - f64::from(b)))
                .sum();
            if d < best.1 {
                best = (s, d);
            }
        }
        let code = &self.codewords[best.0 * n..(best.0 + 1) * n];
        let per_frame_distances = code
            .chunks(cb.code_len())
            .zip(r.chunks(cb.code_len()))
            .map(|(c, x)| c.iter().zip(x).map(|(&b, &y)| (y - f64::from(b)).powi(2)).sum())
            .collect();
        Ok(DecoderVerdict {
            source_estimate: BitWord::from_value(best.0 as u64, cb.total_source_len()),
            per_frame_distances,
        })
    }
}
