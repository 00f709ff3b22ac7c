//! OOK modulation over an AWGN channel and the detector front end.
//!
//! Levels are `0.0` for a zero and `1.0` for a one. The average symbol energy
//! of a balanced OOK stream is therefore `0.5`.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::codebook::BitWord;
use crate::error::{Error, Result};

/// Average energy per OOK symbol for equiprobable levels `{0, 1}`.
pub const OOK_SYMBOL_ENERGY: f64 = 0.5;

/// Generator used for every stochastic step of the toolkit.
pub type SimRng = ChaCha8Rng;

/// An independent generator stream for `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SnrConvention {
    /// SNR is `Eb/N0`, with `Eb = Es / R`.
    #[default]
    EbN0,
    /// SNR is `Es/N0`.
    EsN0,
}

impl FromStr for SnrConvention {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().replace(['/', '-', '_'], "").as_str() {
            "ebn0" => Ok(Self::EbN0),
            "esn0" => Ok(Self::EsN0),
            _ => Err(format!("unknown SNR convention {s:?} (expected ebn0 or esn0)")),
        }
    }
}

impl fmt::Display for SnrConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::EbN0 => "ebn0",
            Self::EsN0 => "esn0",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    pub snr_db: f64,
    pub convention: SnrConvention,
    /// Overall code rate used to convert symbol energy to bit energy.
    pub rate_for_eb: f64,
}

impl ChannelModel {
    /// Eb/N0 channel for the rate-2/3 4B6B code.
    pub fn new(snr_db: f64) -> Self {
        Self {
            snr_db,
            convention: SnrConvention::EbN0,
            rate_for_eb: 2.0 / 3.0,
        }
    }

    pub fn with_convention(mut self, convention: SnrConvention) -> Self {
        self.convention = convention;
        self
    }

    pub fn at_snr(&self, snr_db: f64) -> Self {
        Self { snr_db, ..*self }
    }

    /// Noise variance per real sample.
    pub fn variance(&self) -> f64 {
        let energy = match self.convention {
            SnrConvention::EbN0 => OOK_SYMBOL_ENERGY / self.rate_for_eb,
            SnrConvention::EsN0 => OOK_SYMBOL_ENERGY,
        };
        energy / (2.0 * 10f64.powf(self.snr_db / 10.0))
    }

    pub fn sigma(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Modulates, corrupts and detects one codeword.
    pub fn transmit(&self, code: &BitWord, rng: &mut impl Rng) -> ReceivedWord {
        let sigma = self.sigma();
        let samples = add_noise(&modulate_ook(code), sigma, rng);
        ReceivedWord::new(samples, sigma)
    }
}

pub fn modulate_ook(bits: &BitWord) -> Vec<f64> {
    bits.bits().iter().map(|&b| f64::from(b)).collect()
}

/// Adds i.i.d. zero-mean Gaussian noise of standard deviation `sigma`.
pub fn add_noise(samples: &[f64], sigma: f64, rng: &mut impl Rng) -> Vec<f64> {
    samples
        .iter()
        .map(|&s| {
            let z: f64 = rng.sample(StandardNormal);
            s + sigma * z
        })
        .collect()
}

/// `ln p(r|1)/p(r|0) = (2r − 1) / (2σ²)` for OOK levels `{0, 1}`.
pub fn llr(samples: &[f64], sigma: f64) -> Vec<f64> {
    let scale = 1.0 / (2.0 * sigma * sigma);
    samples.iter().map(|&r| (2.0 * r - 1.0) * scale).collect()
}

/// Threshold at the midpoint `0.5`; ties decide one.
pub fn hard_decision(samples: &[f64]) -> BitWord {
    BitWord::new(samples.iter().map(|&r| u8::from(r >= 0.5)).collect()).expect("bits are 0 or 1")
}

/// Detector output for one received word.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedWord {
    samples: Vec<f64>,
    llrs: Vec<f64>,
    hard_bits: BitWord,
}

impl ReceivedWord {
    pub fn new(samples: Vec<f64>, sigma: f64) -> Self {
        let llrs = llr(&samples, sigma);
        let hard_bits = hard_decision(&samples);
        Self {
            samples,
            llrs,
            hard_bits,
        }
    }

    /// A noiseless reception of `code`, with LLRs scaled for `sigma`.
    pub fn noiseless(code: &BitWord, sigma: f64) -> Self {
        Self::new(modulate_ook(code), sigma)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn llrs(&self) -> &[f64] {
        &self.llrs
    }

    pub fn hard_bits(&self) -> &BitWord {
        &self.hard_bits
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub(crate) fn expect_len(&self, expected: usize) -> Result<()> {
        if self.len() == expected {
            Ok(())
        } else {
            Err(Error::LengthMismatch {
                expected,
                actual: self.len(),
            })
        }
    }
}
