//! Monte-Carlo bit-error-rate measurement.
//!
//! Realizations are drawn in fixed-size chunks, each from its own generator
//! stream keyed by `(seed, snr, chunk index)`. Every decoder measured with the
//! same seed at the same SNR therefore sees identical source words and noise
//! (common random numbers), and results do not depend on the thread count.

use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{stream_rng, ChannelModel};
use crate::codebook::{BitWord, Codebook};
use crate::decoder::Decoder;
use crate::error::{Error, Result};

/// Received words simulated per generator stream.
pub const CHUNK_WORDS: usize = 512;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BerPoint {
    pub decoder: String,
    pub snr_db: f64,
    /// 6-bit frames transmitted (words × frames per word).
    pub frames: u64,
    pub bits: u64,
    pub bit_errors: u64,
    pub ber: f64,
    /// Binomial standard error `sqrt(ber(1−ber)/bits)`.
    pub stderr: f64,
}

impl BerPoint {
    fn new(decoder: &str, snr_db: f64, frames: u64, bits: u64, bit_errors: u64) -> Self {
        let ber = if bits == 0 { 0.0 } else { bit_errors as f64 / bits as f64 };
        let stderr = if bits == 0 { 0.0 } else { (ber * (1.0 - ber) / bits as f64).sqrt() };
        Self {
            decoder: decoder.to_string(),
            snr_db,
            frames,
            bits,
            bit_errors,
            ber,
            stderr,
        }
    }
}

/// Stopping rule for one BER point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    pub min_errors: u64,
    /// Cap on transmitted 6-bit frames.
    pub max_frames: u64,
    pub seed: u64,
}

impl Default for StopRule {
    fn default() -> Self {
        Self {
            min_errors: 100,
            max_frames: 10_000_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub snr_start: f64,
    pub snr_stop: f64,
    pub snr_step: f64,
    pub min_errors: u64,
    pub max_frames: u64,
    pub seed: u64,
}

impl SweepConfig {
    pub fn grid(&self) -> Result<Vec<f64>> {
        if self.snr_step.is_nan() || self.snr_step <= 0.0 || self.min_errors < 1 || self.snr_stop < self.snr_start {
            return Err(Error::InvalidConfig(format!(
                "sweep needs step > 0, min_errors ≥ 1 and stop ≥ start: {self:?}"
            )));
        }
        let count = ((self.snr_stop - self.snr_start) / self.snr_step + 1e-9).floor() as usize + 1;
        Ok((0..count)
            .map(|i| {
                let s = self.snr_start + i as f64 * self.snr_step;
                // Tidy binary noise such as 0.30000000000000004.
                (s * 1e9).round() / 1e9
            })
            .collect())
    }

    pub fn stop_rule(&self) -> StopRule {
        StopRule {
            min_errors: self.min_errors,
            max_frames: self.max_frames,
            seed: self.seed,
        }
    }
}

fn snr_key(seed: u64, snr_db: f64) -> u64 {
    // splitmix64 finalizer over the seed and the SNR bit pattern
    let mut z = seed ^ snr_db.to_bits().rotate_left(17) ^ 0x9e37_79b9_7f4a_7c15;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Bit errors of each word in one chunk.
fn run_chunk(
    decoder: &dyn Decoder,
    cb: &Codebook,
    channel: &ChannelModel,
    key: u64,
    chunk: u64,
    words: usize,
) -> Result<Vec<u32>> {
    let mut rng = stream_rng(key, chunk);
    let k = cb.total_source_len();
    (0..words)
        .map(|_| {
            let source = BitWord::from_value(rng.random_range(0..cb.num_mappings()), k);
            let rx = channel.transmit(&cb.encode(&source)?, &mut rng);
            let estimate = decoder.decode(&rx)?.source_estimate;
            Ok(estimate.hamming(&source) as u32)
        })
        .collect()
}

/// Simulates until `min_errors` source-bit errors or `max_frames` frames,
/// whichever comes first.
pub fn measure_ber(decoder: &dyn Decoder, cb: &Codebook, channel: &ChannelModel, rule: &StopRule) -> Result<BerPoint> {
    let frames_per_word = cb.frames() as u64;
    let max_words = rule.max_frames / frames_per_word;
    let key = snr_key(rule.seed, channel.snr_db);
    let batch = rayon::current_num_threads().max(1) as u64;

    let (mut words, mut errors) = (0u64, 0u64);
    let mut next_chunk = 0u64;
    'outer: while words < max_words && errors < rule.min_errors {
        let chunks: Vec<(u64, usize)> = (next_chunk..next_chunk + batch)
            .map(|c| {
                let start = c * CHUNK_WORDS as u64;
                (c, max_words.saturating_sub(start).min(CHUNK_WORDS as u64) as usize)
            })
            .take_while(|&(_, n)| n > 0)
            .collect();
        next_chunk += batch;
        let results: Vec<Vec<u32>> = chunks
            .par_iter()
            .map(|&(c, n)| run_chunk(decoder, cb, channel, key, c, n))
            .collect::<Result<_>>()?;
        for word_errors in results.iter().flatten() {
            words += 1;
            errors += u64::from(*word_errors);
            if errors >= rule.min_errors || words >= max_words {
                break 'outer;
            }
        }
        if chunks.len() < batch as usize {
            break;
        }
    }
    Ok(BerPoint::new(
        decoder.name(),
        channel.snr_db,
        words * frames_per_word,
        words * cb.total_source_len() as u64,
        errors,
    ))
}

/// One point per `(SNR, decoder)`, SNR-major.
pub fn sweep(
    decoders: &[&dyn Decoder],
    cb: &Codebook,
    channel: &ChannelModel,
    cfg: &SweepConfig,
) -> Result<Vec<BerPoint>> {
    let rule = cfg.stop_rule();
    let mut points = Vec::new();
    for snr in cfg.grid()? {
        let ch = channel.at_snr(snr);
        for d in decoders {
            points.push(measure_ber(*d, cb, &ch, &rule)?);
        }
    }
    Ok(points)
}

/// The points of one decoder, in SNR order.
pub fn curve<'a>(points: &'a [BerPoint], decoder: &str) -> Vec<&'a BerPoint> {
    let mut c: Vec<&BerPoint> = points.iter().filter(|p| p.decoder == decoder).collect();
    c.sort_by(|a, b| a.snr_db.total_cmp(&b.snr_db));
    c
}

/// SNR at which a curve crosses `target_ber`, interpolating `log10(BER)`
/// linearly in SNR between the first pair of points that brackets it.
pub fn snr_at_ber(curve: &[&BerPoint], target_ber: f64) -> Result<f64> {
    let pts: Vec<(f64, f64)> = curve
        .iter()
        .filter(|p| p.ber > 0.0)
        .map(|p| (p.snr_db, p.ber.log10()))
        .collect();
    let t = target_ber.log10();
    for w in pts.windows(2) {
        let ((s0, b0), (s1, b1)) = (w[0], w[1]);
        if b0 >= t && b1 <= t {
            if b0 == b1 {
                return Ok(s0);
            }
            return Ok(s0 + (b0 - t) / (b0 - b1) * (s1 - s0));
        }
    }
    Err(Error::TargetOutOfRange(target_ber))
}

/// Horizontal distance `SNR_a − SNR_b` in dB at `target_ber`; positive when
/// curve `a` needs more SNR.
pub fn db_gap_at_ber(curve_a: &[&BerPoint], curve_b: &[&BerPoint], target_ber: f64) -> Result<f64> {
    Ok(snr_at_ber(curve_a, target_ber)? - snr_at_ber(curve_b, target_ber)?)
}

pub const CSV_HEADER: &str = "decoder,snr_db,frames,bits,bit_errors,ber,stderr";

pub fn to_csv(points: &[BerPoint]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for p in points {
        writeln!(
            out,
            "{},{},{},{},{},{:e},{:e}",
            p.decoder, p.snr_db, p.frames, p.bits, p.bit_errors, p.ber, p.stderr
        )
        .expect("writing to a String");
    }
    out
}

pub fn to_json(points: &[BerPoint]) -> Result<String> {
    Ok(serde_json::to_string_pretty(points)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ReceivedWord;
    use crate::decoder::{DecoderVerdict, LookupDecoder, MlDecoder};
    use std::sync::Arc;

    /// Guesses from a hash of the samples: uniform, independent of the truth.
    struct Guess;

    impl Decoder for Guess {
        fn name(&self) -> &str {
            "guess"
        }

        fn decode(&self, rx: &ReceivedWord) -> Result<DecoderVerdict> {
            let h = rx.samples().iter().fold(0u64, |h, x| snr_key(h, *x));
            Ok(DecoderVerdict {
                source_estimate: BitWord::from_value(h & 0xf, 4),
                per_frame_distances: vec![],
            })
        }
    }

    fn rule(min_errors: u64, max_frames: u64, seed: u64) -> StopRule {
        StopRule {
            min_errors,
            max_frames,
            seed,
        }
    }

    #[test]
    fn noiseless_channel_has_no_errors() {
        let cb = Arc::new(Codebook::base_4b6b());
        let ch = ChannelModel::new(300.0);
        for d in [&LookupDecoder::new(cb.clone()) as &dyn Decoder, &MlDecoder::new(cb.clone())] {
            let p = measure_ber(d, &cb, &ch, &rule(10, 5000, 1)).unwrap();
            assert_eq!(p.bit_errors, 0);
            assert_eq!(p.ber, 0.0);
            assert_eq!(p.frames, 5000);
            assert_eq!(p.bits, 20_000);
        }
    }

    #[test]
    fn random_guess_is_half() {
        let cb = Codebook::base_4b6b();
        let p = measure_ber(&Guess, &cb, &ChannelModel::new(3.0), &rule(20_000, 1_000_000, 3)).unwrap();
        let se = (0.25 / p.bits as f64).sqrt();
        assert!((p.ber - 0.5).abs() < 3.0 * se, "{p:?}");
        assert!(p.bit_errors >= 20_000);
    }

    #[test]
    fn stops_at_min_errors_exactly() {
        let cb = Codebook::base_4b6b();
        let p = measure_ber(&Guess, &cb, &ChannelModel::new(3.0), &rule(100, 1_000_000, 3)).unwrap();
        assert!(p.bit_errors >= 100 && p.bit_errors < 104, "{p:?}");
        assert!(p.stderr <= p.ber / (p.bit_errors as f64).sqrt());
    }

    #[test]
    fn ml_beats_lookup_with_common_numbers() {
        let cb = Arc::new(Codebook::base_4b6b());
        let ch = ChannelModel::new(6.0);
        let r = rule(200, 10_000_000, 9);
        let ml = measure_ber(&MlDecoder::new(cb.clone()), &cb, &ch, &r).unwrap();
        let lu = measure_ber(&LookupDecoder::new(cb.clone()), &cb, &ch, &r).unwrap();
        assert!(ml.bit_errors >= 100 && lu.bit_errors >= 100);
        assert!(ml.ber <= lu.ber, "{ml:?} {lu:?}");
    }

    #[test]
    fn sweep_shape_and_determinism() {
        let cb = Arc::new(Codebook::base_4b6b());
        let ml = MlDecoder::new(cb.clone());
        let lu = LookupDecoder::new(cb.clone());
        let cfg = SweepConfig {
            snr_start: 0.0,
            snr_stop: 2.0,
            snr_step: 0.5,
            min_errors: 50,
            max_frames: 100_000,
            seed: 4,
        };
        let decs: [&dyn Decoder; 2] = [&ml, &lu];
        let a = sweep(&decs, &cb, &ChannelModel::new(0.0), &cfg).unwrap();
        assert_eq!(a.len(), 2 * 5);
        let b = sweep(&decs, &cb, &ChannelModel::new(0.0), &cfg).unwrap();
        assert_eq!(to_csv(&a), to_csv(&b));
        assert!(to_csv(&a).starts_with(CSV_HEADER));
        let c = curve(&a, "ml");
        assert_eq!(c.len(), 5);
        for w in c.windows(2) {
            assert!(w[1].ber <= w[0].ber + 3.0 * (w[0].stderr + w[1].stderr));
        }
    }

    #[test]
    fn grid_rejects_bad_steps() {
        let mut cfg = SweepConfig {
            snr_start: 0.0,
            snr_stop: 1.0,
            snr_step: 0.1,
            min_errors: 1,
            max_frames: 1,
            seed: 0,
        };
        assert_eq!(cfg.grid().unwrap().len(), 11);
        assert_eq!(cfg.grid().unwrap()[3], 0.3);
        cfg.snr_step = 0.0;
        assert!(cfg.grid().is_err());
        cfg.snr_step = 0.1;
        cfg.min_errors = 0;
        assert!(cfg.grid().is_err());
    }

    fn synthetic(name: &str, shift: f64) -> Vec<BerPoint> {
        (0..=10)
            .map(|i| {
                let snr = i as f64;
                let ber = 10f64.powf(-0.5 * (snr - shift)).min(0.5);
                BerPoint {
                    decoder: name.into(),
                    snr_db: snr,
                    frames: 0,
                    bits: 0,
                    bit_errors: 0,
                    ber,
                    stderr: 0.0,
                }
            })
            .collect()
    }

    #[test]
    fn gap_of_shifted_curves() {
        let a = synthetic("a", 0.0);
        let b = synthetic("b", 1.0);
        let ca: Vec<&BerPoint> = a.iter().collect();
        let cb: Vec<&BerPoint> = b.iter().collect();
        assert_eq!(db_gap_at_ber(&ca, &ca, 1e-3).unwrap(), 0.0);
        assert!((db_gap_at_ber(&cb, &ca, 1e-3).unwrap() - 1.0).abs() < 1e-9);
        assert!(matches!(db_gap_at_ber(&ca, &cb, 1e-9), Err(Error::TargetOutOfRange(_))));
    }
}
