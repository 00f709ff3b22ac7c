//! Training a neural decoder at one SNR, and model selection by normalized
//! validation error.
//!
//! The network only ever sees noiseless codewords pushed through the
//! non-trainable front end (OOK, AWGN, LLR). Noise is redrawn on every
//! presentation, so a handful of codewords gives unlimited training data.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{stream_rng, ChannelModel};
use crate::codebook::{BitWord, Codebook};
use crate::decoder::Decoder;
use crate::error::{Error, Result};
use crate::eval::{measure_ber, BerPoint, StopRule};
use crate::neural::{adam_step, AdamState, NeuralModel};

/// Codebooks up to this many mappings are trained in full epochs; larger
/// ones draw minibatches uniformly from the whole mapping space.
pub const FULL_EPOCH_LIMIT: u64 = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub train_snr_db: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub convergence_window: usize,
    pub convergence_eps: f64,
    /// Minibatches per epoch when the codebook is too large to enumerate.
    pub sampled_steps_per_epoch: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            train_snr_db: 1.0,
            epochs: 20_000,
            batch_size: 16,
            lr: 1e-3,
            seed: 0,
            convergence_window: 50,
            convergence_eps: 1e-5,
            sampled_steps_per_epoch: 64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Converged,
    EpochCap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    /// Mean training loss of every epoch, in order.
    pub loss_history: Vec<f64>,
    pub stop: StopReason,
}

impl TrainingReport {
    pub fn epochs(&self) -> usize {
        self.loss_history.len()
    }

    pub fn final_loss(&self) -> f64 {
        self.loss_history.last().copied().unwrap_or(f64::NAN)
    }

    /// Mean loss over the last `window` epochs.
    pub fn tail_loss(&self, window: usize) -> f64 {
        let tail = &self.loss_history[self.loss_history.len().saturating_sub(window)..];
        tail.iter().sum::<f64>() / tail.len() as f64
    }
}

/// Every `(codeword, source)` pair of the codebook.
pub fn training_set(cb: &Codebook) -> Result<Vec<(BitWord, BitWord)>> {
    Ok(cb.mappings()?.map(|(s, c)| (c, s)).collect())
}

fn bits_as_targets(bits: &BitWord) -> Vec<f64> {
    bits.bits().iter().map(|&b| f64::from(b)).collect()
}

/// True once the mean loss of the latest window has improved on the window
/// before it by less than `eps` (relative).
fn converged(history: &[f64], window: usize, eps: f64) -> bool {
    if window == 0 || history.len() < 2 * window {
        return false;
    }
    let n = history.len();
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let previous = mean(&history[n - 2 * window..n - window]);
    let current = mean(&history[n - window..]);
    (previous - current) / previous.abs().max(f64::MIN_POSITIVE) < eps
}

/// Trains `model` with Adam on MSE against the source bits.
///
/// Each epoch visits every codeword once in a shuffled order (or, for large
/// codebooks, `sampled_steps_per_epoch` uniformly drawn minibatches), with
/// gradients averaged over each minibatch before one optimizer step.
pub fn train(
    model: &mut NeuralModel,
    cb: &Codebook,
    cfg: &TrainingConfig,
    channel: &ChannelModel,
) -> Result<TrainingReport> {
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(Error::InvalidConfig("epochs and batch size must be positive".into()));
    }
    if cfg.batch_size as u64 > cb.num_mappings() {
        return Err(Error::InvalidConfig(format!(
            "batch size {} exceeds the codebook size {}",
            cfg.batch_size,
            cb.num_mappings()
        )));
    }
    let spec = model.spec();
    if spec.input_len != cb.total_code_len() || spec.output_len != cb.total_source_len() {
        return Err(Error::ShapeMismatch {
            expected: cb.total_code_len(),
            actual: spec.input_len,
        });
    }
    let channel = channel.at_snr(cfg.train_snr_db);
    let full = if cb.num_mappings() <= FULL_EPOCH_LIMIT {
        Some(training_set(cb)?)
    } else {
        None
    };

    let mut rng = stream_rng(cfg.seed, 0x0074_7261_696e);
    let mut adam = AdamState::new(model.total_params());
    let mut grads = vec![0.0; model.total_params()];
    let mut trace = model.new_trace();
    let mut order: Vec<usize> = (0..full.as_ref().map_or(0, Vec::len)).collect();
    let mut history = Vec::new();
    let k = cb.total_source_len();

    for epoch in 0..cfg.epochs {
        let mut batches: Vec<Vec<(BitWord, BitWord)>> = match &full {
            Some(set) => {
                order.shuffle(&mut rng);
                order
                    .chunks(cfg.batch_size)
                    .map(|idx| idx.iter().map(|&i| set[i].clone()).collect())
                    .collect()
            }
            None => (0..cfg.sampled_steps_per_epoch)
                .map(|_| {
                    (0..cfg.batch_size)
                        .map(|_| {
                            let s = BitWord::from_value(rng.random_range(0..cb.num_mappings()), k);
                            (cb.encode(&s).expect("length matches"), s)
                        })
                        .collect()
                })
                .collect(),
        };
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for batch in batches.drain(..) {
            grads.fill(0.0);
            let scale = 1.0 / batch.len() as f64;
            for (code, source) in &batch {
                let rx = channel.transmit(code, &mut rng);
                epoch_loss += model.accumulate_gradient(rx.llrs(), &bits_as_targets(source), scale, &mut trace, &mut grads)?;
            }
            seen += batch.len();
            adam_step(model.params_mut(), &grads, &mut adam, cfg.lr);
        }
        let loss = epoch_loss / seen as f64;
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch, loss });
        }
        history.push(loss);
        if converged(&history, cfg.convergence_window, cfg.convergence_eps) {
            model.meta.train_snr_db = Some(cfg.train_snr_db);
            model.meta.epochs = history.len();
            return Ok(TrainingReport {
                loss_history: history,
                stop: StopReason::Converged,
            });
        }
    }
    model.meta.train_snr_db = Some(cfg.train_snr_db);
    model.meta.epochs = history.len();
    Ok(TrainingReport {
        loss_history: history,
        stop: StopReason::EpochCap,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NveReport {
    pub decoder: String,
    pub train_snr_db: f64,
    pub validation_snrs: Vec<f64>,
    pub ber_dnn: Vec<f64>,
    pub ber_map: Vec<f64>,
    pub nve: f64,
}

/// `(1/S) Σ_s BER_dnn(ρ_s) / BER_map(ρ_s)` from matched BER measurements.
pub fn nve(ber_dnn: &[f64], ber_map: &[f64]) -> f64 {
    ber_dnn.iter().zip(ber_map).map(|(d, m)| d / m).sum::<f64>() / ber_map.len() as f64
}

/// Scores each candidate on the validation grid against `map` and returns
/// the index of the lowest NVE along with every report.
///
/// Candidates are `(decoder, training SNR)` pairs. All measurements use the
/// same stop rule and seed, so candidates and the reference share noise.
pub fn nve_select(
    candidates: &[(&dyn Decoder, f64)],
    map: &dyn Decoder,
    validation_snrs: &[f64],
    cb: &Codebook,
    channel: &ChannelModel,
    rule: &StopRule,
) -> Result<(usize, Vec<NveReport>)> {
    if candidates.is_empty() || validation_snrs.is_empty() {
        return Err(Error::InvalidConfig("NVE needs candidates and validation SNRs".into()));
    }
    let map_points: Vec<BerPoint> = validation_snrs
        .iter()
        .map(|&snr| measure_ber(map, cb, &channel.at_snr(snr), rule))
        .collect::<Result<_>>()?;
    if let Some(p) = map_points.iter().find(|p| p.bit_errors == 0) {
        return Err(Error::ZeroMapErrors(p.snr_db));
    }
    let ber_map: Vec<f64> = map_points.iter().map(|p| p.ber).collect();
    let mut reports = Vec::with_capacity(candidates.len());
    for (decoder, train_snr) in candidates {
        let ber_dnn: Vec<f64> = validation_snrs
            .iter()
            .map(|&snr| measure_ber(*decoder, cb, &channel.at_snr(snr), rule).map(|p| p.ber))
            .collect::<Result<_>>()?;
        reports.push(NveReport {
            decoder: decoder.name().to_string(),
            train_snr_db: *train_snr,
            validation_snrs: validation_snrs.to_vec(),
            nve: nve(&ber_dnn, &ber_map),
            ber_dnn,
            ber_map: ber_map.clone(),
        });
    }
    let best = reports
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.nve.total_cmp(&b.1.nve))
        .map(|(i, _)| i)
        .expect("non-empty");
    Ok((best, reports))
}
