//! Command-line front end: capacity analysis, codebook tooling, training,
//! BER evaluation and decoder comparison.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::Rng;
use serde::Serialize;

use csdecode::channel::{stream_rng, ChannelModel, SnrConvention};
use csdecode::codebook::{BitWord, Codebook};
use csdecode::constraint::{capacity, count_sequences, log2_count_sequences, rate_table, ConstraintFsm};
use csdecode::decoder::{Decoder, DecoderRegistry};
use csdecode::eval::{self, BerPoint, StopRule, SweepConfig};
use csdecode::neural::{gradient_check, parse_arch, ArchitectureSpec, GradCheckReport, NeuralModel};
use csdecode::training::{self, TrainingConfig};

/// Relative tolerance the `gradcheck` subcommand enforces.
const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Parser, Serialize)]
#[command(name = "csdecode", version, about, propagate_version = true)]
struct Cli {
    /// Master seed for every random stream (noise, shuffles, initialization).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// How SNR values in dB are interpreted: ebn0 uses Eb = Es/R with R = 2/3, esn0 uses the symbol energy.
    #[arg(long, global = true, default_value_t = SnrConvention::EbN0, value_parser = parse_convention)]
    snr_convention: SnrConvention,

    /// Worker threads for simulation and training (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Also write a JSON run manifest (flags, seed, version, outputs) to this path.
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

fn parse_convention(s: &str) -> std::result::Result<SnrConvention, String> {
    s.parse()
}

#[derive(Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Command {
    /// Shannon capacity of the DC-free constraint, in bits per symbol.
    Capacity {
        /// Number of allowed running-digital-sum values.
        #[arg(long, default_value_t = 5)]
        rds: usize,
        /// Decimal places printed.
        #[arg(long, default_value_t = 4)]
        digits: usize,
    },
    /// Shortest codeword length n for each source length k with k/n within capacity.
    RateTable {
        #[arg(long, default_value_t = 5)]
        rds: usize,
        #[arg(long, default_value_t = 20)]
        max_k: usize,
    },
    /// Exact number of constrained sequences of a given length.
    CountSequences {
        #[arg(long, default_value_t = 5)]
        rds: usize,
        #[arg(long)]
        length: usize,
    },
    /// Writes a multi-frame codebook with independently shuffled frames as JSON.
    ShuffleCodebook {
        /// Number of concatenated 4B6B frames (at most 5).
        #[arg(long, default_value_t = 2)]
        frames: usize,
        /// Output path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Trains an MLP or CNN decoder on noisy codewords.
    Train(TrainArgs),
    /// BER of one decoder at one SNR.
    Eval {
        /// Decoder spec: lookup, ml, exhaustive-map or neural=PATH.
        #[arg(long)]
        decoder: String,
        /// SNR in dB, under --snr-convention.
        #[arg(long)]
        snr: f64,
        #[command(flatten)]
        codebook: CodebookArgs,
        #[command(flatten)]
        stop: StopArgs,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// BER curves of several decoders over an SNR grid, with shared noise.
    Sweep {
        #[command(flatten)]
        sweep: SweepArgs,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// SNR gap of each decoder to a reference decoder at a target BER.
    Compare {
        #[command(flatten)]
        sweep: SweepArgs,
        /// Reference decoder spec.
        #[arg(long, default_value = "ml")]
        reference: String,
        #[arg(long, default_value_t = 1e-3)]
        target_ber: f64,
        /// Also write the underlying BER points as CSV.
        #[arg(long)]
        points_out: Option<PathBuf>,
    },
    /// Compares backpropagated gradients with central finite differences.
    Gradcheck {
        #[command(flatten)]
        arch: ArchArgs,
        /// Random (input, target) pairs drawn from noisy codewords.
        #[arg(long, default_value_t = 10)]
        pairs: usize,
        /// SNR in dB of the channel producing the inputs.
        #[arg(long, default_value_t = 1.0)]
        snr: f64,
        /// Finite-difference step.
        #[arg(long, default_value_t = 1e-5)]
        step: f64,
        /// Parameters checked per weight or bias block; larger blocks are sampled.
        #[arg(long, default_value_t = 256)]
        max_per_layer: usize,
    },
    /// Trainable parameter count of an architecture.
    ParamCount {
        #[command(flatten)]
        arch: ArchArgs,
        /// Also list each layer.
        #[arg(long)]
        layers: bool,
    },
    /// Lists the registered decoders.
    Decoders,
}

#[derive(Args, Serialize)]
struct ArchArgs {
    /// Architecture as KIND:h1,h2,h3 with KIND mlp or cnn (CNN widths are filter counts).
    #[arg(long)]
    arch: String,
    #[arg(long, default_value_t = 1)]
    frames: usize,
}

impl ArchArgs {
    fn spec(&self) -> Result<ArchitectureSpec> {
        let (kind, hidden) = parse_arch(&self.arch)?;
        Ok(ArchitectureSpec::for_frames(kind, hidden, self.frames)?)
    }
}

#[derive(Args, Serialize)]
struct CodebookArgs {
    /// Number of concatenated 4B6B frames.
    #[arg(long, default_value_t = 1)]
    frames: usize,
    /// Shuffle each frame's mapping, seeded by --seed.
    #[arg(long)]
    shuffle: bool,
    /// Load the codebook from a JSON file instead (overrides --frames and --shuffle).
    #[arg(long)]
    codebook: Option<PathBuf>,
}

impl CodebookArgs {
    fn load(&self, seed: u64) -> Result<Codebook> {
        if let Some(path) = &self.codebook {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            return Ok(Codebook::from_json(&text)?);
        }
        if self.frames == 0 {
            bail!("--frames must be at least 1");
        }
        Ok(if self.shuffle {
            Codebook::shuffled_concat(self.frames, seed)
        } else {
            Codebook::repeated(self.frames)
        })
    }
}

#[derive(Args, Serialize)]
struct StopArgs {
    /// Stop a BER point after this many source-bit errors.
    #[arg(long, default_value_t = 100)]
    min_errors: u64,
    /// Stop a BER point after this many transmitted 6-bit frames.
    #[arg(long, default_value_t = 10_000_000)]
    max_frames: u64,
}

#[derive(Args, Serialize)]
struct SweepArgs {
    /// Comma-separated decoder specs: lookup, ml, exhaustive-map, neural=PATH.
    #[arg(long, value_delimiter = ',', default_value = "lookup,ml")]
    decoders: Vec<String>,
    #[arg(long, default_value_t = 0.0)]
    snr_start: f64,
    #[arg(long, default_value_t = 10.0)]
    snr_stop: f64,
    #[arg(long, default_value_t = 1.0)]
    snr_step: f64,
    #[command(flatten)]
    codebook: CodebookArgs,
    #[command(flatten)]
    stop: StopArgs,
}

impl SweepArgs {
    fn config(&self, seed: u64) -> SweepConfig {
        SweepConfig {
            snr_start: self.snr_start,
            snr_stop: self.snr_stop,
            snr_step: self.snr_step,
            min_errors: self.stop.min_errors,
            max_frames: self.stop.max_frames,
            seed,
        }
    }
}

#[derive(Args, Serialize)]
struct TrainArgs {
    #[command(flatten)]
    arch: ArchArgs,
    /// Shuffle each frame's mapping, seeded by --seed.
    #[arg(long)]
    shuffle: bool,
    /// Training SNR in dB, under --snr-convention.
    #[arg(long, default_value_t = 1.0)]
    snr: f64,
    /// Epoch cap; training stops earlier once the loss converges.
    #[arg(long, default_value_t = 20_000)]
    epochs: usize,
    #[arg(long, default_value_t = 16)]
    batch: usize,
    /// Adam learning rate.
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Epochs in the moving window of the convergence test (0 disables it).
    #[arg(long, default_value_t = 50)]
    convergence_window: usize,
    /// Relative improvement of the windowed mean loss below which training stops.
    #[arg(long, default_value_t = 1e-5)]
    convergence_eps: f64,
    /// Checkpoint path.
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch loss history as CSV.
    #[arg(long)]
    loss_log: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Csv,
    Json,
}

/// Everything needed to re-run a command, written next to its outputs.
#[derive(Serialize)]
struct RunManifest<'a> {
    subcommand: &'a str,
    flags: &'a Cli,
    seed: u64,
    version: &'static str,
    outputs: Vec<PathBuf>,
}

fn subcommand_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Capacity { .. } => "capacity",
        Command::RateTable { .. } => "rate-table",
        Command::CountSequences { .. } => "count-sequences",
        Command::ShuffleCodebook { .. } => "shuffle-codebook",
        Command::Train(_) => "train",
        Command::Eval { .. } => "eval",
        Command::Sweep { .. } => "sweep",
        Command::Compare { .. } => "compare",
        Command::Gradcheck { .. } => "gradcheck",
        Command::ParamCount { .. } => "param-count",
        Command::Decoders => "decoders",
    }
}

/// Writes `text` to `path`, or to stdout when there is no path.
fn emit(text: &str, path: Option<&Path>, outputs: &mut Vec<PathBuf>) -> Result<()> {
    match path {
        Some(p) => {
            fs::write(p, text).with_context(|| format!("writing {}", p.display()))?;
            outputs.push(p.to_path_buf());
        }
        None => print!("{text}"),
    }
    Ok(())
}

fn channel(cli: &Cli, snr_db: f64) -> ChannelModel {
    ChannelModel::new(snr_db).with_convention(cli.snr_convention)
}

fn build_decoders(specs: &[String], cb: &Arc<Codebook>) -> Result<Vec<Box<dyn Decoder>>> {
    let registry = DecoderRegistry::with_builtins();
    specs
        .iter()
        .map(|s| registry.create(s, cb.clone()).with_context(|| format!("decoder {s:?}")))
        .collect()
}

fn format_points(points: &[BerPoint], format: Format) -> Result<String> {
    Ok(match format {
        Format::Csv => eval::to_csv(points),
        Format::Json => eval::to_json(points)? + "\n",
    })
}

fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    let mut outputs = Vec::new();
    match &cli.command {
        Command::Capacity { rds, digits } => {
            let c = capacity(&ConstraintFsm::dc_free(*rds)?)?;
            println!("{:.*}", digits, c.capacity);
        }
        Command::RateTable { rds, max_k } => {
            let rows = rate_table(&ConstraintFsm::dc_free(*rds)?, *max_k)?;
            println!("{:>4} {:>4} {:>8} {:>8}", "k", "n", "R", "eta(%)");
            for r in rows {
                println!("{:>4} {:>4} {:>8.4} {:>8.2}", r.k, r.n, r.rate, r.efficiency * 100.0);
            }
        }
        Command::CountSequences { rds, length } => {
            let fsm = ConstraintFsm::dc_free(*rds)?;
            println!("count {}", count_sequences(&fsm, *length));
            if *length > 0 {
                println!("bits_per_symbol {:.6}", log2_count_sequences(&fsm, *length) / *length as f64);
            }
        }
        Command::ShuffleCodebook { frames, out } => {
            let cb = Codebook::shuffled_concat(*frames, cli.seed);
            emit(&(cb.to_json()? + "\n"), out.as_deref(), &mut outputs)?;
        }
        Command::Train(args) => train(cli, args, &mut outputs)?,
        Command::Eval {
            decoder,
            snr,
            codebook,
            stop,
            format,
            out,
        } => {
            let cb = Arc::new(codebook.load(cli.seed)?);
            let d = build_decoders(std::slice::from_ref(decoder), &cb)?.remove(0);
            let rule = StopRule {
                min_errors: stop.min_errors,
                max_frames: stop.max_frames,
                seed: cli.seed,
            };
            let point = eval::measure_ber(d.as_ref(), &cb, &channel(cli, *snr), &rule)?;
            emit(&format_points(&[point], *format)?, out.as_deref(), &mut outputs)?;
        }
        Command::Sweep { sweep, format, out } => {
            let points = run_sweep(cli, sweep, &[])?;
            emit(&format_points(&points, *format)?, out.as_deref(), &mut outputs)?;
        }
        Command::Compare {
            sweep,
            reference,
            target_ber,
            points_out,
        } => {
            let points = run_sweep(cli, sweep, std::slice::from_ref(reference))?;
            let mut names: Vec<&str> = Vec::new();
            for p in &points {
                if !names.contains(&p.decoder.as_str()) {
                    names.push(&p.decoder);
                }
            }
            let reference_name = names[0];
            let reference_curve = eval::curve(&points, reference_name);
            let mut text = format!("# gap to {reference_name} at BER {target_ber:e}, in dB\n");
            for name in &names[1..] {
                let gap = eval::db_gap_at_ber(&eval::curve(&points, name), &reference_curve, *target_ber);
                match gap {
                    Ok(g) => writeln!(text, "{name} {g:.3}")?,
                    Err(e) => writeln!(text, "{name} n/a ({e})")?,
                }
            }
            print!("{text}");
            if let Some(p) = points_out {
                emit(&eval::to_csv(&points), Some(p), &mut outputs)?;
            }
        }
        Command::Gradcheck {
            arch,
            pairs,
            snr,
            step,
            max_per_layer,
        } => {
            let spec = arch.spec()?;
            let model = NeuralModel::build(&spec, cli.seed)?;
            let cb = Codebook::repeated(arch.frames);
            let ch = channel(cli, *snr);
            let mut rng = stream_rng(cli.seed, 1);
            let mut report = GradCheckReport::default();
            for _ in 0..*pairs {
                let source = BitWord::from_value(rng.random_range(0..cb.num_mappings()), cb.total_source_len());
                let rx = ch.transmit(&cb.encode(&source)?, &mut rng);
                let targets: Vec<f64> = source.bits().iter().map(|&b| f64::from(b)).collect();
                let r = gradient_check(&model, rx.llrs(), &targets, *step, *max_per_layer, &mut rng)?;
                report = report.merge(r);
            }
            println!("architecture {spec}");
            println!("params {}", model.total_params());
            println!("checked {}", report.checked);
            println!("skipped_kinks {}", report.skipped_kinks);
            println!("max_relative_error {:e}", report.max_relative_error);
            println!("worst_param {}", report.worst_param);
            if report.max_relative_error > GRADCHECK_TOLERANCE {
                bail!(
                    "relative error {:e} exceeds {GRADCHECK_TOLERANCE:e}",
                    report.max_relative_error
                );
            }
        }
        Command::ParamCount { arch, layers } => {
            let model = NeuralModel::build(&arch.spec()?, cli.seed)?;
            if *layers {
                for (i, l) in model.layers().iter().enumerate() {
                    println!("layer{i} {:?} {}", l.shape, l.shape.param_count());
                }
            }
            println!("{}", model.total_params());
        }
        Command::Decoders => {
            for (name, summary) in DecoderRegistry::with_builtins().names() {
                println!("{name:<16}{summary}");
            }
        }
    }
    Ok(outputs)
}

/// Sweeps `extra` decoders (placed first) followed by the requested ones.
fn run_sweep(cli: &Cli, args: &SweepArgs, extra: &[String]) -> Result<Vec<BerPoint>> {
    let cb = Arc::new(args.codebook.load(cli.seed)?);
    let mut specs: Vec<String> = extra.to_vec();
    specs.extend(args.decoders.iter().filter(|d| !extra.contains(d)).cloned());
    let decoders = build_decoders(&specs, &cb)?;
    let refs: Vec<&dyn Decoder> = decoders.iter().map(|d| d.as_ref()).collect();
    Ok(eval::sweep(&refs, &cb, &channel(cli, 0.0), &args.config(cli.seed))?)
}

fn train(cli: &Cli, args: &TrainArgs, outputs: &mut Vec<PathBuf>) -> Result<()> {
    let spec = args.arch.spec()?;
    let cb = if args.shuffle {
        Codebook::shuffled_concat(args.arch.frames, cli.seed)
    } else {
        Codebook::repeated(args.arch.frames)
    };
    let cfg = TrainingConfig {
        train_snr_db: args.snr,
        epochs: args.epochs,
        batch_size: args.batch,
        lr: args.lr,
        seed: cli.seed,
        convergence_window: args.convergence_window,
        convergence_eps: args.convergence_eps,
        ..TrainingConfig::default()
    };
    let mut model = NeuralModel::build(&spec, cli.seed)?;
    let report = training::train(&mut model, &cb, &cfg, &channel(cli, args.snr))?;
    model.save(&args.out)?;
    outputs.push(args.out.clone());
    if let Some(path) = &args.loss_log {
        let mut csv = String::from("epoch,loss\n");
        for (i, l) in report.loss_history.iter().enumerate() {
            writeln!(csv, "{},{l:e}", i + 1)?;
        }
        emit(&csv, Some(path), outputs)?;
    }
    println!("architecture {spec}");
    println!("params {}", model.total_params());
    println!("epochs {}", report.epochs());
    println!("stop {:?}", report.stop);
    println!("final_loss {:e}", report.final_loss());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn execute(cli: &Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring the worker pool")?;
    }
    let outputs = run(cli)?;
    if let Some(path) = &cli.manifest {
        let manifest = RunManifest {
            subcommand: subcommand_name(&cli.command),
            flags: cli,
            seed: cli.seed,
            version: env!("CARGO_PKG_VERSION"),
            outputs,
        };
        fs::write(path, serde_json::to_string_pretty(&manifest)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
