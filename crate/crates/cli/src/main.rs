use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use psgan_core::dsp::wav::{read_wav, write_wav};
use psgan_core::dsp::{gci_detectors, write_mark_file, DetectorOptions, GciDetector};
use psgan_core::features::{read_features, write_features, write_features_csv};
use psgan_core::gradcheck::run_grad_checks;
use psgan_core::model::read_checkpoint;
use psgan_core::training::toy::{toy_dataset, ToySpec};
use psgan_core::training::{resume, train, Dataset, TrainConfig, Trainer};
use psgan_core::vocoder::{analyze, evaluate_dirs, prepare_dataset, synthesize, target_modes, write_f0_file, SynthesisOptions, TargetMode};

/// Pitch-synchronous multi-scale GAN vocoder.
#[derive(Parser)]
#[command(name = "psgan", version)]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Reproducible execution: single-threaded, seeded, fixed reduction order.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analyse one WAV file into a feature file.
    ExtractFeatures(ExtractArgs),
    /// Analyse a directory of WAV files into a training set.
    PrepareDataset(PrepareArgs),
    /// Train (or resume training) the networks.
    Train(TrainArgs),
    /// Vocode a feature file with a trained checkpoint.
    Synthesize(SynthArgs),
    /// Compare synthesised WAV files with references.
    Evaluate(EvalArgs),
    /// Finite-difference gradient checks of every op and objective.
    GradCheck(GradCheckArgs),
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    wav: PathBuf,
    /// Feature file; defaults to the input name with `.psgf`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write GCI marks.
    #[arg(long)]
    marks: Option<PathBuf>,
    /// Also write the raw F0 track.
    #[arg(long)]
    f0: Option<PathBuf>,
    /// Also write the features as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct PrepareArgs {
    #[arg(long)]
    wav_dir: PathBuf,
    /// Output directory; defaults to `paths.dataset` of the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `glottal` or `speech`; defaults to the configured mode.
    #[arg(long)]
    mode: Option<String>,
}

#[derive(Args)]
struct TrainArgs {
    /// Prepared dataset; defaults to `paths.dataset`.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Run directory; defaults to `paths.output`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    iterations: Option<u64>,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Train on synthetic pulse trains of this total duration instead of a dataset.
    #[arg(long, value_name = "SECONDS")]
    toy: Option<f64>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Defaults to the mode recorded in the checkpoint.
    #[arg(long)]
    mode: Option<String>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    reference: PathBuf,
    #[arg(long)]
    synthesized: PathBuf,
    /// Per-utterance scores as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Full report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct GradCheckArgs {
    /// Channels per layer of the checked networks (at most 8).
    #[arg(long, default_value_t = 4)]
    channels: usize,
}

fn load_config(cli: &Cli) -> Result<TrainConfig> {
    let mut cfg = match &cli.config {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn detector(cfg: &TrainConfig) -> Result<Box<dyn GciDetector>> {
    let opts = DetectorOptions { mark_dir: cfg.analysis.mark_dir.clone() };
    Ok(gci_detectors().create(&cfg.analysis.gci_detector, &opts)?)
}

fn mode(name: &str) -> Result<Box<dyn TargetMode>> {
    Ok(target_modes().create(name, &())?)
}

fn stem(path: &Path) -> String {
    path.file_stem().and_then(|s| s.to_str()).unwrap_or("utterance").to_owned()
}

fn extract(cli: &Cli, a: &ExtractArgs) -> Result<()> {
    let cfg = load_config(cli)?;
    let signal = read_wav(&a.wav)?;
    let name = stem(&a.wav);
    let analysis = analyze(&signal, detector(&cfg)?.as_ref(), &name)?;
    let out = a.out.clone().unwrap_or_else(|| a.wav.with_extension("psgf"));
    write_features(&out, &analysis.features)?;
    if let Some(p) = &a.marks {
        write_mark_file(p, &analysis.marks)?;
    }
    if let Some(p) = &a.f0 {
        write_f0_file(p, &analysis.f0)?;
    }
    if let Some(p) = &a.csv {
        write_features_csv(p, &analysis.features)?;
    }
    println!("{}: {} frames -> {}", a.wav.display(), analysis.features.len(), out.display());
    Ok(())
}

fn prepare(cli: &Cli, a: &PrepareArgs) -> Result<()> {
    let cfg = load_config(cli)?;
    let out = a.out.clone().unwrap_or_else(|| cfg.paths.dataset.clone());
    let m = mode(a.mode.as_deref().unwrap_or(&cfg.mode))?;
    let summary = prepare_dataset(&a.wav_dir, &out, m.as_ref(), detector(&cfg)?.as_ref())?;
    println!("prepared {} utterances, skipped {}", summary.prepared.len(), summary.skipped.len());
    if summary.prepared.is_empty() {
        bail!("no usable audio in {}", a.wav_dir.display());
    }
    Ok(())
}

fn run_train(cli: &Cli, a: &TrainArgs) -> Result<()> {
    let cfg = load_config(cli)?;
    let data = match a.toy {
        Some(seconds) => toy_dataset(&ToySpec { seconds, seed: cfg.seed, ..Default::default() })?,
        None => {
            let dir = a.data.clone().unwrap_or_else(|| cfg.paths.dataset.clone());
            Dataset::load(&dir).with_context(|| format!("loading dataset {}", dir.display()))?
        }
    };
    let out = a.out.clone().unwrap_or_else(|| cfg.paths.output.clone());
    let mut trainer = match &a.resume {
        Some(p) => {
            let mut t = resume(p)?;
            if let Some(s) = cli.seed {
                if s != t.config.seed {
                    warn!("--seed {s} ignored when resuming; the run's random stream continues");
                }
            }
            if cli.config.is_some() {
                t.config.iterations = cfg.iterations;
            }
            t
        }
        None => Trainer::new(cfg, data.stats())?,
    };
    if let Some(n) = a.iterations {
        trainer.config.iterations = n;
    }
    info!("training {} -> {} iterations, {} frames of data", trainer.iteration(), trainer.config.iterations, data.total_frames());
    let summary = train(&mut trainer, &data, &out)?;
    if let Some(last) = summary.metrics.last() {
        println!("iteration {}: {}", last.iter, last.csv_row());
    }
    println!("checkpoint {}", summary.final_checkpoint.display());
    Ok(())
}

fn run_synth(cli: &Cli, a: &SynthArgs) -> Result<()> {
    let features = read_features(&a.features)?;
    let ckpt = read_checkpoint(&a.checkpoint)?;
    let recorded = ckpt.extra.pointer("/config/mode").and_then(|v| v.as_str()).map(str::to_owned);
    let name = match (&a.mode, recorded, &cli.config) {
        (Some(m), _, _) => m.clone(),
        (None, Some(m), _) => m,
        (None, None, Some(_)) => load_config(cli)?.mode,
        (None, None, None) => TrainConfig::default().mode,
    };
    let opts = SynthesisOptions { seed: cli.seed.unwrap_or(0), ..Default::default() };
    let y = synthesize(&features, &ckpt, mode(&name)?.as_ref(), &opts)?;
    write_wav(&a.out, &y)?;
    println!("{} samples -> {}", y.len(), a.out.display());
    Ok(())
}

fn run_eval(a: &EvalArgs) -> Result<()> {
    let report = evaluate_dirs(&a.reference, &a.synthesized)?;
    println!("{report}");
    if let Some(p) = &a.csv {
        fs::write(p, report.to_csv()).with_context(|| p.display().to_string())?;
    }
    if let Some(p) = &a.json {
        fs::write(p, serde_json::to_string_pretty(&report)?).with_context(|| p.display().to_string())?;
    }
    Ok(())
}

fn run_grad_check(cli: &Cli, a: &GradCheckArgs) -> Result<()> {
    let results = run_grad_checks(cli.seed.unwrap_or(0), a.channels)?;
    let mut failed = 0;
    for r in &results {
        let verdict = if r.passed() { "ok" } else { "FAILED" };
        println!("{:<52} {:.3e} < {:.0e}  {verdict}  ({:.1} s)", r.name, r.error, r.tolerance, r.seconds);
        failed += usize::from(!r.passed());
    }
    if failed > 0 {
        bail!("{failed} of {} gradient checks exceeded tolerance", results.len());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if cli.deterministic {
        info!("deterministic mode");
    }
    let result = match &cli.command {
        Command::ExtractFeatures(a) => extract(&cli, a),
        Command::PrepareDataset(a) => prepare(&cli, a),
        Command::Train(a) => run_train(&cli, a),
        Command::Synthesize(a) => run_synth(&cli, a),
        Command::Evaluate(a) => run_eval(a),
        Command::GradCheck(a) => run_grad_check(&cli, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
