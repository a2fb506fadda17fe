mod commands;
mod config;
mod log;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use xmodal_core::pairing::Split;

use config::PipelineConfig;

/// Artwork-to-music pipeline: pair embeddings, split, extract spectrograms,
/// train the toy model and score generations.
#[derive(Debug, Parser)]
#[command(name = "xmodal", version)]
struct Cli {
    /// JSON configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Directory for all outputs, including the effective config.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Greedy one-to-one artwork/music pairing plus similarity statistics.
    Pair(PairArgs),
    /// Stratified train/test/val assignment of a manifest.
    Split(SplitArgs),
    /// Log-mel spectrograms for every WAV in a directory.
    Melspec(MelspecArgs),
    /// Toy projection + denoiser training.
    Train(TrainArgs),
    /// FAD, KL divergence and cosine scores for a manifest.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
struct PairArgs {
    #[arg(long)]
    artworks: Option<PathBuf>,
    #[arg(long)]
    music: Option<PathBuf>,
    /// Tab-separated `artwork_id, style[, description]` file.
    #[arg(long)]
    styles: Option<PathBuf>,
    #[arg(long)]
    prompt: Option<String>,
    #[arg(long)]
    negative_prompt: Option<String>,
}

#[derive(Debug, Args)]
struct SplitArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    train_fraction: Option<f64>,
    #[arg(long)]
    val_count: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct MelspecArgs {
    #[arg(long)]
    audio_dir: Option<PathBuf>,
    #[arg(long)]
    sample_rate: Option<u32>,
    #[arg(long)]
    n_fft: Option<usize>,
    #[arg(long)]
    hop: Option<usize>,
    #[arg(long)]
    n_mels: Option<usize>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Use the synthetic linear-conditioning task.
    #[arg(long)]
    synthetic: bool,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    artworks: Option<PathBuf>,
    #[arg(long)]
    spectrogram_dir: Option<PathBuf>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    warmup: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    accumulation_steps: Option<usize>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitFilter {
    Train,
    Test,
    Val,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    generated: Option<PathBuf>,
    #[arg(long)]
    groundtruth: Option<PathBuf>,
    #[arg(long)]
    artworks: Option<PathBuf>,
    /// Only score records of this split.
    #[arg(long, value_enum)]
    only: Option<SplitFilter>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn set_path(slot: &mut Option<PathBuf>, value: Option<PathBuf>) {
    if value.is_some() {
        *slot = value;
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    set(&mut cfg.paths.output_dir, cli.out_dir);

    let mut only = None;
    let name = match &cli.command {
        Command::Pair(_) => "pair",
        Command::Split(_) => "split",
        Command::Melspec(_) => "melspec",
        Command::Train(_) => "train",
        Command::Eval(_) => "eval",
    };
    match cli.command {
        Command::Pair(a) => {
            set_path(&mut cfg.paths.artworks, a.artworks);
            set_path(&mut cfg.paths.music, a.music);
            set_path(&mut cfg.paths.styles, a.styles);
            set(&mut cfg.prompt, a.prompt);
            set(&mut cfg.negative_prompt, a.negative_prompt);
        }
        Command::Split(a) => {
            set_path(&mut cfg.paths.manifest, a.manifest);
            set(&mut cfg.split.train_fraction, a.train_fraction);
            set(&mut cfg.split.val_count, a.val_count);
            set(&mut cfg.split.seed, a.seed);
        }
        Command::Melspec(a) => {
            set_path(&mut cfg.paths.audio_dir, a.audio_dir);
            set(&mut cfg.dsp.sample_rate, a.sample_rate);
            set(&mut cfg.dsp.stft.n_fft, a.n_fft);
            set(&mut cfg.dsp.stft.hop, a.hop);
            set(&mut cfg.dsp.n_mels, a.n_mels);
        }
        Command::Train(a) => {
            cfg.toy.synthetic |= a.synthetic;
            set_path(&mut cfg.paths.manifest, a.manifest);
            set_path(&mut cfg.paths.artworks, a.artworks);
            set_path(&mut cfg.paths.spectrogram_dir, a.spectrogram_dir);
            let t = &mut cfg.train;
            set(&mut t.optimizer.lr, a.lr);
            set(&mut t.optimizer.warmup_steps, a.warmup);
            set(&mut t.epochs, a.epochs);
            set(&mut t.batch_size, a.batch_size);
            set(&mut t.accumulation_steps, a.accumulation_steps);
            if a.max_steps.is_some() {
                t.max_steps = a.max_steps;
            }
            set(&mut t.schedule.gamma, a.gamma);
            set(&mut t.seed, a.seed);
        }
        Command::Eval(a) => {
            set_path(&mut cfg.paths.manifest, a.manifest);
            set_path(&mut cfg.paths.generated, a.generated);
            set_path(&mut cfg.paths.groundtruth, a.groundtruth);
            set_path(&mut cfg.paths.artworks, a.artworks);
            only = a.only.map(|s| match s {
                SplitFilter::Train => Split::Train,
                SplitFilter::Test => Split::Test,
                SplitFilter::Val => Split::Val,
            });
        }
    }
    cfg.validate()?;
    log::info("start", json!({"command": name}));

    match name {
        "pair" => commands::pair(&cfg),
        "split" => commands::split(&cfg),
        "melspec" => commands::melspec(&cfg),
        "train" => commands::train(&cfg),
        _ => commands::eval(&cfg, only),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    err.chain()
        .find_map(|e| e.downcast_ref::<xmodal_core::Error>())
        .map_or(1, |e| e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let code = exit_code(&err);
            log::event("error", "failed", json!({"error": format!("{err:#}"), "code": code}));
            ExitCode::from(code)
        }
    }
}
