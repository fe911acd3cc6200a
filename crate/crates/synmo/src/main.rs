//! Thin CLI over the pipeline library. All real work lives in
//! `synmo::pipeline`; this binary parses arguments, loads the config, and
//! maps errors to exit codes (1 usage/config, 2 data, 3 divergence).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use synmo::pipeline::{
    cmd_eval, cmd_finetune, cmd_gen_corpus, cmd_imu, cmd_ingest_realworld, cmd_report,
    cmd_sample, cmd_train, EvalArgs, PipelineConfig, Profile, SyntheticCorpusSpec,
};
use synmo::{Result, SynmoError};

#[derive(Parser)]
#[command(
    name = "synmo",
    about = "Train an acceleration-refined motion diffusion model, synthesize virtual IMU data, and evaluate it in a HAR harness",
    version
)]
struct Cli {
    /// JSON configuration file (defaults apply when omitted).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory; overrides the config file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// fast: 100-step schedule, 3 eval repetitions. full: 1000 steps, 10.
    #[arg(long, global = true, value_enum)]
    profile: Option<ProfileArg>,

    #[command(subcommand)]
    command: Command,
}

#[derive(clap::ValueEnum, Clone, Copy)]
enum ProfileArg {
    Fast,
    Full,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic motion corpus.
    GenCorpus(GenCorpusArgs),
    /// Train the base denoiser on the corpus (no acceleration term).
    Train,
    /// Continue training a base checkpoint with the acceleration term.
    Finetune(FinetuneArgs),
    /// Sample one motion per prompt from a checkpoint.
    Sample(SampleArgs),
    /// Synthesize IMU signals for every motion in a directory.
    Imu(ImuArgs),
    /// Ingest recorded IMU CSVs into the pipeline signal format.
    IngestRealworld(IngestArgs),
    /// Train on synthetic windows, evaluate on real windows, write reports.
    Eval(EvalCliArgs),
    /// Per-category acceleration-loss delta between two checkpoints.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenCorpusArgs {
    /// JSON corpus spec; the built-in five-class spec when omitted.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Items per class for the built-in spec.
    #[arg(long, default_value_t = 8)]
    count: usize,
}

#[derive(Args)]
struct FinetuneArgs {
    /// Base checkpoint produced by `train`.
    #[arg(long)]
    base: PathBuf,
    /// Permit finetuning with lambda_acc = 0.
    #[arg(long)]
    allow_zero_acc: bool,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Text file with one prompt per line (# comments allowed).
    #[arg(long)]
    prompts: PathBuf,
    /// Frames per sample; the checkpoint's window length when omitted.
    #[arg(long)]
    frames: Option<usize>,
}

#[derive(Args)]
struct ImuArgs {
    /// Directory of .motion files (corpus or samples).
    #[arg(long)]
    motions: PathBuf,
}

#[derive(Args)]
struct IngestArgs {
    /// Directory of acc_*/gyr_* CSV pairs.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 20.0)]
    target_fps: f64,
}

#[derive(Args)]
struct EvalCliArgs {
    /// Directory of synthetic IMU signals (training side).
    #[arg(long)]
    synthetic: PathBuf,
    /// Directory of real IMU signals (evaluation side).
    #[arg(long)]
    real: PathBuf,
    /// Base checkpoint for the delta table (needs --refined and --corpus).
    #[arg(long)]
    base: Option<PathBuf>,
    #[arg(long)]
    refined: Option<PathBuf>,
    /// Corpus to evaluate the delta on.
    #[arg(long)]
    corpus: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    base: PathBuf,
    #[arg(long)]
    refined: PathBuf,
    /// Corpus to evaluate on; the configured corpus dir when omitted.
    #[arg(long)]
    corpus: Option<PathBuf>,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => {
            let mut c = PipelineConfig::default();
            c.apply_env_overrides();
            c
        }
    };
    if let Some(profile) = cli.profile {
        config.apply_profile(match profile {
            ProfileArg::Fast => Profile::Fast,
            ProfileArg::Full => Profile::Full,
        });
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: &Cli) -> Result<()> {
    let config = load_config(cli)?;
    match &cli.command {
        Command::GenCorpus(args) => {
            let spec = match &args.spec {
                Some(path) => {
                    let text = std::fs::read_to_string(path)
                        .map_err(|e| SynmoError::Config(format!("{}: {e}", path.display())))?;
                    let mut spec: SyntheticCorpusSpec = serde_json::from_str(&text)
                        .map_err(|e| SynmoError::Config(format!("{}: {e}", path.display())))?;
                    spec.seed = config.seed;
                    spec
                }
                None => SyntheticCorpusSpec::default_five_class(args.count, config.seed),
            };
            let manifest = cmd_gen_corpus(&config, &spec, &config.corpus_dir)?;
            println!(
                "wrote {} motions to {}",
                manifest.items.len(),
                config.corpus_dir.display()
            );
        }
        Command::Train => {
            let path = cmd_train(&config)?;
            println!("checkpoint: {}", path.display());
        }
        Command::Finetune(args) => {
            let (path, report) = cmd_finetune(&config, &args.base, args.allow_zero_acc)?;
            println!("checkpoint: {}", path.display());
            println!(
                "held-out acceleration loss: {:.6} -> {:.6}",
                report.holdout_acc_before, report.holdout_acc_after
            );
        }
        Command::Sample(args) => {
            let out_dir = config.output_dir.join("samples");
            let output =
                cmd_sample(&config, &args.checkpoint, &args.prompts, args.frames, &out_dir)?;
            println!("wrote {} motions to {}", output.items.len(), out_dir.display());
            for item in &output.items {
                println!("  {} -> {}", item.file, item.assigned_label);
            }
        }
        Command::Imu(args) => {
            let out_dir = config.output_dir.join("imu");
            let count = cmd_imu(&config, &args.motions, &out_dir)?;
            println!("wrote {count} signal files to {}", out_dir.display());
        }
        Command::IngestRealworld(args) => {
            let out_dir = config.output_dir.join("ingested");
            let summary = cmd_ingest_realworld(&config, &args.input, &out_dir, args.target_fps)?;
            println!(
                "ingested {} recordings to {}",
                summary.files.len(),
                out_dir.display()
            );
            for f in &summary.files {
                println!(
                    "  {}: {} samples at {} Hz ({} dup, {} non-monotonic rows dropped)",
                    f.stem,
                    f.samples,
                    summary.target_fps,
                    f.warnings.dropped_duplicate,
                    f.warnings.dropped_non_monotonic
                );
            }
        }
        Command::Eval(args) => {
            let report = cmd_eval(
                &config,
                &EvalArgs {
                    synthetic_dir: args.synthetic.clone(),
                    real_dir: args.real.clone(),
                    base_checkpoint: args.base.clone(),
                    refined_checkpoint: args.refined.clone(),
                    corpus_dir: args.corpus.clone(),
                },
            )?;
            println!(
                "balanced accuracy: {:.4} +/- {:.4} over {} runs",
                report.balanced_accuracy_mean,
                report.balanced_accuracy_std,
                report.balanced_accuracy_runs.len()
            );
            println!("reports written to {}", config.output_dir.display());
        }
        Command::Report(args) => {
            let corpus = args.corpus.clone().unwrap_or_else(|| config.corpus_dir.clone());
            let report = cmd_report(&config, &args.base, &args.refined, &corpus)?;
            for c in &report.categories {
                println!(
                    "  {}: base {:.6} refined {:.6} delta {:+.6} ({} items)",
                    c.label, c.base_mean, c.refined_mean, c.delta, c.count
                );
            }
            println!(
                "overall: {:.6} -> {:.6} ({:+.2}%)",
                report.overall_base,
                report.overall_refined,
                100.0 * report.overall_relative_change
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // clap's own help/version exits are not errors
            use clap::error::ErrorKind;
            if matches!(err.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{err}");
                return ExitCode::SUCCESS;
            }
            eprint!("{err}");
            return ExitCode::from(1);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
