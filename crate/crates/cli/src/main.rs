use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use merge_saliency::config::{PipelineConfig, Source};
use merge_saliency::pipeline::{self, Pipeline, Stage};
use merge_saliency::{Error, Result};

/// Merge-decision saliency pipeline.
#[derive(Debug, Parser)]
#[command(name = "merge-saliency", version)]
struct Cli {
    /// Pipeline config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Artifact directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Replaces the config's top-level seed.
    #[arg(long, global = true)]
    seed_override: Option<u64>,
    /// Rerun stages even if their cached outputs are current.
    #[arg(long, global = true)]
    force: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Extract and align demonstrations from recorded tracks.
    Ingest,
    /// Generate and align synthetic demonstrations.
    Synth,
    /// Train the predictor.
    Train,
    /// Score the predictor on the test split.
    Eval,
    /// Shapley values for every demonstration and moment.
    Explain,
    /// KL and MI curves across the decision process.
    Quantify,
    /// Summarize an artifact directory.
    Report,
    /// All stages, or one with --stage.
    Run {
        #[arg(long)]
        stage: Option<String>,
    },
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut cfg = PipelineConfig::load(path)?;
    if let Some(seed) = cli.seed_override {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn pipeline(cli: &Cli, cfg: PipelineConfig) -> Result<Pipeline> {
    let mut p = Pipeline::new(cfg, &cli.out)?;
    p.force = cli.force;
    Ok(p)
}

fn print_report(out: &Path) -> Result<()> {
    let text = pipeline::report(out)?;
    let path = out.join(pipeline::REPORT);
    std::fs::write(&path, &text).map_err(|e| Error::io(path, e))?;
    print!("{text}");
    Ok(())
}

fn execute(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    let single = |stage: Stage| -> Result<()> { pipeline(cli, load_config(cli)?)?.run_stage(stage) };
    match &cli.command {
        Command::Report if cli.config.is_none() => print_report(&cli.out),
        Command::Report => {
            single(Stage::Report)?;
            print_report(&cli.out)
        }
        Command::Ingest => single(Stage::Ingest),
        Command::Synth => {
            let mut cfg = load_config(cli)?;
            cfg.data.source = Source::Synth;
            pipeline(cli, cfg)?.run_stage(Stage::Ingest)
        }
        Command::Train => single(Stage::Train),
        Command::Eval => single(Stage::Eval),
        Command::Explain => single(Stage::Explain),
        Command::Quantify => single(Stage::Quantify),
        Command::Run { stage: Some(name) } => {
            let stage: Stage = name.parse()?;
            single(stage)
        }
        Command::Run { stage: None } => {
            pipeline(cli, load_config(cli)?)?.run()?;
            print_report(&cli.out)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
