use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use docstage::pipeline::{self, PipelineConfig, PipelineError};

/// Document-lifecycle analytics and temporal-stage prediction pipelines.
///
/// Everything that changes numbers lives in the TOML config; flags only
/// choose the subcommand, paths and thread count.
#[derive(Debug, Parser)]
#[command(name = "docstage", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Pipeline config. Defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory; earlier stages' outputs are read from here too.
    #[arg(long, global = true, value_name = "DIR", default_value = "out")]
    out: PathBuf,

    /// Cap on worker threads. Results do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,

    /// Log progress to stderr.
    #[arg(long, short, global = true)]
    verbose: bool,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Generate a synthetic corpus, its ground truth and a calibration report.
    Simulate,
    /// Lifecycle statistics of a corpus as JSON and CSV.
    Analyze,
    /// Snapshot a corpus into train/test feature tables.
    Featurize,
    /// Fit the full-feature model and the elapsed-time baseline.
    Train,
    /// Score both models on the test split and test the difference.
    Evaluate,
    /// Run every stage in order and print a summary.
    Repro,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Analyze => "analyze",
            Command::Featurize => "featurize",
            Command::Train => "train",
            Command::Evaluate => "evaluate",
            Command::Repro => "repro",
        }
    }
}

fn kind(e: &PipelineError) -> &'static str {
    match e {
        PipelineError::Config { .. } => "config",
        PipelineError::Io { .. } => "io",
        PipelineError::Input { .. } | PipelineError::Json(_) => "input",
        PipelineError::Generator(_) => "simulate",
        PipelineError::Filter(_) => "filter",
        PipelineError::Analytics(_) => "analytics",
        PipelineError::Feature(_) => "features",
        PipelineError::Predictor(_) => "predictor",
    }
}

fn run(cmd: Command, config: Option<&Path>, out: &Path) -> Result<(), PipelineError> {
    let cfg = match config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    match cmd {
        Command::Simulate => {
            let s = pipeline::simulate(&cfg, out)?;
            log::info!("wrote {} documents ({} records)", s.documents, s.records);
        }
        Command::Analyze => {
            let a = pipeline::analyze(&cfg, out)?;
            log::info!("analyzed {} documents, {} events", a.documents, a.events);
        }
        Command::Featurize => {
            let m = pipeline::featurize(&cfg, out)?;
            log::info!("{} train rows, {} test rows, layout {}", m.train_rows, m.test_rows, m.layout.tag);
        }
        Command::Train => {
            let t = pipeline::train(&cfg, out)?;
            log::info!("trained on {} rows", t.train_rows);
        }
        Command::Evaluate => {
            let r = pipeline::evaluate(&cfg, out)?;
            log::info!("model {:.4} baseline {:.4} p {}", r.model.macro_accuracy, r.baseline.macro_accuracy, r.p_value);
        }
        Command::Repro => print!("{}", pipeline::repro(&cfg, out)?.render()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn })
        .format_timestamp(None)
        .init();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error kind=usage command={}: --threads must be at least 1", cli.command.name());
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error kind=usage command={}: {e}", cli.command.name());
            return ExitCode::from(2);
        }
    }
    match run(cli.command, cli.config.as_deref(), &cli.out) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let k = kind(&e);
            eprintln!("error kind={k} command={}: {e}", cli.command.name());
            ExitCode::from(if k == "config" { 2 } else { 1 })
        }
    }
}
