use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use harlab_bench::config::ConfigError;
use harlab_bench::{rerender, run, ExperimentConfig, ReportFormat, StageToggles};

/// Reproduce the HAR classifier comparison and write a report.
#[derive(Debug, Parser)]
#[command(name = "harlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML experiment configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Dataset root containing `train/` and `test/`.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Comma-separated report formats: markdown, csv, json.
    #[arg(long, global = true, value_delimiter = ',')]
    format: Option<Vec<ReportFormat>>,
    /// Comma-separated stages for `all`, e.g. `explore,evaluate,significance`.
    #[arg(long, global = true, value_delimiter = ',')]
    stages: Option<Vec<String>>,
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Class counts and the static/dynamic magnitude summary.
    Explore,
    /// Test accuracy on the top-k ANOVA features.
    SweepFeatures,
    /// Exhaustive k-fold grid search on the training split.
    GridSearch,
    /// Test accuracy and per-class scores of the best models.
    Evaluate,
    /// Welch and 5x2cv tests between the compared models.
    Significance,
    /// MLP accuracy against the number of hidden layers.
    SweepHidden,
    /// Every stage enabled in the configuration (or in --stages).
    All,
    /// Re-render markdown and CSV from an existing report.json.
    Report,
}

impl Command {
    fn stage_names(&self) -> &'static [&'static str] {
        match self {
            Command::Explore => &["explore"],
            Command::SweepFeatures => &["sweep-features"],
            Command::GridSearch => &["grid-search"],
            Command::Evaluate => &["evaluate", "per-class"],
            Command::Significance => &["significance"],
            Command::SweepHidden => &["sweep-hidden"],
            Command::All | Command::Report => &[],
        }
    }
}

fn build_config(cli: &Cli) -> Result<ExperimentConfig, ConfigError> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(data) = &cli.data {
        config.data = data.clone();
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.out = out.clone();
    }
    if let Some(formats) = &cli.format {
        config.formats = formats.clone();
    }
    match (&cli.command, &cli.stages) {
        (Command::All, Some(names)) => config.stages = StageToggles::from_names(names)?,
        (Command::All | Command::Report, None) => {}
        (_, Some(_)) => return Err(ConfigError::Invalid("--stages only applies to `all`".into())),
        (verb, None) => config.stages = StageToggles::from_names(verb.stage_names())?,
    }
    config.validate()?;
    Ok(config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let config = match build_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: [config] {e}");
            return ExitCode::from(1);
        }
    };

    if let Command::Report = cli.command {
        return match rerender(&config.out, &config.formats) {
            Ok(report) => {
                print!("{}", harlab_bench::render::markdown(&report));
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {}", e.chain());
                ExitCode::from(2)
            }
        };
    }

    match run(&config) {
        Ok(outcome) => {
            let verb = if outcome.verified_existing {
                "verified identical"
            } else {
                "wrote"
            };
            println!(
                "{verb} {} artifacts in {}",
                outcome.artifacts.len(),
                outcome.out_dir.display()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", e.chain());
            let manifest = config.out.join("manifest.json");
            if e.stage != harlab_bench::Stage::Config && manifest.is_file() {
                eprintln!("see {}", manifest.display());
            }
            ExitCode::from(2)
        }
    }
}
