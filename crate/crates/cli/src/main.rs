use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use lstm_laglasso::config::{ExperimentConfig, SHIPPED, SHIPPED_SYNTH};
use lstm_laglasso::dataset::{synth_generate, SynthConfig};
use lstm_laglasso::numerics::Rng;
use lstm_laglasso::plot::{plot_data, PlotKind};
use lstm_laglasso::runner::{output_dir, run_experiment, Artifact, OUTPUT_ROOT_ENV};
use lstm_laglasso::selfcheck;

#[derive(Parser)]
#[command(name = "laglasso", version, about = "Walk-forward LSTM forecasting and signal explanation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a study from a TOML config file or a shipped config name.
    Run {
        config: String,
        /// Output directory; overrides `output_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Root for relative output directories.
        #[arg(long, env = OUTPUT_ROOT_ENV)]
        output_root: Option<PathBuf>,
        /// Overrides the config's top-level seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write plot-ready JSON for an artifact.
    Plot {
        artifact: PathBuf,
        #[arg(long)]
        kind: String,
        /// Defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic table as CSV.
    Synth {
        /// Synth TOML file; the shipped one when omitted.
        config: Option<PathBuf>,
        /// Defaults to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the shipped configs.
    Configs,
    /// Run the numerical self-checks.
    Check,
}

fn run(config: &str, out: Option<PathBuf>, root: Option<PathBuf>, seed: Option<u64>) -> Result<()> {
    let mut cfg = ExperimentConfig::resolve(config)?;
    if seed.is_some() {
        cfg.seed = seed;
    }
    let dir = match (out, root) {
        (Some(d), _) => d,
        (None, Some(r)) if cfg.output_dir.is_relative() => r.join(&cfg.output_dir),
        _ => output_dir(&cfg),
    };
    let res = run_experiment(&cfg, &dir)?;
    println!("config hash {}", res.config_hash);
    for f in &res.files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn write_or_print(out: Option<&Path>, s: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, s).with_context(|| format!("writing {}", p.display())),
        None => {
            print!("{s}");
            Ok(())
        }
    }
}

fn plot(artifact: &Path, kind: &str, out: Option<&Path>) -> Result<()> {
    let kind = PlotKind::parse(kind)?;
    let a = Artifact::load(artifact)?;
    let data = plot_data(&a, kind)?;
    write_or_print(out, &(serde_json::to_string_pretty(&data)? + "\n"))
}

fn synth(config: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let text = match config {
        Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => SHIPPED_SYNTH.to_string(),
    };
    let cfg = SynthConfig::from_toml_str(&text)?;
    let table = synth_generate(&cfg, &mut Rng::new(cfg.seed))?;
    match out {
        Some(p) => table.write_csv(p)?,
        None => table.write_csv_to(std::io::stdout().lock())?,
    }
    Ok(())
}

fn check() -> Result<bool> {
    let results = selfcheck::run_all();
    for r in &results {
        println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    Ok(results.iter().all(|r| r.passed))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { config, out, output_root, seed } => run(&config, out, output_root, seed).map(|_| true),
        Command::Plot { artifact, kind, out } => plot(&artifact, &kind, out.as_deref()).map(|_| true),
        Command::Synth { config, out } => synth(config.as_deref(), out.as_deref()).map(|_| true),
        Command::Configs => {
            for (name, _) in SHIPPED {
                println!("{name}");
            }
            Ok(true)
        }
        Command::Check => check(),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
