use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kshape_cli::commands::{self, PointSource, SyntheticKind};
use kshape_cli::config::RunConfig;
use kshape_cli::model::ModelFile;
use kshape_cli::{CliError, CliResult};

/// Kernel regression with hard shape constraints on derivatives.
#[derive(Debug, Parser)]
#[command(name = "kshape", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a model described by a JSON config.
    Fit {
        #[arg(long)]
        config: PathBuf,
        /// Model file to write.
        #[arg(long)]
        out: PathBuf,
        /// Also write the summary to this file (it is always printed).
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Evaluate a model (and optionally its derivatives) at points.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// CSV file with the model's feature columns.
        #[arg(long, conflicts_with = "grid", required_unless_present = "grid")]
        points: Option<PathBuf>,
        /// One `lo:hi:n` axis per feature; the grid is their product.
        #[arg(long, num_args = 1, allow_hyphen_values = true)]
        grid: Vec<String>,
        /// Derivative orders per feature, e.g. `1` or `0,1`; repeatable.
        #[arg(long)]
        derivative: Vec<String>,
        /// Leave the biases out of the function values.
        #[arg(long)]
        no_bias: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the constraints of a model on a grid and report violations as JSON.
    Verify {
        #[arg(long)]
        model: PathBuf,
        /// Check the constraints declared in this config instead of the model's own.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Intervals per axis; the grid has one more point per axis.
        #[arg(long, default_value_t = 9999)]
        grid: usize,
        /// Directory for per-constraint margin CSV files.
        #[arg(long)]
        margins: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// A-posteriori distance bound from a tightened and a discretized fit.
    Bounds {
        #[arg(long)]
        tightened: PathBuf,
        #[arg(long)]
        discretized: PathBuf,
        /// Strong-convexity modulus; derived from a ridge objective when absent.
        #[arg(long, allow_negative_numbers = true)]
        mu: Option<f64>,
    },
    /// Write a seeded synthetic data set as CSV.
    GenSynthetic {
        #[arg(long, value_enum, default_value_t = SyntheticKind::Parabola)]
        kind: SyntheticKind,
        #[arg(long, default_value_t = 30)]
        n: usize,
        /// Noise level of the parabola data.
        #[arg(long, default_value_t = 1.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn emit(text: &str, out: Option<&PathBuf>) -> CliResult<()> {
    match out {
        Some(path) => {
            std::fs::write(path, text).map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            let newline = if text.ends_with('\n') { "" } else { "\n" };
            match write!(stdout, "{text}{newline}").and_then(|()| stdout.flush()) {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
                _ => Ok(()),
            }
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Fit { config, out, summary } => {
            let config = RunConfig::load(&config)?;
            let (model, text) = commands::fit(&config)?;
            emit(&model, Some(&out))?;
            if let Some(path) = &summary {
                emit(&text, Some(path))?;
            }
            emit(&text, None)
        }
        Command::Predict { model, points, grid, derivative, no_bias, out } => {
            let model = ModelFile::load(&model)?;
            let source = match &points {
                Some(p) => PointSource::Csv(p),
                None => PointSource::Grid(&grid),
            };
            emit(&commands::predict(&model, source, &derivative, !no_bias)?, out.as_ref())
        }
        Command::Verify { model, config, grid, margins, out } => {
            let model = ModelFile::load(&model)?;
            let config = config.map(|c| RunConfig::load(&c)).transpose()?;
            emit(&commands::verify(&model, config.as_ref(), grid, margins.as_deref())?, out.as_ref())
        }
        Command::Bounds { tightened, discretized, mu } => {
            let a = ModelFile::load(&tightened)?;
            let b = ModelFile::load(&discretized)?;
            emit(&commands::bounds(&a, &b, mu)?, None)
        }
        Command::GenSynthetic { kind, n, noise, seed, out } => {
            emit(&commands::gen_synthetic(kind, n, noise, seed)?, out.as_ref())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("kshape: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
