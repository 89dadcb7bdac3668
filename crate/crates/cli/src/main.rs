//! Command-line front end: run one experiment, compare a sweep, or
//! generate synthetic IDX datasets.

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use fedmask::data::{generate_blobs_split, write_idx};
use fedmask::exp::{
    compare_runs, run_experiment, to_csv, to_json, write_metrics, ExperimentConfig, OutputFormat,
};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "fedmask",
    version,
    about = "Deterministic federated-learning simulator with masked aggregation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a TOML config and emit per-round metrics.
    Run {
        /// Path to the experiment config.
        config: PathBuf,
        /// Override the config's round count.
        #[arg(long)]
        rounds: Option<usize>,
        /// Override the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Metrics file; falls back to the config's output_path, then stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Output format: csv or json.
        #[arg(long, default_value = "csv")]
        format: String,
    },
    /// Run several configs differing only in strategy, alpha, or seed and
    /// print a final-round summary table.
    Compare {
        /// Paths to the experiment configs.
        #[arg(required = true)]
        configs: Vec<PathBuf>,
    },
    /// Generate synthetic blob datasets as IDX image/label file pairs.
    GenData {
        /// Output directory for the four IDX files.
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 4)]
        classes: usize,
        #[arg(long, default_value_t = 200)]
        per_class: usize,
        #[arg(long, default_value_t = 50)]
        test_per_class: usize,
        #[arg(long, default_value_t = 64)]
        dim: usize,
        #[arg(long, default_value_t = 0.15)]
        spread: f64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Optional image rows; with --cols, must multiply to --dim.
        #[arg(long)]
        rows: Option<usize>,
        /// Optional image columns.
        #[arg(long)]
        cols: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}

fn dispatch(cli: Cli) -> fedmask::Result<()> {
    match cli.command {
        Command::Run {
            config,
            rounds,
            seed,
            out,
            format,
        } => {
            let mut cfg = ExperimentConfig::from_path(&config)?;
            if let Some(rounds) = rounds {
                cfg.rounds = rounds;
            }
            if let Some(seed) = seed {
                cfg.master_seed = seed;
            }
            let format: OutputFormat = format.parse()?;
            let rows = run_experiment(&cfg)?;
            let destination = out.or_else(|| cfg.output_path.as_ref().map(PathBuf::from));
            match destination {
                Some(path) => write_metrics(&rows, format, path)?,
                None => {
                    let text = match format {
                        OutputFormat::Csv => to_csv(&rows),
                        OutputFormat::Json => to_json(&rows),
                    };
                    print!("{text}");
                }
            }
            Ok(())
        }
        Command::Compare { configs } => {
            let configs = configs
                .iter()
                .map(ExperimentConfig::from_path)
                .collect::<fedmask::Result<Vec<_>>>()?;
            let table = compare_runs(&configs)?;
            print!("{}", table.render());
            Ok(())
        }
        Command::GenData {
            out_dir,
            classes,
            per_class,
            test_per_class,
            dim,
            spread,
            seed,
            rows,
            cols,
        } => {
            std::fs::create_dir_all(&out_dir)?;
            let (train, test) =
                generate_blobs_split(classes, per_class, test_per_class, dim, spread, seed)?;
            for (name, mut data) in [("train", train), ("test", test)] {
                if let (Some(r), Some(c)) = (rows, cols) {
                    data = data.with_image_shape(r, c)?;
                }
                let images = out_dir.join(format!("{name}-images.idx3-ubyte"));
                let labels = out_dir.join(format!("{name}-labels.idx1-ubyte"));
                write_idx(&data, &images, &labels)?;
                eprintln!(
                    "wrote {} samples to {} / {}",
                    data.len(),
                    images.display(),
                    labels.display()
                );
            }
            Ok(())
        }
    }
}
