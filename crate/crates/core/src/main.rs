use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::bail;
use clap::{Args, Parser, Subcommand};

use recsim_core::acceptance::{self, DESK_MIN_TAU};
use recsim_core::experiment::{compare, deviation_curve, pairwise_distance_curve, run_experiment, variance_curve};
use recsim_core::io::{self, load_results, read_metrics, write_compare, write_curves, write_metrics, write_outputs};
use recsim_core::{parse_config, AlgorithmKind, ExperimentConfig};

#[derive(Parser)]
#[command(name = "recsim", version, about = "Recommender feedback-loop simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct OutDir {
    /// Output directory.
    #[arg(long, env = "RECSIM_OUT_DIR")]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate every selected algorithm over the configured seeds.
    Run {
        /// TOML file; missing keys take the defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Start from the small desk profile instead of the full defaults.
        #[arg(long, conflicts_with = "config")]
        desk: bool,
        /// Comma-separated algorithm names.
        #[arg(long, default_value = "all")]
        algorithms: String,
        /// Number of seeds, overriding `n_runs`.
        #[arg(long)]
        seeds: Option<usize>,
        #[command(flatten)]
        out: OutDir,
        /// Overwrite a directory that already holds a run.
        #[arg(long)]
        force: bool,
    },
    /// Recompute metrics from stored logs.
    Metrics {
        #[command(flatten)]
        out: OutDir,
        /// Write the table here instead of standard output.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Write deviation, variance and pairwise-distance curves.
    Curves {
        #[command(flatten)]
        out: OutDir,
        /// Pairs sampled per run; 0 uses every pair.
        #[arg(long)]
        pair_sample_size: Option<usize>,
    },
    /// Write the correlation and ranking summary.
    Compare {
        #[command(flatten)]
        out: OutDir,
        #[arg(long)]
        pair_sample_size: Option<usize>,
    },
    /// Run the acceptance suite at desk scale.
    DeskCheck {
        /// Overrides the desk profile.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Minimum Kendall tau for the ranking criterion.
        #[arg(long, default_value_t = DESK_MIN_TAU)]
        min_tau: f64,
    },
}

fn algorithms(list: &str) -> anyhow::Result<Vec<AlgorithmKind>> {
    if list == "all" {
        return Ok(AlgorithmKind::ALL.to_vec());
    }
    let kinds = AlgorithmKind::parse_list(list)?;
    if kinds.is_empty() {
        bail!("no algorithms given");
    }
    Ok(kinds)
}

fn load_config(path: Option<&Path>, desk: bool) -> anyhow::Result<ExperimentConfig> {
    Ok(match path {
        Some(p) => parse_config(p)?,
        None if desk => ExperimentConfig::desk(),
        None => ExperimentConfig::default(),
    })
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Run { config, desk, algorithms: list, seeds, out, force } => {
            let mut config = load_config(config.as_deref(), desk)?;
            if let Some(n) = seeds {
                config.n_runs = n;
            }
            let kinds = algorithms(&list)?;
            let started = Instant::now();
            let results = run_experiment(&config, &kinds)?;
            let manifest = write_outputs(&results, &out.out_dir, force, started.elapsed())?;
            eprintln!(
                "{} runs written to {} in {:.1}s",
                manifest.runs.len(),
                out.out_dir.display(),
                started.elapsed().as_secs_f64()
            );
        }
        Command::Metrics { out, output } => {
            let results = load_results(&out.out_dir)?;
            let reports: Vec<_> = results.reports().cloned().collect();
            let stored = read_metrics(&out.out_dir.join(io::METRICS_FILE))?;
            if stored != reports {
                eprintln!("warning: recomputed metrics differ from {}", io::METRICS_FILE);
            }
            match output {
                Some(path) => write_metrics(&path, &reports)?,
                None => print!("{}", io::metrics_table(&reports)),
            }
        }
        Command::Curves { out, pair_sample_size } => {
            let results = load_results(&out.out_dir)?;
            let pairs = pair_sample_size.unwrap_or(results.config.pair_sample_size);
            let kinds = results.algorithms();
            let dir = out.out_dir.join("curves");
            let deviation: Vec<_> = kinds.iter().map(|&k| (k, deviation_curve(&results, k))).collect();
            let variance: Vec<_> = kinds.iter().map(|&k| (k, variance_curve(&results, k))).collect();
            let pairwise: Vec<_> = kinds.iter().map(|&k| (k, pairwise_distance_curve(&results, k, pairs))).collect();
            write_curves(&dir.join("deviation.csv"), &deviation)?;
            write_curves(&dir.join("variance.csv"), &variance)?;
            write_curves(&dir.join("pairwise_distance.csv"), &pairwise)?;
            eprintln!("curves written to {}", dir.display());
        }
        Command::Compare { out, pair_sample_size } => {
            let results = load_results(&out.out_dir)?;
            let pairs = pair_sample_size.unwrap_or(results.config.pair_sample_size);
            let summary = compare(&results, pairs)?;
            let path = out.out_dir.join("compare.json");
            write_compare(&path, &summary)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::DeskCheck { config, min_tau } => {
            let config = load_config(config.as_deref(), true)?;
            let started = Instant::now();
            let results = run_experiment(&config, &AlgorithmKind::ALL)?;
            let mut outcomes = acceptance::evaluate(&results, min_tau)?;
            outcomes.push(acceptance::criterion_numerical(&config)?);
            for outcome in &outcomes {
                println!("{outcome}");
            }
            let passed = outcomes.iter().filter(|o| o.passed).count();
            println!(
                "{passed}/{} criteria passed in {:.1}s",
                outcomes.len(),
                started.elapsed().as_secs_f64()
            );
            return Ok(passed == outcomes.len());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
