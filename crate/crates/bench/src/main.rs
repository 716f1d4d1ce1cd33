use std::path::PathBuf;
use std::process::ExitCode;

use arturo_bench::{metrics, presets, runner, BenchError, MetricsRow, PresetSet, RunConfig, RunOptions, Summary, Variant};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "arturo-bench", version, about = "Train and compare optimizers on small benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed of a config and write metrics.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated seeds, replacing the config's list.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// standard, fixed-eta or adam-surrogate.
        #[arg(long)]
        variant: Option<Variant>,
        /// Multiplier for the fixed-eta variant.
        #[arg(long)]
        eta: Option<f64>,
    },
    /// Check the preset files against the reference hyperparameter tables.
    VerifyHparams {
        /// Directory with arturo.toml, sgd.toml, adam.toml, adamw.toml;
        /// defaults to the presets built into the binary.
        #[arg(long)]
        presets: Option<PathBuf>,
    },
    /// Recompute summary.json from a run directory's metrics.csv.
    Summarize {
        #[arg(long = "in")]
        dir: PathBuf,
    },
}

fn print_summary(summary: &Summary) {
    for g in &summary.groups {
        let Some(last) = g.final_epoch() else { continue };
        let fmt = |v: Option<f64>, scale: f64| v.map_or("-".to_string(), |x| format!("{:.4}", x * scale));
        println!(
            "{:<8} {:<15} epoch {:>3}  acc {} ± {}  test loss {} ± {}  seeds {}  failed {:?}",
            g.optimizer,
            g.variant,
            last.epoch,
            fmt(last.test_accuracy_mean, 100.0),
            fmt(last.test_accuracy_2se, 100.0),
            fmt(last.test_loss_mean, 1.0),
            fmt(last.test_loss_2se, 1.0),
            last.seeds,
            g.failed_seeds,
        );
    }
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> Result<ExitCode, BenchError> {
    match Cli::parse().command {
        Command::Run { config, seeds, out, variant, eta } => {
            let cfg = RunConfig::from_path(&config)?;
            let report = runner::run(&cfg, &RunOptions { seeds, out, variant, fixed_eta: eta })?;
            print_summary(&report.summary);
            println!("wrote {}", report.out_dir.display());
            let failed = report.summary.groups.iter().any(|g| !g.failed_seeds.is_empty());
            Ok(if failed { ExitCode::from(2) } else { ExitCode::SUCCESS })
        }
        Command::VerifyHparams { presets: dir } => {
            let set = match dir {
                Some(d) => PresetSet::from_dir(&d)?,
                None => PresetSet::builtin(),
            };
            let report = presets::verify(&set);
            for m in &report.mismatches {
                println!("MISMATCH {m}");
            }
            println!("checked {} values, {} mismatches", report.checked, report.mismatches.len());
            Ok(if report.ok() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Summarize { dir } => {
            let rows: Vec<MetricsRow> = metrics::read_csv(&dir.join("metrics.csv"))?;
            let summary = metrics::summarize(&rows);
            runner::write_json(&dir.join("summary.json"), &summary)?;
            print_summary(&summary);
            Ok(ExitCode::SUCCESS)
        }
    }
}
