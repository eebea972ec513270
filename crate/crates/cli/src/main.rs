use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use iges_core::estimator::EstimationMode;
use iges_core::metrics::{compare_runs, summary_text, QuantityClass};
use iges_core::pipeline::{
    default_output_dir, recompute_report, write_estimation, write_simulation, Experiment, RunInfo,
};
use serde_json::json;

#[derive(Parser)]
#[command(name = "iges", version, about = "Dynamic state estimation for coupled gas and power networks")]
struct Cli {
    /// Print a machine-readable JSON summary instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate truth and noisy measurements.
    Simulate {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate, then run the filter on the measurements.
    Estimate {
        config: PathBuf,
        /// integrated, separated-gas or separated-power
        #[arg(long)]
        mode: Option<EstimationMode>,
        #[arg(long, conflicts_with = "plain")]
        robust: bool,
        /// Plain Kalman filter (no robust scaling).
        #[arg(long)]
        plain: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute the metrics of an estimation run directory.
    Metrics { run_dir: PathBuf },
    /// Compare two estimation runs by mean eps2 per quantity class.
    Compare { run_a: PathBuf, run_b: PathBuf },
}

fn output_dir(out: Option<PathBuf>, exp: &Experiment, mode: Option<EstimationMode>, seed: u64) -> PathBuf {
    out.or_else(|| exp.config.output_dir.clone())
        .unwrap_or_else(|| default_output_dir(mode, seed))
}

fn load(config: &Path) -> Result<Experiment> {
    Experiment::from_config_file(config).with_context(|| format!("loading {}", config.display()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, seed, out } => {
            let exp = load(&config)?;
            let seed = seed.unwrap_or(exp.config.seed);
            let sim = exp.simulate(seed)?;
            let dir = output_dir(out, &exp, None, seed);
            let info = RunInfo {
                seed,
                steps: sim.truth.len(),
                c_s: exp.problem.model.constants.c_s,
                mode: None,
                robust: None,
                settings: None,
                config: exp.config.clone(),
            };
            write_simulation(&dir, &exp, &sim, &info)?;
            if cli.json {
                let v = json!({ "dir": dir, "seed": seed, "steps": sim.truth.len(), "states": exp.state_names().len(), "channels": exp.problem.layout.len() });
                println!("{v}");
            } else {
                println!("wrote {} steps to {}", sim.truth.len(), dir.display());
            }
        }
        Command::Estimate { config, mode, robust, plain, seed, out } => {
            let exp = load(&config)?;
            let seed = seed.unwrap_or(exp.config.seed);
            let mode = mode.unwrap_or(exp.config.estimator.mode);
            let mut settings = exp.config.estimator.settings();
            if robust || plain {
                settings.robust = robust;
            }
            let sim = exp.simulate(seed)?;
            let trace = exp.estimate(&sim, mode, &settings)?;
            let report = exp.report(&sim, &trace)?;
            let dir = output_dir(out, &exp, Some(mode), seed);
            let mut info = RunInfo {
                seed,
                steps: sim.truth.len(),
                c_s: exp.problem.model.constants.c_s,
                mode: None,
                robust: None,
                settings: None,
                config: exp.config.clone(),
            };
            write_simulation(&dir, &exp, &sim, &info)?;
            info.mode = Some(mode);
            info.robust = Some(settings.robust);
            info.settings = Some(settings);
            write_estimation(&dir, &trace, &report, &info)?;
            if cli.json {
                println!("{}", json!({ "dir": dir, "seed": seed, "mode": mode, "robust": settings.robust, "aggregates": report.aggregates }));
            } else {
                println!("wrote {}\n", dir.display());
                print!("{}", summary_text(&report));
            }
        }
        Command::Metrics { run_dir } => {
            let (info, report) = recompute_report(&run_dir)?;
            if cli.json {
                println!("{}", serde_json::to_string(&json!({ "seed": info.seed, "mode": info.mode, "report": report }))?);
            } else {
                print!("{}", summary_text(&report));
            }
        }
        Command::Compare { run_a, run_b } => {
            let (_, a) = recompute_report(&run_a)?;
            let (_, b) = recompute_report(&run_b)?;
            let cmp = compare_runs(&a, &b)?;
            if cli.json {
                println!("{}", serde_json::to_string(&cmp)?);
            } else {
                println!("{:<12} {:>6} {:>14} {:>14} {:>10}", "class", "count", "eps2 a", "eps2 b", "a / b");
                for c in &cmp.classes {
                    println!(
                        "{:<12} {:>6} {:>14.6e} {:>14.6e} {:>10.4}",
                        c.class.as_str(),
                        c.count,
                        c.mean_eps2_a,
                        c.mean_eps2_b,
                        c.ratio
                    );
                }
                if let Some(p) = cmp.class(QuantityClass::Pressure) {
                    println!("\npressure eps2 ratio a / b: {:.4}", p.ratio);
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // core errors already embed their source in the message
            let mut msg = String::new();
            for cause in e.chain() {
                let text = cause.to_string();
                if !msg.ends_with(&text) {
                    if !msg.is_empty() {
                        msg.push_str(": ");
                    }
                    msg.push_str(&text);
                }
            }
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
