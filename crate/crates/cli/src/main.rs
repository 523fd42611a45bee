use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use smartfab_core::scenario::{self, JsonlWriter, KpiReport, NullSink, RunMode, Scenario};
use smartfab_core::sim::ExternalCommand;
use smartfab_api::ServeOptions;
use smartfab_core::Error;

#[derive(Parser)]
#[command(name = "smartfab", version, about = "IoT smart-factory simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration and write its trace as JSON Lines.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Replay a recorded command log (one JSON command per line).
        #[arg(long)]
        commands: Option<PathBuf>,
    },
    /// Run baseline and optimized with the same seed and report KPI deltas.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        report: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        /// Also write baseline.jsonl and optimized.jsonl into this directory.
        #[arg(long)]
        trace_dir: Option<PathBuf>,
        #[arg(long)]
        commands: Option<PathBuf>,
    },
    /// Start the control API on a live simulation.
    Serve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long)]
        seed: Option<u64>,
        /// Simulated ticks per wall-clock second.
        #[arg(long, default_value_t = 10.0)]
        speed: f64,
        /// Write the live run's trace to this file.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Record accepted commands for later replay with `simulate --commands`.
        #[arg(long)]
        command_log: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        heartbeat_secs: u64,
        /// Start paused; resume with POST /api/v1/sim.
        #[arg(long)]
        paused: bool,
    },
    /// Check a config file and print the resolved scenario hash.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Baseline,
    Optimized,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

fn load(config: &Path, seed: Option<u64>) -> Result<Arc<Scenario>, Error> {
    let s = Scenario::load(config)?;
    Ok(Arc::new(match seed {
        Some(seed) => s.with_seed(seed),
        None => s,
    }))
}

fn commands(path: Option<&Path>) -> Result<Vec<ExternalCommand>, Error> {
    path.map_or(Ok(Vec::new()), scenario::load_commands)
}

fn print_report(report: &KpiReport) {
    let pct = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.2}%"));
    println!(
        "{:<12} {:>14} {:>14} {:>10}",
        "metric", "baseline", "optimized", "reduction"
    );
    let b = &report.baseline;
    let o = &report.optimized;
    let r = &report.reductions;
    println!("{:<12} {:>14.3} {:>14.3} {:>10}", "energy_wh", b.energy_wh, o.energy_wh, pct(r.energy_reduction_pct));
    println!(
        "{:<12} {:>14} {:>14} {:>10}",
        "downtime", b.downtime_ticks, o.downtime_ticks, pct(r.downtime_reduction_pct)
    );
    println!(
        "{:<12} {:>14} {:>14} {:>10}",
        "waste", b.material_waste_units, o.material_waste_units, pct(r.waste_reduction_pct)
    );
    println!("{:<12} {:>14} {:>14}", "produced", b.units_produced, o.units_produced);
}

fn run(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    match cli.command {
        Command::Simulate {
            config,
            mode,
            seed,
            out,
            commands: log,
        } => {
            let scenario = load(&config, seed)?;
            let cmds = commands(log.as_deref())?;
            let mode = match mode {
                Mode::Baseline => RunMode::Baseline,
                Mode::Optimized => RunMode::Optimized,
            };
            let mut writer = JsonlWriter::create(&out)?;
            let summary = scenario::run_scenario(scenario, mode, &cmds, &mut writer)?;
            writer.finish()?;
            let t = &summary.totals;
            println!(
                "{}: energy {:.3} Wh, downtime {} ticks, waste {} units, produced {}",
                mode.as_str(),
                t.energy_wh,
                t.downtime_ticks,
                t.material_waste_units,
                t.units_produced
            );
        }
        Command::Compare {
            config,
            seed,
            report,
            format,
            trace_dir,
            commands: log,
        } => {
            let scenario = load(&config, seed)?;
            let cmds = commands(log.as_deref())?;
            let kpis = match trace_dir {
                Some(dir) => {
                    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                    let mut b = JsonlWriter::create(dir.join("baseline.jsonl"))?;
                    let mut o = JsonlWriter::create(dir.join("optimized.jsonl"))?;
                    let kpis = scenario::run_compare(scenario, &cmds, &mut b, &mut o)?;
                    b.finish()?;
                    o.finish()?;
                    kpis
                }
                None => scenario::run_compare(scenario, &cmds, &mut NullSink, &mut NullSink)?,
            };
            let text = match format {
                Format::Json => kpis.to_json(),
                Format::Csv => kpis.to_csv(),
            };
            std::fs::write(&report, text).map_err(|e| Error::io(&report, e))?;
            print_report(&kpis);
        }
        Command::Serve {
            config,
            port,
            seed,
            speed,
            trace,
            command_log,
            heartbeat_secs,
            paused,
        } => {
            let scenario = load(&config, seed)?;
            let options = ServeOptions {
                speed,
                heartbeat: Duration::from_secs(heartbeat_secs.max(1)),
                trace_path: trace,
                command_log,
                start_paused: paused,
                ..ServeOptions::default()
            };
            smartfab_api::serve_blocking(scenario, port, options)?;
        }
        Command::Validate { config } => {
            let s = Scenario::load(&config)?;
            println!("ok {} machines, {} ticks, config {}", s.machines.len(), s.run.ticks, s.config_hash());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.downcast_ref::<Error>().is_some_and(Error::is_validation) {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
