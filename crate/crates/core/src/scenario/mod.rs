//! Scenario configuration, run traces, KPI computation and the batch runner.

mod config;
pub mod kpi;
pub mod trace;

use std::io::BufRead;
use std::path::Path;
use std::sync::Arc;

pub use config::{
    MachineConfig, NetworkConfig, RunConfig, RunMode, Scenario, ScheduledFault, ScheduledFire, SensorTemplate,
    TraceConfig, MAX_RATE_LIMIT,
};
pub use kpi::{compute_kpis, reduction_pct, summarize, KpiAccumulator, KpiRecomputer, KpiReport, Reductions, RunSummary, RunTotals};
pub use trace::{read_trace, JsonlWriter, NullSink, TraceRecord, TraceSink};

use crate::error::{Error, Result};
use crate::sim::ExternalCommand;
use crate::world::World;

/// Runs one scenario to completion, streaming records into `sink`, and
/// returns the summary recomputed from those same records.
pub fn run_scenario(
    scenario: Arc<Scenario>,
    mode: RunMode,
    commands: &[ExternalCommand],
    sink: &mut dyn TraceSink,
) -> Result<RunSummary> {
    let mut world = World::new(scenario, mode)?;
    for c in commands {
        world.submit(c.clone())?;
    }
    let mut recompute = KpiRecomputer::new();
    world.run(&mut trace::Tee(sink, &mut recompute))?;
    recompute.finish()
}

/// Runs the baseline and optimized configurations of one scenario side by
/// side and compares them.
pub fn run_compare(
    scenario: Arc<Scenario>,
    commands: &[ExternalCommand],
    baseline_sink: &mut (dyn TraceSink + Send),
    optimized_sink: &mut (dyn TraceSink + Send),
) -> Result<KpiReport> {
    let (baseline, optimized) = std::thread::scope(|s| {
        let sc = scenario.clone();
        let b = s.spawn(move || run_scenario(sc, RunMode::Baseline, commands, baseline_sink));
        let o = run_scenario(scenario, RunMode::Optimized, commands, optimized_sink);
        (b.join().expect("baseline thread panicked"), o)
    });
    compute_kpis(&baseline?, &optimized?)
}

/// Reads a command log: one JSON [`ExternalCommand`] per line, blank lines
/// ignored.
pub fn load_commands(path: impl AsRef<Path>) -> Result<Vec<ExternalCommand>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let cmd = serde_json::from_str(&line)
            .map_err(|e| Error::Parse(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(cmd);
    }
    Ok(out)
}
