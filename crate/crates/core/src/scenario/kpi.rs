use serde::Serialize;

use super::trace::{Header, KpiAccumulatorRecord, MachineStateRecord, TraceRecord, TraceSink};
use crate::error::{Error, Result};
use crate::fixed;

/// Microjoules per watt-hour.
pub const UJ_PER_WH: f64 = 3.6e9;

/// In-run accumulators, one slot per machine.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KpiAccumulator {
    pub energy_uj: Vec<u64>,
    pub downtime_ticks: Vec<u64>,
    pub produced: Vec<u64>,
    pub defective: Vec<u64>,
    pub scrapped: Vec<u64>,
    pub ticks: u64,
}

impl KpiAccumulator {
    pub fn new(machines: usize) -> Self {
        KpiAccumulator {
            energy_uj: vec![0; machines],
            downtime_ticks: vec![0; machines],
            produced: vec![0; machines],
            defective: vec![0; machines],
            scrapped: vec![0; machines],
            ticks: 0,
        }
    }

    pub fn to_record(&self, last_tick: u64) -> KpiAccumulatorRecord {
        KpiAccumulatorRecord {
            tick: last_tick,
            energy_uj: self.energy_uj.clone(),
            downtime_ticks: self.downtime_ticks.clone(),
            produced: self.produced.clone(),
            defective: self.defective.clone(),
            scrapped: self.scrapped.clone(),
        }
    }

    pub fn totals(&self, machines: &[String]) -> RunTotals {
        RunTotals::from_parts(self, machines)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MachineTotals {
    pub machine: String,
    #[serde(serialize_with = "fixed::serialize")]
    pub energy_wh: f64,
    pub downtime_ticks: u64,
    pub units_produced: u64,
    pub material_waste_units: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunTotals {
    #[serde(serialize_with = "fixed::serialize")]
    pub energy_wh: f64,
    pub energy_uj: u64,
    pub downtime_ticks: u64,
    pub material_waste_units: u64,
    pub defective_units: u64,
    pub scrapped_units: u64,
    pub units_produced: u64,
    #[serde(serialize_with = "fixed::serialize")]
    pub uptime_fraction: f64,
    #[serde(serialize_with = "fixed::serialize")]
    pub good_units_per_kwh: f64,
    pub per_machine: Vec<MachineTotals>,
}

impl RunTotals {
    fn from_parts(acc: &KpiAccumulator, machines: &[String]) -> Self {
        let energy_uj: u64 = acc.energy_uj.iter().sum();
        let downtime: u64 = acc.downtime_ticks.iter().sum();
        let produced: u64 = acc.produced.iter().sum();
        let defective: u64 = acc.defective.iter().sum();
        let scrapped: u64 = acc.scrapped.iter().sum();
        let machine_ticks = acc.ticks * machines.len() as u64;
        let energy_wh = energy_uj as f64 / UJ_PER_WH;
        let good = produced - defective;
        RunTotals {
            energy_wh,
            energy_uj,
            downtime_ticks: downtime,
            material_waste_units: defective + scrapped,
            defective_units: defective,
            scrapped_units: scrapped,
            units_produced: produced,
            uptime_fraction: if machine_ticks == 0 {
                1.0
            } else {
                1.0 - downtime as f64 / machine_ticks as f64
            },
            good_units_per_kwh: if energy_wh > 0.0 {
                good as f64 / (energy_wh / 1000.0)
            } else {
                0.0
            },
            per_machine: machines
                .iter()
                .enumerate()
                .map(|(i, m)| MachineTotals {
                    machine: m.clone(),
                    energy_wh: acc.energy_uj[i] as f64 / UJ_PER_WH,
                    downtime_ticks: acc.downtime_ticks[i],
                    units_produced: acc.produced[i],
                    material_waste_units: acc.defective[i] + acc.scrapped[i],
                })
                .collect(),
        }
    }
}

/// Rebuilds KPI totals from machine-state records and checks them against
/// the accumulator record at the end of the trace.
#[derive(Debug, Default)]
pub struct KpiRecomputer {
    header: Option<Header>,
    acc: KpiAccumulator,
    tick_ms: u64,
    last_tick: Option<u64>,
    final_record: Option<KpiAccumulatorRecord>,
}

/// A completed, self-consistent run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub header: Header,
    pub totals: RunTotals,
    pub accumulator: KpiAccumulatorRecord,
}

impl KpiRecomputer {
    pub fn new() -> Self {
        Self::default()
    }

    fn machine_state(&mut self, r: &MachineStateRecord) -> Result<()> {
        let header = self
            .header
            .as_ref()
            .ok_or_else(|| Error::Trace("machine-state before header".into()))?;
        let i = header
            .machines
            .iter()
            .position(|m| **m == *r.machine)
            .ok_or_else(|| Error::Trace(format!("unknown machine {:?}", r.machine)))?;
        if self.last_tick != Some(r.tick) {
            self.acc.ticks += 1;
            self.last_tick = Some(r.tick);
        }
        self.acc.energy_uj[i] += r.power_mw * self.tick_ms;
        if r.mode.is_down() {
            self.acc.downtime_ticks[i] += 1;
        }
        self.acc.produced[i] += r.produced as u64;
        self.acc.defective[i] += r.defective as u64;
        self.acc.scrapped[i] += r.scrapped as u64;
        Ok(())
    }

    pub fn finish(self) -> Result<RunSummary> {
        let header = self.header.ok_or_else(|| Error::Trace("trace has no header".into()))?;
        let accumulator = self
            .final_record
            .ok_or_else(|| Error::Trace("trace has no kpi-accumulator record".into()))?;
        let recomputed = self.acc.to_record(accumulator.tick);
        if recomputed != accumulator {
            return Err(Error::Trace(format!(
                "recomputed totals {recomputed:?} differ from accumulators {accumulator:?}"
            )));
        }
        let totals = self.acc.totals(&header.machines);
        Ok(RunSummary {
            header,
            totals,
            accumulator,
        })
    }
}

impl TraceSink for KpiRecomputer {
    fn record(&mut self, record: TraceRecord) -> Result<()> {
        match record {
            TraceRecord::Header(h) => {
                self.acc = KpiAccumulator::new(h.machines.len());
                self.tick_ms = h.tick_ms;
                self.header = Some(h);
            }
            TraceRecord::MachineState(r) => self.machine_state(&r)?,
            TraceRecord::KpiAccumulator(r) => self.final_record = Some(r),
            _ => {}
        }
        Ok(())
    }
}

/// Summarizes a full record list (for example one read back from a file).
pub fn summarize(records: impl IntoIterator<Item = TraceRecord>) -> Result<RunSummary> {
    let mut r = KpiRecomputer::new();
    for rec in records {
        r.record(rec)?;
    }
    r.finish()
}

/// `100 * (baseline - optimized) / baseline`; `None` when the baseline is zero.
/// Not clamped: a worse optimized run gives a negative value.
pub fn reduction_pct(baseline: f64, optimized: f64) -> Option<f64> {
    (baseline > 0.0).then(|| 100.0 * (baseline - optimized) / baseline)
}

fn ser_opt3<S: serde::Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        Some(x) => fixed::serialize(x, s),
        None => s.serialize_none(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reductions {
    #[serde(serialize_with = "ser_opt3")]
    pub energy_reduction_pct: Option<f64>,
    #[serde(serialize_with = "ser_opt3")]
    pub downtime_reduction_pct: Option<f64>,
    #[serde(serialize_with = "ser_opt3")]
    pub waste_reduction_pct: Option<f64>,
}

impl Reductions {
    pub fn between(baseline: &RunTotals, optimized: &RunTotals) -> Self {
        Reductions {
            energy_reduction_pct: reduction_pct(baseline.energy_wh, optimized.energy_wh),
            downtime_reduction_pct: reduction_pct(baseline.downtime_ticks as f64, optimized.downtime_ticks as f64),
            waste_reduction_pct: reduction_pct(
                baseline.material_waste_units as f64,
                optimized.material_waste_units as f64,
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MachineDelta {
    pub machine: String,
    #[serde(serialize_with = "fixed::serialize")]
    pub baseline_energy_wh: f64,
    #[serde(serialize_with = "fixed::serialize")]
    pub optimized_energy_wh: f64,
    #[serde(serialize_with = "ser_opt3")]
    pub energy_reduction_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KpiReport {
    pub config_hash: String,
    pub seed: u64,
    pub ticks: u64,
    pub baseline: RunTotals,
    pub optimized: RunTotals,
    pub reductions: Reductions,
    pub per_machine: Vec<MachineDelta>,
}

/// Pairs two runs of the same scenario and seed.
pub fn compute_kpis(baseline: &RunSummary, optimized: &RunSummary) -> Result<KpiReport> {
    let (b, o) = (&baseline.header, &optimized.header);
    if b.config_hash != o.config_hash {
        return Err(Error::Pairing(format!(
            "config hashes differ ({} vs {})",
            b.config_hash, o.config_hash
        )));
    }
    if b.seed != o.seed {
        return Err(Error::Pairing(format!("seeds differ ({} vs {})", b.seed, o.seed)));
    }
    if b.machines != o.machines || b.ticks != o.ticks || b.tick_ms != o.tick_ms {
        return Err(Error::Pairing("run shapes differ".into()));
    }
    let (bt, ot) = (&baseline.totals, &optimized.totals);
    Ok(KpiReport {
        config_hash: b.config_hash.clone(),
        seed: b.seed,
        ticks: b.ticks,
        reductions: Reductions::between(bt, ot),
        per_machine: bt
            .per_machine
            .iter()
            .zip(&ot.per_machine)
            .map(|(x, y)| MachineDelta {
                machine: x.machine.clone(),
                baseline_energy_wh: x.energy_wh,
                optimized_energy_wh: y.energy_wh,
                energy_reduction_pct: reduction_pct(x.energy_wh, y.energy_wh),
            })
            .collect(),
        baseline: bt.clone(),
        optimized: ot.clone(),
    })
}

impl KpiReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,baseline,optimized,reduction_pct\n");
        let opt = |v: Option<f64>| v.map(fixed::format3).unwrap_or_default();
        let mut row = |name: &str, b: String, o: String, r: String| {
            out.push_str(&format!("{name},{b},{o},{r}\n"));
        };
        let (b, o) = (&self.baseline, &self.optimized);
        let count_row = |b: u64, o: u64| (b.to_string(), o.to_string(), opt(reduction_pct(b as f64, o as f64)));
        row(
            "energy_wh",
            fixed::format3(b.energy_wh),
            fixed::format3(o.energy_wh),
            opt(self.reductions.energy_reduction_pct),
        );
        let (x, y, z) = count_row(b.downtime_ticks, o.downtime_ticks);
        row("downtime_ticks", x, y, z);
        let (x, y, z) = count_row(b.material_waste_units, o.material_waste_units);
        row("material_waste_units", x, y, z);
        let (x, y, z) = count_row(b.defective_units, o.defective_units);
        row("defective_units", x, y, z);
        let (x, y, z) = count_row(b.scrapped_units, o.scrapped_units);
        row("scrapped_units", x, y, z);
        let (x, y, z) = count_row(b.units_produced, o.units_produced);
        row("units_produced", x, y, z);
        row(
            "uptime_fraction",
            fixed::format3(b.uptime_fraction),
            fixed::format3(o.uptime_fraction),
            String::new(),
        );
        row(
            "good_units_per_kwh",
            fixed::format3(b.good_units_per_kwh),
            fixed::format3(o.good_units_per_kwh),
            String::new(),
        );
        for m in &self.per_machine {
            row(
                &format!("energy_wh.{}", m.machine),
                fixed::format3(m.baseline_energy_wh),
                fixed::format3(m.optimized_energy_wh),
                opt(m.energy_reduction_pct),
            );
        }
        out
    }
}
