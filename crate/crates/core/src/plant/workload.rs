use serde::{Deserialize, Serialize};

use crate::rng::RngStream;
use crate::Id;

/// Inclusive `[min, max]` pair, written as a two-element array in config files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range<T>(pub T, pub T);

/// Explicit demand: `utilization * max_rate` on ticks `[start, end)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandSegment {
    pub machine: String,
    pub start: u64,
    pub end: u64,
    pub utilization: f64,
}

/// Random busy/idle production schedule, plus explicit per-machine segments.
/// Machines that have explicit segments are not generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadConfig {
    pub initial_idle_ticks: Range<u64>,
    pub busy_ticks: Range<u64>,
    pub idle_ticks: Range<u64>,
    pub utilization: Range<f64>,
    /// Chance that a busy segment contains a high-workload burst.
    pub burst_probability: f64,
    pub burst_ticks: Range<u64>,
    pub burst_utilization: Range<f64>,
    pub segments: Vec<DemandSegment>,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        WorkloadConfig {
            initial_idle_ticks: Range(0, 600),
            busy_ticks: Range(1200, 3600),
            idle_ticks: Range(300, 2400),
            utilization: Range(0.5, 0.7),
            burst_probability: 0.3,
            burst_ticks: Range(300, 900),
            burst_utilization: Range(0.95, 1.0),
            segments: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AmbientConfig {
    pub base_c: f64,
    pub amplitude_c: f64,
    pub period_ticks: u64,
    pub noise_c: f64,
}

impl Default for AmbientConfig {
    fn default() -> Self {
        AmbientConfig {
            base_c: 25.0,
            amplitude_c: 4.0,
            period_ticks: 28_800,
            noise_c: 0.2,
        }
    }
}

/// Per-tick demand schedule for every machine plus the ambient temperature.
/// Built once per run from the "workload" stream, so both paired runs see the
/// same schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadProfile {
    ticks: u64,
    demand: Vec<Vec<f64>>,
    busy: Vec<Vec<(u64, u64)>>,
    ambient: Vec<f64>,
}

impl WorkloadProfile {
    /// `machines` lists `(id, max_rate)` in plant order.
    pub fn build(
        config: &WorkloadConfig,
        ambient: &AmbientConfig,
        machines: &[(Id, f64)],
        ticks: u64,
        rng: &mut RngStream,
    ) -> Self {
        let n = ticks as usize;
        let mut demand = Vec::with_capacity(machines.len());
        for (id, max_rate) in machines {
            let mut series = vec![0.0; n];
            let explicit: Vec<&DemandSegment> = config
                .segments
                .iter()
                .filter(|s| s.machine == id.as_ref())
                .collect();
            if explicit.is_empty() {
                generate(config, *max_rate, &mut series, rng);
            } else {
                for seg in explicit {
                    let end = seg.end.min(ticks) as usize;
                    for slot in series.iter_mut().take(end).skip(seg.start as usize) {
                        *slot = seg.utilization * max_rate;
                    }
                }
            }
            demand.push(series);
        }
        let busy = demand.iter().map(|s| busy_intervals(s)).collect();
        let ambient_series = (0..ticks)
            .map(|t| {
                let phase = if ambient.period_ticks == 0 {
                    0.0
                } else {
                    2.0 * std::f64::consts::PI * t as f64 / ambient.period_ticks as f64
                };
                ambient.base_c + ambient.amplitude_c * phase.sin()
                    + rng.uniform(-ambient.noise_c, ambient.noise_c)
            })
            .collect();
        WorkloadProfile {
            ticks,
            demand,
            busy,
            ambient: ambient_series,
        }
    }

    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    pub fn demand(&self, machine: usize, tick: u64) -> f64 {
        self.demand[machine].get(tick as usize).copied().unwrap_or(0.0)
    }

    pub fn ambient(&self, tick: u64) -> f64 {
        let last = self.ambient.len().saturating_sub(1);
        self.ambient.get((tick as usize).min(last)).copied().unwrap_or(25.0)
    }

    pub fn total_demand(&self, machine: usize) -> f64 {
        self.demand[machine].iter().sum()
    }

    /// First tick `>= from` with positive scheduled demand.
    pub fn next_demand_tick(&self, machine: usize, from: u64) -> Option<u64> {
        let busy = &self.busy[machine];
        let i = busy.partition_point(|&(_, end)| end <= from);
        busy.get(i).map(|&(start, _)| start.max(from))
    }

    /// Start of the first idle gap of at least `min_len` ticks beginning in
    /// `[from, until]`. A gap running to the end of the schedule counts as
    /// unbounded.
    pub fn idle_window(&self, machine: usize, from: u64, until: u64, min_len: u64) -> Option<u64> {
        let busy = &self.busy[machine];
        let mut cursor = from;
        let mut i = busy.partition_point(|&(_, end)| end <= from);
        while cursor <= until {
            match busy.get(i) {
                Some(&(start, end)) if start <= cursor => {
                    cursor = end;
                    i += 1;
                }
                Some(&(start, _)) => {
                    if start - cursor >= min_len {
                        return Some(cursor);
                    }
                    cursor = start;
                }
                None => return Some(cursor),
            }
        }
        None
    }
}

fn generate(config: &WorkloadConfig, max_rate: f64, series: &mut [f64], rng: &mut RngStream) {
    let n = series.len() as u64;
    let mut t = draw_ticks(config.initial_idle_ticks, rng);
    while t < n {
        let busy = draw_ticks(config.busy_ticks, rng).max(1);
        let util = rng.uniform(config.utilization.0, config.utilization.1);
        let end = (t + busy).min(n);
        for slot in &mut series[t as usize..end as usize] {
            *slot = util * max_rate;
        }
        if rng.bernoulli(config.burst_probability) {
            let len = draw_ticks(config.burst_ticks, rng).min(busy);
            let offset = rng.uniform_u64(0, busy - len);
            let burst_util = rng.uniform(config.burst_utilization.0, config.burst_utilization.1);
            let b0 = (t + offset).min(n);
            let b1 = (t + offset + len).min(n);
            for slot in &mut series[b0 as usize..b1 as usize] {
                *slot = burst_util * max_rate;
            }
        }
        t = end + draw_ticks(config.idle_ticks, rng);
    }
}

fn draw_ticks(range: Range<u64>, rng: &mut RngStream) -> u64 {
    rng.uniform_u64(range.0, range.1)
}

fn busy_intervals(series: &[f64]) -> Vec<(u64, u64)> {
    let mut out = Vec::new();
    let mut start = None;
    for (t, &d) in series.iter().enumerate() {
        match (d > 0.0, start) {
            (true, None) => start = Some(t as u64),
            (false, Some(s)) => {
                out.push((s, t as u64));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, series.len() as u64));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::split_rng;

    fn explicit(segs: &[(u64, u64)], ticks: u64) -> WorkloadProfile {
        let config = WorkloadConfig {
            segments: segs
                .iter()
                .map(|&(start, end)| DemandSegment {
                    machine: "m1".into(),
                    start,
                    end,
                    utilization: 0.5,
                })
                .collect(),
            ..WorkloadConfig::default()
        };
        let mut rng = split_rng(1, "workload");
        WorkloadProfile::build(&config, &AmbientConfig::default(), &[("m1".into(), 0.1)], ticks, &mut rng)
    }

    #[test]
    fn explicit_segments_and_lookups() {
        let w = explicit(&[(10, 20), (50, 60)], 100);
        assert_eq!(w.demand(0, 9), 0.0);
        assert!((w.demand(0, 10) - 0.05).abs() < 1e-12);
        assert_eq!(w.next_demand_tick(0, 0), Some(10));
        assert_eq!(w.next_demand_tick(0, 15), Some(15));
        assert_eq!(w.next_demand_tick(0, 20), Some(50));
        assert_eq!(w.next_demand_tick(0, 60), None);
        assert_eq!(w.idle_window(0, 0, 100, 5), Some(0));
        assert_eq!(w.idle_window(0, 12, 100, 25), Some(20));
        assert_eq!(w.idle_window(0, 12, 100, 31), Some(60));
        assert_eq!(w.idle_window(0, 12, 19, 25), None);
    }

    #[test]
    fn generated_schedule_is_reproducible_and_bounded() {
        let cfg = WorkloadConfig::default();
        let machines: Vec<(Id, f64)> = vec![("a".into(), 0.05), ("b".into(), 0.05)];
        let a = WorkloadProfile::build(&cfg, &AmbientConfig::default(), &machines, 5000, &mut split_rng(5, "workload"));
        let b = WorkloadProfile::build(&cfg, &AmbientConfig::default(), &machines, 5000, &mut split_rng(5, "workload"));
        assert_eq!(a, b);
        for m in 0..2 {
            for t in 0..5000 {
                let d = a.demand(m, t);
                assert!((0.0..=0.05 + 1e-12).contains(&d));
            }
        }
    }
}
