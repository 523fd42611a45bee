#![allow(dead_code)]

use std::fmt::Write as _;
use std::sync::Arc;

use proptest::prelude::*;
use smartfab_core::scenario::{JsonlWriter, RunMode, Scenario};
use smartfab_core::world::World;

/// A randomly drawn small plant, rendered to scenario TOML.
#[derive(Debug, Clone)]
pub struct SmallPlant {
    pub seed: u64,
    pub ticks: u64,
    pub tick_ms: u64,
    pub machines: Vec<SmallMachine>,
    pub energy_period: u64,
    pub uplink_drop: f64,
    pub fire: Option<(usize, u64)>,
    pub fault: Option<(usize, u64)>,
}

#[derive(Debug, Clone)]
pub struct SmallMachine {
    pub p_run_w: f64,
    pub load_floor: f64,
    pub standby_share: f64,
    pub p_maint_w: f64,
    pub initial_wear: f64,
    pub essential: bool,
}

fn machine() -> impl Strategy<Value = SmallMachine> {
    (500.0..9000.0f64, 0.1..1.0f64, 0.0..1.0f64, 0.0..1500.0f64, 0.0..0.9f64, any::<bool>()).prop_map(
        |(p_run_w, load_floor, standby_share, p_maint_w, initial_wear, essential)| SmallMachine {
            p_run_w,
            load_floor,
            standby_share,
            p_maint_w,
            initial_wear,
            essential,
        },
    )
}

pub fn small_plant() -> impl Strategy<Value = SmallPlant> {
    (
        any::<u64>(),
        20..=1000u64,
        prop::sample::select(vec![100u64, 250, 1000, 1500]),
        prop::collection::vec(machine(), 1..=3),
        1..=5u64,
        0.0..0.6f64,
        any::<(bool, bool, u64, u64, usize, usize)>(),
    )
        .prop_map(|(seed, ticks, tick_ms, machines, energy_period, uplink_drop, (f, g, ft, gt, fm, gm))| {
            let n = machines.len();
            SmallPlant {
                seed,
                ticks,
                tick_ms,
                energy_period,
                uplink_drop,
                fire: f.then_some((fm % n, ft % ticks)),
                fault: g.then_some((gm % n, gt % ticks)),
                machines,
            }
        })
}

impl SmallPlant {
    pub fn to_toml(&self) -> String {
        let mut s = String::new();
        writeln!(s, "[run]\nticks = {}\nseed = {}\ntick_duration_ms = {}\n", self.ticks, self.seed, self.tick_ms).unwrap();
        for (i, m) in self.machines.iter().enumerate() {
            let standby = m.p_run_w * m.load_floor * m.standby_share;
            writeln!(
                s,
                "[[plant.machines]]\nid = \"m{i}\"\nessential = {}\nparams = {{ p_run_w = {:?}, load_floor = {:?}, p_standby_w = {:?}, p_maint_w = {:?}, initial_wear = {:?} }}\n",
                m.essential, m.p_run_w, m.load_floor, standby, m.p_maint_w, m.initial_wear
            )
            .unwrap();
        }
        writeln!(
            s,
            "[plant.workload]\ninitial_idle_ticks = [0, 30]\nbusy_ticks = [20, 200]\nidle_ticks = [20, 400]\n"
        )
        .unwrap();
        writeln!(s, "[plant.sensors.energy]\nsample_period = {}\n", self.energy_period).unwrap();
        if let Some((m, t)) = self.fire {
            writeln!(s, "[[plant.fires]]\nmachine = \"m{m}\"\ntick = {t}\n").unwrap();
        }
        if let Some((m, t)) = self.fault {
            writeln!(s, "[[plant.faults]]\nmachine = \"m{m}\"\ntick = {t}\nkind = \"BREAKDOWN\"\nrepair_ticks = 40\n").unwrap();
        }
        writeln!(
            s,
            "[network.uplink]\nbase_latency = 1\njitter = 1\ndrop_probability = {:?}\n",
            self.uplink_drop
        )
        .unwrap();
        writeln!(s, "[policies.idle_shutdown]\nidle_threshold_ticks = 30\nwake_delay_ticks = 10\n").unwrap();
        s
    }

    pub fn scenario(&self) -> Arc<Scenario> {
        let text = self.to_toml();
        Arc::new(Scenario::from_toml(&text).unwrap_or_else(|e| panic!("{e}\n{text}")))
    }
}

/// Runs `scenario` in `mode` and returns the trace bytes.
pub fn trace_bytes(scenario: Arc<Scenario>, mode: RunMode) -> Vec<u8> {
    let mut world = World::new(scenario, mode).unwrap();
    let mut writer = JsonlWriter::new(Vec::new());
    world.run(&mut writer).unwrap();
    writer.finish().unwrap()
}

/// The repository's calibrated scenario.
pub fn default_scenario() -> Scenario {
    Scenario::load(concat!(env!("CARGO_MANIFEST_DIR"), "/../../default.scenario")).unwrap()
}

/// `default.scenario` shortened to `ticks`.
pub fn short_default(ticks: u64) -> Arc<Scenario> {
    let mut s = default_scenario();
    s.run.ticks = ticks;
    Arc::new(s)
}
