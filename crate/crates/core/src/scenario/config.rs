use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analytics::PolicySet;
use crate::edge::{EdgeConfig, PerKind};
use crate::error::{Error, Result, ValidationIssue};
use crate::plant::{AmbientConfig, Calibration, FaultKind, FireParams, MachineParams, SensorKind, WorkloadConfig};
use crate::transport::{BatchConfig, LinkModel};

/// Upper bound on units per tick; the plant pre-draws one defect value per
/// possible unit.
pub const MAX_RATE_LIMIT: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    Baseline,
    Optimized,
}

impl RunMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RunMode::Baseline => "baseline",
            RunMode::Optimized => "optimized",
        }
    }
}

impl std::str::FromStr for RunMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "baseline" => Ok(RunMode::Baseline),
            "optimized" => Ok(RunMode::Optimized),
            other => Err(format!("unknown mode {other:?}, expected baseline or optimized")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub ticks: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_tick_ms")]
    pub tick_duration_ms: u64,
}

fn default_tick_ms() -> u64 {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorTemplate {
    pub sample_period: u64,
    pub gain: f64,
    pub offset: f64,
    /// Relative for ENERGY, absolute otherwise.
    pub tolerance: f64,
}

impl SensorTemplate {
    pub fn calibration(&self) -> Calibration {
        Calibration {
            gain: self.gain,
            offset: self.offset,
            tolerance: self.tolerance,
        }
    }
}

fn default_sensors() -> PerKind<SensorTemplate> {
    let t = |tolerance| SensorTemplate {
        sample_period: 1,
        gain: 1.0,
        offset: 0.0,
        tolerance,
    };
    PerKind {
        energy: t(0.001),
        temperature: t(0.5),
        pressure: t(0.25),
        fire: t(0.5),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduledFault {
    pub machine: String,
    pub tick: u64,
    pub kind: FaultKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repair_ticks: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduledFire {
    pub machine: String,
    pub tick: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub gateways: Vec<String>,
    pub device_link: LinkModel,
    pub uplink: LinkModel,
    pub max_payload_bytes: usize,
    pub batch: BatchConfig,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            gateways: vec!["gw1".into()],
            device_link: LinkModel::lossless(1),
            uplink: LinkModel {
                base_latency: 1,
                jitter: 1,
                drop_probability: 0.01,
            },
            max_payload_bytes: 512,
            batch: BatchConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceConfig {
    /// Also record every sampled reading and every delivery.
    pub telemetry: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MachineConfig {
    pub id: String,
    pub essential: bool,
    pub gateway: String,
    pub params: MachineParams,
}

/// A fully resolved, validated scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub run: RunConfig,
    pub machines: Vec<MachineConfig>,
    pub sensors: PerKind<SensorTemplate>,
    pub workload: WorkloadConfig,
    pub ambient: AmbientConfig,
    pub fire: FireParams,
    pub faults: Vec<ScheduledFault>,
    pub fires: Vec<ScheduledFire>,
    pub network: NetworkConfig,
    pub edge: EdgeConfig,
    pub policies: PolicySet,
    pub trace: TraceConfig,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    run: RunConfig,
    plant: RawPlant,
    #[serde(default)]
    network: NetworkConfig,
    #[serde(default)]
    edge: toml::Table,
    #[serde(default)]
    policies: PolicySet,
    #[serde(default)]
    trace: TraceConfig,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPlant {
    machines: Vec<RawMachine>,
    #[serde(default)]
    machine_defaults: toml::Table,
    #[serde(default)]
    sensors: toml::Table,
    #[serde(default)]
    workload: WorkloadConfig,
    #[serde(default)]
    ambient: AmbientConfig,
    #[serde(default)]
    fire: FireParams,
    #[serde(default)]
    faults: Vec<ScheduledFault>,
    #[serde(default)]
    fires: Vec<ScheduledFire>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMachine {
    id: String,
    #[serde(default)]
    essential: bool,
    #[serde(default)]
    gateway: Option<String>,
    #[serde(default)]
    params: toml::Table,
}

fn merge_tables(base: &mut toml::Table, over: &toml::Table) {
    for (k, v) in over {
        match (base.get_mut(k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge_tables(b, o),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

/// Deserializes `over` laid on top of the serialized `default`, so nested
/// tables may be given partially.
fn overlay<T: Serialize + serde::de::DeserializeOwned>(
    default: &T,
    over: &toml::Table,
    path: &str,
    issues: &mut Vec<ValidationIssue>,
) -> Option<T> {
    let mut table = match toml::Value::try_from(default) {
        Ok(toml::Value::Table(t)) => t,
        _ => toml::Table::new(),
    };
    merge_tables(&mut table, over);
    match T::deserialize(toml::Value::Table(table)) {
        Ok(v) => Some(v),
        Err(e) => {
            issues.push(issue(path, e.to_string()));
            None
        }
    }
}

fn issue(path: impl Into<String>, message: impl Into<String>) -> ValidationIssue {
    ValidationIssue {
        path: path.into(),
        message: message.into(),
    }
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Scenario> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Scenario::from_toml(&text)
    }

    /// Parses, resolves per-machine parameters and validates.
    pub fn from_toml(text: &str) -> Result<Scenario> {
        let raw: RawScenario = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let mut issues = Vec::new();
        let mut machines = Vec::with_capacity(raw.plant.machines.len());
        for (i, m) in raw.plant.machines.into_iter().enumerate() {
            let mut table = raw.plant.machine_defaults.clone();
            merge_tables(&mut table, &m.params);
            let params = match MachineParams::deserialize(toml::Value::Table(table)) {
                Ok(p) => p,
                Err(e) => {
                    issues.push(issue(format!("plant.machines[{i}].params"), e.to_string()));
                    continue;
                }
            };
            let gateway = m.gateway.unwrap_or_else(|| {
                let gws = &raw.network.gateways;
                gws.get(i % gws.len().max(1)).cloned().unwrap_or_default()
            });
            machines.push(MachineConfig {
                id: m.id,
                essential: m.essential,
                gateway,
                params,
            });
        }
        let sensors = overlay(&default_sensors(), &raw.plant.sensors, "plant.sensors", &mut issues);
        let edge = overlay(&EdgeConfig::default(), &raw.edge, "edge", &mut issues);
        let (Some(sensors), Some(edge)) = (sensors, edge) else {
            return Err(Error::Validation(issues));
        };
        if !issues.is_empty() {
            return Err(Error::Validation(issues));
        }
        let scenario = Scenario {
            run: raw.run,
            machines,
            sensors,
            workload: raw.plant.workload,
            ambient: raw.plant.ambient,
            fire: raw.plant.fire,
            faults: raw.plant.faults,
            fires: raw.plant.fires,
            network: raw.network,
            edge,
            policies: raw.policies,
            trace: raw.trace,
        };
        scenario.check()?;
        Ok(scenario)
    }

    pub fn check(&self) -> Result<()> {
        let issues = self.validate();
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(issues))
        }
    }

    /// SHA-256 over the resolved configuration with the seed cleared, so the
    /// same scenario run under different seeds shares a hash.
    pub fn config_hash(&self) -> String {
        let mut unseeded = self.clone();
        unseeded.run.seed = 0;
        let bytes = serde_json::to_vec(&unseeded).expect("scenario serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.run.seed = seed;
        self
    }

    /// Policies in force for `mode`; baseline switches every policy off.
    pub fn policies_for(&self, mode: RunMode) -> PolicySet {
        match mode {
            RunMode::Baseline => self.policies.disabled(),
            RunMode::Optimized => self.policies.clone(),
        }
    }

    pub fn machine_index(&self, id: &str) -> Option<usize> {
        self.machines.iter().position(|m| m.id == id)
    }

    pub fn sensor_template(&self, kind: SensorKind) -> &SensorTemplate {
        self.sensors.get(kind)
    }

    pub fn validate(&self) -> Vec<ValidationIssue> {
        let mut out = Vec::new();
        if self.run.ticks == 0 {
            out.push(issue("run.ticks", "must be at least 1"));
        }
        if self.run.tick_duration_ms == 0 {
            out.push(issue("run.tick_duration_ms", "must be at least 1"));
        }

        let gateways: HashSet<&str> = self.network.gateways.iter().map(String::as_str).collect();
        if self.network.gateways.is_empty() {
            out.push(issue("network.gateways", "at least one gateway is required"));
        }
        if gateways.len() != self.network.gateways.len() {
            out.push(issue("network.gateways", "duplicate gateway id"));
        }
        for (i, g) in self.network.gateways.iter().enumerate() {
            if let Some(msg) = bad_level(g) {
                out.push(issue(format!("network.gateways[{i}]"), msg));
            }
        }

        if self.machines.is_empty() {
            out.push(issue("plant.machines", "at least one machine is required"));
        }
        let mut ids = HashSet::new();
        for (i, m) in self.machines.iter().enumerate() {
            let path = format!("plant.machines[{i}]");
            if let Some(msg) = bad_level(&m.id) {
                out.push(issue(format!("{path}.id"), msg));
            } else if m.id == "alerts" {
                out.push(issue(format!("{path}.id"), "\"alerts\" is reserved for alert topics"));
            }
            if !ids.insert(m.id.as_str()) {
                out.push(issue(format!("{path}.id"), format!("duplicate machine id {:?}", m.id)));
            }
            if gateways.contains(m.id.as_str()) {
                out.push(issue(format!("{path}.id"), "collides with a gateway id"));
            }
            if !gateways.contains(m.gateway.as_str()) {
                out.push(issue(format!("{path}.gateway"), format!("unknown gateway {:?}", m.gateway)));
            }
            validate_params(&m.params, &format!("{path}.params"), &mut out);
        }

        for kind in SensorKind::ALL {
            let t = self.sensors.get(kind);
            let path = format!("plant.sensors.{}", kind.topic_level());
            if t.sample_period == 0 {
                out.push(issue(format!("{path}.sample_period"), "must be at least 1"));
            }
            if t.gain == 0.0 || !t.gain.is_finite() {
                out.push(issue(format!("{path}.gain"), "must be finite and non-zero"));
            }
            if !t.offset.is_finite() {
                out.push(issue(format!("{path}.offset"), "must be finite"));
            }
            if !(t.tolerance >= 0.0 && t.tolerance.is_finite()) {
                out.push(issue(format!("{path}.tolerance"), "must be a non-negative number"));
            }
        }

        let w = &self.workload;
        let range_u = |name: &str, r: &crate::plant::Range<u64>, out: &mut Vec<ValidationIssue>| {
            if r.0 > r.1 {
                out.push(issue(format!("plant.workload.{name}"), "lower bound exceeds upper bound"));
            }
        };
        range_u("initial_idle_ticks", &w.initial_idle_ticks, &mut out);
        range_u("busy_ticks", &w.busy_ticks, &mut out);
        range_u("idle_ticks", &w.idle_ticks, &mut out);
        range_u("burst_ticks", &w.burst_ticks, &mut out);
        if w.busy_ticks.0 == 0 || w.idle_ticks.0 == 0 {
            out.push(issue("plant.workload", "busy and idle stretches must be at least one tick"));
        }
        for (name, r) in [("utilization", &w.utilization), ("burst_utilization", &w.burst_utilization)] {
            if !(0.0 <= r.0 && r.0 <= r.1 && r.1 <= 1.0) {
                out.push(issue(format!("plant.workload.{name}"), "must satisfy 0 <= min <= max <= 1"));
            }
        }
        if !(0.0..=1.0).contains(&w.burst_probability) {
            out.push(issue("plant.workload.burst_probability", "must be in [0, 1]"));
        }
        for (i, s) in w.segments.iter().enumerate() {
            let path = format!("plant.workload.segments[{i}]");
            if !ids.contains(s.machine.as_str()) {
                out.push(issue(format!("{path}.machine"), format!("unknown machine {:?}", s.machine)));
            }
            if s.start > s.end {
                out.push(issue(format!("{path}.start"), "start is after end"));
            }
            if !(0.0..=1.0).contains(&s.utilization) {
                out.push(issue(format!("{path}.utilization"), "must be in [0, 1]"));
            }
        }
        if !(self.ambient.base_c.is_finite() && self.ambient.amplitude_c.is_finite() && self.ambient.noise_c >= 0.0) {
            out.push(issue("plant.ambient", "temperatures must be finite and noise non-negative"));
        }

        let f = &self.fire;
        if !(f.decay_tau_ticks > 0.0 && f.ramp_per_tick > 0.0 && f.noise >= 0.0 && f.max_intensity > f.baseline) {
            out.push(issue("plant.fire", "needs positive ramp and decay, non-negative noise and max above baseline"));
        }
        if f.baseline + f.noise >= self.edge.sprinkler.release_threshold {
            out.push(issue("plant.fire.baseline", "quiet intensity must stay below the sprinkler release threshold"));
        }
        for (i, ft) in self.faults.iter().enumerate() {
            let path = format!("plant.faults[{i}]");
            if !ids.contains(ft.machine.as_str()) {
                out.push(issue(format!("{path}.machine"), format!("unknown machine {:?}", ft.machine)));
            }
            if ft.tick >= self.run.ticks {
                out.push(issue(format!("{path}.tick"), "is beyond the end of the run"));
            }
            if ft.repair_ticks == Some(0) {
                out.push(issue(format!("{path}.repair_ticks"), "must be at least 1"));
            }
        }
        for (i, ft) in self.fires.iter().enumerate() {
            let path = format!("plant.fires[{i}]");
            if !ids.contains(ft.machine.as_str()) {
                out.push(issue(format!("{path}.machine"), format!("unknown machine {:?}", ft.machine)));
            }
            if ft.tick >= self.run.ticks {
                out.push(issue(format!("{path}.tick"), "is beyond the end of the run"));
            }
        }

        for (name, link) in [("device_link", &self.network.device_link), ("uplink", &self.network.uplink)] {
            if let Err(e) = link.validate() {
                out.push(issue(format!("network.{name}.drop_probability"), e.to_string()));
            }
        }
        let dl = &self.network.device_link;
        for (name, rule) in [("sprinkler", &self.edge.sprinkler), ("cooling", &self.edge.cooling)] {
            let path = format!("edge.{name}");
            if rule.response_deadline == 0 {
                out.push(issue(format!("{path}.response_deadline"), "must be at least 1"));
            }
            if rule.release_threshold >= rule.threshold {
                out.push(issue(format!("{path}.release_threshold"), "must be below threshold"));
            }
            if dl.base_latency + dl.jitter > rule.response_deadline {
                out.push(issue(
                    format!("{path}.response_deadline"),
                    "shorter than the worst-case device link latency",
                ));
            }
        }
        if self.edge.sprinkler.kind != crate::edge::SafetyKind::FireSprinkler {
            out.push(issue("edge.sprinkler.kind", "must be FIRE_SPRINKLER"));
        }
        if self.edge.cooling.kind != crate::edge::SafetyKind::OvertempCooling {
            out.push(issue("edge.cooling.kind", "must be OVERTEMP_COOLING"));
        }
        if self.edge.window_ticks == 0 {
            out.push(issue("edge.window_ticks", "must be at least 1"));
        }
        for kind in SensorKind::ALL {
            let d = *self.edge.deadband.get(kind);
            if !(d >= 0.0 && d.is_finite()) {
                out.push(issue(format!("edge.deadband.{}", kind.topic_level()), "must be a non-negative number"));
            }
        }
        if self.network.max_payload_bytes < 64 {
            out.push(issue("network.max_payload_bytes", "must be at least 64"));
        }
        if self.network.batch.period_ticks == 0 {
            out.push(issue("network.batch.period_ticks", "must be at least 1"));
        }

        for name in &self.policies.idle_shutdown.essential_machines {
            if !ids.contains(name.as_str()) {
                out.push(issue(
                    "policies.idle_shutdown.essential_machines",
                    format!("unknown machine {name:?}"),
                ));
            }
        }
        out.extend(self.policies.validate("policies"));
        out
    }
}

fn bad_level(id: &str) -> Option<&'static str> {
    if id.is_empty() {
        Some("must be non-empty")
    } else if id.contains(['/', '+', '#']) {
        Some("must not contain '/', '+' or '#'")
    } else {
        None
    }
}

fn validate_params(p: &MachineParams, path: &str, out: &mut Vec<ValidationIssue>) {
    let mut bad = |field: &str, msg: &str| out.push(issue(format!("{path}.{field}"), msg));
    if !(p.p_run_w > 0.0 && p.p_run_w.is_finite()) {
        bad("p_run_w", "must be positive");
    }
    if !(p.p_standby_w >= 0.0 && p.p_maint_w >= 0.0) {
        bad("p_standby_w", "standby and maintenance power must be non-negative");
    }
    if !(0.0..=1.0).contains(&p.load_floor) {
        bad("load_floor", "must be in [0, 1]");
    }
    if p.p_run_w * p.load_floor < p.p_standby_w {
        bad("load_floor", "running power at zero load must not be below standby power");
    }
    if !(p.max_rate > 0.0 && p.max_rate <= MAX_RATE_LIMIT) {
        bad("max_rate", "must be in (0, 8]");
    }
    if p.repair_ticks == 0 || p.fire_repair_ticks == 0 {
        bad("repair_ticks", "repair durations must be at least 1");
    }
    if p.maintenance_ticks == 0 || p.maintenance_ticks >= p.repair_ticks {
        bad("maintenance_ticks", "must be at least 1 and shorter than repair_ticks");
    }
    let th = &p.thermal;
    if !(th.tau_heat_ticks > 0.0 && th.tau_cool_ticks > 0.0 && th.cooling_tau_factor > 0.0) {
        bad("thermal", "time constants must be positive");
    }
    if !(th.excursion_scale_c > 0.0) {
        bad("thermal.excursion_scale_c", "must be positive");
    }
    if th.critical_c <= th.nominal_max_c {
        bad("thermal.critical_c", "must be above nominal_max_c");
    }
    let pr = &p.pressure;
    if !(pr.band_kpa > 0.0) {
        bad("pressure.band_kpa", "must be positive");
    }
    if !(pr.noise_kpa >= 0.0 && pr.surge_kpa_per_tick >= 0.0) {
        bad("pressure", "noise and surge must be non-negative");
    }
    if !(pr.regulator_gain > 0.0 && pr.regulator_gain < 1.0 && pr.passive_relaxation >= 0.0 && pr.passive_relaxation < 1.0) {
        bad("pressure.regulator_gain", "gain must be in (0, 1) and passive relaxation in [0, 1)");
    } else if pr.regulator_enabled && pr.deviation_bound() > pr.max_overshoot_kpa {
        bad("pressure.max_overshoot_kpa", "the regulator cannot hold this bound for the configured surge and noise");
    }
    let w = &p.wear;
    if !(w.rate_per_tick >= 0.0 && w.temperature_factor >= 0.0 && w.pressure_factor >= 0.0) {
        bad("wear", "rates must be non-negative");
    }
    if !(p.hazard.base_per_tick >= 0.0 && p.hazard.wear_sensitivity > 0.0 && p.hazard.shape >= 1.0) {
        bad("hazard", "base must be non-negative, wear_sensitivity positive and shape at least 1");
    }
    if !(0.0..=1.0).contains(&p.initial_wear) {
        bad("initial_wear", "must lie in [0, 1]");
    }
    let d = &p.defects;
    if !(d.base >= 0.0 && d.temperature >= 0.0 && d.pressure >= 0.0) {
        bad("defects", "coefficients must be non-negative");
    }
}
