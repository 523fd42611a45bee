use std::collections::{HashMap, HashSet, VecDeque};

use serde::Serialize;

use super::{
    energy_policy, plan_maintenance, AnomalyDetector, AnomalyEvent, EnergyDecision,
    EnergySnapshot, MaintenancePlan, MaintenanceReason, PolicySet,
};
use crate::plant::{ActuatorCommand, MachineEvent, MachineParams, SensorKind, SensorReading, WorkloadProfile};
use crate::transport::{BatchTransfer, Envelope, Payload};
use crate::Id;

/// Ticks to wait for a MAINTENANCE_STARTED event before re-planning.
const MAINTENANCE_ACK_TICKS: u64 = 60;

/// Below this power a machine is taken to be unpowered.
const OFF_POWER_W: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ViewState {
    Unknown,
    Off,
    Idle,
    Running,
    Maintenance,
    Faulted,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CloudCommand {
    Actuate {
        machine: usize,
        command: ActuatorCommand,
        reason: &'static str,
    },
    Slowdown {
        machine: usize,
        active: bool,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct CloudStats {
    pub readings: u64,
    pub stale_readings: u64,
    pub events: u64,
    pub duplicate_events: u64,
    pub anomalies: u64,
    pub summaries: u64,
    pub commands: u64,
    pub plans: u64,
}

/// The cloud's picture of one machine, built only from delivered messages.
#[derive(Debug, Clone, Serialize)]
pub struct MachineView {
    pub machine_id: Id,
    pub power_w: Option<(u64, f64)>,
    pub temperature_c: Option<(u64, f64)>,
    pub pressure_kpa: Option<(u64, f64)>,
    pub fire: Option<(u64, f64)>,
    pub inferred: ViewState,
    pub faulted: bool,
    pub in_maintenance: bool,
    pub idle_since: Option<u64>,
    pub commanded_off: Option<u64>,
    pub wear_estimate: f64,
    #[serde(skip)]
    pub wear_history: VecDeque<(u64, f64)>,
    pub plan: Option<MaintenancePlan>,
    pub maintenance_requested: Option<u64>,
    pub excursion_until: Option<u64>,
    pub slowed: bool,
    #[serde(skip)]
    pub anomaly_ticks: VecDeque<u64>,
}

impl MachineView {
    fn new(machine_id: Id, initial_wear: f64) -> Self {
        MachineView {
            machine_id,
            power_w: None,
            temperature_c: None,
            pressure_kpa: None,
            fire: None,
            inferred: ViewState::Unknown,
            faulted: false,
            in_maintenance: false,
            idle_since: None,
            commanded_off: None,
            wear_estimate: initial_wear,
            wear_history: VecDeque::new(),
            plan: None,
            maintenance_requested: None,
            excursion_until: None,
            slowed: false,
            anomaly_ticks: VecDeque::new(),
        }
    }

    pub fn state(&self) -> ViewState {
        if self.faulted {
            ViewState::Faulted
        } else if self.in_maintenance {
            ViewState::Maintenance
        } else {
            self.inferred
        }
    }

    fn slot(&mut self, kind: SensorKind) -> &mut Option<(u64, f64)> {
        match kind {
            SensorKind::Energy => &mut self.power_w,
            SensorKind::Temperature => &mut self.temperature_c,
            SensorKind::Pressure => &mut self.pressure_kpa,
            SensorKind::Fire => &mut self.fire,
        }
    }

    fn reset_wear(&mut self) {
        self.wear_estimate = 0.0;
        self.wear_history.clear();
        self.plan = None;
        self.maintenance_requested = None;
    }
}

#[derive(Debug, Clone)]
pub struct CloudMachine {
    pub id: Id,
    pub params: MachineParams,
    pub essential: bool,
}

#[derive(Debug)]
pub struct CloudAnalytics {
    machines: Vec<CloudMachine>,
    index: HashMap<Id, usize>,
    views: Vec<MachineView>,
    policies: PolicySet,
    /// Fire level below which a sprinkler is assumed released.
    fire_quiet_level: f64,
    last_seq: HashMap<Id, u64>,
    detectors: HashMap<Id, AnomalyDetector>,
    seen_events: HashSet<u64>,
    stats: CloudStats,
}

impl CloudAnalytics {
    pub fn new(machines: Vec<CloudMachine>, policies: PolicySet, fire_quiet_level: f64) -> Self {
        let index = machines.iter().enumerate().map(|(i, m)| (m.id.clone(), i)).collect();
        let views = machines.iter().map(|m| MachineView::new(m.id.clone(), m.params.initial_wear)).collect();
        CloudAnalytics {
            machines,
            index,
            views,
            policies,
            fire_quiet_level,
            last_seq: HashMap::new(),
            detectors: HashMap::new(),
            seen_events: HashSet::new(),
            stats: CloudStats::default(),
        }
    }

    pub fn policies(&self) -> &PolicySet {
        &self.policies
    }

    pub fn set_policies(&mut self, policies: PolicySet) {
        if policies.anomaly.window != self.policies.anomaly.window
            || policies.anomaly.k != self.policies.anomaly.k
        {
            self.detectors.clear();
        }
        self.policies = policies;
    }

    pub fn views(&self) -> &[MachineView] {
        &self.views
    }

    pub fn stats(&self) -> CloudStats {
        self.stats
    }

    pub fn machine_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    /// Takes one envelope delivered over an uplink.
    pub fn ingest(&mut self, envelope: &Envelope) -> Option<AnomalyEvent> {
        match &envelope.payload {
            Payload::Reading(r) => self.ingest_reading(r),
            Payload::Event {
                machine_id, tick, event, ..
            } => {
                if !self.seen_events.insert(envelope.msg_id) {
                    self.stats.duplicate_events += 1;
                    return None;
                }
                self.stats.events += 1;
                if let Some(&m) = self.index.get(machine_id) {
                    self.apply_event(m, *tick, *event);
                }
                None
            }
        }
    }

    fn ingest_reading(&mut self, r: &SensorReading) -> Option<AnomalyEvent> {
        let m = *self.index.get(&r.machine_id)?;
        match self.last_seq.get(&r.sensor_id) {
            Some(&s) if r.seq_no <= s => {
                self.stats.stale_readings += 1;
                return None;
            }
            _ => {
                self.last_seq.insert(r.sensor_id.clone(), r.seq_no);
            }
        }
        self.stats.readings += 1;
        self.observe(m, r.kind, r.tick, r.value);

        if !self.policies.anomaly.enabled {
            return None;
        }
        let (w, k) = (self.policies.anomaly.window, self.policies.anomaly.k);
        let det = self
            .detectors
            .entry(r.sensor_id.clone())
            .or_insert_with(|| AnomalyDetector::new(w, k));
        let event = det.push(&r.sensor_id, r.tick, r.value)?;
        self.stats.anomalies += 1;
        let view = &mut self.views[m];
        view.anomaly_ticks.push_back(r.tick);
        if view.anomaly_ticks.len() > 64 {
            view.anomaly_ticks.pop_front();
        }
        Some(event)
    }

    /// Window summaries refresh any view older than the summary's last value.
    pub fn ingest_batch(&mut self, batch: &BatchTransfer) {
        for s in &batch.records {
            self.stats.summaries += 1;
            if let Some(&m) = self.index.get(&s.machine_id) {
                self.observe(m, s.kind, s.last_tick, s.last);
            }
        }
    }

    fn observe(&mut self, m: usize, kind: SensorKind, tick: u64, value: f64) {
        let params = &self.machines[m].params;
        let view = &mut self.views[m];
        let slot = view.slot(kind);
        if slot.is_some_and(|(t, _)| t > tick) {
            return;
        }
        *slot = Some((tick, value));
        if kind != SensorKind::Energy {
            return;
        }
        let near = |p: f64| (value - p).abs() <= 0.2 * p;
        view.inferred = if value < OFF_POWER_W {
            ViewState::Off
        } else if near(params.p_standby_w) {
            ViewState::Idle
        } else if near(params.p_maint_w) {
            ViewState::Maintenance
        } else {
            ViewState::Running
        };
        if view.inferred == ViewState::Idle && !view.faulted && !view.in_maintenance {
            view.idle_since.get_or_insert(tick);
        } else {
            view.idle_since = None;
        }
        if let Some(cmd_tick) = view.commanded_off {
            if tick > cmd_tick && matches!(view.inferred, ViewState::Running | ViewState::Maintenance) {
                // The shutdown did not take (demand arrived first).
                view.commanded_off = None;
            }
        }
    }

    fn apply_event(&mut self, m: usize, _tick: u64, event: MachineEvent) {
        let view = &mut self.views[m];
        match event {
            MachineEvent::FaultStarted { .. } => {
                view.faulted = true;
                view.in_maintenance = false;
                view.idle_since = None;
                view.plan = None;
                view.maintenance_requested = None;
            }
            MachineEvent::Repaired => {
                view.faulted = false;
                view.reset_wear();
            }
            MachineEvent::MaintenanceStarted => {
                view.in_maintenance = true;
                view.idle_since = None;
                view.commanded_off = None;
                view.plan = None;
                view.maintenance_requested = None;
            }
            MachineEvent::MaintenanceDone => {
                view.in_maintenance = false;
                view.reset_wear();
            }
        }
    }

    /// Runs the policies for tick `now`. Returned commands apply next tick.
    pub fn tick(&mut self, now: u64, workload: &WorkloadProfile) -> Vec<CloudCommand> {
        let mut out = Vec::new();
        for m in 0..self.machines.len() {
            self.integrate_wear(m);
            self.maintenance(m, now, workload, &mut out);
            self.energy(m, now, workload, &mut out);
            self.resource(m, now, &mut out);
        }
        self.stats.commands += out.len() as u64;
        out
    }

    /// Digital-twin wear estimate: the wear model driven by telemetry.
    fn integrate_wear(&mut self, m: usize) {
        let p = &self.machines[m].params;
        let view = &mut self.views[m];
        if view.state() != ViewState::Running {
            return;
        }
        let Some((_, power)) = view.power_w else {
            return;
        };
        let u = ((power / p.p_run_w - p.load_floor) / (1.0 - p.load_floor)).clamp(0.0, 1.0);
        let t = view.temperature_c.map_or(p.thermal.nominal_max_c, |v| v.1);
        let pr = view.pressure_kpa.map_or(p.pressure.nominal_kpa, |v| v.1);
        view.wear_estimate = (view.wear_estimate + p.wear_increment(u, t, pr)).min(1.0);
    }

    fn maintenance(&mut self, m: usize, now: u64, workload: &WorkloadProfile, out: &mut Vec<CloudCommand>) {
        let policy = &self.policies.predictive_maintenance;
        let machine = &self.machines[m];
        let view = &mut self.views[m];
        if now % policy.sample_interval == 0 {
            view.wear_history.push_back((now, view.wear_estimate));
            while view.wear_history.len() > policy.history_len {
                view.wear_history.pop_front();
            }
        }
        if !policy.enabled || view.faulted || view.in_maintenance {
            return;
        }
        if let Some(at) = view.maintenance_requested {
            if now >= at + MAINTENANCE_ACK_TICKS {
                view.maintenance_requested = None;
                view.plan = None;
            }
            return;
        }
        if view.plan.is_none() {
            if policy.escalation_anomalies > 0 {
                let since = now.saturating_sub(policy.escalation_window);
                let recent = view.anomaly_ticks.iter().filter(|&&t| t >= since).count();
                if recent >= policy.escalation_anomalies as usize {
                    view.anomaly_ticks.clear();
                    view.plan = Some(MaintenancePlan {
                        machine_id: machine.id.clone(),
                        scheduled_tick: now,
                        duration: machine.params.maintenance_ticks,
                        reason: MaintenanceReason::AnomalyEscalation,
                    });
                }
            }
            if view.plan.is_none() && now % policy.sample_interval == 0 {
                let history: Vec<(u64, f64)> = view.wear_history.iter().copied().collect();
                view.plan = plan_maintenance(
                    &machine.id,
                    &history,
                    now,
                    policy,
                    machine.params.maintenance_ticks,
                    |from, until, len| workload.idle_window(m, from, until, len),
                );
            }
            if view.plan.is_some() {
                self.stats.plans += 1;
            }
        }
        if let Some(plan) = &view.plan {
            if now >= plan.scheduled_tick {
                view.maintenance_requested = Some(now);
                out.push(CloudCommand::Actuate {
                    machine: m,
                    command: ActuatorCommand::StartMaintenance,
                    reason: match plan.reason {
                        MaintenanceReason::WearForecast => "wear-forecast",
                        MaintenanceReason::AnomalyEscalation => "anomaly-escalation",
                    },
                });
            }
        }
    }

    fn energy(&mut self, m: usize, now: u64, workload: &WorkloadProfile, out: &mut Vec<CloudCommand>) {
        let policy = &self.policies.idle_shutdown;
        if !policy.enabled {
            return;
        }
        let machine = &self.machines[m];
        let view = &mut self.views[m];
        let snapshot = EnergySnapshot {
            machine_id: &machine.id,
            essential: machine.essential || policy.essential_machines.contains(machine.id.as_ref()),
            idle_since: if view.maintenance_requested.is_some() || view.plan.as_ref().is_some_and(|p| p.scheduled_tick <= now + 1) {
                None
            } else {
                view.idle_since
            },
            commanded_off: view.commanded_off.is_some(),
            next_demand: workload.next_demand_tick(m, now),
            sprinkler_active: view.fire.is_some_and(|(_, f)| f > self.fire_quiet_level),
        };
        match energy_policy(&snapshot, policy, now) {
            Some(EnergyDecision::Shutdown) => {
                view.commanded_off = Some(now);
                out.push(CloudCommand::Actuate {
                    machine: m,
                    command: ActuatorCommand::Shutdown,
                    reason: "idle-shutdown",
                });
            }
            Some(EnergyDecision::Wake) => {
                view.commanded_off = None;
                out.push(CloudCommand::Actuate {
                    machine: m,
                    command: ActuatorCommand::Wake,
                    reason: "forecast-demand",
                });
            }
            None => {}
        }
    }

    fn resource(&mut self, m: usize, now: u64, out: &mut Vec<CloudCommand>) {
        let policy = &self.policies.resource_opt;
        let p = &self.machines[m].params;
        let view = &mut self.views[m];
        let want = if policy.enabled {
            let hot = view
                .temperature_c
                .is_some_and(|(_, t)| t >= p.thermal.nominal_max_c - policy.temperature_guard_c);
            let off_band = view
                .pressure_kpa
                .is_some_and(|(_, v)| (v - p.pressure.nominal_kpa).abs() > p.pressure.band_kpa);
            if hot || off_band {
                view.excursion_until = Some(now + policy.hold_ticks);
            }
            view.excursion_until.is_some_and(|until| now < until)
        } else {
            false
        };
        if want != view.slowed {
            view.slowed = want;
            out.push(CloudCommand::Slowdown { machine: m, active: want });
        }
    }
}
