//! The simulation loop. One call to [`World::step`] executes one tick in
//! eight fixed phases:
//!
//! 1. external commands, scheduled faults and fires, pending slowdowns
//! 2. plant dynamics
//! 3. sensor sampling and machine events, published to gateways
//! 4. network delivery
//! 5. edge processing
//! 6. cloud analytics
//! 7. actuator updates (edge safety now, cloud commands next tick)
//! 8. KPI accumulation and machine-state trace records

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::analytics::{AnomalyEvent, CloudAnalytics, CloudCommand, CloudMachine, DemandScheduler, MachineView, PolicySet};
use crate::edge::{EdgeNode, EdgeStats, FilterDecision, SafetyKind, SensorBinding};
use crate::error::{Error, Result};
use crate::plant::{
    fire_process, sample_sensor, step_machine, ActuatorCommand, FaultKind, MachineEvent, MachineInputs,
    MachineState, Mode, PlantRngs, SensorKind, SensorReading, SensorSpec, WorkloadProfile,
};
use crate::rng::{split_rng, streams, RngStream};
use crate::scenario::trace::{
    AnomalyRecord, CommandRecord, CommandSource, DeliveryRecord, Header, MachineStateRecord, ReadingRecord,
    TraceRecord, TraceSink, TRACE_FORMAT,
};
use crate::scenario::{KpiAccumulator, RunMode, Scenario};
use crate::sim::{Actuator, CommandBody, CommandQueue, ExternalCommand, SimClock};
use crate::transport::{
    alert_topic, telemetry_topic, BatchChannel, Hop, HopStreams, Payload, Qos, StarNetwork,
    Topology, TransportStats,
};
use crate::Id;

#[derive(Debug, Clone)]
struct SensorSlot {
    spec: SensorSpec,
    machine: usize,
    topic: Id,
    seq: u64,
}

/// Per-gateway edge counters.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeStatsView {
    pub gateway: Id,
    pub stats: EdgeStats,
}

/// One local safety actuation performed by an edge node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SafetyActivation {
    pub machine: usize,
    pub kind: SafetyKind,
    pub on: bool,
    pub reading_tick: u64,
    pub applied_tick: u64,
}

/// Observable happenings, captured for live streaming when enabled.
#[derive(Debug, Clone, PartialEq)]
pub enum LiveEvent {
    Reading { topic: Id, reading: SensorReading },
    Alert { topic: Id, reading: SensorReading },
    Machine { topic: Id, machine: Id, tick: u64, event: MachineEvent },
    Anomaly { topic: Id, machine: Id, event: AnomalyEvent },
    Command { topic: Id, record: CommandRecord },
}

impl LiveEvent {
    pub fn topic(&self) -> &str {
        match self {
            LiveEvent::Reading { topic, .. }
            | LiveEvent::Alert { topic, .. }
            | LiveEvent::Machine { topic, .. }
            | LiveEvent::Anomaly { topic, .. }
            | LiveEvent::Command { topic, .. } => topic,
        }
    }
}

pub struct World {
    scenario: Arc<Scenario>,
    mode: RunMode,
    policies: PolicySet,
    clock: SimClock,
    ids: Vec<Id>,
    states: Vec<MachineState>,
    sensors: Vec<SensorSlot>,
    workload: WorkloadProfile,
    plant_rngs: PlantRngs,
    fire_rng: RngStream,
    sensor_rng: RngStream,
    links: HopStreams,
    network: StarNetwork,
    batch: BatchChannel,
    edges: Vec<EdgeNode>,
    cloud: CloudAnalytics,
    scheduler: DemandScheduler,
    next_cmds: Vec<Vec<ActuatorCommand>>,
    next_slowdowns: Vec<(usize, bool)>,
    queue: CommandQueue,
    faults_at: BTreeMap<u64, Vec<(usize, FaultKind, Option<u64>)>>,
    fires_at: BTreeMap<u64, Vec<usize>>,
    acc: KpiAccumulator,
    safety_log: Vec<SafetyActivation>,
    event_topics: [Id; 3],
    anomaly_topics: Vec<Id>,
    command_topics: Vec<Id>,
    telemetry_records: bool,
    capture: bool,
    captured: Vec<LiveEvent>,
    started: bool,
    last_demand: Vec<f64>,
}

fn describe(cmd: &ActuatorCommand) -> String {
    match cmd {
        ActuatorCommand::Shutdown => "shutdown".into(),
        ActuatorCommand::Wake => "wake".into(),
        ActuatorCommand::StartMaintenance => "start-maintenance".into(),
        ActuatorCommand::Cooling { on } => format!("cooling:{}", if *on { "on" } else { "off" }),
        ActuatorCommand::Sprinkler { on } => format!("sprinkler:{}", if *on { "on" } else { "off" }),
        ActuatorCommand::InjectFault { kind, repair_ticks } => {
            format!("fault:{}:{repair_ticks}", serde_json::to_value(kind).expect("kind").as_str().unwrap_or(""))
        }
    }
}

impl World {
    pub fn new(scenario: Arc<Scenario>, mode: RunMode) -> Result<World> {
        scenario.check()?;
        let seed = scenario.run.seed;
        let n = scenario.machines.len();
        let ids: Vec<Id> = scenario.machines.iter().map(|m| Id::from(m.id.as_str())).collect();

        let mut workload_rng = split_rng(seed, streams::WORKLOAD);
        let rates: Vec<(Id, f64)> = ids
            .iter()
            .zip(&scenario.machines)
            .map(|(id, m)| (id.clone(), m.params.max_rate))
            .collect();
        let workload = WorkloadProfile::build(
            &scenario.workload,
            &scenario.ambient,
            &rates,
            scenario.run.ticks,
            &mut workload_rng,
        );
        let ambient0 = workload.ambient(0);
        let states = ids
            .iter()
            .zip(&scenario.machines)
            .map(|(id, m)| MachineState::new(id.clone(), &m.params, ambient0, &scenario.fire))
            .collect();

        let mut sensors = Vec::with_capacity(n * SensorKind::ALL.len());
        for (i, id) in ids.iter().enumerate() {
            for kind in SensorKind::ALL {
                let t = scenario.sensor_template(kind);
                sensors.push(SensorSlot {
                    spec: SensorSpec {
                        sensor_id: format!("{id}-{}", kind.topic_level()).into(),
                        kind,
                        machine_id: id.clone(),
                        sample_period: t.sample_period,
                        calibration: t.calibration(),
                    },
                    machine: i,
                    topic: telemetry_topic(id, kind).into(),
                    seq: 0,
                });
            }
        }

        let gateways: Vec<Id> = scenario.network.gateways.iter().map(|g| Id::from(g.as_str())).collect();
        let topology = Topology::new(
            gateways.clone(),
            ids.iter()
                .zip(&scenario.machines)
                .map(|(id, m)| (id.clone(), Id::from(m.gateway.as_str()))),
        )?;
        let net = &scenario.network;
        let grace = net.device_link.base_latency + net.device_link.jitter;
        let edges = (0..gateways.len())
            .map(|g| {
                let bindings = sensors
                    .iter()
                    .filter(|s| topology.gateway_of(&s.spec.machine_id) == Some(g))
                    .map(|s| SensorBinding {
                        spec: s.spec.clone(),
                        machine_index: s.machine,
                    })
                    .collect();
                EdgeNode::new(g, scenario.edge.clone(), bindings, grace)
            })
            .collect();
        let network = StarNetwork::new(topology, net.device_link, net.uplink, net.max_payload_bytes);
        let batch = BatchChannel::new(net.uplink, net.batch.clone());

        let policies = scenario.policies_for(mode);
        let cloud = CloudAnalytics::new(
            ids.iter()
                .zip(&scenario.machines)
                .map(|(id, m)| CloudMachine {
                    id: id.clone(),
                    params: m.params.clone(),
                    essential: m.essential,
                })
                .collect(),
            policies.clone(),
            scenario.edge.sprinkler.release_threshold,
        );

        let mut faults_at: BTreeMap<u64, Vec<_>> = BTreeMap::new();
        for f in &scenario.faults {
            let m = scenario.machine_index(&f.machine).expect("validated");
            faults_at.entry(f.tick).or_default().push((m, f.kind, f.repair_ticks));
        }
        let mut fires_at: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        for f in &scenario.fires {
            let m = scenario.machine_index(&f.machine).expect("validated");
            fires_at.entry(f.tick).or_default().push(m);
        }

        Ok(World {
            mode,
            policies,
            clock: SimClock::new(scenario.run.tick_duration_ms),
            anomaly_topics: ids.iter().map(|id| Id::from(format!("plant/{id}/anomaly"))).collect(),
            command_topics: ids.iter().map(|id| Id::from(format!("plant/{id}/cmd"))).collect(),
            ids,
            states,
            sensors,
            workload,
            plant_rngs: PlantRngs {
                faults: split_rng(seed, streams::FAULTS),
                defects: split_rng(seed, streams::DEFECTS),
                process: split_rng(seed, streams::PROCESS),
            },
            fire_rng: split_rng(seed, streams::FIRE),
            sensor_rng: split_rng(seed, streams::SENSOR_NOISE),
            links: HopStreams {
                device: split_rng(seed, streams::DEVICE_LINK),
                uplink: split_rng(seed, streams::LINK_LOSS),
            },
            network,
            batch,
            edges,
            cloud,
            scheduler: DemandScheduler::new(n),
            next_cmds: vec![Vec::new(); n],
            next_slowdowns: Vec::new(),
            queue: CommandQueue::new(),
            faults_at,
            fires_at,
            acc: KpiAccumulator::new(n),
            safety_log: Vec::new(),
            event_topics: [
                alert_topic("fault").into(),
                alert_topic("repair").into(),
                alert_topic("maintenance").into(),
            ],
            telemetry_records: scenario.trace.telemetry,
            capture: false,
            captured: Vec::new(),
            started: false,
            last_demand: vec![0.0; n],
            scenario,
        })
    }

    pub fn scenario(&self) -> &Arc<Scenario> {
        &self.scenario
    }

    pub fn mode(&self) -> RunMode {
        self.mode
    }

    /// The tick the next `step` will execute.
    pub fn tick(&self) -> u64 {
        self.clock.tick
    }

    pub fn finished(&self) -> bool {
        self.clock.tick >= self.scenario.run.ticks
    }

    pub fn machine_ids(&self) -> &[Id] {
        &self.ids
    }

    pub fn machines(&self) -> &[MachineState] {
        &self.states
    }

    pub fn policies(&self) -> &PolicySet {
        &self.policies
    }

    pub fn accumulator(&self) -> &KpiAccumulator {
        &self.acc
    }

    pub fn safety_log(&self) -> &[SafetyActivation] {
        &self.safety_log
    }

    pub fn cloud_views(&self) -> &[MachineView] {
        self.cloud.views()
    }

    pub fn cloud(&self) -> &CloudAnalytics {
        &self.cloud
    }

    pub fn transport_stats(&self) -> TransportStats {
        self.network.stats()
    }

    pub fn edge_stats(&self) -> Vec<EdgeStatsView> {
        self.edges
            .iter()
            .map(|e| EdgeStatsView {
                gateway: self.network.topology().gateway_id(e.gateway()).clone(),
                stats: e.stats(),
            })
            .collect()
    }

    pub fn batch_channel(&self) -> &BatchChannel {
        &self.batch
    }

    pub fn scheduler(&self) -> &DemandScheduler {
        &self.scheduler
    }

    pub fn workload(&self) -> &WorkloadProfile {
        &self.workload
    }

    /// Demand rate applied to each machine in the last executed tick.
    pub fn last_demand(&self) -> &[f64] {
        &self.last_demand
    }

    /// Replaces the uplink model mid-run (outage experiments).
    pub fn set_uplink(&mut self, link: crate::transport::LinkModel) {
        self.network.set_uplink(link);
        self.batch.set_link(link);
    }

    /// Enables collection of [`LiveEvent`]s, drained with [`World::take_events`].
    pub fn set_capture(&mut self, on: bool) {
        self.capture = on;
    }

    pub fn take_events(&mut self) -> Vec<LiveEvent> {
        std::mem::take(&mut self.captured)
    }

    /// Queues an external command; returns the tick it will apply at.
    pub fn submit(&mut self, cmd: ExternalCommand) -> Result<u64> {
        self.validate_command(&cmd.body)?;
        Ok(self.queue.push(cmd, self.clock.tick))
    }

    fn validate_command(&self, body: &CommandBody) -> Result<()> {
        let machine = match body {
            CommandBody::FaultInjection { machine_id, .. } | CommandBody::ActuatorOverride { machine_id, .. } => {
                Some(machine_id)
            }
            CommandBody::PolicyChange(patch) => {
                patch.apply(&self.policies)?;
                None
            }
            CommandBody::SimControl { .. } => None,
        };
        if let Some(m) = machine {
            if !self.ids.iter().any(|id| id == m) {
                return Err(Error::Validation(vec![crate::ValidationIssue {
                    path: "machine_id".into(),
                    message: format!("unknown machine {m:?}"),
                }]));
            }
        }
        Ok(())
    }

    pub fn header(&self) -> Header {
        Header {
            format: TRACE_FORMAT,
            config_hash: self.scenario.config_hash(),
            seed: self.scenario.run.seed,
            tick_ms: self.scenario.run.tick_duration_ms,
            ticks: self.scenario.run.ticks,
            machines: self.ids.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn command_record(
        &mut self,
        sink: &mut dyn TraceSink,
        source: CommandSource,
        machine: Option<usize>,
        command: String,
        reason: &str,
    ) -> Result<()> {
        let record = CommandRecord {
            tick: self.clock.tick,
            source,
            machine: machine.map(|m| self.ids[m].clone()),
            command,
            reason: reason.to_owned(),
        };
        if self.capture {
            let topic = match machine {
                Some(m) => self.command_topics[m].clone(),
                None => Id::from("plant/sim/cmd"),
            };
            self.captured.push(LiveEvent::Command {
                topic,
                record: record.clone(),
            });
        }
        sink.record(TraceRecord::Command(record))
    }

    /// Executes one tick. Past the end of the run this is a no-op.
    pub fn step(&mut self, sink: &mut dyn TraceSink) -> Result<()> {
        if self.finished() {
            return Ok(());
        }
        if !self.started {
            self.started = true;
            sink.record(TraceRecord::Header(self.header()))?;
        }
        let t = self.clock.tick;
        let n = self.ids.len();
        let tick_ms = self.clock.tick_duration_ms;

        // Phase 1.
        let mut cmds = std::mem::replace(&mut self.next_cmds, vec![Vec::new(); n]);
        for (m, on) in std::mem::take(&mut self.next_slowdowns) {
            self.scheduler.set_slowdown(m, on);
        }
        let mut ignite = vec![false; n];
        for ext in self.queue.drain_due(t) {
            self.apply_external(ext, &mut cmds, &mut ignite, sink)?;
        }
        if let Some(list) = self.faults_at.remove(&t) {
            for (m, kind, repair) in list {
                if kind == FaultKind::Fire {
                    ignite[m] = true;
                    self.command_record(sink, CommandSource::External, Some(m), "ignite".into(), "schedule")?;
                } else {
                    let repair_ticks = repair.unwrap_or(self.scenario.machines[m].params.repair_ticks);
                    let c = ActuatorCommand::InjectFault { kind, repair_ticks };
                    self.command_record(sink, CommandSource::External, Some(m), describe(&c), "schedule")?;
                    cmds[m].push(c);
                }
            }
        }
        if let Some(list) = self.fires_at.remove(&t) {
            for m in list {
                ignite[m] = true;
                self.command_record(sink, CommandSource::External, Some(m), "ignite".into(), "schedule")?;
            }
        }

        // Phase 2.
        let mut ticks_out = Vec::with_capacity(n);
        for m in 0..n {
            let params = &self.scenario.machines[m].params;
            let state = &mut self.states[m];
            let sprinkler = state.sprinkler_on;
            let intensity = fire_process(&mut state.fire, &self.scenario.fire, ignite[m], sprinkler, &mut self.fire_rng);
            let demand = self
                .scheduler
                .demand(m, self.workload.demand(m, t), params.max_rate, &self.policies.resource_opt)
                .allowed;
            self.last_demand[m] = demand;
            let out = step_machine(
                state,
                params,
                &self.scenario.fire,
                MachineInputs {
                    demand,
                    ambient_c: self.workload.ambient(t),
                    commands: &cmds[m],
                    fire_intensity: intensity,
                    tick: t,
                    tick_duration_ms: tick_ms,
                },
                &mut self.plant_rngs,
            );
            self.acc.energy_uj[m] += out.energy_uj;
            self.acc.produced[m] += out.produced as u64;
            self.acc.defective[m] += out.defective as u64;
            self.acc.scrapped[m] += out.scrapped as u64;
            if state.mode.is_down() {
                self.acc.downtime_ticks[m] += 1;
            }
            ticks_out.push(out);
        }

        // Phase 3.
        for s in &mut self.sensors {
            if !s.spec.is_due(t) {
                continue;
            }
            let state = &self.states[s.machine];
            let truth = match s.spec.kind {
                SensorKind::Energy => state.power_w(),
                SensorKind::Temperature => state.temperature_c,
                SensorKind::Pressure => state.pressure_kpa,
                SensorKind::Fire => state.fire.intensity,
            };
            let reading = sample_sensor(&s.spec, truth, t, s.seq, &mut self.sensor_rng);
            s.seq += 1;
            if self.telemetry_records {
                sink.record(TraceRecord::Reading(ReadingRecord {
                    tick: t,
                    sensor: reading.sensor_id.clone(),
                    machine: reading.machine_id.clone(),
                    sensor_kind: reading.kind,
                    seq: reading.seq_no,
                    value: reading.value,
                }))?;
            }
            if self.capture {
                self.captured.push(LiveEvent::Reading {
                    topic: s.topic.clone(),
                    reading: reading.clone(),
                });
            }
            self.network.publish(
                &s.spec.machine_id,
                s.topic.clone(),
                Qos::AtMostOnce,
                Payload::Reading(reading),
                t,
                &mut self.links,
            )?;
        }
        for (m, out) in ticks_out.iter().enumerate() {
            for &event in &out.events {
                let topic = match event {
                    MachineEvent::FaultStarted { .. } => self.event_topics[0].clone(),
                    MachineEvent::Repaired => self.event_topics[1].clone(),
                    _ => self.event_topics[2].clone(),
                };
                if self.capture {
                    self.captured.push(LiveEvent::Machine {
                        topic: topic.clone(),
                        machine: self.ids[m].clone(),
                        tick: t,
                        event,
                    });
                }
                self.network.publish(
                    &self.ids[m],
                    topic,
                    Qos::AtLeastOnce,
                    Payload::Event {
                        machine_id: self.ids[m].clone(),
                        tick: t,
                        event,
                    },
                    t,
                    &mut self.links,
                )?;
            }
        }

        // Phase 4.
        let deliveries = self.network.poll(t, &mut self.links);
        let stored = self.batch.poll(t, &mut self.links.uplink);

        // Phase 5.
        let mut safety = Vec::new();
        let mut to_cloud = Vec::new();
        for d in deliveries {
            if self.telemetry_records {
                sink.record(TraceRecord::Delivery(DeliveryRecord {
                    tick: t,
                    msg_id: d.envelope.msg_id,
                    topic: d.envelope.topic.clone(),
                    hop: d.hop,
                    qos: d.envelope.qos,
                    dup: d.envelope.dup,
                    published_tick: d.envelope.published_tick,
                }))?;
            }
            match d.hop {
                Hop::ToCloud => to_cloud.push(d.envelope),
                Hop::ToGateway => {
                    let states = &self.states;
                    let out = self.edges[d.gateway].process(d.envelope, |m, kind| match kind {
                        SafetyKind::FireSprinkler => states[m].sprinkler_on,
                        SafetyKind::OvertempCooling => states[m].cooling_on,
                    });
                    if let Some(a) = out.safety {
                        safety.push(a);
                    }
                    if let Some((env, qos)) = out.forward {
                        if self.capture && out.decision == Some(FilterDecision::Alert) {
                            if let Payload::Reading(r) = &env.payload {
                                self.captured.push(LiveEvent::Alert {
                                    topic: env.topic.clone(),
                                    reading: r.clone(),
                                });
                            }
                        }
                        self.network.forward(d.gateway, env, qos, t, &mut self.links);
                    }
                }
            }
        }
        let period = self.batch.config().period_ticks;
        for edge in &mut self.edges {
            edge.end_tick(t);
            if (t + 1) % period == 0 {
                let gw = self.network.topology().gateway_id(edge.gateway()).clone();
                self.batch.flush_batch(&gw, edge.summaries_mut(), t, &mut self.links.uplink);
            }
        }

        // Phase 6.
        for env in &to_cloud {
            if let Some(a) = self.cloud.ingest(env) {
                let machine = match &env.payload {
                    Payload::Reading(r) => r.machine_id.clone(),
                    Payload::Event { machine_id, .. } => machine_id.clone(),
                };
                if self.capture {
                    let m = self.cloud.machine_index(&machine).expect("known machine");
                    self.captured.push(LiveEvent::Anomaly {
                        topic: self.anomaly_topics[m].clone(),
                        machine: machine.clone(),
                        event: a.clone(),
                    });
                }
                sink.record(TraceRecord::Anomaly(AnomalyRecord {
                    tick: t,
                    machine,
                    sensor: a.sensor_id,
                    observed: a.observed,
                    rolling_mean: a.rolling_mean,
                    rolling_std: a.rolling_std,
                    score: a.score,
                }))?;
            }
        }
        for b in &stored {
            self.cloud.ingest_batch(b);
        }
        let cloud_cmds = self.cloud.tick(t, &self.workload);

        // Phase 7.
        for a in safety {
            let state = &mut self.states[a.machine_index];
            let (slot, kind) = match a.command {
                ActuatorCommand::Sprinkler { on } => (&mut state.sprinkler_on, (SafetyKind::FireSprinkler, on)),
                ActuatorCommand::Cooling { on } => (&mut state.cooling_on, (SafetyKind::OvertempCooling, on)),
                _ => continue,
            };
            if *slot == kind.1 {
                continue;
            }
            *slot = kind.1;
            self.safety_log.push(SafetyActivation {
                machine: a.machine_index,
                kind: kind.0,
                on: kind.1,
                reading_tick: a.reading_tick,
                applied_tick: t,
            });
            let reason = match kind.0 {
                SafetyKind::FireSprinkler => "fire",
                SafetyKind::OvertempCooling => "overtemperature",
            };
            self.command_record(sink, CommandSource::Edge, Some(a.machine_index), describe(&a.command), reason)?;
        }
        for c in cloud_cmds {
            match c {
                CloudCommand::Actuate {
                    machine,
                    command,
                    reason,
                } => {
                    self.command_record(sink, CommandSource::Cloud, Some(machine), describe(&command), reason)?;
                    self.next_cmds[machine].push(command);
                }
                CloudCommand::Slowdown { machine, active } => {
                    let text = format!("slowdown:{}", if active { "on" } else { "off" });
                    self.command_record(sink, CommandSource::Cloud, Some(machine), text, "excursion")?;
                    self.next_slowdowns.push((machine, active));
                }
            }
        }

        // Phase 8.
        for (m, out) in ticks_out.iter().enumerate() {
            let s = &self.states[m];
            sink.record(TraceRecord::MachineState(MachineStateRecord {
                tick: t,
                machine: self.ids[m].clone(),
                mode: s.mode,
                power_mw: s.power_mw,
                temperature_c: s.temperature_c,
                pressure_kpa: s.pressure_kpa,
                wear: s.wear,
                fire: s.fire.intensity,
                demand_per_hour: self.last_demand[m] * 3.6e6 / tick_ms as f64,
                produced: out.produced,
                defective: out.defective,
                scrapped: out.scrapped,
                cooling: s.cooling_on,
                sprinkler: s.sprinkler_on,
            }))?;
        }
        self.acc.ticks += 1;
        self.clock.advance();
        if self.finished() {
            sink.record(TraceRecord::KpiAccumulator(self.acc.to_record(t)))?;
        }
        Ok(())
    }

    fn apply_external(
        &mut self,
        ext: ExternalCommand,
        cmds: &mut [Vec<ActuatorCommand>],
        ignite: &mut [bool],
        sink: &mut dyn TraceSink,
    ) -> Result<()> {
        match ext.body {
            CommandBody::PolicyChange(patch) => {
                if self.mode == RunMode::Baseline {
                    return self.command_record(sink, CommandSource::External, None, "policy-change".into(), "ignored-in-baseline");
                }
                match patch.apply(&self.policies) {
                    Ok(p) => {
                        self.policies = p.clone();
                        self.cloud.set_policies(p);
                        let text = format!("policy-change:{}", serde_json::to_string(&patch)?);
                        self.command_record(sink, CommandSource::External, None, text, "operator")
                    }
                    Err(e) => self.command_record(sink, CommandSource::External, None, "policy-change".into(), &format!("rejected: {e}")),
                }
            }
            CommandBody::FaultInjection {
                machine_id,
                kind,
                repair_ticks,
            } => {
                let Some(m) = self.ids.iter().position(|id| *id == machine_id) else {
                    return Ok(());
                };
                if kind == FaultKind::Fire {
                    ignite[m] = true;
                    return self.command_record(sink, CommandSource::External, Some(m), "ignite".into(), "operator");
                }
                let params = &self.scenario.machines[m].params;
                let c = ActuatorCommand::InjectFault {
                    kind,
                    repair_ticks: repair_ticks.unwrap_or(params.repair_ticks).max(1),
                };
                cmds[m].push(c);
                self.command_record(sink, CommandSource::External, Some(m), describe(&c), "operator")
            }
            CommandBody::ActuatorOverride {
                machine_id,
                actuator,
                on,
            } => {
                let Some(m) = self.ids.iter().position(|id| *id == machine_id) else {
                    return Ok(());
                };
                let c = match (actuator, on) {
                    (Actuator::Cooling, on) => ActuatorCommand::Cooling { on },
                    (Actuator::Sprinkler, on) => ActuatorCommand::Sprinkler { on },
                    (Actuator::Power, true) => ActuatorCommand::Wake,
                    (Actuator::Power, false) => ActuatorCommand::Shutdown,
                };
                cmds[m].push(c);
                self.command_record(sink, CommandSource::External, Some(m), describe(&c), "operator")
            }
            CommandBody::SimControl { action, .. } => {
                let text = format!("sim:{}", serde_json::to_value(action)?.as_str().unwrap_or(""));
                self.command_record(sink, CommandSource::External, None, text, "operator")
            }
        }
    }

    /// Runs to the end of the scenario.
    pub fn run(&mut self, sink: &mut dyn TraceSink) -> Result<()> {
        while !self.finished() {
            self.step(sink)?;
        }
        Ok(())
    }
}

/// Whether `mode` is one the machine spends as downtime. Convenience for
/// consumers that only see trace records.
pub fn is_downtime(mode: Mode) -> bool {
    mode.is_down()
}
