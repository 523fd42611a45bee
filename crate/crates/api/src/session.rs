//! The simulation thread: a live optimized world and its shadow baseline
//! advancing in lockstep, paced against wall time.

use std::collections::VecDeque;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::{Arc, Mutex, RwLock};
use std::thread::JoinHandle;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use axum::http::StatusCode;
use smartfab_core::plant::{Mode, SensorKind};
use smartfab_core::scenario::{JsonlWriter, NullSink, Reductions, RunMode, Scenario};
use smartfab_core::sim::{CommandBody, ExternalCommand, SimControl};
use smartfab_core::world::{LiveEvent, World};
use smartfab_core::{Error, Id};
use tokio::sync::{broadcast, oneshot};

use crate::error::ApiError;
use crate::model::{
    Ack, AckStatus, ActiveAlert, EncodedEvent, EventBody, LiveKpis, MachineSnapshot, StateSnapshot, StreamEvent,
};

/// Steps taken before the inbox is polled again when running behind.
const MAX_CATCH_UP: u32 = 256;

#[derive(Debug, Clone)]
pub struct ServeOptions {
    /// Simulated ticks per wall-clock second.
    pub speed: f64,
    pub heartbeat: Duration,
    /// Stream events kept for reconnecting clients.
    pub retention: usize,
    pub kpi_interval_ticks: u64,
    /// Write the live run's trace here.
    pub trace_path: Option<PathBuf>,
    /// Append every accepted command here, one JSON object per line.
    pub command_log: Option<PathBuf>,
    pub start_paused: bool,
}

impl Default for ServeOptions {
    fn default() -> Self {
        ServeOptions {
            speed: 10.0,
            heartbeat: Duration::from_secs(5),
            retention: 100_000,
            kpi_interval_ticks: 10,
            trace_path: None,
            command_log: None,
            start_paused: false,
        }
    }
}

pub(crate) enum Inbox {
    Command {
        body: CommandBody,
        apply_at_tick: Option<u64>,
        reply: oneshot::Sender<Result<Ack, ApiError>>,
    },
    Shutdown,
}

/// State read by request handlers. Written only by the simulation thread.
pub struct Shared {
    snapshot: RwLock<Arc<StateSnapshot>>,
    ring: Mutex<VecDeque<EncodedEvent>>,
    latest_seq: AtomicU64,
    pub(crate) events: broadcast::Sender<EncodedEvent>,
    pub(crate) heartbeat: Duration,
    pub(crate) machine_ids: Vec<Id>,
}

impl Shared {
    pub fn snapshot(&self) -> Arc<StateSnapshot> {
        self.snapshot.read().expect("snapshot lock").clone()
    }

    pub fn latest_seq(&self) -> u64 {
        self.latest_seq.load(Ordering::Acquire)
    }

    /// Retained events with `seq > after`, plus the first missing sequence
    /// number when the window no longer reaches back that far.
    pub(crate) fn retained_after(&self, after: u64) -> (Option<u64>, Vec<EncodedEvent>) {
        let ring = self.ring.lock().expect("ring lock");
        let gap = match ring.front() {
            Some(first) if first.seq > after + 1 => Some(first.seq - 1),
            _ => None,
        };
        let start = ring.partition_point(|e| e.seq <= after);
        (gap, ring.range(start..).cloned().collect())
    }
}

pub struct Session {
    shared: Arc<Shared>,
    inbox: mpsc::Sender<Inbox>,
    thread: Option<JoinHandle<Result<(), Error>>>,
}

impl Session {
    pub fn start(scenario: Arc<Scenario>, options: ServeOptions) -> Result<Session, Error> {
        if !(options.speed.is_finite() && options.speed > 0.0) {
            return Err(Error::Validation(vec![smartfab_core::ValidationIssue {
                path: "speed".into(),
                message: "must be positive".into(),
            }]));
        }
        let mut live = World::new(scenario.clone(), RunMode::Optimized)?;
        live.set_capture(true);
        let shadow = World::new(scenario.clone(), RunMode::Baseline)?;
        let trace = options.trace_path.as_ref().map(JsonlWriter::create).transpose()?;
        let log = options
            .command_log
            .as_ref()
            .map(|p| File::create(p).map(BufWriter::new).map_err(|e| Error::io(p, e)))
            .transpose()?;
        let (events, _) = broadcast::channel(4096);
        let names: Vec<String> = scenario.machines.iter().map(|m| m.id.clone()).collect();
        let config_hash = scenario.config_hash();
        let view = View {
            scenario: &scenario,
            config_hash: &config_hash,
            names: &names,
            live: &live,
            shadow: &shadow,
            paused: options.start_paused,
            speed: options.speed,
            seq: 0,
        };
        let shared = Arc::new(Shared {
            snapshot: RwLock::new(Arc::new(view.snapshot())),
            ring: Mutex::new(VecDeque::new()),
            latest_seq: AtomicU64::new(0),
            events,
            heartbeat: options.heartbeat,
            machine_ids: live.machine_ids().to_vec(),
        });
        let runner = Runner {
            scenario,
            config_hash,
            names,
            live,
            shadow,
            trace,
            log,
            paused: options.start_paused,
            speed: options.speed,
            next_due: Instant::now(),
            seq: 0,
            command_id: 0,
            retention: options.retention.max(1),
            kpi_interval: options.kpi_interval_ticks.max(1),
            shared: shared.clone(),
        };
        let (tx, rx) = mpsc::channel();
        let thread = std::thread::Builder::new()
            .name("smartfab-sim".into())
            .spawn(move || runner.run(rx))
            .map_err(|e| Error::io("smartfab-sim thread", e))?;
        Ok(Session {
            shared,
            inbox: tx,
            thread: Some(thread),
        })
    }

    pub fn shared(&self) -> &Arc<Shared> {
        &self.shared
    }

    pub(crate) fn sender(&self) -> mpsc::Sender<Inbox> {
        self.inbox.clone()
    }

    /// Stops the simulation thread and flushes the trace and command log.
    pub fn shutdown(mut self) -> Result<(), Error> {
        self.stop()
    }

    fn stop(&mut self) -> Result<(), Error> {
        let _ = self.inbox.send(Inbox::Shutdown);
        match self.thread.take() {
            Some(t) => t.join().unwrap_or_else(|_| Err(Error::Trace("simulation thread panicked".into()))),
            None => Ok(()),
        }
    }
}

impl Drop for Session {
    fn drop(&mut self) {
        let _ = self.stop();
    }
}

struct Runner {
    scenario: Arc<Scenario>,
    config_hash: String,
    names: Vec<String>,
    live: World,
    shadow: World,
    trace: Option<JsonlWriter<File>>,
    log: Option<BufWriter<File>>,
    paused: bool,
    speed: f64,
    next_due: Instant,
    seq: u64,
    command_id: u64,
    retention: usize,
    kpi_interval: u64,
    shared: Arc<Shared>,
}

impl Runner {
    fn run(mut self, inbox: mpsc::Receiver<Inbox>) -> Result<(), Error> {
        self.next_due = Instant::now() + self.period();
        loop {
            let idle = self.paused || self.live.finished();
            let wait = if idle {
                Duration::from_millis(250)
            } else {
                self.next_due.saturating_duration_since(Instant::now())
            };
            match inbox.recv_timeout(wait) {
                Ok(Inbox::Shutdown) | Err(RecvTimeoutError::Disconnected) => break,
                Ok(Inbox::Command {
                    body,
                    apply_at_tick,
                    reply,
                }) => {
                    let _ = reply.send(self.command(body, apply_at_tick));
                    continue;
                }
                Err(RecvTimeoutError::Timeout) => {}
            }
            if self.paused || self.live.finished() {
                continue;
            }
            let mut steps = 0;
            while Instant::now() >= self.next_due && !self.live.finished() && steps < MAX_CATCH_UP {
                self.step()?;
                self.next_due += self.period();
                steps += 1;
            }
            // Never try to make up more than a second of lost wall time.
            let now = Instant::now();
            if now > self.next_due + Duration::from_secs(1) {
                self.next_due = now;
            }
        }
        self.finish_trace()
    }

    fn period(&self) -> Duration {
        Duration::from_secs_f64(1.0 / self.speed)
    }

    fn finish_trace(&mut self) -> Result<(), Error> {
        if let Some(w) = self.trace.take() {
            w.finish()?;
        }
        if let Some(log) = &mut self.log {
            log.flush().map_err(|e| Error::io("command log", e))?;
        }
        Ok(())
    }

    fn command(&mut self, body: CommandBody, apply_at_tick: Option<u64>) -> Result<Ack, ApiError> {
        if self.live.finished() {
            return Err(ApiError::new(StatusCode::CONFLICT, "finished", "the simulation has finished"));
        }
        let kind = match &body {
            CommandBody::PolicyChange(_) => "policy-change",
            CommandBody::FaultInjection { .. } => "fault-injection",
            CommandBody::ActuatorOverride { .. } => "actuator-override",
            CommandBody::SimControl { .. } => "sim-control",
        };
        let mut cmd = ExternalCommand {
            issued_at_ms: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_millis() as u64),
            apply_at_tick: apply_at_tick.unwrap_or(0),
            body,
        };
        cmd.apply_at_tick = self.live.submit(cmd.clone())?;
        self.shadow.submit(cmd.clone())?;
        if let CommandBody::SimControl { action, speed } = &cmd.body {
            match action {
                SimControl::Pause => self.paused = true,
                SimControl::Resume => {
                    self.paused = false;
                    self.next_due = Instant::now() + self.period();
                }
                SimControl::Speed => {
                    if let Some(s) = speed {
                        self.speed = *s;
                        self.next_due = Instant::now() + self.period();
                    }
                }
            }
            self.publish_snapshot();
        }
        if let Some(log) = &mut self.log {
            let line = serde_json::to_string(&cmd).map_err(Error::from)?;
            writeln!(log, "{line}")
                .and_then(|_| log.flush())
                .map_err(|e| Error::io("command log", e))?;
        }
        self.command_id += 1;
        Ok(Ack {
            command_id: self.command_id,
            status: AckStatus::Accepted,
            kind,
            apply_at_tick: cmd.apply_at_tick,
        })
    }

    fn step(&mut self) -> Result<(), Error> {
        match &mut self.trace {
            Some(w) => self.live.step(w)?,
            None => self.live.step(&mut NullSink)?,
        }
        self.shadow.step(&mut NullSink)?;
        let tick = self.live.tick() - 1;
        for e in self.live.take_events() {
            let (topic, body) = match e {
                LiveEvent::Reading { topic, reading } => (topic, EventBody::Reading(reading)),
                LiveEvent::Alert { topic, reading } => (topic, EventBody::Alert(reading)),
                LiveEvent::Machine { topic, machine, event, .. } => (
                    topic,
                    EventBody::MachineEvent {
                        machine_id: machine,
                        event,
                    },
                ),
                LiveEvent::Anomaly { topic, machine, event } => (
                    topic,
                    EventBody::Anomaly {
                        machine_id: machine,
                        anomaly: event,
                    },
                ),
                LiveEvent::Command { topic, record } => (topic, EventBody::Command(record)),
            };
            self.publish(topic, tick, body);
        }
        if (tick + 1) % self.kpi_interval == 0 || self.live.finished() {
            let kpis = self.kpis();
            self.publish(Id::from("plant/kpi"), tick, EventBody::Kpi(kpis));
        }
        if self.live.finished() {
            self.finish_trace()?;
        }
        self.publish_snapshot();
        Ok(())
    }

    fn publish(&mut self, topic: Id, tick: u64, body: EventBody) {
        self.seq += 1;
        let event = EncodedEvent::encode(&StreamEvent {
            seq: self.seq,
            tick,
            topic,
            body,
        });
        {
            let mut ring = self.shared.ring.lock().expect("ring lock");
            if ring.len() == self.retention {
                ring.pop_front();
            }
            ring.push_back(event.clone());
        }
        self.shared.latest_seq.store(self.seq, Ordering::Release);
        let _ = self.shared.events.send(event);
    }

    fn publish_snapshot(&self) {
        let snap = Arc::new(self.view().snapshot());
        *self.shared.snapshot.write().expect("snapshot lock") = snap;
    }

    fn view(&self) -> View<'_> {
        View {
            scenario: &self.scenario,
            config_hash: &self.config_hash,
            names: &self.names,
            live: &self.live,
            shadow: &self.shadow,
            paused: self.paused,
            speed: self.speed,
            seq: self.seq,
        }
    }

    fn kpis(&self) -> LiveKpis {
        self.view().kpis()
    }
}

/// Borrowed inputs for building a snapshot.
struct View<'a> {
    scenario: &'a Scenario,
    config_hash: &'a str,
    names: &'a [String],
    live: &'a World,
    shadow: &'a World,
    paused: bool,
    speed: f64,
    seq: u64,
}

impl View<'_> {
    fn kpis(&self) -> LiveKpis {
        let baseline = self.shadow.accumulator().totals(self.names);
        let optimized = self.live.accumulator().totals(self.names);
        LiveKpis {
            ticks_completed: self.live.tick(),
            reductions: Reductions::between(&baseline, &optimized),
            baseline,
            optimized,
        }
    }

    fn snapshot(&self) -> StateSnapshot {
        let sc = self.scenario;
        let tick_ms = sc.run.tick_duration_ms as f64;
        let temp_alert = sc.edge.alerts.get(SensorKind::Temperature).high;
        let mut alerts = Vec::new();
        let machines = self
            .live
            .machines()
            .iter()
            .zip(&sc.machines)
            .zip(self.live.last_demand())
            .map(|((s, cfg), demand)| {
                let id = s.machine_id.clone();
                let alert = |kind, detail: Option<String>| ActiveAlert {
                    machine_id: id.clone(),
                    kind,
                    detail,
                };
                match s.mode {
                    Mode::Faulted => alerts.push(alert(
                        "fault",
                        s.active_fault.as_ref().map(|f| format!("{:?}", f.kind).to_uppercase()),
                    )),
                    Mode::Maintenance => alerts.push(alert("maintenance", None)),
                    _ => {}
                }
                if s.fire.intensity >= sc.edge.sprinkler.threshold {
                    alerts.push(alert("fire", None));
                }
                if s.sprinkler_on {
                    alerts.push(alert("sprinkler", None));
                }
                if temp_alert.is_some_and(|t| s.temperature_c >= t) {
                    alerts.push(alert("overtemperature", None));
                }
                MachineSnapshot {
                    id: id.clone(),
                    essential: cfg.essential,
                    gateway: cfg.gateway.clone(),
                    mode: s.mode,
                    power_w: s.power_w(),
                    temperature_c: s.temperature_c,
                    pressure_kpa: s.pressure_kpa,
                    wear: s.wear,
                    fire: s.fire.intensity,
                    cooling: s.cooling_on,
                    sprinkler: s.sprinkler_on,
                    demand_per_hour: demand * 3.6e6 / tick_ms,
                }
            })
            .collect();
        StateSnapshot {
            tick: self.live.tick(),
            ticks: sc.run.ticks,
            finished: self.live.finished(),
            paused: self.paused,
            speed: self.speed,
            seed: sc.run.seed,
            config_hash: self.config_hash.to_owned(),
            machines,
            alerts,
            policies: self.live.policies().clone(),
            kpis: self.kpis(),
            stream_seq: self.seq,
        }
    }
}
