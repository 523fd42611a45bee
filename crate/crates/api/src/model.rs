//! Request and response payloads.

use axum::body::Bytes;
use serde::{Deserialize, Serialize};
use smartfab_core::analytics::{AnomalyEvent, PolicySet};
use smartfab_core::plant::{FaultKind, MachineEvent, Mode, SensorReading};
use smartfab_core::scenario::kpi::Reductions;
use smartfab_core::scenario::trace::CommandRecord;
use smartfab_core::scenario::RunTotals;
use smartfab_core::sim::{Actuator, SimControl};
use smartfab_core::Id;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MachineSnapshot {
    pub id: Id,
    pub essential: bool,
    pub gateway: String,
    pub mode: Mode,
    pub power_w: f64,
    pub temperature_c: f64,
    pub pressure_kpa: f64,
    pub wear: f64,
    pub fire: f64,
    pub cooling: bool,
    pub sprinkler: bool,
    pub demand_per_hour: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActiveAlert {
    pub machine_id: Id,
    /// One of `fault`, `maintenance`, `fire`, `sprinkler`, `overtemperature`.
    pub kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

/// Running totals of the live run against its shadow baseline.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LiveKpis {
    /// Ticks both runs have completed.
    pub ticks_completed: u64,
    pub baseline: RunTotals,
    pub optimized: RunTotals,
    pub reductions: Reductions,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateSnapshot {
    /// Ticks completed; the next tick to execute.
    pub tick: u64,
    pub ticks: u64,
    pub finished: bool,
    pub paused: bool,
    pub speed: f64,
    pub seed: u64,
    pub config_hash: String,
    pub machines: Vec<MachineSnapshot>,
    pub alerts: Vec<ActiveAlert>,
    pub policies: PolicySet,
    pub kpis: LiveKpis,
    /// Sequence number of the newest stream event.
    pub stream_seq: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AckStatus {
    Accepted,
    AlreadyApplied,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ack {
    pub command_id: u64,
    pub status: AckStatus,
    pub kind: &'static str,
    pub apply_at_tick: u64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultRequest {
    pub machine_id: Id,
    pub kind: FaultKind,
    #[serde(default)]
    pub repair_ticks: Option<u64>,
    #[serde(default)]
    pub apply_at_tick: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActuatorRequest {
    pub actuator: Actuator,
    pub on: bool,
    #[serde(default)]
    pub apply_at_tick: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimRequest {
    pub action: SimControl,
    #[serde(default)]
    pub speed: Option<f64>,
}

/// One line of `/api/v1/stream`. The payload sits under `data`, tagged by
/// `type`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StreamEvent {
    pub seq: u64,
    /// Tick during which the event was published.
    pub tick: u64,
    pub topic: Id,
    #[serde(flatten)]
    pub body: EventBody,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", content = "data", rename_all = "kebab-case")]
pub enum EventBody {
    Reading(SensorReading),
    Alert(SensorReading),
    MachineEvent {
        machine_id: Id,
        #[serde(flatten)]
        event: MachineEvent,
    },
    Anomaly {
        machine_id: Id,
        #[serde(flatten)]
        anomaly: AnomalyEvent,
    },
    Command(CommandRecord),
    Kpi(LiveKpis),
}

/// A stream event serialized once and shared by every subscriber.
#[derive(Debug, Clone)]
pub struct EncodedEvent {
    pub seq: u64,
    pub topic: Id,
    pub line: Bytes,
}

impl EncodedEvent {
    pub fn encode(event: &StreamEvent) -> Self {
        let mut line = serde_json::to_string(event).expect("stream events serialize");
        line.push('\n');
        EncodedEvent {
            seq: event.seq,
            topic: event.topic.clone(),
            line: Bytes::from(line),
        }
    }
}

/// Control lines that are not part of the sequenced event log.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ControlLine {
    Heartbeat { seq: u64, tick: u64 },
    /// Events `from_seq..=to_seq` fell out of the retention window.
    Gap { from_seq: u64, to_seq: u64 },
}

impl ControlLine {
    pub fn encode(&self) -> String {
        let mut s = serde_json::to_string(self).expect("control lines serialize");
        s.push('\n');
        s
    }
}
