use std::collections::HashMap;

use serde::Serialize;

use super::{
    aggregate_window, correct_calibration, local_safety, prefilter, EdgeConfig, FilterDecision,
    SafetyKind, WindowSummary,
};
use crate::plant::{ActuatorCommand, SensorKind, SensorSpec};
use crate::transport::{alert_topic, Envelope, Payload, Qos};
use crate::Id;

/// A sensor attached to this gateway, with the index of the machine it
/// observes in the world's machine list.
#[derive(Debug, Clone)]
pub struct SensorBinding {
    pub spec: SensorSpec,
    pub machine_index: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct EdgeStats {
    pub received: u64,
    pub stale: u64,
    pub forwarded: u64,
    pub suppressed: u64,
    pub alerts: u64,
    pub events_relayed: u64,
    pub late_for_window: u64,
    pub safety_commands: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SafetyAction {
    pub machine_index: usize,
    pub command: ActuatorCommand,
    /// Tick of the reading that triggered the action.
    pub reading_tick: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EdgeOutcome {
    /// `None` for stale readings and relayed machine events.
    pub decision: Option<FilterDecision>,
    pub forward: Option<(Envelope, Qos)>,
    pub safety: Option<SafetyAction>,
}

#[derive(Debug)]
struct Stream {
    binding: SensorBinding,
    last_seq: Option<u64>,
    last_forwarded: Option<f64>,
    window_start: u64,
    window: Vec<(u64, f64)>,
    /// Windows before this start have been closed.
    closed_before: u64,
}

#[derive(Debug)]
pub struct EdgeNode {
    gateway: usize,
    config: EdgeConfig,
    grace_ticks: u64,
    streams: Vec<Stream>,
    by_sensor: HashMap<Id, usize>,
    summaries: Vec<WindowSummary>,
    stats: EdgeStats,
}

impl EdgeNode {
    /// `grace_ticks` is how long a window stays open past its end for
    /// readings still in flight on the device link.
    pub fn new(gateway: usize, config: EdgeConfig, bindings: Vec<SensorBinding>, grace_ticks: u64) -> Self {
        let by_sensor = bindings
            .iter()
            .enumerate()
            .map(|(i, b)| (b.spec.sensor_id.clone(), i))
            .collect();
        let streams = bindings
            .into_iter()
            .map(|binding| Stream {
                binding,
                last_seq: None,
                last_forwarded: None,
                window_start: 0,
                window: Vec::new(),
                closed_before: 0,
            })
            .collect();
        EdgeNode {
            gateway,
            config,
            grace_ticks,
            streams,
            by_sensor,
            summaries: Vec::new(),
            stats: EdgeStats::default(),
        }
    }

    pub fn gateway(&self) -> usize {
        self.gateway
    }

    pub fn config(&self) -> &EdgeConfig {
        &self.config
    }

    pub fn stats(&self) -> EdgeStats {
        self.stats
    }

    /// Closed summaries awaiting the next batch.
    pub fn summaries_mut(&mut self) -> &mut Vec<WindowSummary> {
        &mut self.summaries
    }

    /// Handles one envelope delivered to this gateway. `actuator_on` reports
    /// the current state of a machine's safety actuator.
    pub fn process(
        &mut self,
        mut envelope: Envelope,
        actuator_on: impl Fn(usize, SafetyKind) -> bool,
    ) -> EdgeOutcome {
        let reading = match &mut envelope.payload {
            Payload::Event { .. } => {
                self.stats.events_relayed += 1;
                return EdgeOutcome {
                    decision: None,
                    forward: Some((envelope, Qos::AtLeastOnce)),
                    safety: None,
                };
            }
            Payload::Reading(r) => r,
        };
        self.stats.received += 1;
        let Some(&idx) = self.by_sensor.get(&reading.sensor_id) else {
            // Unknown sensors are not ours to interpret; drop them.
            self.stats.stale += 1;
            return EdgeOutcome::default();
        };
        let stream = &mut self.streams[idx];
        if stream.last_seq.is_some_and(|s| reading.seq_no <= s) {
            self.stats.stale += 1;
            return EdgeOutcome::default();
        }
        stream.last_seq = Some(reading.seq_no);

        let kind = stream.binding.spec.kind;
        let value = correct_calibration(reading.value, &stream.binding.spec.calibration);
        reading.value = value;
        let tick = reading.tick;

        let window_ticks = self.config.window_ticks;
        let start = tick - tick % window_ticks;
        if start < stream.closed_before {
            self.stats.late_for_window += 1;
        } else {
            if start != stream.window_start && !stream.window.is_empty() {
                close(stream, window_ticks, &mut self.summaries);
            }
            if stream.window.is_empty() {
                stream.window_start = start;
            }
            stream.window.push((tick, value));
        }

        let safety = self.config.rule_for(kind).and_then(|rule| {
            let machine = stream.binding.machine_index;
            local_safety(value, rule, actuator_on(machine, rule.kind)).map(|on| SafetyAction {
                machine_index: machine,
                command: match rule.kind {
                    SafetyKind::FireSprinkler => ActuatorCommand::Sprinkler { on },
                    SafetyKind::OvertempCooling => ActuatorCommand::Cooling { on },
                },
                reading_tick: tick,
            })
        });
        if safety.is_some() {
            self.stats.safety_commands += 1;
        }

        let decision = prefilter(
            value,
            stream.last_forwarded,
            *self.config.deadband.get(kind),
            self.config.alerts.get(kind),
        );
        let forward = match decision {
            FilterDecision::Suppress => {
                self.stats.suppressed += 1;
                None
            }
            FilterDecision::Forward => {
                stream.last_forwarded = Some(value);
                self.stats.forwarded += 1;
                Some((envelope, Qos::AtMostOnce))
            }
            FilterDecision::Alert => {
                stream.last_forwarded = Some(value);
                self.stats.alerts += 1;
                envelope.topic = alert_topic(kind.topic_level()).into();
                Some((envelope, Qos::AtLeastOnce))
            }
        };
        EdgeOutcome {
            decision: Some(decision),
            forward,
            safety,
        }
    }

    /// Closes every window whose end plus the grace period has passed.
    pub fn end_tick(&mut self, now: u64) {
        let window_ticks = self.config.window_ticks;
        for stream in &mut self.streams {
            let end = stream.window_start + window_ticks;
            if !stream.window.is_empty() && end + self.grace_ticks <= now {
                close(stream, window_ticks, &mut self.summaries);
            }
        }
    }

    /// Kinds observed by this gateway, for diagnostics.
    pub fn kinds(&self) -> impl Iterator<Item = SensorKind> + '_ {
        self.streams.iter().map(|s| s.binding.spec.kind)
    }
}

fn close(stream: &mut Stream, window_ticks: u64, out: &mut Vec<WindowSummary>) {
    let spec = &stream.binding.spec;
    if let Some(s) = aggregate_window(
        &spec.sensor_id,
        &spec.machine_id,
        spec.kind,
        stream.window_start,
        window_ticks,
        &stream.window,
    ) {
        out.push(s);
    }
    stream.window.clear();
    stream.closed_before = stream.window_start + window_ticks;
}
