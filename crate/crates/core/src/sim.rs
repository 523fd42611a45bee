//! Simulation clock and the serialized external-command queue.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::analytics::PolicyPatch;
use crate::plant::FaultKind;
use crate::Id;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimClock {
    /// Number of completed ticks; the next `step` executes this tick index.
    pub tick: u64,
    pub tick_duration_ms: u64,
}

impl SimClock {
    pub fn new(tick_duration_ms: u64) -> Self {
        SimClock {
            tick: 0,
            tick_duration_ms,
        }
    }

    pub fn advance(&mut self) {
        self.tick += 1;
    }

    pub fn tick_seconds(&self) -> f64 {
        self.tick_duration_ms as f64 / 1000.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Actuator {
    Cooling,
    Sprinkler,
    /// Machine power: `on` wakes an OFF machine, `off` shuts down an idle one.
    Power,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimControl {
    Pause,
    Resume,
    Speed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum CommandBody {
    PolicyChange(PolicyPatch),
    FaultInjection {
        machine_id: Id,
        kind: FaultKind,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        repair_ticks: Option<u64>,
    },
    ActuatorOverride {
        machine_id: Id,
        actuator: Actuator,
        on: bool,
    },
    SimControl {
        action: SimControl,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        speed: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalCommand {
    /// Wall-clock receipt time in milliseconds since the Unix epoch; zero for
    /// commands that never passed through a live session.
    #[serde(default)]
    pub issued_at_ms: u64,
    pub apply_at_tick: u64,
    pub body: CommandBody,
}

/// FIFO of external commands, released only at tick boundaries.
#[derive(Debug, Default, Clone)]
pub struct CommandQueue {
    pending: VecDeque<ExternalCommand>,
}

impl CommandQueue {
    pub fn new() -> Self {
        Self::default()
    }

    /// Enqueues `cmd`, never earlier than `next_tick` (the tick about to execute).
    /// Returns the tick at which the command will apply.
    pub fn push(&mut self, mut cmd: ExternalCommand, next_tick: u64) -> u64 {
        cmd.apply_at_tick = cmd.apply_at_tick.max(next_tick);
        let at = cmd.apply_at_tick;
        self.pending.push_back(cmd);
        at
    }

    /// Removes every command due at or before `tick`, preserving receipt order.
    pub fn drain_due(&mut self, tick: u64) -> Vec<ExternalCommand> {
        let mut due = Vec::new();
        let mut keep = VecDeque::with_capacity(self.pending.len());
        for cmd in self.pending.drain(..) {
            if cmd.apply_at_tick <= tick {
                due.push(cmd);
            } else {
                keep.push_back(cmd);
            }
        }
        self.pending = keep;
        due
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cmd(at: u64, machine: &str) -> ExternalCommand {
        ExternalCommand {
            issued_at_ms: 0,
            apply_at_tick: at,
            body: CommandBody::FaultInjection {
                machine_id: machine.into(),
                kind: FaultKind::Breakdown,
                repair_ticks: None,
            },
        }
    }

    #[test]
    fn fifo_within_tick_and_deferred_future() {
        let mut q = CommandQueue::new();
        q.push(cmd(5, "a"), 0);
        q.push(cmd(2, "b"), 0);
        q.push(cmd(2, "c"), 0);
        let due = q.drain_due(2);
        let ids: Vec<_> = due
            .iter()
            .map(|c| match &c.body {
                CommandBody::FaultInjection { machine_id, .. } => machine_id.to_string(),
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(ids, ["b", "c"]);
        assert_eq!(q.len(), 1);
    }

    #[test]
    fn commands_never_apply_in_the_past() {
        let mut q = CommandQueue::new();
        assert_eq!(q.push(cmd(0, "a"), 7), 7);
        assert!(q.drain_due(6).is_empty());
        assert_eq!(q.drain_due(7).len(), 1);
    }

    #[test]
    fn command_wire_format() {
        let c = cmd(3, "m1");
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(
            json,
            r#"{"issued_at_ms":0,"apply_at_tick":3,"body":{"type":"fault-injection","machine_id":"m1","kind":"BREAKDOWN"}}"#
        );
        let back: ExternalCommand = serde_json::from_str(&json).unwrap();
        assert_eq!(back, c);
    }
}
