//! Cloud analytics: anomaly detection, predictive maintenance, idle shutdown
//! and schedule adjustment. Works from delivered telemetry only.

mod anomaly;
mod cloud;
mod energy;
mod maintenance;
mod resource;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, ValidationIssue};

pub use anomaly::{detect_anomaly, AnomalyDetector, AnomalyEvent};
pub use cloud::{CloudAnalytics, CloudCommand, CloudMachine, CloudStats, MachineView, ViewState};
pub use energy::{energy_policy, EnergyDecision, EnergySnapshot};
pub use maintenance::{least_squares_slope, plan_maintenance, MaintenancePlan, MaintenanceReason};
pub use resource::{DemandScheduler, ScheduledDemand};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdleShutdownPolicy {
    pub enabled: bool,
    pub idle_threshold_ticks: u64,
    /// Lead time for WAKE ahead of forecast demand.
    pub wake_delay_ticks: u64,
    pub essential_machines: BTreeSet<String>,
}

impl Default for IdleShutdownPolicy {
    fn default() -> Self {
        IdleShutdownPolicy {
            enabled: true,
            idle_threshold_ticks: 300,
            wake_delay_ticks: 60,
            essential_machines: BTreeSet::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictiveMaintenancePolicy {
    pub enabled: bool,
    pub wear_alarm: f64,
    pub forecast_horizon: u64,
    /// Ticks between wear samples fed to the trend fit.
    pub sample_interval: u64,
    /// Number of recent samples in the trend fit.
    pub history_len: usize,
    /// Anomalies on one machine within `escalation_window` that force an
    /// immediate plan. Zero disables escalation.
    pub escalation_anomalies: u32,
    pub escalation_window: u64,
}

impl Default for PredictiveMaintenancePolicy {
    fn default() -> Self {
        PredictiveMaintenancePolicy {
            enabled: true,
            wear_alarm: 0.5,
            forecast_horizon: 3600,
            sample_interval: 60,
            history_len: 30,
            escalation_anomalies: 0,
            escalation_window: 600,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnomalyPolicy {
    pub enabled: bool,
    pub window: usize,
    pub k: f64,
}

impl Default for AnomalyPolicy {
    fn default() -> Self {
        AnomalyPolicy {
            enabled: true,
            window: 300,
            k: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResourcePolicy {
    pub enabled: bool,
    pub excursion_slowdown_factor: f64,
    /// An excursion stays open this long after its last trigger.
    pub hold_ticks: u64,
    /// Temperature margin below the band edge that already counts as an excursion.
    pub temperature_guard_c: f64,
    /// Deferred demand is drained up to this utilization.
    pub drain_utilization: f64,
}

impl Default for ResourcePolicy {
    fn default() -> Self {
        ResourcePolicy {
            enabled: true,
            excursion_slowdown_factor: 0.6,
            hold_ticks: 120,
            temperature_guard_c: 2.0,
            drain_utilization: 0.85,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicySet {
    pub idle_shutdown: IdleShutdownPolicy,
    pub predictive_maintenance: PredictiveMaintenancePolicy,
    pub anomaly: AnomalyPolicy,
    pub resource_opt: ResourcePolicy,
}

impl PolicySet {
    /// The same parameters with every policy switched off.
    pub fn disabled(&self) -> PolicySet {
        let mut p = self.clone();
        p.idle_shutdown.enabled = false;
        p.predictive_maintenance.enabled = false;
        p.anomaly.enabled = false;
        p.resource_opt.enabled = false;
        p
    }

    pub fn is_baseline(&self) -> bool {
        !(self.idle_shutdown.enabled
            || self.predictive_maintenance.enabled
            || self.anomaly.enabled
            || self.resource_opt.enabled)
    }

    pub fn validate(&self, path: &str) -> Vec<ValidationIssue> {
        let mut issues = Vec::new();
        let mut bad = |field: &str, message: String| {
            issues.push(ValidationIssue {
                path: format!("{path}.{field}"),
                message,
            })
        };
        if self.idle_shutdown.idle_threshold_ticks == 0 {
            bad("idle_shutdown.idle_threshold_ticks", "must be at least 1".into());
        }
        let pm = &self.predictive_maintenance;
        if !(pm.wear_alarm > 0.0 && pm.wear_alarm <= 1.0) {
            bad("predictive_maintenance.wear_alarm", format!("{} is outside (0, 1]", pm.wear_alarm));
        }
        if pm.sample_interval == 0 {
            bad("predictive_maintenance.sample_interval", "must be at least 1".into());
        }
        if pm.history_len < 2 {
            bad("predictive_maintenance.history_len", "must be at least 2".into());
        }
        if self.anomaly.window < 2 {
            bad("anomaly.window", format!("{} is below 2", self.anomaly.window));
        }
        if !(self.anomaly.k > 0.0 && self.anomaly.k.is_finite()) {
            bad("anomaly.k", format!("{} is not a positive number", self.anomaly.k));
        }
        let r = &self.resource_opt;
        if !(r.excursion_slowdown_factor > 0.0 && r.excursion_slowdown_factor <= 1.0) {
            bad(
                "resource_opt.excursion_slowdown_factor",
                format!("{} is outside (0, 1]", r.excursion_slowdown_factor),
            );
        }
        if !(r.drain_utilization > 0.0 && r.drain_utilization <= 1.0) {
            bad(
                "resource_opt.drain_utilization",
                format!("{} is outside (0, 1]", r.drain_utilization),
            );
        }
        if !(r.temperature_guard_c >= 0.0 && r.temperature_guard_c.is_finite()) {
            bad("resource_opt.temperature_guard_c", "must be a non-negative number".into());
        }
        issues
    }
}

/// Partial update to a [`PolicySet`], merged field by field.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PolicyPatch(pub Map<String, Value>);

impl PolicyPatch {
    pub fn apply(&self, current: &PolicySet) -> Result<PolicySet, Error> {
        let mut merged = serde_json::to_value(current)?;
        merge(&mut merged, &Value::Object(self.0.clone()));
        let next: PolicySet = serde_json::from_value(merged).map_err(|e| {
            Error::Validation(vec![ValidationIssue {
                path: "policies".into(),
                message: e.to_string(),
            }])
        })?;
        let issues = next.validate("policies");
        if issues.is_empty() {
            Ok(next)
        } else {
            Err(Error::Validation(issues))
        }
    }
}

fn merge(target: &mut Value, patch: &Value) {
    match (target, patch) {
        (Value::Object(t), Value::Object(p)) => {
            for (k, v) in p {
                match t.get_mut(k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        t.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (t, p) => *t = p.clone(),
    }
}
