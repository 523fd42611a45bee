//! Processing layer at the gateway: calibration correction, tumbling-window
//! aggregation, deadband prefiltering and local safety control.

mod node;

use serde::{Deserialize, Serialize};

use crate::plant::{Calibration, SensorKind};
use crate::Id;

pub use node::{EdgeNode, EdgeOutcome, EdgeStats, SafetyAction, SensorBinding};

/// Inverts the sensor calibration: `(value - offset) / gain`.
/// A zero gain is rejected when the scenario is validated.
pub fn correct_calibration(value: f64, calibration: &Calibration) -> f64 {
    (value - calibration.offset) / calibration.gain
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSummary {
    pub sensor_id: Id,
    pub machine_id: Id,
    pub kind: SensorKind,
    pub window_start_tick: u64,
    pub window_len: u64,
    pub count: u64,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub last: f64,
    pub last_tick: u64,
}

/// Exact statistics over one window of `(tick, corrected value)` pairs, in
/// arrival order. An empty window has no summary.
pub fn aggregate_window(
    sensor_id: &Id,
    machine_id: &Id,
    kind: SensorKind,
    window_start_tick: u64,
    window_len: u64,
    readings: &[(u64, f64)],
) -> Option<WindowSummary> {
    let (&(last_tick, last), _) = readings.split_last()?;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    let mut sum = 0.0;
    for &(_, v) in readings {
        min = min.min(v);
        max = max.max(v);
        sum += v;
    }
    Some(WindowSummary {
        sensor_id: sensor_id.clone(),
        machine_id: machine_id.clone(),
        kind,
        window_start_tick,
        window_len,
        count: readings.len() as u64,
        min,
        max,
        // Rounding in the sum can push the mean an ulp outside [min, max].
        mean: (sum / readings.len() as f64).clamp(min, max),
        last,
        last_tick,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FilterDecision {
    Forward,
    Suppress,
    Alert,
}

/// Inclusive alert limits for one sensor kind.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlertThresholds {
    pub high: Option<f64>,
    pub low: Option<f64>,
}

impl AlertThresholds {
    pub fn breached(&self, value: f64) -> bool {
        self.high.is_some_and(|h| value >= h) || self.low.is_some_and(|l| value <= l)
    }
}

/// Deadband prefilter. Alerts bypass suppression; otherwise a reading is
/// forwarded only when it moved more than `deadband` from the last forwarded
/// value. The first reading of a stream is always forwarded.
pub fn prefilter(
    value: f64,
    previous_forwarded: Option<f64>,
    deadband: f64,
    thresholds: &AlertThresholds,
) -> FilterDecision {
    if thresholds.breached(value) {
        return FilterDecision::Alert;
    }
    match previous_forwarded {
        None => FilterDecision::Forward,
        Some(prev) if (value - prev).abs() > deadband => FilterDecision::Forward,
        Some(_) if deadband <= 0.0 => FilterDecision::Forward,
        Some(_) => FilterDecision::Suppress,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SafetyKind {
    FireSprinkler,
    OvertempCooling,
}

impl SafetyKind {
    pub fn sensor_kind(self) -> SensorKind {
        match self {
            SafetyKind::FireSprinkler => SensorKind::Fire,
            SafetyKind::OvertempCooling => SensorKind::Temperature,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SafetyRule {
    pub kind: SafetyKind,
    pub threshold: f64,
    pub release_threshold: f64,
    /// Ticks allowed between the threshold-crossing reading and activation.
    pub response_deadline: u64,
}

/// Hysteresis controller: ON at or above `threshold`, OFF at or below
/// `release_threshold`, nothing in between or when already in that state.
pub fn local_safety(value: f64, rule: &SafetyRule, actuator_on: bool) -> Option<bool> {
    if value >= rule.threshold && !actuator_on {
        Some(true)
    } else if value <= rule.release_threshold && actuator_on {
        Some(false)
    } else {
        None
    }
}

/// Per-kind value holder used by the edge configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerKind<T> {
    pub energy: T,
    pub temperature: T,
    pub pressure: T,
    pub fire: T,
}

impl<T> PerKind<T> {
    pub fn get(&self, kind: SensorKind) -> &T {
        match kind {
            SensorKind::Energy => &self.energy,
            SensorKind::Temperature => &self.temperature,
            SensorKind::Pressure => &self.pressure,
            SensorKind::Fire => &self.fire,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EdgeConfig {
    pub window_ticks: u64,
    pub deadband: PerKind<f64>,
    pub alerts: PerKind<AlertThresholds>,
    pub sprinkler: SafetyRule,
    pub cooling: SafetyRule,
}

impl Default for EdgeConfig {
    fn default() -> Self {
        EdgeConfig {
            window_ticks: 60,
            deadband: PerKind {
                energy: 5.0,
                temperature: 0.75,
                pressure: 1.0,
                fire: 2.0,
            },
            alerts: PerKind {
                energy: AlertThresholds::default(),
                temperature: AlertThresholds {
                    high: Some(75.0),
                    low: None,
                },
                pressure: AlertThresholds {
                    high: Some(312.0),
                    low: Some(288.0),
                },
                fire: AlertThresholds {
                    high: Some(40.0),
                    low: None,
                },
            },
            sprinkler: SafetyRule {
                kind: SafetyKind::FireSprinkler,
                threshold: 40.0,
                release_threshold: 15.0,
                response_deadline: 2,
            },
            cooling: SafetyRule {
                kind: SafetyKind::OvertempCooling,
                threshold: 72.0,
                release_threshold: 62.0,
                response_deadline: 2,
            },
        }
    }
}

impl EdgeConfig {
    pub fn rule_for(&self, kind: SensorKind) -> Option<&SafetyRule> {
        match kind {
            SensorKind::Fire => Some(&self.sprinkler),
            SensorKind::Temperature => Some(&self.cooling),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{sample_sensor, SensorSpec};
    use crate::rng::split_rng;
    use proptest::prelude::*;

    const NO_ALERTS: AlertThresholds = AlertThresholds {
        high: None,
        low: None,
    };

    #[test]
    fn calibration_examples() {
        let c = Calibration::ideal(1.0, 0.0);
        assert_eq!(correct_calibration(42.5, &c), 42.5);
        assert_eq!(correct_calibration(101.0, &Calibration::ideal(1.0, 1.0)), 100.0);
    }

    proptest! {
        #[test]
        fn calibration_round_trip(
            gain in prop_oneof![-10.0..-0.1f64, 0.1..10.0f64],
            offset in -100.0..100.0f64,
            truth in -1000.0..1000.0f64,
        ) {
            let spec = SensorSpec {
                sensor_id: "s".into(),
                kind: SensorKind::Pressure,
                machine_id: "m".into(),
                sample_period: 1,
                calibration: Calibration::ideal(gain, offset),
            };
            let r = sample_sensor(&spec, truth, 0, 0, &mut split_rng(1, "sensor-noise"));
            let back = correct_calibration(r.value, &spec.calibration);
            prop_assert!((back - truth).abs() <= 1e-9 * truth.abs().max(1.0));
        }

        #[test]
        fn window_matches_recomputation(values in proptest::collection::vec(-1e3..1e3f64, 1..1000)) {
            let readings: Vec<(u64, f64)> = values.iter().enumerate().map(|(i, v)| (i as u64, *v)).collect();
            let s = aggregate_window(&"s".into(), &"m".into(), SensorKind::Energy, 0, 1000, &readings).unwrap();
            let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            prop_assert_eq!(s.count, values.len() as u64);
            prop_assert_eq!(s.min, min);
            prop_assert_eq!(s.max, max);
            prop_assert!((s.mean - mean).abs() <= 1e-9 * mean.abs().max(1.0));
            prop_assert!(s.min <= s.mean && s.mean <= s.max);
            prop_assert_eq!(s.last, *values.last().unwrap());
        }

        #[test]
        fn suppression_reconstructs_within_deadband(
            values in proptest::collection::vec(-50.0..50.0f64, 1..300),
            deadband in 0.0..5.0f64,
        ) {
            let mut held = None;
            for v in values {
                match prefilter(v, held, deadband, &NO_ALERTS) {
                    FilterDecision::Forward | FilterDecision::Alert => held = Some(v),
                    FilterDecision::Suppress => {}
                }
                prop_assert!((held.unwrap() - v).abs() <= deadband);
            }
        }
    }

    #[test]
    fn window_examples() {
        let id: Id = "s".into();
        let one = aggregate_window(&id, &id, SensorKind::Fire, 0, 60, &[(3, 7.5)]).unwrap();
        assert_eq!((one.min, one.max, one.mean, one.last, one.count), (7.5, 7.5, 7.5, 7.5, 1));
        let three = aggregate_window(&id, &id, SensorKind::Fire, 0, 60, &[(0, 1.0), (1, 2.0), (2, 3.0)]).unwrap();
        assert_eq!((three.min, three.max, three.mean, three.last), (1.0, 3.0, 2.0, 3.0));
        assert!(aggregate_window(&id, &id, SensorKind::Fire, 0, 60, &[]).is_none());
    }

    #[test]
    fn prefilter_examples() {
        for v in [1.0, 1.0, 1.0] {
            assert_eq!(prefilter(v, Some(1.0), 0.0, &NO_ALERTS), FilterDecision::Forward);
        }
        let mut held = None;
        let decisions: Vec<_> = (0..5)
            .map(|_| {
                let d = prefilter(3.0, held, 0.5, &NO_ALERTS);
                if d == FilterDecision::Forward {
                    held = Some(3.0);
                }
                d
            })
            .collect();
        assert_eq!(decisions[0], FilterDecision::Forward);
        assert!(decisions[1..].iter().all(|d| *d == FilterDecision::Suppress));
        let hot = AlertThresholds {
            high: Some(75.0),
            low: None,
        };
        assert_eq!(prefilter(75.2, Some(75.0), 1.0, &hot), FilterDecision::Alert);
    }

    #[test]
    fn safety_hysteresis() {
        let rule = EdgeConfig::default().sprinkler;
        assert_eq!(local_safety(45.0, &rule, false), Some(true));
        assert_eq!(local_safety(45.0, &rule, true), None);
        assert_eq!(local_safety(20.0, &rule, true), None);
        assert_eq!(local_safety(20.0, &rule, false), None);
        assert_eq!(local_safety(10.0, &rule, true), Some(false));
    }
}
