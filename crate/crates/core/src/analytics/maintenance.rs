use serde::{Deserialize, Serialize};

use super::PredictiveMaintenancePolicy;
use crate::Id;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MaintenanceReason {
    WearForecast,
    AnomalyEscalation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaintenancePlan {
    pub machine_id: Id,
    pub scheduled_tick: u64,
    pub duration: u64,
    pub reason: MaintenanceReason,
}

/// Least-squares slope of `(tick, value)` points; `None` with fewer than two
/// distinct ticks.
pub fn least_squares_slope(points: &[(u64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let t0 = points[0].0 as f64;
    let mt = points.iter().map(|p| p.0 as f64 - t0).sum::<f64>() / n;
    let mv = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for &(t, v) in points {
        let dt = t as f64 - t0 - mt;
        sxx += dt * dt;
        sxy += dt * (v - mv);
    }
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Extrapolates the wear trend and plans maintenance if the alarm level is
/// forecast within the horizon.
///
/// The plan lands at the start of the earliest forecast idle window long
/// enough for the maintenance that opens before the forecast crossing; with
/// no such window it is scheduled at `now`. `idle_window(from, until, len)`
/// returns the first idle start in `[from, until)` with `len` free ticks.
pub fn plan_maintenance(
    machine_id: &Id,
    history: &[(u64, f64)],
    now: u64,
    policy: &PredictiveMaintenancePolicy,
    maintenance_ticks: u64,
    idle_window: impl Fn(u64, u64, u64) -> Option<u64>,
) -> Option<MaintenancePlan> {
    let slope = least_squares_slope(history)?;
    let current = history.last()?.1;
    let plan = |tick| MaintenancePlan {
        machine_id: machine_id.clone(),
        scheduled_tick: tick,
        duration: maintenance_ticks,
        reason: MaintenanceReason::WearForecast,
    };
    if current >= policy.wear_alarm {
        return Some(plan(now));
    }
    if slope <= 0.0 {
        return None;
    }
    let crossing = (policy.wear_alarm - current) / slope;
    if crossing > policy.forecast_horizon as f64 {
        return None;
    }
    let until = now + crossing.floor() as u64;
    Some(plan(idle_window(now, until, maintenance_ticks).unwrap_or(now)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn policy(alarm: f64, horizon: u64) -> PredictiveMaintenancePolicy {
        PredictiveMaintenancePolicy {
            wear_alarm: alarm,
            forecast_horizon: horizon,
            ..Default::default()
        }
    }

    #[test]
    fn slope_of_line() {
        let pts: Vec<_> = (0..10).map(|t| (t + 100, 0.5 + 0.01 * t as f64)).collect();
        assert!((least_squares_slope(&pts).unwrap() - 0.01).abs() < 1e-12);
        assert!(least_squares_slope(&pts[..1]).is_none());
        assert!(least_squares_slope(&[(3, 1.0), (3, 2.0)]).is_none());
    }

    #[test]
    fn flat_trend_below_alarm_is_none() {
        let pts: Vec<_> = (0..10).map(|t| (t, 0.3)).collect();
        assert!(plan_maintenance(&"m".into(), &pts, 10, &policy(0.8, 20), 10, |_, _, _| None).is_none());
    }

    #[test]
    fn rising_trend_plans_before_crossing() {
        let pts: Vec<_> = (0..=10).map(|t| (t, 0.6 + 0.01 * t as f64)).collect();
        assert_eq!(pts.last().unwrap().1, 0.7);
        let p = plan_maintenance(&"m".into(), &pts, 10, &policy(0.8, 20), 5, |_, _, _| None).unwrap();
        assert_eq!(p.scheduled_tick, 10);
        assert_eq!(p.reason, MaintenanceReason::WearForecast);
        // The crossing is ten ticks out, so the idle window search ends at 20.
        let p = plan_maintenance(&"m".into(), &pts, 10, &policy(0.8, 20), 5, |from, until, len| {
            assert_eq!((from, until, len), (10, 20, 5));
            Some(14)
        })
        .unwrap();
        assert_eq!(p.scheduled_tick, 14);
        // Beyond the horizon nothing is planned.
        assert!(plan_maintenance(&"m".into(), &pts, 10, &policy(0.8, 9), 5, |_, _, _| None).is_none());
    }

    #[test]
    fn at_alarm_plans_now() {
        let pts = [(0, 0.9), (1, 0.9)];
        let p = plan_maintenance(&"m".into(), &pts, 1, &policy(0.8, 20), 5, |_, _, _| Some(3)).unwrap();
        assert_eq!(p.scheduled_tick, 1);
    }
}
