use super::ResourcePolicy;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduledDemand {
    pub scheduled: f64,
    pub allowed: f64,
}

/// Applies excursion slowdowns to the production schedule.
///
/// Demand withheld during an excursion goes to a per-machine backlog that
/// is released later, on top of scheduled demand, while the machine is back
/// in band. For every machine, `allowed + backlog == scheduled` summed over
/// the run so far.
#[derive(Debug, Clone, Default)]
pub struct DemandScheduler {
    slowed: Vec<bool>,
    backlog: Vec<f64>,
    scheduled_total: Vec<f64>,
    allowed_total: Vec<f64>,
}

impl DemandScheduler {
    pub fn new(machines: usize) -> Self {
        DemandScheduler {
            slowed: vec![false; machines],
            backlog: vec![0.0; machines],
            scheduled_total: vec![0.0; machines],
            allowed_total: vec![0.0; machines],
        }
    }

    pub fn set_slowdown(&mut self, machine: usize, active: bool) {
        self.slowed[machine] = active;
    }

    pub fn is_slowed(&self, machine: usize) -> bool {
        self.slowed[machine]
    }

    /// Demand for `machine` this tick given the schedule.
    pub fn demand(&mut self, machine: usize, scheduled: f64, max_rate: f64, policy: &ResourcePolicy) -> ScheduledDemand {
        let allowed = if !policy.enabled {
            scheduled
        } else if self.slowed[machine] {
            let allowed = scheduled * policy.excursion_slowdown_factor;
            self.backlog[machine] += scheduled - allowed;
            allowed
        } else if scheduled > 0.0 && self.backlog[machine] > 0.0 {
            let room = (policy.drain_utilization * max_rate - scheduled).max(0.0);
            let extra = room.min(self.backlog[machine]);
            self.backlog[machine] -= extra;
            scheduled + extra
        } else {
            scheduled
        };
        self.scheduled_total[machine] += scheduled;
        self.allowed_total[machine] += allowed;
        ScheduledDemand { scheduled, allowed }
    }

    pub fn backlog(&self, machine: usize) -> f64 {
        self.backlog[machine]
    }

    pub fn scheduled_total(&self) -> f64 {
        self.scheduled_total.iter().sum()
    }

    pub fn allowed_total(&self) -> f64 {
        self.allowed_total.iter().sum()
    }

    pub fn backlog_total(&self) -> f64 {
        self.backlog.iter().sum()
    }
}
