use super::IdleShutdownPolicy;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnergyDecision {
    Shutdown,
    Wake,
}

/// What the cloud believes about one machine, from telemetry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergySnapshot<'a> {
    pub machine_id: &'a str,
    pub essential: bool,
    /// Tick of the first reading in the current idle stretch.
    pub idle_since: Option<u64>,
    /// A shutdown was issued and no wake since.
    pub commanded_off: bool,
    pub next_demand: Option<u64>,
    pub sprinkler_active: bool,
}

/// Idle-shutdown rule for one machine at tick `now`.
///
/// Commands take effect on the next tick and a woken machine needs
/// `wake_delay_ticks` of warm-up, so WAKE is due once demand is at most
/// `wake_delay_ticks + 1` away, and OFF is only issued when it would not be
/// followed by an immediate WAKE.
pub fn energy_policy(s: &EnergySnapshot<'_>, policy: &IdleShutdownPolicy, now: u64) -> Option<EnergyDecision> {
    if !policy.enabled {
        return None;
    }
    let lead = now + policy.wake_delay_ticks + 1;
    let demand_soon = s.next_demand.is_some_and(|d| d <= lead);
    if s.commanded_off {
        return (demand_soon && !s.sprinkler_active).then_some(EnergyDecision::Wake);
    }
    if s.essential {
        return None;
    }
    let idle_long_enough = s
        .idle_since
        .is_some_and(|since| now + 1 >= since + policy.idle_threshold_ticks);
    (idle_long_enough && !demand_soon).then_some(EnergyDecision::Shutdown)
}
