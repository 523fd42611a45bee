use serde::{Deserialize, Serialize};

use crate::rng::RngStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FireParams {
    pub baseline: f64,
    /// Uniform noise amplitude on the baseline.
    pub noise: f64,
    /// Intensity added per tick while a fire burns unsuppressed.
    pub ramp_per_tick: f64,
    pub max_intensity: f64,
    /// Exponential decay time constant once suppressed.
    pub decay_tau_ticks: f64,
    /// A fire whose excess drops below this level is extinguished.
    pub extinguish_excess: f64,
    /// Intensity at which the machine faults with a FIRE fault.
    pub fault_level: f64,
}

impl Default for FireParams {
    fn default() -> Self {
        FireParams {
            baseline: 5.0,
            noise: 1.0,
            ramp_per_tick: 15.0,
            max_intensity: 100.0,
            decay_tau_ticks: 10.0,
            extinguish_excess: 1.0,
            fault_level: 90.0,
        }
    }
}

impl FireParams {
    /// Ticks from ignition until the noiseless intensity reaches `threshold`.
    pub fn ticks_to_reach(&self, threshold: f64) -> u64 {
        let excess = (threshold - self.baseline).max(0.0);
        (excess / self.ramp_per_tick).ceil().max(1.0) as u64
    }

    /// Ticks of suppression needed for an excess of `from_excess` to drop
    /// strictly below `threshold` even with worst-case positive noise.
    pub fn decay_window(&self, from_excess: f64, threshold: f64) -> u64 {
        let target = threshold - self.baseline - self.noise;
        if target <= 0.0 {
            return u64::MAX;
        }
        if from_excess < target {
            return 0;
        }
        ((from_excess / target).ln() * self.decay_tau_ticks).floor() as u64 + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FireState {
    pub excess: f64,
    pub burning: bool,
    pub intensity: f64,
}

impl FireState {
    pub fn new(params: &FireParams) -> Self {
        FireState {
            excess: 0.0,
            burning: false,
            intensity: params.baseline,
        }
    }
}

/// Advances one machine's fire intensity by one tick and returns it.
///
/// One noise value is drawn every tick regardless of state. An ignition
/// ramps the excess until the sprinkler is on; only then does it decay.
/// Suppression puts the fire out, so switching the sprinkler off again
/// during the decay does not restart the ramp.
pub fn fire_process(
    state: &mut FireState,
    params: &FireParams,
    ignite: bool,
    sprinkler_on: bool,
    rng: &mut RngStream,
) -> f64 {
    let noise = rng.uniform(-params.noise, params.noise);
    if ignite {
        state.burning = true;
    }
    if state.burning && !sprinkler_on {
        state.excess = (state.excess + params.ramp_per_tick).min(params.max_intensity - params.baseline);
    } else {
        if sprinkler_on {
            state.burning = false;
        }
        state.excess *= (-1.0 / params.decay_tau_ticks).exp();
        if state.excess < params.extinguish_excess {
            state.burning = false;
        }
    }
    state.intensity = (params.baseline + state.excess + noise).max(0.0);
    state.intensity
}
