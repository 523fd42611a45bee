use serde::{Deserialize, Serialize};

/// Process-pressure loop: a transition surge, passive relaxation and an
/// optional proportional regulator pulling toward nominal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PressureParams {
    pub nominal_kpa: f64,
    /// Half-width of the nominal band used for excursion accounting.
    pub band_kpa: f64,
    /// Surge injected per tick after a RUNNING <-> not-RUNNING transition.
    pub surge_kpa_per_tick: f64,
    pub surge_ticks: u32,
    pub passive_relaxation: f64,
    pub regulator_gain: f64,
    pub regulator_enabled: bool,
    /// Process noise amplitude (uniform ±).
    pub noise_kpa: f64,
    /// Allowed deviation from nominal: `[nominal - max, nominal + max]`.
    pub max_overshoot_kpa: f64,
}

impl Default for PressureParams {
    fn default() -> Self {
        PressureParams {
            nominal_kpa: 300.0,
            band_kpa: 8.0,
            surge_kpa_per_tick: 4.0,
            surge_ticks: 5,
            passive_relaxation: 0.02,
            regulator_gain: 0.3,
            regulator_enabled: true,
            noise_kpa: 0.2,
            max_overshoot_kpa: 15.0,
        }
    }
}

impl PressureParams {
    /// Fraction of the deviation removed each tick.
    pub fn relaxation(&self) -> f64 {
        self.passive_relaxation
            + if self.regulator_enabled {
                self.regulator_gain
            } else {
                0.0
            }
    }

    /// Worst-case steady deviation under the current loop:
    /// `|e'| <= (1-c)|e| + S + N` is invariant for `|e| <= (S+N)/c`.
    pub fn deviation_bound(&self) -> f64 {
        (self.surge_kpa_per_tick + self.noise_kpa) / self.relaxation()
    }

    pub fn limits(&self) -> (f64, f64) {
        (
            self.nominal_kpa - self.max_overshoot_kpa,
            self.nominal_kpa + self.max_overshoot_kpa,
        )
    }
}

/// One tick of the pressure loop. `surge` is the transition disturbance for
/// this tick (zero outside a transition), `noise` the process-noise draw.
pub fn regulate_pressure(pressure_kpa: f64, surge: f64, noise: f64, params: &PressureParams) -> f64 {
    let deviation = pressure_kpa - params.nominal_kpa;
    let next = deviation * (1.0 - params.relaxation()) + surge + noise;
    params.nominal_kpa + next
}
