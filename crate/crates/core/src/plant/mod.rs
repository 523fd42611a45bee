//! Perception layer: machine dynamics, fault and fire processes, actuators and
//! calibrated sensors.

mod fire;
mod machine;
mod pressure;
mod sensor;
mod workload;

use serde::{Deserialize, Serialize};

use crate::Id;

pub use fire::{fire_process, FireParams, FireState};
pub use machine::{step_machine, transition_mode, MachineInputs, MachineTick, PlantRngs, Transition};
pub use pressure::{regulate_pressure, PressureParams};
pub use sensor::{sample_sensor, Calibration, SensorKind, SensorReading, SensorSpec};
pub use workload::{DemandSegment, WorkloadConfig, WorkloadProfile, AmbientConfig, Range};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Mode {
    Running,
    Idle,
    Standby,
    Off,
    Faulted,
    Maintenance,
}

impl Mode {
    /// Counted as downtime by the KPI layer.
    pub fn is_down(self) -> bool {
        matches!(self, Mode::Faulted | Mode::Maintenance)
    }

    /// Powered and able to fault.
    pub fn is_live(self) -> bool {
        !matches!(self, Mode::Off | Mode::Faulted)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Running => "RUNNING",
            Mode::Idle => "IDLE",
            Mode::Standby => "STANDBY",
            Mode::Off => "OFF",
            Mode::Faulted => "FAULTED",
            Mode::Maintenance => "MAINTENANCE",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FaultKind {
    Breakdown,
    Overheat,
    Fire,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultEvent {
    pub machine_id: Id,
    pub kind: FaultKind,
    pub start_tick: u64,
    pub repair_ticks: u64,
}

/// Commands a machine controller accepts from the edge or the cloud.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "cmd", rename_all = "kebab-case")]
pub enum ActuatorCommand {
    Shutdown,
    Wake,
    StartMaintenance,
    Cooling { on: bool },
    Sprinkler { on: bool },
    InjectFault { kind: FaultKind, repair_ticks: u64 },
}

/// Discrete events a machine controller reports over the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum MachineEvent {
    FaultStarted { kind: FaultKind },
    Repaired,
    MaintenanceStarted,
    MaintenanceDone,
}

impl MachineEvent {
    /// Level used in `plant/alerts/<kind>`.
    pub fn alert_kind(&self) -> &'static str {
        match self {
            MachineEvent::FaultStarted { .. } => "fault",
            MachineEvent::Repaired => "repair",
            MachineEvent::MaintenanceStarted | MachineEvent::MaintenanceDone => "maintenance",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThermalParams {
    pub tau_heat_ticks: f64,
    pub tau_cool_ticks: f64,
    /// Temperature rise above ambient when running at full rate.
    pub rise_run_c: f64,
    pub rise_idle_c: f64,
    pub cooling_drop_c: f64,
    /// Multiplies the cooling time constant while forced cooling is on.
    pub cooling_tau_factor: f64,
    /// Upper edge of the nominal band.
    pub nominal_max_c: f64,
    pub excursion_scale_c: f64,
    pub critical_c: f64,
}

impl Default for ThermalParams {
    fn default() -> Self {
        ThermalParams {
            tau_heat_ticks: 300.0,
            tau_cool_ticks: 200.0,
            rise_run_c: 45.0,
            rise_idle_c: 5.0,
            cooling_drop_c: 20.0,
            cooling_tau_factor: 0.5,
            nominal_max_c: 65.0,
            excursion_scale_c: 10.0,
            critical_c: 95.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WearParams {
    /// Wear added per tick at full rate with no excursions.
    pub rate_per_tick: f64,
    pub temperature_factor: f64,
    pub pressure_factor: f64,
}

impl Default for WearParams {
    fn default() -> Self {
        WearParams {
            rate_per_tick: 1.0 / 14_400.0,
            temperature_factor: 2.0,
            pressure_factor: 1.0,
        }
    }
}

/// Breakdown hazard per running tick:
/// `base_per_tick * (1 + wear_sensitivity * wear^shape)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HazardParams {
    pub base_per_tick: f64,
    pub wear_sensitivity: f64,
    pub shape: f64,
}

impl Default for HazardParams {
    fn default() -> Self {
        HazardParams {
            base_per_tick: 2e-5,
            wear_sensitivity: 30.0,
            shape: 1.0,
        }
    }
}

/// Per-unit defect probability `base + temperature * t_exc + pressure * p_exc`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DefectParams {
    pub base: f64,
    pub temperature: f64,
    pub pressure: f64,
}

impl Default for DefectParams {
    fn default() -> Self {
        DefectParams {
            base: 0.01,
            temperature: 0.2,
            pressure: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MachineParams {
    pub p_run_w: f64,
    pub p_standby_w: f64,
    pub p_maint_w: f64,
    /// Fraction of `p_run_w` drawn when running at zero load.
    pub load_floor: f64,
    /// Maximum production rate in units per tick.
    pub max_rate: f64,
    pub standby_dwell_ticks: u64,
    pub wake_delay_ticks: u64,
    /// Unscheduled repair duration after a breakdown or overheat.
    pub repair_ticks: u64,
    /// Scheduled maintenance duration.
    pub maintenance_ticks: u64,
    pub fire_repair_ticks: u64,
    /// Units scrapped when a running machine faults mid-batch.
    pub fault_scrap_units: u32,
    /// Wear carried into the run from earlier operation.
    pub initial_wear: f64,
    pub thermal: ThermalParams,
    pub pressure: PressureParams,
    pub wear: WearParams,
    pub hazard: HazardParams,
    pub defects: DefectParams,
}

impl Default for MachineParams {
    fn default() -> Self {
        MachineParams {
            p_run_w: 5000.0,
            p_standby_w: 250.0,
            p_maint_w: 600.0,
            load_floor: 0.4,
            max_rate: 0.05,
            standby_dwell_ticks: 120,
            wake_delay_ticks: 60,
            repair_ticks: 1800,
            maintenance_ticks: 600,
            fire_repair_ticks: 3600,
            fault_scrap_units: 3,
            initial_wear: 0.0,
            thermal: ThermalParams::default(),
            pressure: PressureParams::default(),
            wear: WearParams::default(),
            hazard: HazardParams::default(),
            defects: DefectParams::default(),
        }
    }
}

impl MachineParams {
    /// Normalized over-temperature, zero inside the band.
    pub fn temperature_excursion(&self, temperature_c: f64) -> f64 {
        (temperature_c - self.thermal.nominal_max_c).max(0.0) / self.thermal.excursion_scale_c
    }

    /// Normalized pressure excursion beyond the ± band around nominal.
    pub fn pressure_excursion(&self, pressure_kpa: f64) -> f64 {
        let p = &self.pressure;
        ((pressure_kpa - p.nominal_kpa).abs() - p.band_kpa).max(0.0) / p.band_kpa
    }

    pub fn hazard(&self, wear: f64) -> f64 {
        self.hazard.base_per_tick * (1.0 + self.hazard.wear_sensitivity * wear.max(0.0).powf(self.hazard.shape))
    }

    pub fn defect_probability(&self, temperature_c: f64, pressure_kpa: f64) -> f64 {
        let d = &self.defects;
        (d.base
            + d.temperature * self.temperature_excursion(temperature_c)
            + d.pressure * self.pressure_excursion(pressure_kpa))
        .clamp(0.0, 1.0)
    }

    /// Wear added by one running tick at `utilization`.
    pub fn wear_increment(&self, utilization: f64, temperature_c: f64, pressure_kpa: f64) -> f64 {
        let w = &self.wear;
        w.rate_per_tick
            * utilization
            * (1.0
                + w.temperature_factor * self.temperature_excursion(temperature_c)
                + w.pressure_factor * self.pressure_excursion(pressure_kpa))
    }

    /// Running power at `utilization` in watts.
    pub fn running_power_w(&self, utilization: f64) -> f64 {
        self.p_run_w * (self.load_floor + (1.0 - self.load_floor) * utilization)
    }

    /// Upper bound on how many units can complete in one tick.
    pub fn max_units_per_tick(&self) -> usize {
        (self.max_rate.ceil() as usize).max(1)
    }
}

/// Full dynamic state of one machine.
#[derive(Debug, Clone, PartialEq)]
pub struct MachineState {
    pub machine_id: Id,
    pub mode: Mode,
    pub power_mw: u64,
    pub temperature_c: f64,
    pub pressure_kpa: f64,
    pub wear: f64,
    pub units_produced: u64,
    pub units_defective: u64,
    pub cooling_on: bool,
    pub sprinkler_on: bool,
    pub active_fault: Option<FaultEvent>,
    pub idle_dwell: u64,
    pub warmup_remaining: u64,
    pub repair_remaining: u64,
    pub maintenance_remaining: u64,
    pub production_credit: f64,
    pub surge_remaining: u32,
    pub surge_sign: f64,
    pub fire: FireState,
    /// Triggers rejected by the mode state machine.
    pub illegal_triggers: u64,
}

impl MachineState {
    pub fn new(machine_id: Id, params: &MachineParams, ambient_c: f64, fire: &FireParams) -> Self {
        MachineState {
            machine_id,
            mode: Mode::Idle,
            power_mw: 0,
            temperature_c: ambient_c + params.thermal.rise_idle_c,
            pressure_kpa: params.pressure.nominal_kpa,
            wear: params.initial_wear,
            units_produced: 0,
            units_defective: 0,
            cooling_on: false,
            sprinkler_on: false,
            active_fault: None,
            idle_dwell: 0,
            warmup_remaining: 0,
            repair_remaining: 0,
            maintenance_remaining: 0,
            production_credit: 0.0,
            surge_remaining: 0,
            surge_sign: 0.0,
            fire: FireState::new(fire),
            illegal_triggers: 0,
        }
    }

    pub fn power_w(&self) -> f64 {
        self.power_mw as f64 / 1000.0
    }
}
