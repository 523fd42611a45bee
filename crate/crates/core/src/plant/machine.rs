use super::{
    ActuatorCommand, FaultEvent, FaultKind, FireParams, MachineEvent, MachineParams, MachineState,
    Mode, regulate_pressure,
};
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trigger {
    DemandArrives,
    DemandEnds,
    DwellElapsed,
    ShutdownCmd,
    WakeCmd,
    Fault { kind: FaultKind, repair_ticks: u64 },
    RepairDone,
    MaintenanceStart,
    MaintenanceDone,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transition {
    Applied { from: Mode, to: Mode },
    /// Legal but not yet possible (a waking machine still warming up).
    Deferred,
    Ignored,
}

/// Applies `trigger` to the mode state machine.
///
/// Illegal triggers leave the state untouched apart from the
/// `illegal_triggers` counter.
pub fn transition_mode(
    state: &mut MachineState,
    trigger: Trigger,
    params: &MachineParams,
    tick: u64,
) -> Transition {
    use Mode::*;
    let from = state.mode;
    let to = match (from, trigger) {
        (Idle, Trigger::DemandArrives) => Running,
        (Standby, Trigger::DemandArrives) if state.warmup_remaining == 0 => Running,
        (Standby, Trigger::DemandArrives) => return Transition::Deferred,
        (Running, Trigger::DemandEnds) => Idle,
        (Idle, Trigger::DwellElapsed) => Standby,
        (Idle | Standby, Trigger::ShutdownCmd) => Off,
        (Off, Trigger::WakeCmd) => {
            state.warmup_remaining = params.wake_delay_ticks;
            Standby
        }
        (Running | Idle | Standby | Maintenance, Trigger::Fault { kind, repair_ticks }) => {
            state.active_fault = Some(FaultEvent {
                machine_id: state.machine_id.clone(),
                kind,
                start_tick: tick,
                repair_ticks: repair_ticks.max(1),
            });
            state.repair_remaining = repair_ticks.max(1);
            state.maintenance_remaining = 0;
            Faulted
        }
        (Faulted, Trigger::RepairDone) => {
            state.active_fault = None;
            state.wear = 0.0;
            Idle
        }
        (Idle | Standby | Off, Trigger::MaintenanceStart) => {
            state.maintenance_remaining = params.maintenance_ticks.max(1);
            Maintenance
        }
        (Maintenance, Trigger::MaintenanceDone) => {
            state.wear = 0.0;
            Idle
        }
        _ => {
            state.illegal_triggers += 1;
            return Transition::Ignored;
        }
    };
    if to == Idle {
        state.idle_dwell = 0;
    }
    state.mode = to;
    Transition::Applied { from, to }
}

/// Streams drawn by the plant. Every machine consumes a fixed number of
/// values from each per tick, whatever its mode.
#[derive(Debug, Clone)]
pub struct PlantRngs {
    pub faults: RngStream,
    pub defects: RngStream,
    pub process: RngStream,
}

#[derive(Debug, Clone, Copy)]
pub struct MachineInputs<'a> {
    /// Requested production rate in units per tick.
    pub demand: f64,
    pub ambient_c: f64,
    pub commands: &'a [ActuatorCommand],
    /// Current fire intensity at the machine.
    pub fire_intensity: f64,
    pub tick: u64,
    pub tick_duration_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MachineTick {
    /// Energy consumed this tick in microjoules (`power_mw * tick_ms`).
    pub energy_uj: u64,
    pub produced: u32,
    pub defective: u32,
    pub scrapped: u32,
    pub utilization: f64,
    pub events: Vec<MachineEvent>,
}

impl MachineTick {
    pub fn energy_wh(&self) -> f64 {
        self.energy_uj as f64 / 3.6e9
    }
}

/// Advances one machine by one tick.
pub fn step_machine(
    state: &mut MachineState,
    params: &MachineParams,
    fire: &FireParams,
    inputs: MachineInputs<'_>,
    rngs: &mut PlantRngs,
) -> MachineTick {
    let tick = inputs.tick;
    let mut out = MachineTick::default();

    let hazard_draw = rngs.faults.next_f64();
    let mut defect_draws = [0.0f64; 8];
    let n_defect = params.max_units_per_tick().min(defect_draws.len());
    for d in defect_draws.iter_mut().take(n_defect) {
        *d = rngs.defects.next_f64();
    }
    let noise = rngs
        .process
        .uniform(-params.pressure.noise_kpa, params.pressure.noise_kpa);

    let start_mode = state.mode;

    if state.mode == Mode::Faulted && state.repair_remaining == 0 {
        transition_mode(state, Trigger::RepairDone, params, tick);
        out.events.push(MachineEvent::Repaired);
    }
    if state.mode == Mode::Maintenance && state.maintenance_remaining == 0 {
        transition_mode(state, Trigger::MaintenanceDone, params, tick);
        out.events.push(MachineEvent::MaintenanceDone);
    }

    for cmd in inputs.commands {
        match *cmd {
            ActuatorCommand::Shutdown => {
                transition_mode(state, Trigger::ShutdownCmd, params, tick);
            }
            ActuatorCommand::Wake => {
                if state.sprinkler_on {
                    state.illegal_triggers += 1;
                } else {
                    transition_mode(state, Trigger::WakeCmd, params, tick);
                }
            }
            ActuatorCommand::StartMaintenance => {
                if state.mode == Mode::Running {
                    transition_mode(state, Trigger::DemandEnds, params, tick);
                }
                if let Transition::Applied { .. } =
                    transition_mode(state, Trigger::MaintenanceStart, params, tick)
                {
                    out.events.push(MachineEvent::MaintenanceStarted);
                }
            }
            ActuatorCommand::Cooling { on } => state.cooling_on = on,
            ActuatorCommand::Sprinkler { on } => state.sprinkler_on = on,
            ActuatorCommand::InjectFault { kind, repair_ticks } => {
                fault(state, params, kind, repair_ticks, tick, &mut out);
            }
        }
    }

    let demand = if state.sprinkler_on || !inputs.demand.is_finite() {
        0.0
    } else {
        inputs.demand.max(0.0)
    };
    match state.mode {
        Mode::Idle | Mode::Standby if demand > 0.0 => {
            transition_mode(state, Trigger::DemandArrives, params, tick);
        }
        Mode::Running if demand <= 0.0 => {
            transition_mode(state, Trigger::DemandEnds, params, tick);
        }
        _ => {}
    }
    if state.mode == Mode::Idle {
        state.idle_dwell += 1;
        if state.idle_dwell > params.standby_dwell_ticks {
            transition_mode(state, Trigger::DwellElapsed, params, tick);
        }
    }

    if state.mode == Mode::Running && hazard_draw < params.hazard(state.wear) {
        fault(state, params, FaultKind::Breakdown, params.repair_ticks, tick, &mut out);
    }
    if state.mode.is_live() && state.temperature_c >= params.thermal.critical_c {
        fault(state, params, FaultKind::Overheat, params.repair_ticks, tick, &mut out);
    }
    if state.mode.is_live() && inputs.fire_intensity >= fire.fault_level {
        fault(state, params, FaultKind::Fire, params.fire_repair_ticks, tick, &mut out);
    }

    let utilization = if state.mode == Mode::Running {
        (demand.min(params.max_rate) / params.max_rate).clamp(0.0, 1.0)
    } else {
        0.0
    };
    out.utilization = utilization;
    let power_w = match state.mode {
        Mode::Running => params.running_power_w(utilization),
        Mode::Idle | Mode::Standby => params.p_standby_w,
        Mode::Maintenance => params.p_maint_w,
        Mode::Off | Mode::Faulted => 0.0,
    };
    state.power_mw = (power_w.max(0.0) * 1000.0).round() as u64;
    out.energy_uj = state.power_mw * inputs.tick_duration_ms;

    if state.mode == Mode::Running {
        state.production_credit += utilization * params.max_rate;
        let p_defect = params.defect_probability(state.temperature_c, state.pressure_kpa);
        let mut i = 0;
        while state.production_credit >= 1.0 && i < n_defect {
            state.production_credit -= 1.0;
            out.produced += 1;
            if defect_draws[i] < p_defect {
                out.defective += 1;
            }
            i += 1;
        }
    }
    state.units_produced += out.produced as u64;
    state.units_defective += out.defective as u64;

    // First-order approach to a mode/load dependent setpoint.
    let th = &params.thermal;
    let mut setpoint = inputs.ambient_c
        + match state.mode {
            Mode::Running => th.rise_run_c * utilization,
            Mode::Idle | Mode::Standby | Mode::Maintenance => th.rise_idle_c,
            Mode::Off | Mode::Faulted => 0.0,
        };
    let mut tau = if setpoint > state.temperature_c {
        th.tau_heat_ticks
    } else {
        th.tau_cool_ticks
    };
    if state.cooling_on {
        setpoint -= th.cooling_drop_c;
        if setpoint < state.temperature_c {
            tau = th.tau_cool_ticks * th.cooling_tau_factor;
        }
    }
    state.temperature_c += (setpoint - state.temperature_c) * (1.0 - (-1.0 / tau).exp());

    let was_running = start_mode == Mode::Running;
    let is_running = state.mode == Mode::Running;
    if was_running != is_running {
        state.surge_remaining = params.pressure.surge_ticks;
        state.surge_sign = if was_running { 1.0 } else { -1.0 };
    }
    let surge = if state.surge_remaining > 0 {
        state.surge_remaining -= 1;
        state.surge_sign * params.pressure.surge_kpa_per_tick
    } else {
        0.0
    };
    state.pressure_kpa = regulate_pressure(state.pressure_kpa, surge, noise, &params.pressure);

    if state.mode == Mode::Running {
        let dw = params.wear_increment(utilization, state.temperature_c, state.pressure_kpa);
        state.wear = (state.wear + dw).min(1.0);
    }

    match state.mode {
        Mode::Faulted => state.repair_remaining = state.repair_remaining.saturating_sub(1),
        Mode::Maintenance => {
            state.maintenance_remaining = state.maintenance_remaining.saturating_sub(1)
        }
        Mode::Standby => state.warmup_remaining = state.warmup_remaining.saturating_sub(1),
        _ => {}
    }
    out
}

fn fault(
    state: &mut MachineState,
    params: &MachineParams,
    kind: FaultKind,
    repair_ticks: u64,
    tick: u64,
    out: &mut MachineTick,
) {
    let was_running = state.mode == Mode::Running;
    if let Transition::Applied { .. } = transition_mode(
        state,
        Trigger::Fault {
            kind,
            repair_ticks,
        },
        params,
        tick,
    ) {
        if was_running {
            out.scrapped += params.fault_scrap_units;
            state.production_credit = 0.0;
        }
        out.events.push(MachineEvent::FaultStarted { kind });
    }
}
