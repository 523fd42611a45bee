use serde::{Deserialize, Serialize};

use crate::rng::RngStream;
use crate::Id;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SensorKind {
    Energy,
    Temperature,
    Pressure,
    Fire,
}

impl SensorKind {
    pub const ALL: [SensorKind; 4] = [
        SensorKind::Energy,
        SensorKind::Temperature,
        SensorKind::Pressure,
        SensorKind::Fire,
    ];

    /// Topic level for this kind (`plant/<machine>/<level>`).
    pub fn topic_level(self) -> &'static str {
        match self {
            SensorKind::Energy => "energy",
            SensorKind::Temperature => "temperature",
            SensorKind::Pressure => "pressure",
            SensorKind::Fire => "fire",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            SensorKind::Energy => "W",
            SensorKind::Temperature => "degC",
            SensorKind::Pressure => "kPa",
            SensorKind::Fire => "intensity",
        }
    }

    /// ENERGY tolerances are a fraction of the reading; all others are absolute.
    pub fn relative_tolerance(self) -> bool {
        matches!(self, SensorKind::Energy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calibration {
    pub gain: f64,
    pub offset: f64,
    pub tolerance: f64,
}

impl Calibration {
    pub fn ideal(gain: f64, offset: f64) -> Self {
        Calibration {
            gain,
            offset,
            tolerance: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorSpec {
    pub sensor_id: Id,
    pub kind: SensorKind,
    pub machine_id: Id,
    pub sample_period: u64,
    pub calibration: Calibration,
}

impl SensorSpec {
    pub fn is_due(&self, tick: u64) -> bool {
        tick % self.sample_period == 0
    }

    /// Absolute noise half-width for a reading whose noiseless value is `ideal`.
    pub fn noise_half_width(&self, ideal: f64) -> f64 {
        if self.kind.relative_tolerance() {
            self.calibration.tolerance * ideal.abs()
        } else {
            self.calibration.tolerance
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorReading {
    pub sensor_id: Id,
    pub machine_id: Id,
    pub kind: SensorKind,
    pub tick: u64,
    pub value: f64,
    pub seq_no: u64,
}

/// Samples `ground_truth` through the sensor's calibration with uniform noise.
///
/// `value = truth * gain + offset + noise`, `|noise| <= tolerance` (relative
/// for ENERGY). The bound is enforced on the rounded result, so it holds for
/// every reading, not just in expectation. Exactly one draw is consumed.
pub fn sample_sensor(
    spec: &SensorSpec,
    ground_truth: f64,
    tick: u64,
    seq_no: u64,
    rng: &mut RngStream,
) -> SensorReading {
    let u = rng.next_f64();
    let ideal = ground_truth * spec.calibration.gain + spec.calibration.offset;
    let half = spec.noise_half_width(ideal);
    let mut value = ideal + (2.0 * u - 1.0) * half;
    while (value - ideal).abs() > half {
        value = if value > ideal {
            value.next_down()
        } else {
            value.next_up()
        };
    }
    SensorReading {
        sensor_id: spec.sensor_id.clone(),
        machine_id: spec.machine_id.clone(),
        kind: spec.kind,
        tick,
        value,
        seq_no,
    }
}
