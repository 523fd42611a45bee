//! Run trace: typed records and their JSON-Lines encoding.
//!
//! Each line is one object whose first key is `kind`. Floats are written
//! with three decimals; power is carried as integer milliwatts so energy can
//! be recomputed exactly from the file.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::fixed;
use crate::plant::{Mode, SensorKind};
use crate::transport::{Hop, Qos};
use crate::Id;

pub const TRACE_FORMAT: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format: u32,
    pub config_hash: String,
    pub seed: u64,
    pub tick_ms: u64,
    pub ticks: u64,
    pub machines: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineStateRecord {
    pub tick: u64,
    pub machine: Id,
    pub mode: Mode,
    #[serde(rename = "power_w", serialize_with = "fixed::serialize_mw", deserialize_with = "fixed::deserialize_mw")]
    pub power_mw: u64,
    #[serde(serialize_with = "fixed::serialize")]
    pub temperature_c: f64,
    #[serde(serialize_with = "fixed::serialize")]
    pub pressure_kpa: f64,
    #[serde(serialize_with = "fixed::serialize")]
    pub wear: f64,
    #[serde(serialize_with = "fixed::serialize")]
    pub fire: f64,
    /// Production rate requested this tick, in units per hour.
    #[serde(serialize_with = "fixed::serialize")]
    pub demand_per_hour: f64,
    pub produced: u32,
    pub defective: u32,
    pub scrapped: u32,
    pub cooling: bool,
    pub sprinkler: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadingRecord {
    pub tick: u64,
    pub sensor: Id,
    pub machine: Id,
    pub sensor_kind: SensorKind,
    pub seq: u64,
    #[serde(serialize_with = "fixed::serialize")]
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeliveryRecord {
    pub tick: u64,
    pub msg_id: u64,
    pub topic: Id,
    pub hop: Hop,
    pub qos: Qos,
    pub dup: bool,
    pub published_tick: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyRecord {
    pub tick: u64,
    pub machine: Id,
    pub sensor: Id,
    #[serde(serialize_with = "fixed::serialize")]
    pub observed: f64,
    #[serde(serialize_with = "fixed::serialize")]
    pub rolling_mean: f64,
    #[serde(serialize_with = "fixed::serialize")]
    pub rolling_std: f64,
    #[serde(serialize_with = "fixed::serialize")]
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommandSource {
    External,
    Edge,
    Cloud,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandRecord {
    pub tick: u64,
    pub source: CommandSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub machine: Option<Id>,
    pub command: String,
    pub reason: String,
}

/// Run totals kept by the simulator while it runs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KpiAccumulatorRecord {
    pub tick: u64,
    pub energy_uj: Vec<u64>,
    pub downtime_ticks: Vec<u64>,
    pub produced: Vec<u64>,
    pub defective: Vec<u64>,
    pub scrapped: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TraceRecord {
    Header(Header),
    MachineState(MachineStateRecord),
    Reading(ReadingRecord),
    Delivery(DeliveryRecord),
    Anomaly(AnomalyRecord),
    Command(CommandRecord),
    KpiAccumulator(KpiAccumulatorRecord),
}

impl TraceRecord {
    pub fn kind(&self) -> &'static str {
        match self {
            TraceRecord::Header(_) => "header",
            TraceRecord::MachineState(_) => "machine-state",
            TraceRecord::Reading(_) => "reading",
            TraceRecord::Delivery(_) => "envelope-delivery",
            TraceRecord::Anomaly(_) => "anomaly",
            TraceRecord::Command(_) => "command",
            TraceRecord::KpiAccumulator(_) => "kpi-accumulator",
        }
    }

    /// One JSON object, without a trailing newline.
    pub fn to_json(&self) -> String {
        let body = match self {
            TraceRecord::Header(r) => serde_json::to_string(r),
            TraceRecord::MachineState(r) => serde_json::to_string(r),
            TraceRecord::Reading(r) => serde_json::to_string(r),
            TraceRecord::Delivery(r) => serde_json::to_string(r),
            TraceRecord::Anomaly(r) => serde_json::to_string(r),
            TraceRecord::Command(r) => serde_json::to_string(r),
            TraceRecord::KpiAccumulator(r) => serde_json::to_string(r),
        }
        .expect("trace records serialize");
        let rest = &body[1..];
        if rest == "}" {
            format!("{{\"kind\":\"{}\"}}", self.kind())
        } else {
            format!("{{\"kind\":\"{}\",{}", self.kind(), rest)
        }
    }

    pub fn from_json(line: &str) -> Result<TraceRecord> {
        let mut value: Value = serde_json::from_str(line)?;
        let kind = value
            .as_object_mut()
            .and_then(|o| o.remove("kind"))
            .and_then(|k| k.as_str().map(str::to_owned))
            .ok_or_else(|| Error::Trace("record without a kind".into()))?;
        Ok(match kind.as_str() {
            "header" => TraceRecord::Header(serde_json::from_value(value)?),
            "machine-state" => TraceRecord::MachineState(serde_json::from_value(value)?),
            "reading" => TraceRecord::Reading(serde_json::from_value(value)?),
            "envelope-delivery" => TraceRecord::Delivery(serde_json::from_value(value)?),
            "anomaly" => TraceRecord::Anomaly(serde_json::from_value(value)?),
            "command" => TraceRecord::Command(serde_json::from_value(value)?),
            "kpi-accumulator" => TraceRecord::KpiAccumulator(serde_json::from_value(value)?),
            other => return Err(Error::Trace(format!("unknown record kind {other:?}"))),
        })
    }
}

/// Destination for trace records, in emission order.
pub trait TraceSink {
    fn record(&mut self, record: TraceRecord) -> Result<()>;
}

impl TraceSink for Vec<TraceRecord> {
    fn record(&mut self, record: TraceRecord) -> Result<()> {
        self.push(record);
        Ok(())
    }
}

/// Discards everything.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullSink;

impl TraceSink for NullSink {
    fn record(&mut self, _: TraceRecord) -> Result<()> {
        Ok(())
    }
}

/// Writes JSON Lines.
pub struct JsonlWriter<W: Write> {
    out: BufWriter<W>,
    path: String,
}

impl JsonlWriter<File> {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(JsonlWriter {
            out: BufWriter::new(file),
            path: path.display().to_string(),
        })
    }
}

impl<W: Write> JsonlWriter<W> {
    pub fn new(out: W) -> Self {
        JsonlWriter {
            out: BufWriter::new(out),
            path: "<stream>".into(),
        }
    }

    pub fn finish(mut self) -> Result<W> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))?;
        let path = self.path.clone();
        self.out.into_inner().map_err(|e| Error::io(path, e.into_error()))
    }
}

impl<W: Write> TraceSink for JsonlWriter<W> {
    fn record(&mut self, record: TraceRecord) -> Result<()> {
        let line = record.to_json();
        self.out
            .write_all(line.as_bytes())
            .and_then(|_| self.out.write_all(b"\n"))
            .map_err(|e| Error::io(&self.path, e))
    }
}

/// Sends each record to two sinks.
pub struct Tee<'a, A: TraceSink + ?Sized, B: TraceSink + ?Sized>(pub &'a mut A, pub &'a mut B);

impl<A: TraceSink + ?Sized, B: TraceSink + ?Sized> TraceSink for Tee<'_, A, B> {
    fn record(&mut self, record: TraceRecord) -> Result<()> {
        self.0.record(record.clone())?;
        self.1.record(record)
    }
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<Vec<TraceRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        out.push(
            TraceRecord::from_json(&line)
                .map_err(|e| Error::Trace(format!("{}:{}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state() -> MachineStateRecord {
        MachineStateRecord {
            tick: 7,
            machine: "m1".into(),
            mode: Mode::Running,
            power_mw: 4_123_457,
            temperature_c: 55.12345,
            pressure_kpa: 300.0,
            wear: 0.01,
            fire: 5.2,
            demand_per_hour: 180.0,
            produced: 1,
            defective: 0,
            scrapped: 0,
            cooling: false,
            sprinkler: false,
        }
    }

    #[test]
    fn machine_state_line_is_stable() {
        let line = TraceRecord::MachineState(state()).to_json();
        assert_eq!(
            line,
            r#"{"kind":"machine-state","tick":7,"machine":"m1","mode":"RUNNING","power_w":4123.457,"temperature_c":55.123,"pressure_kpa":300.000,"wear":0.010,"fire":5.200,"demand_per_hour":180.000,"produced":1,"defective":0,"scrapped":0,"cooling":false,"sprinkler":false}"#
        );
        match TraceRecord::from_json(&line).unwrap() {
            TraceRecord::MachineState(r) => assert_eq!(r.power_mw, 4_123_457),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn every_kind_round_trips() {
        let records = vec![
            TraceRecord::Header(Header {
                format: TRACE_FORMAT,
                config_hash: "abc".into(),
                seed: 1,
                tick_ms: 1000,
                ticks: 10,
                machines: vec!["m1".into()],
            }),
            TraceRecord::Command(CommandRecord {
                tick: 3,
                source: CommandSource::Edge,
                machine: Some("m1".into()),
                command: "sprinkler:on".into(),
                reason: "fire".into(),
            }),
            TraceRecord::KpiAccumulator(KpiAccumulatorRecord {
                tick: 9,
                energy_uj: vec![1, 2],
                downtime_ticks: vec![0, 3],
                produced: vec![4, 5],
                defective: vec![0, 1],
                scrapped: vec![0, 0],
            }),
            TraceRecord::Delivery(DeliveryRecord {
                tick: 4,
                msg_id: 2,
                topic: "plant/m1/fire".into(),
                hop: Hop::ToCloud,
                qos: Qos::AtLeastOnce,
                dup: true,
                published_tick: 1,
            }),
        ];
        let mut w = JsonlWriter::new(Vec::new());
        for r in &records {
            w.record(r.clone()).unwrap();
        }
        let bytes = w.finish().unwrap();
        let text = String::from_utf8(bytes).unwrap();
        let back: Vec<_> = text.lines().map(|l| TraceRecord::from_json(l).unwrap()).collect();
        assert_eq!(back, records);
    }

    #[test]
    fn rejects_unknown_kind() {
        assert!(TraceRecord::from_json(r#"{"kind":"nope"}"#).is_err());
        assert!(TraceRecord::from_json(r#"{"tick":1}"#).is_err());
    }
}
