//! Fixed three-decimal rendering for trace and report numbers.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::value::RawValue;

/// Formats `v` with exactly three decimals. Negative zero prints as `0.000`;
/// non-finite values print as `null`.
pub fn format3(v: f64) -> String {
    if !v.is_finite() {
        return "null".to_owned();
    }
    let s = format!("{v:.3}");
    if s == "-0.000" {
        "0.000".to_owned()
    } else {
        s
    }
}

/// `serialize_with` adapter emitting a JSON number with three decimals.
pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    let raw = RawValue::from_string(format3(*v)).map_err(serde::ser::Error::custom)?;
    raw.serialize(s)
}

/// Milliwatts rendered as watts with three decimals; exact for every integer input.
pub fn milliwatts_as_watts(mw: u64) -> String {
    format!("{}.{:03}", mw / 1000, mw % 1000)
}

/// `serialize_with` adapter writing a milliwatt count as watts.
pub fn serialize_mw<S: Serializer>(mw: &u64, s: S) -> Result<S::Ok, S::Error> {
    let raw = RawValue::from_string(milliwatts_as_watts(*mw)).map_err(serde::ser::Error::custom)?;
    raw.serialize(s)
}

/// Inverse of [`serialize_mw`].
pub fn deserialize_mw<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
    let w = f64::deserialize(d)?;
    if !(w >= 0.0 && w.is_finite()) {
        return Err(serde::de::Error::custom(format!("invalid power {w}")));
    }
    Ok((w * 1000.0).round() as u64)
}
