//! Sensor replay files: one reading per line, `<sensor_id> <value> <timestamp>`,
//! timestamps in seconds (up to millisecond precision). Blank lines and lines
//! starting with `#` are ignored.

use std::fmt::Write;

use thiserror::Error;

use super::SensorReading;
use crate::Timestamp;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("replay line {line}: {message}")]
pub struct ReplayError {
    pub line: usize,
    pub message: String,
}

pub fn parse_replay(text: &str) -> Result<Vec<SensorReading>, ReplayError> {
    let mut readings = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| ReplayError { line: n + 1, message };
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [sensor, value, at] = fields[..] else {
            return Err(err(format!("expected 3 fields, found {}", fields.len())));
        };
        let mut chars = value.chars();
        let (Some(value), None) = (chars.next(), chars.next()) else {
            return Err(err(format!("value {value:?} is not a single character")));
        };
        let at = parse_seconds(at).ok_or_else(|| err(format!("invalid timestamp {at:?}")))?;
        readings.push(SensorReading::new(sensor, value, at));
    }
    Ok(readings)
}

fn parse_seconds(s: &str) -> Option<Timestamp> {
    let (whole, frac) = s.split_once('.').unwrap_or((s, ""));
    if whole.is_empty() || !whole.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    if frac.len() > 3 || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let whole: u64 = whole.parse().ok()?;
    let millis: u64 = if frac.is_empty() { 0 } else { format!("{frac:0<3}").parse().ok()? };
    whole.checked_mul(1000)?.checked_add(millis).map(Timestamp)
}

pub fn format_replay(readings: &[SensorReading]) -> String {
    let mut out = String::new();
    for r in readings {
        let _ = writeln!(out, "{} {} {}", r.sensor_id, r.value, r.at);
    }
    out
}
