//! Parsing of instants and durations given on the command line.

use std::time::Duration;

use agentmesh_store::Timestamp;
use chrono::{DateTime, NaiveDate};

/// Milliseconds since the epoch, an RFC 3339 date-time, or a `YYYY-MM-DD`
/// date taken as midnight UTC.
pub fn parse_instant(s: &str) -> Result<Timestamp, String> {
    if let Ok(ms) = s.parse::<u64>() {
        return Ok(ms);
    }
    let ms = if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        dt.timestamp_millis()
    } else if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        d.and_hms_opt(0, 0, 0).expect("midnight exists").and_utc().timestamp_millis()
    } else {
        return Err(format!("not a time: {s} (use epoch ms, RFC 3339 or YYYY-MM-DD)"));
    };
    u64::try_from(ms).map_err(|_| format!("{s} is before 1970"))
}

/// A duration such as `30d`, `24h` or `90min`.
pub fn parse_duration(s: &str) -> Result<Duration, String> {
    humantime::parse_duration(s).map_err(|e| format!("{s}: {e}"))
}

/// Like [`parse_duration`], with `off` meaning none.
pub fn parse_optional_duration(s: &str) -> Result<Option<Duration>, String> {
    if s.eq_ignore_ascii_case("off") {
        Ok(None)
    } else {
        parse_duration(s).map(Some)
    }
}

pub fn millis(d: Duration) -> u64 {
    u64::try_from(d.as_millis()).unwrap_or(u64::MAX)
}
