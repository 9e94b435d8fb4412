//! Trip-record parsing and aggregation to the node-by-hour demand tensor.

use std::collections::BTreeMap;
use std::io::Read;

use chrono::{DateTime, Duration, NaiveDateTime, TimeZone, Utc};

use crate::error::{Error, Result};

use super::demand::DemandTensor;

/// One trip: a pickup timestamp and an opaque zone identifier. Only pickups
/// matter for origin-demand forecasting.
#[derive(Debug, Clone, PartialEq)]
pub struct TripRecord {
    pub pickup: DateTime<Utc>,
    pub zone: String,
}

/// A line that failed to parse, kept for reporting.
#[derive(Debug, Clone)]
pub struct RejectedLine {
    pub line: u64,
    pub reason: String,
}

/// Result of reading a trip CSV: parsed records plus rejected lines.
#[derive(Debug, Default)]
pub struct TripReadOutcome {
    pub records: Vec<TripRecord>,
    pub rejects: Vec<RejectedLine>,
}

/// Counters produced by aggregation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AggregateStats {
    pub accepted: u64,
    pub outside_zones: u64,
    pub outside_range: u64,
}

fn parse_timestamp(raw: &str) -> Option<DateTime<Utc>> {
    if let Ok(dt) = DateTime::parse_from_rfc3339(raw) {
        return Some(dt.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S"] {
        if let Ok(naive) = NaiveDateTime::parse_from_str(raw, fmt) {
            return Some(Utc.from_utc_datetime(&naive));
        }
    }
    None
}

/// Read a trip CSV with header `pickup_datetime,pickup_zone`. Unparseable
/// rows are excluded and reported with their line number, never silently
/// dropped.
pub fn read_trip_csv<R: Read>(reader: R, path_label: &str) -> Result<TripReadOutcome> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Schema {
            path: path_label.to_string(),
            line: 1,
            detail: format!("cannot read header: {e}"),
        })?
        .clone();
    let dt_idx = headers.iter().position(|h| h.trim() == "pickup_datetime");
    let zone_idx = headers.iter().position(|h| h.trim() == "pickup_zone");
    let (dt_idx, zone_idx) = match (dt_idx, zone_idx) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(Error::Schema {
                path: path_label.to_string(),
                line: 1,
                detail: "expected header columns pickup_datetime,pickup_zone".into(),
            })
        }
    };

    let mut out = TripReadOutcome::default();
    for (row_no, row) in rdr.records().enumerate() {
        let line = row_no as u64 + 2; // header is line 1
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                out.rejects.push(RejectedLine {
                    line,
                    reason: format!("malformed row: {e}"),
                });
                continue;
            }
        };
        let raw_dt = row.get(dt_idx).unwrap_or("").trim();
        let raw_zone = row.get(zone_idx).unwrap_or("").trim();
        if raw_zone.is_empty() {
            out.rejects.push(RejectedLine {
                line,
                reason: "empty zone id".into(),
            });
            continue;
        }
        match parse_timestamp(raw_dt) {
            Some(ts) => out.records.push(TripRecord {
                pickup: ts,
                zone: raw_zone.to_string(),
            }),
            None => out.rejects.push(RejectedLine {
                line,
                reason: format!("unparseable timestamp '{raw_dt}'"),
            }),
        }
    }
    Ok(out)
}

/// Count trips into half-open intervals `[t, t + interval)` per zone.
///
/// The time range defaults to the span of the accepted records; when an
/// explicit range is given, records outside it are counted in the stats. The
/// zone order of the result follows `zones`.
pub fn aggregate_trips(
    records: &[TripRecord],
    zones: &[String],
    interval: Duration,
    range: Option<(DateTime<Utc>, DateTime<Utc>)>,
) -> Result<(DemandTensor, AggregateStats)> {
    if zones.is_empty() {
        return Err(Error::Validation("zone set is empty".into()));
    }
    let interval_secs = interval.num_seconds();
    if interval_secs <= 0 {
        return Err(Error::Validation("interval must be positive".into()));
    }
    let zone_index: BTreeMap<&str, usize> = zones
        .iter()
        .enumerate()
        .map(|(i, z)| (z.as_str(), i))
        .collect();

    let mut stats = AggregateStats::default();
    let mut in_zone: Vec<(&TripRecord, usize)> = Vec::with_capacity(records.len());
    for rec in records {
        match zone_index.get(rec.zone.as_str()) {
            Some(&i) => in_zone.push((rec, i)),
            None => stats.outside_zones += 1,
        }
    }

    let (start, end) = match range {
        Some((s, e)) => (s, e),
        None => {
            let min = in_zone.iter().map(|(r, _)| r.pickup).min();
            let max = in_zone.iter().map(|(r, _)| r.pickup).max();
            match (min, max) {
                (Some(a), Some(b)) => (a, b),
                _ => return Err(Error::Validation("zero total trips after filtering".into())),
            }
        }
    };
    // Align interval boundaries to epoch multiples so hourly counting lands
    // on calendar hours.
    let floored = start.timestamp().div_euclid(interval_secs) * interval_secs;
    let t0 = Utc
        .timestamp_opt(floored, 0)
        .single()
        .ok_or_else(|| Error::Validation("timestamp out of range".into()))?;
    let span = (end - t0).num_seconds();
    if span < 0 {
        return Err(Error::Validation("time range end precedes start".into()));
    }
    let t_len = (span / interval_secs) as usize + 1;

    let n = zones.len();
    let mut values = vec![0.0f64; n * t_len];
    for (rec, zi) in in_zone {
        let offset = (rec.pickup - t0).num_seconds();
        if offset < 0 || offset >= t_len as i64 * interval_secs {
            stats.outside_range += 1;
            continue;
        }
        let col = (offset / interval_secs) as usize;
        values[zi * t_len + col] += 1.0;
        stats.accepted += 1;
    }
    if stats.accepted == 0 {
        return Err(Error::Validation("zero total trips after filtering".into()));
    }

    let tensor = DemandTensor::new(zones.to_vec(), t0, interval, t_len, values)?;
    Ok((tensor, stats))
}
