//! Per-meter 15-minute reading series: CSV loading and synthetic profiles.
//!
//! CSV layout is `meter_id,timestamp_iso8601,active_kwh[,reactive_kvarh]`.
//! Timestamps map to interval indices as `unix_seconds / interval_seconds`
//! and must sit on an interval boundary.

mod synth;

pub use synth::{synthesize_readings, ProfileParams};

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime, SecondsFormat, Utc};
use thiserror::Error;

pub const DEFAULT_INTERVAL_SECONDS: u64 = 900;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("meter {meter_id}: missing intervals {missing:?}")]
    Gap { meter_id: String, missing: Vec<u64> },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, IngestError>;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Reading {
    pub interval: u64,
    pub active_kwh: f64,
    pub reactive_kvarh: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReadingSeries {
    pub meter_id: String,
    pub interval_seconds: u64,
    /// Strictly increasing, gap-free interval indices.
    pub readings: Vec<Reading>,
}

impl ReadingSeries {
    pub fn active(&self) -> impl Iterator<Item = f64> + '_ {
        self.readings.iter().map(|r| r.active_kwh)
    }
}

/// Expected column layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Schema {
    pub interval_seconds: u64,
}

impl Default for Schema {
    fn default() -> Self {
        Self {
            interval_seconds: DEFAULT_INTERVAL_SECONDS,
        }
    }
}

const HEADER: [&str; 3] = ["meter_id", "timestamp_iso8601", "active_kwh"];
const REACTIVE: &str = "reactive_kvarh";

pub fn load_readings(path: &Path, schema: &Schema) -> Result<Vec<ReadingSeries>> {
    let file = File::open(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_readings(file, schema)
}

fn parse_timestamp(s: &str) -> Option<i64> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.timestamp());
    }
    NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S")
        .ok()
        .map(|t| t.and_utc().timestamp())
}

fn parse_energy(field: &str, column: &str, line: u64) -> Result<f64> {
    let err = |message: String| IngestError::Parse { line, message };
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| err(format!("{column} {field:?} is not a number")))?;
    if !v.is_finite() || v < 0.0 {
        return Err(err(format!("{column} {field:?} must be a non-negative finite value")));
    }
    Ok(v)
}

/// Parses CSV rows into one series per meter, in order of first appearance.
pub fn read_readings<R: Read>(input: R, schema: &Schema) -> Result<Vec<ReadingSeries>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(input);
    let header = rdr.headers()?.clone();
    let cols: Vec<&str> = header.iter().map(str::trim).collect();
    let with_reactive = match cols.as_slice() {
        [a, b, c] if [*a, *b, *c] == HEADER => false,
        [a, b, c, d] if [*a, *b, *c] == HEADER && *d == REACTIVE => true,
        _ => {
            return Err(IngestError::Parse {
                line: 1,
                message: format!(
                    "header {cols:?} does not match meter_id,timestamp_iso8601,active_kwh[,reactive_kvarh]"
                ),
            })
        }
    };
    let width = if with_reactive { 4 } else { 3 };

    let mut order: Vec<String> = Vec::new();
    let mut rows: BTreeMap<String, Vec<(Reading, u64)>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let err = |message: String| IngestError::Parse { line, message };
        if rec.len() != width {
            return Err(err(format!("expected {width} fields, found {}", rec.len())));
        }
        let meter_id = rec[0].trim().to_owned();
        if meter_id.is_empty() {
            return Err(err("empty meter_id".into()));
        }
        let ts = parse_timestamp(rec[1].trim()).ok_or_else(|| err(format!("bad timestamp {:?}", &rec[1])))?;
        if ts < 0 || !(ts as u64).is_multiple_of(schema.interval_seconds) {
            return Err(err(format!(
                "timestamp {:?} is not on a {}-second interval boundary",
                &rec[1], schema.interval_seconds
            )));
        }
        let active_kwh = parse_energy(&rec[2], "active_kwh", line)?;
        let reactive_kvarh = match with_reactive {
            true if !rec[3].trim().is_empty() => Some(parse_energy(&rec[3], REACTIVE, line)?),
            _ => None,
        };
        if !rows.contains_key(&meter_id) {
            order.push(meter_id.clone());
        }
        rows.entry(meter_id).or_default().push((
            Reading {
                interval: ts as u64 / schema.interval_seconds,
                active_kwh,
                reactive_kvarh,
            },
            line,
        ));
    }

    order
        .into_iter()
        .map(|meter_id| {
            let mut rs = rows.remove(&meter_id).unwrap_or_default();
            rs.sort_by_key(|(r, _)| r.interval);
            if let Some(w) = rs.windows(2).find(|w| w[0].0.interval == w[1].0.interval) {
                return Err(IngestError::Parse {
                    line: w[1].1,
                    message: format!("duplicate interval {} for meter {meter_id}", w[1].0.interval),
                });
            }
            let missing: Vec<u64> = rs
                .windows(2)
                .flat_map(|w| w[0].0.interval + 1..w[1].0.interval)
                .collect();
            if !missing.is_empty() {
                return Err(IngestError::Gap { meter_id, missing });
            }
            Ok(ReadingSeries {
                meter_id,
                interval_seconds: schema.interval_seconds,
                readings: rs.into_iter().map(|(r, _)| r).collect(),
            })
        })
        .collect()
}

/// Writes series in the loader's format. The reactive column is emitted when
/// any reading carries one.
pub fn write_readings<W: Write>(series: &[ReadingSeries], out: W) -> Result<()> {
    let with_reactive = series
        .iter()
        .flat_map(|s| &s.readings)
        .any(|r| r.reactive_kvarh.is_some());
    let mut w = csv::Writer::from_writer(out);
    let mut header = HEADER.to_vec();
    if with_reactive {
        header.push(REACTIVE);
    }
    w.write_record(&header)?;
    for s in series {
        for r in &s.readings {
            let secs = (r.interval * s.interval_seconds) as i64;
            let ts = DateTime::<Utc>::from_timestamp(secs, 0)
                .expect("interval timestamp in range")
                .to_rfc3339_opts(SecondsFormat::Secs, true);
            let mut row = vec![s.meter_id.clone(), ts, r.active_kwh.to_string()];
            if with_reactive {
                row.push(r.reactive_kvarh.map(|v| v.to_string()).unwrap_or_default());
            }
            w.write_record(&row)?;
        }
    }
    w.flush().map_err(|source| IngestError::Io {
        path: "<output>".into(),
        source,
    })?;
    Ok(())
}
