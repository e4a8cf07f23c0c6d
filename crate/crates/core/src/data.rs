//! Hourly load series and long-format CSV ingestion.
//!
//! Input schema (UTF-8, one header line):
//!
//! ```text
//! timestamp,series_id,load_mw
//! 2018-01-01T00:00:00Z,PL,15234.5
//! ```
//!
//! Ingestion repairs the grid: repeated hours are averaged, missing hours
//! and non-positive loads are linearly interpolated (runs longer than a day
//! are rejected), and each series is trimmed to start on a Monday 00:00 UTC.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{DateTime, Datelike, Duration, NaiveDate, NaiveDateTime, TimeZone, Timelike, Utc, Weekday};
use log::warn;
use thiserror::Error;

pub const CSV_HEADER: [&str; 3] = ["timestamp", "series_id", "load_mw"];
/// Longest run of missing or invalid hours that is interpolated.
pub const MAX_GAP_HOURS: i64 = 24;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("expected header `timestamp,series_id,load_mw`, found `{0}`")]
    Header(String),
    #[error("line {line}: {reason}")]
    Parse { line: u64, reason: String },
    #[error("series {series}: gap of {hours} h between {from} and {to}")]
    Gap {
        series: String,
        from: DateTime<Utc>,
        to: DateTime<Utc>,
        hours: i64,
    },
    #[error("series {0}: no Monday 00:00 with data after it")]
    NoMonday(String),
    #[error("series {0}: no positive loads")]
    NoValidLoads(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadSeries {
    pub id: String,
    /// Timestamp of `values[0]`, top of an hour.
    pub start: DateTime<Utc>,
    /// Contiguous hourly loads in MW.
    pub values: Vec<f64>,
}

impl LoadSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn timestamp(&self, hour: usize) -> DateTime<Utc> {
        self.start + Duration::hours(hour as i64)
    }

    pub fn date_of_hour(&self, hour: usize) -> NaiveDate {
        self.timestamp(hour).date_naive()
    }

    /// Hour offset of `ts`, when it is on this series' grid (it may lie past
    /// the last value).
    pub fn hour_of(&self, ts: DateTime<Utc>) -> Option<usize> {
        let d = ts - self.start;
        if d < Duration::zero() || d.num_seconds() % 3600 != 0 {
            return None;
        }
        Some(d.num_hours() as usize)
    }

    /// The first `hours` values.
    pub fn truncated(&self, hours: usize) -> LoadSeries {
        LoadSeries {
            id: self.id.clone(),
            start: self.start,
            values: self.values[..hours.min(self.values.len())].to_vec(),
        }
    }
}

pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    let s = s.trim();
    let ts = if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        t.with_timezone(&Utc)
    } else {
        ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"]
            .iter()
            .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
            .map(|n| Utc.from_utc_datetime(&n))?
    };
    (ts.minute() == 0 && ts.second() == 0 && ts.nanosecond() == 0).then_some(ts)
}

pub fn format_timestamp(ts: DateTime<Utc>) -> String {
    ts.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

pub fn load_csv(path: &Path) -> Result<Vec<LoadSeries>, DataError> {
    let file = File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_csv(file)
}

/// Hours since the Unix epoch keyed to the summed load and sample count.
type HourBuckets = BTreeMap<i64, (f64, u32)>;

pub fn read_csv<R: Read>(reader: R) -> Result<Vec<LoadSeries>, DataError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(DataError::Header(header.iter().collect::<Vec<_>>().join(",")));
    }
    let mut by_series: BTreeMap<String, HourBuckets> = BTreeMap::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let parse_err = |reason: String| DataError::Parse { line, reason };
        if record.len() != 3 {
            return Err(parse_err(format!("expected 3 fields, found {}", record.len())));
        }
        let ts = parse_timestamp(&record[0])
            .ok_or_else(|| parse_err(format!("bad hourly timestamp {:?}", &record[0])))?;
        let load: f64 = record[2]
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| parse_err(format!("bad load value {:?}", &record[2])))?;
        let slot = by_series
            .entry(record[1].to_string())
            .or_default()
            .entry(ts.timestamp() / 3600)
            .or_insert((0.0, 0));
        slot.0 += load;
        slot.1 += 1;
    }
    by_series
        .into_iter()
        .map(|(id, buckets)| build_series(id, buckets))
        .collect()
}

fn hour_to_ts(h: i64) -> DateTime<Utc> {
    Utc.timestamp_opt(h * 3600, 0).single().expect("hour index in range")
}

fn build_series(id: String, buckets: HourBuckets) -> Result<LoadSeries, DataError> {
    let (&first, _) = buckets.first_key_value().ok_or_else(|| DataError::NoValidLoads(id.clone()))?;
    let (&last, _) = buckets.last_key_value().expect("non-empty");
    let mut raw: Vec<Option<f64>> = vec![None; (last - first + 1) as usize];
    for (h, (sum, n)) in &buckets {
        let v = sum / *n as f64;
        if *n > 1 {
            log::debug!("series {id}: averaged {n} samples at {}", hour_to_ts(*h));
        }
        if v > 0.0 {
            raw[(h - first) as usize] = Some(v);
        } else {
            warn!("series {id}: non-positive load {v} at {} replaced by interpolation", hour_to_ts(*h));
        }
    }

    let known: Vec<usize> = (0..raw.len()).filter(|&i| raw[i].is_some()).collect();
    if known.is_empty() {
        return Err(DataError::NoValidLoads(id));
    }
    let mut values = vec![0.0; raw.len()];
    for &i in &known {
        values[i] = raw[i].unwrap();
    }
    // leading / trailing invalid hours copy the nearest valid load
    let (lo, hi) = (known[0], *known.last().unwrap());
    for i in 0..lo {
        values[i] = values[lo];
    }
    for i in hi + 1..values.len() {
        values[i] = values[hi];
    }
    for pair in known.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let missing = (b - a - 1) as i64;
        if missing == 0 {
            continue;
        }
        if missing > MAX_GAP_HOURS {
            return Err(DataError::Gap {
                series: id,
                from: hour_to_ts(first + a as i64),
                to: hour_to_ts(first + b as i64),
                hours: missing,
            });
        }
        let (va, vb) = (values[a], values[b]);
        for i in a + 1..b {
            let w = (i - a) as f64 / (b - a) as f64;
            values[i] = va + w * (vb - va);
        }
    }

    let start = hour_to_ts(first);
    let skip = (0..values.len())
        .find(|&i| {
            let ts = start + Duration::hours(i as i64);
            ts.weekday() == Weekday::Mon && ts.hour() == 0
        })
        .ok_or_else(|| DataError::NoMonday(id.clone()))?;
    Ok(LoadSeries {
        id,
        start: start + Duration::hours(skip as i64),
        values: values.split_off(skip),
    })
}

pub fn write_csv<W: Write>(series: &[LoadSeries], writer: W) -> Result<(), DataError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for s in series {
        for (i, v) in s.values.iter().enumerate() {
            w.write_record([format_timestamp(s.timestamp(i)), s.id.clone(), v.to_string()])?;
        }
    }
    w.flush().map_err(|source| DataError::Io {
        path: "<csv output>".into(),
        source,
    })?;
    Ok(())
}

pub fn save_csv(series: &[LoadSeries], path: &Path) -> Result<(), DataError> {
    let file = File::create(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    write_csv(series, file)
}
