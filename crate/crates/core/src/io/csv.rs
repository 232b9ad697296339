//! Wide observation CSV (`timestamp,<node_id>,...`) and the long forecast
//! CSV (`timestamp,node_id,horizon_step,predicted,actual`).

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDateTime};

use crate::error::{Error, Result};
use crate::predictors::ForecastRecord;
use crate::tensor::{TimeAxis, TimeSeriesTensor};

const DATETIME_FORMATS: [&str; 4] = [
    "%Y-%m-%dT%H:%M:%S",
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%dT%H:%M",
    "%Y-%m-%d %H:%M",
];

/// Interval assumed for integer-indexed files, and for single-row files.
pub const DEFAULT_INTERVAL_SECONDS: u32 = 300;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Stamp {
    Index(i64),
    Calendar(NaiveDateTime),
}

fn parse_stamp(s: &str) -> Option<Stamp> {
    if let Ok(i) = s.parse::<i64>() {
        return Some(Stamp::Index(i));
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(Stamp::Calendar(dt.naive_utc()));
    }
    DATETIME_FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .map(Stamp::Calendar)
}

fn diff(a: Stamp, b: Stamp) -> Option<i64> {
    match (a, b) {
        (Stamp::Index(x), Stamp::Index(y)) => Some(y - x),
        (Stamp::Calendar(x), Stamp::Calendar(y)) => Some((y - x).num_seconds()),
        _ => None,
    }
}

fn csv_err(path: &Path, row: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Csv {
        path: path.display().to_string(),
        row,
        column,
        message: message.into(),
    }
}

/// Loads a wide CSV into an `(nodes, steps, 1)` tensor.
///
/// Rows and columns in errors are 1-based and count the header as row 1.
/// Timestamps are either all integers or all ISO-8601 date-times, strictly
/// increasing with a constant step.
pub fn load_csv(path: impl AsRef<Path>) -> Result<TimeSeriesTensor> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, path)
}

pub fn read_csv(reader: impl std::io::Read, path: &Path) -> Result<TimeSeriesTensor> {
    let mut rdr = ::csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(::csv::Trim::All)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        Some(r) => r.map_err(|e| csv_err(path, 1, 1, e.to_string()))?,
        None => return Err(csv_err(path, 1, 1, "empty file")),
    };
    if header.get(0) != Some("timestamp") {
        return Err(csv_err(path, 1, 1, "first header column must be `timestamp`"));
    }
    let node_ids: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    if node_ids.is_empty() {
        return Err(csv_err(path, 1, 2, "no node columns"));
    }
    for (i, id) in node_ids.iter().enumerate() {
        if id.is_empty() {
            return Err(csv_err(path, 1, i + 2, "empty node id"));
        }
        if node_ids[..i].contains(id) {
            return Err(csv_err(path, 1, i + 2, format!("duplicate node id {id:?}")));
        }
    }
    let width = header.len();

    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); node_ids.len()];
    let mut stamps: Vec<Stamp> = Vec::new();
    for (i, rec) in records.enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| csv_err(path, row, 1, e.to_string()))?;
        if rec.len() != width {
            return Err(csv_err(
                path,
                row,
                rec.len().min(width) + 1,
                format!("expected {width} fields, found {}", rec.len()),
            ));
        }
        let raw = rec.get(0).unwrap_or_default();
        let stamp = parse_stamp(raw)
            .ok_or_else(|| csv_err(path, row, 1, format!("unparseable timestamp {raw:?}")))?;
        if let Some(&prev) = stamps.last() {
            let step = diff(prev, stamp)
                .ok_or_else(|| csv_err(path, row, 1, "timestamp kind changes mid-file"))?;
            if step <= 0 {
                return Err(csv_err(path, row, 1, "timestamps are not strictly increasing"));
            }
            if stamps.len() >= 2 {
                let expected = diff(stamps[0], stamps[1]).unwrap_or_default();
                if step != expected {
                    return Err(csv_err(
                        path,
                        row,
                        1,
                        format!("timestamp step {step} differs from {expected} (gap or jitter)"),
                    ));
                }
            }
        }
        stamps.push(stamp);
        for (c, col) in columns.iter_mut().enumerate() {
            let cell = rec.get(c + 1).unwrap_or_default();
            if cell.is_empty() {
                return Err(csv_err(path, row, c + 2, "missing value"));
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| csv_err(path, row, c + 2, format!("non-numeric value {cell:?}")))?;
            if !v.is_finite() {
                return Err(csv_err(path, row, c + 2, format!("non-finite value {cell:?}")));
            }
            col.push(v);
        }
    }
    if stamps.is_empty() {
        return Err(csv_err(path, 2, 1, "no data rows"));
    }
    let step = (stamps.len() >= 2).then(|| diff(stamps[0], stamps[1]).unwrap_or_default());
    let (axis, interval) = match stamps[0] {
        Stamp::Index(start) => (
            TimeAxis::Index {
                start,
                step: step.unwrap_or(1),
            },
            DEFAULT_INTERVAL_SECONDS,
        ),
        Stamp::Calendar(start) => {
            let secs = step.unwrap_or(DEFAULT_INTERVAL_SECONDS as i64);
            let interval = u32::try_from(secs)
                .map_err(|_| csv_err(path, 3, 1, format!("interval {secs}s out of range")))?;
            (TimeAxis::Calendar { start }, interval)
        }
    };
    let steps = stamps.len();
    let values = columns.into_iter().flatten().collect();
    Ok(TimeSeriesTensor::from_streams(node_ids, steps, 1, values, interval)?.with_time_axis(axis))
}

/// Writes a single-feature tensor as a wide CSV.
pub fn save_csv(series: &TimeSeriesTensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(series, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn write_csv(series: &TimeSeriesTensor, mut out: impl Write) -> std::io::Result<()> {
    if series.features() != 1 {
        return Err(std::io::Error::new(
            std::io::ErrorKind::InvalidInput,
            format!("wide CSV holds one feature, tensor has {}", series.features()),
        ));
    }
    write!(out, "timestamp")?;
    for id in series.node_ids() {
        write!(out, ",{id}")?;
    }
    writeln!(out)?;
    for t in 0..series.steps() {
        write!(out, "{}", series.timestamp(t))?;
        for n in 0..series.nodes() {
            write!(out, ",{}", series.get(n, t, 0))?;
        }
        writeln!(out)?;
    }
    out.flush()
}

/// One line of a forecast CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastRow {
    pub timestamp: String,
    pub node_id: String,
    pub horizon_step: usize,
    pub predicted: f64,
    pub actual: Option<f64>,
}

pub fn forecast_rows(records: &[ForecastRecord], series: &TimeSeriesTensor) -> Vec<ForecastRow> {
    records
        .iter()
        .map(|r| ForecastRow {
            timestamp: series.timestamp(r.target_step),
            node_id: series.node_ids()[r.node].clone(),
            horizon_step: r.horizon_step,
            predicted: r.predicted,
            actual: r.actual,
        })
        .collect()
}

/// Writes `timestamp,node_id,horizon_step,predicted,actual`; an unknown
/// actual is left empty.
pub fn write_forecast_csv(rows: &[ForecastRow], mut out: impl Write) -> std::io::Result<()> {
    writeln!(out, "timestamp,node_id,horizon_step,predicted,actual")?;
    for r in rows {
        let actual = r.actual.map(|v| v.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{actual}",
            r.timestamp, r.node_id, r.horizon_step, r.predicted
        )?;
    }
    out.flush()
}

pub fn save_forecast_csv(rows: &[ForecastRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_forecast_csv(rows, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn load_forecast_csv(path: impl AsRef<Path>) -> Result<Vec<ForecastRow>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = ::csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(::csv::Trim::All)
        .from_reader(file);
    let header = rdr
        .headers()
        .map_err(|e| csv_err(path, 1, 1, e.to_string()))?
        .clone();
    let expected = ["timestamp", "node_id", "horizon_step", "predicted", "actual"];
    if header.iter().ne(expected) {
        return Err(csv_err(path, 1, 1, format!("header must be {}", expected.join(","))));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| csv_err(path, row, 1, e.to_string()))?;
        if rec.len() != 5 {
            return Err(csv_err(path, row, rec.len().min(5) + 1, "expected 5 fields"));
        }
        let num = |c: usize| -> Result<f64> {
            let cell = &rec[c];
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(csv_err(path, row, c + 1, format!("bad number {cell:?}"))),
            }
        };
        let horizon_step = rec[2]
            .parse::<usize>()
            .ok()
            .filter(|&s| s >= 1)
            .ok_or_else(|| csv_err(path, row, 3, format!("bad horizon step {:?}", &rec[2])))?;
        rows.push(ForecastRow {
            timestamp: rec[0].to_string(),
            node_id: rec[1].to_string(),
            horizon_step,
            predicted: num(3)?,
            actual: if rec[4].is_empty() { None } else { Some(num(4)?) },
        });
    }
    Ok(rows)
}
