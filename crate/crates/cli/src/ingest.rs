//! Monthly station records: `year,month,value[,value]` CSV files and
//! `year,month` metadata logs.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use bmdl_core::{Metadata, SeriesData};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("ParseError: {0}")]
    Parse(String),
    #[error("GapError: {0}")]
    Gap(String),
    #[error("RangeError: {0}")]
    Range(String),
    #[error("cannot read {path}")]
    Io { path: String, source: std::io::Error },
}

/// A calendar month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct YearMonth {
    pub year: i32,
    pub month: u32,
}

impl YearMonth {
    fn ordinal(self) -> i64 {
        self.year as i64 * 12 + self.month as i64 - 1
    }

    /// Parses `YYYY-MM`.
    pub fn parse(s: &str) -> Option<Self> {
        let (y, m) = s.trim().split_once('-')?;
        let ym = YearMonth {
            year: y.parse().ok()?,
            month: m.parse().ok()?,
        };
        (1..=12).contains(&ym.month).then_some(ym)
    }
}

impl std::fmt::Display for YearMonth {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}-{:02}", self.year, self.month)
    }
}

/// Parsed station record. Time index t = 1 is the first row.
#[derive(Debug, Clone, PartialEq)]
pub struct StationRecord {
    pub start: YearMonth,
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl StationRecord {
    pub fn len(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// 1-based time index of a calendar month (may fall outside 1..=N).
    pub fn index_of(&self, ym: YearMonth) -> i64 {
        ym.ordinal() - self.start.ordinal() + 1
    }

    /// Calendar month of time index `t`.
    pub fn month_of(&self, t: usize) -> YearMonth {
        let o = self.start.ordinal() + t as i64 - 1;
        YearMonth {
            year: o.div_euclid(12) as i32,
            month: o.rem_euclid(12) as u32 + 1,
        }
    }
}

fn open(path: &Path) -> Result<String, IngestError> {
    let mut s = String::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_string(&mut s))
        .map_err(|source| IngestError::Io {
            path: path.display().to_string(),
            source,
        })?;
    Ok(s)
}

fn parse_month(record: &csv::StringRecord, line: u64) -> Result<YearMonth, IngestError> {
    let cell = |i: usize, what: &str| -> Result<&str, IngestError> {
        match record.get(i).map(str::trim) {
            Some(v) if !v.is_empty() => Ok(v),
            _ => Err(IngestError::Parse(format!("line {line}: missing {what}"))),
        }
    };
    let year = cell(0, "year")?;
    let month = cell(1, "month")?;
    let year: i32 = year
        .parse()
        .map_err(|_| IngestError::Parse(format!("line {line}: invalid year {year:?}")))?;
    let month: u32 = month
        .parse()
        .ok()
        .filter(|m| (1..=12).contains(m))
        .ok_or_else(|| IngestError::Parse(format!("line {line}: month {month:?} is not in 1..12")))?;
    Ok(YearMonth { year, month })
}

fn header_check(headers: &csv::StringRecord, min: usize, max: usize) -> Result<(), IngestError> {
    let h: Vec<String> = headers.iter().map(|s| s.trim().to_ascii_lowercase()).collect();
    if h.len() < min || h.len() > max || h[0] != "year" || h[1] != "month" {
        return Err(IngestError::Parse(format!(
            "line 1: expected header year,month{}; got {}",
            if max > 2 { ",value[,value]" } else { "" },
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    Ok(())
}

/// Parses a station CSV from text.
pub fn parse_series(text: &str) -> Result<StationRecord, IngestError> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| IngestError::Parse(format!("line 1: {e}")))?
        .clone();
    header_check(&headers, 3, 4)?;
    let width = headers.len() - 2;
    let names: Vec<String> = headers.iter().skip(2).map(|s| s.trim().to_string()).collect();

    let mut seen: HashMap<YearMonth, u64> = HashMap::new();
    let mut columns = vec![Vec::new(); width];
    let mut start: Option<YearMonth> = None;
    let mut prev: Option<(YearMonth, u64)> = None;
    for rec in reader.records() {
        let rec = rec.map_err(|e| IngestError::Parse(e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != width + 2 {
            return Err(IngestError::Parse(format!(
                "line {line}: expected {} cells, found {}",
                width + 2,
                rec.len()
            )));
        }
        let ym = parse_month(&rec, line)?;
        if let Some(first) = seen.insert(ym, line) {
            return Err(IngestError::Parse(format!(
                "lines {first} and {line}: duplicate month {ym}"
            )));
        }
        if let Some((p, pline)) = prev {
            let step = ym.ordinal() - p.ordinal();
            if step != 1 {
                return Err(IngestError::Gap(format!(
                    "lines {pline} and {line}: {p} is followed by {ym}; rows must be consecutive months"
                )));
            }
        }
        for (k, col) in columns.iter_mut().enumerate() {
            let raw = rec.get(k + 2).unwrap_or("").trim();
            let v: f64 = raw.parse().ok().filter(|v: &f64| v.is_finite()).ok_or_else(|| {
                IngestError::Parse(format!(
                    "line {line}: missing or invalid value {raw:?} in column {}",
                    names[k]
                ))
            })?;
            col.push(v);
        }
        start.get_or_insert(ym);
        prev = Some((ym, line));
    }
    let start = start.ok_or_else(|| IngestError::Parse("no data rows".into()))?;
    Ok(StationRecord { start, names, columns })
}

/// Parses a metadata log (`year,month` rows) into time indices of `record`.
pub fn parse_metadata(text: &str, record: &StationRecord, ar_order: usize) -> Result<Vec<usize>, IngestError> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| IngestError::Parse(format!("line 1: {e}")))?
        .clone();
    header_check(&headers, 2, 2)?;
    let mut times = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| IngestError::Parse(e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let ym = parse_month(&rec, line)?;
        let t = record.index_of(ym);
        let n = record.len() as i64;
        if t <= ar_order as i64 || t > n {
            return Err(IngestError::Range(format!(
                "line {line}: metadata month {ym} maps to t = {t}, outside {}..={n} ({} to {})",
                ar_order + 1,
                record.month_of(ar_order + 1),
                record.month_of(record.len())
            )));
        }
        times.push(t as usize);
    }
    times.sort_unstable();
    times.dedup();
    Ok(times)
}

/// Reads a station CSV and an optional metadata log.
pub fn ingest(
    series_path: &Path,
    metadata_path: Option<&Path>,
    period: usize,
    ar_order: usize,
) -> anyhow::Result<(StationRecord, SeriesData, Metadata)> {
    let record = parse_series(&open(series_path)?)?;
    let data = SeriesData::new(record.columns.clone(), period, ar_order)?;
    let metadata = match metadata_path {
        Some(p) => {
            let times = parse_metadata(&open(p)?, &record, ar_order)?;
            Metadata::new(times, record.len(), ar_order)?
        }
        None => Metadata::none(),
    };
    Ok((record, data, metadata))
}
