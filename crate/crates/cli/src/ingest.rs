//! Reads a Goyal–Welch style monthly CSV into the excess-return and
//! predictor series.

use std::path::Path;

use switchfm::series::TimeSeries;

use crate::config::{ColumnMap, EmpiricalConfig, Predictor};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("cannot read {path}: {msg}")]
    Read { path: String, msg: String },

    #[error("missing column '{name}' (role: {role})")]
    MissingColumn { role: &'static str, name: String },

    #[error("line {line}: cannot parse '{value}' in column '{column}'")]
    Unparseable { line: usize, column: String, value: String },

    #[error("line {line}: bad date '{value}' (expected yyyymm)")]
    BadDate { line: usize, value: String },

    #[error("line {line}: date {found} does not follow {previous}; monthly rows must be contiguous")]
    NotContiguous { line: usize, previous: i64, found: i64 },

    #[error("line {line}: missing value in column '{column}' inside the sample span")]
    InteriorMissing { line: usize, column: String },

    #[error("line {line}: {what} must be positive to take logs, got {value}")]
    NonPositive { line: usize, what: String, value: f64 },

    #[error("no complete rows in the requested span")]
    Empty,

    #[error(transparent)]
    Core(#[from] switchfm::Error),
}

/// Ingested series plus bookkeeping for the report header.
#[derive(Debug, Clone)]
pub struct Ingested {
    /// Excess return, one value per retained month.
    pub y: TimeSeries,
    /// Predictor on the same months.
    pub x: TimeSeries,
    pub first_period: i64,
    pub last_period: i64,
    /// Incomplete rows dropped at the start and at the end of the span.
    pub trimmed: (usize, usize),
}

fn is_missing(s: &str) -> bool {
    matches!(s, "" | "NA" | "N/A" | "NaN" | "nan" | "." | "null")
}

/// Parses a number, allowing thousands separators; `None` when missing.
fn number(raw: &str, line: usize, column: &str) -> Result<Option<f64>, IngestError> {
    let s = raw.trim();
    if is_missing(s) {
        return Ok(None);
    }
    let cleaned: String = s.chars().filter(|&c| c != ',').collect();
    match cleaned.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        Ok(_) => Ok(None),
        Err(_) => Err(IngestError::Unparseable {
            line,
            column: column.to_string(),
            value: s.to_string(),
        }),
    }
}

fn next_month(p: i64) -> i64 {
    if p % 100 == 12 {
        (p / 100 + 1) * 100 + 1
    } else {
        p + 1
    }
}

/// Input columns needed for a predictor, as `(role, name)`.
fn required(cols: &ColumnMap, predictor: &Predictor) -> Vec<(&'static str, String)> {
    let mut r = vec![
        ("market return", cols.market_return.clone()),
        ("risk-free rate", cols.riskfree.clone()),
    ];
    match predictor {
        Predictor::DividendPrice => {
            r.push(("dividends (D12)", cols.dividends.clone()));
            r.push(("price index", cols.price.clone()));
        }
        Predictor::EarningsPrice => {
            r.push(("earnings (E12)", cols.earnings.clone()));
            r.push(("price index", cols.price.clone()));
        }
        Predictor::BookToMarket => r.push(("book-to-market", cols.book_to_market.clone())),
        Predictor::Custom(c) => r.push(("custom predictor", c.clone())),
    }
    r
}

fn log_ratio(num: f64, den: f64, line: usize, what: &str) -> Result<f64, IngestError> {
    for v in [num, den] {
        if v <= 0.0 {
            return Err(IngestError::NonPositive {
                line,
                what: what.to_string(),
                value: v,
            });
        }
    }
    Ok(num.ln() - den.ln())
}

pub fn ingest(cfg: &EmpiricalConfig) -> Result<Ingested, IngestError> {
    ingest_file(&cfg.input_path, &cfg.columns, &cfg.predictor, cfg.date_span)
}

pub fn ingest_file(
    path: &Path,
    cols: &ColumnMap,
    predictor: &Predictor,
    span: (Option<i64>, Option<i64>),
) -> Result<Ingested, IngestError> {
    let read_err = |e: csv::Error| IngestError::Read {
        path: path.display().to_string(),
        msg: e.to_string(),
    };
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_path(path)
        .map_err(read_err)?;
    let header = rdr.headers().map_err(read_err)?.clone();
    let find = |role: &'static str, name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| IngestError::MissingColumn {
                role,
                name: name.to_string(),
            })
    };
    let date_idx = find("date", &cols.date)?;
    let req = required(cols, predictor);
    let idx: Vec<usize> = req.iter().map(|(role, name)| find(role, name)).collect::<Result<_, _>>()?;

    // (line, period, values or the first missing column)
    let mut rows: Vec<(usize, i64, Result<(f64, f64), String>)> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(read_err)?;
        let line = i + 2;
        let raw_date = rec.get(date_idx).unwrap_or("");
        let period: i64 = raw_date.parse().map_err(|_| IngestError::BadDate {
            line,
            value: raw_date.to_string(),
        })?;
        if !(1..=12).contains(&(period % 100)) {
            return Err(IngestError::BadDate {
                line,
                value: raw_date.to_string(),
            });
        }
        if span.0.is_some_and(|s| period < s) || span.1.is_some_and(|e| period > e) {
            continue;
        }
        if let Some(&(_, prev, _)) = rows.last() {
            if period != next_month(prev) {
                return Err(IngestError::NotContiguous {
                    line,
                    previous: prev,
                    found: period,
                });
            }
        }
        let mut vals = Vec::with_capacity(idx.len());
        let mut missing = None;
        for (&j, (_, name)) in idx.iter().zip(&req) {
            match number(rec.get(j).unwrap_or(""), line, name)? {
                Some(v) => vals.push(v),
                None => {
                    missing.get_or_insert_with(|| name.clone());
                    vals.push(f64::NAN);
                }
            }
        }
        let value = match missing {
            Some(col) => Err(col),
            None => {
                let y = vals[0] - vals[1];
                let x = match predictor {
                    Predictor::DividendPrice => log_ratio(vals[2], vals[3], line, "D12/Index")?,
                    Predictor::EarningsPrice => log_ratio(vals[2], vals[3], line, "E12/Index")?,
                    _ => vals[2],
                };
                Ok((y, x))
            }
        };
        rows.push((line, period, value));
    }

    let first = rows.iter().position(|r| r.2.is_ok()).ok_or(IngestError::Empty)?;
    let last = rows.iter().rposition(|r| r.2.is_ok()).ok_or(IngestError::Empty)?;
    let mut y = Vec::with_capacity(last - first + 1);
    let mut x = Vec::with_capacity(last - first + 1);
    for (line, _, v) in &rows[first..=last] {
        match v {
            Ok((a, b)) => {
                y.push(*a);
                x.push(*b);
            }
            Err(col) => {
                return Err(IngestError::InteriorMissing {
                    line: *line,
                    column: col.clone(),
                })
            }
        }
    }
    let first_period = rows[first].1;
    Ok(Ingested {
        y: TimeSeries::with_period("excess_return", y, Some(first_period))?,
        x: TimeSeries::with_period(predictor.label(), x, Some(first_period))?,
        first_period,
        last_period: rows[last].1,
        trimmed: (first, rows.len() - 1 - last),
    })
}
