//! Series ingestion and output.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::TimeSeries;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Values are prices; emit scaled log returns.
    Prices,
    /// Values are already returns; only scaled.
    Returns,
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prices" => Ok(Scheme::Prices),
            "returns" => Ok(Scheme::Returns),
            _ => Err(Error::InvalidArgument(format!(
                "unknown scheme {s:?} (expected prices or returns)"
            ))),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Prices => "prices",
            Scheme::Returns => "returns",
        })
    }
}

fn sniff_delimiter(text: &str) -> u8 {
    let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    b",;\t"
        .iter()
        .copied()
        .find(|d| first.as_bytes().contains(d))
        .unwrap_or(b',')
}

/// Values from a one-column or `(date, value)` table. A non-numeric first
/// row is taken as a header; any other non-numeric row is an error.
pub fn read_values(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_values(&text, path)
}

pub(crate) fn parse_values(text: &str, path: &Path) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .delimiter(sniff_delimiter(text))
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let line = |rec: &csv::StringRecord| rec.position().map_or(row + 1, |p| p.line() as usize);
        let rec = rec.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.position().map_or(row + 1, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let field = match rec.len() {
            1 => &rec[0],
            2 => &rec[1],
            k => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: line(&rec),
                    message: format!("expected 1 or 2 columns, found {k}"),
                })
            }
        };
        match field.parse::<f64>() {
            Ok(v) if v.is_finite() => out.push(v),
            Ok(v) => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: line(&rec),
                    message: format!("non-finite value {v}"),
                })
            }
            Err(_) if out.is_empty() && row == 0 => {}
            Err(_) => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: line(&rec),
                    message: format!("not a number: {field:?}"),
                })
            }
        }
    }
    Ok(out)
}

/// `scale * ln(P_t / P_{t-1})` for prices, `scale * r_t` for returns.
pub fn transform(values: &[f64], scheme: Scheme, scale: f64) -> Result<TimeSeries> {
    if !(scale.is_finite() && scale != 0.0) {
        return Err(Error::InvalidArgument(format!(
            "scale must be finite and non-zero, got {scale}"
        )));
    }
    let out: Vec<f64> = match scheme {
        Scheme::Returns => values.iter().map(|v| scale * v).collect(),
        Scheme::Prices => {
            if values.len() < 2 {
                return Err(Error::InvalidSeries(format!(
                    "need at least 2 prices, got {}",
                    values.len()
                )));
            }
            if let Some(i) = values.iter().position(|&p| p <= 0.0) {
                return Err(Error::InvalidSeries(format!(
                    "price {} at row {} is not positive",
                    values[i],
                    i + 1
                )));
            }
            values
                .windows(2)
                .map(|w| scale * (w[1] / w[0]).ln())
                .collect()
        }
    };
    TimeSeries::new(out)
}

pub fn load_returns(path: &Path, scheme: Scheme, scale: f64) -> Result<TimeSeries> {
    let values = read_values(path)?;
    let label = path.file_name().map(|s| s.to_string_lossy().into_owned());
    let ts = transform(&values, scheme, scale)?;
    Ok(match label {
        Some(l) => ts.with_label(l),
        None => ts,
    })
}

/// One value per line under a `value` header.
pub fn write_series(path: &Path, x: &TimeSeries) -> Result<()> {
    let mut s = String::with_capacity(x.len() * 24 + 8);
    s.push_str("value\n");
    for v in &x.values {
        s.push_str(&format!("{v:?}\n"));
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}
