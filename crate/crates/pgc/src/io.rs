//! Data ingestion and serialization: CSV in and out, plus the canonical
//! JSON form used for reports (floats rounded to 12 significant digits,
//! keys sorted) so fixed seeds give byte-identical output.

use std::path::Path;

use serde::Serialize;

use crate::diagnostics::SeriesWithBands;
use crate::error::{Error, Result};
use crate::model::SampleMatrix;

#[derive(Debug, Clone)]
pub struct CsvOptions {
    pub has_header: bool,
    pub delimiter: u8,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions {
            has_header: true,
            delimiter: b',',
        }
    }
}

/// Columns of named numeric data. Missing or non-numeric cells are stored as
/// NaN and counted; downstream estimators drop them column-wise or
/// pairwise-complete as appropriate.
#[derive(Debug, Clone)]
pub struct Dataset {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    n: usize,
    source: String,
    missing: Vec<usize>,
}

impl Dataset {
    pub fn load_csv(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<Dataset> {
        let path = path.as_ref();
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(opts.has_header)
            .delimiter(opts.delimiter)
            .flexible(false)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(map_csv_error)?;

        let mut names: Vec<String> = if opts.has_header {
            reader
                .headers()
                .map_err(map_csv_error)?
                .iter()
                .map(|s| s.to_string())
                .collect()
        } else {
            Vec::new()
        };

        let mut columns: Vec<Vec<f64>> = names.iter().map(|_| Vec::new()).collect();
        let mut missing: Vec<usize> = vec![0; names.len()];
        let mut n = 0usize;
        for (i, record) in reader.records().enumerate() {
            let record = record.map_err(|e| match map_csv_error(e) {
                Error::Parse { col, message, .. } => Error::Parse {
                    row: i + 1,
                    col,
                    message,
                },
                other => other,
            })?;
            if columns.is_empty() {
                names = (1..=record.len()).map(|j| format!("c{j}")).collect();
                columns = vec![Vec::new(); record.len()];
                missing = vec![0; record.len()];
            }
            for (j, cell) in record.iter().enumerate() {
                let parsed = cell.parse::<f64>().ok().filter(|v| v.is_finite());
                match parsed {
                    Some(v) => columns[j].push(v),
                    None => {
                        columns[j].push(f64::NAN);
                        missing[j] += 1;
                    }
                }
            }
            n += 1;
        }
        if n == 0 {
            return Err(Error::EmptyData);
        }
        check_unique(&names)?;
        Ok(Dataset {
            names,
            columns,
            n,
            source: path.display().to_string(),
            missing,
        })
    }

    pub fn from_columns(names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Dataset> {
        if columns.is_empty() || columns[0].is_empty() {
            return Err(Error::EmptyData);
        }
        let n = columns[0].len();
        if columns.iter().any(|c| c.len() != n) || names.len() != columns.len() {
            return Err(Error::DimensionMismatch("ragged dataset".into()));
        }
        check_unique(&names)?;
        let missing = columns
            .iter()
            .map(|c| c.iter().filter(|v| !v.is_finite()).count())
            .collect();
        Ok(Dataset {
            names,
            columns,
            n,
            source: String::from("<memory>"),
            missing,
        })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn d(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn missing_counts(&self) -> &[usize] {
        &self.missing
    }

    pub fn columns_data(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn column(&self, idx: usize) -> &[f64] {
        &self.columns[idx]
    }

    /// Resolve a column by name or 0-based numeric index.
    pub fn column_index(&self, selector: &str) -> Result<usize> {
        if let Some(i) = self.names.iter().position(|n| n == selector) {
            return Ok(i);
        }
        if let Ok(i) = selector.parse::<usize>() {
            if i < self.d() {
                return Ok(i);
            }
        }
        Err(Error::Domain(format!(
            "no column '{selector}' (have: {})",
            self.names.join(", ")
        )))
    }
}

fn check_unique(names: &[String]) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for name in names {
        if !seen.insert(name) {
            return Err(Error::Domain(format!("duplicate column name '{name}'")));
        }
    }
    Ok(())
}

fn map_csv_error(e: csv::Error) -> Error {
    let row = e
        .position()
        .map(|p| p.line() as usize)
        .unwrap_or_default();
    match e.kind() {
        csv::ErrorKind::Io(_) => match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            _ => unreachable!(),
        },
        other => Error::Parse {
            row,
            col: 0,
            message: format!("{other:?}"),
        },
    }
}

/// Render a sample as CSV with shortest-round-trip float formatting.
pub fn sample_to_csv_string(sample: &SampleMatrix, names: &[String]) -> String {
    let mut out = String::new();
    out.push_str(&names.join(","));
    out.push('\n');
    for r in 0..sample.n() {
        for j in 0..sample.d() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&format!("{}", sample.value(r, j)));
        }
        out.push('\n');
    }
    out
}

pub fn write_sample_csv(
    path: impl AsRef<Path>,
    sample: &SampleMatrix,
    names: &[String],
) -> Result<()> {
    std::fs::write(path, sample_to_csv_string(sample, names))?;
    Ok(())
}

/// Render a series as `x,y,lo,hi` CSV; band cells are empty where no band is
/// defined. Flags live in the JSON sidecar, not here.
pub fn series_to_csv_string(series: &SeriesWithBands) -> String {
    let cell = |v: f64| {
        if v.is_finite() {
            format!("{v}")
        } else {
            String::new()
        }
    };
    let mut out = String::from("x,y,lo,hi\n");
    for i in 0..series.len() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            cell(series.x[i]),
            cell(series.y[i]),
            cell(series.lo[i]),
            cell(series.hi[i]),
        ));
    }
    out
}

pub fn write_series_csv(path: impl AsRef<Path>, series: &SeriesWithBands) -> Result<()> {
    std::fs::write(path, series_to_csv_string(series))?;
    Ok(())
}

/// Round to the given number of significant decimal digits.
pub fn round_sig(x: f64, digits: usize) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", digits - 1, x).parse().unwrap()
}

fn round_value(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Number(n) => {
            if let Some(f) = n.as_f64() {
                if n.is_f64() {
                    if let Some(r) = serde_json::Number::from_f64(round_sig(f, 12)) {
                        *n = r;
                    }
                }
            }
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(round_value),
        serde_json::Value::Object(map) => map.values_mut().for_each(round_value),
        _ => {}
    }
}

/// Canonical JSON: floats rounded to 12 significant digits, object keys
/// sorted, no insignificant whitespace. Equal inputs give byte-equal output.
pub fn canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let mut v = serde_json::to_value(value)
        .map_err(|e| Error::Numerical(format!("serialization failed: {e}")))?;
    round_value(&mut v);
    Ok(v.to_string())
}
