use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::MultichannelSeries;

/// Which table axis holds the channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Orientation {
    #[default]
    ChannelsAsColumns,
    ChannelsAsRows,
}

#[derive(Debug, Clone)]
pub struct CsvOptions {
    pub delimiter: u8,
    pub has_header: bool,
    pub orientation: Orientation,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self { delimiter: b',', has_header: false, orientation: Orientation::ChannelsAsColumns }
    }
}

/// Reads a rectangular numeric table.
///
/// Ragged rows and non-numeric cells are reported with their 1-based line number.
pub fn read_csv<T: Scalar>(path: impl AsRef<Path>, opts: &CsvOptions) -> Result<MultichannelSeries<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path.as_ref())?;

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    let mut skipped_header = !opts.has_header;
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if !skipped_header {
            skipped_header = true;
            continue;
        }
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(Error::Parse {
                    line,
                    message: format!("ragged row: expected {w} fields, found {}", record.len()),
                })
            }
            _ => {}
        }
        let mut row = Vec::with_capacity(record.len());
        for (col, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                line,
                message: format!("non-numeric cell {cell:?} in column {}", col + 1),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    message: format!("non-finite value {cell:?} in column {}", col + 1),
                });
            }
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::NoData);
    }
    let (n_rows, n_cols) = (rows.len(), rows[0].len());
    let data = match opts.orientation {
        Orientation::ChannelsAsColumns => DMatrix::from_fn(n_cols, n_rows, |c, s| T::lit(rows[s][c])),
        Orientation::ChannelsAsRows => DMatrix::from_fn(n_rows, n_cols, |c, s| T::lit(rows[c][s])),
    };
    MultichannelSeries::new(data)
}

/// Writes the series with 17 significant digits per value.
///
/// With `has_header` a `ch1,ch2,...` header row is emitted.
pub fn write_csv<T: Scalar>(
    series: &MultichannelSeries<T>,
    path: impl AsRef<Path>,
    opts: &CsvOptions,
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path.as_ref())?);
    let delim = opts.delimiter as char;
    let data = series.data();
    let (outer, inner) = match opts.orientation {
        Orientation::ChannelsAsColumns => (series.n_samples(), series.n_channels()),
        Orientation::ChannelsAsRows => (series.n_channels(), series.n_samples()),
    };
    if opts.has_header {
        let names: Vec<String> = (1..=inner)
            .map(|i| match opts.orientation {
                Orientation::ChannelsAsColumns => format!("ch{i}"),
                Orientation::ChannelsAsRows => format!("t{}", i - 1),
            })
            .collect();
        writeln!(out, "{}", names.join(&delim.to_string()))?;
    }
    let mut line = String::new();
    for o in 0..outer {
        line.clear();
        for i in 0..inner {
            if i > 0 {
                line.push(delim);
            }
            let v = match opts.orientation {
                Orientation::ChannelsAsColumns => data[(i, o)],
                Orientation::ChannelsAsRows => data[(o, i)],
            };
            line.push_str(&format_f64(v.as_f64()));
        }
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

/// 17 significant digits, enough to round-trip any binary64 value.
pub(crate) fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}
