use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{amari_index, correlation_discrepancy};
use crate::signals::{format_f64, MultichannelSeries};
use crate::sobi::{sobi, LagSet};
use crate::whittle_ica::{fit, SolverOptions, UnmixingEstimate};

use super::config::{generate_replicate, ExperimentConfig, Method};
use super::summary::{summarize, write_boxplot_svg, write_summary_csv};

/// One `(method, T, replicate)` outcome.
///
/// `amari` is `amari_index(W A)` for the estimate `W` and true mixing `A`.
/// A failed replicate keeps its row with `error` set and no metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: Method,
    pub n_samples: usize,
    pub replicate: usize,
    pub amari: Option<f64>,
    pub cor_disc: Option<f64>,
    pub runtime_seconds: f64,
    pub converged: bool,
    pub error: Option<String>,
}

/// Rows of a sweep plus the estimate of each successful row, in row order.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub rows: Vec<ResultRow>,
    pub estimates: Vec<Option<UnmixingEstimate<f64>>>,
}

/// Runs one method on observations (channels as rows).
pub fn run_method(
    method: Method,
    x: &MultichannelSeries<f64>,
    solver: &SolverOptions,
    sobi_lags: Option<&[usize]>,
) -> Result<UnmixingEstimate<f64>> {
    match method {
        Method::CicaLsp => fit(x, solver),
        Method::Sobi => {
            let lags = match sobi_lags {
                Some(l) => LagSet::new(l.to_vec())?,
                None => LagSet::default(),
            };
            sobi(x, &lags)
        }
    }
}

fn evaluate(
    method: Method,
    config: &ExperimentConfig,
    n_samples: usize,
    replicate: usize,
) -> (ResultRow, Option<UnmixingEstimate<f64>>) {
    let mut row = ResultRow {
        method,
        n_samples,
        replicate,
        amari: None,
        cor_disc: None,
        runtime_seconds: 0.0,
        converged: false,
        error: None,
    };
    let data = match generate_replicate(config, n_samples, replicate) {
        Ok(d) => d,
        Err(e) => {
            row.error = Some(e.to_string());
            return (row, None);
        }
    };
    let start = Instant::now();
    let estimate = run_method(method, &data.observations, &config.solver, config.sobi_lags.as_deref());
    row.runtime_seconds = start.elapsed().as_secs_f64();
    let estimate = match estimate {
        Ok(e) => e,
        Err(e) => {
            row.error = Some(e.to_string());
            return (row, None);
        }
    };
    row.converged = estimate.converged;
    row.amari = Some(amari_index(&(&estimate.unmixing * data.mixing.entries())));
    match estimate.sources(&data.observations).and_then(|s| correlation_discrepancy(s.data(), data.sources.data())) {
        Ok(rec) => row.cor_disc = Some(rec.cor_disc),
        Err(e) => row.error = Some(e.to_string()),
    }
    (row, Some(estimate))
}

/// Runs every `(method, T, replicate)` cell on the current rayon pool.
/// Rows come back sorted by method, then `T`, then replicate.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let mut methods = config.methods.clone();
    methods.sort();
    methods.dedup();
    let mut cells = Vec::new();
    for &method in &methods {
        for &t in &config.sample_sizes {
            for r in 0..config.replicates {
                cells.push((method, t, r));
            }
        }
    }
    let mut out: Vec<(ResultRow, Option<UnmixingEstimate<f64>>)> =
        cells.into_par_iter().map(|(method, t, r)| evaluate(method, config, t, r)).collect();
    out.sort_by(|a, b| {
        (a.0.method, a.0.n_samples, a.0.replicate).cmp(&(b.0.method, b.0.n_samples, b.0.replicate))
    });
    out.dedup_by(|a, b| (a.0.method, a.0.n_samples, a.0.replicate) == (b.0.method, b.0.n_samples, b.0.replicate));
    let (rows, estimates) = out.into_iter().unzip();
    Ok(ExperimentResult { rows, estimates })
}

fn opt(v: Option<f64>) -> String {
    v.map(format_f64).unwrap_or_default()
}

pub const RESULTS_HEADER: [&str; 7] = ["method", "T", "replicate", "amari", "cor_disc", "converged", "error"];

/// Writes `results.csv` without timings, so reruns are byte-identical.
pub fn write_results_csv(rows: &[ResultRow], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RESULTS_HEADER)?;
    for r in rows {
        w.write_record([
            r.method.name().to_string(),
            r.n_samples.to_string(),
            r.replicate.to_string(),
            opt(r.amari),
            opt(r.cor_disc),
            r.converged.to_string(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_timings_csv(rows: &[ResultRow], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["method", "T", "replicate", "runtime_seconds"])?;
    for r in rows {
        w.write_record([
            r.method.name().to_string(),
            r.n_samples.to_string(),
            r.replicate.to_string(),
            format!("{:.6}", r.runtime_seconds),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a `results.csv`; runtimes come back as `NaN`.
pub fn read_results_csv(path: impl AsRef<Path>) -> Result<Vec<ResultRow>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse { line: 1, message: format!("missing column {name:?}") })
    };
    let (cm, ct, cr, ca, cc, cv) =
        (col("method")?, col("T")?, col("replicate")?, col("amari")?, col("cor_disc")?, col("converged")?);
    let ce = headers.iter().position(|h| h == "error");
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let bad = |what: &str, v: &str| Error::Parse { line, message: format!("bad {what} {v:?}") };
        let num = |i: usize, what: &str| -> Result<Option<f64>> {
            let v = record.get(i).unwrap_or("").trim();
            if v.is_empty() {
                Ok(None)
            } else {
                v.parse().map(Some).map_err(|_| bad(what, v))
            }
        };
        let field = |i: usize| record.get(i).unwrap_or("").trim();
        rows.push(ResultRow {
            method: field(cm).parse().map_err(|_| bad("method", field(cm)))?,
            n_samples: field(ct).parse().map_err(|_| bad("T", field(ct)))?,
            replicate: field(cr).parse().map_err(|_| bad("replicate", field(cr)))?,
            amari: num(ca, "amari")?,
            cor_disc: num(cc, "cor_disc")?,
            runtime_seconds: f64::NAN,
            converged: field(cv).parse().map_err(|_| bad("converged", field(cv)))?,
            error: ce.map(field).filter(|e| !e.is_empty()).map(str::to_string),
        });
    }
    Ok(rows)
}

/// File name of a row's estimate inside `estimates/`.
pub fn estimate_file_name(method: Method, n_samples: usize, replicate: usize) -> String {
    format!("{}_T{}_r{}.json", method.name(), n_samples, replicate)
}

/// Writes `config.toml`, `results.csv`, `timings.csv`, `summary.csv`,
/// `boxplot.svg` and `estimates/*.json` into `dir`.
pub fn write_experiment(config: &ExperimentConfig, result: &ExperimentResult, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir.join("estimates"))?;
    fs::write(dir.join("config.toml"), config.to_toml()?)?;
    write_results_csv(&result.rows, dir.join("results.csv"))?;
    write_timings_csv(&result.rows, dir.join("timings.csv"))?;
    for (row, est) in result.rows.iter().zip(&result.estimates) {
        if let Some(est) = est {
            let mut f = fs::File::create(dir.join("estimates").join(estimate_file_name(
                row.method,
                row.n_samples,
                row.replicate,
            )))?;
            f.write_all(est.to_json()?.as_bytes())?;
        }
    }
    if let Ok(summary) = summarize(&result.rows) {
        write_summary_csv(&summary, dir.join("summary.csv"))?;
        write_boxplot_svg(&summary, dir.join("boxplot.svg"))?;
    }
    Ok(())
}

/// The true mixing of a replicate, for recomputing metrics from saved estimates.
pub fn replicate_mixing(config: &ExperimentConfig, n_samples: usize, replicate: usize) -> Result<DMatrix<f64>> {
    Ok(generate_replicate(config, n_samples, replicate)?.mixing.entries().clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::preset("sim1_desk").unwrap();
        cfg.replicates = 1;
        cfg.methods = vec![Method::Sobi];
        cfg
    }

    #[test]
    fn one_sobi_replicate_gives_one_row() {
        let res = run_experiment(&tiny()).unwrap();
        assert_eq!(res.rows.len(), 1);
        let row = &res.rows[0];
        assert_eq!((row.method, row.n_samples, row.replicate), (Method::Sobi, 512, 0));
        assert!(row.error.is_none());
        assert!(row.amari.unwrap() >= 0.0);
    }

    #[test]
    fn results_csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![
            ResultRow {
                method: Method::CicaLsp,
                n_samples: 512,
                replicate: 0,
                amari: Some(0.1 + 0.2),
                cor_disc: Some(1.0 / 3.0),
                runtime_seconds: 1.0,
                converged: true,
                error: None,
            },
            ResultRow {
                method: Method::Sobi,
                n_samples: 4096,
                replicate: 7,
                amari: None,
                cor_disc: None,
                runtime_seconds: 0.5,
                converged: false,
                error: Some("matrix is singular, really".into()),
            },
        ];
        let path = dir.path().join("r.csv");
        write_results_csv(&rows, &path).unwrap();
        let back = read_results_csv(&path).unwrap();
        for (a, b) in rows.iter().zip(&back) {
            assert_eq!((a.method, a.n_samples, a.replicate, a.amari, a.cor_disc), (b.method, b.n_samples, b.replicate, b.amari, b.cor_disc));
            assert_eq!((a.converged, &a.error), (b.converged, &b.error));
        }
    }

    #[test]
    fn failures_are_recorded_not_raised() {
        let mut cfg = tiny();
        cfg.sample_sizes = vec![512, 64];
        cfg.sobi_lags = Some(vec![1, 100]);
        let res = run_experiment(&cfg).unwrap();
        assert_eq!(res.rows.len(), 2);
        assert!(res.rows[0].error.is_some());
        assert!(res.estimates[0].is_none());
        assert!(res.rows[1].error.is_none());
    }
}
