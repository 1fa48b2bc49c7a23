use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::signals::{read_csv, write_csv, CsvOptions};
use crate::whittle_ica::{SolverOptions, UnmixingEstimate};

use super::config::Method;
use super::run::run_method;

#[derive(Debug, Clone, Default)]
pub struct SeparateOptions {
    pub csv: CsvOptions,
    pub solver: SolverOptions,
    pub sobi_lags: Option<Vec<usize>>,
}

/// Paths written by [`separate`], with the estimate itself.
#[derive(Debug, Clone)]
pub struct SeparationOutput {
    pub sources_csv: PathBuf,
    pub estimate_json: PathBuf,
    pub report_txt: PathBuf,
    pub estimate: UnmixingEstimate<f64>,
}

/// Separates a CSV of observations into `sources.csv` (same orientation as
/// the input), `estimate.json` and `report.txt` under `out_dir`.
pub fn separate(
    input: impl AsRef<Path>,
    method: Method,
    options: &SeparateOptions,
    out_dir: impl AsRef<Path>,
) -> Result<SeparationOutput> {
    let x = read_csv::<f64>(input.as_ref(), &options.csv)?;
    let estimate = run_method(method, &x, &options.solver, options.sobi_lags.as_deref())?;
    let s = estimate.sources(&x)?;

    let dir = out_dir.as_ref();
    fs::create_dir_all(dir)?;
    let out_csv = CsvOptions { has_header: false, ..options.csv.clone() };
    let sources_csv = dir.join("sources.csv");
    write_csv(&s, &sources_csv, &out_csv)?;
    let estimate_json = dir.join("estimate.json");
    fs::write(&estimate_json, estimate.to_json()?)?;
    let report_txt = dir.join("report.txt");
    fs::write(&report_txt, report(method, input.as_ref(), &estimate, x.n_samples()))?;
    Ok(SeparationOutput { sources_csv, estimate_json, report_txt, estimate })
}

/// Plain-text summary with the knots and atoms selected for each source.
pub fn report(method: Method, input: &Path, est: &UnmixingEstimate<f64>, n_samples: usize) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "input: {}", input.display());
    let _ = writeln!(s, "method: {method}");
    let _ = writeln!(s, "channels: {}  samples: {n_samples}", est.dim());
    let _ = writeln!(s, "iterations: {}  converged: {}", est.trace.len(), est.converged);
    if let Some(last) = est.trace.last() {
        let _ = writeln!(s, "final objective: {:.6e}", last.objective);
    }
    let _ = writeln!(s, "\nunmixing W (rows are sources):");
    for row in est.unmixing.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:>12.6}")).collect();
        let _ = writeln!(s, "  {}", cells.join(" "));
    }
    if est.spectral_models.is_empty() {
        let _ = writeln!(s, "\nno spectral models ({method} is a second-order method)");
        return s;
    }
    for (j, m) in est.spectral_models.iter().enumerate() {
        let doc = m.to_document();
        let _ = writeln!(s, "\nsource {}:", j + 1);
        let knots: Vec<String> = doc.knots.iter().map(|k| format!("{k:.4}")).collect();
        let _ = writeln!(s, "  knots ({}): {}", knots.len(), knots.join(", "));
        if doc.atoms.is_empty() {
            let _ = writeln!(s, "  atoms: none");
        } else {
            let _ = writeln!(s, "  atoms ({}):", doc.atoms.len());
            for a in &doc.atoms {
                let _ = writeln!(s, "    k={:<6} r={:.6}  mass={:.6e}", a.k, a.frequency, a.mass);
            }
        }
        if let Some(b) = doc.bic {
            let _ = writeln!(s, "  bic: {b:.6e}");
        }
    }
    s
}
