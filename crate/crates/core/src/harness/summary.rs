use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signals::format_f64;

use super::config::Method;
use super::run::ResultRow;

/// Five-number summary of the Amari distances of one `(method, T)` group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileRow {
    pub method: Method,
    pub n_samples: usize,
    /// Rows with an Amari value.
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Nearest-rank quantile: the value of rank `max(1, ceil(p n))` in sorted order.
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = ((p * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

/// Groups rows by `(method, T)` and summarizes their Amari distances.
/// Rows without an Amari value are ignored.
pub fn summarize(rows: &[ResultRow]) -> Result<Vec<QuantileRow>> {
    let mut groups: BTreeMap<(Method, usize), Vec<f64>> = BTreeMap::new();
    for r in rows {
        if let Some(a) = r.amari.filter(|a| a.is_finite()) {
            groups.entry((r.method, r.n_samples)).or_default().push(a);
        }
    }
    if groups.is_empty() {
        return Err(Error::NoData);
    }
    Ok(groups
        .into_iter()
        .map(|((method, n_samples), mut v)| {
            v.sort_by(f64::total_cmp);
            QuantileRow {
                method,
                n_samples,
                count: v.len(),
                min: v[0],
                q1: nearest_rank(&v, 0.25),
                median: nearest_rank(&v, 0.5),
                q3: nearest_rank(&v, 0.75),
                max: v[v.len() - 1],
            }
        })
        .collect())
}

/// Median Amari distance of one group, if present.
pub fn median_of(summary: &[QuantileRow], method: Method, n_samples: usize) -> Option<f64> {
    summary.iter().find(|q| q.method == method && q.n_samples == n_samples).map(|q| q.median)
}

pub fn write_summary_csv(summary: &[QuantileRow], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["method", "T", "n", "min", "q1", "median", "q3", "max"])?;
    for q in summary {
        w.write_record([
            q.method.name().to_string(),
            q.n_samples.to_string(),
            q.count.to_string(),
            format_f64(q.min),
            format_f64(q.q1),
            format_f64(q.median),
            format_f64(q.q3),
            format_f64(q.max),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Renders one box per group (whiskers at min and max) as SVG.
pub fn boxplot_svg(summary: &[QuantileRow]) -> String {
    const W_BOX: f64 = 70.0;
    const LEFT: f64 = 60.0;
    const TOP: f64 = 20.0;
    const PLOT_H: f64 = 300.0;
    let width = LEFT + 20.0 + W_BOX * summary.len().max(1) as f64;
    let height = TOP + PLOT_H + 60.0;
    let hi = summary.iter().map(|q| q.max).fold(0.0f64, f64::max);
    let hi = if hi > 0.0 { hi * 1.05 } else { 1.0 };
    let y = |v: f64| TOP + PLOT_H * (1.0 - v / hi);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{}" stroke="black"/>"#, TOP + PLOT_H);
    for i in 0..=4 {
        let v = hi * i as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{v:.3}</text>"#,
            LEFT - 4.0,
            y(v) + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.1}" transform="rotate(-90 14 {:.1})" text-anchor="middle">Amari distance</text>"#,
        TOP + PLOT_H / 2.0,
        TOP + PLOT_H / 2.0
    );
    for (i, q) in summary.iter().enumerate() {
        let cx = LEFT + 10.0 + W_BOX * (i as f64 + 0.5);
        let half = W_BOX * 0.3;
        let fill = match q.method {
            Method::CicaLsp => "#9ecae1",
            Method::Sobi => "#fdae6b",
        };
        let _ = writeln!(
            s,
            r#"<line x1="{cx:.1}" y1="{:.1}" x2="{cx:.1}" y2="{:.1}" stroke="black"/>"#,
            y(q.max),
            y(q.min)
        );
        let _ = writeln!(
            s,
            r#"<rect x="{:.1}" y="{:.1}" width="{:.1}" height="{:.1}" fill="{fill}" stroke="black"/>"#,
            cx - half,
            y(q.q3),
            2.0 * half,
            (y(q.q1) - y(q.q3)).max(0.5)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" y1="{:.1}" x2="{:.1}" y2="{:.1}" stroke="black" stroke-width="2"/>"#,
            cx - half,
            y(q.median),
            cx + half,
            y(q.median)
        );
        let _ = writeln!(
            s,
            r#"<text x="{cx:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            TOP + PLOT_H + 16.0,
            q.method
        );
        let _ = writeln!(
            s,
            r#"<text x="{cx:.1}" y="{:.1}" text-anchor="middle">T={}</text>"#,
            TOP + PLOT_H + 30.0,
            q.n_samples
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn write_boxplot_svg(summary: &[QuantileRow], path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, boxplot_svg(summary))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: Method, t: usize, r: usize, amari: Option<f64>) -> ResultRow {
        ResultRow {
            method,
            n_samples: t,
            replicate: r,
            amari,
            cor_disc: None,
            runtime_seconds: 0.0,
            converged: true,
            error: None,
        }
    }

    #[test]
    fn single_row_collapses() {
        let s = summarize(&[row(Method::Sobi, 512, 0, Some(0.4))]).unwrap();
        let q = &s[0];
        assert_eq!([q.min, q.q1, q.median, q.q3, q.max], [0.4; 5]);
    }

    #[test]
    fn one_to_five() {
        let rows: Vec<_> = [3.0, 1.0, 5.0, 2.0, 4.0]
            .iter()
            .enumerate()
            .map(|(i, &v)| row(Method::CicaLsp, 512, i, Some(v)))
            .collect();
        let q = &summarize(&rows).unwrap()[0];
        assert_eq!([q.min, q.q1, q.median, q.q3, q.max], [1.0, 2.0, 3.0, 4.0, 5.0]);
    }

    #[test]
    fn groups_sorted_and_failures_skipped() {
        let rows = vec![
            row(Method::Sobi, 512, 0, Some(1.0)),
            row(Method::CicaLsp, 4096, 0, Some(2.0)),
            row(Method::CicaLsp, 512, 0, None),
            row(Method::CicaLsp, 512, 1, Some(3.0)),
        ];
        let s = summarize(&rows).unwrap();
        let keys: Vec<_> = s.iter().map(|q| (q.method, q.n_samples, q.count)).collect();
        assert_eq!(keys, vec![(Method::CicaLsp, 512, 1), (Method::CicaLsp, 4096, 1), (Method::Sobi, 512, 1)]);
        assert_eq!(median_of(&s, Method::Sobi, 512), Some(1.0));
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(summarize(&[]).is_err());
        assert!(summarize(&[row(Method::Sobi, 512, 0, None)]).is_err());
    }

    #[test]
    fn svg_mentions_every_group() {
        let s = summarize(&[row(Method::Sobi, 512, 0, Some(0.3)), row(Method::CicaLsp, 512, 0, Some(0.2))]).unwrap();
        let svg = boxplot_svg(&s);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("cica_lsp") && svg.contains("sobi"));
    }
}
