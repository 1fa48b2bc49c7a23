use std::f64::consts::PI;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::spectral::FourierGrid;

use super::fit::{coefficients_of, default_start, fit_coefficients, FitOptions, FitReport};
use super::{SpectralModel, SplineBasis};

/// Options for the stepwise BIC search.
#[derive(Debug, Clone)]
pub struct SelectionOptions {
    /// Knots of the starting model, placed at `pi i / (n + 1)`.
    pub initial_knots: usize,
    /// Overrides the default parameter cap `min(30, ceil(sqrt(N)))`.
    pub max_parameters: Option<usize>,
    /// Minimum knot spacing in units of the Fourier spacing `2 pi / T`.
    pub min_separation_bins: f64,
    pub allow_atoms: bool,
    pub max_rounds: usize,
    pub fit: FitOptions,
}

impl Default for SelectionOptions {
    fn default() -> Self {
        Self {
            initial_knots: 4,
            max_parameters: None,
            min_separation_bins: 2.0,
            allow_atoms: true,
            max_rounds: 200,
            fit: FitOptions::default(),
        }
    }
}

/// `min(30, ceil(sqrt(N)))`.
pub fn parameter_cap(n_grid: usize) -> usize {
    let root = (n_grid as f64).sqrt().ceil() as usize;
    root.min(30)
}

/// Smallest grid on which selection is attempted.
pub const MIN_GRID: usize = 16;

struct Current<T: Scalar> {
    knots: Vec<T>,
    atoms: Vec<usize>,
    model: SpectralModel<T>,
    report: FitReport<T>,
}

/// Selects knots and atoms for one periodogram by stepwise BIC, starting from
/// equally spaced knots.
pub fn select_model<T: Scalar>(
    values: &[T],
    n_samples: usize,
    opts: &SelectionOptions,
) -> Result<(SpectralModel<T>, FitReport<T>)> {
    select_model_with(values, n_samples, None, opts)
}

/// As [`select_model`], but starts the search from the structure and
/// coefficients of `warm` when given.
pub fn select_model_with<T: Scalar>(
    values: &[T],
    n_samples: usize,
    warm: Option<&SpectralModel<T>>,
    opts: &SelectionOptions,
) -> Result<(SpectralModel<T>, FitReport<T>)> {
    let grid = FourierGrid::new(n_samples);
    let n_grid = grid.len();
    if values.len() != n_grid {
        return Err(Error::Dimension(format!("{} periodogram values for T = {n_samples}", values.len())));
    }
    if n_grid < MIN_GRID {
        return Err(Error::InvalidArgument(format!(
            "model selection needs at least {MIN_GRID} frequencies, got {n_grid}"
        )));
    }
    let cap = opts.max_parameters.unwrap_or_else(|| parameter_cap(n_grid)).max(1);
    let sep = T::lit(opts.min_separation_bins * 2.0 * PI / n_samples as f64);
    let freqs: Vec<T> = grid.frequencies();
    let log_t = T::count(n_samples).ln();

    let mut cur = match warm {
        Some(w) => {
            if w.n_samples() != n_samples {
                return Err(Error::Dimension(format!(
                    "warm-start model is for T = {}, data has T = {n_samples}",
                    w.n_samples()
                )));
            }
            let knots = w.basis().knots().to_vec();
            let atoms = w.atoms().indices();
            let start = coefficients_of(w);
            let (model, report) =
                fit_coefficients(values, w.basis(), &atoms, n_samples, Some(&start), &opts.fit)?;
            Current { knots, atoms, model, report }
        }
        None => {
            let count = opts.initial_knots.clamp(1, cap);
            let basis = SplineBasis::equally_spaced(count)?;
            let knots = basis.knots().to_vec();
            let (model, report) = fit_coefficients(values, &basis, &[], n_samples, None, &opts.fit)?;
            Current { knots, atoms: Vec::new(), model, report }
        }
    };

    for _ in 0..opts.max_rounds {
        let g = cur.model.log_density_grid();
        let u: Vec<T> = values.iter().zip(&g).map(|(&v, &gi)| v * (-gi).exp()).collect();
        let mut best: Option<Current<T>> = None;
        let consider = |cand: Current<T>, best: &mut Option<Current<T>>| {
            if best.as_ref().is_none_or(|b| cand.report.bic < b.report.bic) {
                *best = Some(cand);
            }
        };

        if cur.report.n_parameters < cap {
            for knot in propose_knots(&cur, &u, &freqs, sep) {
                let mut knots = cur.knots.clone();
                let pos = knots.partition_point(|&k| k < knot);
                knots.insert(pos, knot);
                if let Ok(c) = refit(values, n_samples, &cur, knots, cur.atoms.clone(), None, &opts.fit) {
                    consider(c, &mut best);
                }
            }
            if opts.allow_atoms {
                if let Some((k, uk)) = propose_atom(&cur, &u, log_t) {
                    let mut atoms = cur.atoms.clone();
                    atoms.push(k);
                    atoms.sort_unstable();
                    let extra = Some((k, uk.ln().max(T::zero())));
                    if let Ok(c) = refit(values, n_samples, &cur, cur.knots.clone(), atoms, extra, &opts.fit) {
                        consider(c, &mut best);
                    }
                }
            }
        }
        if let Some(b) = best.take_if(|b| b.report.bic < cur.report.bic) {
            cur = b;
            continue;
        }

        let mut best: Option<Current<T>> = None;
        if cur.knots.len() > 1 {
            for i in 0..cur.knots.len() {
                let mut knots = cur.knots.clone();
                knots.remove(i);
                if let Ok(c) = refit(values, n_samples, &cur, knots, cur.atoms.clone(), None, &opts.fit) {
                    consider(c, &mut best);
                }
            }
        }
        for i in 0..cur.atoms.len() {
            let mut atoms = cur.atoms.clone();
            atoms.remove(i);
            if let Ok(c) = refit(values, n_samples, &cur, cur.knots.clone(), atoms, None, &opts.fit) {
                consider(c, &mut best);
            }
        }
        match best.take_if(|b| b.report.bic < cur.report.bic) {
            Some(b) => cur = b,
            None => break,
        }
    }
    Ok((cur.model, cur.report))
}

/// Midpoints of the knot intervals that respect the minimum separation,
/// largest deviance mass first.
fn propose_knots<T: Scalar>(cur: &Current<T>, u: &[T], freqs: &[T], sep: T) -> Vec<T> {
    let tiny = T::eps() * T::eps();
    let mut edges = Vec::with_capacity(cur.knots.len() + 2);
    edges.push(T::zero());
    edges.extend_from_slice(&cur.knots);
    edges.push(T::pi());
    let mut dev = vec![T::zero(); edges.len() - 1];
    for (i, (&r, &ui)) in freqs.iter().zip(u).enumerate() {
        if cur.atoms.contains(&(i + 1)) {
            continue;
        }
        let ui = ui.max(tiny);
        let d = T::lit(2.0) * (ui - T::one() - ui.ln());
        let slot = edges.partition_point(|&e| e <= r).saturating_sub(1).min(dev.len() - 1);
        dev[slot] += d;
    }
    let mut order: Vec<usize> = (0..dev.len()).collect();
    order.sort_by(|&a, &b| dev[b].partial_cmp(&dev[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    order
        .into_iter()
        .filter_map(|s| {
            let (lo, hi) = (edges[s], edges[s + 1]);
            let mid = (lo + hi) * T::lit(0.5);
            (mid - lo >= sep && hi - mid >= sep && dev[s] > T::zero()).then_some(mid)
        })
        .collect()
}

/// Grid index of the largest standardized ordinate when it exceeds `ln T`.
fn propose_atom<T: Scalar>(cur: &Current<T>, u: &[T], log_t: T) -> Option<(usize, T)> {
    let mut best: Option<(usize, T)> = None;
    for (i, &ui) in u.iter().enumerate() {
        let k = i + 1;
        if cur.atoms.contains(&k) {
            continue;
        }
        if best.is_none_or(|(_, b)| ui > b) {
            best = Some((k, ui));
        }
    }
    best.filter(|&(_, b)| b > log_t)
}

/// Fits a new structure, starting from the least-squares projection of the
/// current spline onto the new basis. Masses of retained atoms carry over.
fn refit<T: Scalar>(
    values: &[T],
    n_samples: usize,
    cur: &Current<T>,
    knots: Vec<T>,
    atoms: Vec<usize>,
    new_atom: Option<(usize, T)>,
    fit: &FitOptions,
) -> Result<Current<T>> {
    let basis = SplineBasis::new(knots.clone())?;
    let grid = FourierGrid::new(n_samples);
    let freqs: Vec<T> = grid.frequencies();
    let old_design = cur.model.basis().design(&freqs)?;
    let target = &old_design * cur.model.spline_coefficients();
    let design = basis.design(&freqs)?;
    let p = basis.dimension();
    let mut start = DVector::zeros(p + atoms.len());
    match design.clone().svd(true, true).solve(&target, T::eps()) {
        Ok(b) if b.iter().all(|v| v.is_finite()) => start.rows_mut(0, p).copy_from(&b),
        _ => start = default_start(values, &basis, &atoms)?,
    }
    for (d, &k) in atoms.iter().enumerate() {
        let mass = match new_atom {
            Some((nk, m)) if nk == k => m,
            _ => cur.model.atoms().mass_at(k).unwrap_or(T::zero()),
        };
        start[p + d] = mass;
    }
    let (model, report) = fit_coefficients(values, &basis, &atoms, n_samples, Some(&start), fit)?;
    Ok(Current { knots, atoms, model, report })
}
