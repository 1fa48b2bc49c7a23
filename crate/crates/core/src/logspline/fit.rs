use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::spectral::FourierGrid;

use super::model::{clamp_log, LOG_DENSITY_CLAMP};
use super::{Atom, AtomSet, SpectralModel, SplineBasis};

/// Per-source Whittle objective in the coefficient vector
/// `beta = (beta_c, beta_d)`:
///
/// `l(beta) = -sum_k [ I(r_k) exp(-g(r_k)) + g(r_k) ]`.
///
/// Spline coefficients come first, followed by one mass per atom.
#[derive(Debug, Clone)]
pub struct LogSplineObjective<'a, T: Scalar> {
    values: &'a [T],
    design: DMatrix<T>,
    /// Grid positions (`k - 1`) of the atoms.
    atom_positions: Vec<usize>,
}

impl<'a, T: Scalar> LogSplineObjective<'a, T> {
    /// `values` are the periodogram ordinates on the grid of length `floor(T/2)`;
    /// `atom_indices` are Fourier indices `k`.
    pub fn new(
        values: &'a [T],
        basis: &SplineBasis<T>,
        atom_indices: &[usize],
        n_samples: usize,
    ) -> Result<Self> {
        let grid = FourierGrid::new(n_samples);
        if values.len() != grid.len() {
            return Err(Error::Dimension(format!(
                "{} periodogram values for a grid of {} frequencies",
                values.len(),
                grid.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= T::zero()) || !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("periodogram value {v} is not a finite nonnegative number")));
        }
        let mut sorted = atom_indices.to_vec();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) || sorted.iter().any(|&k| k == 0 || k > grid.len()) {
            return Err(Error::InvalidArgument(format!("invalid atom indices {atom_indices:?}")));
        }
        let design = basis.design(&grid.frequencies::<T>())?;
        Ok(Self { values, design, atom_positions: atom_indices.iter().map(|k| k - 1).collect() })
    }

    pub fn n_spline(&self) -> usize {
        self.design.ncols()
    }

    pub fn n_parameters(&self) -> usize {
        self.design.ncols() + self.atom_positions.len()
    }

    pub fn design(&self) -> &DMatrix<T> {
        &self.design
    }

    /// Clamped log-density on the grid.
    pub fn log_density(&self, beta: &DVector<T>) -> Vec<T> {
        let p = self.n_spline();
        let mut g: Vec<T> = (&self.design * beta.rows(0, p)).iter().copied().collect();
        for (d, &pos) in self.atom_positions.iter().enumerate() {
            g[pos] += beta[p + d];
        }
        g.into_iter().map(clamp_log).collect()
    }

    /// Pointwise weights `I exp(-g)`, zeroed where the clamp is active.
    fn weights(&self, g: &[T]) -> Vec<T> {
        let c = T::lit(LOG_DENSITY_CLAMP);
        g.iter()
            .zip(self.values)
            .map(|(&gi, &v)| if gi.abs() >= c { T::zero() } else { v * (-gi).exp() })
            .collect()
    }

    pub fn value(&self, beta: &DVector<T>) -> T {
        let g = self.log_density(beta);
        -g.iter()
            .zip(self.values)
            .fold(T::zero(), |acc, (&gi, &v)| acc + v * (-gi).exp() + gi)
    }

    /// `dl/dbeta = sum_k (I exp(-g) - 1) B(r_k)`.
    pub fn gradient(&self, beta: &DVector<T>) -> DVector<T> {
        let g = self.log_density(beta);
        let c = T::lit(LOG_DENSITY_CLAMP);
        let resid: DVector<T> = DVector::from_iterator(
            g.len(),
            g.iter().zip(self.values).map(|(&gi, &v)| {
                if gi.abs() >= c {
                    T::zero()
                } else {
                    v * (-gi).exp() - T::one()
                }
            }),
        );
        let p = self.n_spline();
        let mut out = DVector::zeros(self.n_parameters());
        out.rows_mut(0, p).copy_from(&self.design.tr_mul(&resid));
        for (d, &pos) in self.atom_positions.iter().enumerate() {
            out[p + d] = resid[pos];
        }
        out
    }

    /// `d2l/dbeta2 = -sum_k I exp(-g) B(r_k) B(r_k)^T`.
    pub fn hessian(&self, beta: &DVector<T>) -> DMatrix<T> {
        let g = self.log_density(beta);
        let w = self.weights(&g);
        let p = self.n_spline();
        let n = self.n_parameters();
        let mut weighted = self.design.clone();
        for (i, mut row) in weighted.row_iter_mut().enumerate() {
            row *= w[i];
        }
        let mut h = DMatrix::zeros(n, n);
        h.view_mut((0, 0), (p, p)).copy_from(&self.design.tr_mul(&weighted));
        for (d, &pos) in self.atom_positions.iter().enumerate() {
            let cross = self.design.row(pos).transpose() * w[pos];
            h.view_mut((0, p + d), (p, 1)).copy_from(&cross);
            h.view_mut((p + d, 0), (1, p)).copy_from(&cross.transpose());
            h[(p + d, p + d)] = w[pos];
        }
        -h
    }
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub max_iterations: usize,
    pub max_halvings: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { max_iterations: 100, max_halvings: 40 }
    }
}

/// Outcome of a coefficient fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitReport<T: Scalar> {
    pub log_likelihood: T,
    pub bic: T,
    pub n_knots: usize,
    pub n_atoms: usize,
    pub n_parameters: usize,
    pub iterations: usize,
    pub converged: bool,
    pub ridge_applied: bool,
}

/// `-l + p log(N)` with `N = floor(T/2)` likelihood terms.
pub fn bic<T: Scalar>(log_likelihood: T, n_parameters: usize, n_grid: usize) -> T {
    -log_likelihood + T::count(n_parameters) * T::count(n_grid).ln()
}

/// Gradient tolerance per likelihood term.
fn gradient_tolerance<T: Scalar>() -> T {
    T::lit(1e-8).max(T::eps() * T::lit(1e3))
}

/// Starting point: constant at the log mean off-atom ordinate; atoms absorb the excess.
pub(crate) fn default_start<T: Scalar>(values: &[T], basis: &SplineBasis<T>, atom_indices: &[usize]) -> Result<DVector<T>> {
    let off: Vec<T> = values
        .iter()
        .enumerate()
        .filter(|(i, _)| !atom_indices.contains(&(i + 1)))
        .map(|(_, &v)| v)
        .collect();
    let pool = if off.is_empty() { values } else { &off[..] };
    let mean = pool.iter().fold(T::zero(), |a, &v| a + v) / T::count(pool.len().max(1));
    if !(mean > T::zero()) {
        return Err(Error::InvalidArgument("periodogram is identically zero".into()));
    }
    let c = mean.ln();
    let mut beta = DVector::zeros(basis.dimension() + atom_indices.len());
    beta.rows_mut(0, basis.dimension()).copy_from(&basis.constant_coefficients(c));
    for (d, &k) in atom_indices.iter().enumerate() {
        let v = values[k - 1];
        beta[basis.dimension() + d] = if v > T::zero() { (v.ln() - c).max(T::zero()) } else { T::zero() };
    }
    Ok(beta)
}

/// Solves `A x = b` for SPD `A`, ridging by `1e-8 trace` when Cholesky fails.
fn solve_spd<T: Scalar>(mut a: DMatrix<T>, b: &DVector<T>) -> (DVector<T>, bool) {
    if let Some(ch) = a.clone().cholesky() {
        let x = ch.solve(b);
        if x.iter().all(|v| v.is_finite()) {
            return (x, false);
        }
    }
    let tr = a.trace().abs().max(T::eps());
    for attempt in 0..12 {
        let ridge = T::lit(1e-8 * 10f64.powi(attempt)) * tr;
        for i in 0..a.nrows() {
            a[(i, i)] += ridge;
        }
        if let Some(ch) = a.clone().cholesky() {
            return (ch.solve(b), true);
        }
    }
    (b.clone() / tr, true)
}

/// Maximizes the per-source Whittle likelihood for a fixed basis and fixed atom locations.
///
/// Newton iterations with step halving; atoms at zero mass whose gradient
/// points below zero are held on the bound.
pub fn fit_coefficients<T: Scalar>(
    values: &[T],
    basis: &SplineBasis<T>,
    atom_indices: &[usize],
    n_samples: usize,
    start: Option<&DVector<T>>,
    opts: &FitOptions,
) -> Result<(SpectralModel<T>, FitReport<T>)> {
    let objective = LogSplineObjective::new(values, basis, atom_indices, n_samples)?;
    let p = objective.n_spline();
    let n = objective.n_parameters();
    let n_grid = values.len();

    let mut beta = match start {
        Some(b) if b.len() == n => b.clone(),
        Some(b) => {
            return Err(Error::Dimension(format!("start has {} entries, expected {n}", b.len())));
        }
        None => default_start(values, basis, atom_indices)?,
    };
    for d in p..n {
        beta[d] = beta[d].max(T::zero());
    }

    let tol = gradient_tolerance::<T>() * T::count(n_grid);
    let mut ll = objective.value(&beta);
    let mut converged = false;
    let mut ridge_applied = false;
    let mut iterations = 0;

    for _ in 0..opts.max_iterations {
        let grad = objective.gradient(&beta);
        let free: Vec<usize> =
            (0..n).filter(|&i| i < p || beta[i] > T::zero() || grad[i] > T::zero()).collect();
        let pg_norm = free.iter().fold(T::zero(), |a, &i| a + grad[i] * grad[i]).sqrt();
        if pg_norm < tol {
            converged = true;
            break;
        }
        iterations += 1;

        let neg_h = -objective.hessian(&beta);
        let h_free = DMatrix::from_fn(free.len(), free.len(), |a, b| neg_h[(free[a], free[b])]);
        let g_free = DVector::from_iterator(free.len(), free.iter().map(|&i| grad[i]));
        let (step, ridged) = solve_spd(h_free, &g_free);
        ridge_applied |= ridged;

        let mut alpha = T::one();
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            let mut cand = beta.clone();
            for (a, &i) in free.iter().enumerate() {
                cand[i] += alpha * step[a];
                if i >= p {
                    cand[i] = cand[i].max(T::zero());
                }
            }
            let ll_c = objective.value(&cand);
            if ll_c >= ll {
                let gain = ll_c - ll;
                beta = cand;
                ll = ll_c;
                accepted = true;
                // no measurable progress left
                if gain <= T::eps() * ll.abs() && alpha < T::one() {
                    accepted = false;
                }
                break;
            }
            alpha *= T::lit(0.5);
        }
        if !accepted {
            // numerically stationary: accept a looser gradient bound
            converged = pg_norm < tol * T::lit(1e3);
            break;
        }
    }
    if !converged && iterations < opts.max_iterations {
        let grad = objective.gradient(&beta);
        let pg = (0..n)
            .filter(|&i| i < p || beta[i] > T::zero() || grad[i] > T::zero())
            .fold(T::zero(), |a, i| a + grad[i] * grad[i])
            .sqrt();
        converged = pg < tol * T::lit(1e3);
    }

    let grid = FourierGrid::new(n_samples);
    let atoms = AtomSet::new(
        atom_indices
            .iter()
            .enumerate()
            .map(|(d, &k)| Atom { index: k, mass: beta[p + d] })
            .collect(),
        grid,
    )?;
    let bic_value = bic(ll, n, n_grid);
    let model = SpectralModel::new(basis.clone(), beta.rows(0, p).into_owned(), atoms, n_samples)?
        .with_bic(bic_value);
    let report = FitReport {
        log_likelihood: ll,
        bic: bic_value,
        n_knots: basis.knots().len(),
        n_atoms: atom_indices.len(),
        n_parameters: n,
        iterations,
        converged,
        ridge_applied,
    };
    Ok((model, report))
}

/// Coefficient vector (`beta_c` then atom masses) of a fitted model, in atom-index order.
pub fn coefficients_of<T: Scalar>(model: &SpectralModel<T>) -> DVector<T> {
    let p = model.basis().dimension();
    let mut beta = DVector::zeros(p + model.atoms().len());
    beta.rows_mut(0, p).copy_from(model.spline_coefficients());
    for (d, a) in model.atoms().iter().enumerate() {
        beta[p + d] = a.mass;
    }
    beta
}
