//! SOBI baseline: joint approximate diagonalization of symmetrized lagged
//! autocovariances of the whitened data by Jacobi rotations.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{lower_len, symmetrize};
use crate::metrics::amari_distance;
use crate::scalar::Scalar;
use crate::signals::MultichannelSeries;
use crate::whittle_ica::{canonicalize_detailed, prewhiten, IterationRecord, UnmixingEstimate};

/// Rotation angles below this (in `|sin|`) end the sweeps.
pub const ANGLE_TOLERANCE: f64 = 1e-8;
pub const MAX_SWEEPS: usize = 500;

/// Strictly increasing positive lags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LagSet {
    lags: Vec<usize>,
}

impl Default for LagSet {
    fn default() -> Self {
        Self { lags: (1..=12).collect() }
    }
}

impl LagSet {
    pub fn new(lags: Vec<usize>) -> Result<Self> {
        if lags.is_empty() || lags[0] == 0 || lags.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(format!("lags must be strictly increasing positive integers, got {lags:?}")));
        }
        Ok(Self { lags })
    }

    pub fn lags(&self) -> &[usize] {
        &self.lags
    }
}

/// `(1/2)(C(u) + C(u)^T)` with `C(u) = (1/T) sum_t x(t + u) x(t)^T`.
pub fn lagged_covariance<T: Scalar>(x: &DMatrix<T>, lag: usize) -> DMatrix<T> {
    let t = x.ncols();
    let n = t - lag;
    let ahead = x.columns(lag, n);
    let behind = x.columns(0, n);
    symmetrize(&(ahead * behind.transpose() / T::count(t)))
}

/// Sum of squared off-diagonal entries over the set.
pub fn off_diagonal_sum<T: Scalar>(mats: &[DMatrix<T>]) -> T {
    let mut acc = T::zero();
    for c in mats {
        for i in 0..c.nrows() {
            for j in 0..c.ncols() {
                if i != j {
                    acc += c[(i, j)] * c[(i, j)];
                }
            }
        }
    }
    acc
}

/// Jointly diagonalizes symmetric matrices, returning the orthogonal `V`
/// (columns are the joint eigenvectors) and the objective after every sweep,
/// starting with the initial value.
pub fn joint_diagonalize<T: Scalar>(mats: &mut [DMatrix<T>]) -> (DMatrix<T>, Vec<T>, bool) {
    let m = mats[0].nrows();
    let mut v = DMatrix::<T>::identity(m, m);
    let mut history = vec![off_diagonal_sum(mats)];
    let tol = T::lit(ANGLE_TOLERANCE);
    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..m {
            for q in (p + 1)..m {
                // 2x2 Gram of (C_pp - C_qq, C_pq + C_qp)
                let (mut g00, mut g01, mut g11) = (T::zero(), T::zero(), T::zero());
                for c in mats.iter() {
                    let a = c[(p, p)] - c[(q, q)];
                    let b = c[(p, q)] + c[(q, p)];
                    g00 += a * a;
                    g01 += a * b;
                    g11 += b * b;
                }
                let ton = g00 - g11;
                let toff = g01 + g01;
                let theta = T::lit(0.5) * toff.atan2(ton + (ton * ton + toff * toff).sqrt());
                let (s, cth) = theta.sin_cos();
                if s.abs() <= tol {
                    continue;
                }
                rotated = true;
                for c in mats.iter_mut() {
                    for k in 0..m {
                        let (ckp, ckq) = (c[(k, p)], c[(k, q)]);
                        c[(k, p)] = cth * ckp + s * ckq;
                        c[(k, q)] = cth * ckq - s * ckp;
                    }
                    for k in 0..m {
                        let (cpk, cqk) = (c[(p, k)], c[(q, k)]);
                        c[(p, k)] = cth * cpk + s * cqk;
                        c[(q, k)] = cth * cqk - s * cpk;
                    }
                }
                for k in 0..m {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = cth * vkp + s * vkq;
                    v[(k, q)] = cth * vkq - s * vkp;
                }
            }
        }
        history.push(off_diagonal_sum(mats));
        if !rotated {
            converged = true;
            break;
        }
    }
    (v, history, converged)
}

/// SOBI unmixing `W = V^T Sigma^{-1/2}`, canonicalized.
///
/// The estimate carries no spectral models and a zero multiplier vector;
/// its trace holds the off-diagonal objective after each sweep.
pub fn sobi<T: Scalar>(x: &MultichannelSeries<T>, lags: &LagSet) -> Result<UnmixingEstimate<T>> {
    let m = x.n_channels();
    let t = x.n_samples();
    if m < 2 {
        return Err(Error::InvalidArgument(format!("separation needs at least 2 channels, got {m}")));
    }
    let max_lag = *lags.lags().last().expect("non-empty lag set");
    if 4 * max_lag >= t {
        return Err(Error::InvalidArgument(format!("largest lag {max_lag} must be below T/4 = {}", t / 4)));
    }
    let (white, whitening) = prewhiten(x)?;
    let mut mats: Vec<DMatrix<T>> = lags.lags().iter().map(|&u| lagged_covariance(white.data(), u)).collect();
    let (v, history, converged) = joint_diagonalize(&mut mats);
    let o = v.transpose();
    let unmixing = &o * &whitening.covariance_root_inverse;
    let canon = canonicalize_detailed(&unmixing)?;
    let rotation = DMatrix::from_fn(m, m, |i, j| canon.signs[i] * o[(canon.permutation[i], j)]);
    let identity = DMatrix::<T>::identity(m, m);
    let first = amari_distance(&o, &identity)?.as_f64();
    let trace = history
        .iter()
        .skip(1)
        .enumerate()
        .map(|(i, h)| IterationRecord {
            objective: h.as_f64(),
            amari_step: if i == 0 { first } else { 0.0 },
            orthogonality_defect: None,
        })
        .collect();
    Ok(UnmixingEstimate {
        rotation,
        lagrange: DVector::zeros(lower_len(m)),
        unmixing: canon.matrix,
        whitening,
        spectral_models: Vec::new(),
        trace,
        converged,
    })
}
