use std::cmp::Ordering;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A canonical representative together with the row operations that produced it:
/// row `i` of `matrix` is `signs[i] * scales[i] * W[permutation[i]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Canonical<T: Scalar> {
    pub matrix: DMatrix<T>,
    pub permutation: Vec<usize>,
    pub signs: Vec<T>,
    pub scales: Vec<T>,
}

/// Unit-norm rows, largest-magnitude entry positive, rows in ascending lexicographic order.
pub fn canonicalize<T: Scalar>(w: &DMatrix<T>) -> Result<DMatrix<T>> {
    Ok(canonicalize_detailed(w)?.matrix)
}

pub fn canonicalize_detailed<T: Scalar>(w: &DMatrix<T>) -> Result<Canonical<T>> {
    let (m, n) = w.shape();
    let tol = T::lit(64.0) * T::count(n.max(1)) * T::eps();
    let mut rows: Vec<(usize, Vec<T>, T, T)> = Vec::with_capacity(m);
    for i in 0..m {
        let mut row: Vec<T> = w.row(i).iter().copied().collect();
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("row {i} has non-finite entries")));
        }
        let norm = row.iter().fold(T::zero(), |a, &v| a + v * v).sqrt();
        if norm == T::zero() {
            return Err(Error::ZeroRow(i));
        }
        let scale = if (norm - T::one()).abs() <= tol { T::one() } else { T::one() / norm };
        if scale != T::one() {
            for v in &mut row {
                *v /= norm;
            }
        }
        let max = row.iter().copied().fold(T::min_value().unwrap(), |a, v| a.max(v));
        let max_abs = row.iter().fold(T::zero(), |a, &v| a.max(v.abs()));
        let sign = if max < max_abs { -T::one() } else { T::one() };
        if sign < T::zero() {
            for v in &mut row {
                *v = -*v;
            }
        }
        rows.push((i, row, sign, scale));
    }
    rows.sort_by(|a, b| lexicographic(&a.1, &b.1));
    let matrix = DMatrix::from_fn(m, n, |i, j| rows[i].1[j]);
    Ok(Canonical {
        matrix,
        permutation: rows.iter().map(|r| r.0).collect(),
        signs: rows.iter().map(|r| r.2).collect(),
        scales: rows.iter().map(|r| r.3).collect(),
    })
}

fn lexicographic<T: Scalar>(a: &[T], b: &[T]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y) {
            Some(Ordering::Equal) | None => continue,
            Some(o) => return o,
        }
    }
    Ordering::Equal
}
