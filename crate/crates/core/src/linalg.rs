//! Small dense linear-algebra helpers built on nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Number of free entries of a symmetric `m x m` matrix.
#[inline]
pub fn lower_len(m: usize) -> usize {
    m * (m + 1) / 2
}

/// Position of entry `(j, k)`, `k <= j`, in row-by-row lower-triangle order.
#[inline]
pub fn lower_index(j: usize, k: usize) -> usize {
    debug_assert!(k <= j);
    j * (j + 1) / 2 + k
}

/// Packs the lower triangle of a symmetric matrix.
pub fn pack_lower<T: Scalar>(s: &DMatrix<T>) -> DVector<T> {
    let m = s.nrows();
    let mut out = DVector::zeros(lower_len(m));
    for j in 0..m {
        for k in 0..=j {
            out[lower_index(j, k)] = s[(j, k)];
        }
    }
    out
}

/// Inverse of [`pack_lower`].
pub fn unpack_lower<T: Scalar>(v: &DVector<T>, m: usize) -> DMatrix<T> {
    let mut s = DMatrix::zeros(m, m);
    for j in 0..m {
        for k in 0..=j {
            s[(j, k)] = v[lower_index(j, k)];
            s[(k, j)] = v[lower_index(j, k)];
        }
    }
    s
}

/// `||O O^T - I||_F`.
pub fn orthogonality_defect<T: Scalar>(o: &DMatrix<T>) -> T {
    let mut g = o * o.transpose();
    for i in 0..g.nrows() {
        g[(i, i)] -= T::one();
    }
    g.norm()
}

/// Nearest orthogonal matrix in Frobenius norm (orthogonal polar factor).
pub fn polar_orthogonal<T: Scalar>(m: &DMatrix<T>) -> DMatrix<T> {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    u * v_t
}

/// Symmetric square root and inverse square root of an SPD matrix.
///
/// Fails when the smallest eigenvalue is not above `rel_tol` times the largest.
pub fn sym_sqrt_and_inv_sqrt<T: Scalar>(
    s: &DMatrix<T>,
    rel_tol: f64,
) -> Result<(DMatrix<T>, DMatrix<T>)> {
    let eig = SymmetricEigen::new(s.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(max > T::zero()) || !(min > T::lit(rel_tol) * max) {
        let ratio = if max > T::zero() { (min / max).as_f64() } else { 0.0 };
        return Err(Error::RankDeficient { ratio });
    }
    let q = &eig.eigenvectors;
    let root = q * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.sqrt())) * q.transpose();
    let inv = q * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| T::one() / l.sqrt())) * q.transpose();
    Ok((symmetrize(&root), symmetrize(&inv)))
}

pub fn symmetrize<T: Scalar>(s: &DMatrix<T>) -> DMatrix<T> {
    (s + s.transpose()) * T::lit(0.5)
}

/// Sample covariance `(1/T) sum (x - mean)(x - mean)^T` of the rows of `data`.
pub fn sample_covariance<T: Scalar>(data: &DMatrix<T>) -> DMatrix<T> {
    let t = data.ncols();
    let mut centered = data.clone();
    for mut row in centered.row_iter_mut() {
        let mean = row.sum() / T::count(t);
        row.add_scalar_mut(-mean);
    }
    symmetrize(&((&centered * centered.transpose()) / T::count(t)))
}

/// Haar-distributed random orthogonal matrix (QR of a Gaussian matrix with sign fix).
pub fn random_orthogonal<T: Scalar, R: Rng + ?Sized>(m: usize, rng: &mut R) -> DMatrix<T> {
    let g = DMatrix::<T>::from_fn(m, m, |_, _| T::lit(rng.sample::<f64, _>(StandardNormal)));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..m {
        if r[(j, j)] < T::zero() {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Inverse via LU; `Singular` when the factorization fails.
pub fn invert<T: Scalar>(m: &DMatrix<T>) -> Result<DMatrix<T>> {
    if !m.is_square() {
        return Err(Error::Dimension(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    m.clone().try_inverse().ok_or(Error::Singular)
}

/// Ratio of the largest to the smallest eigenvalue magnitude of a symmetric matrix.
pub fn symmetric_condition<T: Scalar>(s: &DMatrix<T>) -> T {
    let eig = SymmetricEigen::new(symmetrize(s));
    let mut lo = T::max_value().unwrap();
    let mut hi = T::zero();
    for &l in eig.eigenvalues.iter() {
        let a = l.abs();
        lo = lo.min(a);
        hi = hi.max(a);
    }
    if lo == T::zero() {
        T::max_value().unwrap()
    } else {
        hi / lo
    }
}

/// Adds `1e-8 * sum|diag|` to the diagonal when the condition number exceeds `1e12`.
///
/// Returns whether the ridge was applied.
pub fn ridge_if_ill_conditioned<T: Scalar>(s: &mut DMatrix<T>) -> bool {
    let cond = symmetric_condition(s);
    if cond.as_f64() <= 1e12 {
        return false;
    }
    let mut scale = s.diagonal().iter().fold(T::zero(), |acc, &d| acc + d.abs());
    if scale == T::zero() {
        scale = T::one();
    }
    let ridge = T::lit(1e-8) * scale;
    for i in 0..s.nrows() {
        s[(i, i)] += ridge;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lower_packing_round_trips() {
        let s = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 5.0, 3.0, 5.0, 6.0]);
        let v = pack_lower(&s);
        assert_eq!(v.as_slice(), &[1.0, 2.0, 4.0, 3.0, 5.0, 6.0]);
        assert_eq!(unpack_lower(&v, 3), s);
    }

    #[test]
    fn random_orthogonal_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q: DMatrix<f64> = random_orthogonal(5, &mut rng);
        assert!(orthogonality_defect(&q) < 1e-12);
    }

    #[test]
    fn polar_factor_of_orthogonal_is_itself() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let q: DMatrix<f64> = random_orthogonal(4, &mut rng);
        assert!((polar_orthogonal(&q) - &q).norm() < 1e-12);
        let scaled = &q * 3.0;
        assert!((polar_orthogonal(&scaled) - &q).norm() < 1e-12);
    }

    #[test]
    fn inverse_sqrt_whitens() {
        let s = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let (root, inv) = sym_sqrt_and_inv_sqrt(&s, 1e-10).unwrap();
        assert!((&inv * &s * &inv - DMatrix::identity(2, 2)).norm() < 1e-12);
        assert!((&root * &root - &s).norm() < 1e-12);
    }

    #[test]
    fn singular_covariance_is_rejected() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(
            sym_sqrt_and_inv_sqrt(&s, 1e-10),
            Err(Error::RankDeficient { .. })
        ));
    }
}
