//! Separation quality metrics.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Amari distance between `m1` and `m2`, computed on `a = m1 m2^{-1}`:
///
/// `(1/M) sum_i (sum_j |a_ij| / max_j |a_ij| - 1) + (1/M) sum_j (sum_i |a_ij| / max_i |a_ij| - 1)`.
///
/// Zero exactly when `a` is a scaled permutation.
pub fn amari_distance<T: Scalar>(m1: &DMatrix<T>, m2: &DMatrix<T>) -> Result<T> {
    let m = m1.nrows();
    if !m1.is_square() || m2.shape() != m1.shape() || m == 0 {
        return Err(Error::Dimension(format!(
            "amari distance needs two equal square matrices, got {:?} and {:?}",
            m1.shape(),
            m2.shape()
        )));
    }
    let sv = m2.singular_values();
    if !(sv.min() > sv.max() * T::eps() * T::count(m)) {
        return Err(Error::Singular);
    }
    if m1 == m2 {
        return Ok(T::zero());
    }
    // a^T = m2^{-T} m1^T
    let a_t = m2.transpose().lu().solve(&m1.transpose()).ok_or(Error::Singular)?;
    Ok(amari_index(&a_t.transpose()))
}

/// The Amari formula applied to `a` itself; `amari_index(W A)` scores an
/// unmixing `W` against a known mixing `A`.
pub fn amari_index<T: Scalar>(a: &DMatrix<T>) -> T {
    let a = a.map(|v| v.abs());
    let m = T::count(a.nrows());
    let term = |sum: T, max: T| if max > T::zero() { sum / max - T::one() } else { T::zero() };
    let rows = a.row_iter().fold(T::zero(), |acc, r| acc + term(r.sum(), r.max()));
    let cols = a.column_iter().fold(T::zero(), |acc, c| acc + term(c.sum(), c.max()));
    rows / m + cols / m
}

/// Correlation comparison between estimated and true sources.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    /// Amari distance of the unmixing estimate against the true unmixing, when known.
    pub amari: Option<f64>,
    /// `|corr|` with estimated channels reordered so row `j` is the best match of true source `j`.
    pub correlation_matrix: Vec<Vec<f64>>,
    /// Sum of the off-diagonal entries of `correlation_matrix`.
    pub cor_disc: f64,
    /// `order[j]` is the estimated channel matched to true source `j`.
    pub order: Vec<usize>,
}

impl MetricRecord {
    pub fn with_amari(mut self, amari: f64) -> Self {
        self.amari = Some(amari);
        self
    }
}

fn centered_unit_rows<T: Scalar>(s: &DMatrix<T>) -> Result<DMatrix<f64>> {
    let t = s.ncols() as f64;
    let mut out = DMatrix::<f64>::from_fn(s.nrows(), s.ncols(), |i, j| s[(i, j)].as_f64());
    for (i, mut row) in out.row_iter_mut().enumerate() {
        let mean = row.sum() / t;
        row.add_scalar_mut(-mean);
        let norm = row.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::ZeroVariance(i));
        }
        row /= norm;
    }
    Ok(out)
}

/// Absolute Pearson correlations between each estimated and each true channel,
/// greedily matched: the largest remaining entry fixes a pair, ties going to
/// the lower estimated then lower true index.
pub fn correlation_discrepancy<T: Scalar>(s_hat: &DMatrix<T>, s_true: &DMatrix<T>) -> Result<MetricRecord> {
    if s_hat.shape() != s_true.shape() {
        return Err(Error::Dimension(format!(
            "estimated sources are {:?}, true sources are {:?}",
            s_hat.shape(),
            s_true.shape()
        )));
    }
    if s_hat.ncols() < 2 {
        return Err(Error::InvalidArgument("correlation needs at least two samples".into()));
    }
    let m = s_hat.nrows();
    let est = centered_unit_rows(s_hat)?;
    let truth = centered_unit_rows(s_true)?;
    let r = (&est * truth.transpose()).map(|v| v.abs().min(1.0));

    let mut order = vec![usize::MAX; m];
    let mut used_est = vec![false; m];
    for _ in 0..m {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in (0..m).filter(|&i| !used_est[i]) {
            for j in (0..m).filter(|&j| order[j] == usize::MAX) {
                if best.is_none_or(|(_, _, b)| r[(i, j)] > b) {
                    best = Some((i, j, r[(i, j)]));
                }
            }
        }
        let (i, j, _) = best.expect("unmatched pair remains");
        used_est[i] = true;
        order[j] = i;
    }

    let matrix: Vec<Vec<f64>> = (0..m).map(|j| (0..m).map(|k| r[(order[j], k)]).collect()).collect();
    let cor_disc = (0..m)
        .flat_map(|j| (0..m).filter(move |&k| k != j).map(move |k| (j, k)))
        .map(|(j, k)| matrix[j][k])
        .sum();
    Ok(MetricRecord { amari: None, correlation_matrix: matrix, cor_disc, order })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian(m: usize, t: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(m, t, |_, _| rng.sample(StandardNormal))
    }

    #[test]
    fn all_ones_gives_two() {
        let ones = DMatrix::from_element(2, 2, 1.0);
        let d = amari_distance(&ones, &DMatrix::identity(2, 2)).unwrap();
        assert_eq!(d, 2.0);
    }

    #[test]
    fn self_distance_zero_and_scaled_permutation() {
        let m = gaussian(4, 4, 1);
        assert_eq!(amari_distance(&m, &m).unwrap(), 0.0);
        let pd = DMatrix::from_row_slice(4, 4, &[0., -2., 0., 0., 0.5, 0., 0., 0., 0., 0., 0., 3., 0., 0., -0.7, 0.]);
        assert!(amari_distance(&(&pd * &m), &m).unwrap() < 1e-12);
    }

    #[test]
    fn singular_denominator() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(amari_distance(&s, &s), Err(Error::Singular)));
    }

    #[test]
    fn identical_sources_match() {
        let s = gaussian(3, 4096, 2);
        let rec = correlation_discrepancy(&s, &s).unwrap();
        for j in 0..3 {
            assert!((rec.correlation_matrix[j][j] - 1.0).abs() < 1e-12);
        }
        assert!(rec.cor_disc < 0.1 * 6.0);
        assert_eq!(rec.order, vec![0, 1, 2]);
    }

    #[test]
    fn permuted_scaled_sources_give_same_record() {
        let s = gaussian(3, 1000, 3);
        let mut shuffled = DMatrix::zeros(3, 1000);
        shuffled.row_mut(0).copy_from(&(s.row(2) * -3.0));
        shuffled.row_mut(1).copy_from(&(s.row(0) * 0.5));
        shuffled.row_mut(2).copy_from(&(s.row(1) * 2.0));
        let a = correlation_discrepancy(&s, &s).unwrap();
        let b = correlation_discrepancy(&shuffled, &s).unwrap();
        assert_eq!(b.order, vec![1, 2, 0]);
        assert!((a.cor_disc - b.cor_disc).abs() < 1e-12);
    }

    #[test]
    fn independent_sources_are_weakly_correlated() {
        let t = 4096;
        let rec = correlation_discrepancy(&gaussian(4, t, 4), &gaussian(4, t, 5)).unwrap();
        let bound = 5.0 / (t as f64).sqrt();
        assert!(rec.correlation_matrix.iter().flatten().all(|&v| v < bound));
    }

    #[test]
    fn constant_channel_rejected() {
        let mut s = gaussian(2, 50, 6);
        s.row_mut(1).fill(3.0);
        assert!(matches!(correlation_discrepancy(&s, &gaussian(2, 50, 7)), Err(Error::ZeroVariance(1))));
    }
}
