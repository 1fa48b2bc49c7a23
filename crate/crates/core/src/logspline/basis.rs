use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const DEGREE: usize = 3;

/// Cubic spline space on `[0, pi]` whose members satisfy
/// `g'(0) = g'''(0) = g'(pi) = g'''(pi) = 0`.
///
/// Built from the clamped cubic B-spline basis on the interior knots and
/// projected onto the null space of the four boundary functionals, so the
/// constraints hold exactly for every coefficient vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SplineBasis<T: Scalar> {
    knots: Vec<T>,
    /// `[0, 0, 0, 0, t_1, .., t_K, pi, pi, pi, pi]`
    knot_vector: Vec<T>,
    /// Orthonormal null-space basis, `(K + 4) x dim`.
    projection: DMatrix<T>,
}

impl<T: Scalar> SplineBasis<T> {
    /// `knots` must be strictly increasing and lie strictly inside `(0, pi)`.
    pub fn new(knots: Vec<T>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::InvalidArgument("at least one knot is required".into()));
        }
        let pi = T::pi();
        if knots.iter().any(|&t| !(t > T::zero() && t < pi)) {
            return Err(Error::InvalidArgument("knots must lie strictly inside (0, pi)".into()));
        }
        if knots.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidArgument("knots must be strictly increasing".into()));
        }
        let mut knot_vector = vec![T::zero(); DEGREE + 1];
        knot_vector.extend_from_slice(&knots);
        knot_vector.extend(std::iter::repeat_n(pi, DEGREE + 1));

        let n = knots.len() + DEGREE + 1;
        let rows = [
            derivative_values(&knot_vector, T::zero(), 1),
            derivative_values(&knot_vector, T::zero(), 3),
            derivative_values(&knot_vector, pi, 1),
            derivative_values(&knot_vector, pi, 3),
        ];
        let projection = null_space_complement(&rows, n);
        Ok(Self { knots, knot_vector, projection })
    }

    /// `count` knots at `pi * i / (count + 1)`.
    pub fn equally_spaced(count: usize) -> Result<Self> {
        Self::new((1..=count).map(|i| T::lit(PI * i as f64 / (count + 1) as f64)).collect())
    }

    pub fn knots(&self) -> &[T] {
        &self.knots
    }

    /// Number of free spline coefficients.
    pub fn dimension(&self) -> usize {
        self.projection.ncols()
    }

    /// Number of unconstrained cubic B-splines (`K + 4`).
    pub fn unconstrained_dimension(&self) -> usize {
        self.projection.nrows()
    }

    pub fn projection(&self) -> &DMatrix<T> {
        &self.projection
    }

    fn check_range(r: T) -> Result<()> {
        if !(r >= T::zero() && r <= T::pi()) {
            return Err(Error::InvalidArgument(format!("frequency {r} outside [0, pi]")));
        }
        Ok(())
    }

    /// Values of the clamped cubic B-splines at `r` (they sum to one).
    pub fn unconstrained(&self, r: T) -> Result<DVector<T>> {
        Self::check_range(r)?;
        Ok(DVector::from_vec(derivative_values(&self.knot_vector, r, 0)))
    }

    /// Constrained basis values at `r`; `g(r) = beta^T eval(r)`.
    pub fn eval(&self, r: T) -> Result<DVector<T>> {
        Ok(self.projection.tr_mul(&self.unconstrained(r)?))
    }

    /// `order`-th derivative of the constrained basis at `r` (`order <= 3`).
    ///
    /// Third derivatives are one-sided at the boundary (right-limit at 0, left-limit at pi).
    pub fn derivative(&self, r: T, order: usize) -> Result<DVector<T>> {
        Self::check_range(r)?;
        if order > DEGREE {
            return Ok(DVector::zeros(self.dimension()));
        }
        let raw = DVector::from_vec(derivative_values(&self.knot_vector, r, order));
        Ok(self.projection.tr_mul(&raw))
    }

    /// Coefficients of the constant function `c`.
    pub fn constant_coefficients(&self, c: T) -> DVector<T> {
        let ones = DVector::from_element(self.unconstrained_dimension(), c);
        self.projection.tr_mul(&ones)
    }

    /// Design matrix `N x dim` whose row `i` is `eval(r_i)`.
    pub fn design(&self, frequencies: &[T]) -> Result<DMatrix<T>> {
        let mut x = DMatrix::zeros(frequencies.len(), self.dimension());
        for (i, &r) in frequencies.iter().enumerate() {
            x.row_mut(i).copy_from(&self.eval(r)?.transpose());
        }
        Ok(x)
    }
}

/// Degree-`p` B-spline values at `r` over the full knot vector.
fn bspline_values<T: Scalar>(kv: &[T], p: usize, r: T) -> Vec<T> {
    let m = kv.len();
    // degree 0: indicator of the half-open span; the right end uses the last nonempty span
    let mut vals: Vec<T> = (0..m - 1)
        .map(|i| if kv[i] <= r && r < kv[i + 1] { T::one() } else { T::zero() })
        .collect();
    if r >= kv[m - 1] {
        if let Some(last) = (0..m - 1).rev().find(|&i| kv[i] < kv[i + 1]) {
            vals[last] = T::one();
        }
    }
    for q in 1..=p {
        let mut next = vec![T::zero(); m - 1 - q];
        for (i, slot) in next.iter_mut().enumerate() {
            let mut v = T::zero();
            let d1 = kv[i + q] - kv[i];
            if d1 > T::zero() {
                v += (r - kv[i]) / d1 * vals[i];
            }
            let d2 = kv[i + q + 1] - kv[i + 1];
            if d2 > T::zero() {
                v += (kv[i + q + 1] - r) / d2 * vals[i + 1];
            }
            *slot = v;
        }
        vals = next;
    }
    vals
}

/// `order`-th derivative of every cubic B-spline at `r`.
fn derivative_values<T: Scalar>(kv: &[T], r: T, order: usize) -> Vec<T> {
    let mut vals = bspline_values(kv, DEGREE - order, r);
    for p in (DEGREE - order + 1)..=DEGREE {
        let pf = T::count(p);
        let mut next = vec![T::zero(); vals.len() - 1];
        for (i, slot) in next.iter_mut().enumerate() {
            let mut v = T::zero();
            let d1 = kv[i + p] - kv[i];
            if d1 > T::zero() {
                v += vals[i] / d1;
            }
            let d2 = kv[i + p + 1] - kv[i + 1];
            if d2 > T::zero() {
                v -= vals[i + 1] / d2;
            }
            *slot = pf * v;
        }
        vals = next;
    }
    vals
}

/// Orthonormal basis of the orthogonal complement of span(`rows`) in `R^n`.
fn null_space_complement<T: Scalar>(rows: &[Vec<T>], n: usize) -> DMatrix<T> {
    let tol = T::lit(1e-9);
    let mut ortho: Vec<DVector<T>> = Vec::new();
    let reduce = |v: &mut DVector<T>, basis: &[DVector<T>]| {
        for _ in 0..2 {
            for q in basis {
                let c = q.dot(v);
                v.axpy(-c, q, T::one());
            }
        }
    };
    for row in rows {
        let mut v = DVector::from_column_slice(row);
        let scale = v.norm();
        if scale == T::zero() {
            continue;
        }
        v /= scale;
        reduce(&mut v, &ortho);
        let nv = v.norm();
        if nv > tol {
            ortho.push(v / nv);
        }
    }
    let n_constraints = ortho.len();
    for i in 0..n {
        if ortho.len() == n {
            break;
        }
        let mut v = DVector::zeros(n);
        v[i] = T::one();
        reduce(&mut v, &ortho);
        let nv = v.norm();
        if nv > T::lit(1e-6) {
            ortho.push(v / nv);
        }
    }
    DMatrix::from_columns(&ortho[n_constraints..])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn basis(k: usize) -> SplineBasis<f64> {
        SplineBasis::equally_spaced(k).unwrap()
    }

    #[test]
    fn dimension_equals_knot_count() {
        for k in 1..10 {
            assert_eq!(basis(k).dimension(), k);
        }
    }

    #[test]
    fn partition_of_unity_before_projection() {
        let b = SplineBasis::<f64>::new(vec![0.3, 0.31, 1.0, 2.5, 3.0]).unwrap();
        for i in 0..=200 {
            let r = PI * i as f64 / 200.0;
            let s = b.unconstrained(r).unwrap().sum();
            assert!((s - 1.0).abs() < 1e-12, "r={r} sum={s}");
        }
    }

    #[test]
    fn constants_are_reproduced() {
        let b = basis(6);
        let beta = b.constant_coefficients(1.0);
        for i in 0..50 {
            let r = PI * i as f64 / 49.0;
            assert!((b.eval(r).unwrap().dot(&beta) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn boundary_derivatives_vanish() {
        let b = SplineBasis::<f64>::new(vec![0.2, 0.9, 1.7, 2.2, 2.9]).unwrap();
        let h = 1e-6;
        for j in 0..b.dimension() {
            let at = |r: f64| b.eval(r).unwrap()[j];
            // second-order one-sided differences; exact for cubics up to rounding
            let d0 = (-3.0 * at(0.0) + 4.0 * at(h) - at(2.0 * h)) / (2.0 * h);
            let dpi = (3.0 * at(PI) - 4.0 * at(PI - h) + at(PI - 2.0 * h)) / (2.0 * h);
            let scale = (0..=20).map(|i| at(PI * i as f64 / 20.0).abs()).fold(0.0, f64::max);
            assert!(d0.abs() <= 1e-6 * scale, "basis {j}: g'(0) ~ {d0}");
            assert!(dpi.abs() <= 1e-6 * scale, "basis {j}: g'(pi) ~ {dpi}");
            for order in [1, 3] {
                assert!(b.derivative(0.0, order).unwrap()[j].abs() < 1e-9 * (1.0 + scale));
                assert!(b.derivative(PI, order).unwrap()[j].abs() < 1e-9 * (1.0 + scale));
            }
        }
    }

    #[test]
    fn analytic_first_derivative_matches_finite_difference() {
        let b = SplineBasis::<f64>::new(vec![0.5, 1.1, 2.0]).unwrap();
        let h = 1e-6;
        for &r in &[0.3, 0.8, 1.5, 2.4, 3.0] {
            let fd = (b.eval(r + h).unwrap() - b.eval(r - h).unwrap()) / (2.0 * h);
            let an = b.derivative(r, 1).unwrap();
            assert!((&fd - &an).norm() < 1e-6 * (1.0 + an.norm()));
        }
    }

    #[test]
    fn invalid_knots() {
        assert!(SplineBasis::<f64>::new(vec![]).is_err());
        assert!(SplineBasis::<f64>::new(vec![0.0, 1.0]).is_err());
        assert!(SplineBasis::<f64>::new(vec![1.0, 1.0]).is_err());
        assert!(SplineBasis::<f64>::new(vec![2.0, 1.0]).is_err());
        assert!(SplineBasis::<f64>::new(vec![1.0, PI]).is_err());
    }

    #[test]
    fn out_of_range_frequency() {
        let b = basis(3);
        assert!(b.eval(-0.01).is_err());
        assert!(b.eval(PI + 1e-9).is_err());
        assert!(b.eval(PI).is_ok());
    }
}
