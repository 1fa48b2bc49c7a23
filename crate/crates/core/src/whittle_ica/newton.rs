use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::linalg::{orthogonality_defect, polar_orthogonal, ridge_if_ill_conditioned, symmetrize};
use crate::scalar::Scalar;

use super::objective::{unvec, vec_of, Derivatives, WhittleObjective};

/// Orthogonality defect above which a trial rotation is re-projected.
pub const REPROJECT_THRESHOLD: f64 = 0.5;

/// Full Newton increment for `(vec(O), lambda)`.
#[derive(Debug, Clone)]
pub struct NewtonStep<T: Scalar> {
    pub delta_o: DVector<T>,
    pub delta_lambda: DVector<T>,
    /// A ridge was added to `H1` or to `H2^T H1^{-1} H2`.
    pub ridged: bool,
    /// Shift added to `H1` to make it positive definite on the constraint tangent space.
    pub curvature_shift: T,
}

/// Newton increment from
///
/// `O_new = O - H1^{-1} (I - H2 (H2^T H1^{-1} H2)^{-1} H2^T H1^{-1}) grad_O`
/// `        - H1^{-1} H2 (H2^T H1^{-1} H2)^{-1} grad_lambda`,
/// `lambda_new = lambda - (H2^T H1^{-1} H2)^{-1} H2^T H1^{-1} grad_O + (H2^T H1^{-1} H2)^{-1} grad_lambda`.
///
/// Inverses are applied through LU solves.
pub fn kkt_newton_step<T: Scalar>(d: &Derivatives<T>) -> Result<NewtonStep<T>> {
    kkt_step_with(d, None)
}

fn kkt_step_with<T: Scalar>(d: &Derivatives<T>, tangent: Option<&DMatrix<T>>) -> Result<NewtonStep<T>> {
    let n = d.h1.nrows();
    let l = d.h2.ncols();
    if d.h1.ncols() != n || d.h2.nrows() != n || d.grad_o.len() != n || d.grad_lambda.len() != l {
        return Err(Error::Dimension("inconsistent derivative blocks".into()));
    }
    let mut h1 = symmetrize(&d.h1);
    let mut curvature_shift = T::zero();
    if let Some(z) = tangent {
        let reduced = symmetrize(&(z.transpose() * &h1 * z));
        let min_eig = SymmetricEigen::new(reduced).eigenvalues.min();
        let scale = h1.diagonal().iter().fold(T::zero(), |a, &v| a.max(v.abs())).max(T::eps());
        let floor = T::lit(1e-6) * scale;
        if min_eig < floor {
            curvature_shift = floor - min_eig;
            for i in 0..n {
                h1[(i, i)] += curvature_shift;
            }
        }
    }
    let mut ridged = ridge_if_ill_conditioned(&mut h1);
    let lu = h1.lu();
    let h1_inv_g = lu.solve(&d.grad_o).ok_or(Error::Singular)?;
    let h1_inv_h2 = lu.solve(&d.h2).ok_or(Error::Singular)?;
    let mut schur = symmetrize(&(d.h2.transpose() * &h1_inv_h2));
    ridged |= ridge_if_ill_conditioned(&mut schur);
    let schur_lu = schur.lu();
    // (H2^T H1^{-1} H2)^{-1} (grad_lambda - H2^T H1^{-1} grad_O)
    let rhs = &d.grad_lambda - d.h2.transpose() * &h1_inv_g;
    let delta_lambda = schur_lu.solve(&rhs).ok_or(Error::Singular)?;
    let delta_o = -(h1_inv_g + &h1_inv_h2 * &delta_lambda);
    if delta_o.iter().chain(delta_lambda.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Singular);
    }
    Ok(NewtonStep { delta_o, delta_lambda, ridged, curvature_shift })
}

/// Orthonormal basis (columns) of `{ vec(K O^{-T}) : K skew }`, the directions
/// that keep `O O^T` fixed to first order.
pub fn tangent_basis<T: Scalar>(o: &DMatrix<T>) -> Result<DMatrix<T>> {
    let m = o.nrows();
    let o_inv_t = o.clone().try_inverse().ok_or(Error::Singular)?.transpose();
    let dim = m * (m - 1) / 2;
    let mut raw = DMatrix::zeros(m * m, dim);
    let mut col = 0;
    for a in 0..m {
        for b in (a + 1)..m {
            let mut k = DMatrix::zeros(m, m);
            k[(a, b)] = T::one();
            k[(b, a)] = -T::one();
            raw.column_mut(col).copy_from(&vec_of(&(k * &o_inv_t)));
            col += 1;
        }
    }
    if dim == 0 {
        return Ok(raw);
    }
    Ok(raw.qr().q())
}

/// Result of one safeguarded Newton update.
#[derive(Debug, Clone)]
pub struct NewtonOutcome<T: Scalar> {
    pub o: DMatrix<T>,
    pub lambda: DVector<T>,
    pub objective_before: T,
    pub objective_after: T,
    pub halvings: usize,
    /// No trial step decreased `F`; the previous iterate is returned.
    pub stalled: bool,
    pub reprojected: bool,
    pub ridged: bool,
    pub curvature_shift: T,
}

/// One Newton update of `(O, lambda)` with the spectra held fixed.
///
/// Trial rotations whose orthogonality defect exceeds `reproject_threshold`
/// are replaced by their polar factor before `F` is evaluated; the step is
/// halved until `F` does not increase. [`REPROJECT_THRESHOLD`] is the usual
/// safeguard, and a threshold of zero re-projects every trial.
pub fn newton_update<T: Scalar>(
    objective: &WhittleObjective<'_, T>,
    o: &DMatrix<T>,
    lambda: &DVector<T>,
    step_halving_limit: usize,
    reproject_threshold: T,
) -> Result<NewtonOutcome<T>> {
    let m = o.nrows();
    let d = objective.derivatives(o, lambda)?;
    let before = d.value;
    if d.grad_o.iter().all(|v| *v == T::zero()) && d.grad_lambda.iter().all(|v| *v == T::zero()) {
        return Ok(NewtonOutcome {
            o: o.clone(),
            lambda: lambda.clone(),
            objective_before: before,
            objective_after: before,
            halvings: 0,
            stalled: false,
            reprojected: false,
            ridged: false,
            curvature_shift: T::zero(),
        });
    }
    let z = tangent_basis(o)?;
    let step = kkt_step_with(&d, Some(&z))?;
    let delta_o = unvec(&step.delta_o, m);

    let mut alpha = T::one();
    for halvings in 0..=step_halving_limit {
        let mut cand = o + &delta_o * alpha;
        let reprojected = orthogonality_defect(&cand) > reproject_threshold;
        if reprojected {
            cand = polar_orthogonal(&cand);
        }
        let cand_lambda = lambda + &step.delta_lambda * alpha;
        let after = objective.penalized(&cand, &cand_lambda);
        if after <= before {
            return Ok(NewtonOutcome {
                o: cand,
                lambda: cand_lambda,
                objective_before: before,
                objective_after: after,
                halvings,
                stalled: false,
                reprojected,
                ridged: step.ridged,
                curvature_shift: step.curvature_shift,
            });
        }
        alpha *= T::lit(0.5);
    }
    Ok(NewtonOutcome {
        o: o.clone(),
        lambda: lambda.clone(),
        objective_before: before,
        objective_after: before,
        halvings: step_halving_limit,
        stalled: true,
        reprojected: false,
        ridged: step.ridged,
        curvature_shift: step.curvature_shift,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{lower_len, random_orthogonal};
    use crate::signals::MultichannelSeries;
    use crate::spectral::cross_periodogram;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn one_step_solves_equality_constrained_quadratic() {
        // minimize 1/2 x^T H x + b^T x subject to A^T x = c, written as
        // F(x, lambda) = 1/2 x^T H x + b^T x + lambda^T (A^T x - c)
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 6;
        let l = 2;
        let r = DMatrix::<f64>::from_fn(n, n, |_, _| rng.sample(StandardNormal));
        let h = &r * r.transpose() + DMatrix::identity(n, n);
        let b = DVector::<f64>::from_fn(n, |_, _| rng.sample(StandardNormal));
        let a = DMatrix::<f64>::from_fn(n, l, |_, _| rng.sample(StandardNormal));
        let c = DVector::<f64>::from_fn(l, |_, _| rng.sample(StandardNormal));

        // reference: solve the KKT system directly
        let mut kkt = DMatrix::zeros(n + l, n + l);
        kkt.view_mut((0, 0), (n, n)).copy_from(&h);
        kkt.view_mut((0, n), (n, l)).copy_from(&a);
        kkt.view_mut((n, 0), (l, n)).copy_from(&a.transpose());
        let mut rhs = DVector::zeros(n + l);
        rhs.rows_mut(0, n).copy_from(&-&b);
        rhs.rows_mut(n, l).copy_from(&c);
        let sol = kkt.lu().solve(&rhs).unwrap();

        let x0 = DVector::<f64>::from_fn(n, |_, _| rng.sample(StandardNormal));
        let lam0 = DVector::<f64>::from_fn(l, |_, _| rng.sample(StandardNormal));
        let d = Derivatives {
            value: 0.0,
            grad_o: &h * &x0 + &b + &a * &lam0,
            grad_lambda: a.transpose() * &x0 - &c,
            h1: h.clone(),
            h2: a.clone(),
        };
        let step = kkt_newton_step(&d).unwrap();
        let x1 = &x0 + &step.delta_o;
        let lam1 = &lam0 + &step.delta_lambda;
        assert!((&x1 - sol.rows(0, n)).amax() < 1e-8);
        assert!((&lam1 - sol.rows(n, l)).amax() < 1e-8);
    }

    #[test]
    fn stationary_point_is_a_fixed_point() {
        let d = Derivatives {
            value: 1.0,
            grad_o: DVector::zeros(4),
            grad_lambda: DVector::zeros(3),
            h1: DMatrix::identity(4, 4) * 2.0,
            h2: DMatrix::from_fn(4, 3, |i, j| (i + 2 * j) as f64 * 0.3 + if i == j { 1.0 } else { 0.0 }),
        };
        let step = kkt_newton_step(&d).unwrap();
        assert!(step.delta_o.iter().all(|&v| v == 0.0));
        assert!(step.delta_lambda.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tangent_basis_preserves_gram_to_first_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let o: DMatrix<f64> = random_orthogonal(3, &mut rng);
        let z = tangent_basis(&o).unwrap();
        assert_eq!(z.ncols(), 3);
        for c in 0..3 {
            let dir = unvec(&z.column(c).into_owned(), 3);
            let sym = &dir * o.transpose() + &o * dir.transpose();
            assert!(sym.amax() < 1e-12);
        }
    }

    #[test]
    fn update_does_not_increase_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (m, t) = (3, 256);
        let x = DMatrix::from_fn(m, t, |_, _| rng.sample::<f64, _>(StandardNormal));
        let stack = cross_periodogram(&MultichannelSeries::new(x).unwrap()).unwrap();
        let g = DMatrix::from_fn(m, t / 2, |j, i| ((i as f64) * 0.03 * (j + 1) as f64).cos() - 1.8);
        let obj = WhittleObjective::from_log_density(&stack, g).unwrap();
        let mut o: DMatrix<f64> = random_orthogonal(m, &mut rng);
        let mut lambda = DVector::zeros(lower_len(m));
        for _ in 0..8 {
            let out = newton_update(&obj, &o, &lambda, 20, REPROJECT_THRESHOLD).unwrap();
            assert!(out.objective_after <= out.objective_before);
            o = polar_orthogonal(&out.o);
            lambda = out.lambda;
        }
    }
}
