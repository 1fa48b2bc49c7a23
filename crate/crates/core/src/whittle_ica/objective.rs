use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{lower_index, lower_len, unpack_lower};
use crate::logspline::SpectralModel;
use crate::scalar::Scalar;
use crate::spectral::PeriodogramStack;

/// Joint Whittle objective for fixed source spectra.
///
/// Holds the clamped log-spectra `g[(j, i)]` of every source on the grid.
#[derive(Debug, Clone)]
pub struct WhittleObjective<'a, T: Scalar> {
    stack: &'a PeriodogramStack<T>,
    log_density: DMatrix<T>,
    /// `Q_j = sum_i exp(-g_ji) Re f(r_i)`.
    weighted: Vec<DMatrix<T>>,
}

/// First and second derivatives of the penalized objective `F = -loglik + lambda^T C`
/// with `O` vectorized column-major (`O[(a, b)]` sits at `a + b M`).
#[derive(Debug, Clone)]
pub struct Derivatives<T: Scalar> {
    pub value: T,
    pub grad_o: DVector<T>,
    pub grad_lambda: DVector<T>,
    /// `d2F / dvec(O)^2`, `M^2 x M^2`.
    pub h1: DMatrix<T>,
    /// `d2F / dvec(O) dlambda`, `M^2 x M(M+1)/2`.
    pub h2: DMatrix<T>,
}

/// Lower-triangle residual `C = (O O^T - I)_{jk}, j >= k`.
pub fn constraint_residual<T: Scalar>(o: &DMatrix<T>) -> DVector<T> {
    let m = o.nrows();
    let g = o * o.transpose();
    let mut c = DVector::zeros(lower_len(m));
    for j in 0..m {
        for k in 0..=j {
            c[lower_index(j, k)] = g[(j, k)] - if j == k { T::one() } else { T::zero() };
        }
    }
    c
}

/// Column-major vectorization.
pub fn vec_of<T: Scalar>(o: &DMatrix<T>) -> DVector<T> {
    DVector::from_column_slice(o.as_slice())
}

pub fn unvec<T: Scalar>(v: &DVector<T>, m: usize) -> DMatrix<T> {
    DMatrix::from_column_slice(m, m, v.as_slice())
}

impl<'a, T: Scalar> WhittleObjective<'a, T> {
    pub fn new(stack: &'a PeriodogramStack<T>, models: &[SpectralModel<T>]) -> Result<Self> {
        let n = stack.len();
        let mut g = DMatrix::zeros(models.len(), n);
        for (j, model) in models.iter().enumerate() {
            if model.grid().len() != n {
                return Err(Error::Dimension(format!(
                    "model {j} covers {} frequencies, the periodogram has {n}",
                    model.grid().len()
                )));
            }
            for (i, v) in model.log_density_grid().into_iter().enumerate() {
                g[(j, i)] = v;
            }
        }
        Self::from_log_density(stack, g)
    }

    /// `g` is `M x floor(T/2)`; values are clamped like model log-densities.
    pub fn from_log_density(stack: &'a PeriodogramStack<T>, g: DMatrix<T>) -> Result<Self> {
        if g.nrows() != stack.n_channels() || g.ncols() != stack.len() {
            return Err(Error::Dimension(format!(
                "log-density table is {}x{}, expected {}x{}",
                g.nrows(),
                g.ncols(),
                stack.n_channels(),
                stack.len()
            )));
        }
        let c = T::lit(crate::logspline::LOG_DENSITY_CLAMP);
        let g = g.map(|v| v.max(-c).min(c));
        let weighted = (0..g.nrows())
            .map(|j| {
                let w: Vec<T> = g.row(j).iter().map(|&v| (-v).exp()).collect();
                stack.weighted_real_sum(&w)
            })
            .collect();
        Ok(Self { stack, log_density: g, weighted })
    }

    pub fn dim(&self) -> usize {
        self.log_density.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.stack.grid().n_samples()
    }

    pub fn log_density(&self) -> &DMatrix<T> {
        &self.log_density
    }

    /// `-(1/2T) sum_j sum_k [ q_jk exp(-g_jk) + g_jk ]`.
    pub fn loglik(&self, o: &DMatrix<T>) -> T {
        let two_t = T::count(2 * self.n_samples());
        let g_sum = self.log_density.sum();
        let mut quad = T::zero();
        for (j, q) in self.weighted.iter().enumerate() {
            let row = o.row(j).transpose();
            quad += row.dot(&(q * &row));
        }
        -(quad + g_sum) / two_t
    }

    /// Same value through explicit per-frequency quadratic forms.
    pub fn loglik_direct(&self, o: &DMatrix<T>) -> T {
        let q = self.stack.quadratic_forms(o);
        let mut acc = T::zero();
        for j in 0..q.nrows() {
            for i in 0..q.ncols() {
                let g = self.log_density[(j, i)];
                acc += q[(j, i)] * (-g).exp() + g;
            }
        }
        -acc / T::count(2 * self.n_samples())
    }

    /// `F(O, lambda) = -loglik(O) + lambda^T C(O)`.
    pub fn penalized(&self, o: &DMatrix<T>, lambda: &DVector<T>) -> T {
        -self.loglik(o) + lambda.dot(&constraint_residual(o))
    }

    pub fn derivatives(&self, o: &DMatrix<T>, lambda: &DVector<T>) -> Result<Derivatives<T>> {
        let m = self.dim();
        if o.shape() != (m, m) || lambda.len() != lower_len(m) {
            return Err(Error::Dimension(format!(
                "O is {:?} and lambda has {} entries for M = {m}",
                o.shape(),
                lambda.len()
            )));
        }
        let t = T::count(self.n_samples());
        let mm = m * m;
        // S with S_jj = 2 lambda_jj, S_jk = lambda_jk
        let mut s = unpack_lower(lambda, m);
        for j in 0..m {
            s[(j, j)] *= T::lit(2.0);
        }

        let mut grad_o = vec_of(&(&s * o));
        let mut h1 = DMatrix::zeros(mm, mm);
        for (j, q) in self.weighted.iter().enumerate() {
            let qo = q * o.row(j).transpose();
            for b in 0..m {
                grad_o[j + b * m] += qo[b] / t;
                for c in 0..m {
                    h1[(j + b * m, j + c * m)] += q[(b, c)] / t;
                }
            }
        }
        for b in 0..m {
            for a in 0..m {
                for c in 0..m {
                    h1[(a + b * m, c + b * m)] += s[(a, c)];
                }
            }
        }

        let mut h2 = DMatrix::zeros(mm, lower_len(m));
        for j in 0..m {
            for k in 0..=j {
                let col = lower_index(j, k);
                for b in 0..m {
                    h2[(j + b * m, col)] += o[(k, b)];
                    h2[(k + b * m, col)] += o[(j, b)];
                }
            }
        }

        Ok(Derivatives {
            value: self.penalized(o, lambda),
            grad_o,
            grad_lambda: constraint_residual(o),
            h1,
            h2,
        })
    }
}

/// `loglik` for fitted source models.
pub fn whittle_loglik<T: Scalar>(
    o: &DMatrix<T>,
    models: &[SpectralModel<T>],
    stack: &PeriodogramStack<T>,
) -> Result<T> {
    check_square(o, stack)?;
    Ok(WhittleObjective::new(stack, models)?.loglik(o))
}

/// Derivatives of the penalized objective for fitted source models.
pub fn derivatives<T: Scalar>(
    o: &DMatrix<T>,
    lambda: &DVector<T>,
    models: &[SpectralModel<T>],
    stack: &PeriodogramStack<T>,
) -> Result<Derivatives<T>> {
    check_square(o, stack)?;
    WhittleObjective::new(stack, models)?.derivatives(o, lambda)
}

fn check_square<T: Scalar>(o: &DMatrix<T>, stack: &PeriodogramStack<T>) -> Result<()> {
    let m = stack.n_channels();
    if o.shape() != (m, m) {
        return Err(Error::Dimension(format!("O is {:?} for {m} channels", o.shape())));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random_orthogonal;
    use crate::signals::MultichannelSeries;
    use crate::spectral::cross_periodogram;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn setup(m: usize, t: usize, seed: u64) -> (PeriodogramStack<f64>, DMatrix<f64>, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(m, t, |_, _| rng.sample::<f64, _>(StandardNormal));
        let stack = cross_periodogram(&MultichannelSeries::new(x).unwrap()).unwrap();
        let g = DMatrix::from_fn(m, t / 2, |j, i| 0.5 * ((i as f64) * 0.05 * (j + 1) as f64).sin() - 1.8);
        (stack, g, rng)
    }

    #[test]
    fn single_channel_plug_in() {
        let t = 128;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = DMatrix::from_fn(1, t, |_, _| rng.sample::<f64, _>(StandardNormal));
        let stack = cross_periodogram(&MultichannelSeries::new(x).unwrap()).unwrap();
        let pg = stack.univariate(0);
        let mean = pg.iter().sum::<f64>() / pg.len() as f64;
        let g = DMatrix::from_element(1, t / 2, mean.ln());
        let obj = WhittleObjective::from_log_density(&stack, g).unwrap();
        let expect = -(pg.len() as f64) * (1.0 + mean.ln()) / (2.0 * t as f64);
        let got = obj.loglik(&DMatrix::identity(1, 1));
        assert!((got - expect).abs() < 1e-12 * expect.abs());
    }

    #[test]
    fn weighted_and_direct_agree() {
        let (stack, g, mut rng) = setup(3, 200, 2);
        let obj = WhittleObjective::from_log_density(&stack, g).unwrap();
        let o: DMatrix<f64> = random_orthogonal(3, &mut rng);
        let a = obj.loglik(&o);
        let b = obj.loglik_direct(&o);
        assert!((a - b).abs() < 1e-12 * a.abs());
    }

    #[test]
    fn permutation_relabels_exactly_enough() {
        let (stack, g, mut rng) = setup(3, 128, 3);
        let o: DMatrix<f64> = random_orthogonal(3, &mut rng);
        let perm = [2usize, 0, 1];
        let po = DMatrix::from_fn(3, 3, |i, j| o[(perm[i], j)]);
        let pg = DMatrix::from_fn(3, g.ncols(), |i, k| g[(perm[i], k)]);
        let a = WhittleObjective::from_log_density(&stack, g).unwrap().loglik_direct(&o);
        let b = WhittleObjective::from_log_density(&stack, pg).unwrap().loglik_direct(&po);
        assert!((a - b).abs() <= 4.0 * f64::EPSILON * a.abs());
    }

    #[test]
    fn penalty_is_inert_at_zero_lambda() {
        let (stack, g, mut rng) = setup(3, 128, 4);
        let obj = WhittleObjective::from_log_density(&stack, g).unwrap();
        let o: DMatrix<f64> = random_orthogonal(3, &mut rng);
        let d = obj.derivatives(&o, &DVector::zeros(6)).unwrap();
        assert!(d.grad_lambda.amax() < 1e-14);
        assert_eq!(d.value, -obj.loglik(&o));
        // likelihood part alone: row j of the gradient is Q_j o_j / T
        for j in 0..3 {
            let qo = &obj.weighted[j] * o.row(j).transpose() / 128.0;
            for b in 0..3 {
                assert_eq!(d.grad_o[j + 3 * b], qo[b]);
            }
        }
    }

    #[test]
    fn exact_zero_constraint_at_identity() {
        let (stack, g, _) = setup(2, 64, 5);
        let obj = WhittleObjective::from_log_density(&stack, g).unwrap();
        let d = obj.derivatives(&DMatrix::identity(2, 2), &DVector::zeros(3)).unwrap();
        assert!(d.grad_lambda.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn derivatives_match_central_differences() {
        for (m, seed) in [(2, 6), (3, 7)] {
            let (stack, g, mut rng) = setup(m, 256, seed);
            let obj = WhittleObjective::from_log_density(&stack, g).unwrap();
            let l = lower_len(m);
            let o = DMatrix::from_fn(m, m, |_, _| rng.sample::<f64, _>(StandardNormal));
            let lambda = DVector::from_fn(l, |_, _| rng.sample::<f64, _>(StandardNormal));
            let d = obj.derivatives(&o, &lambda).unwrap();
            let h = 1e-6;
            let ov = vec_of(&o);
            for i in 0..m * m {
                let mut up = ov.clone();
                let mut dn = ov.clone();
                up[i] += h;
                dn[i] -= h;
                let (ou, od) = (unvec(&up, m), unvec(&dn, m));
                let fd = (obj.penalized(&ou, &lambda) - obj.penalized(&od, &lambda)) / (2.0 * h);
                assert!((fd - d.grad_o[i]).abs() <= 1e-5 * d.grad_o.amax().max(1e-3), "grad {i}");
                let gu = obj.derivatives(&ou, &lambda).unwrap();
                let gd = obj.derivatives(&od, &lambda).unwrap();
                let col = (&gu.grad_o - &gd.grad_o) / (2.0 * h);
                assert!((col - d.h1.column(i)).amax() <= 1e-5 * d.h1.amax());
                let col2 = (&gu.grad_lambda - &gd.grad_lambda) / (2.0 * h);
                assert!((col2 - d.h2.row(i).transpose()).amax() <= 1e-6);
            }
            for i in 0..l {
                let mut up = lambda.clone();
                let mut dn = lambda.clone();
                up[i] += h;
                dn[i] -= h;
                let fd = (obj.penalized(&o, &up) - obj.penalized(&o, &dn)) / (2.0 * h);
                assert!((fd - d.grad_lambda[i]).abs() <= 1e-6 * d.grad_lambda.amax().max(1.0));
            }
        }
    }
}
