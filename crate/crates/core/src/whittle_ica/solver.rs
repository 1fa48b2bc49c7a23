use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{lower_len, orthogonality_defect, pack_lower, polar_orthogonal, random_orthogonal, unpack_lower};
use crate::logspline::{select_model_with, SelectionOptions, SpectralModel};
use crate::metrics::amari_distance;
use crate::scalar::Scalar;
use crate::signals::MultichannelSeries;
use crate::spectral::{cross_periodogram, PeriodogramStack};

use super::canonical::canonicalize_detailed;
use super::newton::newton_update;
use super::objective::WhittleObjective;
use super::whiten::prewhiten;
use super::{Initializer, IterationRecord, SolverOptions, UnmixingEstimate};

pub const MIN_SAMPLES: usize = 64;

/// Refits every source spectrum at rotation `o`, warm-started from `previous`.
fn refit_models<T: Scalar>(
    stack: &PeriodogramStack<T>,
    o: &DMatrix<T>,
    previous: &[Option<SpectralModel<T>>],
    opts: &SelectionOptions,
) -> Result<Vec<SpectralModel<T>>> {
    let q = stack.quadratic_forms(o);
    let t = stack.grid().n_samples();
    (0..o.nrows())
        .into_par_iter()
        .map(|j| {
            let values: Vec<T> = q.row(j).iter().copied().collect();
            select_model_with(&values, t, previous[j].as_ref(), opts).map(|(m, _)| m)
        })
        .collect()
}

/// Fits the cICA-LSP unmixing of `x` (channels as rows).
pub fn fit<T: Scalar>(x: &MultichannelSeries<T>, options: &SolverOptions) -> Result<UnmixingEstimate<T>> {
    fit_from(x, options, None)
}

/// As [`fit`], starting from the rotation `initial` (rows in whitened
/// coordinates) instead of the configured initializer.
pub fn fit_from<T: Scalar>(
    x: &MultichannelSeries<T>,
    options: &SolverOptions,
    initial: Option<&DMatrix<T>>,
) -> Result<UnmixingEstimate<T>> {
    options.validate()?;
    let m = x.n_channels();
    let t = x.n_samples();
    if m < 2 {
        return Err(Error::InvalidArgument(format!("separation needs at least 2 channels, got {m}")));
    }
    if t < MIN_SAMPLES {
        return Err(Error::InvalidArgument(format!("separation needs at least {MIN_SAMPLES} samples, got {t}")));
    }
    let (white, whitening) = prewhiten(x)?;
    let stack = cross_periodogram(&white)?;
    let selection = SelectionOptions::default();

    let mut o: DMatrix<T> = match (initial, options.initializer) {
        (Some(o0), _) => {
            if o0.shape() != (m, m) {
                return Err(Error::Dimension(format!("initial rotation is {:?} for {m} channels", o0.shape())));
            }
            polar_orthogonal(o0)
        }
        (None, Initializer::Identity) => DMatrix::identity(m, m),
        (None, Initializer::RandomOrthogonal { seed }) => random_orthogonal(m, &mut ChaCha8Rng::seed_from_u64(seed)),
    };
    let mut lambda = DVector::zeros(lower_len(m));
    let mut models: Vec<Option<SpectralModel<T>>> = vec![None; m];
    let mut trace = Vec::new();
    let mut converged = false;
    let tol = T::lit(options.amari_tolerance);

    for _ in 0..options.max_outer_iterations {
        let fitted = refit_models(&stack, &o, &models, &selection)?;
        let objective = WhittleObjective::new(&stack, &fitted)?;
        let o_old = o.clone();
        let mut stalled = false;
        // multipliers matching the refitted spectra
        lambda = least_squares_multipliers(&objective, &o)?;
        let mut value = objective.penalized(&o, &lambda);
        for _ in 0..options.max_newton_steps_per_outer {
            let out = newton_update(&objective, &o, &lambda, options.step_halving_limit, T::zero())?;
            stalled = out.stalled;
            value = out.objective_after;
            o = out.o;
            lambda = out.lambda;
            if stalled {
                break;
            }
        }
        o = polar_orthogonal(&o);
        models = fitted.into_iter().map(Some).collect();
        let step = amari_distance(&o, &o_old)?;
        trace.push(IterationRecord {
            objective: value.as_f64(),
            amari_step: step.as_f64(),
            orthogonality_defect: Some(orthogonality_defect(&o).as_f64()),
        });
        if step < tol && !stalled {
            converged = true;
            break;
        }
    }

    let final_models = refit_models(&stack, &o, &models, &selection)?;
    let unmixing = &o * &whitening.covariance_root_inverse;
    let canon = canonicalize_detailed(&unmixing)?;
    let perm = &canon.permutation;
    let signs = &canon.signs;
    let rotation = DMatrix::from_fn(m, m, |i, j| signs[i] * o[(perm[i], j)]);
    let big_lambda = unpack_lower(&lambda, m);
    let permuted_lambda = DMatrix::from_fn(m, m, |i, k| signs[i] * signs[k] * big_lambda[(perm[i], perm[k])]);
    let mut final_models: Vec<Option<SpectralModel<T>>> = final_models.into_iter().map(Some).collect();
    let spectral_models = perm.iter().map(|&p| final_models[p].take().expect("each model used once")).collect();

    Ok(UnmixingEstimate {
        rotation,
        lagrange: pack_lower(&permuted_lambda),
        unmixing: canon.matrix,
        whitening,
        spectral_models,
        trace,
        converged,
    })
}

/// Multipliers minimizing `|grad_O F|` at `o`: `S = -sym(G O^T)` with `G`
/// the likelihood gradient, read back into the lower-triangle layout.
pub(crate) fn least_squares_multipliers<T: Scalar>(
    objective: &WhittleObjective<'_, T>,
    o: &DMatrix<T>,
) -> Result<DVector<T>> {
    let m = o.nrows();
    let d = objective.derivatives(o, &DVector::zeros(lower_len(m)))?;
    let g = super::objective::unvec(&d.grad_o, m);
    let gram = o * o.transpose();
    // solve S (O O^T) = -G O^T, then symmetrize
    let rhs = -(&g * o.transpose());
    let s = gram.lu().solve(&rhs.transpose()).ok_or(Error::Singular)?.transpose();
    let mut s = (&s + s.transpose()) * T::lit(0.5);
    for j in 0..m {
        s[(j, j)] *= T::lit(0.5);
    }
    Ok(pack_lower(&s))
}
