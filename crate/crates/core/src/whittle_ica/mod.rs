//! The cICA-LSP estimator: pre-whitening, joint Whittle likelihood over the
//! rotation and the source spectra, Lagrange-constrained Newton updates, and
//! canonicalization of the result.

mod canonical;
mod newton;
mod objective;
mod solver;
mod whiten;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logspline::{ModelDocument, SpectralModel};
use crate::scalar::Scalar;
use crate::signals::MultichannelSeries;

pub use canonical::{canonicalize, canonicalize_detailed, Canonical};
pub use newton::{kkt_newton_step, newton_update, tangent_basis, NewtonOutcome, NewtonStep, REPROJECT_THRESHOLD};
pub use objective::{constraint_residual, derivatives, unvec, vec_of, whittle_loglik, Derivatives, WhittleObjective};
pub use solver::{fit, fit_from};
pub use whiten::{prewhiten, WhiteningTransform, RANK_TOLERANCE};

/// Starting rotation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Initializer {
    #[default]
    Identity,
    RandomOrthogonal { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub amari_tolerance: f64,
    pub max_outer_iterations: usize,
    pub max_newton_steps_per_outer: usize,
    pub step_halving_limit: usize,
    pub initializer: Initializer,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            amari_tolerance: 1e-6,
            max_outer_iterations: 50,
            max_newton_steps_per_outer: 1,
            step_halving_limit: 20,
            initializer: Initializer::Identity,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.amari_tolerance > 0.0 && self.amari_tolerance.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "amari_tolerance must be positive, got {}",
                self.amari_tolerance
            )));
        }
        for (name, v) in [
            ("max_outer_iterations", self.max_outer_iterations),
            ("max_newton_steps_per_outer", self.max_newton_steps_per_outer),
            ("step_halving_limit", self.step_halving_limit),
        ] {
            if v == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

/// One outer iteration: penalized objective after the Newton update and the
/// Amari distance between successive rotations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub objective: f64,
    pub amari_step: f64,
    /// `|O O^T - I|_F` of the rotation carried into the next iteration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orthogonality_defect: Option<f64>,
}

/// A fitted unmixing.
///
/// `unmixing` is canonical; each of its rows is a positive multiple of the
/// matching row of `rotation * whitening.covariance_root_inverse`.
#[derive(Debug, Clone)]
pub struct UnmixingEstimate<T: Scalar> {
    pub rotation: DMatrix<T>,
    pub lagrange: DVector<T>,
    pub unmixing: DMatrix<T>,
    pub whitening: WhiteningTransform<T>,
    pub spectral_models: Vec<SpectralModel<T>>,
    pub trace: Vec<IterationRecord>,
    pub converged: bool,
}

impl<T: Scalar> UnmixingEstimate<T> {
    pub fn dim(&self) -> usize {
        self.unmixing.nrows()
    }

    /// `W (X - mean(X))`.
    pub fn sources(&self, x: &MultichannelSeries<T>) -> Result<MultichannelSeries<T>> {
        if x.n_channels() != self.dim() {
            return Err(Error::Dimension(format!(
                "estimate has {} channels, data has {}",
                self.dim(),
                x.n_channels()
            )));
        }
        crate::signals::center(x).transform(&self.unmixing)
    }

    pub fn to_document(&self) -> EstimateDocument {
        let rows = |m: &DMatrix<T>| -> Vec<Vec<f64>> {
            m.row_iter().map(|r| r.iter().map(|v| v.as_f64()).collect()).collect()
        };
        EstimateDocument {
            unmixing: rows(&self.unmixing),
            rotation: rows(&self.rotation),
            lambda: self.lagrange.iter().map(|v| v.as_f64()).collect(),
            per_source_models: self.spectral_models.iter().map(|m| m.to_document()).collect(),
            iterations: self.trace.clone(),
            converged: self.converged,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }
}

/// Serialized estimate; matrices are lists of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateDocument {
    #[serde(rename = "W")]
    pub unmixing: Vec<Vec<f64>>,
    #[serde(rename = "O")]
    pub rotation: Vec<Vec<f64>>,
    pub lambda: Vec<f64>,
    pub per_source_models: Vec<ModelDocument>,
    pub iterations: Vec<IterationRecord>,
    pub converged: bool,
}

impl EstimateDocument {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn unmixing_matrix(&self) -> Result<DMatrix<f64>> {
        rows_to_matrix(&self.unmixing)
    }

    pub fn rotation_matrix(&self) -> Result<DMatrix<f64>> {
        rows_to_matrix(&self.rotation)
    }
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::Dimension("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]))
}
