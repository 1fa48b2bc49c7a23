//! Log-spline spectral models with line-spectrum atoms: basis, Whittle fit
//! and stepwise BIC selection.

mod basis;
mod fit;
mod model;
mod select;

pub use basis::SplineBasis;
pub use fit::{bic, coefficients_of, fit_coefficients, FitOptions, FitReport, LogSplineObjective};
pub use model::{Atom, AtomDocument, AtomSet, ModelDocument, SpectralModel, LOG_DENSITY_CLAMP};
pub use select::{parameter_cap, select_model, select_model_with, SelectionOptions, MIN_GRID};
