//! Blind source separation for temporally autocorrelated sources with mixed
//! (continuous plus line) spectra.
//!
//! The main estimator ([`whittle_ica::fit`]) pre-whitens the observations and
//! then alternates between log-spline spectral fits of the current source
//! estimates and a Lagrange-constrained Newton update of the orthogonal
//! rotation, maximizing the Whittle likelihood. A SOBI baseline, separation
//! metrics and a Monte-Carlo harness are included.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix the scalar to `f64`.

pub mod error;
pub mod harness;
pub mod linalg;
pub mod logspline;
pub mod metrics;
pub mod scalar;
pub mod signals;
pub mod sobi;
pub mod spectral;
pub mod whittle_ica;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// `f64` multichannel series.
pub type Series = signals::MultichannelSeries<f64>;
/// `f64` mixing matrix.
pub type Mixing = signals::MixingMatrix<f64>;
/// `f64` periodogram stack.
pub type Periodograms = spectral::PeriodogramStack<f64>;
/// `f64` unmixing estimate.
pub type Estimate = whittle_ica::UnmixingEstimate<f64>;
