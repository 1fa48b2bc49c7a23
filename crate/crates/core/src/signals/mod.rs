//! Multichannel time series, mixed-spectrum source generators, mixing and
//! centering, and CSV ingestion.

mod csv_io;
mod generate;

pub use csv_io::{read_csv, write_csv, CsvOptions, Orientation};
pub(crate) use csv_io::format_f64;
pub use generate::{generate_source, HarmonicComponent, NoiseSpec, SourceSpec, BURN_IN};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// An `M x T` real matrix of observations, one channel per row.
#[derive(Debug, Clone, PartialEq)]
pub struct MultichannelSeries<T: Scalar> {
    data: DMatrix<T>,
    sample_rate: Option<f64>,
}

impl<T: Scalar> MultichannelSeries<T> {
    /// Wraps a channel-by-sample matrix. Every entry must be finite.
    pub fn new(data: DMatrix<T>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::NoData);
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            let (r, c) = (pos % data.nrows(), pos / data.nrows());
            return Err(Error::InvalidArgument(format!(
                "non-finite value at channel {r}, sample {c}"
            )));
        }
        Ok(Self { data, sample_rate: None })
    }

    /// Builds a series from per-channel sample vectors of equal length.
    pub fn from_channels(channels: &[Vec<T>]) -> Result<Self> {
        let m = channels.len();
        if m == 0 {
            return Err(Error::NoData);
        }
        let t = channels[0].len();
        if let Some(bad) = channels.iter().position(|c| c.len() != t) {
            return Err(Error::Dimension(format!(
                "channel {bad} has {} samples, expected {t}",
                channels[bad].len()
            )));
        }
        Self::new(DMatrix::from_fn(m, t, |j, s| channels[j][s]))
    }

    pub fn with_sample_rate(mut self, hz: f64) -> Result<Self> {
        if !(hz > 0.0 && hz.is_finite()) {
            return Err(Error::InvalidArgument(format!("sample rate must be positive, got {hz}")));
        }
        self.sample_rate = Some(hz);
        Ok(self)
    }

    pub fn n_channels(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.data.ncols()
    }

    pub fn sample_rate(&self) -> Option<f64> {
        self.sample_rate
    }

    pub fn data(&self) -> &DMatrix<T> {
        &self.data
    }

    pub fn into_data(self) -> DMatrix<T> {
        self.data
    }

    /// Samples of channel `j`.
    pub fn channel(&self, j: usize) -> Vec<T> {
        self.data.row(j).iter().copied().collect()
    }

    pub fn channel_means(&self) -> Vec<T> {
        let t = T::count(self.n_samples());
        self.data.row_iter().map(|r| r.sum() / t).collect()
    }

    /// Left-multiplies by `m`, keeping the sample rate.
    pub fn transform(&self, m: &DMatrix<T>) -> Result<Self> {
        if m.ncols() != self.n_channels() {
            return Err(Error::Dimension(format!(
                "{}x{} matrix applied to {} channels",
                m.nrows(),
                m.ncols(),
                self.n_channels()
            )));
        }
        Ok(Self { data: m * &self.data, sample_rate: self.sample_rate })
    }
}

/// Subtracts each channel's sample mean.
pub fn center<T: Scalar>(series: &MultichannelSeries<T>) -> MultichannelSeries<T> {
    let mut data = series.data.clone();
    for mut row in data.row_iter_mut() {
        let n = T::count(row.len());
        // two-pass mean for exact zeros on already-centered input
        let mean = row.sum() / n;
        row.add_scalar_mut(-mean);
        let resid = row.sum() / n;
        row.add_scalar_mut(-resid);
    }
    MultichannelSeries { data, sample_rate: series.sample_rate }
}

/// A square, full-rank mixing matrix `A` in `X = A S`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix<T: Scalar> {
    entries: DMatrix<T>,
}

impl<T: Scalar> MixingMatrix<T> {
    pub fn new(entries: DMatrix<T>) -> Result<Self> {
        if !entries.is_square() || entries.nrows() == 0 {
            return Err(Error::Dimension(format!(
                "mixing matrix must be square, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        let m = entries.nrows();
        // compare |det| against the product of row norms (Hadamard bound)
        let scale = entries.row_iter().fold(T::one(), |acc, r| acc * r.norm());
        let det = entries.clone().lu().determinant().abs();
        if !(scale > T::zero()) || !(det > T::lit(1e-10) * scale) {
            return Err(Error::Singular);
        }
        debug_assert_eq!(entries.ncols(), m);
        Ok(Self { entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::Dimension("mixing matrix rows must all have length M".into()));
        }
        Self::new(DMatrix::from_fn(m, m, |i, j| T::lit(rows[i][j])))
    }

    pub fn entries(&self) -> &DMatrix<T> {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// The true unmixing matrix `W0 = A^-1`.
    pub fn inverse(&self) -> DMatrix<T> {
        self.entries.clone().try_inverse().expect("full rank checked at construction")
    }
}

/// `X = A S`.
pub fn mix<T: Scalar>(
    a: &MixingMatrix<T>,
    sources: &MultichannelSeries<T>,
) -> Result<MultichannelSeries<T>> {
    if a.dim() != sources.n_channels() {
        return Err(Error::Dimension(format!(
            "{}x{} mixing matrix but {} source channels",
            a.dim(),
            a.dim(),
            sources.n_channels()
        )));
    }
    sources.transform(&a.entries)
}

/// The 4x4 mixing matrix of the four-source mixed-spectrum simulation.
pub fn sim1_mixing_matrix() -> [[f64; 4]; 4] {
    [
        [0.56, 0.58, -0.07, 0.59],
        [-0.41, 0.84, 0.10, 0.34],
        [-0.15, 0.05, 0.75, -0.65],
        [0.53, -0.83, -0.08, 0.13],
    ]
}
