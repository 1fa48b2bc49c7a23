use nalgebra::DMatrix;

use crate::error::Result;
use crate::linalg::{sample_covariance, sym_sqrt_and_inv_sqrt};
use crate::scalar::Scalar;
use crate::signals::{center, MultichannelSeries};

/// Smallest admissible covariance eigenvalue relative to the largest.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// Spatial whitening `X~ = Sigma^{-1/2} (X - mean)`.
#[derive(Debug, Clone, PartialEq)]
pub struct WhiteningTransform<T: Scalar> {
    pub covariance: DMatrix<T>,
    pub covariance_root: DMatrix<T>,
    pub covariance_root_inverse: DMatrix<T>,
    pub means: Vec<T>,
}

impl<T: Scalar> WhiteningTransform<T> {
    pub fn dim(&self) -> usize {
        self.covariance.nrows()
    }

    /// Applies the transform to another series with the same channels.
    pub fn apply(&self, x: &MultichannelSeries<T>) -> Result<MultichannelSeries<T>> {
        let mut data = x.data().clone();
        for (j, mut row) in data.row_iter_mut().enumerate() {
            row.add_scalar_mut(-self.means[j]);
        }
        MultichannelSeries::new(&self.covariance_root_inverse * data)
    }
}

/// Centers and whitens `x` with the symmetric inverse square root of its sample covariance.
pub fn prewhiten<T: Scalar>(x: &MultichannelSeries<T>) -> Result<(MultichannelSeries<T>, WhiteningTransform<T>)> {
    let means = x.channel_means();
    let centered = center(x);
    let covariance = sample_covariance(centered.data());
    let (root, inv) = sym_sqrt_and_inv_sqrt(&covariance, RANK_TOLERANCE)?;
    let white = centered.transform(&inv)?;
    Ok((white, WhiteningTransform { covariance, covariance_root: root, covariance_root_inverse: inv, means }))
}
