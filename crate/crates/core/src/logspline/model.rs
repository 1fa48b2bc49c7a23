use std::f64::consts::PI;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::spectral::FourierGrid;

use super::SplineBasis;

/// Log-density values are clamped to this range before exponentiation.
pub const LOG_DENSITY_CLAMP: f64 = 40.0;

#[inline]
pub(crate) fn clamp_log<T: Scalar>(g: T) -> T {
    let c = T::lit(LOG_DENSITY_CLAMP);
    g.max(-c).min(c)
}

/// A line-spectrum atom at Fourier index `k` (frequency `2 pi k / T`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom<T: Scalar> {
    pub index: usize,
    pub mass: T,
}

/// Atoms at distinct Fourier indices with nonnegative masses, sorted by index.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomSet<T: Scalar> {
    atoms: Vec<Atom<T>>,
}

impl<T: Scalar> Default for AtomSet<T> {
    fn default() -> Self {
        Self { atoms: Vec::new() }
    }
}

impl<T: Scalar> AtomSet<T> {
    pub fn new(mut atoms: Vec<Atom<T>>, grid: FourierGrid) -> Result<Self> {
        atoms.sort_by_key(|a| a.index);
        for (i, a) in atoms.iter().enumerate() {
            if a.index == 0 || a.index > grid.len() {
                return Err(Error::InvalidArgument(format!(
                    "atom index {} is off the Fourier grid 1..={}",
                    a.index,
                    grid.len()
                )));
            }
            if !(a.mass >= T::zero()) {
                return Err(Error::InvalidArgument(format!("atom mass must be nonnegative, got {}", a.mass)));
            }
            if i > 0 && atoms[i - 1].index == a.index {
                return Err(Error::InvalidArgument(format!("duplicate atom at index {}", a.index)));
            }
        }
        Ok(Self { atoms })
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Atom<T>> {
        self.atoms.iter()
    }

    pub fn indices(&self) -> Vec<usize> {
        self.atoms.iter().map(|a| a.index).collect()
    }

    pub fn mass_at(&self, index: usize) -> Option<T> {
        self.atoms
            .binary_search_by_key(&index, |a| a.index)
            .ok()
            .map(|i| self.atoms[i].mass)
    }
}

/// Log mean spectral density of one source:
/// `g(r) = beta_c^T B(r)` plus the atom mass when `r` is an atom location.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralModel<T: Scalar> {
    basis: SplineBasis<T>,
    spline_coefficients: DVector<T>,
    atoms: AtomSet<T>,
    n_samples: usize,
    bic: Option<T>,
}

impl<T: Scalar> SpectralModel<T> {
    pub fn new(
        basis: SplineBasis<T>,
        spline_coefficients: DVector<T>,
        atoms: AtomSet<T>,
        n_samples: usize,
    ) -> Result<Self> {
        if spline_coefficients.len() != basis.dimension() {
            return Err(Error::Dimension(format!(
                "{} spline coefficients for a basis of dimension {}",
                spline_coefficients.len(),
                basis.dimension()
            )));
        }
        Ok(Self { basis, spline_coefficients, atoms, n_samples, bic: None })
    }

    pub(crate) fn with_bic(mut self, bic: T) -> Self {
        self.bic = Some(bic);
        self
    }

    pub fn basis(&self) -> &SplineBasis<T> {
        &self.basis
    }

    pub fn spline_coefficients(&self) -> &DVector<T> {
        &self.spline_coefficients
    }

    pub fn atoms(&self) -> &AtomSet<T> {
        &self.atoms
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn grid(&self) -> FourierGrid {
        FourierGrid::new(self.n_samples)
    }

    pub fn bic(&self) -> Option<T> {
        self.bic
    }

    pub fn n_parameters(&self) -> usize {
        self.basis.dimension() + self.atoms.len()
    }

    /// Continuous (spline) part of the log-density, unclamped.
    pub fn spline_log_density(&self, r: T) -> Result<T> {
        Ok(self.basis.eval(r)?.dot(&self.spline_coefficients))
    }

    /// `g(r_k)` at Fourier index `k`, clamped.
    pub fn log_density_at_index(&self, k: usize) -> Result<T> {
        let grid = self.grid();
        if k == 0 || k > grid.len() {
            return Err(Error::InvalidArgument(format!("Fourier index {k} off the grid")));
        }
        let r = grid.frequency::<T>(k - 1);
        let g = self.spline_log_density(r)? + self.atoms.mass_at(k).unwrap_or_else(T::zero);
        Ok(clamp_log(g))
    }

    /// Clamped `g` at every grid frequency.
    pub fn log_density_grid(&self) -> Vec<T> {
        let grid = self.grid();
        let design = self
            .basis
            .design(&grid.frequencies::<T>())
            .expect("grid frequencies lie in [0, pi]");
        let mut g: Vec<T> = (&design * &self.spline_coefficients).iter().copied().collect();
        for a in self.atoms.iter() {
            g[a.index - 1] += a.mass;
        }
        g.into_iter().map(clamp_log).collect()
    }

    /// Mean spectral density `exp(g(r))` at a frequency on the Fourier grid.
    ///
    /// Off-grid frequencies see only the continuous part.
    pub fn density_eval(&self, r: T) -> Result<T> {
        match self.grid().position_of(r.as_f64()) {
            Some(i) => Ok(self.log_density_at_index(i + 1)?.exp()),
            None => Ok(clamp_log(self.spline_log_density(r)?).exp()),
        }
    }

    pub fn to_document(&self) -> ModelDocument {
        let grid = self.grid();
        ModelDocument {
            knots: self.basis.knots().iter().map(|t| t.as_f64()).collect(),
            beta_c: self.spline_coefficients.iter().map(|b| b.as_f64()).collect(),
            atoms: self
                .atoms
                .iter()
                .map(|a| AtomDocument {
                    k: a.index,
                    frequency: grid.frequency::<f64>(a.index - 1),
                    mass: a.mass.as_f64(),
                })
                .collect(),
            t: self.n_samples,
            bic: self.bic.map(|b| b.as_f64()),
        }
    }

    pub fn from_document(doc: &ModelDocument) -> Result<Self> {
        let basis = SplineBasis::new(doc.knots.iter().map(|&t| T::lit(t)).collect())?;
        let grid = FourierGrid::new(doc.t);
        let atoms = AtomSet::new(
            doc.atoms.iter().map(|a| Atom { index: a.k, mass: T::lit(a.mass) }).collect(),
            grid,
        )?;
        for a in &doc.atoms {
            let expect = 2.0 * PI * a.k as f64 / doc.t as f64;
            if (a.frequency - expect).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!(
                    "atom k={} has frequency {} but the grid gives {expect}",
                    a.k, a.frequency
                )));
            }
        }
        let beta = DVector::from_iterator(doc.beta_c.len(), doc.beta_c.iter().map(|&b| T::lit(b)));
        let model = Self::new(basis, beta, atoms, doc.t)?;
        Ok(match doc.bic {
            Some(b) => model.with_bic(T::lit(b)),
            None => model,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_document())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_document(&serde_json::from_str(text)?)
    }
}

/// Serialized form of a [`SpectralModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub knots: Vec<f64>,
    pub beta_c: Vec<f64>,
    pub atoms: Vec<AtomDocument>,
    #[serde(rename = "T")]
    pub t: usize,
    pub bic: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomDocument {
    pub k: usize,
    pub frequency: f64,
    pub mass: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(masses: &[(usize, f64)]) -> SpectralModel<f64> {
        let basis = SplineBasis::equally_spaced(4).unwrap();
        let beta = DVector::from_vec(vec![0.3, -0.2, 0.5, 0.1]);
        let grid = FourierGrid::new(128);
        let atoms = AtomSet::new(
            masses.iter().map(|&(index, mass)| Atom { index, mass }).collect(),
            grid,
        )
        .unwrap();
        SpectralModel::new(basis, beta, atoms, 128).unwrap()
    }

    #[test]
    fn zero_coefficients_give_unit_density() {
        let basis = SplineBasis::<f64>::equally_spaced(5).unwrap();
        let m = SpectralModel::new(basis, DVector::zeros(5), AtomSet::default(), 64).unwrap();
        for i in 0..32 {
            let r = FourierGrid::new(64).frequency::<f64>(i);
            assert_eq!(m.density_eval(r).unwrap(), 1.0);
        }
    }

    #[test]
    fn zero_mass_atom_matches_spline_only() {
        let with = model(&[(10, 0.0)]);
        let without = model(&[]);
        assert_eq!(with.log_density_grid(), without.log_density_grid());
    }

    #[test]
    fn atom_adds_in_log_space() {
        let with = model(&[(10, 2.5)]);
        let without = model(&[]);
        let (a, b) = (with.log_density_grid(), without.log_density_grid());
        for i in 0..a.len() {
            let expect = if i == 9 { b[i] + 2.5 } else { b[i] };
            assert!((a[i] - expect).abs() < 1e-14);
        }
        let r = FourierGrid::new(128).frequency::<f64>(9);
        assert!((with.density_eval(r).unwrap() - b[9].exp() * 2.5f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn clamp_keeps_density_finite() {
        let basis = SplineBasis::<f64>::equally_spaced(2).unwrap();
        let beta = basis.constant_coefficients(1e4);
        let m = SpectralModel::new(basis, beta, AtomSet::default(), 64).unwrap();
        assert!(m.log_density_grid().iter().all(|&g| g == LOG_DENSITY_CLAMP));
        assert!(m.density_eval(1.0).unwrap().is_finite());
    }

    #[test]
    fn atom_validation() {
        let g = FourierGrid::new(32);
        assert!(AtomSet::<f64>::new(vec![Atom { index: 0, mass: 1.0 }], g).is_err());
        assert!(AtomSet::<f64>::new(vec![Atom { index: 17, mass: 1.0 }], g).is_err());
        assert!(AtomSet::<f64>::new(vec![Atom { index: 3, mass: -1.0 }], g).is_err());
        assert!(AtomSet::<f64>::new(vec![Atom { index: 3, mass: 1.0 }, Atom { index: 3, mass: 2.0 }], g).is_err());
    }

    #[test]
    fn json_round_trip_is_exact() {
        let m = model(&[(4, 1.25), (12, 0.1 + 0.2)]).with_bic(-123.456789);
        let back = SpectralModel::<f64>::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        let doc: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
        for key in ["knots", "beta_c", "atoms", "T", "bic"] {
            assert!(doc.get(key).is_some(), "missing {key}");
        }
        assert_eq!(doc["atoms"][0]["k"], 4);
    }
}
