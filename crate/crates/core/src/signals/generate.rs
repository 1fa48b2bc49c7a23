use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StudentT, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Warm-up samples discarded by the AR(1) and MA(1) generators.
pub const BURN_IN: usize = 500;

/// One sinusoid `R cos(t w + phi)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarmonicComponent {
    pub amplitude: f64,
    /// Radians per sample, in `(0, pi]`.
    pub frequency: f64,
    pub phase: f64,
}

impl HarmonicComponent {
    pub fn new(amplitude: f64, frequency: f64, phase: f64) -> Result<Self> {
        let h = Self { amplitude, frequency, phase };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "harmonic amplitude must be nonnegative, got {}",
                self.amplitude
            )));
        }
        if !(self.frequency > 0.0 && self.frequency <= PI) {
            return Err(Error::InvalidArgument(format!(
                "harmonic frequency must lie in (0, pi], got {}",
                self.frequency
            )));
        }
        if !(self.phase >= -PI && self.phase <= PI) {
            return Err(Error::InvalidArgument(format!(
                "harmonic phase must lie in [-pi, pi], got {}",
                self.phase
            )));
        }
        Ok(())
    }

    /// Expected line-spectrum mass `E[R^2] / 4` for a fixed amplitude.
    pub fn line_mass(&self) -> f64 {
        self.amplitude * self.amplitude / 4.0
    }
}

/// Stochastic background `Y(t)` of a source.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSpec {
    GaussianWhite { sigma: f64 },
    UniformWhite { half_width: f64 },
    /// `Y(t) = c Y(t-1) + e(t)`, `e ~ t(3)/sqrt(3)` (unit variance).
    Ar1 { coefficient: f64 },
    /// `Y(t) = e(t) + c e(t-1)`, `e ~ N(0, 1)`.
    Ma1 { coefficient: f64 },
}

impl NoiseSpec {
    pub fn gaussian_white(sigma: f64) -> Result<Self> {
        let n = Self::GaussianWhite { sigma };
        n.validate()?;
        Ok(n)
    }

    pub fn uniform_white(half_width: f64) -> Result<Self> {
        let n = Self::UniformWhite { half_width };
        n.validate()?;
        Ok(n)
    }

    pub fn ar1(coefficient: f64) -> Result<Self> {
        let n = Self::Ar1 { coefficient };
        n.validate()?;
        Ok(n)
    }

    pub fn ma1(coefficient: f64) -> Result<Self> {
        let n = Self::Ma1 { coefficient };
        n.validate()?;
        Ok(n)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::GaussianWhite { sigma } if !(sigma >= 0.0 && sigma.is_finite()) => Err(
                Error::InvalidArgument(format!("gaussian sigma must be nonnegative, got {sigma}")),
            ),
            Self::UniformWhite { half_width } if !(half_width >= 0.0 && half_width.is_finite()) => {
                Err(Error::InvalidArgument(format!(
                    "uniform half width must be nonnegative, got {half_width}"
                )))
            }
            Self::Ar1 { coefficient } if !(coefficient.abs() < 1.0) => {
                Err(Error::NonStationary(coefficient))
            }
            Self::Ma1 { coefficient } if !coefficient.is_finite() => Err(Error::InvalidArgument(
                format!("MA(1) coefficient must be finite, got {coefficient}"),
            )),
            _ => Ok(()),
        }
    }

    /// Spectral density of the background at `r` radians/sample.
    pub fn spectral_density(&self, r: f64) -> f64 {
        let base = 1.0 / (2.0 * PI);
        match *self {
            Self::GaussianWhite { sigma } => sigma * sigma * base,
            Self::UniformWhite { half_width } => half_width * half_width / 3.0 * base,
            Self::Ar1 { coefficient: c } => base / (1.0 - 2.0 * c * r.cos() + c * c),
            Self::Ma1 { coefficient: c } => base * (1.0 + 2.0 * c * r.cos() + c * c),
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            Self::GaussianWhite { sigma } => sigma * sigma,
            Self::UniformWhite { half_width } => half_width * half_width / 3.0,
            Self::Ar1 { coefficient: c } => 1.0 / (1.0 - c * c),
            Self::Ma1 { coefficient: c } => 1.0 + c * c,
        }
    }

    fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match *self {
            Self::GaussianWhite { sigma } => {
                let d = Normal::new(0.0, sigma).expect("validated sigma");
                (0..n).map(|_| d.sample(rng)).collect()
            }
            Self::UniformWhite { half_width } => {
                if half_width == 0.0 {
                    return vec![0.0; n];
                }
                let d = Uniform::new_inclusive(-half_width, half_width).expect("validated width");
                (0..n).map(|_| d.sample(rng)).collect()
            }
            Self::Ar1 { coefficient } => {
                let d = StudentT::new(3.0).expect("3 degrees of freedom");
                let scale = 1.0 / 3f64.sqrt();
                let mut y = 0.0;
                let mut out = Vec::with_capacity(n);
                for i in 0..BURN_IN + n {
                    y = coefficient * y + scale * d.sample(rng);
                    if i >= BURN_IN {
                        out.push(y);
                    }
                }
                out
            }
            Self::Ma1 { coefficient } => {
                let d = Normal::new(0.0, 1.0).expect("unit normal");
                let mut prev = 0.0;
                let mut out = Vec::with_capacity(n);
                for i in 0..BURN_IN + n {
                    let e = d.sample(rng);
                    if i >= BURN_IN {
                        out.push(e + coefficient * prev);
                    }
                    prev = e;
                }
                out
            }
        }
    }
}

/// Mixed-spectrum source: a sum of harmonics plus a stationary background.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    #[serde(default)]
    pub harmonics: Vec<HarmonicComponent>,
    pub noise: NoiseSpec,
}

impl SourceSpec {
    pub fn new(harmonics: Vec<HarmonicComponent>, noise: NoiseSpec) -> Result<Self> {
        let s = Self { harmonics, noise };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.noise.validate()?;
        for (i, h) in self.harmonics.iter().enumerate() {
            h.validate()?;
            if self.harmonics[..i].iter().any(|o| o.frequency == h.frequency) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate harmonic frequency {}",
                    h.frequency
                )));
            }
        }
        Ok(())
    }

    /// Mean spectral density: background density plus `(T / 2 pi) * mass` at
    /// each harmonic that falls on the Fourier grid of length `n_samples`.
    pub fn mean_spectral_density(&self, r: f64, n_samples: usize) -> f64 {
        let mut f = self.noise.spectral_density(r);
        let t = n_samples as f64;
        for h in &self.harmonics {
            if (h.frequency - r).abs() < 1e-9 * PI {
                f += t / (2.0 * PI) * h.line_mass();
            }
        }
        f
    }

    /// Population variance of the source.
    pub fn variance(&self) -> f64 {
        self.noise.variance() + self.harmonics.iter().map(|h| h.amplitude * h.amplitude / 2.0).sum::<f64>()
    }
}

/// Draws `S(t) = sum_p R_p cos(t w_p + phi_p) + Y(t)` for `t = 0..n_samples`.
///
/// Pure in `(spec, n_samples, seed)`; no centering is applied.
pub fn generate_source<T: Scalar>(spec: &SourceSpec, n_samples: usize, seed: u64) -> Result<Vec<T>> {
    spec.validate()?;
    if n_samples < 8 {
        return Err(Error::InvalidArgument(format!(
            "at least 8 samples required, got {n_samples}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // decorrelate from other users of the same seed value
    let _: u64 = rng.random();
    let noise = spec.noise.sample(n_samples, &mut rng);
    Ok(noise
        .into_iter()
        .enumerate()
        .map(|(t, y)| {
            let tf = t as f64;
            let harm: f64 = spec
                .harmonics
                .iter()
                .map(|h| h.amplitude * (tf * h.frequency + h.phase).cos())
                .sum();
            T::lit(harm + y)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn variance(x: &[f64]) -> f64 {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n
    }

    #[test]
    fn white_noise_variance() {
        let spec = SourceSpec::new(vec![], NoiseSpec::gaussian_white(1.0).unwrap()).unwrap();
        let x: Vec<f64> = generate_source(&spec, 512, 42).unwrap();
        let v = variance(&x);
        assert!((0.8..=1.2).contains(&v), "{v}");
    }

    #[test]
    fn noiseless_cosine() {
        let h = HarmonicComponent::new(2.0, 2.0 * PI / 128.0, 0.0).unwrap();
        let spec = SourceSpec::new(vec![h], NoiseSpec::gaussian_white(0.0).unwrap()).unwrap();
        let x: Vec<f64> = generate_source(&spec, 256, 1).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-12);
        assert!((x[64] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn deterministic_given_seed() {
        let spec = SourceSpec::new(vec![], NoiseSpec::ar1(0.8).unwrap()).unwrap();
        let a: Vec<f64> = generate_source(&spec, 100, 7).unwrap();
        let b: Vec<f64> = generate_source(&spec, 100, 7).unwrap();
        let c: Vec<f64> = generate_source(&spec, 100, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn nonstationary_ar_rejected() {
        assert!(matches!(NoiseSpec::ar1(1.0), Err(Error::NonStationary(_))));
        assert!(matches!(NoiseSpec::ar1(-1.3), Err(Error::NonStationary(_))));
        let bad = SourceSpec { harmonics: vec![], noise: NoiseSpec::Ar1 { coefficient: 1.5 } };
        assert!(generate_source::<f64>(&bad, 64, 0).is_err());
    }

    #[test]
    fn ar1_lag_one_autocorrelation() {
        let t = 8192;
        for (seed, c) in [(1u64, 0.8), (2, -0.5), (3, 0.3)] {
            let spec = SourceSpec::new(vec![], NoiseSpec::ar1(c).unwrap()).unwrap();
            let x: Vec<f64> = generate_source(&spec, t, seed).unwrap();
            let m = x.iter().sum::<f64>() / t as f64;
            let num: f64 = x.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
            let den: f64 = x.iter().map(|v| (v - m).powi(2)).sum();
            let rho = num / den;
            assert!((rho - c).abs() < 5.0 / (t as f64).sqrt(), "c={c} rho={rho}");
        }
    }

    #[test]
    fn harmonic_only_source_is_periodic() {
        let hs = vec![
            HarmonicComponent::new(2.0, 2.0 * PI / 32.0, 0.3).unwrap(),
            HarmonicComponent::new(1.0, 2.0 * PI / 16.0 * 3.0, -1.0).unwrap(),
        ];
        let spec = SourceSpec::new(hs, NoiseSpec::gaussian_white(0.0).unwrap()).unwrap();
        let x: Vec<f64> = generate_source(&spec, 128, 0).unwrap();
        for t in 0..96 {
            assert!((x[t] - x[t + 32]).abs() < 1e-9);
        }
    }

    #[test]
    fn duplicate_frequencies_rejected() {
        let h = HarmonicComponent::new(1.0, 0.5, 0.0).unwrap();
        assert!(SourceSpec::new(vec![h, h], NoiseSpec::gaussian_white(1.0).unwrap()).is_err());
    }

    #[test]
    fn harmonic_validation() {
        assert!(HarmonicComponent::new(-1.0, 0.5, 0.0).is_err());
        assert!(HarmonicComponent::new(1.0, 0.0, 0.0).is_err());
        assert!(HarmonicComponent::new(1.0, 4.0, 0.0).is_err());
        assert!(HarmonicComponent::new(1.0, PI, PI).is_ok());
    }
}
