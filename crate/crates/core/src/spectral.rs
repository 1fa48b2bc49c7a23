//! Discrete Fourier transform on the positive Fourier grid, univariate
//! periodograms and the stacked cross-periodogram matrices.
//!
//! The grid is `r_k = 2 pi k / T` for `k = 1..=floor(T/2)`; the zero
//! frequency is dropped because inputs are centered.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::signals::{center, MultichannelSeries};

/// Positive Fourier frequencies of a length-`T` series.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FourierGrid {
    n_samples: usize,
}

impl FourierGrid {
    pub fn new(n_samples: usize) -> Self {
        Self { n_samples }
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    /// Number of grid points, `floor(T/2)`.
    pub fn len(&self) -> usize {
        self.n_samples / 2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Fourier index `k` of grid position `i` (`k = i + 1`).
    #[inline]
    pub fn index(&self, i: usize) -> usize {
        i + 1
    }

    /// `r_k` for grid position `i`.
    pub fn frequency<T: Scalar>(&self, i: usize) -> T {
        T::lit(2.0 * PI * (i + 1) as f64 / self.n_samples as f64)
    }

    pub fn frequencies<T: Scalar>(&self) -> Vec<T> {
        (0..self.len()).map(|i| self.frequency(i)).collect()
    }

    /// Grid position of the frequency nearest to `r`, if `r` lies on the grid.
    pub fn position_of(&self, r: f64) -> Option<usize> {
        let k = r * self.n_samples as f64 / (2.0 * PI);
        let kr = k.round();
        if kr < 1.0 || kr > self.len() as f64 || (k - kr).abs() > 1e-6 {
            return None;
        }
        Some(kr as usize - 1)
    }
}

/// How [`dft`] evaluates the transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DftMethod {
    /// FFT for highly composite (7-smooth) or long inputs, direct sum otherwise.
    #[default]
    Auto,
    Fft,
    Direct,
}

fn largest_prime_factor(mut n: usize) -> usize {
    let mut largest = 1;
    let mut p = 2;
    while p * p <= n {
        while n % p == 0 {
            largest = p;
            n /= p;
        }
        p += 1;
    }
    largest.max(n)
}

/// Inputs longer than this always use the FFT path.
const DIRECT_SUM_MAX_LEN: usize = 4096;

fn use_fft(n: usize, method: DftMethod) -> bool {
    match method {
        DftMethod::Fft => true,
        DftMethod::Direct => false,
        DftMethod::Auto => largest_prime_factor(n) <= 7 || n > DIRECT_SUM_MAX_LEN,
    }
}

/// `d(r_k) = sum_t x(t) exp(-i r_k t)` for `k = 1..=floor(T/2)`.
pub fn dft<T: Scalar>(x: &[T]) -> Result<Vec<Complex<T>>> {
    dft_with(x, DftMethod::Auto)
}

pub fn dft_with<T: Scalar>(x: &[T], method: DftMethod) -> Result<Vec<Complex<T>>> {
    let n = x.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("DFT needs at least 2 samples, got {n}")));
    }
    if use_fft(n, method) {
        let mut buf: Vec<Complex<T>> = x.iter().map(|&v| Complex::new(v, T::zero())).collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        Ok(buf[1..=n / 2].to_vec())
    } else {
        Ok(dft_direct(x))
    }
}

/// O(T^2) direct summation. The phase index `k t mod T` is reduced exactly.
pub fn dft_direct<T: Scalar>(x: &[T]) -> Vec<Complex<T>> {
    let n = x.len();
    let step = 2.0 * PI / n as f64;
    let table: Vec<Complex<T>> = (0..n)
        .map(|m| {
            let a = step * m as f64;
            Complex::new(T::lit(a.cos()), T::lit(-a.sin()))
        })
        .collect();
    (1..=n / 2)
        .map(|k| {
            let mut acc = Complex::new(T::zero(), T::zero());
            for (t, &v) in x.iter().enumerate() {
                acc += table[(k * t) % n] * v;
            }
            acc
        })
        .collect()
}

/// Univariate periodogram `|d(r_k)|^2 / (2 pi T)` on the grid.
pub fn periodogram<T: Scalar>(x: &[T]) -> Result<Vec<T>> {
    let scale = T::lit(1.0 / (2.0 * PI * x.len() as f64));
    Ok(dft(x)?.into_iter().map(|d| d.norm_sqr() * scale).collect())
}

/// Cross-periodogram matrices `d d^* / (2 pi T)` at every grid frequency.
///
/// Stored through the per-frequency DFT vectors, since every matrix is rank one.
#[derive(Debug, Clone)]
pub struct PeriodogramStack<T: Scalar> {
    grid: FourierGrid,
    n_channels: usize,
    /// `coefficients[i][j] = d_j(r_{i+1})`.
    coefficients: Vec<DVector<Complex<T>>>,
}

impl<T: Scalar> PeriodogramStack<T> {
    pub fn grid(&self) -> FourierGrid {
        self.grid
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    fn scale(&self) -> T {
        T::lit(1.0 / (2.0 * PI * self.grid.n_samples() as f64))
    }

    pub fn dft_vector(&self, i: usize) -> &DVector<Complex<T>> {
        &self.coefficients[i]
    }

    /// The Hermitian matrix at grid position `i`.
    pub fn matrix(&self, i: usize) -> DMatrix<Complex<T>> {
        let d = &self.coefficients[i];
        d * d.adjoint() * Complex::new(self.scale(), T::zero())
    }

    /// Real part of the matrix at grid position `i` (the part seen by real quadratic forms).
    pub fn real_matrix(&self, i: usize) -> DMatrix<T> {
        let d = &self.coefficients[i];
        let s = self.scale();
        DMatrix::from_fn(self.n_channels, self.n_channels, |a, b| (d[a] * d[b].conj()).re * s)
    }

    /// Periodogram of channel `j`.
    pub fn univariate(&self, j: usize) -> Vec<T> {
        let s = self.scale();
        self.coefficients.iter().map(|d| d[j].norm_sqr() * s).collect()
    }

    /// `q[(j, i)] = e_j^T O f(r_i) O^T e_j`, the periodogram of row `j` of `O X`.
    pub fn quadratic_forms(&self, o: &DMatrix<T>) -> DMatrix<T> {
        let rows = o.nrows();
        let s = self.scale();
        let mut q = DMatrix::zeros(rows, self.len());
        for (i, d) in self.coefficients.iter().enumerate() {
            for j in 0..rows {
                let mut acc = Complex::new(T::zero(), T::zero());
                for c in 0..self.n_channels {
                    acc += d[c] * o[(j, c)];
                }
                q[(j, i)] = acc.norm_sqr() * s;
            }
        }
        q
    }

    /// `sum_i w_i Re f(r_i)` for weights on the grid.
    pub fn weighted_real_sum(&self, w: &[T]) -> DMatrix<T> {
        let m = self.n_channels;
        let n = self.len();
        let mut re = DMatrix::zeros(m, n);
        let mut im = DMatrix::zeros(m, n);
        for (i, d) in self.coefficients.iter().enumerate() {
            let sw = w[i].max(T::zero()).sqrt();
            for c in 0..m {
                re[(c, i)] = d[c].re * sw;
                im[(c, i)] = d[c].im * sw;
            }
        }
        let s = (&re * re.transpose() + &im * im.transpose()) * self.scale();
        (&s + s.transpose()) * T::lit(0.5)
    }

    /// Stack of `O X` for a real `O`, computed from the stored coefficients.
    pub fn transformed(&self, o: &DMatrix<T>) -> Result<Self> {
        if o.ncols() != self.n_channels {
            return Err(Error::Dimension(format!(
                "{}x{} transform for {} channels",
                o.nrows(),
                o.ncols(),
                self.n_channels
            )));
        }
        let oc = o.map(|v| Complex::new(v, T::zero()));
        Ok(Self {
            grid: self.grid,
            n_channels: o.nrows(),
            coefficients: self.coefficients.iter().map(|d| &oc * d).collect(),
        })
    }

    /// Debug dump: `k, r_k` then real and imaginary parts of the upper triangle.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        let m = self.n_channels;
        let mut header = vec!["k".to_string(), "r_k".to_string()];
        for a in 0..m {
            for b in a..m {
                header.push(format!("re_{}_{}", a + 1, b + 1));
                header.push(format!("im_{}_{}", a + 1, b + 1));
            }
        }
        writeln!(out, "{}", header.join(","))?;
        for i in 0..self.len() {
            let f = self.matrix(i);
            let mut row = vec![self.grid.index(i).to_string(), format!("{:.16e}", self.grid.frequency::<f64>(i))];
            for a in 0..m {
                for b in a..m {
                    row.push(format!("{:.16e}", f[(a, b)].re.as_f64()));
                    row.push(format!("{:.16e}", f[(a, b)].im.as_f64()));
                }
            }
            writeln!(out, "{}", row.join(","))?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Builds the cross-periodogram stack of `x`, centering channels whose mean exceeds `1e-8`.
pub fn cross_periodogram<T: Scalar>(x: &MultichannelSeries<T>) -> Result<PeriodogramStack<T>> {
    let t = x.n_samples();
    if t < 4 {
        return Err(Error::InvalidArgument(format!(
            "cross periodogram needs at least 4 samples, got {t}"
        )));
    }
    let needs_centering = x.channel_means().iter().any(|m| m.abs() > T::lit(1e-8));
    let centered;
    let x = if needs_centering {
        centered = center(x);
        &centered
    } else {
        x
    };
    let m = x.n_channels();
    let per_channel: Vec<Vec<Complex<T>>> =
        (0..m).map(|j| dft(&x.channel(j))).collect::<Result<_>>()?;
    let grid = FourierGrid::new(t);
    let coefficients = (0..grid.len())
        .map(|i| DVector::from_fn(m, |j, _| per_channel[j][i]))
        .collect();
    Ok(PeriodogramStack { grid, n_channels: m, coefficients })
}
