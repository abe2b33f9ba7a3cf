//! Small dense routines for the per-patient covariance matrices.
//!
//! Patients carry at most a handful of observations, so these work on flat
//! row-major buffers without any allocation beyond the output vectors.

use crate::error::{Error, Result};

/// Lower-triangular Cholesky factor stored row-major in an `n * n` buffer,
/// with the log-determinant of the factored matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    n: usize,
    lower: Vec<f64>,
    log_det: f64,
}

impl Cholesky {
    /// Factors the symmetric matrix `a` (row-major, `n * n`).
    pub fn factor(a: &[f64], n: usize) -> Result<Self> {
        debug_assert_eq!(a.len(), n * n);
        let mut lower = vec![0.0; n * n];
        let mut log_det = 0.0;
        for j in 0..n {
            let mut diag = a[j * n + j];
            for k in 0..j {
                diag -= lower[j * n + k] * lower[j * n + k];
            }
            if !(diag > 0.0) || !diag.is_finite() {
                return Err(Error::NotPositiveDefinite {
                    pivot: j,
                    value: diag,
                });
            }
            let ljj = diag.sqrt();
            lower[j * n + j] = ljj;
            log_det += 2.0 * ljj.ln();
            for i in (j + 1)..n {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= lower[i * n + k] * lower[j * n + k];
                }
                lower[i * n + j] = s / ljj;
            }
        }
        Ok(Self { n, lower, log_det })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    /// Returns `r' A^{-1} r` via forward substitution, consuming `r` as scratch.
    pub fn quad_form_in_place(&self, r: &mut [f64]) -> f64 {
        let n = self.n;
        debug_assert_eq!(r.len(), n);
        let mut acc = 0.0;
        for i in 0..n {
            let row = &self.lower[i * n..i * n + i];
            let mut s = r[i];
            for (l, z) in row.iter().zip(r.iter()) {
                s -= l * z;
            }
            let z = s / self.lower[i * n + i];
            r[i] = z;
            acc += z * z;
        }
        acc
    }

    /// Computes `L z` for a vector `z` of standard normals.
    pub fn mul_lower(&self, z: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..n)
            .map(|i| (0..=i).map(|k| self.lower[i * n + k] * z[k]).sum())
            .collect()
    }
}

/// Numerically stable `log(sum(exp(x)))`. Returns `-inf` for an empty slice or
/// when every term is `-inf`.
pub fn log_sum_exp(x: &[f64]) -> f64 {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}
