//! Sampling helpers and unnormalised log densities used by the updates.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::{Beta, ChiSquared, Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};

/// Smallest probability kept away from 0 and 1 so log-Bernoulli terms stay
/// finite.
pub const PROB_FLOOR: f64 = 1e-300;

pub fn sample_beta<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> Result<f64> {
    let d = Beta::new(a, b)
        .map_err(|e| Error::Numerical(format!("Beta({a}, {b}): {e}")))?;
    Ok(d.sample(rng))
}

/// Beta draw clamped into `[PROB_FLOOR, 1 - ε]`.
pub fn sample_beta_open<R: Rng + ?Sized>(rng: &mut R, a: f64, b: f64) -> Result<f64> {
    Ok(sample_beta(rng, a, b)?.clamp(PROB_FLOOR, 1.0 - f64::EPSILON / 2.0))
}

/// Gamma draw with shape/rate parameterisation.
pub fn sample_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, rate: f64) -> Result<f64> {
    let d = Gamma::new(shape, 1.0 / rate)
        .map_err(|e| Error::Numerical(format!("Gamma({shape}, rate {rate}): {e}")))?;
    Ok(d.sample(rng))
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

pub fn standard_normal3<R: Rng + ?Sized>(rng: &mut R) -> Vector3<f64> {
    Vector3::new(standard_normal(rng), standard_normal(rng), standard_normal(rng))
}

/// `MVN₃(mean, cov)` draw.
pub fn sample_mvn3<R: Rng + ?Sized>(
    rng: &mut R,
    mean: &Vector3<f64>,
    cov: &Matrix3<f64>,
) -> Result<Vector3<f64>> {
    let chol = cov
        .cholesky()
        .ok_or_else(|| Error::Numerical("MVN covariance is not positive definite".into()))?;
    Ok(mean + chol.l() * standard_normal3(rng))
}

/// Unnormalised `log MVN₃(x; mean, Σ)` given `Σ⁻¹`.
pub fn mvn3_log_kernel(x: &Vector3<f64>, mean: &Vector3<f64>, precision: &Matrix3<f64>) -> f64 {
    let d = x - mean;
    -0.5 * (d.transpose() * precision * d)[(0, 0)]
}

/// Inverse-Wishart draw with density `∝ |Σ|^{-(ν+p+1)/2} exp(-tr(S Σ⁻¹)/2)`.
///
/// Draws `W ~ Wishart(ν, S⁻¹)` by the Bartlett decomposition and inverts it.
pub fn sample_inv_wishart3<R: Rng + ?Sized>(
    rng: &mut R,
    df: f64,
    scale: &Matrix3<f64>,
) -> Result<Matrix3<f64>> {
    if !(df > 2.0) {
        return Err(Error::InvalidArgument(format!(
            "inverse-Wishart degrees of freedom must exceed p - 1, got {df}"
        )));
    }
    let scale_inv = scale
        .try_inverse()
        .ok_or_else(|| Error::Numerical("inverse-Wishart scale is singular".into()))?;
    let l = scale_inv
        .cholesky()
        .ok_or_else(|| Error::Numerical("inverse-Wishart scale is not positive definite".into()))?
        .l();
    let mut a = Matrix3::zeros();
    for i in 0..3 {
        let chi = ChiSquared::new(df - i as f64)
            .map_err(|e| Error::Numerical(format!("chi-squared: {e}")))?;
        a[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            a[(i, j)] = standard_normal(rng);
        }
    }
    let la = l * a;
    let w = la * la.transpose();
    w.try_inverse()
        .map(|s| 0.5 * (s + s.transpose()))
        .ok_or_else(|| Error::Numerical("Wishart draw is singular".into()))
}

/// Unnormalised inverse-gamma log density (shape/scale).
pub fn inv_gamma_log_kernel(x: f64, shape: f64, scale: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    -(shape + 1.0) * x.ln() - scale / x
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Mean and variance of a sample.
pub fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Quantile with linear interpolation between order statistics (R type 7).
/// `sorted` must be ascending and nonempty.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}
