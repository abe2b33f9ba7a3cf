//! Adaptive random-walk Metropolis proposals.
//!
//! The three-dimensional proposal follows the global adaptive-scaling scheme
//! of Andrieu & Thoms (2008, Algorithm 4): a running mean and covariance of
//! the chain plus a Robbins-Monro controlled global scale. Step sizes decay as
//! `(k + K0)^{-0.6}` and adaptation stops once the caller freezes it.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist::standard_normal3;
use crate::dist::standard_normal;

const DECAY: f64 = 0.6;
const OFFSET: f64 = 10.0;
const JITTER: f64 = 1e-10;

fn step_size(k: u64) -> f64 {
    (k as f64 + OFFSET).powf(-DECAY)
}

/// Acceptance bookkeeping for one MH block.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AcceptCounter {
    pub proposed: u64,
    pub accepted: u64,
}

impl AcceptCounter {
    pub fn record(&mut self, accepted: bool) {
        self.proposed += 1;
        self.accepted += u64::from(accepted);
    }

    pub fn rate(&self) -> f64 {
        if self.proposed == 0 {
            f64::NAN
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    pub fn merge(&mut self, other: &AcceptCounter) {
        self.proposed += other.proposed;
        self.accepted += other.accepted;
    }
}

/// Metropolis-Hastings acceptance probability for a log ratio.
pub fn accept_probability(log_ratio: f64) -> f64 {
    if log_ratio >= 0.0 {
        1.0
    } else if log_ratio.is_nan() {
        0.0
    } else {
        log_ratio.exp()
    }
}

/// Accepts with probability `min(1, exp(log_ratio))`.
pub fn mh_accept<R: Rng + ?Sized>(rng: &mut R, log_ratio: f64) -> bool {
    let p = accept_probability(log_ratio);
    p >= 1.0 || rng.random::<f64>() < p
}

/// Full-covariance random-walk proposal for a 3-vector.
#[derive(Debug, Clone)]
pub struct AdaptiveProposal3 {
    log_scale: f64,
    mean: Vector3<f64>,
    cov: Matrix3<f64>,
    chol: Matrix3<f64>,
    steps: u64,
    target: f64,
}

impl AdaptiveProposal3 {
    pub fn new(initial_cov: Matrix3<f64>, target: f64) -> Self {
        let chol = initial_cov
            .cholesky()
            .map(|c| c.l())
            .unwrap_or_else(|| Matrix3::identity() * 0.01);
        Self {
            log_scale: (2.38f64.powi(2) / 3.0).ln(),
            mean: Vector3::zeros(),
            cov: initial_cov,
            chol,
            steps: 0,
            target,
        }
    }

    pub fn propose<R: Rng + ?Sized>(&self, rng: &mut R, current: &Vector3<f64>) -> Vector3<f64> {
        current + (0.5 * self.log_scale).exp() * (self.chol * standard_normal3(rng))
    }

    /// Robbins-Monro update after one MH step ending at `state`.
    pub fn adapt(&mut self, state: &Vector3<f64>, accept_prob: f64) {
        if self.steps == 0 {
            self.mean = *state;
        }
        self.steps += 1;
        let g = step_size(self.steps);
        self.log_scale += g * (accept_prob - self.target);
        let d = state - self.mean;
        self.mean += g * d;
        let cov = (1.0 - g) * self.cov + g * (d * d.transpose());
        let cov = 0.5 * (cov + cov.transpose()) + Matrix3::identity() * JITTER;
        if let Some(c) = cov.cholesky() {
            self.cov = cov;
            self.chol = c.l();
        }
    }

    pub fn scale(&self) -> f64 {
        self.log_scale.exp()
    }
}

/// Gaussian random walk on an unconstrained scalar with adaptive step size.
#[derive(Debug, Clone)]
pub struct AdaptiveScalar {
    log_sd: f64,
    steps: u64,
    target: f64,
}

impl AdaptiveScalar {
    pub fn new(initial_sd: f64, target: f64) -> Self {
        Self {
            log_sd: initial_sd.ln(),
            steps: 0,
            target,
        }
    }

    pub fn sd(&self) -> f64 {
        self.log_sd.exp()
    }

    pub fn step<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.sd() * standard_normal(rng)
    }

    pub fn adapt(&mut self, accept_prob: f64) {
        self.steps += 1;
        self.log_sd += step_size(self.steps) * (accept_prob - self.target);
    }
}
