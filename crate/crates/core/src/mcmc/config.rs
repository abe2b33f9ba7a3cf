use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape/scale of an inverse-gamma prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvGammaPrior {
    pub shape: f64,
    pub scale: f64,
}

/// Prior hyperparameters. Defaults reproduce the published model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorSpec {
    pub gamma2: InvGammaPrior,
    pub sigma2: InvGammaPrior,
    /// Gamma prior on the concentration, shape/rate.
    pub alpha_shape: f64,
    pub alpha_rate: f64,
    pub theta_star_mean: [f64; 3],
    /// Isotropic prior variance of θ*.
    pub theta_star_var: f64,
    pub sigma_df: f64,
    pub sigma_scale: [[f64; 3]; 3],
    pub a: f64,
    pub b: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            gamma2: InvGammaPrior {
                shape: 0.1,
                scale: 0.1,
            },
            sigma2: InvGammaPrior {
                shape: 0.1,
                scale: 0.1,
            },
            alpha_shape: 1.0,
            alpha_rate: 1.0,
            theta_star_mean: [1.0; 3],
            theta_star_var: 100.0,
            sigma_df: 5.0,
            sigma_scale: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            a: 0.5,
            b: 0.5,
        }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gamma2.shape", self.gamma2.shape),
            ("gamma2.scale", self.gamma2.scale),
            ("sigma2.shape", self.sigma2.shape),
            ("sigma2.scale", self.sigma2.scale),
            ("alpha_shape", self.alpha_shape),
            ("alpha_rate", self.alpha_rate),
            ("theta_star_var", self.theta_star_var),
            ("a", self.a),
            ("b", self.b),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "prior {name} must be positive, got {v}"
                )));
            }
        }
        if !(self.sigma_df > 2.0) {
            return Err(Error::InvalidArgument(format!(
                "prior sigma_df must exceed 2, got {}",
                self.sigma_df
            )));
        }
        Ok(())
    }
}

/// Number of stick-breaking components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Truncation {
    /// Chosen from a preliminary run.
    Auto,
    Fixed(usize),
}

/// Which steps the stage-two chain skips besides the frozen assignments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConditionalSkip {
    /// Skip the concentration and assignment updates.
    #[default]
    AlphaAndAssignments,
    /// Skip the assignment and stick updates.
    AssignmentsAndSticks,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub truncation: Truncation,
    pub preliminary_iterations: usize,
    /// Truncation used by the preliminary run when `truncation` is `auto`.
    pub preliminary_truncation: usize,
    pub seed: u64,
    /// Target acceptance rate of the trajectory blocks.
    pub adapt_target_accept: f64,
    /// Target acceptance rate of the scalar dependence blocks.
    pub adapt_target_accept_scalar: f64,
    /// Adapt proposals during burn-in.
    pub adapt: bool,
    /// Number of clusters in the initial k-means seeding.
    pub initial_clusters: usize,
    pub conditional_skip: ConditionalSkip,
    pub priors: PriorSpec,
    /// Drop every data term from the updates so the chain samples the prior.
    /// Test hook.
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub ignore_likelihood: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            iterations: 20_000,
            burn_in: 10_000,
            thin: 10,
            truncation: Truncation::Auto,
            preliminary_iterations: 2_000,
            preliminary_truncation: 50,
            seed: 0,
            adapt_target_accept: 0.234,
            adapt_target_accept_scalar: 0.44,
            adapt: true,
            initial_clusters: 5,
            conditional_skip: ConditionalSkip::default(),
            priors: PriorSpec::default(),
            ignore_likelihood: false,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidArgument("iterations must be positive".into()));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::InvalidArgument(format!(
                "burn-in {} must be smaller than iterations {}",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 {
            return Err(Error::InvalidArgument("thin must be at least 1".into()));
        }
        if let Truncation::Fixed(0) = self.truncation {
            return Err(Error::InvalidArgument("truncation must be positive".into()));
        }
        if self.truncation == Truncation::Auto && self.preliminary_iterations == 0 {
            return Err(Error::InvalidArgument(
                "automatic truncation needs preliminary iterations".into(),
            ));
        }
        if self.preliminary_truncation == 0 || self.initial_clusters == 0 {
            return Err(Error::InvalidArgument(
                "preliminary truncation and initial clusters must be positive".into(),
            ));
        }
        for t in [self.adapt_target_accept, self.adapt_target_accept_scalar] {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "target acceptance must lie in (0, 1), got {t}"
                )));
            }
        }
        self.priors.validate()
    }

    /// Number of draws a run of this configuration retains.
    pub fn retained_draws(&self) -> usize {
        (self.iterations - self.burn_in) / self.thin
    }

    /// Whether iteration `it` (zero-based) is retained.
    pub fn is_retained(&self, it: usize) -> bool {
        it >= self.burn_in && (it - self.burn_in + 1) % self.thin == 0
    }
}
