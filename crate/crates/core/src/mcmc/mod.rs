//! Truncated stick-breaking sampler for the Dirichlet-process mixture, the
//! two-component baseline, and the stage-two conditional refit.

mod adapt;
mod config;
mod init;
mod sampler;
pub mod two_component;

use serde::{Deserialize, Serialize};

pub use adapt::{accept_probability, mh_accept, AcceptCounter, AdaptiveProposal3, AdaptiveScalar};
pub use config::{ConditionalSkip, InvGammaPrior, PriorSpec, SamplerConfig, Truncation};
pub use init::{initial_state, kmeans};
pub use sampler::{
    dependence_log_accept_ratio, logit_proposal_log_correction, lognormal_proposal_log_correction,
    theta_star_conditional, AcceptanceRates, DependenceParam, Sampler, StepMask,
};
pub use two_component::{
    run_two_component, GroupParams, TwoComponentDraw, TwoComponentState, TwoComponentTrace,
};

use crate::error::{Error, Result};
use crate::model::{LikelihoodMode, ModelState, Patient};
use crate::partition::PartitionEstimate;
use crate::rng::stream;

/// One retained state with its data log-likelihoods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub iteration: usize,
    #[serde(flatten)]
    pub state: ModelState,
    pub cond_loglik: f64,
    pub marg_loglik: f64,
}

/// Per-iteration convergence diagnostics.
///
/// `marg_loglik` is recorded by the assignment step, i.e. at the parameter
/// values used to draw the assignments; stage-two chains, which skip that
/// step, evaluate it at the end of each sweep.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceDiagnostics {
    pub cond_loglik: Vec<f64>,
    pub marg_loglik: Vec<f64>,
    pub nonempty: Vec<usize>,
    /// Acceptance counts after burn-in.
    pub acceptance: AcceptanceRates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorTrace {
    pub patient_ids: Vec<String>,
    pub truncation: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub draws: Vec<Draw>,
    pub diagnostics: TraceDiagnostics,
}

impl PosteriorTrace {
    pub fn n_patients(&self) -> usize {
        self.patient_ids.len()
    }

    /// Non-empty cluster counts of the post-burn-in iterations.
    pub fn post_burn_in_nonempty(&self) -> &[usize] {
        let b = self.burn_in.min(self.diagnostics.nonempty.len());
        &self.diagnostics.nonempty[b..]
    }

    /// Posterior median of the number of non-empty clusters (upper median,
    /// falling back to the retained draws when no per-iteration record exists).
    pub fn median_nonempty(&self) -> usize {
        let mut counts: Vec<usize> = self.post_burn_in_nonempty().to_vec();
        if counts.is_empty() {
            counts = self.draws.iter().map(|d| d.state.nonempty_clusters()).collect();
        }
        if counts.is_empty() {
            return 1;
        }
        counts.sort_unstable();
        counts[counts.len() / 2]
    }

    /// Posterior mean of the number of non-empty clusters after burn-in.
    pub fn mean_nonempty(&self) -> f64 {
        let c = self.post_burn_in_nonempty();
        if c.is_empty() {
            let n = self.draws.len().max(1) as f64;
            return self.draws.iter().map(|d| d.state.nonempty_clusters() as f64).sum::<f64>() / n;
        }
        c.iter().sum::<usize>() as f64 / c.len() as f64
    }
}

fn check_training_data(data: &[Patient]) -> Result<()> {
    if data.is_empty() {
        return Err(Error::InvalidData("no training patients".into()));
    }
    for p in data {
        p.validate()?;
        if p.disease.is_none() {
            return Err(Error::InvalidData(format!(
                "training patient {} has no disease label",
                p.id
            )));
        }
        if p.n_obs() == 0 {
            return Err(Error::InvalidData(format!(
                "training patient {} has no observations",
                p.id
            )));
        }
    }
    Ok(())
}

/// `ceil(2 × q95)` of non-empty cluster counts, clamped to `[5, 50]`. The
/// 95th percentile is the upper order statistic at rank `0.95 (n - 1)`.
pub fn truncation_from_counts(counts: &[usize]) -> usize {
    if counts.is_empty() {
        return 5;
    }
    let mut sorted = counts.to_vec();
    sorted.sort_unstable();
    let rank = (0.95 * (sorted.len() - 1) as f64).ceil() as usize;
    (2 * sorted[rank]).clamp(5, 50)
}

/// Runs a preliminary chain at a generous truncation and derives `H` from
/// its post-burn-in non-empty cluster counts.
pub fn select_truncation(data: &[Patient], config: &SamplerConfig) -> Result<usize> {
    let prelim = SamplerConfig {
        iterations: config.preliminary_iterations,
        burn_in: config.preliminary_iterations / 2,
        thin: 1,
        truncation: Truncation::Fixed(config.preliminary_truncation),
        ..config.clone()
    };
    prelim.validate()?;
    let h = config.preliminary_truncation;
    let mut init_rng = stream(config.seed, "truncation-init");
    let state = initial_state(data, h, &prelim, &mut init_rng)?;
    let mut sampler = Sampler::new(data, &prelim, state, stream(config.seed, "truncation-chain"))?;
    let mut counts = Vec::with_capacity(prelim.iterations - prelim.burn_in);
    for it in 0..prelim.iterations {
        if it == prelim.burn_in {
            sampler.set_adapting(false);
        }
        sampler.iterate(StepMask::FULL)?;
        if it >= prelim.burn_in {
            counts.push(sampler.state().nonempty_clusters());
        }
    }
    Ok(truncation_from_counts(&counts))
}

fn drive(
    mut sampler: Sampler<'_>,
    data: &[Patient],
    config: &SamplerConfig,
    mask: StepMask,
    truncation: usize,
) -> Result<PosteriorTrace> {
    let mut diagnostics = TraceDiagnostics::default();
    let mut draws = Vec::with_capacity(config.retained_draws());
    for it in 0..config.iterations {
        if it == config.burn_in {
            sampler.set_adapting(false);
            sampler.reset_acceptance();
        }
        sampler.iterate(mask)?;
        let cond = sampler.loglik(LikelihoodMode::Conditional);
        let marg = match sampler.last_marginal() {
            Some(m) => m,
            None => sampler.loglik(LikelihoodMode::Marginal),
        };
        diagnostics.cond_loglik.push(cond);
        diagnostics.marg_loglik.push(marg);
        diagnostics.nonempty.push(sampler.state().nonempty_clusters());
        if config.is_retained(it) {
            draws.push(Draw {
                iteration: it,
                state: sampler.state().clone(),
                cond_loglik: cond,
                marg_loglik: sampler.loglik(LikelihoodMode::Marginal),
            });
        }
    }
    diagnostics.acceptance = *sampler.acceptance();
    Ok(PosteriorTrace {
        patient_ids: data.iter().map(|p| p.id.clone()).collect(),
        truncation,
        burn_in: config.burn_in,
        seed: config.seed,
        draws,
        diagnostics,
    })
}

/// Fits the mixture model. Deterministic given `config.seed`.
pub fn run_chain(data: &[Patient], config: &SamplerConfig) -> Result<PosteriorTrace> {
    config.validate()?;
    check_training_data(data)?;
    let h = match config.truncation {
        Truncation::Fixed(h) => h,
        Truncation::Auto => select_truncation(data, config)?,
    };
    log::debug!("running chain with truncation {h}");
    let mut init_rng = stream(config.seed, "init");
    let state = initial_state(data, h, config, &mut init_rng)?;
    let sampler = Sampler::new(data, config, state, stream(config.seed, "chain"))?;
    drive(sampler, data, config, StepMask::FULL, h)
}

/// Runs the chain from a caller-supplied initial state.
pub fn run_chain_from(
    data: &[Patient],
    config: &SamplerConfig,
    state: ModelState,
) -> Result<PosteriorTrace> {
    config.validate()?;
    check_training_data(data)?;
    let h = state.truncation();
    let sampler = Sampler::new(data, config, state, stream(config.seed, "chain"))?;
    drive(sampler, data, config, StepMask::FULL, h)
}

/// Stage-two chain with assignments frozen at `partition`. The truncation is
/// the configured fixed value, or the partition's cluster count under `auto`.
pub fn run_conditional_chain(
    data: &[Patient],
    partition: &PartitionEstimate,
    config: &SamplerConfig,
) -> Result<PosteriorTrace> {
    config.validate()?;
    check_training_data(data)?;
    if partition.labels.len() != data.len() {
        return Err(Error::InvalidArgument(format!(
            "partition covers {} patients, data has {}",
            partition.labels.len(),
            data.len()
        )));
    }
    let k = partition.n_clusters();
    let h = match config.truncation {
        Truncation::Fixed(h) => h,
        Truncation::Auto => k,
    };
    if k > h {
        return Err(Error::InvalidArgument(format!(
            "partition has {k} clusters but truncation is {h}"
        )));
    }
    let assignments: Vec<usize> = partition.labels.iter().map(|&l| l - 1).collect();
    let (traj, resid_var) = init::pooled_fit(data);
    let state = init::state_from_assignments(data, assignments, h, traj, resid_var, config);
    let sampler = Sampler::new(data, config, state, stream(config.seed, "conditional-chain"))?;
    let mask = match config.conditional_skip {
        ConditionalSkip::AlphaAndAssignments => StepMask {
            alpha: false,
            assignments: false,
            sticks: true,
        },
        ConditionalSkip::AssignmentsAndSticks => StepMask {
            alpha: true,
            assignments: false,
            sticks: false,
        },
    };
    drive(sampler, data, config, mask, h)
}
