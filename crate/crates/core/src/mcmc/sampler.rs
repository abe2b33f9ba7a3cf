//! One Gibbs/Metropolis sweep of the truncated stick-breaking sampler, split
//! into its individual updates so each can be exercised on its own.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;

use super::adapt::{accept_probability, mh_accept, AcceptCounter, AdaptiveProposal3, AdaptiveScalar};
use super::config::{PriorSpec, SamplerConfig};
use crate::dist::{
    inv_gamma_log_kernel, logistic, logit, mvn3_log_kernel, sample_beta_open, sample_gamma,
    sample_inv_wishart3, sample_mvn3,
};
use crate::error::{Error, Result};
use crate::linalg::log_sum_exp;
use crate::model::{
    data_loglik_cached, log_bernoulli, DependenceParams, LikelihoodMode, ModelState, Patient,
    PatientFactor, TrajectoryParams,
};
use crate::rng::SimRng;

/// Initial proposal covariance of the trajectory blocks, before adaptation.
pub(crate) fn initial_theta_proposal() -> Matrix3<f64> {
    Matrix3::from_diagonal(&Vector3::new(1e-2, 1e-4, 1e-2))
}

/// Acceptance counters of the Metropolis blocks.
#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AcceptanceRates {
    pub theta: AcceptCounter,
    pub gamma2: AcceptCounter,
    pub sigma2: AcceptCounter,
    pub rho: AcceptCounter,
}

/// Which of the dependence parameters an MH step moves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DependenceParam {
    Gamma2,
    Sigma2,
    Rho,
}

/// Log of `q(old | new) / q(new | old)` for a log-normal random walk.
pub fn lognormal_proposal_log_correction(old: f64, new: f64) -> f64 {
    new.ln() - old.ln()
}

/// Log Jacobian correction of a random walk on `logit(ρ)`.
pub fn logit_proposal_log_correction(old: f64, new: f64) -> f64 {
    (new * (1.0 - new)).ln() - (old * (1.0 - old)).ln()
}

fn dependence_log_prior(which: DependenceParam, dep: &DependenceParams, priors: &PriorSpec) -> f64 {
    match which {
        DependenceParam::Gamma2 => {
            inv_gamma_log_kernel(dep.gamma2, priors.gamma2.shape, priors.gamma2.scale)
        }
        DependenceParam::Sigma2 => {
            inv_gamma_log_kernel(dep.sigma2, priors.sigma2.shape, priors.sigma2.scale)
        }
        DependenceParam::Rho => {
            if dep.rho > 0.0 && dep.rho < 1.0 {
                0.0
            } else {
                f64::NEG_INFINITY
            }
        }
    }
}

/// Log MH ratio for moving one dependence parameter from `old` to `new`,
/// given the data log-likelihood at both points.
pub fn dependence_log_accept_ratio(
    which: DependenceParam,
    old: &DependenceParams,
    new: &DependenceParams,
    old_loglik: f64,
    new_loglik: f64,
    priors: &PriorSpec,
) -> f64 {
    let correction = match which {
        DependenceParam::Gamma2 => lognormal_proposal_log_correction(old.gamma2, new.gamma2),
        DependenceParam::Sigma2 => lognormal_proposal_log_correction(old.sigma2, new.sigma2),
        DependenceParam::Rho => logit_proposal_log_correction(old.rho, new.rho),
    };
    new_loglik - old_loglik + dependence_log_prior(which, new, priors)
        - dependence_log_prior(which, old, priors)
        + correction
}

/// Conditional mean and covariance of θ* given the cluster trajectories:
/// `V = [P0 + H Σ⁻¹]⁻¹`, `m = V [P0 μ0 + Σ⁻¹ Σ_h θ_h]`.
pub fn theta_star_conditional(
    thetas: &[TrajectoryParams],
    sigma: &Matrix3<f64>,
    priors: &PriorSpec,
) -> Result<(Vector3<f64>, Matrix3<f64>)> {
    let sigma_inv = sigma
        .try_inverse()
        .ok_or_else(|| Error::Numerical("Sigma is singular".into()))?;
    let prior_prec = Matrix3::identity() / priors.theta_star_var;
    let h = thetas.len() as f64;
    let v = (prior_prec + sigma_inv * h)
        .try_inverse()
        .ok_or_else(|| Error::Numerical("theta* posterior precision is singular".into()))?;
    let v = 0.5 * (v + v.transpose());
    let sum = thetas
        .iter()
        .fold(Vector3::zeros(), |acc, t| acc + t.as_vector());
    let m = v * (prior_prec * Vector3::from(priors.theta_star_mean) + sigma_inv * sum);
    Ok((m, v))
}

/// Which optional steps an iteration runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepMask {
    pub alpha: bool,
    pub assignments: bool,
    pub sticks: bool,
}

impl StepMask {
    pub const FULL: StepMask = StepMask {
        alpha: true,
        assignments: true,
        sticks: true,
    };
}

/// Sampler state plus the caches and adaptive proposals that go with it.
pub struct Sampler<'a> {
    data: &'a [Patient],
    priors: PriorSpec,
    state: ModelState,
    factors: Vec<PatientFactor>,
    theta_props: Vec<AdaptiveProposal3>,
    gamma2_prop: AdaptiveScalar,
    sigma2_prop: AdaptiveScalar,
    rho_prop: AdaptiveScalar,
    accept: AcceptanceRates,
    adapting: bool,
    ignore_likelihood: bool,
    last_marginal: Option<f64>,
    rng: SimRng,
}

impl<'a> Sampler<'a> {
    pub fn new(
        data: &'a [Patient],
        config: &SamplerConfig,
        state: ModelState,
        rng: SimRng,
    ) -> Result<Self> {
        state.check_invariants()?;
        if state.assignments.len() != data.len() {
            return Err(Error::InvalidArgument(format!(
                "state has {} assignments for {} patients",
                state.assignments.len(),
                data.len()
            )));
        }
        let factors = data
            .iter()
            .map(|p| PatientFactor::new(&p.times, &state.dep))
            .collect::<Result<Vec<_>>>()?;
        let h = state.truncation();
        Ok(Self {
            data,
            priors: config.priors.clone(),
            theta_props: (0..h)
                .map(|_| AdaptiveProposal3::new(initial_theta_proposal(), config.adapt_target_accept))
                .collect(),
            gamma2_prop: AdaptiveScalar::new(0.3, config.adapt_target_accept_scalar),
            sigma2_prop: AdaptiveScalar::new(0.3, config.adapt_target_accept_scalar),
            rho_prop: AdaptiveScalar::new(0.5, config.adapt_target_accept_scalar),
            accept: AcceptanceRates::default(),
            adapting: config.adapt,
            ignore_likelihood: config.ignore_likelihood,
            last_marginal: None,
            state,
            factors,
            rng,
        })
    }

    pub fn state(&self) -> &ModelState {
        &self.state
    }

    pub fn into_state(self) -> ModelState {
        self.state
    }

    pub fn acceptance(&self) -> &AcceptanceRates {
        &self.accept
    }

    pub fn reset_acceptance(&mut self) {
        self.accept = AcceptanceRates::default();
    }

    pub fn set_adapting(&mut self, on: bool) {
        self.adapting = on;
    }

    pub fn rng(&mut self) -> &mut SimRng {
        &mut self.rng
    }

    /// Replaces the data-independent parts of the state, e.g. after a test
    /// regenerates the data. Caches are rebuilt.
    pub fn set_data(&mut self, data: &'a [Patient]) -> Result<()> {
        if data.len() != self.state.assignments.len() {
            return Err(Error::InvalidArgument("patient count changed".into()));
        }
        self.data = data;
        self.refresh_factors()
    }

    fn refresh_factors(&mut self) -> Result<()> {
        self.factors = self
            .data
            .iter()
            .map(|p| PatientFactor::new(&p.times, &self.state.dep))
            .collect::<Result<Vec<_>>>()?;
        Ok(())
    }

    fn patient_ll(&self, i: usize, traj: &TrajectoryParams) -> f64 {
        if self.ignore_likelihood {
            return 0.0;
        }
        let p = &self.data[i];
        self.factors[i].loglik(&p.times, &p.values, traj)
    }

    fn members(&self) -> Vec<Vec<usize>> {
        let mut m = vec![Vec::new(); self.state.truncation()];
        for (i, &c) in self.state.assignments.iter().enumerate() {
            m[c].push(i);
        }
        m
    }

    /// Step 1: conjugate Beta update of each cluster's disease probability.
    pub fn update_phi(&mut self) -> Result<()> {
        let h = self.state.truncation();
        let mut diseased = vec![0.0; h];
        let mut healthy = vec![0.0; h];
        if !self.ignore_likelihood {
            for (p, &c) in self.data.iter().zip(&self.state.assignments) {
                match p.disease {
                    Some(true) => diseased[c] += 1.0,
                    Some(false) => healthy[c] += 1.0,
                    None => {}
                }
            }
        }
        for k in 0..h {
            self.state.clusters[k].phi = sample_beta_open(
                &mut self.rng,
                self.priors.a + diseased[k],
                self.priors.b + healthy[k],
            )?;
        }
        Ok(())
    }

    /// Step 2: adaptive random-walk MH for occupied clusters, exact prior draws
    /// for empty ones.
    pub fn update_theta_clusters(&mut self) -> Result<()> {
        let sigma = self.state.base.sigma_matrix();
        let prec = sigma
            .try_inverse()
            .ok_or_else(|| Error::Numerical("Sigma is singular".into()))?;
        let mean = self.state.base.theta_star_vector();
        let members = self.members();
        for (k, idx) in members.iter().enumerate() {
            if idx.is_empty() {
                let draw = sample_mvn3(&mut self.rng, &mean, &sigma)?;
                self.state.clusters[k].traj = TrajectoryParams::from_vector(&draw);
                continue;
            }
            let cur = self.state.clusters[k].traj.as_vector();
            let cur_traj = self.state.clusters[k].traj;
            let cur_lp = mvn3_log_kernel(&cur, &mean, &prec)
                + idx.iter().map(|&i| self.patient_ll(i, &cur_traj)).sum::<f64>();
            let prop = self.theta_props[k].propose(&mut self.rng, &cur);
            let prop_traj = TrajectoryParams::from_vector(&prop);
            let prop_lp = if prop_traj.is_finite() {
                mvn3_log_kernel(&prop, &mean, &prec)
                    + idx.iter().map(|&i| self.patient_ll(i, &prop_traj)).sum::<f64>()
            } else {
                f64::NEG_INFINITY
            };
            let log_ratio = prop_lp - cur_lp;
            let accepted = mh_accept(&mut self.rng, log_ratio);
            if accepted {
                self.state.clusters[k].traj = prop_traj;
            }
            self.accept.theta.record(accepted);
            if self.adapting {
                let now = self.state.clusters[k].traj.as_vector();
                self.theta_props[k].adapt(&now, accept_probability(log_ratio));
            }
        }
        Ok(())
    }

    fn conditional_loglik_with(&self, factors: &[PatientFactor]) -> f64 {
        if self.ignore_likelihood {
            return 0.0;
        }
        self.data
            .iter()
            .zip(factors)
            .zip(&self.state.assignments)
            .map(|((p, f), &c)| f.loglik(&p.times, &p.values, &self.state.clusters[c].traj))
            .sum()
    }

    /// Step 3: sequential MH updates of γ², σ² (log-normal random walks) and ρ
    /// (random walk on the logit scale), marginal over the random intercepts.
    pub fn update_dependence(&mut self) -> Result<()> {
        let mut cur_ll = self.conditional_loglik_with(&self.factors);
        for which in [DependenceParam::Gamma2, DependenceParam::Sigma2, DependenceParam::Rho] {
            let old = self.state.dep;
            let mut new = old;
            match which {
                DependenceParam::Gamma2 => {
                    new.gamma2 = old.gamma2 * self.gamma2_prop.step(&mut self.rng).exp()
                }
                DependenceParam::Sigma2 => {
                    new.sigma2 = old.sigma2 * self.sigma2_prop.step(&mut self.rng).exp()
                }
                DependenceParam::Rho => {
                    new.rho = logistic(logit(old.rho) + self.rho_prop.step(&mut self.rng))
                }
            }
            let (log_ratio, new_factors, new_ll) = if new.validate().is_err() {
                (f64::NEG_INFINITY, None, f64::NEG_INFINITY)
            } else if self.ignore_likelihood {
                let lr = dependence_log_accept_ratio(which, &old, &new, 0.0, 0.0, &self.priors);
                (lr, None, 0.0)
            } else {
                let factors: Result<Vec<_>> = self
                    .data
                    .iter()
                    .map(|p| PatientFactor::new(&p.times, &new))
                    .collect();
                match factors {
                    Ok(f) => {
                        let ll = self.conditional_loglik_with(&f);
                        let lr = dependence_log_accept_ratio(which, &old, &new, cur_ll, ll, &self.priors);
                        (lr, Some(f), ll)
                    }
                    Err(_) => (f64::NEG_INFINITY, None, f64::NEG_INFINITY),
                }
            };
            let accepted = mh_accept(&mut self.rng, log_ratio);
            if accepted {
                self.state.dep = new;
                cur_ll = new_ll;
                match new_factors {
                    Some(f) => self.factors = f,
                    None => self.refresh_factors()?,
                }
            }
            let p = accept_probability(log_ratio);
            let (counter, prop) = match which {
                DependenceParam::Gamma2 => (&mut self.accept.gamma2, &mut self.gamma2_prop),
                DependenceParam::Sigma2 => (&mut self.accept.sigma2, &mut self.sigma2_prop),
                DependenceParam::Rho => (&mut self.accept.rho, &mut self.rho_prop),
            };
            counter.record(accepted);
            if self.adapting {
                prop.adapt(p);
            }
        }
        Ok(())
    }

    /// Step 4: `α ~ Gamma(shape + H - 1, rate - Σ_{h<H} log(1 - V_h))`.
    pub fn update_alpha(&mut self) -> Result<()> {
        let h = self.state.truncation();
        let log_rem: f64 = self.state.sticks[..h - 1].iter().map(|v| (1.0 - v).ln()).sum();
        let shape = self.priors.alpha_shape + (h - 1) as f64;
        let rate = self.priors.alpha_rate - log_rem;
        self.state.alpha = sample_gamma(&mut self.rng, shape, rate)?.max(f64::MIN_POSITIVE);
        Ok(())
    }

    /// Step 5: redraw every cluster assignment from its full conditional.
    /// Records the marginal data log-likelihood at the current parameters.
    pub fn update_assignments(&mut self) -> Result<()> {
        let h = self.state.truncation();
        let log_w: Vec<f64> = self.state.weights.iter().map(|w| w.ln()).collect();
        let mut lp = vec![0.0; h];
        let mut marginal = 0.0;
        for i in 0..self.data.len() {
            let disease = if self.ignore_likelihood {
                None
            } else {
                self.data[i].disease
            };
            for k in 0..h {
                let cl = &self.state.clusters[k];
                lp[k] = log_w[k] + log_bernoulli(cl.phi, disease) + self.patient_ll(i, &cl.traj);
            }
            let lse = log_sum_exp(&lp);
            if !lse.is_finite() {
                return Err(Error::Numerical(format!(
                    "assignment probabilities of patient {} are all zero",
                    self.data[i].id
                )));
            }
            marginal += lse;
            let u: f64 = self.rng.random();
            let mut acc = 0.0;
            let mut chosen = h - 1;
            for (k, &l) in lp.iter().enumerate() {
                acc += (l - lse).exp();
                if u < acc {
                    chosen = k;
                    break;
                }
            }
            // round-off can leave `acc` just below one; fall back to the last
            // cluster with positive mass
            if u >= acc {
                chosen = lp.iter().rposition(|l| l.is_finite()).unwrap_or(chosen);
            }
            self.state.assignments[i] = chosen;
        }
        self.last_marginal = Some(marginal);
        Ok(())
    }

    /// Step 6: `V_h ~ Beta(1 + n_h, α + n_{>h})` for `h < H`, `V_H = 1`.
    pub fn update_sticks(&mut self) -> Result<()> {
        let counts = self.state.cluster_counts();
        let h = counts.len();
        let mut above: usize = counts.iter().sum();
        for k in 0..h - 1 {
            above -= counts[k];
            self.state.sticks[k] = sample_beta_open(
                &mut self.rng,
                1.0 + counts[k] as f64,
                self.state.alpha + above as f64,
            )?;
        }
        self.state.sticks[h - 1] = 1.0;
        self.state.refresh_weights();
        Ok(())
    }

    /// Steps 7 and 8: conjugate updates of θ* and Σ over all `H` clusters.
    pub fn update_base_measure(&mut self) -> Result<()> {
        let thetas: Vec<TrajectoryParams> = self.state.clusters.iter().map(|c| c.traj).collect();
        let sigma = self.state.base.sigma_matrix();
        let (m, v) = theta_star_conditional(&thetas, &sigma, &self.priors)?;
        let theta_star = sample_mvn3(&mut self.rng, &m, &v)?;
        let mut scatter = Matrix3::from_fn(|i, j| self.priors.sigma_scale[i][j]);
        for t in &thetas {
            let d = t.as_vector() - theta_star;
            scatter += d * d.transpose();
        }
        let df = self.priors.sigma_df + thetas.len() as f64;
        let new_sigma = sample_inv_wishart3(&mut self.rng, df, &scatter)?;
        self.state.base.theta_star = [theta_star[0], theta_star[1], theta_star[2]];
        self.state.base.set_sigma(&new_sigma);
        Ok(())
    }

    /// One full sweep in the published order.
    pub fn iterate(&mut self, mask: StepMask) -> Result<()> {
        self.last_marginal = None;
        self.update_phi()?;
        self.update_theta_clusters()?;
        self.update_dependence()?;
        if mask.alpha {
            self.update_alpha()?;
        }
        if mask.assignments {
            self.update_assignments()?;
        }
        if mask.sticks {
            self.update_sticks()?;
        }
        self.update_base_measure()
    }

    /// Marginal log-likelihood recorded by the last assignment step.
    pub fn last_marginal(&self) -> Option<f64> {
        self.last_marginal
    }

    pub fn loglik(&self, mode: LikelihoodMode) -> f64 {
        data_loglik_cached(&self.state, self.data, &self.factors, mode)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lognormal_correction_is_log_ratio() {
        assert!((lognormal_proposal_log_correction(0.5, 2.0) - 4f64.ln()).abs() < 1e-15);
        assert!((logit_proposal_log_correction(0.5, 0.5)).abs() < 1e-15);
    }

    #[test]
    fn rho_ratio_with_equal_likelihood_is_the_jacobian() {
        let priors = PriorSpec::default();
        let old = DependenceParams::new(0.1, 0.1, 0.3).unwrap();
        let new = DependenceParams { rho: 0.7, ..old };
        let r = dependence_log_accept_ratio(DependenceParam::Rho, &old, &new, -5.0, -5.0, &priors);
        assert_eq!(r, logit_proposal_log_correction(0.3, 0.7));
        assert!((r - (0.21f64 / 0.21).ln()).abs() < 1e-15);

        let new = DependenceParams { rho: 0.9, ..old };
        let r = dependence_log_accept_ratio(DependenceParam::Rho, &old, &new, -5.0, -5.0, &priors);
        assert!((r - (0.09f64 / 0.21).ln()).abs() < 1e-14);
    }

    #[test]
    fn variance_ratio_with_flat_prior_is_the_proposal_correction() {
        // prior kernel ∝ x^{-(shape+1)} e^{-scale/x}; with shape = -1 and a
        // vanishing scale the kernel is flat, leaving only the correction
        let mut priors = PriorSpec::default();
        priors.gamma2.shape = -1.0;
        priors.gamma2.scale = 0.0;
        let old = DependenceParams::new(0.2, 0.1, 0.3).unwrap();
        let new = DependenceParams { gamma2: 0.5, ..old };
        let r = dependence_log_accept_ratio(DependenceParam::Gamma2, &old, &new, 1.0, 1.0, &priors);
        assert!((r - (0.5f64 / 0.2).ln()).abs() < 1e-15);
    }
}
