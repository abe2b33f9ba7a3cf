//! Two-component baseline: one trajectory and one set of dependence
//! parameters per disease status, with a common disease prevalence.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use super::adapt::{accept_probability, mh_accept, AcceptCounter, AdaptiveProposal3, AdaptiveScalar};
use super::config::{PriorSpec, SamplerConfig};
use super::init::pooled_fit;
use super::sampler::{
    dependence_log_accept_ratio, initial_theta_proposal, theta_star_conditional, DependenceParam,
};
use crate::dist::{logistic, logit, mvn3_log_kernel, sample_beta_open, sample_inv_wishart3, sample_mvn3};
use crate::error::{Error, Result};
use crate::model::{BaseMeasureHyper, DependenceParams, Patient, PatientFactor, TrajectoryParams};
use crate::rng::{stream, SimRng};

/// Trajectory and dependence parameters of one disease group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupParams {
    pub traj: TrajectoryParams,
    pub dep: DependenceParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoComponentState {
    /// Disease prevalence.
    pub phi: f64,
    /// Index 0 is the healthy group, index 1 the diseased group.
    pub groups: [GroupParams; 2],
    pub base: BaseMeasureHyper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoComponentDraw {
    pub iteration: usize,
    #[serde(flatten)]
    pub state: TwoComponentState,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TwoComponentAcceptance {
    pub theta: [AcceptCounter; 2],
    pub gamma2: [AcceptCounter; 2],
    pub sigma2: [AcceptCounter; 2],
    pub rho: [AcceptCounter; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoComponentTrace {
    pub patient_ids: Vec<String>,
    pub burn_in: usize,
    pub seed: u64,
    pub draws: Vec<TwoComponentDraw>,
    pub acceptance: TwoComponentAcceptance,
}

struct GroupSampler {
    members: Vec<usize>,
    factors: Vec<PatientFactor>,
    theta_prop: AdaptiveProposal3,
    dep_props: [AdaptiveScalar; 3],
}

fn group_loglik(data: &[Patient], members: &[usize], factors: &[PatientFactor], traj: &TrajectoryParams) -> f64 {
    members
        .iter()
        .zip(factors)
        .map(|(&i, f)| f.loglik(&data[i].times, &data[i].values, traj))
        .sum()
}

/// Splits patients into healthy and diseased index lists.
fn split_groups(data: &[Patient]) -> Result<[Vec<usize>; 2]> {
    let mut groups = [Vec::new(), Vec::new()];
    for (i, p) in data.iter().enumerate() {
        match p.disease {
            Some(d) => groups[usize::from(d)].push(i),
            None => {
                return Err(Error::InvalidData(format!(
                    "training patient {} has no disease label",
                    p.id
                )))
            }
        }
        if p.n_obs() == 0 {
            return Err(Error::InvalidData(format!(
                "training patient {} has no observations",
                p.id
            )));
        }
    }
    if groups.iter().any(Vec::is_empty) {
        return Err(Error::InvalidData(
            "two-component model needs both healthy and diseased patients".into(),
        ));
    }
    Ok(groups)
}

/// Conjugate prevalence update `Beta(a + Σd, b + Σ(1 - d))`.
pub fn prevalence_posterior(data: &[Patient], priors: &PriorSpec) -> (f64, f64) {
    let diseased = data.iter().filter(|p| p.disease == Some(true)).count() as f64;
    let healthy = data.iter().filter(|p| p.disease == Some(false)).count() as f64;
    (priors.a + diseased, priors.b + healthy)
}

fn update_group(
    data: &[Patient],
    g: &mut GroupSampler,
    params: &mut GroupParams,
    base: &BaseMeasureHyper,
    priors: &PriorSpec,
    acc: (&mut AcceptCounter, [&mut AcceptCounter; 3]),
    adapting: bool,
    rng: &mut SimRng,
) -> Result<()> {
    let sigma = base.sigma_matrix();
    let prec = sigma
        .try_inverse()
        .ok_or_else(|| Error::Numerical("Sigma is singular".into()))?;
    let mean = base.theta_star_vector();

    let cur = params.traj.as_vector();
    let cur_ll = group_loglik(data, &g.members, &g.factors, &params.traj);
    let cur_lp = mvn3_log_kernel(&cur, &mean, &prec) + cur_ll;
    let prop = g.theta_prop.propose(rng, &cur);
    let prop_traj = TrajectoryParams::from_vector(&prop);
    let prop_ll = group_loglik(data, &g.members, &g.factors, &prop_traj);
    let log_ratio = if prop_traj.is_finite() {
        mvn3_log_kernel(&prop, &mean, &prec) + prop_ll - cur_lp
    } else {
        f64::NEG_INFINITY
    };
    let accepted = mh_accept(rng, log_ratio);
    let mut ll = cur_ll;
    if accepted {
        params.traj = prop_traj;
        ll = prop_ll;
    }
    acc.0.record(accepted);
    if adapting {
        g.theta_prop.adapt(&params.traj.as_vector(), accept_probability(log_ratio));
    }

    let [c_g, c_s, c_r] = acc.1;
    let counters = [c_g, c_s, c_r];
    let which = [DependenceParam::Gamma2, DependenceParam::Sigma2, DependenceParam::Rho];
    for (k, (counter, which)) in counters.into_iter().zip(which).enumerate() {
        let old = params.dep;
        let mut new = old;
        let step = g.dep_props[k].step(rng);
        match which {
            DependenceParam::Gamma2 => new.gamma2 = old.gamma2 * step.exp(),
            DependenceParam::Sigma2 => new.sigma2 = old.sigma2 * step.exp(),
            DependenceParam::Rho => new.rho = logistic(logit(old.rho) + step),
        }
        let factors: Option<Vec<PatientFactor>> = if new.validate().is_ok() {
            g.members
                .iter()
                .map(|&i| PatientFactor::new(&data[i].times, &new))
                .collect::<Result<Vec<_>>>()
                .ok()
        } else {
            None
        };
        let (log_ratio, new_ll) = match &factors {
            Some(f) => {
                let new_ll = group_loglik(data, &g.members, f, &params.traj);
                (dependence_log_accept_ratio(which, &old, &new, ll, new_ll, priors), new_ll)
            }
            None => (f64::NEG_INFINITY, f64::NEG_INFINITY),
        };
        let accepted = mh_accept(rng, log_ratio);
        if accepted {
            params.dep = new;
            ll = new_ll;
            if let Some(f) = factors {
                g.factors = f;
            }
        }
        counter.record(accepted);
        if adapting {
            g.dep_props[k].adapt(accept_probability(log_ratio));
        }
    }
    Ok(())
}

/// Fits the two-component model by MCMC. Deterministic given `config.seed`.
pub fn run_two_component(data: &[Patient], config: &SamplerConfig) -> Result<TwoComponentTrace> {
    config.validate()?;
    let members = split_groups(data)?;
    let priors = &config.priors;
    let mut rng = stream(config.seed, "two-component");

    let mut groups = Vec::with_capacity(2);
    let mut params = Vec::with_capacity(2);
    for m in members {
        let subset: Vec<Patient> = m.iter().map(|&i| data[i].clone()).collect();
        let (traj, resid_var) = pooled_fit(&subset);
        let dep = DependenceParams {
            gamma2: resid_var / 2.0,
            sigma2: resid_var / 2.0,
            rho: 0.5,
        };
        let factors = m
            .iter()
            .map(|&i| PatientFactor::new(&data[i].times, &dep))
            .collect::<Result<Vec<_>>>()?;
        groups.push(GroupSampler {
            members: m,
            factors,
            theta_prop: AdaptiveProposal3::new(initial_theta_proposal(), config.adapt_target_accept),
            dep_props: [
                AdaptiveScalar::new(0.3, config.adapt_target_accept_scalar),
                AdaptiveScalar::new(0.3, config.adapt_target_accept_scalar),
                AdaptiveScalar::new(0.5, config.adapt_target_accept_scalar),
            ],
        });
        params.push(GroupParams { traj, dep });
    }
    let mut params: [GroupParams; 2] = [params[0], params[1]];
    let t0 = params[0].traj.as_vector();
    let t1 = params[1].traj.as_vector();
    let mid = 0.5 * (t0 + t1);
    let mut base = BaseMeasureHyper {
        theta_star: [mid[0], mid[1], mid[2]],
        sigma: priors.sigma_scale,
        a: priors.a,
        b: priors.b,
    };
    let (pa, pb) = prevalence_posterior(data, priors);

    let mut acc = TwoComponentAcceptance::default();
    let mut adapting = config.adapt;
    let mut draws = Vec::with_capacity(config.retained_draws());
    for it in 0..config.iterations {
        if it == config.burn_in {
            adapting = false;
            acc = TwoComponentAcceptance::default();
        }
        let phi = sample_beta_open(&mut rng, pa, pb)?;
        for d in 0..2 {
            let TwoComponentAcceptance {
                theta,
                gamma2,
                sigma2,
                rho,
            } = &mut acc;
            update_group(
                data,
                &mut groups[d],
                &mut params[d],
                &base,
                priors,
                (&mut theta[d], [&mut gamma2[d], &mut sigma2[d], &mut rho[d]]),
                adapting,
                &mut rng,
            )?;
        }
        let thetas = [params[0].traj, params[1].traj];
        let (m, v) = theta_star_conditional(&thetas, &base.sigma_matrix(), priors)?;
        let ts = sample_mvn3(&mut rng, &m, &v)?;
        let mut scatter = Matrix3::from_fn(|i, j| priors.sigma_scale[i][j]);
        for t in &thetas {
            let d = t.as_vector() - ts;
            scatter += d * d.transpose();
        }
        let s = sample_inv_wishart3(&mut rng, priors.sigma_df + 2.0, &scatter)?;
        base.theta_star = [ts[0], ts[1], ts[2]];
        base.set_sigma(&s);

        if config.is_retained(it) {
            draws.push(TwoComponentDraw {
                iteration: it,
                state: TwoComponentState {
                    phi,
                    groups: params,
                    base: base.clone(),
                },
            });
        }
    }
    Ok(TwoComponentTrace {
        patient_ids: data.iter().map(|p| p.id.clone()).collect(),
        burn_in: config.burn_in,
        seed: config.seed,
        draws,
        acceptance: acc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prevalence_posterior_counts() {
        let mut data = Vec::new();
        for i in 0..173 {
            data.push(Patient::new(format!("{i}"), Some(i < 49), vec![10.0], vec![1.0]).unwrap());
        }
        assert_eq!(prevalence_posterior(&data, &PriorSpec::default()), (49.5, 124.5));
    }

    #[test]
    fn rejects_single_class() {
        let data: Vec<Patient> = (0..5)
            .map(|i| Patient::new(format!("{i}"), Some(false), vec![10.0], vec![1.0]).unwrap())
            .collect();
        let cfg = SamplerConfig {
            iterations: 10,
            burn_in: 5,
            thin: 1,
            ..Default::default()
        };
        assert!(matches!(run_two_component(&data, &cfg), Err(Error::InvalidData(_))));
    }
}
