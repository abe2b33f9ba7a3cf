//! Deterministic starting states.

use rand::Rng;

use super::config::SamplerConfig;
use crate::dist::PROB_FLOOR;
use crate::error::{Error, Result};
use crate::model::{
    stick_breaking_weights, BaseMeasureHyper, ClusterParams, DependenceParams, ModelState, Patient,
    TrajectoryParams,
};
use crate::nls::{fit_sigmoid, sum_squares};
use crate::rng::SimRng;

/// Per-patient summary used for seeding: mean response and least-squares slope.
fn summary(p: &Patient) -> [f64; 2] {
    let n = p.n_obs() as f64;
    let ym = p.values.iter().sum::<f64>() / n;
    let tm = p.times.iter().sum::<f64>() / n;
    let sxx: f64 = p.times.iter().map(|t| (t - tm).powi(2)).sum();
    let sxy: f64 = p
        .times
        .iter()
        .zip(&p.values)
        .map(|(t, y)| (t - tm) * (y - ym))
        .sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    [ym, slope]
}

/// k-means with k-means++ seeding on standardised features.
pub fn kmeans(points: &[[f64; 2]], k: usize, rng: &mut SimRng) -> Vec<usize> {
    let n = points.len();
    let k = k.min(n).max(1);
    let mut scaled = points.to_vec();
    for d in 0..2 {
        let m = points.iter().map(|p| p[d]).sum::<f64>() / n as f64;
        let sd = (points.iter().map(|p| (p[d] - m).powi(2)).sum::<f64>() / n as f64).sqrt();
        let sd = if sd > 0.0 { sd } else { 1.0 };
        for p in &mut scaled {
            p[d] = (p[d] - m) / sd;
        }
    }
    let dist2 = |a: &[f64; 2], b: &[f64; 2]| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);

    let mut centres = vec![scaled[rng.random_range(0..n)]];
    while centres.len() < k {
        let d: Vec<f64> = scaled
            .iter()
            .map(|p| centres.iter().map(|c| dist2(p, c)).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = d.iter().sum();
        if total <= 0.0 {
            break;
        }
        let mut u = rng.random::<f64>() * total;
        let mut pick = n - 1;
        for (i, di) in d.iter().enumerate() {
            if u < *di {
                pick = i;
                break;
            }
            u -= di;
        }
        centres.push(scaled[pick]);
    }

    let mut labels = vec![0; n];
    for _ in 0..50 {
        let mut changed = false;
        for (i, p) in scaled.iter().enumerate() {
            let best = (0..centres.len())
                .min_by(|&a, &b| dist2(p, &centres[a]).total_cmp(&dist2(p, &centres[b])))
                .unwrap_or(0);
            if best != labels[i] {
                labels[i] = best;
                changed = true;
            }
        }
        let mut sums = vec![[0.0; 2]; centres.len()];
        let mut counts = vec![0usize; centres.len()];
        for (p, &l) in scaled.iter().zip(&labels) {
            sums[l][0] += p[0];
            sums[l][1] += p[1];
            counts[l] += 1;
        }
        for (c, (s, &m)) in centres.iter_mut().zip(sums.iter().zip(&counts)) {
            if m > 0 {
                *c = [s[0] / m as f64, s[1] / m as f64];
            }
        }
        if !changed {
            break;
        }
    }
    // relabel by first appearance so occupied clusters come first
    let mut map = vec![usize::MAX; centres.len()];
    let mut next = 0;
    for l in &mut labels {
        if map[*l] == usize::MAX {
            map[*l] = next;
            next += 1;
        }
        *l = map[*l];
    }
    labels
}

/// Pooled sigmoid fit and residual variance of the data.
pub(crate) fn pooled_fit(data: &[Patient]) -> (TrajectoryParams, f64) {
    let times: Vec<f64> = data.iter().flat_map(|p| p.times.iter().copied()).collect();
    let values: Vec<f64> = data.iter().flat_map(|p| p.values.iter().copied()).collect();
    let traj = fit_sigmoid(&times, &values).unwrap_or_else(|| {
        let m = if values.is_empty() {
            1.0
        } else {
            values.iter().sum::<f64>() / values.len() as f64
        };
        TrajectoryParams::new(2.0 * m, 0.0, 0.0)
    });
    let n = values.len().max(1) as f64;
    let resid_var = (sum_squares(&times, &values, &traj) / n).max(1e-3);
    (traj, resid_var)
}

/// Initial state: k-means assignments on per-patient summaries, every
/// trajectory at the base-measure mean (seeded from a pooled fit), dependence
/// variances at half the residual variance, `ρ = 0.5`, `α = 1`.
pub fn initial_state(
    data: &[Patient],
    truncation: usize,
    config: &SamplerConfig,
    rng: &mut SimRng,
) -> Result<ModelState> {
    if data.is_empty() {
        return Err(Error::InvalidData("no patients".into()));
    }
    if truncation == 0 {
        return Err(Error::InvalidArgument("truncation must be positive".into()));
    }
    let (traj, resid_var) = pooled_fit(data);
    let features: Vec<[f64; 2]> = data.iter().map(summary).collect();
    let k = config.initial_clusters.min(truncation);
    let assignments = kmeans(&features, k, rng);
    Ok(state_from_assignments(data, assignments, truncation, traj, resid_var, config))
}

pub(crate) fn state_from_assignments(
    data: &[Patient],
    assignments: Vec<usize>,
    truncation: usize,
    traj: TrajectoryParams,
    resid_var: f64,
    config: &SamplerConfig,
) -> ModelState {
    let priors = &config.priors;
    let alpha = 1.0;
    let mut counts = vec![0usize; truncation];
    let mut diseased = vec![0.0; truncation];
    for (p, &c) in data.iter().zip(&assignments) {
        counts[c] += 1;
        if p.disease == Some(true) {
            diseased[c] += 1.0;
        }
    }
    let clusters = (0..truncation)
        .map(|k| ClusterParams {
            phi: ((priors.a + diseased[k]) / (priors.a + priors.b + counts[k] as f64))
                .clamp(PROB_FLOOR, 1.0),
            traj,
        })
        .collect();
    let mut above: usize = counts.iter().sum();
    let mut sticks = Vec::with_capacity(truncation);
    for (k, &c) in counts.iter().enumerate() {
        above -= c;
        if k + 1 == truncation {
            sticks.push(1.0);
        } else {
            let a = 1.0 + c as f64;
            sticks.push(a / (a + alpha + above as f64));
        }
    }
    ModelState {
        assignments,
        weights: stick_breaking_weights(&sticks),
        sticks,
        clusters,
        dep: DependenceParams {
            gamma2: resid_var / 2.0,
            sigma2: resid_var / 2.0,
            rho: 0.5,
        },
        alpha,
        base: BaseMeasureHyper {
            theta_star: traj.theta,
            sigma: priors.sigma_scale,
            a: priors.a,
            b: priors.b,
        },
    }
}
