//! Disease probabilities for new (possibly partial) profiles, averaged over
//! posterior draws, plus thresholding and ROC analysis.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::quantile_sorted;
use crate::error::{Error, Result};
use crate::linalg::log_sum_exp;
use crate::mcmc::{Draw, TwoComponentDraw, TwoComponentState};
use crate::model::{ModelState, Patient, PatientFactor};

/// Anything that yields a disease probability for one observed profile.
pub trait DrawPredictor: Sync {
    fn predict(&self, times: &[f64], values: &[f64]) -> Result<f64>;
}

/// Disease probability under one mixture state: a likelihood-and-weight
/// weighted average of the cluster disease rates. An empty profile gives
/// `Σ φ_h ψ_h`.
pub fn predict_draw(state: &ModelState, times: &[f64], values: &[f64]) -> Result<f64> {
    if times.len() != values.len() {
        return Err(Error::InvalidArgument("times and values differ in length".into()));
    }
    let factor = PatientFactor::new(times, &state.dep)?;
    let mut logw = Vec::with_capacity(state.clusters.len());
    let mut phis = Vec::with_capacity(state.clusters.len());
    for (c, &w) in state.clusters.iter().zip(&state.weights) {
        if w > 0.0 {
            logw.push(w.ln() + factor.loglik(times, values, &c.traj));
            phis.push(c.phi);
        }
    }
    let norm = log_sum_exp(&logw);
    if !norm.is_finite() {
        return Err(Error::Numerical("all cluster weights vanish".into()));
    }
    let p: f64 = logw
        .iter()
        .zip(&phis)
        .map(|(lw, phi)| phi * (lw - norm).exp())
        .sum();
    Ok(p.clamp(0.0, 1.0))
}

/// `φ L₁ / (φ L₁ + (1 - φ) L₀)` under one two-component state.
pub fn predict_two_component(state: &TwoComponentState, times: &[f64], values: &[f64]) -> Result<f64> {
    if times.len() != values.len() {
        return Err(Error::InvalidArgument("times and values differ in length".into()));
    }
    let mut l = [0.0; 2];
    for (d, g) in state.groups.iter().enumerate() {
        l[d] = PatientFactor::new(times, &g.dep)?.loglik(times, values, &g.traj);
    }
    let a = state.phi.ln() + l[1];
    let b = (1.0 - state.phi).ln() + l[0];
    let norm = log_sum_exp(&[a, b]);
    if !norm.is_finite() {
        return Err(Error::Numerical("both group likelihoods vanish".into()));
    }
    Ok((a - norm).exp().clamp(0.0, 1.0))
}

impl DrawPredictor for ModelState {
    fn predict(&self, times: &[f64], values: &[f64]) -> Result<f64> {
        predict_draw(self, times, values)
    }
}

impl DrawPredictor for Draw {
    fn predict(&self, times: &[f64], values: &[f64]) -> Result<f64> {
        predict_draw(&self.state, times, values)
    }
}

impl DrawPredictor for TwoComponentState {
    fn predict(&self, times: &[f64], values: &[f64]) -> Result<f64> {
        predict_two_component(self, times, values)
    }
}

impl DrawPredictor for TwoComponentDraw {
    fn predict(&self, times: &[f64], values: &[f64]) -> Result<f64> {
        predict_two_component(&self.state, times, values)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionResult {
    /// Posterior mean probability.
    pub prob: f64,
    /// Central credible interval of the per-draw probabilities.
    pub interval: (f64, f64),
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_draw: Option<Vec<f64>>,
}

/// Mean and central interval of a set of per-draw probabilities.
pub fn summarise_draws(per_draw: Vec<f64>, level: f64) -> Result<PredictionResult> {
    if per_draw.is_empty() {
        return Err(Error::InvalidArgument("no draws to average".into()));
    }
    if !(0.0..=1.0).contains(&level) {
        return Err(Error::InvalidArgument(format!("interval level {level} outside [0, 1]")));
    }
    let prob = per_draw.iter().sum::<f64>() / per_draw.len() as f64;
    let mut sorted = per_draw.clone();
    sorted.sort_by(f64::total_cmp);
    let lower = quantile_sorted(&sorted, (1.0 - level) / 2.0);
    let upper = quantile_sorted(&sorted, (1.0 + level) / 2.0);
    Ok(PredictionResult {
        prob: prob.clamp(0.0, 1.0),
        interval: (lower, upper),
        per_draw: Some(per_draw),
    })
}

/// Model-averaged prediction over retained draws.
pub fn bma_predict<P: DrawPredictor>(
    draws: &[P],
    times: &[f64],
    values: &[f64],
    level: f64,
) -> Result<PredictionResult> {
    let per_draw = draws
        .iter()
        .map(|d| d.predict(times, values))
        .collect::<Result<Vec<_>>>()?;
    summarise_draws(per_draw, level)
}

/// Predictions for many patients in parallel; per-draw vectors are dropped.
pub fn predict_patients<P: DrawPredictor>(
    draws: &[P],
    patients: &[Patient],
    level: f64,
) -> Result<Vec<PredictionResult>> {
    patients
        .par_iter()
        .map(|p| {
            let mut r = bma_predict(draws, &p.times, &p.values, level)?;
            r.per_draw = None;
            Ok(r)
        })
        .collect()
}

/// Posterior mean probabilities only.
pub fn predict_means<P: DrawPredictor>(draws: &[P], patients: &[Patient]) -> Result<Vec<f64>> {
    if draws.is_empty() {
        return Err(Error::InvalidArgument("no draws to average".into()));
    }
    patients
        .par_iter()
        .map(|p| {
            let mut s = 0.0;
            for d in draws {
                s += d.predict(&p.times, &p.values)?;
            }
            Ok((s / draws.len() as f64).clamp(0.0, 1.0))
        })
        .collect()
}

/// `prob > threshold`.
pub fn classify(prob: f64, threshold: f64) -> bool {
    prob > threshold
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Roc {
    pub auc: f64,
    /// One point per distinct probability (classifying `prob > threshold`)
    /// in decreasing threshold order, plus a final all-positive point.
    pub curve: Vec<RocPoint>,
}

/// AUC as the Mann-Whitney statistic (ties count one half) and the ROC curve.
pub fn roc_auc(probs: &[f64], labels: &[bool]) -> Result<Roc> {
    if probs.len() != labels.len() {
        return Err(Error::InvalidArgument("probs and labels differ in length".into()));
    }
    if probs.iter().any(|p| p.is_nan()) {
        return Err(Error::InvalidArgument("NaN probability".into()));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::InvalidArgument("ROC analysis needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]));

    let mut curve = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    // concordant pairs counted as twice the statistic to stay in integers
    let mut twice_u: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let t = probs[order[i]];
        curve.push(RocPoint {
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
            threshold: t,
        });
        let (mut gp, mut gn) = (0usize, 0usize);
        while i < order.len() && probs[order[i]] == t {
            if labels[order[i]] {
                gp += 1;
            } else {
                gn += 1;
            }
            i += 1;
        }
        // positives in this group beat every negative below it, tie with the group's negatives
        twice_u += (gp as u128) * (2 * (neg - fp - gn) + gn) as u128;
        tp += gp;
        fp += gn;
    }
    let min = probs[order[order.len() - 1]];
    curve.push(RocPoint {
        fpr: 1.0,
        tpr: 1.0,
        threshold: min.next_down(),
    });
    let auc = twice_u as f64 / (2.0 * pos as f64 * neg as f64);
    Ok(Roc { auc, curve })
}

/// Threshold maximising `tpr - cost_ratio · fpr`; ties go to the smaller threshold.
pub fn best_threshold(curve: &[RocPoint], cost_ratio: f64) -> Result<f64> {
    let mut best: Option<(f64, f64)> = None;
    for p in curve {
        let score = p.tpr - cost_ratio * p.fpr;
        let better = match best {
            None => true,
            Some((s, t)) => score > s || (score == s && p.threshold < t),
        };
        if better {
            best = Some((score, p.threshold));
        }
    }
    best.map(|(_, t)| t)
        .ok_or_else(|| Error::InvalidArgument("empty ROC curve".into()))
}

/// Sensitivity and specificity of `prob > threshold`.
pub fn sensitivity_specificity(probs: &[f64], labels: &[bool], threshold: f64) -> (f64, f64) {
    let (mut tp, mut pos, mut tn, mut neg) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &l) in probs.iter().zip(labels) {
        let c = classify(p, threshold);
        if l {
            pos += 1;
            tp += usize::from(c);
        } else {
            neg += 1;
            tn += usize::from(!c);
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { f64::NAN } else { a as f64 / b as f64 };
    (ratio(tp, pos), ratio(tn, neg))
}
