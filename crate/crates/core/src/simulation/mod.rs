//! Synthetic scenarios, evaluation metrics and replicate studies.

mod study;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use study::{
    cross_validate, holdout_size, holdout_split, run_study, thread_count, CvConfig,
    MethodSummary, MetricSummary, ReplicateFailure, ReplicateRecord, StudyConfig, StudyMethod,
    StudyReport, METRICS,
};

use crate::dist::standard_normal;
use crate::error::{Error, Result};
use crate::model::{eval_trajectory, DependenceParams, Patient, TrajectoryParams, CORRELATION_LAG_DAYS};
use crate::partition::CoclusteringMatrix;
use crate::prediction::{classify, roc_auc};

/// How many measurements each patient has and when they are taken.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObsDesign {
    pub min_obs: usize,
    pub max_obs: usize,
    /// Days.
    pub t_min: f64,
    pub t_max: f64,
}

impl Default for ObsDesign {
    fn default() -> Self {
        Self {
            min_obs: 1,
            max_obs: 6,
            t_min: 10.0,
            t_max: 80.0,
        }
    }
}

impl ObsDesign {
    pub fn validate(&self) -> Result<()> {
        if self.min_obs > self.max_obs || !(self.t_min < self.t_max) || !self.t_min.is_finite() || !self.t_max.is_finite() {
            return Err(Error::InvalidArgument(format!("invalid observation design {self:?}")));
        }
        Ok(())
    }

    /// Sorted, distinct measurement times.
    pub fn sample_times<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let n = rng.random_range(self.min_obs..=self.max_obs);
        let mut times: Vec<f64> = Vec::with_capacity(n);
        while times.len() < n {
            let t = rng.random_range(self.t_min..self.t_max);
            if !times.contains(&t) {
                times.push(t);
            }
        }
        times.sort_by(f64::total_cmp);
        times
    }
}

/// A generating mixture of trajectory clusters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub cluster_weights: Vec<f64>,
    pub cluster_disease_rates: Vec<f64>,
    pub cluster_trajectories: Vec<TrajectoryParams>,
    /// Zero variances are allowed here and give noise-free profiles.
    pub dep: DependenceParams,
    pub obs_design: ObsDesign,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let k = self.cluster_weights.len();
        if k == 0 || self.cluster_disease_rates.len() != k || self.cluster_trajectories.len() != k {
            return Err(Error::InvalidArgument(
                "scenario vectors must be nonempty and of equal length".into(),
            ));
        }
        let total: f64 = self.cluster_weights.iter().sum();
        if self.cluster_weights.iter().any(|w| !(*w >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument("cluster weights must sum to 1".into()));
        }
        if self.cluster_disease_rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::InvalidArgument("disease rates must lie in [0, 1]".into()));
        }
        let d = &self.dep;
        if !(d.gamma2 >= 0.0 && d.sigma2 >= 0.0 && d.rho > 0.0 && d.rho < 1.0) {
            return Err(Error::InvalidArgument(format!("invalid scenario dependence {d:?}")));
        }
        self.obs_design.validate()
    }

    /// Same scenario with both variance components set to zero.
    pub fn noise_free(mut self) -> Self {
        self.dep.gamma2 = 0.0;
        self.dep.sigma2 = 0.0;
        self
    }
}

/// Five clusters: three mostly healthy groups whose trajectories plateau
/// higher, and two high-risk groups with lower plateaus.
pub fn scenario_sim1() -> Scenario {
    Scenario {
        name: "sim1".into(),
        cluster_weights: vec![0.40, 0.20, 0.15, 0.15, 0.10],
        cluster_disease_rates: vec![0.0, 0.2, 0.2, 0.9, 1.0],
        cluster_trajectories: vec![
            TrajectoryParams::new(3.9, 0.15, -2.4),
            TrajectoryParams::new(6.0, 0.18, -3.2),
            TrajectoryParams::new(5.0, 0.25, 0.1),
            TrajectoryParams::new(3.7, 0.12, -2.5),
            TrajectoryParams::new(3.2, 0.08, 1.1),
        ],
        dep: DependenceParams {
            gamma2: 0.05,
            sigma2: 0.1,
            rho: 0.8,
        },
        obs_design: ObsDesign::default(),
    }
}

/// Two clusters that coincide with disease status.
pub fn scenario_sim2() -> Scenario {
    Scenario {
        name: "sim2".into(),
        cluster_weights: vec![0.75, 0.25],
        cluster_disease_rates: vec![0.0, 1.0],
        cluster_trajectories: vec![
            TrajectoryParams::new(4.7, 0.15, -2.7),
            TrajectoryParams::new(4.25, 0.105, -2.05),
        ],
        dep: DependenceParams {
            gamma2: 0.1,
            sigma2: 0.2,
            rho: 0.8,
        },
        obs_design: ObsDesign::default(),
    }
}

pub fn scenario_by_name(name: &str) -> Result<Scenario> {
    match name {
        "sim1" => Ok(scenario_sim1()),
        "sim2" => Ok(scenario_sim2()),
        _ => Err(Error::InvalidArgument(format!(
            "unknown scenario {name:?} (expected sim1 or sim2)"
        ))),
    }
}

/// Generating cluster (zero-based) and disease status of each patient.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Truth {
    pub clusters: Vec<usize>,
    pub disease: Vec<bool>,
}

fn sample_categorical<R: Rng + ?Sized>(rng: &mut R, weights: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return k;
        }
    }
    weights.len() - 1
}

/// Draws `n` labelled patients. Errors are a random intercept plus a
/// stationary Gaussian process with correlation `ρ^{|Δt|/7}`, simulated
/// exactly as a first-order autoregression over the sorted times.
pub fn generate_dataset<R: Rng + ?Sized>(
    sc: &Scenario,
    n: usize,
    rng: &mut R,
) -> Result<(Vec<Patient>, Truth)> {
    sc.validate()?;
    if n == 0 {
        return Err(Error::InvalidArgument("need at least one patient".into()));
    }
    let width = n.to_string().len();
    let mut patients = Vec::with_capacity(n);
    let mut truth = Truth {
        clusters: Vec::with_capacity(n),
        disease: Vec::with_capacity(n),
    };
    let (gamma, sigma) = (sc.dep.gamma2.sqrt(), sc.dep.sigma2.sqrt());
    for i in 0..n {
        let c = sample_categorical(rng, &sc.cluster_weights);
        let d = rng.random::<f64>() < sc.cluster_disease_rates[c];
        let times = sc.obs_design.sample_times(rng);
        let intercept = gamma * standard_normal(rng);
        let mut e = 0.0;
        let mut values = Vec::with_capacity(times.len());
        for (j, &t) in times.iter().enumerate() {
            let z = standard_normal(rng);
            e = if j == 0 {
                sigma * z
            } else {
                let r = sc.dep.rho.powf((t - times[j - 1]) / CORRELATION_LAG_DAYS);
                r * e + (1.0 - r * r).sqrt() * sigma * z
            };
            values.push(eval_trajectory(&sc.cluster_trajectories[c], t) + intercept + e);
        }
        patients.push(Patient::new(format!("p{:0width$}", i + 1), Some(d), times, values)?);
        truth.clusters.push(c);
        truth.disease.push(d);
    }
    Ok((patients, truth))
}

/// Seed of the bundled application-like data file.
pub const MIMIC_SEED: u64 = 2014;

/// Synthetic stand-in for a clinical cohort: 173 patients, 49 diseased,
/// log-scale hormone profiles on days 10-80. Five fixed groups: a large
/// low-risk group rising to about 4.7, an early low plateau, a flat low
/// profile, a slow riser and two high early outliers. Patients are shuffled.
pub fn application_mimic<R: Rng + ?Sized>(rng: &mut R) -> Result<Vec<Patient>> {
    // (size, diseased, trajectory)
    let groups = [
        (110, 7, TrajectoryParams::new(4.7, 0.15, -2.7)),
        (20, 16, TrajectoryParams::new(3.9, 0.2, -2.5)),
        (18, 17, TrajectoryParams::new(1.6, 0.02, -0.6)),
        (23, 8, TrajectoryParams::new(4.6, 0.08, -2.9)),
        (2, 1, TrajectoryParams::new(5.6, 0.3, 0.4)),
    ];
    let mut out = Vec::new();
    for (size, diseased, traj) in groups {
        let sc = Scenario {
            name: "mimic".into(),
            cluster_weights: vec![1.0],
            cluster_disease_rates: vec![0.0],
            cluster_trajectories: vec![traj],
            dep: DependenceParams {
                gamma2: 0.1,
                sigma2: 0.2,
                rho: 0.8,
            },
            obs_design: ObsDesign::default(),
        };
        let (ps, _) = generate_dataset(&sc, size, rng)?;
        out.extend(ps.into_iter().enumerate().map(|(i, mut p)| {
            p.disease = Some(i < diseased);
            p
        }));
    }
    rand::seq::SliceRandom::shuffle(out.as_mut_slice(), rng);
    for (i, p) in out.iter_mut().enumerate() {
        p.id = format!("w{:03}", i + 1);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Mean squared difference between status and probability.
    pub loss: f64,
    /// Percentage misclassified at threshold one half.
    pub pct_error: f64,
    /// NaN when only one class is present.
    pub auc: f64,
}

pub fn eval_metrics(probs: &[f64], labels: &[bool]) -> Result<Metrics> {
    if probs.len() != labels.len() || probs.is_empty() {
        return Err(Error::InvalidArgument(
            "probabilities and labels must be nonempty and aligned".into(),
        ));
    }
    let n = probs.len() as f64;
    let loss = probs
        .iter()
        .zip(labels)
        .map(|(p, &d)| (f64::from(u8::from(d)) - p).powi(2))
        .sum::<f64>()
        / n;
    let wrong = probs
        .iter()
        .zip(labels)
        .filter(|(p, &d)| classify(**p, 0.5) != d)
        .count();
    let both = labels.iter().any(|&d| d) && labels.iter().any(|&d| !d);
    let auc = if both { roc_auc(probs, labels)?.auc } else { f64::NAN };
    Ok(Metrics {
        loss,
        pct_error: 100.0 * wrong as f64 / n,
        auc,
    })
}

/// Mean over pairs `i < j` of `|I(ĉ_i = ĉ_j) - I(c_i = c_j)|`.
pub fn partition_error(est: &[usize], truth: &[usize]) -> Result<f64> {
    if est.len() != truth.len() {
        return Err(Error::InvalidArgument("partitions differ in length".into()));
    }
    let n = est.len();
    if n < 2 {
        return Ok(0.0);
    }
    let mut wrong = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            if (est[i] == est[j]) != (truth[i] == truth[j]) {
                wrong += 1;
            }
        }
    }
    Ok(wrong as f64 / (n * (n - 1) / 2) as f64)
}

/// As `partition_error` with co-clustering probabilities in place of the
/// estimated indicators.
pub fn partition_error_probs(m: &CoclusteringMatrix, truth: &[usize]) -> Result<f64> {
    let n = m.n();
    if truth.len() != n {
        return Err(Error::InvalidArgument("partitions differ in length".into()));
    }
    if n < 2 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let same = if truth[i] == truth[j] { 1.0 } else { 0.0 };
            total += (m.get(i, j) - same).abs();
        }
    }
    Ok(total / (n * (n - 1) / 2) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterSizeStats {
    pub count: usize,
    /// `exp(mean log size)`.
    pub geo_mean_size: f64,
    /// Clusters with fewer than 5 members.
    pub n_small: usize,
}

pub const SMALL_CLUSTER_MAX: usize = 4;

pub fn size_stats(sizes: &[usize]) -> ClusterSizeStats {
    let sizes: Vec<usize> = sizes.iter().copied().filter(|&s| s > 0).collect();
    let count = sizes.len();
    let geo_mean_size = if count == 0 {
        0.0
    } else {
        (sizes.iter().map(|&s| (s as f64).ln()).sum::<f64>() / count as f64).exp()
    };
    ClusterSizeStats {
        count,
        geo_mean_size,
        n_small: sizes.iter().filter(|&&s| s <= SMALL_CLUSTER_MAX).count(),
    }
}

pub fn cluster_size_stats(labels: &[usize]) -> ClusterSizeStats {
    let mut counts = std::collections::HashMap::new();
    for &l in labels {
        *counts.entry(l).or_insert(0usize) += 1;
    }
    size_stats(&counts.into_values().collect::<Vec<_>>())
}
