//! Replicate studies and repeated-holdout cross-validation.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    cluster_size_stats, eval_metrics, generate_dataset, partition_error, partition_error_probs,
    size_stats, Scenario,
};
use crate::error::{Error, Result};
use crate::mcmc::{run_chain, run_conditional_chain, run_two_component, SamplerConfig, Truncation};
use crate::model::Patient;
use crate::partition::{
    select_with_matrix, CoclusteringMatrix, PartitionInput, PartitionMethod, SelectParams,
};
use crate::prediction::{predict_means, DrawPredictor};
use crate::rng::{child_seed, indexed_stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StudyMethod {
    Bma,
    TwoComponent,
    /// A partition estimate; prediction metrics come from a conditional refit.
    Partition(PartitionMethod),
}

impl fmt::Display for StudyMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StudyMethod::Bma => f.write_str("BMA"),
            StudyMethod::TwoComponent => f.write_str("2-component"),
            StudyMethod::Partition(m) => write!(f, "{m}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudyConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    pub sampler: SamplerConfig,
    pub two_component: bool,
    /// Partition estimates summarised per replicate.
    pub partition_methods: Vec<PartitionMethod>,
    /// Refit each partition with assignments frozen and score its predictions.
    pub refit: bool,
    pub select: SelectParams,
    /// Worker threads; `None` reads `BNPLC_THREADS`, then uses every core.
    pub threads: Option<usize>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            n_train: 200,
            n_test: 5000,
            seed: 0,
            sampler: SamplerConfig::default(),
            two_component: true,
            partition_methods: PartitionMethod::ALL.to_vec(),
            refit: false,
            select: SelectParams::default(),
            threads: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub method: String,
    pub values: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplicateFailure {
    pub replicate: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub sd: f64,
    /// Number of finite values summarised.
    pub n: usize,
}

impl MetricSummary {
    pub fn from_values(values: &[f64]) -> Self {
        let v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
        let n = v.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                sd: f64::NAN,
                n,
            };
        }
        let mean = v.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, sd, n }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub metrics: BTreeMap<String, MetricSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub label: String,
    pub seed: u64,
    pub replicates: usize,
    pub summary: Vec<MethodSummary>,
    pub records: Vec<ReplicateRecord>,
    pub failures: Vec<ReplicateFailure>,
}

/// Metric names in reporting order.
pub const METRICS: [&str; 11] = [
    "oos_loss",
    "oos_pct_error",
    "oos_auc",
    "ws_loss",
    "ws_pct_error",
    "ws_auc",
    "n_clusters",
    "geo_mean_size",
    "n_small",
    "partition_error",
    "phi_mean",
];

impl StudyReport {
    fn build(label: String, seed: u64, replicates: usize, mut records: Vec<ReplicateRecord>, failures: Vec<ReplicateFailure>) -> Self {
        records.sort_by(|a, b| a.replicate.cmp(&b.replicate));
        let mut methods: Vec<String> = Vec::new();
        for r in &records {
            if !methods.contains(&r.method) {
                methods.push(r.method.clone());
            }
        }
        let summary = methods
            .into_iter()
            .map(|method| {
                let mut values: BTreeMap<String, Vec<f64>> = BTreeMap::new();
                for r in records.iter().filter(|r| r.method == method) {
                    for (k, v) in &r.values {
                        values.entry(k.clone()).or_default().push(*v);
                    }
                }
                MethodSummary {
                    method,
                    metrics: values
                        .into_iter()
                        .map(|(k, v)| (k, MetricSummary::from_values(&v)))
                        .collect(),
                }
            })
            .collect();
        Self {
            label,
            seed,
            replicates,
            summary,
            records,
            failures,
        }
    }

    pub fn metric(&self, method: &str, metric: &str) -> Option<MetricSummary> {
        self.summary
            .iter()
            .find(|s| s.method == method)
            .and_then(|s| s.metrics.get(metric).copied())
    }

    /// Per-replicate values of one metric, in replicate order.
    pub fn values(&self, method: &str, metric: &str) -> Vec<(usize, f64)> {
        self.records
            .iter()
            .filter(|r| r.method == method)
            .filter_map(|r| r.values.get(metric).map(|v| (r.replicate, *v)))
            .collect()
    }
}

/// Worker count: explicit value, else `BNPLC_THREADS`, else every core.
pub fn thread_count(threads: Option<usize>) -> usize {
    threads
        .or_else(|| std::env::var("BNPLC_THREADS").ok().and_then(|s| s.trim().parse().ok()))
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn with_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(thread_count(threads))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

fn prediction_values<P: DrawPredictor>(
    draws: &[P],
    train: &[Patient],
    test: &[Patient],
    values: &mut BTreeMap<String, f64>,
) -> Result<()> {
    let labels = |ps: &[Patient]| -> Vec<bool> { ps.iter().map(|p| p.disease == Some(true)).collect() };
    for (prefix, ps) in [("ws", train), ("oos", test)] {
        if ps.is_empty() {
            continue;
        }
        let probs = predict_means(draws, ps)?;
        let m = eval_metrics(&probs, &labels(ps))?;
        values.insert(format!("{prefix}_loss"), m.loss);
        values.insert(format!("{prefix}_pct_error"), m.pct_error);
        values.insert(format!("{prefix}_auc"), m.auc);
    }
    Ok(())
}

/// Fits every requested method to `train` and scores it on `train` and
/// `test`. `truth` (generating clusters) enables partition diagnostics.
fn evaluate_methods(
    train: &[Patient],
    test: &[Patient],
    truth: Option<&[usize]>,
    sampler: &SamplerConfig,
    two_component: bool,
    partition_methods: &[PartitionMethod],
    refit: bool,
    select: &SelectParams,
    replicate: usize,
) -> Result<Vec<ReplicateRecord>> {
    let mut out = Vec::new();
    let record = |method: StudyMethod, values: BTreeMap<String, f64>| ReplicateRecord {
        replicate,
        method: method.to_string(),
        values,
    };

    let trace = run_chain(train, sampler)?;
    let m = CoclusteringMatrix::from_assignments(
        &trace.draws.iter().map(|d| d.state.assignments.as_slice()).collect::<Vec<_>>(),
    )?;
    let mut values = BTreeMap::new();
    prediction_values(&trace.draws, train, test, &mut values)?;
    values.insert("n_clusters".into(), trace.mean_nonempty());
    let per_draw: Vec<_> = trace
        .draws
        .iter()
        .map(|d| size_stats(&d.state.cluster_counts()))
        .collect();
    let nd = per_draw.len().max(1) as f64;
    values.insert("geo_mean_size".into(), per_draw.iter().map(|s| s.geo_mean_size).sum::<f64>() / nd);
    values.insert("n_small".into(), per_draw.iter().map(|s| s.n_small as f64).sum::<f64>() / nd);
    if let Some(t) = truth {
        values.insert("partition_error".into(), partition_error_probs(&m, t)?);
    }
    out.push(record(StudyMethod::Bma, values));

    let input = PartitionInput::from_trace(&trace);
    for &pm in partition_methods {
        let est = select_with_matrix(&input, &m, pm, select)?;
        let mut values = BTreeMap::new();
        let s = cluster_size_stats(&est.labels);
        values.insert("n_clusters".into(), s.count as f64);
        values.insert("geo_mean_size".into(), s.geo_mean_size);
        values.insert("n_small".into(), s.n_small as f64);
        if let Some(t) = truth {
            values.insert("partition_error".into(), partition_error(&est.labels, t)?);
        }
        if refit {
            let cfg = SamplerConfig {
                truncation: Truncation::Auto,
                ..sampler.clone()
            };
            let cond = run_conditional_chain(train, &est, &cfg)?;
            prediction_values(&cond.draws, train, test, &mut values)?;
        }
        out.push(record(StudyMethod::Partition(pm), values));
    }

    if two_component {
        let tc = run_two_component(train, sampler)?;
        let mut values = BTreeMap::new();
        prediction_values(&tc.draws, train, test, &mut values)?;
        let groups: Vec<usize> = train.iter().map(|p| usize::from(p.disease == Some(true))).collect();
        let s = cluster_size_stats(&groups);
        values.insert("n_clusters".into(), s.count as f64);
        values.insert("geo_mean_size".into(), s.geo_mean_size);
        values.insert("n_small".into(), s.n_small as f64);
        if let Some(t) = truth {
            values.insert("partition_error".into(), partition_error(&groups, t)?);
        }
        let nd = tc.draws.len().max(1) as f64;
        values.insert("phi_mean".into(), tc.draws.iter().map(|d| d.state.phi).sum::<f64>() / nd);
        out.push(record(StudyMethod::TwoComponent, values));
    }
    Ok(out)
}

/// Simulates `n_replicates` training and test sets from `sc` and compares
/// the methods. Failed replicates are recorded and skipped.
pub fn run_study(sc: &Scenario, n_replicates: usize, config: &StudyConfig) -> Result<StudyReport> {
    sc.validate()?;
    config.sampler.validate()?;
    if config.n_train == 0 {
        return Err(Error::InvalidArgument("training size must be positive".into()));
    }
    let results: Vec<(usize, Result<Vec<ReplicateRecord>>)> = with_pool(config.threads, || {
        (0..n_replicates)
            .into_par_iter()
            .map(|r| {
                let res = (|| {
                    let (train, truth) = generate_dataset(
                        sc,
                        config.n_train,
                        &mut indexed_stream(config.seed, "study-train", r as u64),
                    )?;
                    let test = if config.n_test > 0 {
                        generate_dataset(
                            sc,
                            config.n_test,
                            &mut indexed_stream(config.seed, "study-test", r as u64),
                        )?
                        .0
                    } else {
                        Vec::new()
                    };
                    let sampler = SamplerConfig {
                        seed: child_seed(config.seed, "study-chain", r as u64),
                        ..config.sampler.clone()
                    };
                    log::info!("{}: replicate {r}", sc.name);
                    evaluate_methods(
                        &train,
                        &test,
                        Some(&truth.clusters),
                        &sampler,
                        config.two_component,
                        &config.partition_methods,
                        config.refit,
                        &config.select,
                        r,
                    )
                })();
                (r, res)
            })
            .collect()
    })?;
    Ok(collect_report(sc.name.clone(), config.seed, n_replicates, results))
}

fn collect_report(
    label: String,
    seed: u64,
    replicates: usize,
    results: Vec<(usize, Result<Vec<ReplicateRecord>>)>,
) -> StudyReport {
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (r, res) in results {
        match res {
            Ok(recs) => records.extend(recs),
            Err(e) => {
                log::warn!("replicate {r} failed: {e}");
                failures.push(ReplicateFailure {
                    replicate: r,
                    message: e.to_string(),
                });
            }
        }
    }
    StudyReport::build(label, seed, replicates, records, failures)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CvConfig {
    /// Number of random holdouts.
    pub folds: usize,
    pub holdout_fraction: f64,
    pub seed: u64,
    pub sampler: SamplerConfig,
    pub two_component: bool,
    /// Partition methods refitted and scored on each holdout.
    pub refit_methods: Vec<PartitionMethod>,
    pub select: SelectParams,
    pub threads: Option<usize>,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            folds: 25,
            holdout_fraction: 0.2,
            seed: 0,
            sampler: SamplerConfig::default(),
            two_component: false,
            refit_methods: Vec::new(),
            select: SelectParams::default(),
            threads: None,
        }
    }
}

/// `round(fraction · n)`, kept within `[1, n - 1]`.
pub fn holdout_size(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64).round() as usize).clamp(1, n.saturating_sub(1).max(1))
}

const MAX_REDRAWS: usize = 100;

/// Training/holdout index split for one fold; training sets lacking either
/// class are redrawn.
pub fn holdout_split(data: &[Patient], fold: usize, config: &CvConfig) -> Result<(Vec<usize>, Vec<usize>)> {
    let n = data.len();
    let k = holdout_size(n, config.holdout_fraction);
    let mut rng = indexed_stream(config.seed, "cv-fold", fold as u64);
    let mut idx: Vec<usize> = (0..n).collect();
    for _ in 0..MAX_REDRAWS {
        idx.shuffle(&mut rng);
        let (test, train) = idx.split_at(k);
        let pos = train.iter().filter(|&&i| data[i].disease == Some(true)).count();
        if pos > 0 && pos < train.len() {
            let mut train = train.to_vec();
            let mut test = test.to_vec();
            train.sort_unstable();
            test.sort_unstable();
            return Ok((train, test));
        }
    }
    Err(Error::InvalidData(format!(
        "fold {fold}: no training set with both classes after {MAX_REDRAWS} draws"
    )))
}

/// Repeated random holdout: each fold fits on the training part and scores
/// the held-out patients.
pub fn cross_validate(data: &[Patient], config: &CvConfig) -> Result<StudyReport> {
    config.sampler.validate()?;
    if data.len() < 2 {
        return Err(Error::InvalidData("cross-validation needs at least 2 patients".into()));
    }
    if data.iter().any(|p| p.disease.is_none()) {
        return Err(Error::InvalidData("cross-validation needs labelled data".into()));
    }
    if !(config.holdout_fraction > 0.0 && config.holdout_fraction < 1.0) {
        return Err(Error::InvalidArgument("holdout fraction must lie in (0, 1)".into()));
    }
    let results = with_pool(config.threads, || {
        (0..config.folds)
            .into_par_iter()
            .map(|f| {
                let res = (|| {
                    let (tr, te) = holdout_split(data, f, config)?;
                    let train: Vec<Patient> = tr.iter().map(|&i| data[i].clone()).collect();
                    let test: Vec<Patient> = te.iter().map(|&i| data[i].clone()).collect();
                    let sampler = SamplerConfig {
                        seed: child_seed(config.seed, "cv-chain", f as u64),
                        ..config.sampler.clone()
                    };
                    log::info!("cv fold {f}: {} train, {} held out", train.len(), test.len());
                    evaluate_methods(
                        &train,
                        &test,
                        None,
                        &sampler,
                        config.two_component,
                        &config.refit_methods,
                        !config.refit_methods.is_empty(),
                        &config.select,
                        f,
                    )
                })();
                (f, res)
            })
            .collect()
    })?;
    Ok(collect_report("cv".into(), config.seed, config.folds, results))
}
