//! Point estimates of the clustering from a label-switching posterior sample.

mod indices;
mod linkage;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use indices::{gamma_index, pair_comparison, silhouette_index, tau_index, PairComparison};
pub use linkage::{agglomerate_dissimilarity, Dendrogram, Linkage, Merge};

use crate::error::{Error, Result};
use crate::mcmc::PosteriorTrace;

/// Posterior co-clustering probabilities, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoclusteringMatrix {
    n: usize,
    probs: Vec<f64>,
}

impl CoclusteringMatrix {
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut probs = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                probs[i * n + j] = f(i, j);
            }
        }
        Self { n, probs }
    }

    /// Fraction of the assignment vectors in which each pair shares a label.
    pub fn from_assignments<A: AsRef<[usize]>>(draws: &[A]) -> Result<Self> {
        let Some(first) = draws.first() else {
            return Err(Error::InvalidArgument("no draws to summarise".into()));
        };
        let n = first.as_ref().len();
        let mut counts = vec![0u32; n * n];
        for d in draws {
            let d = d.as_ref();
            if d.len() != n {
                return Err(Error::InvalidArgument("draws cover different patients".into()));
            }
            for i in 0..n {
                let row = &mut counts[i * n..(i + 1) * n];
                for j in i + 1..n {
                    if d[i] == d[j] {
                        row[j] += 1;
                    }
                }
            }
        }
        let total = draws.len() as f64;
        let mut probs = vec![0.0; n * n];
        for i in 0..n {
            probs[i * n + i] = 1.0;
            for j in i + 1..n {
                let p = counts[i * n + j] as f64 / total;
                probs[i * n + j] = p;
                probs[j * n + i] = p;
            }
        }
        Ok(Self { n, probs })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.probs[i * self.n + j]
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        1.0 - self.get(i, j)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    pub fn distances(&self) -> Vec<f64> {
        self.probs.iter().map(|p| 1.0 - p).collect()
    }
}

pub fn coclustering(trace: &PosteriorTrace) -> Result<CoclusteringMatrix> {
    let draws: Vec<&[usize]> = trace.draws.iter().map(|d| d.state.assignments.as_slice()).collect();
    CoclusteringMatrix::from_assignments(&draws)
}

/// Squared loss `Σ_i Σ_j (I(c_i = c_j) - M_ij)²` over all ordered pairs.
pub fn dahl_loss(assignments: &[usize], m: &CoclusteringMatrix) -> f64 {
    let n = m.n();
    let mut loss = 0.0;
    for i in 0..n {
        for j in 0..n {
            let same = if assignments[i] == assignments[j] { 1.0 } else { 0.0 };
            loss += (same - m.get(i, j)).powi(2);
        }
    }
    loss
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PartitionMethod {
    #[serde(rename = "dahl")]
    Dahl,
    #[serde(rename = "avg-h")]
    AvgHeight,
    #[serde(rename = "avg-K")]
    AvgK,
    #[serde(rename = "avg-silhouette")]
    AvgSilhouette,
    #[serde(rename = "avg-gamma")]
    AvgGamma,
    #[serde(rename = "avg-tau")]
    AvgTau,
    #[serde(rename = "ward-K")]
    WardK,
    #[serde(rename = "ward-silhouette")]
    WardSilhouette,
    #[serde(rename = "ward-gamma")]
    WardGamma,
    #[serde(rename = "ward-tau")]
    WardTau,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Criterion {
    Silhouette,
    Gamma,
    Tau,
}

impl PartitionMethod {
    pub const ALL: [PartitionMethod; 10] = [
        PartitionMethod::Dahl,
        PartitionMethod::AvgHeight,
        PartitionMethod::AvgK,
        PartitionMethod::AvgSilhouette,
        PartitionMethod::AvgGamma,
        PartitionMethod::AvgTau,
        PartitionMethod::WardK,
        PartitionMethod::WardSilhouette,
        PartitionMethod::WardGamma,
        PartitionMethod::WardTau,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            PartitionMethod::Dahl => "dahl",
            PartitionMethod::AvgHeight => "avg-h",
            PartitionMethod::AvgK => "avg-K",
            PartitionMethod::AvgSilhouette => "avg-silhouette",
            PartitionMethod::AvgGamma => "avg-gamma",
            PartitionMethod::AvgTau => "avg-tau",
            PartitionMethod::WardK => "ward-K",
            PartitionMethod::WardSilhouette => "ward-silhouette",
            PartitionMethod::WardGamma => "ward-gamma",
            PartitionMethod::WardTau => "ward-tau",
        }
    }

    pub fn linkage(self) -> Option<Linkage> {
        use PartitionMethod::*;
        match self {
            Dahl => None,
            AvgHeight | AvgK | AvgSilhouette | AvgGamma | AvgTau => Some(Linkage::Average),
            WardK | WardSilhouette | WardGamma | WardTau => Some(Linkage::Ward),
        }
    }

    fn criterion(self) -> Option<Criterion> {
        use PartitionMethod::*;
        match self {
            AvgSilhouette | WardSilhouette => Some(Criterion::Silhouette),
            AvgGamma | WardGamma => Some(Criterion::Gamma),
            AvgTau | WardTau => Some(Criterion::Tau),
            _ => None,
        }
    }
}

impl fmt::Display for PartitionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for PartitionMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        PartitionMethod::ALL
            .into_iter()
            .find(|m| m.tag().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown partition method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionEstimate {
    /// Cluster labels `1..=k`, numbered by first appearance.
    pub labels: Vec<usize>,
    pub method: PartitionMethod,
    /// Criterion value for each candidate number of clusters.
    pub index_values: BTreeMap<usize, f64>,
}

impl PartitionEstimate {
    pub fn new(labels: Vec<usize>, method: PartitionMethod) -> Self {
        Self {
            labels: relabel(&labels),
            method,
            index_values: BTreeMap::new(),
        }
    }

    pub fn n_clusters(&self) -> usize {
        self.labels.iter().copied().max().unwrap_or(0)
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.n_clusters()];
        for &l in &self.labels {
            s[l - 1] += 1;
        }
        s
    }
}

/// Maps arbitrary labels to `1..=k` in order of first appearance.
pub fn relabel(labels: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len() + 1;
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

/// Assignment vector of the draw minimising the Dahl loss; ties go to the
/// earliest draw.
pub fn dahl_partition(trace: &PosteriorTrace, m: &CoclusteringMatrix) -> Result<PartitionEstimate> {
    let draws: Vec<&[usize]> = trace.draws.iter().map(|d| d.state.assignments.as_slice()).collect();
    dahl_from_assignments(&draws, m)
}

pub fn dahl_from_assignments<A: AsRef<[usize]>>(
    draws: &[A],
    m: &CoclusteringMatrix,
) -> Result<PartitionEstimate> {
    // Losses equal in exact arithmetic can differ in the last bits, so a
    // later draw must win by more than rounding noise.
    let tol = 1e-12 * (m.n() * m.n()).max(1) as f64;
    let mut best: Option<(f64, usize)> = None;
    for (k, d) in draws.iter().enumerate() {
        let loss = dahl_loss(d.as_ref(), m);
        if best.is_none_or(|(b, _)| loss < b - tol) {
            best = Some((loss, k));
        }
    }
    let (_, k) = best.ok_or_else(|| Error::InvalidArgument("no draws to choose from".into()))?;
    Ok(PartitionEstimate::new(draws[k].as_ref().to_vec(), PartitionMethod::Dahl))
}

pub fn agglomerate(m: &CoclusteringMatrix, linkage: Linkage) -> Result<Dendrogram> {
    agglomerate_dissimilarity(&m.distances(), m.n(), linkage)
}

/// Components after removing every merge above `h`. Average linkage only.
pub fn cut_height(dendro: &Dendrogram, h: f64) -> Result<PartitionEstimate> {
    if dendro.linkage != Linkage::Average {
        return Err(Error::InvalidArgument(
            "height cuts are only defined for average linkage".into(),
        ));
    }
    if h.is_nan() {
        return Err(Error::InvalidArgument("cut height is NaN".into()));
    }
    let count = dendro.merges.iter().take_while(|m| m.height <= h).count();
    Ok(PartitionEstimate::new(
        dendro.labels_after(count),
        PartitionMethod::AvgHeight,
    ))
}

/// Partition with exactly `k` clusters.
pub fn cut_k(dendro: &Dendrogram, k: usize) -> Result<PartitionEstimate> {
    if k == 0 || k > dendro.n {
        return Err(Error::InvalidArgument(format!(
            "cannot cut {} leaves into {k} clusters",
            dendro.n
        )));
    }
    let method = match dendro.linkage {
        Linkage::Average => PartitionMethod::AvgK,
        Linkage::Ward => PartitionMethod::WardK,
    };
    Ok(PartitionEstimate::new(dendro.labels_after(dendro.n - k), method))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectParams {
    /// Cut height for `avg-h`.
    pub height: f64,
    /// Largest candidate cluster count; defaults to `min(N - 1, 15)`.
    pub k_max: Option<usize>,
    /// Cluster count for `avg-K`/`ward-K`; defaults to the trace's posterior
    /// median number of non-empty clusters.
    pub k: Option<usize>,
}

impl Default for SelectParams {
    fn default() -> Self {
        Self {
            height: 0.75,
            k_max: None,
            k: None,
        }
    }
}

/// Everything `select_partition` needs from a trace.
#[derive(Debug, Clone)]
pub struct PartitionInput<'a> {
    pub draws: Vec<&'a [usize]>,
    pub median_nonempty: usize,
}

impl<'a> PartitionInput<'a> {
    pub fn from_trace(trace: &'a PosteriorTrace) -> Self {
        Self {
            draws: trace.draws.iter().map(|d| d.state.assignments.as_slice()).collect(),
            median_nonempty: trace.median_nonempty(),
        }
    }
}

pub fn select_partition(
    trace: &PosteriorTrace,
    method: PartitionMethod,
    params: &SelectParams,
) -> Result<PartitionEstimate> {
    let input = PartitionInput::from_trace(trace);
    let m = CoclusteringMatrix::from_assignments(&input.draws)?;
    select_with_matrix(&input, &m, method, params)
}

/// As `select_partition`, reusing a precomputed co-clustering matrix.
pub fn select_with_matrix(
    input: &PartitionInput<'_>,
    m: &CoclusteringMatrix,
    method: PartitionMethod,
    params: &SelectParams,
) -> Result<PartitionEstimate> {
    let Some(linkage) = method.linkage() else {
        return dahl_from_assignments(&input.draws, m);
    };
    let n = m.n();
    if n == 1 {
        return Ok(PartitionEstimate::new(vec![1], method));
    }
    let dendro = agglomerate(m, linkage)?;
    let mut est = match method.criterion() {
        None if method == PartitionMethod::AvgHeight => cut_height(&dendro, params.height)?,
        None => cut_k(&dendro, params.k.unwrap_or(input.median_nonempty).clamp(1, n))?,
        Some(criterion) => {
            let k_max = params.k_max.unwrap_or(15).min(n - 1);
            if k_max < 2 {
                return Err(Error::InvalidArgument(format!(
                    "no candidate cluster counts for {n} patients"
                )));
            }
            let mut index_values = BTreeMap::new();
            let mut best: Option<(f64, PartitionEstimate)> = None;
            for k in 2..=k_max {
                let cand = cut_k(&dendro, k)?;
                let v = match criterion {
                    Criterion::Silhouette => silhouette_index(m, &cand.labels)?,
                    Criterion::Gamma => gamma_index(m, &cand.labels)?,
                    Criterion::Tau => tau_index(m, &cand.labels)?,
                };
                index_values.insert(k, v);
                if best.as_ref().is_none_or(|(b, _)| v > *b) {
                    best = Some((v, cand));
                }
            }
            let (_, mut est) = best.expect("at least one candidate");
            est.index_values = index_values;
            est
        }
    };
    est.method = method;
    Ok(est)
}
