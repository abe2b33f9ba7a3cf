//! Agglomerative clustering on a dissimilarity matrix.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    Average,
    /// Ward's criterion applied to squared dissimilarities (Ward.D2).
    Ward,
}

impl fmt::Display for Linkage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Linkage::Average => "average",
            Linkage::Ward => "ward",
        })
    }
}

impl FromStr for Linkage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "average" => Ok(Linkage::Average),
            "ward" => Ok(Linkage::Ward),
            _ => Err(Error::InvalidArgument(format!("unknown linkage {s:?}"))),
        }
    }
}

/// One merge. Leaves are `0..n`; the cluster formed by merge `i` has id `n + i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dendrogram {
    pub n: usize,
    pub linkage: Linkage,
    pub merges: Vec<Merge>,
}

impl Dendrogram {
    /// Checks that the merge list describes a binary tree over `n` leaves.
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidData("dendrogram has no leaves".into()));
        }
        if self.merges.len() + 1 != self.n {
            return Err(Error::InvalidData(format!(
                "dendrogram over {} leaves has {} merges",
                self.n,
                self.merges.len()
            )));
        }
        let total = 2 * self.n - 1;
        let mut used = vec![false; total];
        let mut sizes = vec![1usize; total];
        for (i, m) in self.merges.iter().enumerate() {
            let id = self.n + i;
            for c in [m.left, m.right] {
                if c >= id {
                    return Err(Error::InvalidData(format!(
                        "merge {i} references cluster {c} before it exists"
                    )));
                }
                if used[c] {
                    return Err(Error::InvalidData(format!(
                        "cluster {c} is merged more than once"
                    )));
                }
                used[c] = true;
            }
            if m.left == m.right {
                return Err(Error::InvalidData(format!("merge {i} joins a cluster with itself")));
            }
            if !(m.height.is_finite() && m.height >= 0.0) {
                return Err(Error::InvalidData(format!(
                    "merge {i} has invalid height {}",
                    m.height
                )));
            }
            sizes[id] = sizes[m.left] + sizes[m.right];
            if m.size != sizes[id] {
                return Err(Error::InvalidData(format!(
                    "merge {i} has size {} but joins {} leaves",
                    m.size, sizes[id]
                )));
            }
        }
        Ok(())
    }

    pub fn heights(&self) -> Vec<f64> {
        self.merges.iter().map(|m| m.height).collect()
    }

    /// Labels after applying the first `count` merges, numbered 1.. in order
    /// of first appearance.
    pub(crate) fn labels_after(&self, count: usize) -> Vec<usize> {
        let n = self.n;
        let mut parent: Vec<usize> = (0..2 * n - 1).collect();
        for (i, m) in self.merges.iter().take(count).enumerate() {
            parent[m.left] = n + i;
            parent[m.right] = n + i;
        }
        let root = |mut x: usize| {
            while parent[x] != x {
                x = parent[x];
            }
            x
        };
        let roots: Vec<usize> = (0..n).map(root).collect();
        super::relabel(&roots)
    }
}

/// Agglomerates on the dissimilarity matrix `d` (row-major, `n × n`).
///
/// At each step the closest pair of active clusters is merged; ties go to the
/// lexicographically smallest `(id_low, id_high)` pair. Updates use the
/// Lance-Williams recurrence; for Ward it runs on squared dissimilarities
/// and heights are reported on the original scale.
pub fn agglomerate_dissimilarity(d: &[f64], n: usize, linkage: Linkage) -> Result<Dendrogram> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "agglomeration needs at least 2 items, got {n}"
        )));
    }
    if d.len() != n * n {
        return Err(Error::InvalidArgument("dissimilarity matrix has wrong size".into()));
    }
    let mut dist: Vec<f64> = match linkage {
        Linkage::Average => d.to_vec(),
        Linkage::Ward => d.iter().map(|x| x * x).collect(),
    };
    let mut active = vec![true; n];
    let mut ids: Vec<usize> = (0..n).collect();
    let mut sizes = vec![1usize; n];
    let mut merges = Vec::with_capacity(n - 1);

    for step in 0..n - 1 {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for i in 0..n {
            if !active[i] {
                continue;
            }
            for j in i + 1..n {
                if !active[j] {
                    continue;
                }
                let v = dist[i * n + j];
                let (lo, hi) = if ids[i] < ids[j] { (ids[i], ids[j]) } else { (ids[j], ids[i]) };
                let better = match best {
                    None => true,
                    Some((bv, blo, bhi, _, _)) => {
                        v < bv || (v == bv && (lo, hi) < (blo, bhi))
                    }
                };
                if better {
                    best = Some((v, lo, hi, i, j));
                }
            }
        }
        let (v, lo, hi, i, j) = best.expect("at least two active clusters");
        let (ni, nj) = (sizes[i] as f64, sizes[j] as f64);
        for k in 0..n {
            if !active[k] || k == i || k == j {
                continue;
            }
            let (dik, djk) = (dist[i * n + k], dist[j * n + k]);
            let nk = sizes[k] as f64;
            let new = match linkage {
                Linkage::Average => (ni * dik + nj * djk) / (ni + nj),
                Linkage::Ward => {
                    ((ni + nk) * dik + (nj + nk) * djk - nk * v) / (ni + nj + nk)
                }
            };
            dist[i * n + k] = new;
            dist[k * n + i] = new;
        }
        active[j] = false;
        sizes[i] += sizes[j];
        ids[i] = n + step;
        let height = match linkage {
            Linkage::Average => v,
            Linkage::Ward => v.max(0.0).sqrt(),
        };
        merges.push(Merge {
            left: lo,
            right: hi,
            height,
            size: sizes[i],
        });
    }
    Ok(Dendrogram { n, linkage, merges })
}
