//! Internal validity indices on the dissimilarity `d = 1 - M`.

use super::CoclusteringMatrix;
use crate::error::{Error, Result};

fn check_labels(m: &CoclusteringMatrix, labels: &[usize]) -> Result<usize> {
    if labels.len() != m.n() {
        return Err(Error::InvalidArgument(format!(
            "{} labels for {} patients",
            labels.len(),
            m.n()
        )));
    }
    let k = labels.iter().copied().max().unwrap_or(0) + 1;
    Ok(k)
}

/// Mean silhouette width. Patients in singleton clusters contribute 0.
pub fn silhouette_index(m: &CoclusteringMatrix, labels: &[usize]) -> Result<f64> {
    let k = check_labels(m, labels)?;
    let n = m.n();
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(Error::InvalidArgument("silhouette needs at least 2 clusters".into()));
    }
    let mut sums = vec![0.0; k];
    let mut total = 0.0;
    for i in 0..n {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            if j != i {
                sums[labels[j]] += m.distance(i, j);
            }
        }
        let own = labels[i];
        if sizes[own] == 1 {
            continue;
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / n as f64)
}

/// Concordance counts between within-cluster and between-cluster pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairComparison {
    /// Comparisons with within distance < between distance.
    pub concordant: u64,
    /// Comparisons with within distance > between distance.
    pub discordant: u64,
    pub within_pairs: u64,
    pub between_pairs: u64,
}

/// Counts concordant and discordant (within, between) pair comparisons by
/// sorting the between distances and binary searching each within distance.
pub fn pair_comparison(m: &CoclusteringMatrix, labels: &[usize]) -> Result<PairComparison> {
    check_labels(m, labels)?;
    let n = m.n();
    let mut within = Vec::new();
    let mut between = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let d = m.distance(i, j);
            if labels[i] == labels[j] {
                within.push(d);
            } else {
                between.push(d);
            }
        }
    }
    if within.is_empty() || between.is_empty() {
        return Err(Error::InvalidArgument(
            "index needs both within-cluster and between-cluster pairs".into(),
        ));
    }
    between.sort_by(f64::total_cmp);
    let nb = between.len() as u64;
    let (mut concordant, mut discordant) = (0u64, 0u64);
    for &w in &within {
        let below = between.partition_point(|&b| b < w) as u64;
        let not_above = between.partition_point(|&b| b <= w) as u64;
        concordant += nb - not_above;
        discordant += below;
    }
    Ok(PairComparison {
        concordant,
        discordant,
        within_pairs: within.len() as u64,
        between_pairs: nb,
    })
}

/// Baker-Hubert Gamma `(s+ - s-)/(s+ + s-)`; 0 when every comparison ties.
pub fn gamma_index(m: &CoclusteringMatrix, labels: &[usize]) -> Result<f64> {
    let c = pair_comparison(m, labels)?;
    let denom = (c.concordant + c.discordant) as f64;
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok((c.concordant as f64 - c.discordant as f64) / denom)
}

/// Tau with the tie count `t = C(N_w, 2) + C(N_b, 2)`, so that the adjusted
/// pair count reduces to `N_w N_b`; 0 when the denominator vanishes.
pub fn tau_index(m: &CoclusteringMatrix, labels: &[usize]) -> Result<f64> {
    let c = pair_comparison(m, labels)?;
    let nd = (c.within_pairs + c.between_pairs) as f64;
    let total = nd * (nd - 1.0) / 2.0;
    let nw = c.within_pairs as f64;
    let nb = c.between_pairs as f64;
    let t = nw * (nw - 1.0) / 2.0 + nb * (nb - 1.0) / 2.0;
    let denom = ((total - t) * total).sqrt();
    if !(denom > 0.0) {
        return Ok(0.0);
    }
    Ok((c.concordant as f64 - c.discordant as f64) / denom)
}
