//! Fixtures and the checks shared by the oracle, sampler, invariant and
//! acceptance targets. Every check returns `Err` with a description of the
//! first discrepancy.
#![allow(dead_code)]

use bnplc::dist::{mean_var, sample_beta, sample_gamma, sample_inv_wishart3, sample_mvn3, standard_normal};
use bnplc::linalg::Cholesky;
use bnplc::mcmc::{
    run_chain, run_two_component, theta_star_conditional, InvGammaPrior, PriorSpec, Sampler,
    SamplerConfig, StepMask, Truncation,
};
use bnplc::model::{
    patient_loglik, stick_breaking_weights, BaseMeasureHyper, ClusterParams, DependenceParams,
    ModelState, Patient, TrajectoryParams,
};
use bnplc::partition::{
    agglomerate_dissimilarity, dahl_from_assignments, gamma_index, pair_comparison, relabel,
    silhouette_index, tau_index, CoclusteringMatrix, Linkage,
};
use bnplc::prediction::{bma_predict, predict_draw, roc_auc};
use bnplc::rng::{indexed_stream, stream, SimRng};
use bnplc::simulation::{generate_dataset, scenario_sim2};
use nalgebra::{Matrix3, Vector3};
use rand::seq::SliceRandom;
use rand::Rng;

pub type Check = Result<(), String>;

pub fn rng(name: &str) -> SimRng {
    stream(20_241_016, name)
}

// ---------------------------------------------------------------- fixtures

pub fn default_base() -> BaseMeasureHyper {
    BaseMeasureHyper {
        theta_star: [1.0; 3],
        sigma: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        a: 0.5,
        b: 0.5,
    }
}

pub fn make_state(
    assignments: Vec<usize>,
    sticks: Vec<f64>,
    clusters: Vec<ClusterParams>,
    dep: DependenceParams,
    alpha: f64,
) -> ModelState {
    let weights = stick_breaking_weights(&sticks);
    ModelState {
        assignments,
        sticks,
        weights,
        clusters,
        dep,
        alpha,
        base: default_base(),
    }
}

pub fn random_traj<R: Rng>(rng: &mut R) -> TrajectoryParams {
    TrajectoryParams::new(
        rng.random_range(2.0..6.0),
        rng.random_range(0.02..0.3),
        rng.random_range(-3.0..1.0),
    )
}

pub fn random_dep<R: Rng>(rng: &mut R) -> DependenceParams {
    DependenceParams::new(
        rng.random_range(0.01..0.3),
        rng.random_range(0.01..0.3),
        rng.random_range(0.05..0.95),
    )
    .unwrap()
}

pub fn random_state<R: Rng>(rng: &mut R, n: usize, h: usize) -> ModelState {
    let mut sticks: Vec<f64> = (0..h).map(|_| rng.random_range(0.05..0.95)).collect();
    sticks[h - 1] = 1.0;
    let clusters = (0..h)
        .map(|_| ClusterParams {
            phi: rng.random(),
            traj: random_traj(rng),
        })
        .collect();
    let assignments = (0..n).map(|_| rng.random_range(0..h)).collect();
    make_state(assignments, sticks, clusters, random_dep(rng), rng.random_range(0.2..3.0))
}

/// Sorted distinct times on days 10-80 (possibly none) with values near the
/// range of the simulated curves.
pub fn random_profile<R: Rng>(rng: &mut R, max_obs: usize) -> (Vec<f64>, Vec<f64>) {
    let n = rng.random_range(0..=max_obs);
    let mut times: Vec<f64> = Vec::new();
    while times.len() < n {
        let t = rng.random_range(10.0..80.0);
        if !times.contains(&t) {
            times.push(t);
        }
    }
    times.sort_by(f64::total_cmp);
    let values = times.iter().map(|_| rng.random_range(0.0..6.0)).collect();
    (times, values)
}

/// Sticks reproducing `weights` under stick breaking.
pub fn sticks_from_weights(weights: &[f64]) -> Vec<f64> {
    let h = weights.len();
    let mut rem = 1.0;
    let mut sticks = Vec::with_capacity(h);
    for (k, &w) in weights.iter().enumerate() {
        if k + 1 == h {
            sticks.push(1.0);
        } else {
            sticks.push((w / rem).min(1.0));
            rem -= w;
        }
    }
    sticks
}

/// Moves cluster `k` to position `perm[k]`, carrying its weight along.
pub fn permute_state(s: &ModelState, perm: &[usize]) -> ModelState {
    let h = s.truncation();
    let mut clusters = s.clusters.clone();
    let mut weights = vec![0.0; h];
    for k in 0..h {
        clusters[perm[k]] = s.clusters[k];
        weights[perm[k]] = s.weights[k];
    }
    ModelState {
        assignments: s.assignments.iter().map(|&c| perm[c]).collect(),
        sticks: sticks_from_weights(&weights),
        weights,
        clusters,
        dep: s.dep,
        alpha: s.alpha,
        base: s.base.clone(),
    }
}

pub fn random_perm<R: Rng>(rng: &mut R, h: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..h).collect();
    p.shuffle(rng);
    p
}

pub fn small_sim2(n: usize, seed: u64) -> Vec<Patient> {
    generate_dataset(&scenario_sim2(), n, &mut stream(seed, "fixture")).unwrap().0
}

pub fn quick_config(seed: u64) -> SamplerConfig {
    SamplerConfig {
        iterations: 300,
        burn_in: 150,
        thin: 3,
        truncation: Truncation::Fixed(8),
        seed,
        ..SamplerConfig::default()
    }
}

// ---------------------------------------------------------------- numerics

/// Inverse and log-determinant by Gauss-Jordan elimination with partial
/// pivoting.
pub fn dense_inverse_logdet(a: &[Vec<f64>]) -> (Vec<Vec<f64>>, f64) {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    let mut logdet = 0.0;
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| m[x][col].abs().total_cmp(&m[y][col].abs()))
            .unwrap();
        m.swap(col, piv);
        let p = m[col][col];
        logdet += p.abs().ln();
        for v in m[col].iter_mut() {
            *v /= p;
        }
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                if f != 0.0 {
                    for c in 0..2 * n {
                        m[r][c] -= f * m[col][c];
                    }
                }
            }
        }
    }
    (m.into_iter().map(|r| r[n..].to_vec()).collect(), logdet)
}

/// Dense MVN log density with the covariance written out elementwise.
pub fn dense_mvn_loglik(times: &[f64], values: &[f64], traj: &TrajectoryParams, dep: &DependenceParams) -> f64 {
    let n = times.len();
    let cov: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            (0..n)
                .map(|k| dep.sigma2 * dep.rho.powf((times[j] - times[k]).abs() / 7.0) + dep.gamma2)
                .collect()
        })
        .collect();
    let (inv, logdet) = dense_inverse_logdet(&cov);
    let r: Vec<f64> = times
        .iter()
        .zip(values)
        .map(|(&t, &y)| y - traj.asymptote() / (1.0 + (-traj.rate() * t - traj.offset()).exp()))
        .collect();
    let mut q = 0.0;
    for j in 0..n {
        for k in 0..n {
            q += r[j] * inv[j][k] * r[k];
        }
    }
    -0.5 * (n as f64 * (2.0 * std::f64::consts::PI).ln() + logdet + q)
}

/// z-score of a sample mean against `expected`, using the iid standard error.
pub fn z_iid(xs: &[f64], expected: f64) -> f64 {
    let (m, v) = mean_var(xs);
    let se = (v / xs.len() as f64).sqrt();
    if se == 0.0 {
        return if m == expected { 0.0 } else { f64::INFINITY };
    }
    (m - expected) / se
}

/// z-score of the mean of a correlated series, standard error from batch
/// means.
pub fn z_batch(xs: &[f64], expected: f64, batches: usize) -> f64 {
    let len = xs.len() / batches;
    let means: Vec<f64> = xs
        .chunks_exact(len)
        .take(batches)
        .map(|c| c.iter().sum::<f64>() / len as f64)
        .collect();
    let (_, v) = mean_var(&means);
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    (m - expected) / (v / batches as f64).sqrt()
}

/// Checks first and second moments of iid draws at 3 standard errors.
pub fn check_two_moments(name: &str, xs: &[f64], mean: f64, second: f64) -> Check {
    let z1 = z_iid(xs, mean);
    let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
    let z2 = z_iid(&sq, second);
    if z1.abs() < 3.0 && z2.abs() < 3.0 {
        Ok(())
    } else {
        Err(format!("{name}: z(mean) = {z1:.2}, z(second moment) = {z2:.2}"))
    }
}

pub fn beta_moments(a: f64, b: f64) -> (f64, f64) {
    let m = a / (a + b);
    (m, m * (a + 1.0) / (a + b + 1.0))
}

pub fn gamma_moments(shape: f64, rate: f64) -> (f64, f64) {
    (shape / rate, shape * (shape + 1.0) / (rate * rate))
}

fn collect(results: Vec<Check>) -> Check {
    let errs: Vec<String> = results.into_iter().filter_map(Result::err).collect();
    if errs.is_empty() {
        Ok(())
    } else {
        Err(errs.join("; "))
    }
}

// ---------------------------------------------------------------- oracles

/// Dahl's estimate against an exhaustive scan of the candidate draws with the
/// loss computed in integers (`T² × loss`).
pub fn check_dahl_bruteforce(instances: usize) -> Check {
    let mut rng = rng("dahl");
    for inst in 0..instances {
        let n = rng.random_range(1..=6);
        let t = rng.random_range(1..=8);
        let alphabet = rng.random_range(1..=4);
        let draws: Vec<Vec<usize>> = (0..t)
            .map(|_| (0..n).map(|_| rng.random_range(0..alphabet)).collect())
            .collect();
        let m = CoclusteringMatrix::from_assignments(&draws).map_err(|e| e.to_string())?;
        let mut count = vec![0i64; n * n];
        for d in &draws {
            for i in 0..n {
                for j in 0..n {
                    count[i * n + j] += i64::from(d[i] == d[j]);
                }
            }
        }
        let mut best: Option<(i64, usize)> = None;
        for (k, d) in draws.iter().enumerate() {
            let mut loss = 0i64;
            for i in 0..n {
                for j in 0..n {
                    let e = t as i64 * i64::from(d[i] == d[j]) - count[i * n + j];
                    loss += e * e;
                }
            }
            if best.is_none_or(|(b, _)| loss < b) {
                best = Some((loss, k));
            }
        }
        let expected = relabel(&draws[best.unwrap().1]);
        let got = dahl_from_assignments(&draws, &m).map_err(|e| e.to_string())?;
        if got.labels != expected {
            return Err(format!("dahl instance {inst}: got {:?}, brute force {:?}", got.labels, expected));
        }
    }
    Ok(())
}

fn naive_silhouette(d: &dyn Fn(usize, usize) -> f64, labels: &[usize]) -> f64 {
    let n = labels.len();
    let k = labels.iter().max().unwrap() + 1;
    let mut total = 0.0;
    for i in 0..n {
        let own: Vec<usize> = (0..n).filter(|&j| j != i && labels[j] == labels[i]).collect();
        if own.is_empty() {
            continue;
        }
        let a = own.iter().map(|&j| d(i, j)).sum::<f64>() / own.len() as f64;
        let mut b = f64::INFINITY;
        for c in 0..k {
            if c == labels[i] {
                continue;
            }
            let other: Vec<usize> = (0..n).filter(|&j| labels[j] == c).collect();
            if !other.is_empty() {
                b = b.min(other.iter().map(|&j| d(i, j)).sum::<f64>() / other.len() as f64);
            }
        }
        let mx = a.max(b);
        if mx > 0.0 {
            total += (b - a) / mx;
        }
    }
    total / n as f64
}

/// `(s+, s-, ties)` over every unordered pair of distinct patient pairs;
/// a tie is a comparison between two pairs of the same kind.
fn naive_pair_counts(d: &dyn Fn(usize, usize) -> f64, labels: &[usize]) -> (u64, u64, u64, u64) {
    let n = labels.len();
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            pairs.push((d(i, j), labels[i] == labels[j]));
        }
    }
    let (mut plus, mut minus, mut ties) = (0u64, 0u64, 0u64);
    for p in 0..pairs.len() {
        for q in p + 1..pairs.len() {
            let (dp, wp) = pairs[p];
            let (dq, wq) = pairs[q];
            if wp == wq {
                ties += 1;
                continue;
            }
            let (w, b) = if wp { (dp, dq) } else { (dq, dp) };
            if w < b {
                plus += 1;
            } else if w > b {
                minus += 1;
            }
        }
    }
    (plus, minus, ties, pairs.len() as u64)
}

fn random_labels<R: Rng>(rng: &mut R, n: usize) -> Vec<usize> {
    loop {
        let k = rng.random_range(2..=n.min(5));
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let mut sizes = vec![0; k];
        for &l in &labels {
            sizes[l] += 1;
        }
        if sizes.iter().filter(|&&s| s > 0).count() >= 2 && sizes.iter().any(|&s| s >= 2) {
            return labels;
        }
    }
}

/// One of three kinds of co-clustering matrix: continuous entries, entries
/// on a coarse grid (many ties), or an actual matrix from random draws.
pub fn random_matrix<R: Rng>(rng: &mut R, n: usize) -> CoclusteringMatrix {
    match rng.random_range(0..3) {
        0 => {
            let v: Vec<f64> = (0..n * n).map(|_| rng.random()).collect();
            CoclusteringMatrix::from_fn(n, |i, j| if i == j { 1.0 } else { v[i.min(j) * n + i.max(j)] })
        }
        1 => {
            let v: Vec<f64> = (0..n * n).map(|_| f64::from(rng.random_range(0..5u8)) / 4.0).collect();
            CoclusteringMatrix::from_fn(n, |i, j| if i == j { 1.0 } else { v[i.min(j) * n + i.max(j)] })
        }
        _ => {
            let t = rng.random_range(1..30);
            let draws: Vec<Vec<usize>> =
                (0..t).map(|_| (0..n).map(|_| rng.random_range(0..3)).collect()).collect();
            CoclusteringMatrix::from_assignments(&draws).unwrap()
        }
    }
}

/// Silhouette, Gamma and Tau against direct O(N⁴) evaluations.
pub fn check_indices_naive(instances: usize) -> Check {
    let mut rng = rng("indices");
    for inst in 0..instances {
        let n = rng.random_range(3..=10);
        let m = random_matrix(&mut rng, n);
        let labels = random_labels(&mut rng, n);
        let d = |i: usize, j: usize| m.distance(i, j);
        let s = silhouette_index(&m, &labels).map_err(|e| e.to_string())?;
        let s_ref = naive_silhouette(&d, &labels);
        if (s - s_ref).abs() > 1e-12 {
            return Err(format!("silhouette instance {inst}: {s} vs {s_ref}"));
        }
        let (plus, minus, ties, nd) = naive_pair_counts(&d, &labels);
        let c = pair_comparison(&m, &labels).map_err(|e| e.to_string())?;
        if (c.concordant, c.discordant) != (plus, minus) || c.within_pairs + c.between_pairs != nd {
            return Err(format!("pair counts instance {inst}: {c:?} vs ({plus}, {minus})"));
        }
        let g = gamma_index(&m, &labels).map_err(|e| e.to_string())?;
        let g_ref = if plus + minus == 0 {
            0.0
        } else {
            (plus as f64 - minus as f64) / (plus + minus) as f64
        };
        if (g - g_ref).abs() > 1e-12 {
            return Err(format!("gamma instance {inst}: {g} vs {g_ref}"));
        }
        let total = (nd * (nd - 1) / 2) as f64;
        let denom = ((total - ties as f64) * total).sqrt();
        let t_ref = if denom > 0.0 { (plus as f64 - minus as f64) / denom } else { 0.0 };
        let t = tau_index(&m, &labels).map_err(|e| e.to_string())?;
        if (t - t_ref).abs() > 1e-12 {
            return Err(format!("tau instance {inst}: {t} vs {t_ref}"));
        }
    }
    Ok(())
}

/// AUC against explicit pair counting for every labelling of up to 12
/// patients, with continuous, tied and constant probabilities.
pub fn check_auc_pairs(max_n: usize) -> Check {
    let mut rng = rng("auc");
    for n in 2..=max_n {
        let prob_sets: [Vec<f64>; 3] = [
            (0..n).map(|_| rng.random()).collect(),
            (0..n).map(|_| f64::from(rng.random_range(0..4u8)) / 3.0).collect(),
            vec![0.5; n],
        ];
        for probs in &prob_sets {
            for mask in 1u32..(1 << n) - 1 {
                let labels: Vec<bool> = (0..n).map(|i| mask >> i & 1 == 1).collect();
                let (mut twice, mut pos, mut neg) = (0u64, 0u64, 0u64);
                for i in 0..n {
                    if labels[i] {
                        pos += 1;
                    } else {
                        neg += 1;
                    }
                    for j in 0..n {
                        if labels[i] && !labels[j] {
                            twice += match probs[i].partial_cmp(&probs[j]).unwrap() {
                                std::cmp::Ordering::Greater => 2,
                                std::cmp::Ordering::Equal => 1,
                                std::cmp::Ordering::Less => 0,
                            };
                        }
                    }
                }
                let expected = twice as f64 / (2.0 * pos as f64 * neg as f64);
                let got = roc_auc(probs, &labels).map_err(|e| e.to_string())?.auc;
                if got != expected {
                    return Err(format!("auc n={n} mask={mask:b}: {got} vs {expected}"));
                }
            }
        }
    }
    Ok(())
}

/// Patient log-likelihood against the dense evaluation, relative 1e-8 (with
/// a floor of 1 on the scale).
pub fn check_mvn_dense(instances: usize) -> Check {
    let mut rng = rng("mvn");
    for inst in 0..instances {
        let (mut times, _) = random_profile(&mut rng, 6);
        if times.is_empty() {
            times.push(rng.random_range(10.0..80.0));
        }
        let traj = random_traj(&mut rng);
        let dep = random_dep(&mut rng);
        let values: Vec<f64> = times
            .iter()
            .map(|&t| bnplc::model::eval_trajectory(&traj, t) + 0.5 * standard_normal(&mut rng))
            .collect();
        let p = Patient::new("x", None, times.clone(), values.clone()).map_err(|e| e.to_string())?;
        let got = patient_loglik(&p, &traj, &dep).map_err(|e| e.to_string())?;
        let want = dense_mvn_loglik(&times, &values, &traj, &dep);
        if (got - want).abs() > 1e-8 * want.abs().max(1.0) {
            return Err(format!("mvn instance {inst}: {got} vs dense {want}"));
        }
    }
    Ok(())
}

/// Reference agglomeration: every linkage value is recomputed from the raw
/// dissimilarities at every step. Ward uses the closed form
/// `2|A||B|/(|A|+|B|) · [mean d²(A,B) - ½ mean d²(A,A) - ½ mean d²(B,B)]`.
pub fn reference_agglomeration(d: &[f64], n: usize, linkage: Linkage) -> Vec<(usize, usize, f64, usize)> {
    let dd = |i: usize, j: usize| d[i * n + j];
    let mean_sq = |a: &[usize], b: &[usize]| {
        a.iter().flat_map(|&i| b.iter().map(move |&j| dd(i, j).powi(2))).sum::<f64>()
            / (a.len() * b.len()) as f64
    };
    let mut clusters: Vec<(usize, Vec<usize>)> = (0..n).map(|i| (i, vec![i])).collect();
    let mut out = Vec::new();
    for step in 0..n - 1 {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for x in 0..clusters.len() {
            for y in x + 1..clusters.len() {
                let (a, b) = (&clusters[x].1, &clusters[y].1);
                let v = match linkage {
                    Linkage::Average => {
                        a.iter().flat_map(|&i| b.iter().map(move |&j| dd(i, j))).sum::<f64>()
                            / (a.len() * b.len()) as f64
                    }
                    Linkage::Ward => {
                        let (na, nb) = (a.len() as f64, b.len() as f64);
                        2.0 * na * nb / (na + nb) * (mean_sq(a, b) - 0.5 * mean_sq(a, a) - 0.5 * mean_sq(b, b))
                    }
                };
                let (lo, hi) = {
                    let (p, q) = (clusters[x].0, clusters[y].0);
                    (p.min(q), p.max(q))
                };
                let better = match best {
                    None => true,
                    Some((bv, blo, bhi, _, _)) => v < bv || (v == bv && (lo, hi) < (blo, bhi)),
                };
                if better {
                    best = Some((v, lo, hi, x, y));
                }
            }
        }
        let (v, lo, hi, x, y) = best.unwrap();
        let (_, b) = clusters.remove(y);
        let (_, mut a) = clusters.remove(x);
        a.extend(b);
        let size = a.len();
        clusters.push((n + step, a));
        let height = match linkage {
            Linkage::Average => v,
            Linkage::Ward => v.max(0.0).sqrt(),
        };
        out.push((lo, hi, height, size));
    }
    out
}

pub fn random_dissimilarity<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v: f64 = rng.random();
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    d
}

pub fn check_agglomeration_reference(instances: usize) -> Check {
    let mut rng = rng("agglomerate");
    for inst in 0..instances {
        let n = rng.random_range(2..=12);
        let d = random_dissimilarity(&mut rng, n);
        for linkage in [Linkage::Average, Linkage::Ward] {
            let got = agglomerate_dissimilarity(&d, n, linkage).map_err(|e| e.to_string())?;
            let want = reference_agglomeration(&d, n, linkage);
            for (k, (m, w)) in got.merges.iter().zip(&want).enumerate() {
                if (m.left, m.right, m.size) != (w.0, w.1, w.3) || (m.height - w.2).abs() > 1e-10 {
                    return Err(format!("{linkage} instance {inst} merge {k}: {m:?} vs reference {w:?}"));
                }
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- sampler

/// Measurement times of the five patients in the joint-distribution test.
pub const GEWEKE_TIMES: [&[f64]; 5] = [&[0.0, 1.0, 2.0], &[0.5, 2.5], &[1.0], &[0.0, 1.5, 3.0], &[2.0, 3.0]];
pub const GEWEKE_H: usize = 3;

/// Proper priors with finite fourth moments for every tested quantity.
pub fn geweke_priors() -> PriorSpec {
    PriorSpec {
        gamma2: InvGammaPrior { shape: 6.0, scale: 1.0 },
        sigma2: InvGammaPrior { shape: 6.0, scale: 1.0 },
        alpha_shape: 1.0,
        alpha_rate: 1.0,
        theta_star_mean: [1.0, 1.0, 0.0],
        theta_star_var: 0.25,
        sigma_df: 8.0,
        sigma_scale: [[0.2, 0.0, 0.0], [0.0, 0.2, 0.0], [0.0, 0.0, 0.2]],
        a: 0.5,
        b: 0.5,
    }
}

fn sample_inv_gamma<R: Rng>(rng: &mut R, p: InvGammaPrior) -> f64 {
    1.0 / sample_gamma(rng, p.shape, p.scale).unwrap()
}

/// One draw of every parameter from the prior.
pub fn prior_state<R: Rng>(rng: &mut R, priors: &PriorSpec, n: usize, h: usize) -> ModelState {
    let alpha = sample_gamma(rng, priors.alpha_shape, priors.alpha_rate).unwrap();
    let mut sticks: Vec<f64> = (0..h).map(|_| sample_beta(rng, 1.0, alpha).unwrap().clamp(1e-300, 1.0 - 1e-16)).collect();
    sticks[h - 1] = 1.0;
    let mean0 = Vector3::from(priors.theta_star_mean);
    let theta_star = sample_mvn3(rng, &mean0, &(Matrix3::identity() * priors.theta_star_var)).unwrap();
    let scale = Matrix3::from_fn(|i, j| priors.sigma_scale[i][j]);
    let sigma = sample_inv_wishart3(rng, priors.sigma_df, &scale).unwrap();
    let clusters = (0..h)
        .map(|_| ClusterParams {
            phi: sample_beta(rng, priors.a, priors.b).unwrap().clamp(1e-300, 1.0 - 1e-16),
            traj: TrajectoryParams::from_vector(&sample_mvn3(rng, &theta_star, &sigma).unwrap()),
        })
        .collect();
    let dep = DependenceParams::new(
        sample_inv_gamma(rng, priors.gamma2),
        sample_inv_gamma(rng, priors.sigma2),
        rng.random_range(1e-12..1.0),
    )
    .unwrap();
    let weights = stick_breaking_weights(&sticks);
    let assignments = (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            weights.iter().position(|w| {
                acc += w;
                u < acc
            })
            .unwrap_or(h - 1)
        })
        .collect();
    let mut base = default_base();
    base.theta_star = [theta_star[0], theta_star[1], theta_star[2]];
    base.set_sigma(&sigma);
    base.a = priors.a;
    base.b = priors.b;
    ModelState {
        assignments,
        sticks,
        weights,
        clusters,
        dep,
        alpha,
        base,
    }
}

/// Fresh disease labels and profiles given every parameter.
pub fn regenerate<R: Rng>(rng: &mut R, state: &ModelState, times: &[&[f64]]) -> Vec<Patient> {
    times
        .iter()
        .zip(&state.assignments)
        .enumerate()
        .map(|(i, (t, &c))| {
            let cl = &state.clusters[c];
            let disease = rng.random::<f64>() < cl.phi;
            let n = t.len();
            let mut cov = vec![0.0; n * n];
            for j in 0..n {
                for k in 0..n {
                    cov[j * n + k] = state.dep.sigma2 * state.dep.rho.powf((t[j] - t[k]).abs() / 7.0) + state.dep.gamma2;
                }
            }
            let chol = Cholesky::factor(&cov, n).unwrap();
            let z: Vec<f64> = (0..n).map(|_| standard_normal(rng)).collect();
            let e = chol.mul_lower(&z);
            let values = t
                .iter()
                .zip(&e)
                .map(|(&tt, &ee)| bnplc::model::eval_trajectory(&cl.traj, tt) + ee)
                .collect();
            Patient::new(format!("g{i}"), Some(disease), t.to_vec(), values).unwrap()
        })
        .collect()
}

/// z-scores of the successive-conditional simulator against the prior
/// moments, one per (quantity, moment).
pub fn geweke_z_scores(cycles: usize) -> Result<Vec<(String, f64)>, String> {
    let priors = geweke_priors();
    let config = SamplerConfig {
        truncation: Truncation::Fixed(GEWEKE_H),
        adapt: false,
        priors: priors.clone(),
        ..SamplerConfig::default()
    };
    let n = GEWEKE_TIMES.len();
    let mut gen = rng("geweke-data");
    let mut state = prior_state(&mut gen, &priors, n, GEWEKE_H);
    let mut data = regenerate(&mut gen, &state, &GEWEKE_TIMES);
    let names = ["phi1", "phi2", "phi3", "gamma2", "sigma2", "rho", "alpha"];
    let mut series: Vec<Vec<f64>> = vec![Vec::with_capacity(cycles); names.len()];
    for c in 0..cycles {
        let mut s = Sampler::new(&data, &config, state, indexed_stream(7, "geweke-sweep", c as u64))
            .map_err(|e| format!("cycle {c}: {e}"))?;
        s.iterate(StepMask::FULL).map_err(|e| format!("cycle {c}: {e}"))?;
        state = s.into_state();
        data = regenerate(&mut gen, &state, &GEWEKE_TIMES);
        let vals = [
            state.clusters[0].phi,
            state.clusters[1].phi,
            state.clusters[2].phi,
            state.dep.gamma2,
            state.dep.sigma2,
            state.dep.rho,
            state.alpha,
        ];
        for (s, v) in series.iter_mut().zip(vals) {
            s.push(v);
        }
    }
    let ig = |p: InvGammaPrior| (p.scale / (p.shape - 1.0), p.scale * p.scale / ((p.shape - 1.0) * (p.shape - 2.0)));
    let phi = beta_moments(priors.a, priors.b);
    let expected = [
        phi,
        phi,
        phi,
        ig(priors.gamma2),
        ig(priors.sigma2),
        (0.5, 1.0 / 3.0),
        gamma_moments(priors.alpha_shape, priors.alpha_rate),
    ];
    let mut out = Vec::new();
    for ((name, xs), (m1, m2)) in names.iter().zip(&series).zip(expected) {
        out.push((format!("{name} mean"), z_batch(xs, m1, 50)));
        let sq: Vec<f64> = xs.iter().map(|x| x * x).collect();
        out.push((format!("{name} second moment"), z_batch(&sq, m2, 50)));
    }
    Ok(out)
}

pub fn check_geweke(cycles: usize) -> Check {
    let z = geweke_z_scores(cycles)?;
    let bad: Vec<String> = z
        .iter()
        .filter(|(_, v)| !(v.abs() < 4.0))
        .map(|(k, v)| format!("{k}: z = {v:.2}"))
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(format!("successive-conditional test: {}", bad.join(", ")))
    }
}

/// Five patients in clusters (0, 0, 0, 0, 1) of three, disease (1, 1, 1, 0, 0).
pub fn conjugate_fixture() -> (Vec<Patient>, ModelState) {
    let disease = [true, true, true, false, false];
    let data: Vec<Patient> = GEWEKE_TIMES
        .iter()
        .zip(disease)
        .enumerate()
        .map(|(i, (t, d))| {
            let v = t.iter().map(|x| 1.0 + 0.1 * x).collect();
            Patient::new(format!("c{i}"), Some(d), t.to_vec(), v).unwrap()
        })
        .collect();
    let clusters = vec![
        ClusterParams { phi: 0.5, traj: TrajectoryParams::new(1.5, 0.5, 0.0) },
        ClusterParams { phi: 0.5, traj: TrajectoryParams::new(1.0, 1.0, 0.0) },
        ClusterParams { phi: 0.5, traj: TrajectoryParams::new(2.0, 0.2, 0.5) },
    ];
    let mut state = make_state(
        vec![0, 0, 0, 0, 1],
        vec![0.3, 0.6, 1.0],
        clusters,
        DependenceParams::new(0.1, 0.2, 0.5).unwrap(),
        1.0,
    );
    state.base.theta_star = [1.0, 0.5, -0.5];
    state.base.sigma = [[0.5, 0.1, 0.0], [0.1, 0.3, 0.05], [0.0, 0.05, 0.2]];
    (data, state)
}

fn fixture_config() -> SamplerConfig {
    SamplerConfig {
        truncation: Truncation::Fixed(3),
        adapt: false,
        ..SamplerConfig::default()
    }
}

/// The stated Beta/Gamma/normal/inverse-Wishart full conditionals against
/// their analytic moments at 3 Monte-Carlo standard errors.
pub fn check_conjugate_updates(draws: usize) -> Check {
    let (data, state) = conjugate_fixture();
    let config = fixture_config();
    let mut results = Vec::new();

    // disease probabilities: (3 diseased, 1 healthy), (0, 1) and an empty cluster
    let mut s = Sampler::new(&data, &config, state.clone(), rng("phi")).map_err(|e| e.to_string())?;
    let mut phis = vec![Vec::with_capacity(draws); 3];
    for _ in 0..draws {
        s.update_phi().map_err(|e| e.to_string())?;
        for (k, p) in phis.iter_mut().enumerate() {
            p.push(s.state().clusters[k].phi);
        }
    }
    for (k, (a, b)) in [(3.5, 1.5), (0.5, 1.5), (0.5, 0.5)].into_iter().enumerate() {
        let (m1, m2) = beta_moments(a, b);
        results.push(check_two_moments(&format!("phi[{k}] ~ Beta({a}, {b})"), &phis[k], m1, m2));
    }

    // concentration with fixed sticks (0.3, 0.6, 1)
    let mut s = Sampler::new(&data, &config, state.clone(), rng("alpha")).map_err(|e| e.to_string())?;
    let alphas: Vec<f64> = (0..draws)
        .map(|_| s.update_alpha().map(|_| s.state().alpha))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let rate = 1.0 - (0.7f64).ln() - (0.4f64).ln();
    let (m1, m2) = gamma_moments(3.0, rate);
    results.push(check_two_moments("alpha ~ Gamma(H, 1 - sum log(1 - V))", &alphas, m1, m2));

    // sticks with counts (3, 2, 0) and alpha = 1
    let mut st = state.clone();
    st.assignments = vec![0, 0, 0, 1, 1];
    let mut s = Sampler::new(&data, &config, st, rng("sticks")).map_err(|e| e.to_string())?;
    let (mut v1, mut v2) = (Vec::with_capacity(draws), Vec::with_capacity(draws));
    for _ in 0..draws {
        s.update_sticks().map_err(|e| e.to_string())?;
        let w = &s.state().weights;
        if (w.iter().sum::<f64>() - 1.0).abs() > 1e-12 || s.state().sticks[2] != 1.0 {
            return Err(format!("stick update broke normalisation: {w:?}"));
        }
        v1.push(s.state().sticks[0]);
        v2.push(s.state().sticks[1]);
    }
    let (m1, m2) = beta_moments(4.0, 3.0);
    results.push(check_two_moments("V1 ~ Beta(4, 3)", &v1, m1, m2));
    let (m1, m2) = beta_moments(3.0, 1.0);
    results.push(check_two_moments("V2 ~ Beta(3, 1)", &v2, m1, m2));

    // the empty cluster's trajectory is an exact base-measure draw
    let mut s = Sampler::new(&data, &config, state.clone(), rng("theta-empty")).map_err(|e| e.to_string())?;
    let mut th = vec![Vec::with_capacity(draws); 3];
    for _ in 0..draws {
        s.update_theta_clusters().map_err(|e| e.to_string())?;
        let v = s.state().clusters[2].traj.as_vector();
        for j in 0..3 {
            th[j].push(v[j]);
        }
    }
    for j in 0..3 {
        let mu = state.base.theta_star[j];
        let var = state.base.sigma[j][j];
        results.push(check_two_moments(&format!("empty-cluster theta[{j}]"), &th[j], mu, var + mu * mu));
    }

    // theta*: generalised least squares mean and covariance
    let thetas: Vec<TrajectoryParams> = state.clusters.iter().map(|c| c.traj).collect();
    let sigma = state.base.sigma_matrix();
    let priors = &config.priors;
    let sig: Vec<Vec<f64>> = (0..3).map(|i| (0..3).map(|j| sigma[(i, j)]).collect()).collect();
    let (sinv, _) = dense_inverse_logdet(&sig);
    let prec: Vec<Vec<f64>> = (0..3)
        .map(|i| {
            (0..3)
                .map(|j| 3.0 * sinv[i][j] + if i == j { 1.0 / priors.theta_star_var } else { 0.0 })
                .collect()
        })
        .collect();
    let (v_ref, _) = dense_inverse_logdet(&prec);
    let rhs: Vec<f64> = (0..3)
        .map(|i| {
            priors.theta_star_mean[i] / priors.theta_star_var
                + (0..3).map(|j| sinv[i][j] * thetas.iter().map(|t| t.as_vector()[j]).sum::<f64>()).sum::<f64>()
        })
        .collect();
    let m_ref: Vec<f64> = (0..3).map(|i| (0..3).map(|j| v_ref[i][j] * rhs[j]).sum()).collect();
    let (m, v) = theta_star_conditional(&thetas, &sigma, priors).map_err(|e| e.to_string())?;
    for i in 0..3 {
        if (m[i] - m_ref[i]).abs() > 1e-10 || (0..3).any(|j| (v[(i, j)] - v_ref[i][j]).abs() > 1e-10) {
            results.push(Err(format!("theta* conditional: ({m}, {v}) vs reference ({m_ref:?}, {v_ref:?})")));
            break;
        }
    }
    let mut ts = vec![Vec::with_capacity(draws); 3];
    for k in 0..draws {
        let mut s = Sampler::new(&data, &config, state.clone(), indexed_stream(3, "theta-star", k as u64))
            .map_err(|e| e.to_string())?;
        s.update_base_measure().map_err(|e| e.to_string())?;
        for j in 0..3 {
            ts[j].push(s.state().base.theta_star[j]);
        }
    }
    for j in 0..3 {
        results.push(check_two_moments(
            &format!("theta*[{j}]"),
            &ts[j],
            m_ref[j],
            v_ref[j][j] + m_ref[j] * m_ref[j],
        ));
    }

    // inverse-Wishart mean S / (df - p - 1), entrywise
    let scale = Matrix3::new(1.0, 0.3, 0.0, 0.3, 2.0, -0.4, 0.0, -0.4, 0.5);
    let df = 9.0;
    let mut r = rng("inv-wishart");
    let iw: Vec<Matrix3<f64>> = (0..draws)
        .map(|_| sample_inv_wishart3(&mut r, df, &scale))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    for i in 0..3 {
        for j in i..3 {
            let xs: Vec<f64> = iw.iter().map(|m| m[(i, j)]).collect();
            let z = z_iid(&xs, scale[(i, j)] / (df - 4.0));
            if z.abs() >= 3.0 {
                results.push(Err(format!("inverse-Wishart mean [{i},{j}]: z = {z:.2}")));
            }
        }
    }
    collect(results)
}

/// Single observation per patient: ρ leaves the likelihood, so its chain
/// must reproduce the uniform prior.
pub fn check_rho_prior_recovery(iterations: usize) -> Check {
    let (mut data, state) = conjugate_fixture();
    for p in &mut data {
        p.times.truncate(1);
        p.values.truncate(1);
    }
    let config = fixture_config();
    let mut s = Sampler::new(&data, &config, state, rng("rho-prior")).map_err(|e| e.to_string())?;
    let mut rho = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        s.update_dependence().map_err(|e| e.to_string())?;
        rho.push(s.state().dep.rho);
    }
    let z1 = z_batch(&rho, 0.5, 50);
    let sq: Vec<f64> = rho.iter().map(|x| x * x).collect();
    let z2 = z_batch(&sq, 1.0 / 3.0, 50);
    if z1.abs() < 3.0 && z2.abs() < 3.0 {
        Ok(())
    } else {
        Err(format!("rho with single observations: z = {z1:.2}, {z2:.2}"))
    }
}

/// Posterior mean of `γ² + σ²` from one observation by quadrature on a
/// log-log grid.
pub fn variance_posterior_mean(resid: f64, g: InvGammaPrior, s: InvGammaPrior) -> f64 {
    let (lo, hi, k) = (-14.0f64, 8.0f64, 1200usize);
    let step = (hi - lo) / k as f64;
    let log_ig = |x: f64, p: InvGammaPrior| -(p.shape + 1.0) * x.ln() - p.scale / x;
    let mut terms = Vec::with_capacity(k * k);
    for a in 0..k {
        let u = (lo + (a as f64 + 0.5) * step).exp();
        for b in 0..k {
            let v = (lo + (b as f64 + 0.5) * step).exp();
            let tot = u + v;
            let lp = log_ig(u, g) + log_ig(v, s) + u.ln() + v.ln() - 0.5 * tot.ln() - resid * resid / (2.0 * tot);
            terms.push((lp, tot));
        }
    }
    let mx = terms.iter().map(|t| t.0).fold(f64::NEG_INFINITY, f64::max);
    let (mut num, mut den) = (0.0, 0.0);
    for (lp, tot) in terms {
        let w = (lp - mx).exp();
        num += w * tot;
        den += w;
    }
    num / den
}

/// One patient with one observation: the dependence chain's draws of
/// `γ² + σ²` against the quadrature posterior mean.
pub fn check_variance_posterior(iterations: usize) -> Check {
    let prior = InvGammaPrior { shape: 3.0, scale: 0.5 };
    let traj = TrajectoryParams::new(1.0, 0.0, 0.0);
    let resid = 0.8;
    let data = vec![Patient::new("v", Some(true), vec![5.0], vec![0.5 + resid]).unwrap()];
    let state = make_state(
        vec![0],
        vec![1.0],
        vec![ClusterParams { phi: 0.5, traj }],
        DependenceParams::new(0.2, 0.2, 0.5).unwrap(),
        1.0,
    );
    let config = SamplerConfig {
        truncation: Truncation::Fixed(1),
        adapt: false,
        priors: PriorSpec {
            gamma2: prior,
            sigma2: prior,
            ..PriorSpec::default()
        },
        ..SamplerConfig::default()
    };
    let mut s = Sampler::new(&data, &config, state, rng("variance-posterior")).map_err(|e| e.to_string())?;
    let mut tot = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        s.update_dependence().map_err(|e| e.to_string())?;
        tot.push(s.state().dep.gamma2 + s.state().dep.sigma2);
    }
    let want = variance_posterior_mean(resid, prior, prior);
    let z = z_batch(&tot, want, 50);
    if z.abs() < 3.0 {
        Ok(())
    } else {
        let m = tot.iter().sum::<f64>() / tot.len() as f64;
        Err(format!("gamma2 + sigma2 posterior mean {m:.5} vs quadrature {want:.5} (z = {z:.2})"))
    }
}

// ---------------------------------------------------------------- invariance

/// Predictions and co-clustering under random relabelling of clusters.
pub fn check_label_permutation(instances: usize) -> Check {
    let mut rng = rng("permutation");
    for inst in 0..instances {
        let h = rng.random_range(1..=8);
        let draws: Vec<ModelState> = (0..4).map(|_| random_state(&mut rng, 6, h)).collect();
        let permuted: Vec<ModelState> = draws
            .iter()
            .map(|s| {
                let p = random_perm(&mut rng, h);
                permute_state(s, &p)
            })
            .collect();
        let (times, values) = random_profile(&mut rng, 6);
        for (a, b) in draws.iter().zip(&permuted) {
            let pa = predict_draw(a, &times, &values).map_err(|e| e.to_string())?;
            let pb = predict_draw(b, &times, &values).map_err(|e| e.to_string())?;
            if (pa - pb).abs() > 1e-12 {
                return Err(format!("predict_draw instance {inst}: {pa} vs {pb} after relabelling"));
            }
        }
        let ra = bma_predict(&draws, &times, &values, 0.9).map_err(|e| e.to_string())?;
        let rb = bma_predict(&permuted, &times, &values, 0.9).map_err(|e| e.to_string())?;
        if (ra.prob - rb.prob).abs() > 1e-12
            || (ra.interval.0 - rb.interval.0).abs() > 1e-12
            || (ra.interval.1 - rb.interval.1).abs() > 1e-12
        {
            return Err(format!("bma_predict instance {inst}: {ra:?} vs {rb:?}"));
        }
        let ma = CoclusteringMatrix::from_assignments(&draws.iter().map(|d| d.assignments.clone()).collect::<Vec<_>>())
            .map_err(|e| e.to_string())?;
        let mb = CoclusteringMatrix::from_assignments(&permuted.iter().map(|d| d.assignments.clone()).collect::<Vec<_>>())
            .map_err(|e| e.to_string())?;
        let max_diff = ma.as_slice().iter().zip(mb.as_slice()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        if max_diff > 1e-12 {
            return Err(format!("co-clustering instance {inst}: differs by {max_diff}"));
        }
    }
    Ok(())
}

/// Weights from random sticks, including extreme ones, and from the stick
/// update, sum to one.
pub fn check_stick_normalisation(instances: usize) -> Check {
    let mut rng = rng("sticks");
    for inst in 0..instances {
        let h = rng.random_range(1..=60);
        let mut sticks: Vec<f64> = (0..h)
            .map(|_| match rng.random_range(0..4) {
                0 => rng.random_range(0.0..1e-6),
                1 => 1.0 - rng.random_range(0.0..1e-6),
                _ => rng.random(),
            })
            .collect();
        sticks[h - 1] = 1.0;
        let w = stick_breaking_weights(&sticks);
        let total: f64 = w.iter().sum();
        if (total - 1.0).abs() > 1e-12 || w.iter().any(|&x| x < 0.0) {
            return Err(format!("instance {inst}: weights sum to {total}"));
        }
    }
    let data = small_sim2(30, 5);
    let mut r = rng.clone();
    let state = random_state(&mut r, data.len(), 20);
    let mut s = Sampler::new(&data, &quick_config(1), state, rng).map_err(|e| e.to_string())?;
    for it in 0..2000 {
        s.update_sticks().map_err(|e| e.to_string())?;
        if it % 50 == 0 {
            s.update_alpha().map_err(|e| e.to_string())?;
        }
        let total: f64 = s.state().weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(format!("stick update {it}: weights sum to {total}"));
        }
        s.state().check_invariants().map_err(|e| e.to_string())?;
    }
    Ok(())
}

/// Two runs with one seed give byte-identical serialised traces; another
/// seed gives a different one.
pub fn check_determinism() -> Check {
    let data = small_sim2(40, 9);
    let cfg = quick_config(77);
    let a = run_chain(&data, &cfg).map_err(|e| e.to_string())?;
    let b = run_chain(&data, &cfg).map_err(|e| e.to_string())?;
    let ja = serde_json::to_vec(&a).map_err(|e| e.to_string())?;
    let jb = serde_json::to_vec(&b).map_err(|e| e.to_string())?;
    if ja != jb || a != b {
        return Err("mixture traces differ between runs with one seed".into());
    }
    let ta = run_two_component(&data, &cfg).map_err(|e| e.to_string())?;
    let tb = run_two_component(&data, &cfg).map_err(|e| e.to_string())?;
    if serde_json::to_vec(&ta).map_err(|e| e.to_string())? != serde_json::to_vec(&tb).map_err(|e| e.to_string())? {
        return Err("two-component traces differ between runs with one seed".into());
    }
    let c = run_chain(&data, &quick_config(78)).map_err(|e| e.to_string())?;
    if c == a {
        return Err("different seeds gave identical traces".into());
    }
    Ok(())
}
