//! Fast components against independent brute-force references.

mod common;

use bnplc::partition::{agglomerate_dissimilarity, cut_k, Linkage};
use common::*;
use rand::Rng;

#[test]
fn dahl_matches_exhaustive_candidate_scan() {
    check_dahl_bruteforce(2000).unwrap();
}

#[test]
fn indices_match_direct_pair_enumeration() {
    check_indices_naive(500).unwrap();
}

#[test]
fn auc_matches_pair_counting_for_every_labelling() {
    check_auc_pairs(12).unwrap();
}

#[test]
fn patient_loglik_matches_dense_gaussian() {
    check_mvn_dense(1000).unwrap();
}

#[test]
fn agglomeration_matches_recomputed_linkage() {
    check_agglomeration_reference(300).unwrap();
}

#[test]
fn average_linkage_recovers_an_ultrametric_tree() {
    let mut rng = rng("ultrametric");
    for _ in 0..100 {
        let n = rng.random_range(2..=15);
        // random binary tree with strictly increasing merge heights
        let mut groups: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        let mut d = vec![0.0; n * n];
        let mut height = 0.0;
        let mut partitions = Vec::new();
        while groups.len() > 1 {
            height += rng.random_range(0.01..0.2);
            let a = groups.swap_remove(rng.random_range(0..groups.len()));
            let b = groups.swap_remove(rng.random_range(0..groups.len()));
            for &i in &a {
                for &j in &b {
                    d[i * n + j] = height;
                    d[j * n + i] = height;
                }
            }
            groups.push([a, b].concat());
            partitions.push((height, groups.clone()));
        }
        let dendro = agglomerate_dissimilarity(&d, n, Linkage::Average).unwrap();
        for (m, (h, _)) in dendro.merges.iter().zip(&partitions) {
            assert!((m.height - h).abs() < 1e-12, "{} vs {h}", m.height);
        }
        for (step, (_, groups)) in partitions.iter().enumerate() {
            let k = n - 1 - step;
            let labels = cut_k(&dendro, k).unwrap().labels;
            for g in groups {
                assert!(g.iter().all(|&i| labels[i] == labels[g[0]]));
            }
            let distinct: std::collections::BTreeSet<_> = labels.iter().collect();
            assert_eq!(distinct.len(), k);
        }
    }
}
