mod common;

use common::*;
use nalgebra::DMatrix;
use rand::Rng;
use spdtraj::align::{
    dtw_dissimilarity, dtw_proximity_matrix, enumerate_alignments, gak_gram, gak_gram_with, gak_log_cross,
    gak_similarity, resample_trajectory, GakOptions, LocalKernel, Trajectory,
};
use spdtraj::spdcore::{check_psd, lerm_distance};

/// Independent path enumerator: every monotone lattice path with unit and
/// diagonal steps from (0,0) to (l1-1,l2-1).
fn all_paths(l1: usize, l2: usize) -> Vec<Vec<(usize, usize)>> {
    if l1 == 1 && l2 == 1 {
        return vec![vec![(0, 0)]];
    }
    let mut out = Vec::new();
    let (i, j) = (l1 - 1, l2 - 1);
    let preds = [(i.checked_sub(1), Some(j)), (Some(i), j.checked_sub(1)), (i.checked_sub(1), j.checked_sub(1))];
    for (pi, pj) in preds {
        if let (Some(pi), Some(pj)) = (pi, pj) {
            for mut p in all_paths(pi + 1, pj + 1) {
                p.push((i, j));
                out.push(p);
            }
        }
    }
    out
}

fn delannoy(a: usize, b: usize) -> usize {
    if a == 0 || b == 0 {
        return 1;
    }
    delannoy(a - 1, b) + delannoy(a, b - 1) + delannoy(a - 1, b - 1)
}

fn distances(t1: &Trajectory, t2: &Trajectory) -> DMatrix<f64> {
    DMatrix::from_fn(t1.len(), t2.len(), |i, j| lerm_distance(&t1.points()[i], &t2.points()[j]).unwrap())
}

fn instances(seed: u64, count: usize) -> Vec<(Trajectory, Trajectory)> {
    let mut r = rng(seed);
    (0..count)
        .map(|_| {
            let m = r.gen_range(1..=4);
            let l1 = r.gen_range(1..=4);
            let l2 = r.gen_range(1..=4);
            (random_trajectory(&mut r, l1, m, "a"), random_trajectory(&mut r, l2, m, "b"))
        })
        .collect()
}

#[test]
fn enumeration_counts_are_delannoy_numbers() {
    assert_eq!(enumerate_alignments(2, 2).unwrap().len(), 3);
    assert_eq!(enumerate_alignments(3, 3).unwrap().len(), 13);
    for l1 in 1..=6 {
        for l2 in 1..=6 {
            let paths = enumerate_alignments(l1, l2).unwrap();
            assert_eq!(paths.len(), delannoy(l1 - 1, l2 - 1));
            let mut mine: Vec<_> = all_paths(l1, l2);
            let mut theirs: Vec<_> = paths.iter().map(|a| a.pairs.clone()).collect();
            mine.sort();
            theirs.sort();
            assert_eq!(mine, theirs);
            for a in &paths {
                a.validate(l1, l2).unwrap();
            }
        }
    }
    assert!(enumerate_alignments(8, 7).is_err());
}

#[test]
fn dtw_matches_exhaustive_mean_cost() {
    for (t1, t2) in instances(20, 50) {
        let d = distances(&t1, &t2);
        let mut best_mean = f64::INFINITY;
        let mut best_sum = f64::NAN;
        let mut best_len = usize::MAX;
        for p in all_paths(t1.len(), t2.len()) {
            let sum: f64 = p.iter().map(|&(i, j)| d[(i, j)]).sum();
            let mean = sum / p.len() as f64;
            if mean < best_mean || (mean == best_mean && p.len() < best_len) {
                best_mean = mean;
                best_sum = sum;
                best_len = p.len();
            }
        }
        let res = dtw_dissimilarity(&t1, &t2).unwrap();
        assert!((res.mean_cost - best_mean).abs() < 1e-12, "{} vs {best_mean}", res.mean_cost);
        assert!((res.cost - best_sum).abs() < 1e-12);
        res.path.validate(t1.len(), t2.len()).unwrap();
        let along: f64 = res.path.pairs.iter().map(|&(i, j)| d[(i, j)]).sum();
        assert!((along - res.cost).abs() < 1e-12);
    }
}

#[test]
fn dtw_is_symmetric_and_zero_on_self() {
    for (t1, t2) in instances(21, 20) {
        let a = dtw_dissimilarity(&t1, &t2).unwrap();
        let b = dtw_dissimilarity(&t2, &t1).unwrap();
        assert!((a.mean_cost - b.mean_cost).abs() < 1e-12);
        assert!(dtw_dissimilarity(&t1, &t1).unwrap().cost < 1e-10);
    }
}

fn gak_oracle(t1: &Trajectory, t2: &Trajectory, gamma: f64, ratio: bool) -> f64 {
    let d = distances(t1, t2);
    all_paths(t1.len(), t2.len())
        .iter()
        .map(|p| {
            p.iter()
                .map(|&(i, j)| {
                    let k = (-gamma * d[(i, j)] * d[(i, j)]).exp();
                    if ratio {
                        k / (1.0 + k)
                    } else {
                        k
                    }
                })
                .product::<f64>()
        })
        .sum()
}

#[test]
fn gak_matches_exhaustive_sum_both_local_kernels() {
    for (idx, (t1, t2)) in instances(22, 50).into_iter().enumerate() {
        let gamma = [0.1, 0.5, 2.0][idx % 3];
        for ratio in [false, true] {
            let oracle = gak_oracle(&t1, &t2, gamma, ratio);
            let got = gak_similarity(&t1, &t2, gamma, ratio).unwrap().value().unwrap();
            assert!((got - oracle).abs() <= 1e-10 * oracle, "{got} vs {oracle}");
        }
    }
}

#[test]
fn gak_gram_ratio_kernel_is_psd() {
    let mut r = rng(23);
    let trajs: Vec<Trajectory> = (0..20)
        .map(|i| {
            let len = r.gen_range(5..=10);
            random_trajectory(&mut r, len, 4, &format!("t{i}"))
        })
        .collect();
    for gamma in [0.05, 0.5, 5.0] {
        let k = gak_gram(&trajs, gamma, true).unwrap();
        assert!(check_psd(&k.values, 1e-6).unwrap().passed, "gamma {gamma}");
        let normalized = gak_gram_with(&trajs, &GakOptions { gamma, local: LocalKernel::Ratio, normalize: true }).unwrap();
        assert!(check_psd(&normalized.values, 1e-6).unwrap().passed);
        for i in 0..trajs.len() {
            assert!((normalized.values[(i, i)] - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn cross_log_gram_matches_pairwise() {
    let mut r = rng(24);
    let train: Vec<Trajectory> = (0..4).map(|i| random_trajectory(&mut r, 3, 3, &format!("tr{i}"))).collect();
    let queries: Vec<Trajectory> = (0..2).map(|i| random_trajectory(&mut r, 4, 3, &format!("q{i}"))).collect();
    let cross = gak_log_cross(&queries, &train, 0.3, LocalKernel::Rbf).unwrap();
    let prox = dtw_proximity_matrix(&train, &queries).unwrap();
    assert_eq!(cross.shape(), (2, 4));
    for q in 0..2 {
        for t in 0..4 {
            let oracle = gak_oracle(&queries[q], &train[t], 0.3, false).ln();
            assert!((cross[(q, t)] - oracle).abs() < 1e-10);
            assert_eq!(prox[(q, t)], dtw_dissimilarity(&queries[q], &train[t]).unwrap().cost);
        }
    }
}

#[test]
fn resampling_hits_target_length_and_keeps_endpoints() {
    let mut r = rng(25);
    for len in [1, 7, 15, 60] {
        let t = random_trajectory(&mut r, len, 2, "x");
        for target in [1, 15, 30] {
            let s = resample_trajectory(&t, target).unwrap();
            assert_eq!(s.len(), target);
            assert_eq!(s.points()[0].matrix(), t.points()[0].matrix());
            if target > 1 {
                assert_eq!(s.points()[target - 1].matrix(), t.points()[len - 1].matrix());
            }
        }
    }
}
