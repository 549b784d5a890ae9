mod common;

use common::*;
use nalgebra::DMatrix;
use rand::Rng;
use spdtraj::fusion::{
    feature_concat, kernel_weighted_sum, late_product, late_weighted_sum, search_weights, simplex_grid,
    vectorize_symmetric, write_trace_csv, FusionStrategy, SearchInput,
};
use spdtraj::spdcore::{KernelKind, KernelMatrix};
use spdtraj::svm::ScoreVector;

fn random_scores(r: &mut rand_chacha::ChaCha8Rng, n: usize, l: usize) -> Vec<ScoreVector> {
    (0..n)
        .map(|_| {
            let raw: Vec<f64> = (0..l).map(|_| r.gen_range(0.01..1.0)).collect();
            let total: f64 = raw.iter().sum();
            ScoreVector::new(raw.iter().map(|v| v / total).collect()).unwrap()
        })
        .collect()
}

fn random_psd_kernel(r: &mut rand_chacha::ChaCha8Rng, n: usize, rank: usize) -> KernelMatrix {
    let a = random_matrix(r, n, rank);
    KernelMatrix::new(&a * a.transpose(), KernelKind::StaticRbf).unwrap()
}

fn random_simplex(r: &mut rand_chacha::ChaCha8Rng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| -r.gen_range(1e-9f64..1.0).ln()).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|v| v / total).collect()
}

#[test]
fn one_hot_weights_recover_channel_exactly() {
    let mut r = rng(40);
    let scores: Vec<Vec<ScoreVector>> = (0..5).map(|_| random_scores(&mut r, 10, 3)).collect();
    let kernels: Vec<KernelMatrix> = (0..5).map(|_| random_psd_kernel(&mut r, 10, 4)).collect();
    let refs: Vec<&KernelMatrix> = kernels.iter().collect();
    for hot in 0..5 {
        let mut beta = vec![0.0; 5];
        beta[hot] = 1.0;
        let fused = kernel_weighted_sum(&refs, &beta).unwrap();
        assert_eq!(fused.values, kernels[hot].values);
        for (a, b) in late_weighted_sum(&scores, &beta).unwrap().iter().zip(&scores[hot]) {
            for (u, v) in a.as_slice().iter().zip(b.as_slice()) {
                assert!((u - v).abs() <= 1e-15);
            }
        }
    }
}

#[test]
fn conic_combinations_stay_psd() {
    let mut r = rng(41);
    for _ in 0..50 {
        let kernels: Vec<KernelMatrix> = (0..5)
            .map(|_| {
                let rank = r.gen_range(1..6);
                random_psd_kernel(&mut r, 12, rank)
            })
            .collect();
        let refs: Vec<&KernelMatrix> = kernels.iter().collect();
        let beta = random_simplex(&mut r, 5);
        let fused = kernel_weighted_sum(&refs, &beta).unwrap();
        assert_eq!(fused.kind, KernelKind::Fused);
        let oracle = kernels.iter().zip(&beta).fold(DMatrix::zeros(12, 12), |acc, (k, b)| acc + &k.values * *b);
        assert!((fused.values.clone() - &oracle).amax() < 1e-12);
        assert!(min_eigenvalue(&fused.values) >= -1e-9 * max_abs_eigenvalue(&fused.values));
    }
}

#[test]
fn score_fusion_preserves_simplex() {
    let mut r = rng(42);
    for _ in 0..20 {
        let scores: Vec<Vec<ScoreVector>> = (0..4).map(|_| random_scores(&mut r, 6, 5)).collect();
        let beta = random_simplex(&mut r, 4);
        for fused in [late_product(&scores).unwrap(), late_weighted_sum(&scores, &beta).unwrap()] {
            for s in fused {
                assert!(s.as_slice().iter().all(|&v| v >= 0.0));
                assert!((s.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn product_matches_direct_normalized_product() {
    let mut r = rng(43);
    let scores: Vec<Vec<ScoreVector>> = (0..3).map(|_| random_scores(&mut r, 4, 3)).collect();
    let fused = late_product(&scores).unwrap();
    for s in 0..4 {
        let raw: Vec<f64> = (0..3).map(|c| scores.iter().map(|ch| ch[s].as_slice()[c]).product()).collect();
        let total: f64 = raw.iter().sum();
        for c in 0..3 {
            assert!((fused[s].as_slice()[c] - raw[c] / total).abs() < 1e-12);
        }
    }
}

#[test]
fn channel_permutation_with_weights_is_invariant() {
    let mut r = rng(44);
    let scores: Vec<Vec<ScoreVector>> = (0..4).map(|_| random_scores(&mut r, 5, 3)).collect();
    let kernels: Vec<KernelMatrix> = (0..4).map(|_| random_psd_kernel(&mut r, 5, 3)).collect();
    let beta = random_simplex(&mut r, 4);
    let perm = [2, 0, 3, 1];
    let p_scores: Vec<Vec<ScoreVector>> = perm.iter().map(|&i| scores[i].clone()).collect();
    let p_beta: Vec<f64> = perm.iter().map(|&i| beta[i]).collect();
    let p_kernels: Vec<&KernelMatrix> = perm.iter().map(|&i| &kernels[i]).collect();
    let close = |a: &[ScoreVector], b: &[ScoreVector]| {
        a.iter().zip(b).all(|(x, y)| x.as_slice().iter().zip(y.as_slice()).all(|(u, v)| (u - v).abs() < 1e-12))
    };
    assert!(close(&late_weighted_sum(&scores, &beta).unwrap(), &late_weighted_sum(&p_scores, &p_beta).unwrap()));
    assert!(close(&late_product(&scores).unwrap(), &late_product(&p_scores).unwrap()));
    let k1 = kernel_weighted_sum(&kernels.iter().collect::<Vec<_>>(), &beta).unwrap();
    let k2 = kernel_weighted_sum(&p_kernels, &p_beta).unwrap();
    assert!((k1.values - k2.values).amax() < 1e-12);
}

#[test]
fn concatenated_features_carry_frobenius_geometry() {
    let mut r = rng(45);
    let logs: Vec<DMatrix<f64>> = (0..4)
        .map(|_| {
            let a = random_matrix(&mut r, 4, 4);
            (&a + a.transpose()) * 0.5
        })
        .collect();
    let feats = feature_concat(&[vec![&logs[0], &logs[1]], vec![&logs[2], &logs[3]]]).unwrap();
    assert_eq!(feats[0].len(), 2 * 4 * 5 / 2);
    let dot: f64 = feats[0].iter().zip(&feats[1]).map(|(a, b)| a * b).sum();
    let oracle = logs[0].dot(&logs[2]) + logs[1].dot(&logs[3]);
    assert!((dot - oracle).abs() < 1e-10);
    assert_eq!(vectorize_symmetric(&logs[0]).len(), 10);
    assert!(feature_concat(&[vec![&logs[0]], vec![&logs[1], &logs[2]]]).is_err());
}

fn block_kernel(labels: &[usize], noise: f64, r: &mut rand_chacha::ChaCha8Rng) -> KernelMatrix {
    // Feature map: class indicator plus noise; kernel = Gram of those features.
    let n = labels.len();
    let classes = labels.iter().max().unwrap() + 1;
    let feats = DMatrix::from_fn(n, classes + 2, |i, c| {
        if c < classes {
            if labels[i] == c { 1.0 } else { 0.0 }
        } else {
            noise * r.gen_range(-1.0..1.0)
        }
    });
    KernelMatrix::new(&feats * feats.transpose(), KernelKind::StaticRbf).unwrap()
}

#[test]
fn search_concentrates_on_dominant_channel() {
    let mut r = rng(46);
    let labels: Vec<usize> = (0..24).map(|i| i % 2).collect();
    let classes = vec!["a".to_string(), "b".to_string()];
    // Channel 1 is informative; channels 0 and 2 are pure noise.
    let noise_only = |r: &mut rand_chacha::ChaCha8Rng| {
        let f = random_matrix(r, 24, 12) * 2.0;
        KernelMatrix::new(&f * f.transpose(), KernelKind::StaticRbf).unwrap()
    };
    let kernels = vec![noise_only(&mut r), block_kernel(&labels, 0.1, &mut r), noise_only(&mut r)];
    let folds: Vec<Vec<usize>> = (0..3).map(|f| (0..24).filter(|i| i / 2 % 3 == f).collect()).collect();
    let channels: Vec<String> = ["g", "r1", "r2"].iter().map(|s| s.to_string()).collect();
    let (config, trace) = search_weights(
        SearchInput::Kernels { kernels: &kernels, c: 1.0 },
        &labels,
        &classes,
        &channels,
        FusionStrategy::KernelWeightedSum,
        &folds,
        0.1,
    )
    .unwrap();
    assert_eq!(trace.len(), 66);
    let top = config.weights.iter().enumerate().fold(0, |b, (i, w)| if *w > config.weights[b] { i } else { b });
    assert_eq!(top, 1, "weights {:?}", config.weights);
    let best = trace.iter().map(|t| t.accuracy).fold(f64::MIN, f64::max);
    assert_eq!(trace.iter().find(|t| t.accuracy == best).unwrap().beta, config.weights);
    let mut csv = Vec::new();
    write_trace_csv(&trace, &mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("beta_0,beta_1,beta_2,fold_0,fold_1,fold_2,accuracy\n"));
    assert_eq!(text.lines().count(), 67);
}

#[test]
fn identical_channels_pick_smallest_grid_point() {
    let mut r = rng(47);
    let labels: Vec<usize> = (0..12).map(|i| i % 2).collect();
    let scores = random_scores(&mut r, 12, 2);
    let chans = vec![scores.clone(), scores.clone(), scores];
    let folds = vec![(0..6).collect::<Vec<_>>(), (6..12).collect()];
    let channels: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    let classes = vec!["x".to_string(), "y".to_string()];
    let (config, _) = search_weights(
        SearchInput::Scores(&chans),
        &labels,
        &classes,
        &channels,
        FusionStrategy::LateWeightedSum,
        &folds,
        0.1,
    )
    .unwrap();
    assert_eq!(config.weights, simplex_grid(3, 0.1).unwrap()[0]);
    assert_eq!(config.weights, vec![0.0, 0.0, 1.0]);
    assert!(search_weights(SearchInput::Scores(&chans), &labels, &classes, &channels, FusionStrategy::LateWeightedSum, &folds[..1], 0.1).is_err());
}

#[test]
fn five_channel_grid_has_1001_points() {
    let grid = simplex_grid(5, 0.1).unwrap();
    assert_eq!(grid.len(), 1001);
    assert!(grid.windows(2).all(|w| w[0] < w[1]));
}
