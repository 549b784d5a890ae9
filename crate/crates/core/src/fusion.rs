//! Combining the global channel with local region channels.
//!
//! Late fusion combines per-channel score vectors (product or weighted sum).
//! Early fusion either concatenates log-vectorised descriptors or takes a
//! fixed conic combination of channel Gram matrices.

use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cv::train_indices;
use crate::error::{Error, Result};
use crate::spdcore::{fill_dense, fill_symmetric, KernelKind, KernelMatrix};
use crate::svm::{ScoreVector, SvmModel, PSD_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionStrategy {
    LateProduct,
    LateWeightedSum,
    FeatureConcat,
    #[default]
    KernelWeightedSum,
}

impl FusionStrategy {
    pub fn uses_weights(self) -> bool {
        matches!(self, FusionStrategy::LateWeightedSum | FusionStrategy::KernelWeightedSum)
    }

    pub fn is_late(self) -> bool {
        matches!(self, FusionStrategy::LateProduct | FusionStrategy::LateWeightedSum)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub strategy: FusionStrategy,
    pub weights: Vec<f64>,
    pub channels: Vec<String>,
}

impl FusionConfig {
    /// Equal weights over `channels`.
    pub fn uniform(strategy: FusionStrategy, channels: Vec<String>) -> Self {
        let n = channels.len().max(1);
        FusionConfig {
            strategy,
            weights: vec![1.0 / n as f64; channels.len()],
            channels,
        }
    }

    /// Validates lengths and signs, then rescales weights to sum to one.
    pub fn normalized(mut self) -> Result<Self> {
        if self.channels.is_empty() {
            return Err(Error::Validation("fusion needs at least one channel".into()));
        }
        if self.weights.len() != self.channels.len() {
            return Err(Error::Validation(format!(
                "{} weights for {} channels",
                self.weights.len(),
                self.channels.len()
            )));
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Validation("fusion weights must be finite and >= 0".into()));
        }
        let total: f64 = self.weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::Validation("fusion weights sum to zero".into()));
        }
        if (total - 1.0).abs() > 1e-9 {
            for w in &mut self.weights {
                *w /= total;
            }
        }
        Ok(self)
    }
}

fn check_simplex_weights(beta: &[f64], channels: usize) -> Result<()> {
    if beta.len() != channels {
        return Err(Error::DimensionMismatch {
            expected: channels,
            found: beta.len(),
        });
    }
    if beta.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
        return Err(Error::Validation("fusion weights must be non-negative".into()));
    }
    let total: f64 = beta.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Validation(format!("fusion weights sum to {total}, expected 1")));
    }
    Ok(())
}

fn check_score_shapes(scores: &[Vec<ScoreVector>]) -> Result<(usize, usize)> {
    let first = scores
        .first()
        .ok_or_else(|| Error::Validation("no channels to fuse".into()))?;
    let n = first.len();
    let l = first.first().map_or(0, ScoreVector::len);
    for ch in scores {
        if ch.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: ch.len(),
            });
        }
        if let Some(s) = ch.iter().find(|s| s.len() != l) {
            return Err(Error::DimensionMismatch {
                expected: l,
                found: s.len(),
            });
        }
    }
    Ok((n, l))
}

/// Per-sample product of channel scores, renormalised onto the simplex.
/// The product is formed in log-space so that many small factors do not
/// underflow.
pub fn late_product(scores: &[Vec<ScoreVector>]) -> Result<Vec<ScoreVector>> {
    let (n, l) = check_score_shapes(scores)?;
    Ok((0..n)
        .map(|s| {
            let logs: Vec<f64> = (0..l)
                .map(|c| scores.iter().map(|ch| ch[s].as_slice()[c].ln()).sum())
                .collect();
            let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                return ScoreVector::normalized(vec![0.0; l]);
            }
            ScoreVector::normalized(logs.iter().map(|v| (v - max).exp()).collect())
        })
        .collect())
}

/// Per-sample `sum_i beta_i S_i`. Zero weights are skipped so a one-hot
/// `beta` reproduces its channel exactly.
pub fn late_weighted_sum(scores: &[Vec<ScoreVector>], beta: &[f64]) -> Result<Vec<ScoreVector>> {
    let (n, l) = check_score_shapes(scores)?;
    check_simplex_weights(beta, scores.len())?;
    Ok((0..n)
        .map(|s| {
            let mut acc = vec![0.0; l];
            for (ch, &b) in scores.iter().zip(beta) {
                if b == 0.0 {
                    continue;
                }
                for (a, v) in acc.iter_mut().zip(ch[s].as_slice()) {
                    *a += b * v;
                }
            }
            ScoreVector::normalized(acc)
        })
        .collect())
}

/// `K = sum_i beta_i K_i`; the result is PSD-checked.
pub fn kernel_weighted_sum(kernels: &[&KernelMatrix], beta: &[f64]) -> Result<KernelMatrix> {
    let first = kernels
        .first()
        .ok_or_else(|| Error::Validation("no kernels to fuse".into()))?;
    check_simplex_weights(beta, kernels.len())?;
    let n = first.n();
    if let Some(k) = kernels.iter().find(|k| k.n() != n) {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: k.n(),
        });
    }
    let values = weighted_sum_matrices(kernels.iter().map(|k| &k.values), beta);
    let mut fused = KernelMatrix::new(values, KernelKind::Fused)?;
    let report = fused.validate_psd(PSD_TOL)?;
    report.into_result()?;
    Ok(fused)
}

/// `sum_i beta_i M_i` over arbitrary same-shaped matrices (zero weights skipped).
pub fn weighted_sum_matrices<'a>(mats: impl IntoIterator<Item = &'a DMatrix<f64>>, beta: &[f64]) -> DMatrix<f64> {
    let mut out: Option<DMatrix<f64>> = None;
    for (m, &b) in mats.into_iter().zip(beta) {
        if b == 0.0 {
            continue;
        }
        match out.as_mut() {
            None => out = Some(if b == 1.0 { m.clone() } else { m * b }),
            Some(acc) => *acc += m * b,
        }
    }
    out.unwrap_or_default()
}

/// Upper triangle (row-major, diagonal included) with off-diagonal entries
/// scaled by `sqrt(2)`, so Euclidean inner products equal Frobenius ones.
pub fn vectorize_symmetric(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        out.push(m[(i, i)]);
        for j in (i + 1)..n {
            out.push(std::f64::consts::SQRT_2 * m[(i, j)]);
        }
    }
    out
}

/// Concatenates the vectorised log-descriptors of every channel, per sample.
pub fn feature_concat(samples: &[Vec<&DMatrix<f64>>]) -> Result<Vec<Vec<f64>>> {
    let Some(first) = samples.first() else {
        return Ok(Vec::new());
    };
    let dims: Vec<usize> = first.iter().map(|m| m.nrows()).collect();
    samples
        .iter()
        .map(|channels| {
            if channels.len() != dims.len() {
                return Err(Error::DimensionMismatch {
                    expected: dims.len(),
                    found: channels.len(),
                });
            }
            let mut v = Vec::new();
            for (m, &d) in channels.iter().zip(&dims) {
                if m.nrows() != d || m.ncols() != d {
                    return Err(Error::DimensionMismatch {
                        expected: d,
                        found: m.nrows(),
                    });
                }
                v.extend(vectorize_symmetric(m));
            }
            Ok(v)
        })
        .collect()
}

fn sq_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Gaussian Gram of flat feature vectors.
pub fn euclidean_rbf_gram(features: &[Vec<f64>], gamma: f64) -> Result<KernelMatrix> {
    if !(gamma > 0.0) {
        return Err(Error::Validation(format!("gamma must be positive, got {gamma}")));
    }
    let values = fill_symmetric(features.len(), |i, j| (-gamma * sq_euclidean(&features[i], &features[j])).exp());
    let mut k = KernelMatrix::new(values, KernelKind::StaticRbf)?;
    k.gamma = Some(gamma);
    k.validate_psd(1e-8)?;
    Ok(k)
}

pub fn euclidean_rbf_cross(queries: &[Vec<f64>], train: &[Vec<f64>], gamma: f64) -> DMatrix<f64> {
    fill_dense(queries.len(), train.len(), |i, j| (-gamma * sq_euclidean(&queries[i], &train[j])).exp())
}

/// Points of the simplex with coordinates on a grid of the given step, in
/// ascending lexicographic order.
pub fn simplex_grid(channels: usize, step: f64) -> Result<Vec<Vec<f64>>> {
    if channels == 0 {
        return Err(Error::Validation("simplex grid needs at least one channel".into()));
    }
    let parts = (1.0 / step).round();
    if !(step > 0.0) || (parts * step - 1.0).abs() > 1e-9 {
        return Err(Error::Validation(format!("grid step {step} must divide 1")));
    }
    let parts = parts as usize;
    fn rec(left: usize, slots: usize, parts: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if slots == 1 {
            cur.push(left);
            out.push(cur.iter().map(|&k| k as f64 / parts as f64).collect());
            cur.pop();
            return;
        }
        for k in 0..=left {
            cur.push(k);
            rec(left - k, slots - 1, parts, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(parts, channels, parts, &mut Vec::new(), &mut out);
    Ok(out)
}

/// Data for a weight search.
pub enum SearchInput<'a> {
    /// Channel Gram matrices over all samples; each candidate trains an SVM
    /// per fold with regularisation `c`.
    Kernels { kernels: &'a [KernelMatrix], c: f64 },
    /// Held-out score vectors, indexed `[channel][sample]`.
    Scores(&'a [Vec<ScoreVector>]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub beta: Vec<f64>,
    pub fold_accuracies: Vec<f64>,
    /// Pooled accuracy over all held-out samples; `-1` when a fold failed.
    pub accuracy: f64,
}

/// Writes the search trace as CSV: `beta_0..beta_k, fold_0..fold_f, accuracy`.
pub fn write_trace_csv(rows: &[TraceRow], mut out: impl Write) -> std::io::Result<()> {
    let Some(first) = rows.first() else {
        return Ok(());
    };
    let mut header: Vec<String> = (0..first.beta.len()).map(|i| format!("beta_{i}")).collect();
    header.extend((0..first.fold_accuracies.len()).map(|i| format!("fold_{i}")));
    header.push("accuracy".into());
    writeln!(out, "{}", header.join(","))?;
    for r in rows {
        let cells: Vec<String> = r
            .beta
            .iter()
            .chain(&r.fold_accuracies)
            .chain(std::iter::once(&r.accuracy))
            .map(|v| format!("{v}"))
            .collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

/// Fits on all folds but one, returns held-out predictions for every sample.
pub fn cross_validated_predictions(
    kernel: &KernelMatrix,
    labels: &[usize],
    classes: &[String],
    folds: &[Vec<usize>],
    c: f64,
) -> Result<Vec<usize>> {
    let n = labels.len();
    let mut pred = vec![usize::MAX; n];
    for test in folds {
        let train = train_indices(n, test);
        let k_train = kernel.select(&train);
        let y: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
        let model = SvmModel::train(&k_train, &y, classes, c)?;
        let k_test = DMatrix::from_fn(test.len(), train.len(), |r, s| kernel.values[(test[r], train[s])]);
        for (&i, p) in test.iter().zip(model.predict(&k_test)?) {
            pred[i] = p;
        }
    }
    Ok(pred)
}

fn fold_accuracies(pred: &[usize], labels: &[usize], folds: &[Vec<usize>]) -> (Vec<f64>, f64) {
    let mut correct_total = 0usize;
    let mut total = 0usize;
    let per_fold = folds
        .iter()
        .map(|f| {
            let correct = f.iter().filter(|&&i| pred[i] == labels[i]).count();
            correct_total += correct;
            total += f.len();
            correct as f64 / f.len().max(1) as f64
        })
        .collect();
    (per_fold, correct_total as f64 / total.max(1) as f64)
}

/// Exhaustive search over the simplex grid, scoring each candidate by
/// cross-validated accuracy. The first (lexicographically smallest) best
/// candidate wins.
pub fn search_weights(
    input: SearchInput<'_>,
    labels: &[usize],
    classes: &[String],
    channels: &[String],
    strategy: FusionStrategy,
    folds: &[Vec<usize>],
    step: f64,
) -> Result<(FusionConfig, Vec<TraceRow>)> {
    if folds.len() < 2 {
        return Err(Error::Validation(format!("weight search needs >= 2 folds, got {}", folds.len())));
    }
    let n_channels = match &input {
        SearchInput::Kernels { kernels, .. } => kernels.len(),
        SearchInput::Scores(s) => s.len(),
    };
    if n_channels != channels.len() {
        return Err(Error::DimensionMismatch {
            expected: channels.len(),
            found: n_channels,
        });
    }
    let candidates = if strategy.uses_weights() {
        simplex_grid(n_channels, step)?
    } else {
        vec![FusionConfig::uniform(strategy, channels.to_vec()).weights]
    };

    let evaluate = |beta: &Vec<f64>| -> Result<TraceRow> {
        let pred = match (&input, strategy) {
            (SearchInput::Kernels { kernels, c }, FusionStrategy::KernelWeightedSum) => {
                let refs: Vec<&KernelMatrix> = kernels.iter().collect();
                match kernel_weighted_sum(&refs, beta)
                    .and_then(|k| cross_validated_predictions(&k, labels, classes, folds, *c))
                {
                    Ok(p) => p,
                    Err(Error::NotPsd { .. }) | Err(Error::NoConvergence(_)) => {
                        return Ok(TraceRow {
                            beta: beta.clone(),
                            fold_accuracies: vec![-1.0; folds.len()],
                            accuracy: -1.0,
                        })
                    }
                    Err(e) => return Err(e),
                }
            }
            (SearchInput::Scores(scores), FusionStrategy::LateWeightedSum) => late_weighted_sum(scores, beta)?
                .iter()
                .map(ScoreVector::argmax)
                .collect(),
            (SearchInput::Scores(scores), FusionStrategy::LateProduct) => {
                late_product(scores)?.iter().map(ScoreVector::argmax).collect()
            }
            _ => {
                return Err(Error::Validation(format!(
                    "strategy {strategy:?} cannot be searched with this input"
                )))
            }
        };
        let (fold_accuracies, accuracy) = fold_accuracies(&pred, labels, folds);
        Ok(TraceRow {
            beta: beta.clone(),
            fold_accuracies,
            accuracy,
        })
    };

    let trace = candidates.par_iter().map(evaluate).collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, row) in trace.iter().enumerate() {
        if row.accuracy > trace[best].accuracy {
            best = i;
        }
    }
    let config = FusionConfig {
        strategy,
        weights: trace[best].beta.clone(),
        channels: channels.to_vec(),
    };
    Ok((config, trace))
}
