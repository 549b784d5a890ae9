//! Multiclass kernel SVM over precomputed Gram matrices.
//!
//! Each class gets a one-vs-rest binary machine trained by SMO with
//! maximal-violating-pair working-set selection. Decision values are mapped to
//! the probability simplex with a softmax so that per-channel outputs can be
//! fused by product or weighted sum.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spdcore::{check_psd, fill_symmetric, KernelKind, KernelMatrix};

/// KKT violation at which SMO stops.
pub const KKT_TOL: f64 = 1e-3;
/// Iteration cap per binary problem.
pub const MAX_ITER: usize = 100_000;
/// Relative PSD tolerance a kernel must meet before training.
pub const PSD_TOL: f64 = 1e-6;
const TAU: f64 = 1e-12;

/// Scores on the probability simplex, one per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScoreVector(Vec<f64>);

impl ScoreVector {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::Validation("empty score vector".into()));
        }
        if scores.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::Validation("scores must be finite and non-negative".into()));
        }
        let total: f64 = scores.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!("scores sum to {total}, expected 1")));
        }
        Ok(ScoreVector(scores))
    }

    /// `exp(f_i - max f) / sum_j exp(f_j - max f)`.
    pub fn softmax(values: &[f64]) -> Self {
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = values.iter().map(|v| (v - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        ScoreVector(exps.into_iter().map(|e| e / total).collect())
    }

    /// Normalizes non-negative weights; all-zero input becomes uniform.
    pub(crate) fn normalized(weights: Vec<f64>) -> Self {
        let total: f64 = weights.iter().sum();
        if total > 0.0 && total.is_finite() {
            ScoreVector(weights.into_iter().map(|w| w / total).collect())
        } else {
            let l = weights.len();
            ScoreVector(vec![1.0 / l as f64; l])
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the largest score; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// One one-vs-rest machine: `f(x) = sum_i coef_i K(x_i, x) + bias`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryMachine {
    pub class: usize,
    /// Training indices with non-zero dual coefficient, ascending.
    pub support: Vec<usize>,
    /// `alpha_i * y_i` for each support index.
    pub coef: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub classes: Vec<String>,
    pub c: f64,
    pub kernel_kind: KernelKind,
    pub train_ids: Vec<String>,
    pub machines: Vec<BinaryMachine>,
}

/// Output of the binary dual solver.
#[derive(Debug, Clone)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    /// Decision function offset, `f(x) = sum alpha_i y_i K_i(x) - rho`.
    pub rho: f64,
    pub iterations: usize,
}

/// Dual objective `1/2 a^T Q a - sum a`, `Q_ij = y_i y_j K_ij`.
pub fn dual_objective(k: &DMatrix<f64>, y: &[f64], alpha: &[f64]) -> f64 {
    let n = y.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += alpha[i] * alpha[j] * y[i] * y[j] * k[(i, j)];
        }
    }
    0.5 * quad - alpha.iter().sum::<f64>()
}

/// SMO on `min 1/2 a^T Q a - e^T a` s.t. `0 <= a <= c`, `y^T a = 0`.
pub fn solve_binary(k: &DMatrix<f64>, y: &[f64], c: f64) -> Result<DualSolution> {
    let n = y.len();
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let q = |i: usize, j: usize| y[i] * y[j] * k[(i, j)];
    let is_up = |a: f64, yt: f64| (yt > 0.0 && a < c) || (yt < 0.0 && a > 0.0);
    let is_low = |a: f64, yt: f64| (yt > 0.0 && a > 0.0) || (yt < 0.0 && a < c);

    let mut iterations = 0;
    loop {
        let mut i = usize::MAX;
        let mut gmax = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut gmin = f64::INFINITY;
        for t in 0..n {
            let v = -y[t] * grad[t];
            if is_up(alpha[t], y[t]) && v > gmax {
                gmax = v;
                i = t;
            }
            if is_low(alpha[t], y[t]) && v < gmin {
                gmin = v;
                j = t;
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax - gmin < KKT_TOL {
            break;
        }
        if iterations >= MAX_ITER {
            return Err(Error::NoConvergence(MAX_ITER));
        }
        iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        if y[i] != y[j] {
            let mut quad = q(i, i) + q(j, j) + 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let mut quad = q(i, i) + q(j, j) - 2.0 * q(i, j);
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += q(i, t) * di + q(j, t) * dj;
        }
    }

    let mut ub = f64::INFINITY;
    let mut lb = f64::NEG_INFINITY;
    let mut free_sum = 0.0;
    let mut free = 0usize;
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            free_sum += yg;
        }
    }
    let rho = if free > 0 { free_sum / free as f64 } else { 0.5 * (ub + lb) };
    Ok(DualSolution { alpha, rho, iterations })
}

fn check_labels(n: usize, labels: &[usize], classes: &[String]) -> Result<()> {
    if labels.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: labels.len(),
        });
    }
    if classes.len() < 2 {
        return Err(Error::Validation("need at least two classes".into()));
    }
    let mut counts = vec![0usize; classes.len()];
    for &l in labels {
        if l >= classes.len() {
            return Err(Error::Validation(format!("label index {l} out of range")));
        }
        counts[l] += 1;
    }
    if let Some(c) = counts.iter().position(|&k| k == 0) {
        return Err(Error::Validation(format!("class `{}` has no training samples", classes[c])));
    }
    Ok(())
}

impl SvmModel {
    /// Trains one-vs-rest machines on a PSD kernel.
    pub fn train(kernel: &KernelMatrix, labels: &[usize], classes: &[String], c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Validation(format!("C must be positive, got {c}")));
        }
        let n = kernel.n();
        check_labels(n, labels, classes)?;
        check_psd(&kernel.values, PSD_TOL)?.into_result()?;
        let machines = (0..classes.len())
            .into_par_iter()
            .map(|class| {
                let y: Vec<f64> = labels.iter().map(|&l| if l == class { 1.0 } else { -1.0 }).collect();
                let sol = solve_binary(&kernel.values, &y, c)?;
                let support: Vec<usize> = (0..n).filter(|&t| sol.alpha[t] > 0.0).collect();
                let coef = support.iter().map(|&t| sol.alpha[t] * y[t]).collect();
                Ok(BinaryMachine {
                    class,
                    support,
                    coef,
                    bias: -sol.rho,
                    iterations: sol.iterations,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SvmModel {
            classes: classes.to_vec(),
            c,
            kernel_kind: kernel.kind,
            train_ids: (0..n).map(|i| i.to_string()).collect(),
            machines,
        })
    }

    pub fn with_train_ids(mut self, ids: Vec<String>) -> Result<Self> {
        if ids.len() != self.train_ids.len() {
            return Err(Error::DimensionMismatch {
                expected: self.train_ids.len(),
                found: ids.len(),
            });
        }
        self.train_ids = ids;
        Ok(self)
    }

    pub fn n_train(&self) -> usize {
        self.train_ids.len()
    }

    /// Checks that test-kernel columns are ordered like the training set.
    pub fn check_columns(&self, column_ids: &[String]) -> Result<()> {
        if column_ids != self.train_ids.as_slice() {
            let at = column_ids
                .iter()
                .zip(&self.train_ids)
                .position(|(a, b)| a != b)
                .unwrap_or(column_ids.len().min(self.train_ids.len()));
            return Err(Error::Validation(format!(
                "test kernel columns are not aligned with training ids (first difference at column {at})"
            )));
        }
        Ok(())
    }

    /// Raw decision values, `n_test x l`.
    pub fn decision_values(&self, k_test: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if k_test.ncols() != self.n_train() {
            return Err(Error::DimensionMismatch {
                expected: self.n_train(),
                found: k_test.ncols(),
            });
        }
        let mut out = DMatrix::zeros(k_test.nrows(), self.classes.len());
        for (c, m) in self.machines.iter().enumerate() {
            for r in 0..k_test.nrows() {
                let f: f64 = m.support.iter().zip(&m.coef).map(|(&s, &a)| a * k_test[(r, s)]).sum();
                out[(r, c)] = f + m.bias;
            }
        }
        Ok(out)
    }

    pub fn decision_scores(&self, k_test: &DMatrix<f64>) -> Result<Vec<ScoreVector>> {
        let f = self.decision_values(k_test)?;
        Ok(f.row_iter()
            .map(|row| ScoreVector::softmax(&row.iter().copied().collect::<Vec<_>>()))
            .collect())
    }

    /// Argmax of the decision values, lowest class index on ties.
    pub fn predict(&self, k_test: &DMatrix<f64>) -> Result<Vec<usize>> {
        let f = self.decision_values(k_test)?;
        Ok(f.row_iter()
            .map(|row| argmax(&row.iter().copied().collect::<Vec<_>>()))
            .collect())
    }
}

/// `K = Gamma Gamma^T`, filled from row dot products so it is exactly symmetric.
pub fn ppf_linear_kernel(gamma: &DMatrix<f64>) -> Result<KernelMatrix> {
    if gamma.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("proximity matrix has non-finite entries".into()));
    }
    let n = gamma.nrows();
    let values = fill_symmetric(n, |i, j| gamma.row(i).dot(&gamma.row(j)));
    let mut k = KernelMatrix::new(values, KernelKind::PpfLinear)?;
    k.validate_psd(1e-10)?;
    Ok(k)
}

/// SVM on pairwise-proximity embeddings with a linear kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpfModel {
    pub svm: SvmModel,
    /// Training proximity rows, `n x n`.
    pub embedding: Vec<Vec<f64>>,
}

pub fn ppf_train(gamma_matrix: &DMatrix<f64>, labels: &[usize], classes: &[String], c: f64) -> Result<PpfModel> {
    let k = ppf_linear_kernel(gamma_matrix)?;
    let svm = SvmModel::train(&k, labels, classes, c)?;
    let embedding = gamma_matrix
        .row_iter()
        .map(|r| r.iter().copied().collect())
        .collect();
    Ok(PpfModel { svm, embedding })
}

impl PpfModel {
    /// `Gamma_test Gamma_train^T`.
    pub fn test_kernel(&self, gamma_test: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let width = self.embedding.first().map_or(0, Vec::len);
        if gamma_test.ncols() != width {
            return Err(Error::DimensionMismatch {
                expected: width,
                found: gamma_test.ncols(),
            });
        }
        Ok(DMatrix::from_fn(gamma_test.nrows(), self.embedding.len(), |r, j| {
            self.embedding[j]
                .iter()
                .enumerate()
                .map(|(k, v)| gamma_test[(r, k)] * v)
                .sum()
        }))
    }

    pub fn decision_scores(&self, gamma_test: &DMatrix<f64>) -> Result<Vec<ScoreVector>> {
        self.svm.decision_scores(&self.test_kernel(gamma_test)?)
    }
}

pub fn ppf_predict(model: &PpfModel, gamma_test: &DMatrix<f64>) -> Result<Vec<usize>> {
    model.svm.predict(&model.test_kernel(gamma_test)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_kernel(x: &[[f64; 2]]) -> KernelMatrix {
        let n = x.len();
        let v = DMatrix::from_fn(n, n, |i, j| x[i][0] * x[j][0] + x[i][1] * x[j][1]);
        KernelMatrix::new(v, KernelKind::StaticRbf).unwrap()
    }

    fn classes(n: usize) -> Vec<String> {
        (0..n).map(|c| format!("c{c}")).collect()
    }

    #[test]
    fn separable_four_points() {
        let x = [[0.0, 1.0], [0.5, 1.5], [3.0, 0.0], [3.5, -0.5]];
        let k = linear_kernel(&x);
        let labels = [0, 0, 1, 1];
        let model = SvmModel::train(&k, &labels, &classes(2), 10.0).unwrap();
        assert_eq!(model.predict(&k.values).unwrap(), labels);
        for m in &model.machines {
            let y_sum: f64 = m.coef.iter().sum();
            assert!(y_sum.abs() < 1e-8);
        }
    }

    #[test]
    fn refuses_bad_inputs() {
        let k = linear_kernel(&[[1.0, 0.0], [0.0, 1.0]]);
        assert!(SvmModel::train(&k, &[0, 0], &classes(2), 1.0).is_err());
        assert!(SvmModel::train(&k, &[0, 0], &classes(1), 1.0).is_err());
        assert!(SvmModel::train(&k, &[0, 1], &classes(2), 0.0).is_err());
        let bad = KernelMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]), KernelKind::Gak).unwrap();
        match SvmModel::train(&bad, &[0, 1], &classes(2), 1.0) {
            Err(Error::NotPsd { min_eig, .. }) => assert!((min_eig + 1.0).abs() < 1e-9),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn softmax_properties() {
        let s = ScoreVector::softmax(&[0.0, 0.0, 0.0]);
        assert_eq!(s.as_slice(), &[1.0 / 3.0; 3]);
        let s = ScoreVector::softmax(&[1000.0, -5.0, 3.0]);
        assert!((s.as_slice().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(s.argmax(), 0);
    }

    #[test]
    fn ties_go_to_first_class() {
        assert_eq!(argmax(&[0.5, 0.5, 0.1]), 0);
        assert_eq!(ScoreVector::softmax(&[2.0, 2.0]).argmax(), 0);
    }

    #[test]
    fn column_id_check() {
        let x = [[0.0, 1.0], [3.0, 0.0]];
        let k = linear_kernel(&x);
        let model = SvmModel::train(&k, &[0, 1], &classes(2), 1.0)
            .unwrap()
            .with_train_ids(vec!["a".into(), "b".into()])
            .unwrap();
        assert!(model.check_columns(&["a".into(), "b".into()]).is_ok());
        assert!(model.check_columns(&["b".into(), "a".into()]).is_err());
        assert!(model.decision_values(&DMatrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn ppf_identity_and_rank_one() {
        let k = ppf_linear_kernel(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(k.values, DMatrix::identity(3, 3));
        let v = DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]);
        let g = &v * v.transpose();
        let k = ppf_linear_kernel(&g).unwrap();
        assert!(k.min_eig_estimate.unwrap().abs() < 1e-9 * k.values.norm());
        assert_eq!(k.kind, KernelKind::PpfLinear);
    }

    #[test]
    fn ppf_zero_row_is_bias_only() {
        let g = DMatrix::from_row_slice(4, 4, &[0.0, 1.0, 4.0, 5.0, 1.0, 0.0, 4.5, 4.0, 4.0, 4.5, 0.0, 1.0, 5.0, 4.0, 1.0, 0.0]);
        let model = ppf_train(&g, &[0, 0, 1, 1], &classes(2), 1.0).unwrap();
        let f = model.svm.decision_values(&model.test_kernel(&DMatrix::zeros(1, 4)).unwrap()).unwrap();
        for (c, m) in model.svm.machines.iter().enumerate() {
            assert_eq!(f[(0, c)], m.bias);
        }
        let same = ppf_predict(&model, &g.rows(0, 1).into_owned()).unwrap();
        assert_eq!(same, vec![0]);
        assert!(ppf_predict(&model, &DMatrix::zeros(1, 3)).is_err());
    }
}
