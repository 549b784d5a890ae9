//! Geometry of the SPD cone under the log-Euclidean metric.
//!
//! Everything is built on one symmetric eigendecomposition: `log` and `exp`
//! are spectral maps, the distance is the Frobenius norm of a difference of
//! logarithms, and the Gaussian kernel on top of it is positive definite for
//! every `gamma > 0`.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute symmetry tolerance, scaled by `max(1, max |a_ij|)`.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Eigenvalues at or below this fraction of the largest one are treated as zero.
pub const SINGULARITY_RATIO: f64 = 1e-14;

#[derive(Debug, Clone)]
pub struct SymEig {
    /// Ascending.
    pub values: DVector<f64>,
    /// Orthonormal eigenvectors as columns, ordered like `values`.
    pub vectors: DMatrix<f64>,
}

impl SymEig {
    /// `V diag(f(lambda)) V^T`, symmetrised.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let mut scaled = self.vectors.clone();
        for (j, &lambda) in self.values.iter().enumerate() {
            let s = f(lambda);
            scaled.column_mut(j).scale_mut(s);
        }
        symmetrize(&(scaled * self.vectors.transpose()))
    }
}

pub fn asymmetry(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

fn check_symmetric(a: &DMatrix<f64>) -> Result<()> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            found: a.ncols(),
        });
    }
    let scale = a.amax().max(1.0);
    let asym = asymmetry(a);
    if asym > SYMMETRY_TOL * scale || a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(())
}

/// `(A + A^T) / 2`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            a[(i, i)]
        } else {
            0.5 * (a[(i, j)] + a[(j, i)])
        }
    })
}

/// Symmetric eigendecomposition with eigenvalues in ascending order.
pub fn sym_eig(a: &DMatrix<f64>) -> Result<SymEig> {
    check_symmetric(a)?;
    let eig = SymmetricEigen::new(symmetrize(a));
    let n = a.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(SymEig { values, vectors })
}

/// Eigenvalues only, ascending.
pub fn sym_eigenvalues(a: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_symmetric(a)?;
    let mut values: Vec<f64> = symmetrize(a).symmetric_eigenvalues().iter().copied().collect();
    values.sort_by(f64::total_cmp);
    Ok(values)
}

fn log_from_eig(eig: &SymEig) -> Result<DMatrix<f64>> {
    let n = eig.values.len();
    let max = eig.values[n - 1];
    let min = eig.values[0];
    let threshold = SINGULARITY_RATIO * max.max(0.0);
    if min <= threshold || min <= 0.0 {
        return Err(Error::NearSingular { min, threshold });
    }
    Ok(eig.map(f64::ln))
}

/// Principal logarithm of an SPD matrix.
pub fn matrix_log(p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    log_from_eig(&sym_eig(p)?)
}

/// Exponential of a symmetric matrix; always SPD.
pub fn matrix_exp(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    Ok(sym_eig(s)?.map(f64::exp))
}

/// A point of the SPD cone with its logarithm cached.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdPoint {
    matrix: DMatrix<f64>,
    log: DMatrix<f64>,
}

impl SpdPoint {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        let log = matrix_log(&matrix)?;
        Ok(SpdPoint {
            matrix: symmetrize(&matrix),
            log,
        })
    }

    /// Builds the point `exp(log)`.
    pub fn from_log(log: DMatrix<f64>) -> Result<Self> {
        let matrix = matrix_exp(&log)?;
        Ok(SpdPoint {
            matrix,
            log: symmetrize(&log),
        })
    }

    /// Trusts the caller that `log` is the logarithm of `matrix`.
    pub(crate) fn from_parts(matrix: DMatrix<f64>, log: DMatrix<f64>) -> Self {
        SpdPoint { matrix, log }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn log_matrix(&self) -> &DMatrix<f64> {
        &self.log
    }
}

fn same_dim(p: &SpdPoint, q: &SpdPoint) -> Result<()> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.dim(),
            found: q.dim(),
        });
    }
    Ok(())
}

/// Squared log-Euclidean distance. Summation order is fixed, so the value is
/// exactly symmetric in its arguments.
#[inline]
pub(crate) fn lerm_distance_sq_unchecked(p: &SpdPoint, q: &SpdPoint) -> f64 {
    p.log
        .as_slice()
        .iter()
        .zip(q.log.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// `||log P - log Q||_F`.
pub fn lerm_distance(p: &SpdPoint, q: &SpdPoint) -> Result<f64> {
    same_dim(p, q)?;
    Ok(lerm_distance_sq_unchecked(p, q).sqrt())
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::Validation(format!("kernel width gamma must be positive, got {gamma}")));
    }
    Ok(())
}

/// Gaussian kernel `exp(-gamma * d^2)` on top of the log-Euclidean distance.
pub fn rbf_kernel(p: &SpdPoint, q: &SpdPoint, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    same_dim(p, q)?;
    Ok((-gamma * lerm_distance_sq_unchecked(p, q)).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    StaticRbf,
    Gak,
    PpfLinear,
    Fused,
}

/// A symmetric Gram matrix together with how it was produced.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    pub values: DMatrix<f64>,
    pub kind: KernelKind,
    pub gamma: Option<f64>,
    /// Smallest eigenvalue found by the last [`check_psd`].
    pub min_eig_estimate: Option<f64>,
    /// Scalar removed in log-space (`K = exp(log K - offset)`), if any.
    pub log_offset: Option<f64>,
}

impl KernelMatrix {
    pub fn new(values: DMatrix<f64>, kind: KernelKind) -> Result<Self> {
        check_symmetric(&values)?;
        Ok(KernelMatrix {
            values,
            kind,
            gamma: None,
            min_eig_estimate: None,
            log_offset: None,
        })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    /// Principal submatrix on `idx x idx`.
    pub fn select(&self, idx: &[usize]) -> KernelMatrix {
        KernelMatrix {
            values: DMatrix::from_fn(idx.len(), idx.len(), |i, j| self.values[(idx[i], idx[j])]),
            kind: self.kind,
            gamma: self.gamma,
            min_eig_estimate: None,
            log_offset: self.log_offset,
        }
    }

    /// Runs [`check_psd`] and records the smallest eigenvalue.
    pub fn validate_psd(&mut self, tol: f64) -> Result<PsdReport> {
        let report = check_psd(&self.values, tol)?;
        self.min_eig_estimate = Some(report.min_eig);
        Ok(report)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdReport {
    pub passed: bool,
    pub min_eig: f64,
    pub max_abs_eig: f64,
}

impl PsdReport {
    pub fn into_result(self) -> Result<Self> {
        if self.passed {
            Ok(self)
        } else {
            Err(Error::NotPsd {
                min_eig: self.min_eig,
                max_abs_eig: self.max_abs_eig,
            })
        }
    }
}

/// Fails iff `min eig < -tol * max |eig|`.
pub fn check_psd(k: &DMatrix<f64>, tol: f64) -> Result<PsdReport> {
    let eig = sym_eigenvalues(k)?;
    let min_eig = eig.first().copied().unwrap_or(0.0);
    let max_abs_eig = eig.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    Ok(PsdReport {
        passed: min_eig >= -tol * max_abs_eig,
        min_eig,
        max_abs_eig,
    })
}

/// Fills a symmetric matrix from `f(i, j)` evaluated on the upper triangle only.
pub fn fill_symmetric(n: usize, f: impl Fn(usize, usize) -> f64 + Sync) -> DMatrix<f64> {
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (i..n).map(|j| f(i, j)).collect())
        .collect();
    let mut out = DMatrix::zeros(n, n);
    for (i, row) in rows.into_iter().enumerate() {
        for (off, v) in row.into_iter().enumerate() {
            let j = i + off;
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

/// Fills a dense `rows x cols` matrix from `f(i, j)` in parallel over rows.
pub fn fill_dense(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f64 + Sync) -> DMatrix<f64> {
    let data: Vec<Vec<f64>> = (0..rows)
        .into_par_iter()
        .map(|i| (0..cols).map(|j| f(i, j)).collect())
        .collect();
    DMatrix::from_fn(rows, cols, |i, j| data[i][j])
}

fn check_dims<P: AsRef<SpdPoint>>(points: &[P]) -> Result<usize> {
    let dim = points
        .first()
        .map(|p| p.as_ref().dim())
        .ok_or_else(|| Error::Validation("empty point set".into()))?;
    for p in points {
        if p.as_ref().dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: p.as_ref().dim(),
            });
        }
    }
    Ok(dim)
}

impl AsRef<SpdPoint> for SpdPoint {
    fn as_ref(&self) -> &SpdPoint {
        self
    }
}

/// Pairwise squared distances `d^2(p_i, p_j)`.
pub fn squared_distance_matrix<P: AsRef<SpdPoint> + Sync>(points: &[P]) -> Result<DMatrix<f64>> {
    check_dims(points)?;
    Ok(fill_symmetric(points.len(), |i, j| {
        if i == j {
            0.0
        } else {
            lerm_distance_sq_unchecked(points[i].as_ref(), points[j].as_ref())
        }
    }))
}

/// Gaussian Gram matrix of a point set, PSD-checked at relative tolerance 1e-8.
pub fn gram_matrix<P: AsRef<SpdPoint> + Sync>(points: &[P], gamma: f64) -> Result<KernelMatrix> {
    check_gamma(gamma)?;
    let d2 = squared_distance_matrix(points)?;
    let mut k = KernelMatrix::new(d2.map(|d| (-gamma * d).exp()), KernelKind::StaticRbf)?;
    k.gamma = Some(gamma);
    k.validate_psd(1e-8)?;
    Ok(k)
}

/// Rectangular kernel between `queries` (rows) and `train` (columns).
pub fn cross_gram<P: AsRef<SpdPoint> + Sync, Q: AsRef<SpdPoint> + Sync>(
    queries: &[Q],
    train: &[P],
    gamma: f64,
) -> Result<DMatrix<f64>> {
    check_gamma(gamma)?;
    if queries.is_empty() || train.is_empty() {
        return Ok(DMatrix::zeros(queries.len(), train.len()));
    }
    let dim = check_dims(train)?;
    let qdim = check_dims(queries)?;
    if dim != qdim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: qdim,
        });
    }
    Ok(fill_dense(queries.len(), train.len(), |i, j| {
        (-gamma * lerm_distance_sq_unchecked(queries[i].as_ref(), train[j].as_ref())).exp()
    }))
}

/// Writes a matrix as CSV, row-major, 17 significant digits.
pub fn write_matrix_csv(m: &DMatrix<f64>, mut out: impl Write) -> std::io::Result<()> {
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{:.16e}", m[(i, j)])).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn read_matrix_csv(input: impl BufRead) -> Result<DMatrix<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::Validation(format!("line {}: {e}", n + 1)))?;
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Validation(format!("line {}: {e}", n + 1)))?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::DimensionMismatch {
                    expected: first.len(),
                    found: row.len(),
                });
            }
        }
        rows.push(row);
    }
    let cols = rows.first().map_or(0, Vec::len);
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}
