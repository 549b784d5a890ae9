//! Trajectories on the SPD cone and their alignment.
//!
//! An alignment between trajectories of lengths `L1` and `L2` is a monotone
//! lattice path from `(0, 0)` to `(L1-1, L2-1)` whose steps advance `i`, `j`
//! or both by one. Indices here are 0-based.
//!
//! * DTW returns the path minimising the *mean* local cost `D(pi)/|pi|` and
//!   reports `D(pi*)`. Path length varies, so the dynamic program is indexed by
//!   length as well as position, which makes it exact rather than a heuristic.
//! * The global alignment kernel sums `prod k(x_i, y_j)` over every path. It is
//!   evaluated in log-space with a per-cell log-sum-exp.

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covdesc::CovDescriptor;
use crate::error::{Error, Result};
use crate::spdcore::{fill_dense, fill_symmetric, lerm_distance_sq_unchecked, KernelKind, KernelMatrix, SpdPoint};

/// Guard on `L1 + L2` for exhaustive enumeration.
pub const MAX_ENUMERATION: usize = 14;

#[derive(Debug, Clone)]
pub struct Trajectory {
    points: Vec<Arc<SpdPoint>>,
    pub sample_id: String,
    pub region_id: Option<String>,
}

impl Trajectory {
    pub fn new(points: Vec<Arc<SpdPoint>>, sample_id: impl Into<String>) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| Error::Validation("trajectory needs at least one point".into()))?;
        let dim = first.dim();
        if let Some(p) = points.iter().find(|p| p.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: p.dim(),
            });
        }
        Ok(Trajectory {
            points,
            sample_id: sample_id.into(),
            region_id: None,
        })
    }

    pub fn from_points(points: Vec<SpdPoint>, sample_id: impl Into<String>) -> Result<Self> {
        Self::new(points.into_iter().map(Arc::new).collect(), sample_id)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].dim()
    }

    pub fn points(&self) -> &[Arc<SpdPoint>] {
        &self.points
    }
}

/// Builds a trajectory from descriptors in temporal order; logs are computed
/// once here.
pub fn build_trajectory(descriptors: &[CovDescriptor], sample_id: impl Into<String>) -> Result<Trajectory> {
    let points = descriptors
        .iter()
        .map(|d| d.to_spd_point().map(Arc::new))
        .collect::<Result<Vec<_>>>()?;
    let mut t = Trajectory::new(points, sample_id)?;
    t.region_id = descriptors.first().and_then(|d| d.region_id.clone());
    Ok(t)
}

/// Source index of output point `k` when resampling `len` points to `target`.
pub fn resample_index(k: usize, len: usize, target: usize) -> usize {
    if target <= 1 {
        0
    } else {
        ((k * (len - 1)) as f64 / (target - 1) as f64).round() as usize
    }
}

/// Uniform index resampling; points are reused, never interpolated.
pub fn resample_trajectory(t: &Trajectory, target: usize) -> Result<Trajectory> {
    if target == 0 {
        return Err(Error::Validation("resample target must be >= 1".into()));
    }
    let points = (0..target)
        .map(|k| Arc::clone(&t.points[resample_index(k, t.len(), target)]))
        .collect();
    Ok(Trajectory {
        points,
        sample_id: t.sample_id.clone(),
        region_id: t.region_id.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alignment {
    pub pairs: Vec<(usize, usize)>,
}

impl Alignment {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn validate(&self, l1: usize, l2: usize) -> Result<()> {
        let bad = |msg: &str| Err(Error::Validation(format!("invalid alignment: {msg}")));
        match (self.pairs.first(), self.pairs.last()) {
            (Some(&(0, 0)), Some(&(a, b))) if a + 1 == l1 && b + 1 == l2 => {}
            _ => return bad("must start at (0, 0) and end at (L1-1, L2-1)"),
        }
        for w in self.pairs.windows(2) {
            let (di, dj) = (w[1].0.wrapping_sub(w[0].0), w[1].1.wrapping_sub(w[0].1));
            if !matches!((di, dj), (1, 0) | (0, 1) | (1, 1)) {
                return bad("steps must advance i, j or both by exactly one");
            }
        }
        Ok(())
    }

    /// 1-based index pairs as JSON, for debugging output.
    pub fn to_json(&self) -> String {
        let one_based: Vec<[usize; 2]> = self.pairs.iter().map(|&(i, j)| [i + 1, j + 1]).collect();
        serde_json::to_string(&one_based).expect("index pairs serialise")
    }
}

fn same_dim(t1: &Trajectory, t2: &Trajectory) -> Result<()> {
    if t1.dim() != t2.dim() {
        return Err(Error::DimensionMismatch {
            expected: t1.dim(),
            found: t2.dim(),
        });
    }
    Ok(())
}

/// Pairwise local distances `d(t1[i], t2[j])` (not squared).
pub fn local_distances(t1: &Trajectory, t2: &Trajectory) -> Result<DMatrix<f64>> {
    same_dim(t1, t2)?;
    Ok(DMatrix::from_fn(t1.len(), t2.len(), |i, j| {
        lerm_distance_sq_unchecked(&t1.points[i], &t2.points[j]).sqrt()
    }))
}

/// `D(pi) = sum_i d(t1[pi_1(i)], t2[pi_2(i)])`, summed along the path.
pub fn alignment_cost(t1: &Trajectory, t2: &Trajectory, a: &Alignment) -> Result<f64> {
    same_dim(t1, t2)?;
    a.validate(t1.len(), t2.len())?;
    Ok(a.pairs
        .iter()
        .map(|&(i, j)| lerm_distance_sq_unchecked(&t1.points[i], &t2.points[j]).sqrt())
        .fold(0.0, |acc, d| acc + d))
}

/// Every alignment between lengths `l1` and `l2`, depth-first with steps
/// tried in the order diagonal, down, right.
pub fn enumerate_alignments(l1: usize, l2: usize) -> Result<Vec<Alignment>> {
    if l1 == 0 || l2 == 0 {
        return Err(Error::Validation("trajectory lengths must be >= 1".into()));
    }
    if l1 + l2 > MAX_ENUMERATION {
        return Err(Error::Validation(format!(
            "enumeration guard: L1 + L2 = {} exceeds {MAX_ENUMERATION}",
            l1 + l2
        )));
    }
    fn walk(i: usize, j: usize, l1: usize, l2: usize, path: &mut Vec<(usize, usize)>, out: &mut Vec<Alignment>) {
        path.push((i, j));
        if i + 1 == l1 && j + 1 == l2 {
            out.push(Alignment { pairs: path.clone() });
        } else {
            for (di, dj) in [(1, 1), (1, 0), (0, 1)] {
                if i + di < l1 && j + dj < l2 {
                    walk(i + di, j + dj, l1, l2, path, out);
                }
            }
        }
        path.pop();
    }
    let mut out = Vec::new();
    walk(0, 0, l1, l2, &mut Vec::new(), &mut out);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DtwResult {
    /// `D(pi*)`, the summed cost along the optimal path.
    pub cost: f64,
    /// `D(pi*) / |pi*|`, the minimised objective.
    pub mean_cost: f64,
    pub path: Alignment,
}

/// DTW under mean-normalised cost, from a precomputed local distance table.
///
/// `best[i][j][q]` is the smallest sum over paths from `(0,0)` to `(i,j)`
/// with exactly `q + 1` pairs; the answer minimises `best[L1-1][L2-1][q] /
/// (q + 1)`, ties resolved toward shorter paths.
pub fn dtw_from_distances(dist: &DMatrix<f64>) -> DtwResult {
    let (l1, l2) = dist.shape();
    let depth = l1 + l2 - 1;
    let idx = |i: usize, j: usize, q: usize| (i * l2 + j) * depth + q;
    let mut best = vec![f64::INFINITY; l1 * l2 * depth];
    // predecessor step: 0 diagonal, 1 from (i-1, j), 2 from (i, j-1)
    let mut step = vec![u8::MAX; l1 * l2 * depth];
    best[idx(0, 0, 0)] = dist[(0, 0)];
    for i in 0..l1 {
        for j in 0..l2 {
            if i == 0 && j == 0 {
                continue;
            }
            let d = dist[(i, j)];
            let q_min = i.max(j);
            for q in q_min..=(i + j) {
                let mut value = f64::INFINITY;
                let mut from = u8::MAX;
                let candidates = [
                    (i > 0 && j > 0, i.wrapping_sub(1), j.wrapping_sub(1)),
                    (i > 0, i.wrapping_sub(1), j),
                    (j > 0, i, j.wrapping_sub(1)),
                ];
                for (s, &(ok, pi, pj)) in candidates.iter().enumerate() {
                    if ok && q > 0 {
                        let prev = best[idx(pi, pj, q - 1)];
                        if prev < value {
                            value = prev;
                            from = s as u8;
                        }
                    }
                }
                if from != u8::MAX {
                    best[idx(i, j, q)] = value + d;
                    step[idx(i, j, q)] = from;
                }
            }
        }
    }
    let (ei, ej) = (l1 - 1, l2 - 1);
    let mut best_q = usize::MAX;
    let mut best_mean = f64::INFINITY;
    for q in ei.max(ej)..=(ei + ej) {
        let mean = best[idx(ei, ej, q)] / (q + 1) as f64;
        if mean < best_mean {
            best_mean = mean;
            best_q = q;
        }
    }
    let cost = best[idx(ei, ej, best_q)];
    let mut pairs = Vec::with_capacity(best_q + 1);
    let (mut i, mut j, mut q) = (ei, ej, best_q);
    loop {
        pairs.push((i, j));
        if q == 0 {
            break;
        }
        match step[idx(i, j, q)] {
            0 => {
                i -= 1;
                j -= 1;
            }
            1 => i -= 1,
            _ => j -= 1,
        }
        q -= 1;
    }
    pairs.reverse();
    DtwResult {
        cost,
        mean_cost: best_mean,
        path: Alignment { pairs },
    }
}

pub fn dtw_dissimilarity(t1: &Trajectory, t2: &Trajectory) -> Result<DtwResult> {
    Ok(dtw_from_distances(&local_distances(t1, t2)?))
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(Error::Validation(format!("gamma must be positive, got {gamma}")));
    }
    Ok(())
}

/// Local similarity used inside the alignment kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalKernel {
    /// `k = exp(-gamma d^2)`.
    #[default]
    Rbf,
    /// `k / (1 + k)`.
    Ratio,
}

impl LocalKernel {
    pub fn from_ratio_flag(use_ratio: bool) -> Self {
        if use_ratio {
            LocalKernel::Ratio
        } else {
            LocalKernel::Rbf
        }
    }

    /// `log k` for a squared distance `d2`.
    #[inline]
    pub fn log_value(self, d2: f64, gamma: f64) -> f64 {
        let log_k = -gamma * d2;
        match self {
            LocalKernel::Rbf => log_k,
            LocalKernel::Ratio => log_k - log_k.exp().ln_1p(),
        }
    }

    pub fn value(self, d2: f64, gamma: f64) -> f64 {
        self.log_value(d2, gamma).exp()
    }
}

#[inline]
fn log_sum_exp3(a: f64, b: f64, c: f64) -> f64 {
    let m = a.max(b).max(c);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp() + (c - m).exp()).ln()
}

/// `log K_GA` from a table of squared local distances.
pub fn gak_log_from_sq_distances(d2: &DMatrix<f64>, gamma: f64, local: LocalKernel) -> f64 {
    let (l1, l2) = d2.shape();
    // row-major (l1+1) x (l2+1), border = log 0 except the origin
    let cols = l2 + 1;
    let mut prev = vec![f64::NEG_INFINITY; cols];
    let mut cur = vec![f64::NEG_INFINITY; cols];
    prev[0] = 0.0;
    for i in 1..=l1 {
        cur[0] = f64::NEG_INFINITY;
        for j in 1..=l2 {
            let lk = local.log_value(d2[(i - 1, j - 1)], gamma);
            cur[j] = lk + log_sum_exp3(prev[j], cur[j - 1], prev[j - 1]);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[l2]
}

/// A global alignment kernel value held in log-space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GakScore {
    pub log_value: f64,
}

impl GakScore {
    /// `exp(log_value)`; `None` if that is not a positive finite `f64`.
    pub fn value(&self) -> Option<f64> {
        let v = self.log_value.exp();
        (v > 0.0 && v.is_finite()).then_some(v)
    }
}

fn sq_distances(t1: &Trajectory, t2: &Trajectory) -> DMatrix<f64> {
    DMatrix::from_fn(t1.len(), t2.len(), |i, j| {
        lerm_distance_sq_unchecked(&t1.points[i], &t2.points[j])
    })
}

pub fn gak_similarity(t1: &Trajectory, t2: &Trajectory, gamma: f64, use_ratio_kernel: bool) -> Result<GakScore> {
    check_gamma(gamma)?;
    same_dim(t1, t2)?;
    let local = LocalKernel::from_ratio_flag(use_ratio_kernel);
    Ok(GakScore {
        log_value: gak_log_from_sq_distances(&sq_distances(t1, t2), gamma, local),
    })
}

/// Squared local-distance tables for every pair in a trajectory set, so
/// that kernels for many `gamma` values share one pass of distance work.
#[derive(Debug, Clone)]
pub struct DistanceTables {
    n: usize,
    /// Upper triangle including the diagonal, row by row.
    tables: Vec<DMatrix<f64>>,
}

impl DistanceTables {
    pub fn new(trajectories: &[Trajectory]) -> Result<Self> {
        check_same_dims(trajectories)?;
        let n = trajectories.len();
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
        let tables = pairs
            .par_iter()
            .map(|&(i, j)| sq_distances(&trajectories[i], &trajectories[j]))
            .collect();
        Ok(DistanceTables { n, tables })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Table for `(i, j)` with `i <= j`.
    pub fn get(&self, i: usize, j: usize) -> &DMatrix<f64> {
        debug_assert!(i <= j);
        // row r of the upper triangle holds n - r tables
        let start = i * self.n - i * i.saturating_sub(1) / 2;
        &self.tables[start + (j - i)]
    }
}

fn check_same_dims(trajectories: &[Trajectory]) -> Result<()> {
    if let Some(first) = trajectories.first() {
        for t in trajectories {
            same_dim(first, t)?;
        }
    }
    Ok(())
}

/// Options for assembling a GAK Gram matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GakOptions {
    pub gamma: f64,
    pub local: LocalKernel,
    /// Replace `K_ij` with `K_ij / sqrt(K_ii K_jj)`.
    pub normalize: bool,
}

/// Log-domain GAK values between every pair of trajectories.
pub fn gak_log_gram(tables: &DistanceTables, gamma: f64, local: LocalKernel) -> Result<DMatrix<f64>> {
    check_gamma(gamma)?;
    Ok(fill_symmetric(tables.n(), |i, j| {
        gak_log_from_sq_distances(tables.get(i, j), gamma, local)
    }))
}

/// Turns a log-domain Gram into a [`KernelMatrix`].
///
/// With `normalize`, entries become `exp(log K_ij - (log K_ii + log K_jj)/2)`.
/// Otherwise, when any entry would leave the `f64` range, every entry is
/// shifted by `max log K` (a positive scalar rescaling, which keeps the
/// matrix PSD) and the shift is recorded in `log_offset`.
pub fn gak_kernel_from_log(log_k: &DMatrix<f64>, opts: &GakOptions) -> Result<KernelMatrix> {
    let n = log_k.nrows();
    let (values, offset) = if opts.normalize {
        let diag: Vec<f64> = (0..n).map(|i| log_k[(i, i)]).collect();
        (
            DMatrix::from_fn(n, n, |i, j| (log_k[(i, j)] - 0.5 * (diag[i] + diag[j])).exp()),
            None,
        )
    } else {
        let max = log_k.max();
        let min = log_k.min();
        const SAFE: f64 = 700.0;
        if max > SAFE || min < -SAFE {
            (log_k.map(|v| (v - max).exp()), Some(max))
        } else {
            (log_k.map(f64::exp), None)
        }
    };
    let mut k = KernelMatrix::new(values, KernelKind::Gak)?;
    k.gamma = Some(opts.gamma);
    k.log_offset = offset;
    k.validate_psd(1e-6)?;
    Ok(k)
}

/// GAK Gram matrix of a trajectory set. PSD is checked (tolerance 1e-6) and
/// the smallest eigenvalue recorded, but not enforced.
pub fn gak_gram(trajectories: &[Trajectory], gamma: f64, use_ratio_kernel: bool) -> Result<KernelMatrix> {
    gak_gram_with(trajectories, &GakOptions {
        gamma,
        local: LocalKernel::from_ratio_flag(use_ratio_kernel),
        normalize: false,
    })
}

pub fn gak_gram_with(trajectories: &[Trajectory], opts: &GakOptions) -> Result<KernelMatrix> {
    if trajectories.is_empty() {
        return Err(Error::Validation("empty trajectory set".into()));
    }
    let tables = DistanceTables::new(trajectories)?;
    let log_k = gak_log_gram(&tables, opts.gamma, opts.local)?;
    gak_kernel_from_log(&log_k, opts)
}

/// Log-domain GAK between queries (rows) and a training set (columns).
pub fn gak_log_cross(queries: &[Trajectory], train: &[Trajectory], gamma: f64, local: LocalKernel) -> Result<DMatrix<f64>> {
    check_gamma(gamma)?;
    check_same_dims(train)?;
    check_same_dims(queries)?;
    if let (Some(q), Some(t)) = (queries.first(), train.first()) {
        same_dim(q, t)?;
    }
    Ok(fill_dense(queries.len(), train.len(), |i, j| {
        gak_log_from_sq_distances(&sq_distances(&queries[i], &train[j]), gamma, local)
    }))
}

/// Proximity embedding `Gamma[q][j] = D_dtw(queries[q], train[j])`.
pub fn dtw_proximity_matrix(train: &[Trajectory], queries: &[Trajectory]) -> Result<DMatrix<f64>> {
    check_same_dims(train)?;
    check_same_dims(queries)?;
    if let (Some(q), Some(t)) = (queries.first(), train.first()) {
        same_dim(q, t)?;
    }
    Ok(fill_dense(queries.len(), train.len(), |i, j| {
        let dist = DMatrix::from_fn(queries[i].len(), train[j].len(), |a, b| {
            lerm_distance_sq_unchecked(&queries[i].points[a], &train[j].points[b]).sqrt()
        });
        dtw_from_distances(&dist).cost
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use std::f64::consts::E;

    fn scalar_traj(values: &[f64]) -> Trajectory {
        // 1x1 SPD points exp(v): log-distance is |v_a - v_b|
        let pts = values
            .iter()
            .map(|&v| SpdPoint::from_log(DMatrix::from_element(1, 1, v)).unwrap())
            .collect();
        Trajectory::from_points(pts, "t").unwrap()
    }

    #[test]
    fn build_and_mismatch() {
        let a = SpdPoint::new(DMatrix::identity(2, 2)).unwrap();
        let b = SpdPoint::new(DMatrix::identity(3, 3)).unwrap();
        assert!(Trajectory::from_points(vec![a.clone()], "x").is_ok());
        assert!(matches!(
            Trajectory::from_points(vec![a, b], "x"),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(Trajectory::from_points(vec![], "x").is_err());
    }

    #[test]
    fn resampling() {
        let t = scalar_traj(&(0..30).map(f64::from).collect::<Vec<_>>());
        let same = resample_trajectory(&t, 30).unwrap();
        for (a, b) in same.points().iter().zip(t.points()) {
            assert!(Arc::ptr_eq(a, b));
        }
        let one = scalar_traj(&[1.5]);
        let r = resample_trajectory(&one, 7).unwrap();
        assert_eq!(r.len(), 7);
        assert!(r.points().iter().all(|p| Arc::ptr_eq(p, &one.points()[0])));
        let single = resample_trajectory(&t, 1).unwrap();
        assert!(Arc::ptr_eq(&single.points()[0], &t.points()[0]));
    }

    #[test]
    fn sixty_to_thirty_follows_index_formula() {
        let t = scalar_traj(&(0..60).map(f64::from).collect::<Vec<_>>());
        let r = resample_trajectory(&t, 30).unwrap();
        for k in 0..30 {
            let expected = (k as f64 * 59.0 / 29.0).round() as usize;
            assert!(Arc::ptr_eq(&r.points()[k], &t.points()[expected]));
        }
        assert!(Arc::ptr_eq(&r.points()[29], &t.points()[59]));
    }

    #[test]
    fn alignment_validation() {
        let ok = Alignment { pairs: vec![(0, 0), (1, 1), (1, 2)] };
        assert!(ok.validate(2, 3).is_ok());
        let jump = Alignment { pairs: vec![(0, 0), (2, 2)] };
        assert!(jump.validate(3, 3).is_err());
        let stall = Alignment { pairs: vec![(0, 0), (0, 0), (1, 1)] };
        assert!(stall.validate(2, 2).is_err());
        let short = Alignment { pairs: vec![(0, 0), (1, 1)] };
        assert!(short.validate(3, 2).is_err());
        assert_eq!(ok.to_json(), "[[1,1],[2,2],[2,3]]");
    }

    #[test]
    fn enumeration_counts() {
        assert_eq!(enumerate_alignments(1, 1).unwrap().len(), 1);
        assert_eq!(enumerate_alignments(2, 2).unwrap().len(), 3);
        assert_eq!(enumerate_alignments(3, 3).unwrap().len(), 13);
        assert_eq!(enumerate_alignments(1, 5).unwrap().len(), 1);
        assert!(enumerate_alignments(8, 7).is_err());
        for a in enumerate_alignments(3, 4).unwrap() {
            a.validate(3, 4).unwrap();
        }
    }

    #[test]
    fn dtw_trivial_cases() {
        let t = scalar_traj(&[0.0, 0.5, 2.0, 1.0]);
        let r = dtw_dissimilarity(&t, &t).unwrap();
        assert_eq!(r.cost, 0.0);
        let a = scalar_traj(&[0.3]);
        let b = scalar_traj(&[1.0]);
        let r = dtw_dissimilarity(&a, &b).unwrap();
        assert!((r.cost - 0.7).abs() < 1e-15);
        assert_eq!(r.path.pairs, vec![(0, 0)]);
    }

    #[test]
    fn dtw_finds_zero_cost_warp() {
        let a = scalar_traj(&[0.0, 0.0, 3.0]);
        let b = scalar_traj(&[0.0, 3.0, 3.0]);
        let r = dtw_dissimilarity(&a, &b).unwrap();
        assert_eq!(r.cost, 0.0);
        assert_eq!(r.path.pairs, vec![(0, 0), (1, 0), (2, 1), (2, 2)]);
    }

    #[test]
    fn gak_single_and_two_point_closed_forms() {
        let a = scalar_traj(&[0.0]);
        let b = scalar_traj(&[0.8]);
        let g = gak_similarity(&a, &b, 0.5, false).unwrap();
        assert!((g.value().unwrap() - (-0.5f64 * 0.64).exp()).abs() < 1e-15);

        let x = scalar_traj(&[0.0, 1.0]);
        let y = scalar_traj(&[0.5, 2.0]);
        let k = |u: f64, v: f64| (-0.7 * (u - v) * (u - v)).exp();
        let expected = k(0.0, 0.5) * k(1.0, 2.0) * (1.0 + k(1.0, 0.5) + k(0.0, 2.0));
        let g = gak_similarity(&x, &y, 0.7, false).unwrap().value().unwrap();
        assert!((g - expected).abs() < 1e-14 * expected);
    }

    #[test]
    fn ratio_local_kernel() {
        let d2: f64 = 0.3;
        let k = (-2.0 * d2).exp();
        assert!((LocalKernel::Ratio.value(d2, 2.0) - k / (1.0 + k)).abs() < 1e-15);
        assert_eq!(LocalKernel::Rbf.value(0.0, 1.0), 1.0);
        assert!((LocalKernel::Rbf.value(1.0, 1.0) - 1.0 / E).abs() < 1e-15);
    }

    #[test]
    fn gak_survives_underflow() {
        let a = scalar_traj(&vec![0.0; 30]);
        let b = scalar_traj(&vec![40.0; 30]);
        let g = gak_similarity(&a, &b, 1.0, false).unwrap();
        assert!(g.log_value.is_finite());
        assert!(g.log_value < -40_000.0);
        assert!(g.value().is_none());
    }

    #[test]
    fn distance_table_indexing() {
        let ts: Vec<_> = (0..5).map(|i| scalar_traj(&[i as f64, 2.0 * i as f64])).collect();
        let tables = DistanceTables::new(&ts).unwrap();
        for i in 0..5 {
            for j in i..5 {
                assert_eq!(*tables.get(i, j), sq_distances(&ts[i], &ts[j]));
            }
        }
    }

    #[test]
    fn gak_gram_of_one_and_duplicates() {
        let t = scalar_traj(&[0.0, 0.4, 1.0]);
        let k = gak_gram(&[t.clone()], 1.0, false).unwrap();
        assert_eq!(k.n(), 1);
        assert!(k.values[(0, 0)] > 0.0);
        let k = gak_gram(&[t.clone(), t], 1.0, false).unwrap();
        assert_eq!(k.values[(0, 0)], k.values[(1, 1)]);
        assert_eq!(k.values[(0, 0)], k.values[(0, 1)]);
        assert_eq!(k.kind, KernelKind::Gak);
    }

    #[test]
    fn gak_gram_shift_when_out_of_range() {
        let ts: Vec<_> = (0..3).map(|i| scalar_traj(&vec![i as f64 * 30.0; 25])).collect();
        let k = gak_gram(&ts, 1.0, false).unwrap();
        assert!(k.log_offset.is_some());
        assert!(k.values.iter().all(|v| v.is_finite()));
        assert!((k.values.max() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn normalized_gak_has_unit_diagonal() {
        let ts: Vec<_> = (0..4).map(|i| scalar_traj(&[0.1 * i as f64, 0.3, 0.2 * i as f64])).collect();
        let k = gak_gram_with(&ts, &GakOptions {
            gamma: 0.5,
            local: LocalKernel::Rbf,
            normalize: true,
        })
        .unwrap();
        for i in 0..4 {
            assert!((k.values[(i, i)] - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn proximity_self_entries_are_zero() {
        let ts: Vec<_> = (0..3).map(|i| scalar_traj(&[i as f64, 1.0, 0.5 * i as f64])).collect();
        let g = dtw_proximity_matrix(&ts, &ts).unwrap();
        for i in 0..3 {
            assert_eq!(g[(i, i)], 0.0);
        }
        let row = dtw_proximity_matrix(&ts, &ts[1..2]).unwrap();
        assert_eq!(row.row(0), g.row(1));
    }
}
