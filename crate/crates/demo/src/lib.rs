//! Browser demo: 2x2 SPD matrices drawn as ellipses, their log-Euclidean
//! distance and kernel, DTW and GAK between two ellipse trajectories, and a
//! GAK Gram matrix over a small procedural family.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::Serialize;
use spdtraj::align::{dtw_dissimilarity, gak_gram_with, gak_similarity, local_distances, GakOptions, LocalKernel, Trajectory};
use spdtraj::spdcore::{check_psd, lerm_distance, rbf_kernel, sym_eigenvalues, SpdPoint};
use wasm_bindgen::prelude::*;

/// `[a, b, c]` for the symmetric matrix `[[a, b], [b, c]]`.
pub type Sym2 = [f64; 3];

fn to_matrix(s: &Sym2) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[s[0], s[1], s[1], s[2]])
}

fn from_matrix(m: &DMatrix<f64>) -> Sym2 {
    [m[(0, 0)], m[(0, 1)], m[(1, 1)]]
}

fn point(s: &Sym2) -> Result<SpdPoint, String> {
    SpdPoint::new(to_matrix(s)).map_err(|e| e.to_string())
}

/// `R(angle) diag(stretch, 1/stretch) R(angle)^T`, scaled by `size`.
pub fn ellipse(angle: f64, stretch: f64, size: f64) -> Sym2 {
    let (s, c) = angle.sin_cos();
    let (l1, l2) = (size * stretch, size / stretch);
    [c * c * l1 + s * s * l2, c * s * (l1 - l2), s * s * l1 + c * c * l2]
}

#[derive(Debug, Clone, Serialize)]
pub struct PairResult {
    pub distance: f64,
    pub kernel: f64,
    pub log_p: Sym2,
    pub log_q: Sym2,
    pub eig_p: Vec<f64>,
    pub eig_q: Vec<f64>,
}

pub fn compare_pair(p: &Sym2, q: &Sym2, gamma: f64) -> Result<PairResult, String> {
    let (a, b) = (point(p)?, point(q)?);
    Ok(PairResult {
        distance: lerm_distance(&a, &b).map_err(|e| e.to_string())?,
        kernel: rbf_kernel(&a, &b, gamma).map_err(|e| e.to_string())?,
        log_p: from_matrix(a.log_matrix()),
        log_q: from_matrix(b.log_matrix()),
        eig_p: sym_eigenvalues(a.matrix()).map_err(|e| e.to_string())?,
        eig_q: sym_eigenvalues(b.matrix()).map_err(|e| e.to_string())?,
    })
}

fn trajectory(flat: &[f64], id: &str) -> Result<Trajectory, String> {
    if flat.is_empty() || flat.len() % 3 != 0 {
        return Err(format!("trajectory needs a multiple of 3 values, got {}", flat.len()));
    }
    let pts = flat
        .chunks(3)
        .map(|c| point(&[c[0], c[1], c[2]]))
        .collect::<Result<Vec<_>, _>>()?;
    Trajectory::from_points(pts, id).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Serialize)]
pub struct AlignResult {
    /// `distances[i][j]`, LERM distance between frame i of the first and j of the second.
    pub distances: Vec<Vec<f64>>,
    pub path: Vec<(usize, usize)>,
    pub cost: f64,
    pub mean_cost: f64,
    pub gak_log: f64,
    pub gak_normalized: f64,
}

/// DTW and GAK between two trajectories given as flat `[a, b, c]` triples.
pub fn align(t1: &[f64], t2: &[f64], gamma: f64, ratio: bool) -> Result<AlignResult, String> {
    let (a, b) = (trajectory(t1, "first")?, trajectory(t2, "second")?);
    let d = local_distances(&a, &b).map_err(|e| e.to_string())?;
    let dtw = dtw_dissimilarity(&a, &b).map_err(|e| e.to_string())?;
    let gak = |x: &Trajectory, y: &Trajectory| gak_similarity(x, y, gamma, ratio).map(|s| s.log_value).map_err(|e| e.to_string());
    let ab = gak(&a, &b)?;
    let norm = (ab - 0.5 * (gak(&a, &a)? + gak(&b, &b)?)).exp();
    Ok(AlignResult {
        distances: d.row_iter().map(|r| r.iter().copied().collect()).collect(),
        path: dtw.path.pairs,
        cost: dtw.cost,
        mean_cost: dtw.mean_cost,
        gak_log: ab,
        gak_normalized: norm,
    })
}

/// Sample `i` of class `c`: an ellipse that rotates (class 0), counter-rotates
/// (class 1) or pulses (class 2), with per-sample speed and phase.
pub fn family_member(class: usize, i: usize, len: usize) -> Vec<f64> {
    let phase = 0.37 * i as f64;
    let speed = 1.0 + 0.15 * ((i * 7 % 5) as f64 - 2.0) / 2.0;
    (0..len)
        .flat_map(|k| {
            let t = speed * k as f64 / len.max(2) as f64;
            let s = match class % 3 {
                0 => ellipse(phase + PI * t, 2.0, 1.0),
                1 => ellipse(phase - PI * t, 2.0, 1.0),
                _ => ellipse(phase, 1.2 + 0.8 * (2.0 * PI * t).sin().abs(), 1.0 + 0.5 * t),
            };
            s.into_iter()
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct GramResult {
    pub labels: Vec<usize>,
    pub gram: Vec<Vec<f64>>,
    pub min_eig: f64,
    pub max_abs_eig: f64,
    pub psd: bool,
}

pub fn gram(per_class: usize, len: usize, gamma: f64, ratio: bool, normalize: bool) -> Result<GramResult, String> {
    if per_class == 0 || len == 0 {
        return Err("need at least one sample of length >= 1".into());
    }
    let mut labels = Vec::new();
    let mut trajs = Vec::new();
    for c in 0..3 {
        for i in 0..per_class {
            labels.push(c);
            trajs.push(trajectory(&family_member(c, i, len), &format!("c{c}s{i}"))?);
        }
    }
    let opts = GakOptions {
        gamma,
        local: if ratio { LocalKernel::Ratio } else { LocalKernel::Rbf },
        normalize,
    };
    let k = gak_gram_with(&trajs, &opts).map_err(|e| e.to_string())?;
    let psd = check_psd(&k.values, 1e-6).map_err(|e| e.to_string())?;
    Ok(GramResult {
        labels,
        gram: k.values.row_iter().map(|r| r.iter().copied().collect()).collect(),
        min_eig: psd.min_eig,
        max_abs_eig: psd.max_abs_eig,
        psd: psd.passed,
    })
}

fn json(v: Result<impl Serialize, String>) -> Result<String, JsError> {
    let v = v.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))
}

fn sym2(v: &[f64]) -> Result<Sym2, String> {
    <[f64; 3]>::try_from(v).map_err(|_| format!("expected 3 values, got {}", v.len()))
}

#[wasm_bindgen(js_name = ellipse)]
pub fn ellipse_js(angle: f64, stretch: f64, size: f64) -> Vec<f64> {
    ellipse(angle, stretch, size).to_vec()
}

#[wasm_bindgen(js_name = comparePair)]
pub fn compare_pair_js(p: &[f64], q: &[f64], gamma: f64) -> Result<String, JsError> {
    json(sym2(p).and_then(|p| sym2(q).and_then(|q| compare_pair(&p, &q, gamma))))
}

#[wasm_bindgen(js_name = familyMember)]
pub fn family_member_js(class: usize, i: usize, len: usize) -> Vec<f64> {
    family_member(class, i, len)
}

#[wasm_bindgen(js_name = align)]
pub fn align_js(t1: &[f64], t2: &[f64], gamma: f64, ratio: bool) -> Result<String, JsError> {
    json(align(t1, t2, gamma, ratio))
}

#[wasm_bindgen(js_name = gram)]
pub fn gram_js(per_class: usize, len: usize, gamma: f64, ratio: bool, normalize: bool) -> Result<String, JsError> {
    json(gram(per_class, len, gamma, ratio, normalize))
}
