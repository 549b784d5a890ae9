//! Covariance descriptors of feature tensors, globally and per facial region.

use std::sync::OnceLock;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::spdcore::{self, SpdPoint, SymEig};
use crate::tensorio::{FeatureTensor, RegionMask};

/// Default diagonal loading added to every descriptor.
pub const DEFAULT_EPSILON: f64 = 1e-4;

/// Maps an input-image pixel onto the feature-map grid.
///
/// Coordinates are scaled by the map/image size ratio, rounded half away from
/// zero and clamped into the grid.
pub fn map_pixel(x: u32, y: u32, image_w: u32, image_h: u32, map_w: usize, map_h: usize) -> (usize, usize) {
    let mx = (x as f64 * map_w as f64 / image_w as f64).round() as usize;
    let my = (y as f64 * map_h as f64 / image_h as f64).round() as usize;
    (mx.min(map_w - 1), my.min(map_h - 1))
}

/// Distinct feature-map cells hit by a mask, in order of first hit.
pub fn mapped_cells(mask: &RegionMask, map_w: usize, map_h: usize) -> Vec<(usize, usize)> {
    let mut seen = vec![false; map_w * map_h];
    let mut cells = Vec::new();
    for &[x, y] in &mask.pixels {
        let (cx, cy) = map_pixel(x, y, mask.image_w, mask.image_h, map_w, map_h);
        let idx = cy * map_w + cx;
        if !seen[idx] {
            seen[idx] = true;
            cells.push((cx, cy));
        }
    }
    cells
}

/// The `m x r'` observation matrix of a region: one column per distinct
/// mapped cell.
pub fn extract_region_features(t: &FeatureTensor, mask: &RegionMask) -> Result<DMatrix<f64>> {
    mask.validate()?;
    if (mask.image_w as usize) < t.w() || (mask.image_h as usize) < t.h() {
        return Err(Error::Validation(format!(
            "mask `{}` image {}x{} is smaller than the {}x{} feature maps",
            mask.region_id,
            mask.image_w,
            mask.image_h,
            t.w(),
            t.h()
        )));
    }
    let cells = mapped_cells(mask, t.w(), t.h());
    if cells.len() < 2 {
        return Err(Error::DegenerateRegion {
            region: mask.region_id.clone(),
            cells: cells.len(),
        });
    }
    let mut obs = DMatrix::zeros(t.m(), cells.len());
    for (c, &(x, y)) in cells.iter().enumerate() {
        for (k, v) in t.cell(x, y).enumerate() {
            obs[(k, c)] = v;
        }
    }
    Ok(obs)
}

/// A regularized covariance matrix of `m`-dimensional observations.
#[derive(Debug, Clone)]
pub struct CovDescriptor {
    matrix: DMatrix<f64>,
    epsilon: f64,
    n_obs: usize,
    pub region_id: Option<String>,
    spectrum: OnceLock<SymEig>,
}

impl PartialEq for CovDescriptor {
    fn eq(&self, other: &Self) -> bool {
        self.matrix == other.matrix
            && self.epsilon == other.epsilon
            && self.n_obs == other.n_obs
            && self.region_id == other.region_id
    }
}

impl CovDescriptor {
    /// Wraps an existing symmetric matrix (e.g. one read back from disk).
    pub fn from_matrix(matrix: DMatrix<f64>, epsilon: f64, n_obs: usize) -> Result<Self> {
        if spdcore::asymmetry(&matrix) > 1e-12 * matrix.amax().max(1.0) {
            return Err(Error::NotSymmetric(spdcore::asymmetry(&matrix)));
        }
        Ok(CovDescriptor {
            matrix,
            epsilon,
            n_obs,
            region_id: None,
            spectrum: OnceLock::new(),
        })
    }

    pub fn with_region(mut self, region_id: impl Into<String>) -> Self {
        self.region_id = Some(region_id.into());
        self
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    fn spectrum(&self) -> Result<&SymEig> {
        if let Some(s) = self.spectrum.get() {
            return Ok(s);
        }
        let eig = spdcore::sym_eig(&self.matrix)?;
        Ok(self.spectrum.get_or_init(|| eig))
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(self.spectrum()?.values[0])
    }

    /// `false` when the smallest eigenvalue is not strictly positive, which
    /// can only happen with `epsilon = 0`.
    pub fn is_positive_definite(&self) -> Result<bool> {
        let s = self.spectrum()?;
        let n = s.values.len();
        Ok(s.values[0] > spdcore::SINGULARITY_RATIO * s.values[n - 1].max(0.0) && s.values[0] > 0.0)
    }

    /// The matrix logarithm, computed from the cached eigendecomposition.
    pub fn log_matrix(&self) -> Result<DMatrix<f64>> {
        let s = self.spectrum()?;
        let n = s.values.len();
        let min = s.values[0];
        let threshold = spdcore::SINGULARITY_RATIO * s.values[n - 1].max(0.0);
        if min <= threshold || min <= 0.0 {
            return Err(Error::NearSingular { min, threshold });
        }
        Ok(s.map(f64::ln))
    }

    pub fn to_spd_point(&self) -> Result<SpdPoint> {
        let log = self.log_matrix()?;
        Ok(SpdPoint::from_parts(self.matrix.clone(), log))
    }
}

/// `C = 1/(n-1) sum (v_i - mu)(v_i - mu)^T + eps I`, accumulated in two passes.
pub fn compute_covariance(obs: &DMatrix<f64>, epsilon: f64) -> Result<CovDescriptor> {
    let (m, n) = obs.shape();
    if n < 2 {
        return Err(Error::Validation(format!("covariance needs at least 2 observations, got {n}")));
    }
    if m == 0 {
        return Err(Error::Validation("observations have zero dimension".into()));
    }
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::Validation(format!("epsilon must be finite and >= 0, got {epsilon}")));
    }
    if obs.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("non-finite observation".into()));
    }
    let mean = obs.column_mean();
    let mut centered = obs.clone();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    let mut c = &centered * centered.transpose();
    c /= (n - 1) as f64;
    let mut c = spdcore::symmetrize(&c);
    for i in 0..m {
        c[(i, i)] += epsilon;
    }
    CovDescriptor::from_matrix(c, epsilon, n)
}

/// Global descriptor plus one local descriptor per mask.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorSet {
    pub global: CovDescriptor,
    pub locals: Vec<CovDescriptor>,
}

pub fn descriptor_set(t: &FeatureTensor, masks: &[RegionMask], epsilon: f64) -> Result<DescriptorSet> {
    let global = compute_covariance(&t.observations(), epsilon)?.with_region("global");
    let locals = masks
        .iter()
        .map(|mask| {
            let obs = extract_region_features(t, mask)?;
            Ok(compute_covariance(&obs, epsilon)?.with_region(mask.region_id.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DescriptorSet { global, locals })
}
