//! Class-structured synthetic feature tensors.
//!
//! Each class owns a direction in the space of symmetric matrices. A sample of
//! class `c` is a sequence of frames whose channel covariance follows
//! `exp(B + U_s + tau(t) * separation * D_c)`, where `B` is a shared base,
//! `U_s` a per-subject offset and `tau` a per-sample monotone time warp. The
//! class signal therefore lives entirely in second-order statistics; frame
//! means are random and carry none.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::spdcore::{matrix_exp, symmetrize};
use crate::tensorio::manifest::{write_manifest, DatasetManifest, ManifestEntry};
use crate::tensorio::mask::{write_mask, RegionMask, STANDARD_REGIONS};
use crate::tensorio::{write_tensor, Dtype, FeatureTensor};

const BASE_SCALE: f64 = 0.3;
const SUBJECT_SCALE: f64 = 0.4;
const FRAME_NOISE: f64 = 0.05;
/// Pixels per feature-map cell in the virtual input image used for masks.
const MASK_STRIDE: u32 = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub classes: usize,
    pub samples_per_class: usize,
    pub m: usize,
    pub w: usize,
    pub h: usize,
    pub frames: usize,
    pub separation: f64,
    pub seed: u64,
    /// Also emit the four standard region masks.
    pub with_masks: bool,
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("classes", self.classes),
            ("samples_per_class", self.samples_per_class),
            ("m", self.m),
            ("w", self.w),
            ("h", self.h),
            ("frames", self.frames),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Validation(format!("synth: {name} must be >= 1")));
            }
        }
        if self.w * self.h < 2 {
            return Err(Error::Validation("synth: need at least 2 cells per map".into()));
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return Err(Error::Validation(format!(
                "synth: separation must be finite and >= 0, got {}",
                self.separation
            )));
        }
        if self.with_masks && (self.w < 2 || self.h < 4) {
            return Err(Error::Validation("synth: region masks need maps of at least 2x4 cells".into()));
        }
        Ok(())
    }
}

/// Generator parameters of one class: the log-space displacement reached at
/// the end of a sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassPath {
    pub class: usize,
    pub endpoint: DMatrix<f64>,
}

fn random_symmetric(rng: &mut ChaCha8Rng, m: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(m, m, |_, _| rng.sample::<f64, _>(StandardNormal));
    symmetrize(&g)
}

fn unit_frobenius(a: DMatrix<f64>) -> DMatrix<f64> {
    let n = a.norm();
    if n > 0.0 {
        a / n
    } else {
        a
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

struct Shared {
    base: DMatrix<f64>,
    paths: Vec<ClassPath>,
}

fn shared_parameters(p: &SynthParams) -> Shared {
    let mut rng = stream_rng(p.seed, 0);
    let base = unit_frobenius(random_symmetric(&mut rng, p.m)) * (BASE_SCALE * (p.m as f64).sqrt());
    let paths = (0..p.classes)
        .map(|class| ClassPath {
            class,
            endpoint: unit_frobenius(random_symmetric(&mut rng, p.m)) * p.separation,
        })
        .collect();
    Shared { base, paths }
}

/// Per-class generator parameters; identical across classes iff `separation == 0`.
pub fn class_paths(p: &SynthParams) -> Result<Vec<ClassPath>> {
    p.validate()?;
    Ok(shared_parameters(p).paths)
}

fn subject_offset(p: &SynthParams, subject: usize) -> DMatrix<f64> {
    let mut rng = stream_rng(p.seed, 1 << 32 | subject as u64);
    unit_frobenius(random_symmetric(&mut rng, p.m)) * SUBJECT_SCALE
}

/// The four standard regions laid out on a `16w x 16h` virtual image.
pub fn standard_masks(w: usize, h: usize) -> Result<Vec<RegionMask>> {
    let s = MASK_STRIDE;
    let (w, h) = (w as u32, h as u32);
    let (iw, ih) = (w * s, h * s);
    let half_w = w.div_ceil(2);
    let rects = [
        (0, 0, w, h / 2),
        (w / 4, h / 2, (3 * w).div_ceil(4).max(w / 4 + 2), h),
        (0, h / 4, half_w, (3 * h).div_ceil(4)),
        (w - half_w, h / 4, w, (3 * h).div_ceil(4)),
    ];
    STANDARD_REGIONS
        .iter()
        .zip(rects)
        .map(|(name, (x0, y0, x1, y1))| {
            // cell (cx, cy) covers pixels mapping to it: [cx*s - s/2, cx*s + s/2)
            let px0 = (x0 * s).saturating_sub(s / 2);
            let py0 = (y0 * s).saturating_sub(s / 2);
            let px1 = (x1.min(w) * s).saturating_sub(s / 2).min(iw);
            let py1 = (y1.min(h) * s).saturating_sub(s / 2).min(ih);
            RegionMask::rect(*name, iw, ih, px0, py0, px1, py1)
        })
        .collect()
}

/// Time warp exponent range; `tau(t) = t^p`.
const WARP: (f64, f64) = (0.6, 1.6);

fn sample_frames(p: &SynthParams, shared: &Shared, class: usize, subject: usize, index: usize) -> Result<Vec<FeatureTensor>> {
    let mut rng = stream_rng(p.seed, 1 + index as u64);
    let warp: f64 = rng.gen_range(WARP.0..WARP.1);
    let offset = subject_offset(p, subject);
    let n = p.w * p.h;
    let mut frames = Vec::with_capacity(p.frames);
    for f in 0..p.frames {
        let t = if p.frames > 1 { f as f64 / (p.frames - 1) as f64 } else { 1.0 };
        let tau = t.powf(warp);
        let noise = random_symmetric(&mut rng, p.m) * FRAME_NOISE;
        let log_cov = &shared.base + &offset + &shared.paths[class].endpoint * tau + noise;
        let sqrt_cov = matrix_exp(&(log_cov * 0.5))?;
        let mean: Vec<f64> = (0..p.m).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let z = DMatrix::from_fn(p.m, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let obs = sqrt_cov * z;
        let t = FeatureTensor::from_fn(p.m, p.w, p.h, |k, x, y| obs[(k, y * p.w + x)] + mean[k])?
            .with_dtype(Dtype::F32);
        frames.push(t);
    }
    Ok(frames)
}

/// Writes `manifest.json`, `tensors/*.spdt` and (optionally) `masks/*.json`
/// under `out_dir`. Output is a pure function of `params`.
pub fn synth_generate(params: &SynthParams, out_dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    params.validate()?;
    let out_dir = out_dir.as_ref();
    let tensor_dir = out_dir.join("tensors");
    fs::create_dir_all(&tensor_dir).map_err(|e| Error::io(&tensor_dir, e))?;

    let mut mask_paths = Vec::new();
    if params.with_masks {
        let mask_dir = out_dir.join("masks");
        fs::create_dir_all(&mask_dir).map_err(|e| Error::io(&mask_dir, e))?;
        for mask in standard_masks(params.w, params.h)? {
            let path = mask_dir.join(format!("{}.json", mask.region_id));
            write_mask(&mask, &path)?;
            mask_paths.push(path);
        }
    }

    let shared = shared_parameters(params);
    let total = params.classes * params.samples_per_class;
    let entries = (0..total)
        .into_par_iter()
        .map(|index| {
            let class = index / params.samples_per_class;
            let within = index % params.samples_per_class;
            let subject = within;
            let sample_id = format!("c{class:02}_s{within:03}");
            let frames = sample_frames(params, &shared, class, subject, index)?;
            let mut paths = Vec::with_capacity(frames.len());
            for (f, t) in frames.iter().enumerate() {
                let path = tensor_dir.join(format!("{sample_id}_f{f:03}.spdt"));
                write_tensor(t, &path)?;
                paths.push(path);
            }
            Ok(ManifestEntry {
                sample_id,
                subject_id: format!("subj{subject:03}"),
                label: format!("class{class}"),
                frames: paths,
                masks: mask_paths.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let manifest = DatasetManifest {
        label_set: (0..params.classes).map(|c| format!("class{c}")).collect(),
        entries,
    };
    manifest.validate()?;
    write_manifest(&manifest, out_dir.join("manifest.json"))?;
    Ok(manifest)
}
