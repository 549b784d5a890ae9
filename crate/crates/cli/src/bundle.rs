//! Trained model bundles: `bundle.json` plus the training descriptors as
//! SPDT files (one per sample and channel, one map per SPD point).

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use spdtraj::spdcore::SpdPoint;
use spdtraj::tensorio::{read_tensor, write_tensor, Dtype, FeatureTensor};
use spdtraj::{Error, Result};

use crate::config::RunConfig;
use crate::data::{io_err, Dataset, Sample};
use crate::pipeline::{Choice, Trained};

pub const BUNDLE_FILE: &str = "bundle.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSample {
    pub sample_id: String,
    pub subject_id: String,
    pub label: String,
    /// One file per channel, relative to the bundle directory.
    pub files: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bundle {
    pub config: RunConfig,
    pub classes: Vec<String>,
    pub channels: Vec<String>,
    pub hyperparameters: Choice,
    /// Log shift per channel for unnormalized GAK kernels.
    pub gak_offsets: Vec<Option<f64>>,
    pub trained: Trained,
    pub train: Vec<TrainSample>,
}

fn points_to_tensor(points: &[Arc<SpdPoint>]) -> Result<FeatureTensor> {
    let d = points[0].dim();
    Ok(FeatureTensor::from_fn(points.len(), d, d, |k, x, y| points[k].matrix()[(y, x)])?.with_dtype(Dtype::F64))
}

fn tensor_to_points(t: &FeatureTensor) -> Result<Vec<Arc<SpdPoint>>> {
    if t.w() != t.h() {
        return Err(Error::Validation(format!("descriptor file holds {}x{} maps, expected square", t.w(), t.h())));
    }
    (0..t.m())
        .map(|k| Ok(Arc::new(SpdPoint::new(DMatrix::from_fn(t.h(), t.w(), |y, x| t.get(k, x, y)))?)))
        .collect()
}

/// Writes `points` (one channel of one sample) as an SPDT descriptor file.
pub fn write_points(points: &[Arc<SpdPoint>], path: &Path) -> Result<()> {
    write_tensor(&points_to_tensor(points)?, path)
}

pub fn read_points(path: &Path) -> Result<Vec<Arc<SpdPoint>>> {
    tensor_to_points(&read_tensor(path)?)
}

/// File-name-safe rendering of an id.
pub fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

impl Bundle {
    pub fn save(
        dir: &Path,
        config: &RunConfig,
        ds: &Dataset,
        hyperparameters: Choice,
        gak_offsets: Vec<Option<f64>>,
        trained: Trained,
    ) -> Result<Bundle> {
        let train_dir = dir.join("train");
        fs::create_dir_all(&train_dir).map_err(|e| io_err(&train_dir, e))?;
        let mut train = Vec::with_capacity(ds.samples.len());
        for s in &ds.samples {
            let mut files = Vec::with_capacity(ds.channels.len());
            for (c, ch) in ds.channels.iter().enumerate() {
                let rel = PathBuf::from("train").join(format!("{}.{}.spdt", file_stem(&s.sample_id), file_stem(ch)));
                write_points(&s.points[c], &dir.join(&rel))?;
                files.push(rel);
            }
            let label = s
                .label
                .map(|l| ds.classes[l].clone())
                .ok_or_else(|| Error::Validation(format!("training sample `{}` has no label", s.sample_id)))?;
            train.push(TrainSample {
                sample_id: s.sample_id.clone(),
                subject_id: s.subject_id.clone(),
                label,
                files,
            });
        }
        let bundle = Bundle {
            config: config.clone(),
            classes: ds.classes.clone(),
            channels: ds.channels.clone(),
            hyperparameters,
            gak_offsets,
            trained,
            train,
        };
        let path = dir.join(BUNDLE_FILE);
        let text = serde_json::to_string_pretty(&bundle)? + "\n";
        fs::write(&path, text).map_err(|e| io_err(&path, e))?;
        Ok(bundle)
    }

    pub fn load(dir: &Path) -> Result<(Bundle, Dataset)> {
        let path = dir.join(BUNDLE_FILE);
        let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        let bundle: Bundle = serde_json::from_str(&text)?;
        let samples = bundle
            .train
            .iter()
            .map(|t| {
                if t.files.len() != bundle.channels.len() {
                    return Err(Error::Validation(format!(
                        "bundle sample `{}` lists {} files for {} channels",
                        t.sample_id,
                        t.files.len(),
                        bundle.channels.len()
                    )));
                }
                Ok(Sample {
                    sample_id: t.sample_id.clone(),
                    subject_id: t.subject_id.clone(),
                    label: bundle.classes.iter().position(|c| *c == t.label),
                    points: t.files.iter().map(|f| read_points(&dir.join(f))).collect::<Result<_>>()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let ds = Dataset {
            classes: bundle.classes.clone(),
            channels: bundle.channels.clone(),
            samples,
        };
        Ok((bundle, ds))
    }
}
