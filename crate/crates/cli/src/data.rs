//! Manifest loading: frames to per-channel SPD points.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use spdtraj::align::resample_index;
use spdtraj::covdesc::{compute_covariance, extract_region_features};
use spdtraj::spdcore::SpdPoint;
use spdtraj::tensorio::{read_mask, read_tensor, DatasetManifest, ManifestEntry, RegionMask};
use spdtraj::{Error, Result};

use crate::config::{Mode, RunConfig};

pub const GLOBAL: &str = "global";

#[derive(Debug, Clone)]
pub struct Sample {
    pub sample_id: String,
    pub subject_id: String,
    /// Index into the class list; `None` for labels the model has not seen.
    pub label: Option<usize>,
    /// `points[channel][k]`: peak frames (static) or the resampled
    /// trajectory (dynamic).
    pub points: Vec<Vec<Arc<SpdPoint>>>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub classes: Vec<String>,
    pub channels: Vec<String>,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn labels(&self) -> Result<Vec<usize>> {
        self.samples
            .iter()
            .map(|s| {
                s.label
                    .ok_or_else(|| Error::Validation(format!("sample `{}` has no known label", s.sample_id)))
            })
            .collect()
    }

    pub fn subjects(&self) -> Vec<&str> {
        self.samples.iter().map(|s| s.subject_id.as_str()).collect()
    }
}

fn entry_masks(entry: &ManifestEntry) -> Result<BTreeMap<String, RegionMask>> {
    let mut out = BTreeMap::new();
    for p in &entry.masks {
        let mask = read_mask(p)?;
        if out.insert(mask.region_id.clone(), mask).is_some() {
            return Err(Error::Manifest(format!(
                "sample `{}`: two masks share a region id",
                entry.sample_id
            )));
        }
    }
    Ok(out)
}

/// Region ids in the order their mask files are listed for the first entry.
fn region_order(entry: &ManifestEntry) -> Result<Vec<String>> {
    entry.masks.iter().map(|p| Ok(read_mask(p)?.region_id)).collect()
}

/// Expands `"all"` and checks every requested channel exists.
pub fn resolve_channels(requested: &[String], manifest: &DatasetManifest) -> Result<Vec<String>> {
    let regions = match manifest.entries.first() {
        Some(e) => region_order(e)?,
        None => Vec::new(),
    };
    let mut out = Vec::new();
    for ch in requested {
        if ch == "all" {
            out.push(GLOBAL.to_string());
            out.extend(regions.iter().cloned());
        } else {
            out.push(ch.clone());
        }
    }
    let mut seen = std::collections::HashSet::new();
    out.retain(|c| seen.insert(c.clone()));
    Ok(out)
}

/// Frame indices used for one sample.
pub fn frame_selection(n_frames: usize, config: &RunConfig) -> Vec<usize> {
    match config.mode {
        Mode::Static => {
            let k = config.peak_frames.min(n_frames);
            (n_frames - k..n_frames).collect()
        }
        Mode::Dynamic => (0..config.l_target)
            .map(|k| resample_index(k, n_frames, config.l_target))
            .collect(),
    }
}

fn load_sample(entry: &ManifestEntry, classes: &[String], channels: &[String], config: &RunConfig) -> Result<Sample> {
    let masks = entry_masks(entry)?;
    for ch in channels {
        if ch != GLOBAL && !masks.contains_key(ch) {
            return Err(Error::Validation(format!(
                "channel mismatch: sample `{}` has no mask for channel `{ch}`",
                entry.sample_id
            )));
        }
    }
    let selection = frame_selection(entry.frames.len(), config);
    let mut cache: HashMap<usize, Vec<Arc<SpdPoint>>> = HashMap::new();
    for &f in &selection {
        if cache.contains_key(&f) {
            continue;
        }
        let tensor = read_tensor(&entry.frames[f])?;
        let per_channel = channels
            .iter()
            .map(|ch| {
                let obs = if ch == GLOBAL {
                    tensor.observations()
                } else {
                    extract_region_features(&tensor, &masks[ch])?
                };
                let desc = compute_covariance(&obs, config.epsilon)?;
                Ok(Arc::new(desc.to_spd_point()?))
            })
            .collect::<Result<Vec<_>>>()?;
        cache.insert(f, per_channel);
    }
    let points = (0..channels.len())
        .map(|c| selection.iter().map(|f| Arc::clone(&cache[f][c])).collect())
        .collect();
    Ok(Sample {
        sample_id: entry.sample_id.clone(),
        subject_id: entry.subject_id.clone(),
        label: classes.iter().position(|l| *l == entry.label),
        points,
    })
}

/// Loads every sample of `manifest` for the given channels.
pub fn load_dataset(manifest: &DatasetManifest, classes: &[String], channels: &[String], config: &RunConfig) -> Result<Dataset> {
    let samples = manifest
        .entries
        .par_iter()
        .map(|e| load_sample(e, classes, channels, config))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        classes: classes.to_vec(),
        channels: channels.to_vec(),
        samples,
    })
}

pub fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_selection_rules() {
        let st = RunConfig::default();
        assert_eq!(frame_selection(10, &st), vec![7, 8, 9]);
        assert_eq!(frame_selection(2, &st), vec![0, 1]);
        let dy = RunConfig {
            mode: Mode::Dynamic,
            l_target: 4,
            ..Default::default()
        };
        assert_eq!(frame_selection(7, &dy), vec![0, 2, 4, 6]);
        assert_eq!(frame_selection(2, &dy).len(), 4);
    }
}
