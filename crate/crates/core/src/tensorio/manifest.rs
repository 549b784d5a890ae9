use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub sample_id: String,
    pub subject_id: String,
    pub label: String,
    /// Tensor files in temporal order; a still image has one frame.
    pub frames: Vec<PathBuf>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub masks: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub label_set: Vec<String>,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.label_set.iter().position(|l| l == label)
    }

    /// Class index of every entry, in entry order.
    pub fn label_indices(&self) -> Result<Vec<usize>> {
        self.entries
            .iter()
            .map(|e| {
                self.label_index(&e.label)
                    .ok_or_else(|| Error::Manifest(format!("sample `{}`: unknown label `{}`", e.sample_id, e.label)))
            })
            .collect()
    }

    /// Checks every structural invariant. File existence is checked
    /// separately by [`DatasetManifest::check_files`].
    pub fn validate(&self) -> Result<()> {
        let mut labels = HashSet::new();
        for l in &self.label_set {
            if !labels.insert(l.as_str()) {
                return Err(Error::Manifest(format!("duplicate label `{l}` in label_set")));
            }
        }
        let mut ids = HashSet::new();
        for e in &self.entries {
            if e.sample_id.is_empty() {
                return Err(Error::Manifest("entry with empty sample_id".into()));
            }
            if !ids.insert(e.sample_id.as_str()) {
                return Err(Error::Manifest(format!("duplicate sample_id `{}`", e.sample_id)));
            }
            if e.subject_id.is_empty() {
                return Err(Error::Manifest(format!("sample `{}`: missing subject_id", e.sample_id)));
            }
            if !labels.contains(e.label.as_str()) {
                return Err(Error::Manifest(format!(
                    "sample `{}`: label `{}` not in label_set",
                    e.sample_id, e.label
                )));
            }
            if e.frames.is_empty() {
                return Err(Error::Manifest(format!("sample `{}`: no frames", e.sample_id)));
            }
            let mut paths = HashSet::new();
            for p in e.frames.iter().chain(&e.masks) {
                if !paths.insert(p) {
                    return Err(Error::Manifest(format!(
                        "sample `{}`: path {} listed twice",
                        e.sample_id,
                        p.display()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn check_files(&self) -> Result<()> {
        for e in &self.entries {
            for p in e.frames.iter().chain(&e.masks) {
                if !p.is_file() {
                    return Err(Error::Manifest(format!(
                        "sample `{}`: missing file {}",
                        e.sample_id,
                        p.display()
                    )));
                }
            }
        }
        Ok(())
    }

    fn resolve_against(&mut self, dir: &Path) {
        for e in &mut self.entries {
            for p in e.frames.iter_mut().chain(e.masks.iter_mut()) {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
    }
}

/// Reads a JSON (or `.csv`) manifest, resolving relative paths against the
/// manifest's directory and validating eagerly.
pub fn read_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut manifest = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        parse_csv(&text, path)?
    } else {
        serde_json::from_str(&text)?
    };
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    manifest.resolve_against(dir);
    manifest.validate()?;
    manifest.check_files()?;
    Ok(manifest)
}

/// Writes the manifest as pretty JSON. Paths under the manifest's directory
/// are stored relative to it.
pub fn write_manifest(manifest: &DatasetManifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let dir = path.parent().unwrap_or_else(|| Path::new(""));
    let mut out = manifest.clone();
    for e in &mut out.entries {
        for p in e.frames.iter_mut().chain(e.masks.iter_mut()) {
            if let Ok(rel) = p.strip_prefix(dir) {
                *p = rel.to_path_buf();
            }
        }
    }
    let text = serde_json::to_string_pretty(&out)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// CSV layout: `sample_id,subject_id,label,frames,masks` where `frames` and
/// `masks` are `;`-separated path lists. The label set is the labels in order
/// of first appearance.
fn parse_csv(text: &str, path: &Path) -> Result<DatasetManifest> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let err = |e: csv::Error| Error::Manifest(format!("{}: {e}", path.display()));
    let headers = reader.headers().map_err(err)?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (Some(ci), Some(cs), Some(cl), Some(cf)) = (col("sample_id"), col("subject_id"), col("label"), col("frames")) else {
        return Err(Error::Manifest(format!(
            "{}: header must contain sample_id, subject_id, label, frames",
            path.display()
        )));
    };
    let cm = col("masks");
    let split = |s: &str| -> Vec<PathBuf> {
        s.split(';').map(str::trim).filter(|p| !p.is_empty()).map(PathBuf::from).collect()
    };
    let mut manifest = DatasetManifest {
        label_set: Vec::new(),
        entries: Vec::new(),
    };
    for record in reader.records() {
        let r = record.map_err(err)?;
        let get = |i: usize| r.get(i).unwrap_or("").to_string();
        let label = get(cl);
        if !manifest.label_set.contains(&label) {
            manifest.label_set.push(label.clone());
        }
        manifest.entries.push(ManifestEntry {
            sample_id: get(ci),
            subject_id: get(cs),
            label,
            frames: split(&get(cf)),
            masks: cm.map(|c| split(&get(c))).unwrap_or_default(),
        });
    }
    Ok(manifest)
}
