//! Pipelines behind the `spdtraj` command-line tool.

pub mod bundle;
pub mod config;
pub mod data;
pub mod pipeline;
pub mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use spdtraj::covdesc::{compute_covariance, extract_region_features};
use spdtraj::spdcore::{check_psd, write_matrix_csv, PsdReport};
use spdtraj::svm::ScoreVector;
use spdtraj::tensorio::{read_manifest, read_mask, read_tensor, synth_generate, DatasetManifest, SynthParams};
use spdtraj::{Error, Result};

use bundle::{file_stem, write_points, Bundle};
use config::{AlignmentMethod, Mode, RunConfig};
use data::{io_err, load_dataset, resolve_channels, Dataset, GLOBAL};
use pipeline::{aggregate, cross_kernels, cross_validate, score_units, Kernels, Problem};
use report::{confusion_matrix, trace, EvalReport, FoldReport, PredictionRecord, Timing};

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).map_err(|e| io_err(path, e))
}

pub fn cmd_synth(params: &SynthParams, out: &Path) -> Result<DatasetManifest> {
    synth_generate(params, out)
}

/// Writes one descriptor file per sample and channel: every frame's
/// covariance descriptor, stacked as the maps of an SPDT file.
pub fn cmd_cov(manifest_path: &Path, out: &Path, config: &RunConfig) -> Result<Vec<PathBuf>> {
    let manifest = read_manifest(manifest_path)?;
    let channels = resolve_channels(&config.channels, &manifest)?;
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let mut written = Vec::new();
    for entry in &manifest.entries {
        let masks = entry.masks.iter().map(read_mask).collect::<Result<Vec<_>>>()?;
        let tensors = entry.frames.iter().map(read_tensor).collect::<Result<Vec<_>>>()?;
        for ch in &channels {
            let mask = if ch == GLOBAL {
                None
            } else {
                Some(masks.iter().find(|m| m.region_id == *ch).ok_or_else(|| {
                    Error::Validation(format!("channel mismatch: sample `{}` has no mask `{ch}`", entry.sample_id))
                })?)
            };
            let points = tensors
                .iter()
                .map(|t| {
                    let obs = match mask {
                        None => t.observations(),
                        Some(m) => extract_region_features(t, m)?,
                    };
                    Ok(std::sync::Arc::new(compute_covariance(&obs, config.epsilon)?.to_spd_point()?))
                })
                .collect::<Result<Vec<_>>>()?;
            let path = out.join(format!("{}.{}.spdt", file_stem(&entry.sample_id), file_stem(ch)));
            write_points(&points, &path)?;
            written.push(path);
        }
    }
    Ok(written)
}

fn kernel_name(config: &RunConfig) -> &'static str {
    match (config.mode, config.alignment) {
        (Mode::Static, _) => "static_rbf",
        (Mode::Dynamic, AlignmentMethod::Gak) => "gak",
        (Mode::Dynamic, AlignmentMethod::DtwPpf) => "dtw_ppf",
    }
}

fn enum_name(v: &impl Serialize) -> String {
    serde_json::to_value(v)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

fn load_training_set(config: &RunConfig, manifest_path: &Path) -> Result<Dataset> {
    let manifest = read_manifest(manifest_path)?;
    let classes = manifest.label_set.clone();
    let channels = resolve_channels(&config.channels, &manifest)?;
    let ds = load_dataset(&manifest, &classes, &channels, config)?;
    let labels = ds.labels()?;
    let present: std::collections::BTreeSet<usize> = labels.iter().copied().collect();
    if present.len() < 2 {
        return Err(Error::Validation("training needs samples from at least 2 classes".into()));
    }
    if let Some(c) = (0..classes.len()).find(|c| !present.contains(c)) {
        return Err(Error::Validation(format!("class `{}` has no samples", classes[c])));
    }
    Ok(ds)
}

/// Cross-validated evaluation plus a final model written to `out`.
/// Writes `out/bundle.json`, `out/train/*.spdt` and `out/report.json`.
pub fn cmd_train(config: &RunConfig, manifest_path: &Path, out: &Path) -> Result<EvalReport> {
    let start = Instant::now();
    let config = config.clone().validated()?;
    let ds = load_training_set(&config, manifest_path)?;
    let problem = Problem::build(&ds, &config)?;
    let subjects = ds.subjects();
    let cv = cross_validate(&problem, &subjects, config.folds, config.inner_folds)?;

    let mut predicted = vec![usize::MAX; ds.samples.len()];
    let folds = cv
        .folds
        .iter()
        .enumerate()
        .map(|(k, f)| {
            let mut correct = 0;
            for (&v, s) in f.test.iter().zip(&f.scores) {
                predicted[v] = s.argmax();
                correct += usize::from(predicted[v] == problem.labels[v]);
            }
            let mut test_subjects: Vec<String> = f.test.iter().map(|&v| subjects[v].to_string()).collect();
            test_subjects.sort();
            test_subjects.dedup();
            FoldReport {
                fold: k,
                test_subjects,
                n_test: f.test.len(),
                correct,
                accuracy: correct as f64 / f.test.len().max(1) as f64,
                hyperparameters: f.choice.clone(),
            }
        })
        .collect();
    let confusion = confusion_matrix(ds.classes.len(), &problem.labels, &predicted);
    let predictions = ds
        .samples
        .iter()
        .zip(&predicted)
        .map(|(s, &p)| PredictionRecord {
            sample_id: s.sample_id.clone(),
            subject_id: s.subject_id.clone(),
            true_label: ds.classes[s.label.expect("labels checked")].clone(),
            predicted: ds.classes[p].clone(),
        })
        .collect();

    let gak_offsets = match &problem.kernels {
        Kernels::Grams(_) => problem.gak_offsets[cv.final_choice.gamma_index].clone(),
        Kernels::Proximity(_) => vec![None; ds.channels.len()],
    };
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    // invocation paths are not part of the model
    let model_config = RunConfig {
        manifest: None,
        out: None,
        ..config.clone()
    };
    Bundle::save(out, &model_config, &ds, cv.final_choice.clone(), gak_offsets, cv.trained.clone())?;

    let n = ds.samples.len();
    let report = EvalReport {
        mode: enum_name(&config.mode),
        kernel: kernel_name(&config).to_string(),
        fusion: enum_name(&problem.strategy),
        channels: ds.channels.clone(),
        classes: ds.classes.clone(),
        folds,
        overall_accuracy: trace(&confusion) as f64 / n as f64,
        confusion,
        predictions,
        final_hyperparameters: cv.final_choice,
        timing: config.timing.then(|| Timing {
            total_ms: start.elapsed().as_millis(),
        }),
    };
    write_json(&out.join("report.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub sample_id: String,
    pub predicted: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub true_label: Option<String>,
    pub scores: ScoreVector,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionOutput {
    pub classes: Vec<String>,
    pub predictions: Vec<Prediction>,
    /// Accuracy over samples whose label the model knows.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
}

fn check_dims(train: &Dataset, test: &Dataset) -> Result<()> {
    let dim = |ds: &Dataset, c: usize| ds.samples.first().and_then(|s| s.points[c].first()).map(|p| p.dim());
    for c in 0..train.channels.len() {
        if let (Some(a), Some(b)) = (dim(train, c), dim(test, c)) {
            if a != b {
                return Err(Error::Validation(format!(
                    "channel `{}`: model descriptors are {a}x{a}, manifest gives {b}x{b}",
                    train.channels[c]
                )));
            }
        }
    }
    Ok(())
}

pub fn cmd_predict(bundle_dir: &Path, manifest_path: &Path) -> Result<PredictionOutput> {
    let (bundle, train) = Bundle::load(bundle_dir)?;
    let manifest = read_manifest(manifest_path)?;
    let test = load_dataset(&manifest, &bundle.classes, &bundle.channels, &bundle.config)?;
    if test.samples.is_empty() {
        return Ok(PredictionOutput {
            classes: bundle.classes,
            predictions: Vec::new(),
            accuracy: None,
        });
    }
    check_dims(&train, &test)?;
    let h = &bundle.hyperparameters;
    let (k_test, groups) = cross_kernels(&bundle.config, &train, &test, h.gamma, &bundle.gak_offsets)?;
    let units = score_units(bundle.config.effective_fusion(), &bundle.trained, &h.beta, &k_test)?;
    let scores = aggregate(&units, &groups)?;
    let predictions: Vec<Prediction> = test
        .samples
        .iter()
        .zip(scores)
        .map(|(s, sc)| Prediction {
            sample_id: s.sample_id.clone(),
            predicted: bundle.classes[sc.argmax()].clone(),
            true_label: manifest
                .entries
                .iter()
                .find(|e| e.sample_id == s.sample_id)
                .map(|e| e.label.clone()),
            scores: sc,
        })
        .collect();
    let known: Vec<&Prediction> = predictions
        .iter()
        .filter(|p| p.true_label.as_ref().is_some_and(|l| bundle.classes.contains(l)))
        .collect();
    let accuracy = (!known.is_empty()).then(|| {
        known.iter().filter(|p| p.true_label.as_deref() == Some(p.predicted.as_str())).count() as f64 / known.len() as f64
    });
    Ok(PredictionOutput {
        classes: bundle.classes,
        predictions,
        accuracy,
    })
}

/// Reads eval reports, writes the combined confusion CSV, returns the summary.
pub fn cmd_report(files: &[PathBuf], csv_out: Option<&Path>) -> Result<String> {
    let reports = files.iter().map(|f| EvalReport::read(f)).collect::<Result<Vec<_>>>()?;
    let (classes, m) = report::combine(&reports)?;
    if let Some(path) = csv_out {
        fs::write(path, report::confusion_csv(&classes, &m)).map_err(|e| io_err(path, e))?;
    }
    Ok(report::summary(&classes, &m))
}

/// Exports one channel's Gram (or DTW proximity) matrix over a manifest.
pub fn cmd_gram(config: &RunConfig, manifest_path: &Path, channel: &str, gamma: Option<f64>, out: &Path) -> Result<Option<PsdReport>> {
    let mut config = config.clone();
    config.channels = vec![channel.to_string()];
    if let Some(g) = gamma {
        config.gamma_grid = vec![g];
    }
    config.gamma_grid.truncate(1);
    let config = config.validated()?;
    let manifest = read_manifest(manifest_path)?;
    let classes = manifest.label_set.clone();
    let ds = load_dataset(&manifest, &classes, &config.channels, &config)?;
    let problem = Problem::build(&ds, &config)?;
    let (matrix, psd) = match &problem.kernels {
        Kernels::Grams(g) => (g[0][0].clone(), Some(check_psd(&g[0][0], 1e-6)?)),
        Kernels::Proximity(p) => (p[0].clone(), None),
    };
    let mut buf = Vec::new();
    write_matrix_csv(&matrix, &mut buf).map_err(|e| io_err(out, e))?;
    fs::write(out, buf).map_err(|e| io_err(out, e))?;
    Ok(psd)
}

pub fn write_predictions(out: Option<&Path>, p: &PredictionOutput) -> Result<String> {
    let text = serde_json::to_string_pretty(p)? + "\n";
    if let Some(path) = out {
        fs::write(path, &text).map_err(|e| io_err(path, e))?;
    }
    Ok(text)
}
