//! Kernels, nested cross-validation and grid search shared by the static and
//! dynamic training commands.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use spdtraj::align::{
    dtw_proximity_matrix, gak_kernel_from_log, gak_log_cross, gak_log_gram, gak_similarity, DistanceTables, GakOptions,
    LocalKernel, Trajectory,
};
use spdtraj::cv::{subject_folds, train_indices};
use spdtraj::fusion::{
    kernel_weighted_sum, late_product, late_weighted_sum, simplex_grid, vectorize_symmetric, weighted_sum_matrices,
    FusionStrategy,
};
use spdtraj::spdcore::{fill_dense, fill_symmetric, KernelKind, KernelMatrix};
use spdtraj::svm::{ScoreVector, SvmModel};
use spdtraj::{Error, ErrorClass, Result};

use crate::config::{AlignmentMethod, Mode, RunConfig, StaticScoring};
use crate::data::Dataset;

/// Static-mode features: `feats[channel][video][frame]`, either a log
/// matrix or (for feature concatenation) a single column vector.
#[derive(Debug, Clone)]
pub struct StaticFeatures {
    feats: Vec<Vec<Vec<DMatrix<f64>>>>,
    scoring: StaticScoring,
}

impl StaticFeatures {
    pub fn new(ds: &Dataset, config: &RunConfig) -> Self {
        let per_channel = |c: usize| -> Vec<Vec<DMatrix<f64>>> {
            ds.samples
                .iter()
                .map(|s| s.points[c].iter().map(|p| p.log_matrix().clone()).collect())
                .collect()
        };
        let feats = if config.fusion == FusionStrategy::FeatureConcat {
            let concat = ds
                .samples
                .iter()
                .map(|s| {
                    (0..s.points[0].len())
                        .map(|f| {
                            let v: Vec<f64> = s.points.iter().flat_map(|ch| vectorize_symmetric(ch[f].log_matrix())).collect();
                            DMatrix::from_vec(v.len(), 1, v)
                        })
                        .collect()
                })
                .collect();
            vec![concat]
        } else {
            (0..ds.channels.len()).map(per_channel).collect()
        };
        StaticFeatures {
            feats,
            scoring: config.static_scoring,
        }
    }

    pub fn channels(&self) -> usize {
        self.feats.len()
    }

    /// `(video, frame)` for every unit, in unit order.
    fn units(&self) -> Vec<(usize, usize)> {
        let videos = self.feats.first().map_or(&[][..], |c| c.as_slice());
        match self.scoring {
            StaticScoring::PerFrame => videos
                .iter()
                .enumerate()
                .flat_map(|(v, frames)| (0..frames.len()).map(move |f| (v, f)))
                .collect(),
            StaticScoring::VideoMean => (0..videos.len()).map(|v| (v, 0)).collect(),
        }
    }

    pub fn video_units(&self) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = vec![Vec::new(); self.feats.first().map_or(0, Vec::len)];
        for (u, (v, _)) in self.units().into_iter().enumerate() {
            out[v].push(u);
        }
        out
    }

    fn sq_dist(&self, ch: usize, a: (usize, usize), other: &StaticFeatures, b: (usize, usize)) -> f64 {
        match self.scoring {
            StaticScoring::PerFrame => (&self.feats[ch][a.0][a.1] - &other.feats[ch][b.0][b.1]).norm_squared(),
            StaticScoring::VideoMean => {
                // frames are paired from the end
                let fa = &self.feats[ch][a.0];
                let fb = &other.feats[ch][b.0];
                let k = fa.len().min(fb.len());
                let mean = (0..k)
                    .map(|i| (&fa[fa.len() - 1 - i] - &fb[fb.len() - 1 - i]).norm())
                    .sum::<f64>()
                    / k as f64;
                mean * mean
            }
        }
    }

    fn self_sq(&self, ch: usize) -> DMatrix<f64> {
        let units = self.units();
        fill_symmetric(units.len(), |i, j| self.sq_dist(ch, units[i], self, units[j]))
    }

    /// Squared distances, rows = units of `self`, columns = units of `train`.
    fn cross_sq(&self, train: &StaticFeatures, ch: usize) -> DMatrix<f64> {
        let q = self.units();
        let t = train.units();
        fill_dense(q.len(), t.len(), |i, j| self.sq_dist(ch, q[i], train, t[j]))
    }
}

/// Dynamic-mode trajectories, `trajs[channel][video]`.
#[derive(Debug, Clone)]
pub struct DynamicFeatures {
    trajs: Vec<Vec<Trajectory>>,
}

impl DynamicFeatures {
    pub fn new(ds: &Dataset) -> Result<Self> {
        let trajs = (0..ds.channels.len())
            .map(|c| {
                ds.samples
                    .iter()
                    .map(|s| Trajectory::new(s.points[c].clone(), s.sample_id.clone()))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(DynamicFeatures { trajs })
    }

    pub fn channels(&self) -> usize {
        self.trajs.len()
    }

    pub fn videos(&self) -> usize {
        self.trajs.first().map_or(0, Vec::len)
    }
}

fn gak_options(config: &RunConfig, gamma: f64) -> GakOptions {
    GakOptions {
        gamma,
        local: config.gak_local,
        normalize: config.gak_normalize,
    }
}

/// Per-channel kernels over all units.
#[derive(Debug, Clone)]
pub enum Kernels {
    /// `grams[gamma][channel]`.
    Grams(Vec<Vec<DMatrix<f64>>>),
    /// DTW proximity matrix per channel (`videos x videos`).
    Proximity(Vec<DMatrix<f64>>),
}

/// Everything grid search and cross-validation need.
#[derive(Debug, Clone)]
pub struct Problem {
    pub classes: Vec<String>,
    pub labels: Vec<usize>,
    pub video_units: Vec<Vec<usize>>,
    pub unit_labels: Vec<usize>,
    pub gammas: Vec<Option<f64>>,
    pub kernels: Kernels,
    pub kind: KernelKind,
    pub strategy: FusionStrategy,
    pub betas: Vec<Vec<f64>>,
    pub c_grid: Vec<f64>,
    /// Scalar log shifts applied to unnormalized GAK Grams, `[gamma][channel]`.
    pub gak_offsets: Vec<Vec<Option<f64>>>,
}

pub fn weight_candidates(strategy: FusionStrategy, channels: usize, config: &RunConfig) -> Result<Vec<Vec<f64>>> {
    if let (Some(w), true) = (&config.weights, strategy.uses_weights()) {
        if w.len() != channels {
            return Err(Error::Validation(format!("{} weights given for {channels} channels", w.len())));
        }
        return Ok(vec![w.clone()]);
    }
    let step = config.beta_step;
    if strategy.uses_weights() && channels > 1 {
        simplex_grid(channels, step)
    } else {
        Ok(vec![vec![1.0 / channels as f64; channels]])
    }
}

fn unit_labels(labels: &[usize], video_units: &[Vec<usize>]) -> Vec<usize> {
    let n = video_units.iter().map(Vec::len).sum();
    let mut out = vec![0; n];
    for (v, units) in video_units.iter().enumerate() {
        for &u in units {
            out[u] = labels[v];
        }
    }
    out
}

impl Problem {
    pub fn build(ds: &Dataset, config: &RunConfig) -> Result<Problem> {
        let labels = ds.labels()?;
        let strategy = config.effective_fusion();
        let c_grid = config.c_grid.clone();
        match config.mode {
            Mode::Static => {
                let feats = StaticFeatures::new(ds, config);
                let video_units = feats.video_units();
                let sq: Vec<DMatrix<f64>> = (0..feats.channels()).into_par_iter().map(|c| feats.self_sq(c)).collect();
                let grams = config
                    .gamma_grid
                    .iter()
                    .map(|&g| sq.iter().map(|d| d.map(|v| (-g * v).exp())).collect())
                    .collect();
                Ok(Problem {
                    classes: ds.classes.clone(),
                    unit_labels: unit_labels(&labels, &video_units),
                    labels,
                    video_units,
                    gammas: config.gamma_grid.iter().map(|&g| Some(g)).collect(),
                    kernels: Kernels::Grams(grams),
                    kind: KernelKind::StaticRbf,
                    strategy,
                    betas: weight_candidates(strategy, feats.channels(), config)?,
                    c_grid,
                    gak_offsets: vec![vec![None; feats.channels()]; config.gamma_grid.len()],
                })
            }
            Mode::Dynamic => {
                let feats = DynamicFeatures::new(ds)?;
                let video_units: Vec<Vec<usize>> = (0..feats.videos()).map(|v| vec![v]).collect();
                let channels = feats.channels();
                let betas = weight_candidates(FusionStrategy::KernelWeightedSum, channels, config)?;
                let base = Problem {
                    classes: ds.classes.clone(),
                    unit_labels: labels.clone(),
                    labels,
                    video_units,
                    gammas: vec![None],
                    kernels: Kernels::Proximity(Vec::new()),
                    kind: KernelKind::PpfLinear,
                    strategy: FusionStrategy::KernelWeightedSum,
                    betas,
                    c_grid,
                    gak_offsets: vec![vec![None; channels]],
                };
                match config.alignment {
                    AlignmentMethod::DtwPpf => {
                        let prox = feats
                            .trajs
                            .iter()
                            .map(|t| dtw_proximity_matrix(t, t))
                            .collect::<Result<Vec<_>>>()?;
                        Ok(Problem {
                            kernels: Kernels::Proximity(prox),
                            ..base
                        })
                    }
                    AlignmentMethod::Gak => {
                        let tables = feats
                            .trajs
                            .iter()
                            .map(|t| DistanceTables::new(t))
                            .collect::<Result<Vec<_>>>()?;
                        let mut grams = Vec::new();
                        let mut offsets = Vec::new();
                        for &g in &config.gamma_grid {
                            let opts = gak_options(config, g);
                            let per_channel = tables
                                .iter()
                                .map(|t| gak_kernel_from_log(&gak_log_gram(t, g, config.gak_local)?, &opts))
                                .collect::<Result<Vec<_>>>()?;
                            offsets.push(per_channel.iter().map(|k| k.log_offset).collect());
                            grams.push(per_channel.into_iter().map(|k| k.values).collect());
                        }
                        Ok(Problem {
                            kernels: Kernels::Grams(grams),
                            kind: KernelKind::Gak,
                            gammas: config.gamma_grid.iter().map(|&g| Some(g)).collect(),
                            gak_offsets: offsets,
                            ..base
                        })
                    }
                }
            }
        }
    }

    pub fn n_videos(&self) -> usize {
        self.labels.len()
    }

    fn units_of(&self, videos: &[usize]) -> Vec<usize> {
        videos.iter().flat_map(|&v| self.video_units[v].iter().copied()).collect()
    }

    /// Per-channel train Gram and test cross-kernel.
    fn split(&self, g: usize, train_units: &[usize], test_units: &[usize]) -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
        match &self.kernels {
            Kernels::Grams(grams) => grams[g]
                .iter()
                .map(|k| {
                    let tr = k.select_rows(train_units).select_columns(train_units);
                    let te = k.select_rows(test_units).select_columns(train_units);
                    (tr, te)
                })
                .unzip(),
            Kernels::Proximity(prox) => prox
                .iter()
                .map(|p| {
                    let gamma_tr = p.select_rows(train_units).select_columns(train_units);
                    let gamma_te = p.select_rows(test_units).select_columns(train_units);
                    ppf_kernels(&gamma_tr, &gamma_te)
                })
                .unzip(),
        }
    }

    /// Fits on `train` videos and returns per-video scores for `test`.
    pub fn fit_score(&self, g: usize, c: f64, beta: &[f64], train: &[usize], test: &[usize]) -> Result<Vec<ScoreVector>> {
        let tr_units = self.units_of(train);
        let te_units = self.units_of(test);
        let (k_tr, k_te) = self.split(g, &tr_units, &te_units);
        let y: Vec<usize> = tr_units.iter().map(|&u| self.unit_labels[u]).collect();
        let trained = train_models(self.strategy, self.kind, &k_tr, &y, &self.classes, c, beta)?;
        let unit_scores = score_units(self.strategy, &trained, beta, &k_te)?;
        aggregate(&unit_scores, &self.local_groups(test))
    }

    /// Unit positions (within the concatenated test units) of each test video.
    fn local_groups(&self, videos: &[usize]) -> Vec<Vec<usize>> {
        let mut next = 0;
        videos
            .iter()
            .map(|&v| {
                let k = self.video_units[v].len();
                let g = (next..next + k).collect();
                next += k;
                g
            })
            .collect()
    }

    /// Per-channel unit scores on `test` for late fusion.
    fn channel_scores(&self, g: usize, c: f64, train: &[usize], test: &[usize]) -> Result<Vec<Vec<ScoreVector>>> {
        let tr_units = self.units_of(train);
        let te_units = self.units_of(test);
        let (k_tr, k_te) = self.split(g, &tr_units, &te_units);
        let y: Vec<usize> = tr_units.iter().map(|&u| self.unit_labels[u]).collect();
        k_tr.iter()
            .zip(&k_te)
            .map(|(tr, te)| {
                let k = KernelMatrix::new(tr.clone(), self.kind)?;
                SvmModel::train(&k, &y, &self.classes, c)?.decision_scores(te)
            })
            .collect()
    }

    fn correct(&self, scores: &[ScoreVector], videos: &[usize]) -> usize {
        scores
            .iter()
            .zip(videos)
            .filter(|(s, &v)| s.argmax() == self.labels[v])
            .count()
    }

    /// Exhaustive (gamma, C, beta) search by pooled cross-validated accuracy.
    /// Ties go to the smallest gamma, then smallest C, then the
    /// lexicographically smallest beta.
    pub fn grid_search(&self, folds: &[Vec<usize>], all: &[usize]) -> Result<Choice> {
        let total: usize = folds.iter().map(Vec::len).sum();
        let trains: Vec<Vec<usize>> = folds.iter().map(|f| complement(all, f)).collect();
        let pairs: Vec<(usize, usize)> = (0..self.gammas.len())
            .flat_map(|g| (0..self.c_grid.len()).map(move |c| (g, c)))
            .collect();
        let mut rows: Vec<(usize, usize, usize, f64)> = Vec::new();
        if self.strategy.is_late() {
            let per_pair = pairs
                .par_iter()
                .map(|&(g, ci)| -> Result<Vec<(usize, usize, usize, f64)>> {
                    let c = self.c_grid[ci];
                    let fold_scores: Vec<Vec<Vec<ScoreVector>>> =
                        match folds.iter().zip(&trains).map(|(f, tr)| self.channel_scores(g, c, tr, f)).collect() {
                            Ok(s) => s,
                            Err(e) if e.class() == ErrorClass::Numeric => {
                                return Ok((0..self.betas.len()).map(|b| (g, ci, b, -1.0)).collect())
                            }
                            Err(e) => return Err(e),
                        };
                    (0..self.betas.len())
                        .map(|b| {
                            let mut correct = 0;
                            for (f, scores) in folds.iter().zip(&fold_scores) {
                                let fused = fuse_late(self.strategy, scores, &self.betas[b])?;
                                let video = aggregate(&fused, &self.local_groups(f))?;
                                correct += self.correct(&video, f);
                            }
                            Ok((g, ci, b, correct as f64 / total as f64))
                        })
                        .collect()
                })
                .collect::<Result<Vec<_>>>()?;
            rows.extend(per_pair.into_iter().flatten());
        } else {
            let triples: Vec<(usize, usize, usize)> = pairs
                .iter()
                .flat_map(|&(g, c)| (0..self.betas.len()).map(move |b| (g, c, b)))
                .collect();
            rows = triples
                .par_iter()
                .map(|&(g, ci, b)| {
                    let mut correct = 0;
                    for (f, tr) in folds.iter().zip(&trains) {
                        match self.fit_score(g, self.c_grid[ci], &self.betas[b], tr, f) {
                            Ok(s) => correct += self.correct(&s, f),
                            Err(e) if e.class() == ErrorClass::Numeric => return Ok((g, ci, b, -1.0)),
                            Err(e) => return Err(e),
                        }
                    }
                    Ok((g, ci, b, correct as f64 / total as f64))
                })
                .collect::<Result<Vec<_>>>()?;
        }
        let mut best: Option<(usize, usize, usize, f64)> = None;
        for r in rows {
            if best.is_none_or(|b| r.3 > b.3) {
                best = Some(r);
            }
        }
        let (g, ci, b, accuracy) = best.ok_or_else(|| Error::Validation("empty hyperparameter grid".into()))?;
        if accuracy < 0.0 {
            return Err(Error::Numeric(
                "every grid candidate failed (kernel not PSD or SVM did not converge)".into(),
            ));
        }
        Ok(Choice {
            gamma_index: g,
            gamma: self.gammas[g],
            c: self.c_grid[ci],
            beta: self.betas[b].clone(),
            inner_accuracy: Some(accuracy),
        })
    }

    pub fn grid_size(&self) -> usize {
        self.gammas.len() * self.c_grid.len() * self.betas.len()
    }

    fn only_candidate(&self) -> Choice {
        Choice {
            gamma_index: 0,
            gamma: self.gammas[0],
            c: self.c_grid[0],
            beta: self.betas[0].clone(),
            inner_accuracy: None,
        }
    }

    /// Trains the final models on every video with the given hyperparameters.
    pub fn train_all(&self, choice: &Choice) -> Result<Trained> {
        let all: Vec<usize> = (0..self.n_videos()).collect();
        let units = self.units_of(&all);
        let (k_tr, _) = self.split(choice.gamma_index, &units, &[]);
        let y: Vec<usize> = units.iter().map(|&u| self.unit_labels[u]).collect();
        train_models(self.strategy, self.kind, &k_tr, &y, &self.classes, choice.c, &choice.beta)
    }
}

fn complement(all: &[usize], test: &[usize]) -> Vec<usize> {
    let t: BTreeSet<usize> = test.iter().copied().collect();
    all.iter().copied().filter(|v| !t.contains(v)).collect()
}

/// `(Gamma_tr Gamma_tr^T, Gamma_te Gamma_tr^T)`.
pub fn ppf_kernels(gamma_tr: &DMatrix<f64>, gamma_te: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let tr = fill_symmetric(gamma_tr.nrows(), |i, j| gamma_tr.row(i).dot(&gamma_tr.row(j)));
    let te = gamma_te * gamma_tr.transpose();
    (tr, te)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Choice {
    #[serde(skip)]
    pub gamma_index: usize,
    pub gamma: Option<f64>,
    pub c: f64,
    pub beta: Vec<f64>,
    /// `None` when the grid has a single candidate and no search ran.
    pub inner_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Trained {
    Fused { model: SvmModel },
    PerChannel { models: Vec<SvmModel> },
}

pub fn train_models(
    strategy: FusionStrategy,
    kind: KernelKind,
    k_train: &[DMatrix<f64>],
    labels: &[usize],
    classes: &[String],
    c: f64,
    beta: &[f64],
) -> Result<Trained> {
    if strategy.is_late() {
        let models = k_train
            .iter()
            .map(|k| SvmModel::train(&KernelMatrix::new(k.clone(), kind)?, labels, classes, c))
            .collect::<Result<Vec<_>>>()?;
        return Ok(Trained::PerChannel { models });
    }
    let kernel = if k_train.len() == 1 {
        KernelMatrix::new(k_train[0].clone(), kind)?
    } else {
        let kms = k_train
            .iter()
            .map(|k| KernelMatrix::new(k.clone(), kind))
            .collect::<Result<Vec<_>>>()?;
        kernel_weighted_sum(&kms.iter().collect::<Vec<_>>(), beta)?
    };
    Ok(Trained::Fused {
        model: SvmModel::train(&kernel, labels, classes, c)?,
    })
}

fn fuse_late(strategy: FusionStrategy, per_channel: &[Vec<ScoreVector>], beta: &[f64]) -> Result<Vec<ScoreVector>> {
    match strategy {
        FusionStrategy::LateProduct => late_product(per_channel),
        _ => late_weighted_sum(per_channel, beta),
    }
}

/// Unit-level scores from per-channel test kernels.
pub fn score_units(strategy: FusionStrategy, trained: &Trained, beta: &[f64], k_test: &[DMatrix<f64>]) -> Result<Vec<ScoreVector>> {
    match trained {
        Trained::Fused { model } => {
            let k = if k_test.len() == 1 {
                k_test[0].clone()
            } else {
                weighted_sum_matrices(k_test, beta)
            };
            if k.nrows() == 0 {
                return Ok(Vec::new());
            }
            model.decision_scores(&k)
        }
        Trained::PerChannel { models } => {
            if models.len() != k_test.len() {
                return Err(Error::DimensionMismatch {
                    expected: models.len(),
                    found: k_test.len(),
                });
            }
            let per_channel = models
                .iter()
                .zip(k_test)
                .map(|(m, k)| m.decision_scores(k))
                .collect::<Result<Vec<_>>>()?;
            if per_channel.first().is_none_or(Vec::is_empty) {
                return Ok(Vec::new());
            }
            fuse_late(strategy, &per_channel, beta)
        }
    }
}

/// Mean unit score per video.
pub fn aggregate(unit_scores: &[ScoreVector], groups: &[Vec<usize>]) -> Result<Vec<ScoreVector>> {
    groups
        .iter()
        .map(|g| {
            if g.len() == 1 {
                return Ok(unit_scores[g[0]].clone());
            }
            let l = unit_scores[g[0]].len();
            let mut mean = vec![0.0; l];
            for &u in g {
                for (m, s) in mean.iter_mut().zip(unit_scores[u].as_slice()) {
                    *m += s / g.len() as f64;
                }
            }
            ScoreVector::new(mean)
        })
        .collect()
}

/// One outer fold of the evaluation.
#[derive(Debug, Clone)]
pub struct FoldOutcome {
    pub test: Vec<usize>,
    pub choice: Choice,
    pub scores: Vec<ScoreVector>,
}

#[derive(Debug, Clone)]
pub struct CvOutcome {
    pub folds: Vec<FoldOutcome>,
    pub final_choice: Choice,
    pub trained: Trained,
}

/// Verifies that no subject is on both sides of a split.
pub fn assert_subject_independent(subjects: &[&str], train: &[usize], test: &[usize]) -> Result<()> {
    let tr: BTreeSet<&str> = train.iter().map(|&i| subjects[i]).collect();
    if let Some(&i) = test.iter().find(|&&i| tr.contains(subjects[i])) {
        return Err(Error::Validation(format!(
            "subject `{}` appears in both train and test partitions",
            subjects[i]
        )));
    }
    Ok(())
}

/// Subject-independent folds over a subset of videos (global indices).
fn folds_over(videos: &[usize], subjects: &[&str], k: usize) -> Result<Vec<Vec<usize>>> {
    let sub: Vec<&str> = videos.iter().map(|&v| subjects[v]).collect();
    let unique: BTreeSet<&str> = sub.iter().copied().collect();
    let k = k.min(unique.len());
    if k < 2 {
        return Err(Error::Validation(format!(
            "inner cross-validation needs at least 2 subjects in the training partition, found {}",
            unique.len()
        )));
    }
    Ok(subject_folds(&sub, k)?
        .into_iter()
        .map(|f| f.into_iter().map(|i| videos[i]).collect())
        .collect())
}

/// Outer subject-independent CV with inner grid search, then the final fit.
pub fn cross_validate(problem: &Problem, subjects: &[&str], folds: usize, inner_folds: usize) -> Result<CvOutcome> {
    let n = problem.n_videos();
    let outer = subject_folds(subjects, folds)?;
    let all: Vec<usize> = (0..n).collect();
    let results = outer
        .par_iter()
        .map(|test| {
            let train = train_indices(n, test);
            assert_subject_independent(subjects, &train, test)?;
            let choice = if problem.grid_size() == 1 {
                problem.only_candidate()
            } else {
                let inner = folds_over(&train, subjects, inner_folds)?;
                for f in &inner {
                    assert_subject_independent(subjects, &complement(&train, f), f)?;
                }
                problem.grid_search(&inner, &train)?
            };
            let scores = problem.fit_score(choice.gamma_index, choice.c, &choice.beta, &train, test)?;
            Ok(FoldOutcome {
                test: test.clone(),
                choice,
                scores,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let final_choice = problem.grid_search(&outer, &all)?;
    let trained = problem.train_all(&final_choice)?;
    Ok(CvOutcome {
        folds: results,
        final_choice,
        trained,
    })
}

/// Per-channel kernels between `test` (rows) and `train` (columns) units,
/// built the same way as during training.
pub fn cross_kernels(
    config: &RunConfig,
    train: &Dataset,
    test: &Dataset,
    gamma: Option<f64>,
    gak_offsets: &[Option<f64>],
) -> Result<(Vec<DMatrix<f64>>, Vec<Vec<usize>>)> {
    let need_gamma = || gamma.ok_or_else(|| Error::Validation("model bundle has no gamma".into()));
    match config.mode {
        Mode::Static => {
            let g = need_gamma()?;
            let tr = StaticFeatures::new(train, config);
            let te = StaticFeatures::new(test, config);
            let ks = (0..tr.channels())
                .map(|c| te.cross_sq(&tr, c).map(|v| (-g * v).exp()))
                .collect();
            Ok((ks, te.video_units()))
        }
        Mode::Dynamic => {
            let tr = DynamicFeatures::new(train)?;
            let te = DynamicFeatures::new(test)?;
            let groups = (0..te.videos()).map(|v| vec![v]).collect();
            let ks = match config.alignment {
                AlignmentMethod::DtwPpf => tr
                    .trajs
                    .iter()
                    .zip(&te.trajs)
                    .map(|(t, q)| {
                        let gamma_tr = dtw_proximity_matrix(t, t)?;
                        let gamma_te = dtw_proximity_matrix(t, q)?;
                        Ok(ppf_kernels(&gamma_tr, &gamma_te).1)
                    })
                    .collect::<Result<Vec<_>>>()?,
                AlignmentMethod::Gak => {
                    let g = need_gamma()?;
                    let local = config.gak_local;
                    tr.trajs
                        .iter()
                        .zip(&te.trajs)
                        .zip(gak_offsets)
                        .map(|((t, q), offset)| {
                            let log_k = gak_log_cross(q, t, g, local)?;
                            if config.gak_normalize {
                                let self_log = |x: &Trajectory| -> Result<f64> {
                                    Ok(gak_similarity(x, x, g, local == LocalKernel::Ratio)?.log_value)
                                };
                                let dq = q.iter().map(self_log).collect::<Result<Vec<_>>>()?;
                                let dt = t.iter().map(self_log).collect::<Result<Vec<_>>>()?;
                                Ok(DMatrix::from_fn(q.len(), t.len(), |i, j| {
                                    (log_k[(i, j)] - 0.5 * (dq[i] + dt[j])).exp()
                                }))
                            } else {
                                let shift = offset.unwrap_or(0.0);
                                Ok(log_k.map(|v| (v - shift).exp()))
                            }
                        })
                        .collect::<Result<Vec<_>>>()?
                }
            };
            Ok((ks, groups))
        }
    }
}
