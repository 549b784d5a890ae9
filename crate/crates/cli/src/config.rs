use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spdtraj::align::LocalKernel;
use spdtraj::covdesc::DEFAULT_EPSILON;
use spdtraj::fusion::FusionStrategy;
use spdtraj::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Static,
    Dynamic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignmentMethod {
    #[default]
    Gak,
    DtwPpf,
}

/// How a video is scored in static mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StaticScoring {
    /// Every peak frame is a sample; the video score is the mean frame score.
    #[default]
    PerFrame,
    /// One sample per video; distance is the mean LERM distance between
    /// corresponding peak frames.
    VideoMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub alignment: AlignmentMethod,
    pub gamma_grid: Vec<f64>,
    pub c_grid: Vec<f64>,
    pub epsilon: f64,
    pub l_target: usize,
    pub fusion: FusionStrategy,
    /// Channel ids; `"all"` expands to `global` plus every region mask.
    pub channels: Vec<String>,
    pub beta_step: f64,
    /// Fixed fusion weights, one per channel; skips the weight search.
    pub weights: Option<Vec<f64>>,
    pub folds: usize,
    pub inner_folds: usize,
    pub seed: u64,
    pub static_scoring: StaticScoring,
    pub peak_frames: usize,
    pub gak_local: LocalKernel,
    pub gak_normalize: bool,
    /// Adds wall-clock timing to reports (which then differ run to run).
    pub timing: bool,
    pub manifest: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::Static,
            alignment: AlignmentMethod::Gak,
            gamma_grid: (-5..=2).map(|k| 2f64.powi(2 * k)).collect(),
            c_grid: vec![0.1, 1.0, 10.0, 100.0],
            epsilon: DEFAULT_EPSILON,
            l_target: 15,
            fusion: FusionStrategy::KernelWeightedSum,
            channels: vec!["global".into()],
            beta_step: 0.1,
            weights: None,
            folds: 10,
            inner_folds: 3,
            seed: 0,
            static_scoring: StaticScoring::PerFrame,
            peak_frames: 3,
            gak_local: LocalKernel::Rbf,
            gak_normalize: false,
            timing: false,
            manifest: None,
            out: None,
        }
    }
}

impl RunConfig {
    /// Dynamic mode always fuses trajectory channels at the kernel level.
    pub fn effective_fusion(&self) -> FusionStrategy {
        match self.mode {
            Mode::Static => self.fusion,
            Mode::Dynamic => FusionStrategy::KernelWeightedSum,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Checks invariants and sorts the grids ascending (which fixes the
    /// grid-search tie order).
    pub fn validated(mut self) -> Result<Self> {
        let positive = |name: &str, grid: &mut Vec<f64>| -> Result<()> {
            if grid.is_empty() {
                return Err(Error::Validation(format!("{name} grid is empty")));
            }
            if grid.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::Validation(format!("{name} grid values must be positive")));
            }
            grid.sort_by(f64::total_cmp);
            grid.dedup();
            Ok(())
        };
        positive("gamma", &mut self.gamma_grid)?;
        positive("C", &mut self.c_grid)?;
        if self.folds < 2 {
            return Err(Error::Validation(format!("folds must be >= 2, got {}", self.folds)));
        }
        if self.inner_folds < 2 {
            return Err(Error::Validation(format!("inner_folds must be >= 2, got {}", self.inner_folds)));
        }
        if self.l_target < 1 {
            return Err(Error::Validation("l_target must be >= 1".into()));
        }
        if self.peak_frames < 1 {
            return Err(Error::Validation("peak_frames must be >= 1".into()));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Validation(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        if self.channels.is_empty() {
            return Err(Error::Validation("channel list is empty".into()));
        }
        let parts = (1.0 / self.beta_step).round();
        if !(self.beta_step > 0.0) || (parts * self.beta_step - 1.0).abs() > 1e-9 {
            return Err(Error::Validation(format!("beta_step {} must divide 1", self.beta_step)));
        }
        if self.mode == Mode::Dynamic && self.fusion != FusionStrategy::KernelWeightedSum && self.channels.len() > 1 {
            return Err(Error::Validation(
                "dynamic mode fuses trajectory channels with kernel_weighted_sum only".into(),
            ));
        }
        if let Some(w) = &self.weights {
            if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::Validation(format!("weights {w:?} must be nonnegative and sum to 1")));
            }
        }
        Ok(self)
    }
}
