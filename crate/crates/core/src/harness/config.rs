use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hog::DescriptorParams;
use crate::imgproc::AngularKernel;
use crate::matchdb::{Method, Metric};
use crate::rhog::{HemisphereSampling, DEFAULT_VISIBILITY};
use crate::synth::{DatasetConfig, SurfaceKind};
use crate::tracker::TrackerParams;

/// Descriptor settings shared by every patch size; the spatial width is
/// always `patch_size / 8` and the angular width one bin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DescriptorConfig {
    pub bins: usize,
    pub cells: usize,
    pub kernel: AngularKernel,
}

impl Default for DescriptorConfig {
    fn default() -> Self {
        Self {
            bins: 16,
            cells: 4,
            kernel: AngularKernel::Triangular,
        }
    }
}

impl DescriptorConfig {
    pub fn params(&self, patch_size: usize) -> DescriptorParams {
        let mut p = DescriptorParams::for_patch(patch_size);
        p.bins = self.bins;
        p.cells = self.cells;
        p.eps = std::f64::consts::TAU / self.bins as f64;
        p.kernel = self.kernel;
        p
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RHogConfig {
    /// Keyframes spread uniformly over the training sequence.
    pub keyframes: usize,
    /// Keyframes used for the per-view store searched by max-out.
    pub maxout_keyframes: usize,
    pub visibility: f64,
    pub hemisphere: HemisphereSampling,
}

impl Default for RHogConfig {
    fn default() -> Self {
        Self {
            keyframes: 10,
            maxout_keyframes: 2,
            visibility: DEFAULT_VISIBILITY,
            hemisphere: HemisphereSampling::default(),
        }
    }
}

/// Everything a benchmark run depends on. The master seed determines every
/// dataset and every random draw.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub scenes: usize,
    /// Surface kind per scene, cycled when shorter than `scenes`.
    pub surfaces: Vec<SurfaceKind>,
    pub patch_sizes: Vec<usize>,
    pub methods: Vec<Method>,
    /// Metric the acceptance rates are computed with.
    pub metric: Metric,
    /// Further metrics reported alongside the primary one.
    pub extra_metrics: Vec<Metric>,
    pub min_track_len: usize,
    pub max_tracks: usize,
    pub sv_trials: usize,
    pub excitation_windows: Vec<usize>,
    pub complexity_frames: Vec<usize>,
    /// Repetitions of each timed update batch; the fastest is kept.
    pub timing_repeats: usize,
    pub output_dir: PathBuf,
    /// Also write every generated dataset under `output_dir/datasets`.
    pub write_datasets: bool,
    pub dataset: DatasetConfig,
    pub tracker: TrackerParams,
    pub descriptor: DescriptorConfig,
    pub rhog: RHogConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 2024,
            scenes: 5,
            surfaces: vec![SurfaceKind::HeightField],
            patch_sizes: vec![11, 21],
            methods: vec![Method::SvHog, Method::MvHog, Method::KeepAll, Method::RHog],
            metric: Metric::L1,
            extra_metrics: vec![Metric::Likelihood],
            min_track_len: 10,
            max_tracks: 150,
            sv_trials: 5,
            excitation_windows: vec![2, 5, 10, 20, 30],
            complexity_frames: vec![1, 5, 10, 20, 30],
            timing_repeats: 5,
            output_dir: PathBuf::from("bench_out"),
            write_datasets: false,
            dataset: DatasetConfig::default(),
            tracker: TrackerParams::default(),
            descriptor: DescriptorConfig::default(),
            rhog: RHogConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::format("experiment config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::format("experiment config", e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParam(m.to_string()));
        if self.scenes == 0 {
            return bad("at least one scene is required");
        }
        if self.surfaces.is_empty() {
            return bad("surfaces must not be empty");
        }
        if self.patch_sizes.is_empty() || self.methods.is_empty() {
            return bad("patch sizes and methods must not be empty");
        }
        if self.sv_trials == 0 || self.min_track_len < 2 || self.max_tracks == 0 {
            return bad("sv_trials, max_tracks must be positive and min_track_len >= 2");
        }
        if self.excitation_windows.contains(&0) || self.complexity_frames.contains(&0) {
            return bad("window and frame counts must be positive");
        }
        if self.rhog.keyframes == 0 {
            return bad("rhog keyframes must be positive");
        }
        for &p in &self.patch_sizes {
            self.descriptor.params(p).validate()?;
            TrackerParams {
                patch_size: p,
                ..self.tracker.clone()
            }
            .validate()?;
        }
        self.dataset.camera.validate()
    }

    /// Metrics in report order, primary first, without repeats.
    pub fn metrics(&self) -> Vec<Metric> {
        let mut out = vec![self.metric];
        for &m in &self.extra_metrics {
            if !out.contains(&m) {
                out.push(m);
            }
        }
        out
    }

    /// Dataset configuration of scene `index`.
    pub fn scene_dataset(&self, index: usize) -> DatasetConfig {
        let mut d = self.dataset.clone();
        d.seed = self
            .seed
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(index as u64 + 1);
        d.scene.surface = self.surfaces[index % self.surfaces.len()];
        d
    }
}
