//! Benchmark report rows and their CSV/JSON files.
//!
//! Everything except the timing table is a deterministic function of the
//! configuration; timings go to `timing.csv` only.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matchdb::{Method, Metric};

use super::methods::SynthesisStats;
use super::stats::{mean, spearman};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub scene: String,
    pub method: Method,
    pub patch_size: usize,
    pub metric: Metric,
    pub rate: f64,
    pub queries: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcitationRow {
    pub scene: String,
    pub patch_size: usize,
    pub window: usize,
    pub mean_excitation: f64,
    /// Mean raw excitation before per-track normalization.
    pub mean_raw_excitation: f64,
    pub rate: f64,
    pub tracks: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemoryRow {
    pub scene: String,
    pub patch_size: usize,
    pub method: Method,
    pub entries: usize,
    pub bytes: usize,
}

/// Storage of a single track's descriptors as a function of its length.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexityRow {
    pub frames: usize,
    pub mv_accumulator_bytes: usize,
    pub mv_db_bytes: usize,
    pub keepall_db_bytes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub scene: String,
    pub patch_size: usize,
    pub stage: String,
    /// Frame count for per-update timings, zero otherwise.
    pub frames: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneInfo {
    pub scene: String,
    pub seed: u64,
    pub patch_size: usize,
    pub tracks_detected: usize,
    pub tracks_used: usize,
    pub mean_track_len: f64,
    pub queries: usize,
    /// Frame offset drawn for each used track, per single-view trial.
    pub sv_frames: Vec<Vec<usize>>,
    pub synthesis: Option<SynthesisStats>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub patch_size: usize,
    pub metric: Metric,
    pub mean_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExcitationSummary {
    pub window: usize,
    pub mean_excitation: f64,
    pub rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub schema_version: u32,
    pub seed: u64,
    pub scenes: Vec<SceneInfo>,
    pub rates: Vec<RateRow>,
    pub summary: Vec<MethodSummary>,
    pub excitation: Vec<ExcitationRow>,
    pub excitation_summary: Vec<ExcitationSummary>,
    /// Rank correlation between mean excitation and accuracy over windows.
    pub excitation_spearman: Option<f64>,
    pub memory: Vec<MemoryRow>,
    pub complexity: Vec<ComplexityRow>,
    #[serde(skip)]
    pub timing: Vec<TimingRow>,
}

impl BenchmarkReport {
    /// Mean rate of `method` over scenes, for one patch size and metric.
    pub fn mean_rate(&self, method: Method, patch_size: usize, metric: Metric) -> Option<f64> {
        self.summary
            .iter()
            .find(|s| s.method == method && s.patch_size == patch_size && s.metric == metric)
            .map(|s| s.mean_rate)
    }

    /// Fills the summary tables from the per-scene rows.
    pub fn summarize(&mut self) {
        let mut keys: Vec<(Method, usize, Metric)> = Vec::new();
        for r in &self.rates {
            let k = (r.method, r.patch_size, r.metric);
            if !keys.contains(&k) {
                keys.push(k);
            }
        }
        self.summary = keys
            .into_iter()
            .map(|(method, patch_size, metric)| {
                let rates: Vec<f64> = self
                    .rates
                    .iter()
                    .filter(|r| r.method == method && r.patch_size == patch_size && r.metric == metric)
                    .map(|r| r.rate)
                    .collect();
                MethodSummary {
                    method,
                    patch_size,
                    metric,
                    mean_rate: mean(&rates),
                }
            })
            .collect();
        let mut windows: Vec<usize> = self.excitation.iter().map(|e| e.window).collect();
        windows.sort_unstable();
        windows.dedup();
        self.excitation_summary = windows
            .into_iter()
            .map(|window| {
                let rows: Vec<&ExcitationRow> = self.excitation.iter().filter(|e| e.window == window).collect();
                ExcitationSummary {
                    window,
                    mean_excitation: mean(&rows.iter().map(|r| r.mean_excitation).collect::<Vec<_>>()),
                    rate: mean(&rows.iter().map(|r| r.rate).collect::<Vec<_>>()),
                }
            })
            .collect();
        let xs: Vec<f64> = self.excitation_summary.iter().map(|s| s.mean_excitation).collect();
        let ys: Vec<f64> = self.excitation_summary.iter().map(|s| s.rate).collect();
        let rho = spearman(&xs, &ys);
        self.excitation_spearman = rho.is_finite().then_some(rho);
    }

    pub fn rates_csv(&self) -> String {
        let mut s = String::from("scene,method,patch_size,metric,rate\n");
        for r in &self.rates {
            let _ = writeln!(s, "{},{},{},{},{:.6}", r.scene, r.method.name(), r.patch_size, r.metric.name(), r.rate);
        }
        s
    }

    pub fn excitation_csv(&self) -> String {
        let mut s = String::from("scene,patch_size,window,mean_excitation,mean_raw_excitation,rate,tracks\n");
        for e in &self.excitation {
            let _ = writeln!(
                s,
                "{},{},{},{:.6},{:.6},{:.6},{}",
                e.scene, e.patch_size, e.window, e.mean_excitation, e.mean_raw_excitation, e.rate, e.tracks
            );
        }
        s
    }

    pub fn timing_csv(&self) -> String {
        let mut s = String::from("scene,patch_size,stage,frames,seconds\n");
        for t in &self.timing {
            let _ = writeln!(s, "{},{},{},{},{:.9}", t.scene, t.patch_size, t.stage, t.frames, t.seconds);
        }
        for m in &self.memory {
            let _ = writeln!(s, "{},{},memory_bytes:{},{},{}", m.scene, m.patch_size, m.method.name(), m.entries, m.bytes);
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Writes `report.csv`, `report.json`, `excitation.csv` and `timing.csv`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let files = [
            ("report.csv", self.rates_csv()),
            ("report.json", self.to_json()?),
            ("excitation.csv", self.excitation_csv()),
            ("timing.csv", self.timing_csv()),
        ];
        for (name, body) in files {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let report: Self = serde_json::from_str(&text)?;
        if report.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::format("report", format!("unsupported schema {}", report.schema_version)));
        }
        Ok(report)
    }

    /// Plain-text table of mean rates.
    pub fn summary_table(&self) -> String {
        let mut s = format!("{:<14} {:>5} {:<16} {:>8}\n", "method", "patch", "metric", "rate");
        for m in &self.summary {
            let _ = writeln!(s, "{:<14} {:>5} {:<16} {:>8.4}", m.method.name(), m.patch_size, m.metric.name(), m.mean_rate);
        }
        if !self.excitation_summary.is_empty() {
            let _ = writeln!(s, "\n{:>6} {:>10} {:>8}", "window", "excitation", "rate");
            for e in &self.excitation_summary {
                let _ = writeln!(s, "{:>6} {:>10.4} {:>8.4}", e.window, e.mean_excitation, e.rate);
            }
            if let Some(rho) = self.excitation_spearman {
                let _ = writeln!(s, "spearman {rho:.4}");
            }
        }
        s
    }
}
