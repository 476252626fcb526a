//! Descriptor comparison and exact nearest-neighbor search.
//!
//! The database file is
//!
//! ```text
//! "MVDB" | version u16 | method u8 | metric u8 | bins u32 | dim u32 | count u64 |
//! count x (track u64 | index u32 | dim x f32)
//! ```

use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hog::{compute_hog_density, normalize_dog, DescriptorParams, DescriptorTag, DescriptorVector, OrientationDensity};
use crate::imgproc::GradientField;
use crate::record::{Reader, FORMAT_VERSION};

pub const DB_MAGIC: &[u8; 4] = b"MVDB";

/// Additive smoothing applied before logarithms.
pub const SMOOTHING: f64 = 1e-8;

/// Per-cell sums must be within this of 1 for divergence inputs.
const NORM_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    L1,
    L2,
    /// `1 - r` with `r` the correlation coefficient.
    NegCorrelation,
    Chi2,
    Bhattacharyya,
    /// `KL(query || stored)`, per cell.
    Kl,
    /// Negative log-likelihood of the query's cell histograms under the
    /// stored density (cross-entropy form).
    Likelihood,
}

impl Metric {
    pub const ALL: [Metric; 7] = [
        Metric::L1,
        Metric::L2,
        Metric::NegCorrelation,
        Metric::Chi2,
        Metric::Bhattacharyya,
        Metric::Kl,
        Metric::Likelihood,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::L1 => "l1",
            Metric::L2 => "l2",
            Metric::NegCorrelation => "neg_correlation",
            Metric::Chi2 => "chi2",
            Metric::Bhattacharyya => "bhattacharyya",
            Metric::Kl => "kl",
            Metric::Likelihood => "likelihood",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }

    /// Metrics that read their inputs as per-cell probability vectors.
    pub fn needs_normalized(self) -> bool {
        matches!(self, Metric::Bhattacharyya | Metric::Kl | Metric::Likelihood)
    }

    pub fn code(self) -> u8 {
        Self::ALL.iter().position(|&m| m == self).expect("listed") as u8
    }

    pub fn from_code(c: u8) -> Option<Self> {
        Self::ALL.get(c as usize).copied()
    }
}

fn smoothed(cell: &[f64], out: &mut Vec<f64>) {
    out.clear();
    let total: f64 = cell.iter().map(|v| v + SMOOTHING).sum();
    out.extend(cell.iter().map(|v| (v + SMOOTHING) / total));
}

/// `sum_b q(b) log h(b)` for one cell, with `q` normalized on the fly; an
/// empty query cell contributes nothing.
fn cell_log_likelihood(query: &[f64], log_model: &[f64]) -> f64 {
    let total: f64 = query.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    query.iter().zip(log_model).map(|(x, l)| x / total * l).sum()
}

/// Logarithms of the smoothed, renormalized cells of `v`.
fn log_smoothed(v: &[f64], bins: usize) -> Vec<f64> {
    let mut q = Vec::with_capacity(bins);
    let mut out = Vec::with_capacity(v.len());
    for c in v.chunks(bins) {
        smoothed(c, &mut q);
        out.extend(q.iter().map(|y| y.ln()));
    }
    out
}

/// Metric evaluation on raw slices; `bins` is the cell length. Lengths are
/// assumed equal.
pub fn distance_slices(a: &[f64], b: &[f64], bins: usize, metric: Metric) -> f64 {
    match metric {
        Metric::L1 => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
        Metric::L2 => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt(),
        Metric::NegCorrelation => {
            let n = a.len() as f64;
            let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
            let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
            for (x, y) in a.iter().zip(b) {
                let (dx, dy) = (x - ma, y - mb);
                sab += dx * dy;
                saa += dx * dx;
                sbb += dy * dy;
            }
            if saa <= 0.0 || sbb <= 0.0 {
                if a == b {
                    0.0
                } else {
                    1.0
                }
            } else {
                (1.0 - sab / (saa * sbb).sqrt()).max(0.0)
            }
        }
        Metric::Chi2 => {
            0.5 * a
                .iter()
                .zip(b)
                .filter(|(x, y)| *x + *y > 0.0)
                .map(|(x, y)| (x - y) * (x - y) / (x + y))
                .sum::<f64>()
        }
        Metric::Bhattacharyya => a
            .chunks(bins)
            .zip(b.chunks(bins))
            .map(|(ca, cb)| {
                let bc: f64 = ca.iter().zip(cb).map(|(x, y)| (x * y).sqrt()).sum();
                (-bc.ln()).max(0.0)
            })
            .sum(),
        Metric::Kl => {
            let (mut p, mut q) = (Vec::with_capacity(bins), Vec::with_capacity(bins));
            a.chunks(bins)
                .zip(b.chunks(bins))
                .map(|(ca, cb)| {
                    smoothed(ca, &mut p);
                    smoothed(cb, &mut q);
                    p.iter().zip(&q).map(|(x, y)| x * (x / y).ln()).sum::<f64>().max(0.0)
                })
                .sum()
        }
        Metric::Likelihood => {
            let mut q = Vec::with_capacity(bins);
            let mut logs = Vec::with_capacity(bins);
            -a.chunks(bins)
                .zip(b.chunks(bins))
                .map(|(ca, cb)| {
                    smoothed(cb, &mut q);
                    logs.clear();
                    logs.extend(q.iter().map(|y| y.ln()));
                    cell_log_likelihood(ca, &logs)
                })
                .sum::<f64>()
        }
    }
}

fn check_normalized(v: &DescriptorVector) -> Result<()> {
    if v.cells().any(|c| (c.iter().sum::<f64>() - 1.0).abs() > NORM_TOL) {
        return Err(Error::UnnormalizedModel);
    }
    Ok(())
}

/// Distance between two descriptors; the first argument is the query for
/// the asymmetric metrics.
pub fn distance(a: &DescriptorVector, b: &DescriptorVector, metric: Metric) -> Result<f64> {
    if a.len() != b.len() || a.bins != b.bins {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    if a.bins == 0 || !a.len().is_multiple_of(a.bins) {
        return Err(Error::InvalidParam("descriptor length is not a multiple of bins".into()));
    }
    if metric.needs_normalized() {
        check_normalized(a)?;
        check_normalized(b)?;
    }
    Ok(distance_slices(&a.values, &b.values, a.bins, metric))
}

/// Log-likelihood of a test patch under a normalized model density:
/// `sum_cells sum_bins q(b) log h(b)`, with `q` the test window's
/// normalized cell histograms and `h` the model with additive smoothing.
/// The test window is the `patch_size` square at the origin of `test_grad`.
pub fn likelihood_eval(test_grad: &GradientField, model: &OrientationDensity, params: &DescriptorParams) -> Result<f64> {
    if model.cells() != params.cells || model.bins() != params.bins {
        return Err(Error::DimensionMismatch {
            expected: params.descriptor_len(),
            actual: model.values().len(),
        });
    }
    let sums_to_one = model
        .values()
        .chunks(model.bins())
        .all(|c| (c.iter().sum::<f64>() - 1.0).abs() <= NORM_TOL);
    if !model.is_normalized() && !sums_to_one {
        return Err(Error::UnnormalizedModel);
    }
    let q = normalize_dog(&compute_hog_density(test_grad, params, 0, 0)?);
    Ok(-distance_slices(q.values(), model.values(), params.bins, Metric::Likelihood))
}

/// How a database represents each track.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// One descriptor from a single frame.
    SvHog,
    /// Temporal aggregate over the track.
    MvHog,
    /// Every frame's descriptor, grouped by track.
    KeepAll,
    /// Marginalized over synthesized views.
    RHog,
    /// Every synthesized view's descriptor, grouped by track.
    #[serde(rename = "r_hog_maxout")]
    RHogMaxOut,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::SvHog, Method::MvHog, Method::KeepAll, Method::RHog, Method::RHogMaxOut];

    pub fn name(self) -> &'static str {
        match self {
            Method::SvHog => "sv_hog",
            Method::MvHog => "mv_hog",
            Method::KeepAll => "keep_all",
            Method::RHog => "r_hog",
            Method::RHogMaxOut => "r_hog_maxout",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }

    /// Whether a track may own several entries.
    pub fn grouped(self) -> bool {
        matches!(self, Method::KeepAll | Method::RHogMaxOut)
    }

    pub fn tag(self) -> DescriptorTag {
        match self {
            Method::SvHog | Method::KeepAll | Method::RHogMaxOut => DescriptorTag::Sv,
            Method::MvHog => DescriptorTag::Mv,
            Method::RHog => DescriptorTag::R,
        }
    }

    pub fn code(self) -> u8 {
        Self::ALL.iter().position(|&m| m == self).expect("listed") as u8
    }

    pub fn from_code(c: u8) -> Option<Self> {
        Self::ALL.get(c as usize).copied()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NnResult {
    pub track: u64,
    pub distance: f64,
    /// Frame or view index of the winning entry within its group.
    pub index: u32,
}

/// Flat store of `dim`-length descriptors keyed by `(track, index)`.
#[derive(Clone, Debug)]
pub struct DescriptorDatabase {
    method: Method,
    default_metric: Metric,
    bins: usize,
    dim: usize,
    keys: Vec<(u64, u32)>,
    values: Vec<f64>,
    /// Log-smoothed values for likelihood scans, built on first use.
    log_cache: OnceLock<Vec<f64>>,
}

impl PartialEq for DescriptorDatabase {
    fn eq(&self, other: &Self) -> bool {
        self.method == other.method
            && self.default_metric == other.default_metric
            && self.bins == other.bins
            && self.dim == other.dim
            && self.keys == other.keys
            && self.values == other.values
    }
}

impl DescriptorDatabase {
    pub fn new(method: Method, default_metric: Metric, bins: usize, dim: usize) -> Result<Self> {
        if bins == 0 || dim == 0 || !dim.is_multiple_of(bins) {
            return Err(Error::InvalidParam(format!("descriptor length {dim} is not a positive multiple of {bins} bins")));
        }
        Ok(Self {
            method,
            default_metric,
            bins,
            dim,
            keys: Vec::new(),
            values: Vec::new(),
            log_cache: OnceLock::new(),
        })
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn default_metric(&self) -> Metric {
        self.default_metric
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Distinct track ids in insertion order.
    pub fn tracks(&self) -> Vec<u64> {
        let mut seen = std::collections::BTreeSet::new();
        self.keys.iter().filter(|k| seen.insert(k.0)).map(|k| k.0).collect()
    }

    pub fn entry(&self, i: usize) -> (u64, u32, &[f64]) {
        let (t, idx) = self.keys[i];
        (t, idx, &self.values[i * self.dim..(i + 1) * self.dim])
    }

    /// Bytes held by stored descriptor values.
    pub fn memory_bytes(&self) -> usize {
        self.values.len() * std::mem::size_of::<f64>()
    }

    pub fn insert(&mut self, track: u64, index: u32, v: &DescriptorVector) -> Result<()> {
        if v.len() != self.dim || v.bins != self.bins {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: v.len(),
            });
        }
        if !self.method.grouped() && self.keys.iter().any(|k| k.0 == track) {
            return Err(Error::InvalidParam(format!("track {track} already stored for {}", self.method.name())));
        }
        self.keys.push((track, index));
        self.values.extend_from_slice(&v.values);
        self.log_cache = OnceLock::new();
        Ok(())
    }

    /// Exact linear scan. Grouped tracks are represented by their closest
    /// entry; ties go to the lowest track id, then the lowest index.
    pub fn nn_query(&self, q: &DescriptorVector, metric: Metric) -> Result<NnResult> {
        if self.is_empty() {
            return Err(Error::Empty("descriptor database"));
        }
        if q.len() != self.dim || q.bins != self.bins {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: q.len(),
            });
        }
        let logs = (metric == Metric::Likelihood).then(|| self.log_cache.get_or_init(|| log_smoothed(&self.values, self.bins)));
        let mut best: Option<NnResult> = None;
        for (i, &(track, index)) in self.keys.iter().enumerate() {
            let range = i * self.dim..(i + 1) * self.dim;
            let d = match logs {
                Some(l) => -q
                    .values
                    .chunks(self.bins)
                    .zip(l[range].chunks(self.bins))
                    .map(|(qc, lc)| cell_log_likelihood(qc, lc))
                    .sum::<f64>(),
                None => distance_slices(&q.values, &self.values[range], self.bins, metric),
            };
            let better = match best {
                None => true,
                Some(b) => d < b.distance || (d == b.distance && (track, index) < (b.track, b.index)),
            };
            if better {
                best = Some(NnResult { track, distance: d, index });
            }
        }
        Ok(best.expect("database is nonempty"))
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(28 + self.keys.len() * (12 + 4 * self.dim));
        out.extend_from_slice(DB_MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.push(self.method.code());
        out.push(self.default_metric.code());
        out.extend_from_slice(&(self.bins as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.keys.len() as u64).to_le_bytes());
        for (i, &(track, index)) in self.keys.iter().enumerate() {
            out.extend_from_slice(&track.to_le_bytes());
            out.extend_from_slice(&index.to_le_bytes());
            for v in &self.values[i * self.dim..(i + 1) * self.dim] {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        out
    }

    /// Values come back rounded to `f32`.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "descriptor database");
        r.magic(DB_MAGIC)?;
        let version = r.u16()?;
        if version != FORMAT_VERSION {
            return Err(Error::format("descriptor database", format!("unsupported version {version}")));
        }
        let mc = r.u8()?;
        let method = Method::from_code(mc).ok_or_else(|| Error::format("descriptor database", format!("unknown method {mc}")))?;
        let kc = r.u8()?;
        let metric = Metric::from_code(kc).ok_or_else(|| Error::format("descriptor database", format!("unknown metric {kc}")))?;
        let bins = r.u32()? as usize;
        let dim = r.u32()? as usize;
        let count = r.u64()? as usize;
        let mut db = Self::new(method, metric, bins, dim).map_err(|e| Error::format("descriptor database", e.to_string()))?;
        for _ in 0..count {
            let track = r.u64()?;
            let index = r.u32()?;
            let mut values = Vec::with_capacity(dim);
            for _ in 0..dim {
                values.push(r.f32()? as f64);
            }
            let v = DescriptorVector { values, tag: method.tag(), bins };
            db.insert(track, index, &v).map_err(|e| Error::format("descriptor database", e.to_string()))?;
        }
        r.finish()?;
        Ok(db)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}
