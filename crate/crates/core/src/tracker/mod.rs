//! Corner detection on a pyramid and short-baseline translational tracking.

mod fast;
mod klt;

pub use fast::{corners, detect_corners, segment_test, suppress, DetectorParams, Keypoint, CIRCLE};
pub use klt::{condition_number, klt_step, klt_step_from, KltOutcome, KltParams, RejectReason, MAX_CONDITION};

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgproc::{build_pyramid, read_pgm, to_base, to_level, write_pgm, GrayImage, ImagePyramid};

/// Standard deviations mapped onto the unit range by patch normalization.
const NORMALIZED_SPAN: f64 = 6.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerParams {
    pub patch_size: usize,
    pub levels: usize,
    pub target_count: usize,
    pub min_dist: f64,
    pub detector: DetectorParams,
    pub klt: KltParams,
}

impl Default for TrackerParams {
    fn default() -> Self {
        Self {
            patch_size: 11,
            levels: 3,
            target_count: 150,
            min_dist: 6.0,
            detector: DetectorParams::default(),
            klt: KltParams::default(),
        }
    }
}

impl TrackerParams {
    pub fn for_patch(patch_size: usize) -> Self {
        Self {
            patch_size,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_size < 3 || self.patch_size.is_multiple_of(2) {
            return Err(Error::InvalidParam(format!("patch size {} must be odd and >= 3", self.patch_size)));
        }
        if self.levels == 0 || self.target_count == 0 {
            return Err(Error::InvalidParam("levels and target count must be positive".into()));
        }
        if !(self.min_dist >= 0.0) || !(self.klt.reject_thresh > 0.0) {
            return Err(Error::InvalidParam("min_dist and reject threshold must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Track {
    pub id: u64,
    pub level: usize,
    /// Frame index of the first observation.
    pub start_frame: usize,
    /// Base-resolution positions, one per consecutive frame.
    pub positions: Vec<(f64, f64)>,
    /// Contrast-normalized patches, one per position.
    pub patches: Vec<GrayImage>,
    pub alive: bool,
}

impl Track {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn end_frame(&self) -> usize {
        self.start_frame + self.positions.len()
    }

    /// Position in frame `frame`, if the track covers it.
    pub fn position_at(&self, frame: usize) -> Option<(f64, f64)> {
        frame
            .checked_sub(self.start_frame)
            .and_then(|k| self.positions.get(k).copied())
    }
}

/// Mean/std normalization mapped to `0.5 + z / 6`, clipped to `[0, 1]`.
/// Constant input maps to 0.5 everywhere.
pub fn normalize_patch(values: &mut [f64]) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd < 1e-9 {
        values.iter_mut().for_each(|v| *v = 0.5);
        return;
    }
    for v in values.iter_mut() {
        *v = (0.5 + (*v - mean) / (sd * NORMALIZED_SPAN)).clamp(0.0, 1.0);
    }
}

/// Bilinearly resampled `size`x`size` patch centered on base position
/// `(x, y)`, taken from pyramid level `level`, before normalization.
pub fn extract_raw_patch(pyr: &ImagePyramid, level: usize, x: f64, y: f64, size: usize) -> Result<GrayImage> {
    let img = pyr.level(level);
    let (lx, ly) = (to_level(x, level), to_level(y, level));
    let half = (size / 2) as f64;
    if lx - half < 0.0 || ly - half < 0.0 || lx + half > (img.width() - 1) as f64 || ly + half > (img.height() - 1) as f64 {
        return Err(Error::PatchOutOfBounds {
            x: lx.round() as i64,
            y: ly.round() as i64,
            size,
            width: img.width(),
            height: img.height(),
        });
    }
    GrayImage::from_fn(size, size, |i, j| img.sample_bilinear(lx - half + i as f64, ly - half + j as f64))
}

/// Contrast-normalized patch as stored in tracks.
pub fn extract_patch(pyr: &ImagePyramid, level: usize, x: f64, y: f64, size: usize) -> Result<GrayImage> {
    let raw = extract_raw_patch(pyr, level, x, y, size)?;
    let mut values = raw.data().to_vec();
    normalize_patch(&mut values);
    GrayImage::new(size, size, values)
}

/// Pyramid depth usable for an image, capped at `wanted`.
pub fn usable_levels(width: usize, height: usize, wanted: usize) -> usize {
    let mut levels = wanted.clamp(1, crate::imgproc::MAX_LEVELS);
    while levels > 1 && width.min(height) < 3 * (1 << (levels - 1)) {
        levels -= 1;
    }
    levels
}

/// Coarse-to-fine translational step: displacement estimated on up to two
/// coarser levels seeds the final step at the track's own level.
fn pyramid_step(prev: &ImagePyramid, next: &ImagePyramid, level: usize, pos: (f64, f64), window: usize, klt: &KltParams) -> KltOutcome {
    let top = (level + 2).min(prev.len() - 1);
    let mut d = (0.0, 0.0);
    for l in (level + 1..=top).rev() {
        let p = (to_level(pos.0, l), to_level(pos.1, l));
        if let KltOutcome::Tracked { x, y, .. } =
            klt_step_from(prev.level(l), next.level(l), p, (p.0 + d.0, p.1 + d.1), window, &KltParams {
                reject_thresh: f64::INFINITY,
                ..*klt
            })
        {
            d = (x - p.0, y - p.1);
        }
        d = (2.0 * d.0, 2.0 * d.1);
    }
    let p = (to_level(pos.0, level), to_level(pos.1, level));
    match klt_step_from(prev.level(level), next.level(level), p, (p.0 + d.0, p.1 + d.1), window, klt) {
        KltOutcome::Tracked { x, y, residual } => KltOutcome::Tracked {
            x: to_base(x, level),
            y: to_base(y, level),
            residual,
        },
        r => r,
    }
}

/// Tracks corners through an image sequence.
///
/// Every frame is searched for corners; detections farther than `min_dist`
/// from every live track on the same level start new tracks. Lost tracks
/// are never revived.
pub fn run_tracker(frames: &[GrayImage], params: &TrackerParams) -> Result<Vec<Track>> {
    params.validate()?;
    if frames.len() < 2 {
        return Err(Error::InvalidParam("tracking needs at least two frames".into()));
    }
    let (w, h) = (frames[0].width(), frames[0].height());
    if frames.iter().any(|f| f.width() != w || f.height() != h) {
        return Err(Error::InvalidImage("frames differ in size".into()));
    }
    let levels = usable_levels(w, h, params.levels);
    let size = params.patch_size;
    let mut tracks: Vec<Track> = Vec::new();
    let mut prev: Option<ImagePyramid> = None;
    for (t, frame) in frames.iter().enumerate() {
        let pyr = build_pyramid(frame, levels)?;
        if let Some(prev_pyr) = &prev {
            let alive: Vec<usize> = (0..tracks.len()).filter(|&i| tracks[i].alive).collect();
            let updates: Vec<Option<((f64, f64), GrayImage)>> = alive
                .par_iter()
                .map(|&i| {
                    let tr = &tracks[i];
                    let pos = *tr.positions.last().expect("tracks are never empty");
                    match pyramid_step(prev_pyr, &pyr, tr.level, pos, size, &params.klt) {
                        KltOutcome::Tracked { x, y, .. } => {
                            extract_patch(&pyr, tr.level, x, y, size).ok().map(|p| ((x, y), p))
                        }
                        KltOutcome::Rejected(_) => None,
                    }
                })
                .collect();
            for (&i, up) in alive.iter().zip(updates) {
                match up {
                    Some((pos, patch)) => {
                        tracks[i].positions.push(pos);
                        tracks[i].patches.push(patch);
                    }
                    None => tracks[i].alive = false,
                }
            }
        }
        let detections = detect_corners(&pyr, params.target_count, params.min_dist, &params.detector);
        let d2 = params.min_dist * params.min_dist;
        for kp in detections {
            let (kx, ky) = kp.level_position();
            let crowded = tracks.iter().filter(|tr| tr.alive && tr.level == kp.level).any(|tr| {
                let (px, py) = *tr.positions.last().expect("tracks are never empty");
                let (dx, dy) = (to_level(px, kp.level) - kx, to_level(py, kp.level) - ky);
                dx * dx + dy * dy < d2
            });
            if crowded {
                continue;
            }
            // window plus one pixel for the template gradient must fit
            let img = pyr.level(kp.level);
            let half = (size / 2) as f64 + 1.0;
            if kx - half < 0.0 || ky - half < 0.0 || kx + half > (img.width() - 1) as f64 || ky + half > (img.height() - 1) as f64 {
                continue;
            }
            if let Ok(patch) = extract_patch(&pyr, kp.level, kp.x, kp.y, size) {
                tracks.push(Track {
                    id: tracks.len() as u64,
                    level: kp.level,
                    start_frame: t,
                    positions: vec![(kp.x, kp.y)],
                    patches: vec![patch],
                    alive: true,
                });
            }
        }
        prev = Some(pyr);
    }
    Ok(tracks)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackRecord {
    pub id: u64,
    pub level: usize,
    pub start_frame: usize,
    pub alive: bool,
    pub positions: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackDump {
    pub schema_version: u32,
    pub patch_size: usize,
    pub tracks: Vec<TrackRecord>,
}

fn patch_file(id: u64, k: usize) -> String {
    format!("track_{id:06}_{k:04}.pgm")
}

/// Writes `tracks.json` plus one PGM per stored patch into `dir`.
pub fn write_tracks(dir: &Path, tracks: &[Track], patch_size: usize) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let dump = TrackDump {
        schema_version: 1,
        patch_size,
        tracks: tracks
            .iter()
            .map(|t| TrackRecord {
                id: t.id,
                level: t.level,
                start_frame: t.start_frame,
                alive: t.alive,
                positions: t.positions.iter().map(|&(x, y)| [x, y]).collect(),
            })
            .collect(),
    };
    let path = dir.join("tracks.json");
    fs::write(&path, serde_json::to_vec_pretty(&dump)?).map_err(|e| Error::io(&path, e))?;
    for t in tracks {
        for (k, p) in t.patches.iter().enumerate() {
            write_pgm(&dir.join(patch_file(t.id, k)), p)?;
        }
    }
    Ok(())
}

/// Reads a dump written by [`write_tracks`]. Patches come back quantized
/// to 8 bits.
pub fn read_tracks(dir: &Path) -> Result<(Vec<Track>, usize)> {
    let path = dir.join("tracks.json");
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let dump: TrackDump = serde_json::from_slice(&bytes)?;
    if dump.schema_version != 1 {
        return Err(Error::format("track dump", format!("unsupported schema {}", dump.schema_version)));
    }
    let mut tracks = Vec::with_capacity(dump.tracks.len());
    for r in dump.tracks {
        if r.positions.is_empty() {
            return Err(Error::format("track dump", format!("track {} is empty", r.id)));
        }
        let mut patches = Vec::with_capacity(r.positions.len());
        for k in 0..r.positions.len() {
            let p = read_pgm(&dir.join(patch_file(r.id, k)))?;
            if p.width() != dump.patch_size || p.height() != dump.patch_size {
                return Err(Error::format("track dump", format!("patch {k} of track {} has wrong size", r.id)));
            }
            patches.push(p);
        }
        tracks.push(Track {
            id: r.id,
            level: r.level,
            start_frame: r.start_frame,
            positions: r.positions.iter().map(|p| (p[0], p[1])).collect(),
            patches,
            alive: r.alive,
        });
    }
    Ok((tracks, dump.patch_size))
}
