//! Descriptor databases for each method, test queries and scoring.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hog::{normalize_dog, patch_density, sample_descriptor, sv_dog, DescriptorParams, DescriptorTag, DescriptorVector, OrientationDensity};
use crate::imgproc::{to_level, GrayImage, ImagePyramid};
use crate::matchdb::{DescriptorDatabase, Method, Metric};
use crate::mvhog::MvAccumulator;
use crate::record::{DescriptorRecord, ViewEntry, ViewStore};
use crate::rhog::{rhog_from_sum, sample_hemisphere, synthesize_patch, LocalSurface, ViewpointSet};
use crate::synth::{ground_truth_correspondence, Correspondence, RenderedFrame};
use crate::tracker::{extract_patch, normalize_patch, Track};

use super::config::RHogConfig;

/// A tracked region with its per-frame unnormalized densities.
#[derive(Clone, Debug)]
pub struct TrackData {
    pub track: Track,
    pub densities: Vec<OrientationDensity>,
}

impl TrackData {
    pub fn new(track: Track, params: &DescriptorParams) -> Result<Self> {
        let densities = track
            .patches
            .iter()
            .map(|p| patch_density(p, params))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { track, densities })
    }

    pub fn id(&self) -> u64 {
        self.track.id
    }

    pub fn len(&self) -> usize {
        self.densities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.densities.is_empty()
    }

    /// MV-HOG of frames `start..start + count` of the track.
    pub fn mv_descriptor(&self, start: usize, count: usize, params: &DescriptorParams) -> Result<DescriptorVector> {
        let mut acc = MvAccumulator::new(*params)?;
        for k in start..start + count {
            acc.update_with_density(&self.track.patches[k], &self.densities[k])?;
        }
        acc.finalize()
    }

    pub fn sv_descriptor(&self, k: usize) -> DescriptorVector {
        sample_descriptor(&normalize_dog(&self.densities[k]), DescriptorTag::Sv)
    }
}

#[derive(Clone, Debug)]
pub struct Query {
    pub track: u64,
    pub test_frame: usize,
    /// Base-resolution position in the test image.
    pub position: (f64, f64),
    pub descriptor: DescriptorVector,
}

/// One query per (track, test frame) where the track's first observation
/// is covisible in the test frame. The query is the single-view DOG of the
/// patch at the ground-truth corresponding location, on the track's level.
pub fn build_test_queries(
    training: &[RenderedFrame],
    test: &[RenderedFrame],
    test_pyramids: &[ImagePyramid],
    tracks: &[TrackData],
    params: &DescriptorParams,
) -> Result<Vec<Query>> {
    let mut out = Vec::new();
    for td in tracks {
        let t = &td.track;
        let source = training
            .get(t.start_frame)
            .ok_or_else(|| Error::InvalidParam(format!("track {} starts past the training sequence", t.id)))?;
        let (x, y) = t.positions[0];
        for (j, (frame, pyr)) in test.iter().zip(test_pyramids).enumerate() {
            let (u, v) = match ground_truth_correspondence(source, frame, x, y) {
                Ok(Correspondence::Visible(u, v)) => (u, v),
                Ok(_) | Err(Error::NoDepth) => continue,
                Err(e) => return Err(e),
            };
            let Ok(patch) = extract_patch(pyr, t.level, u, v, params.patch_size) else {
                continue;
            };
            out.push(Query {
                track: t.id,
                test_frame: j,
                position: (u, v),
                descriptor: sv_dog(&patch, params)?,
            });
        }
    }
    Ok(out)
}

/// Fraction of queries whose nearest database track is their own. A query
/// whose track is missing from the database always counts as a miss.
pub fn recognition_rate(queries: &[(u64, DescriptorVector)], db: &DescriptorDatabase, metric: Metric) -> Result<f64> {
    if queries.is_empty() {
        return Err(Error::Empty("query set"));
    }
    let mut hits = 0usize;
    for (truth, q) in queries {
        if db.nn_query(q, metric)?.track == *truth {
            hits += 1;
        }
    }
    Ok(hits as f64 / queries.len() as f64)
}

pub fn query_pairs(queries: &[Query]) -> Vec<(u64, DescriptorVector)> {
    queries.iter().map(|q| (q.track, q.descriptor.clone())).collect()
}

fn empty_db(method: Method, metric: Metric, params: &DescriptorParams) -> Result<DescriptorDatabase> {
    DescriptorDatabase::new(method, metric, params.bins, params.descriptor_len())
}

/// One randomly drawn frame per track; returns the chosen frame offsets.
pub fn build_sv_db(tracks: &[TrackData], params: &DescriptorParams, metric: Metric, rng: &mut ChaCha8Rng) -> Result<(DescriptorDatabase, Vec<usize>)> {
    let mut db = empty_db(Method::SvHog, metric, params)?;
    let mut chosen = Vec::with_capacity(tracks.len());
    for td in tracks {
        let k = rng.random_range(0..td.len());
        db.insert(td.id(), k as u32, &td.sv_descriptor(k))?;
        chosen.push(k);
    }
    Ok((db, chosen))
}

pub fn build_mv_db(tracks: &[TrackData], params: &DescriptorParams, metric: Metric) -> Result<DescriptorDatabase> {
    let mut db = empty_db(Method::MvHog, metric, params)?;
    for td in tracks {
        db.insert(td.id(), 0, &td.mv_descriptor(0, td.len(), params)?)?;
    }
    Ok(db)
}

pub fn build_keepall_db(tracks: &[TrackData], params: &DescriptorParams, metric: Metric) -> Result<DescriptorDatabase> {
    let mut db = empty_db(Method::KeepAll, metric, params)?;
    for td in tracks {
        for k in 0..td.len() {
            db.insert(td.id(), k as u32, &td.sv_descriptor(k))?;
        }
    }
    Ok(db)
}

/// `count` frame indices spread uniformly over `0..frames`.
pub fn uniform_keyframes(frames: usize, count: usize) -> Vec<usize> {
    let count = count.min(frames).max(1);
    let mut out: Vec<usize> = (0..count).map(|i| i * frames / count).collect();
    out.dedup();
    out
}

/// Counters for the view synthesis of one database.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SynthesisStats {
    pub views_accepted: usize,
    pub views_rejected: usize,
    pub views_out_of_view: usize,
    /// Tracks with no usable synthesized view, described by their keyframe
    /// patches instead.
    pub fallback_tracks: usize,
}

pub struct RHogBuild {
    pub db: DescriptorDatabase,
    /// Per-view store searched by max-out, when requested.
    pub maxout: Option<DescriptorDatabase>,
    pub views: ViewStore,
    pub stats: SynthesisStats,
}

/// Keyframes of the training sequence that the track covers, falling back
/// to its first frame.
/// `count` frames spread uniformly over the track's own span.
fn track_keyframes(t: &Track, count: usize) -> Vec<usize> {
    uniform_keyframes(t.len(), count).into_iter().map(|k| t.start_frame + k).collect()
}

/// R-HOG from ground-truth depth: at each of the track's keyframes the
/// patch lattice is lifted onto the surface, rotated through the viewpoint
/// set and re-rendered from the keyframe image; densities of all views that
/// pass the normal test are averaged.
pub fn build_rhog_db(
    tracks: &[TrackData],
    training: &[RenderedFrame],
    train_pyramids: &[ImagePyramid],
    params: &DescriptorParams,
    cfg: &RHogConfig,
    metric: Metric,
    with_maxout: bool,
) -> Result<RHogBuild> {
    let views = sample_hemisphere(&cfg.hemisphere)?;
    let mut db = empty_db(Method::RHog, metric, params)?;
    let mut maxout = if with_maxout {
        Some(empty_db(Method::RHogMaxOut, metric, params)?)
    } else {
        None
    };
    let mut store = ViewStore::default();
    let mut stats = SynthesisStats::default();
    for td in tracks {
        let t = &td.track;
        let mut sum = OrientationDensity::zeros(params.cells, params.bins);
        let mut count = 0usize;
        let mut view_index = 0u32;
        let kfs = track_keyframes(t, cfg.keyframes);
        let mo_kfs = track_keyframes(t, cfg.maxout_keyframes.max(1));
        let mut frames: Vec<usize> = kfs.iter().chain(&mo_kfs).copied().collect();
        frames.sort_unstable();
        frames.dedup();
        for f in frames {
            let (x, y) = t.position_at(f).expect("keyframes lie inside the track");
            let center = (to_level(x, t.level), to_level(y, t.level));
            let surface = match LocalSurface::from_frame(&training[f], t.level, center, params.patch_size) {
                Ok(s) => s,
                Err(Error::NoDepth) | Err(Error::InvalidParam(_)) => continue,
                Err(e) => return Err(e),
            };
            let source = train_pyramids[f].level(t.level);
            let for_mean = kfs.contains(&f);
            let for_maxout = maxout.is_some() && mo_kfs.contains(&f);
            synthesize_views(source, &surface, &views, cfg.visibility, params, &mut stats, |h, params_rot| {
                if for_mean {
                    sum.add_assign(h);
                    count += 1;
                }
                if for_maxout {
                    let d = sample_descriptor(&normalize_dog(h), DescriptorTag::Sv);
                    maxout.as_mut().expect("checked").insert(t.id, view_index, &d)?;
                    store.entries.push(ViewEntry {
                        track_id: t.id,
                        view_index,
                        rotation: params_rot,
                        record: DescriptorRecord::new(*params, d)?,
                    });
                    view_index += 1;
                }
                Ok(())
            })?;
        }
        let descriptor = if count > 0 {
            rhog_from_sum(&sum, count)?
        } else {
            stats.fallback_tracks += 1;
            let mut acc = MvAccumulator::new(*params)?;
            for f in track_keyframes(t, cfg.keyframes) {
                let k = f - t.start_frame;
                acc.update_with_density(&t.patches[k], &td.densities[k])?;
            }
            let mut d = acc.finalize()?;
            d.tag = DescriptorTag::R;
            d
        };
        db.insert(t.id, 0, &descriptor)?;
        if let Some(m) = maxout.as_mut() {
            if !m.tracks().contains(&t.id) {
                let k = mo_kfs[0] - t.start_frame;
                m.insert(t.id, 0, &td.sv_descriptor(k))?;
            }
        }
    }
    Ok(RHogBuild {
        db,
        maxout,
        views: store,
        stats,
    })
}

/// Runs every rotation of `views` on one keyframe, passing the densities of
/// accepted, contrast-normalized patches to `sink`.
fn synthesize_views(
    source: &GrayImage,
    surface: &LocalSurface,
    views: &ViewpointSet,
    visibility: f64,
    params: &DescriptorParams,
    stats: &mut SynthesisStats,
    mut sink: impl FnMut(&OrientationDensity, [f64; 3]) -> Result<()>,
) -> Result<()> {
    for (r, p) in views.rotations.iter().zip(&views.params) {
        let syn = match synthesize_patch(source, surface, r, visibility) {
            Ok(s) => s,
            Err(Error::SynthesisOutOfView) => {
                stats.views_out_of_view += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        if !syn.accepted {
            stats.views_rejected += 1;
            continue;
        }
        stats.views_accepted += 1;
        let mut values = syn.image.data().to_vec();
        normalize_patch(&mut values);
        let patch = GrayImage::new(syn.image.width(), syn.image.height(), values)?;
        let h = patch_density(&patch, params)?;
        sink(&h, *p)?;
    }
    Ok(())
}
