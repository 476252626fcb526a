//! The end-to-end benchmark: datasets, tracking, every method's database,
//! recognition rates, the excitation study and the complexity study.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hog::DescriptorParams;
use crate::imgproc::{build_pyramid, GrayImage, ImagePyramid};
use crate::matchdb::{DescriptorDatabase, Method, Metric};
use crate::mvhog::{excitation_score, raw_excitation, MvAccumulator};
use crate::synth::{build_dataset, write_dataset, Dataset};
use crate::tracker::{run_tracker, usable_levels, TrackerParams};

use super::config::ExperimentConfig;
use super::methods::{
    build_keepall_db, build_mv_db, build_rhog_db, build_sv_db, build_test_queries, query_pairs, recognition_rate,
    TrackData,
};
use super::report::{
    BenchmarkReport, ComplexityRow, ExcitationRow, MemoryRow, RateRow, SceneInfo, TimingRow, REPORT_SCHEMA_VERSION,
};

/// Purposes of the per-unit random streams.
const STREAM_SV: u64 = 1;
const STREAM_EXCITATION: u64 = 2;
const STREAM_COMPLEXITY: u64 = 3;

/// Independent stream for one (scene, patch size, purpose, trial) unit, so
/// results do not depend on the order units are processed in.
pub fn unit_rng(seed: u64, scene: usize, patch_size: usize, purpose: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((scene as u64) << 40) | ((patch_size as u64) << 24) | (purpose << 16) | trial as u64);
    rng
}

pub fn scene_name(index: usize) -> String {
    format!("scene{index}")
}

#[derive(Default)]
struct SceneOutput {
    infos: Vec<SceneInfo>,
    rates: Vec<RateRow>,
    excitation: Vec<ExcitationRow>,
    memory: Vec<MemoryRow>,
    timing: Vec<TimingRow>,
}

struct Timer<'a> {
    rows: &'a mut Vec<TimingRow>,
    scene: String,
    patch_size: usize,
}

impl Timer<'_> {
    fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.rows.push(TimingRow {
            scene: self.scene.clone(),
            patch_size: self.patch_size,
            stage: stage.to_string(),
            frames: 0,
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }
}

/// Tracks of at least `min_len` frames, at most `max` of them, in id order.
pub fn select_tracks(tracks: Vec<crate::tracker::Track>, min_len: usize, max: usize) -> Vec<crate::tracker::Track> {
    tracks.into_iter().filter(|t| t.len() >= min_len).take(max).collect()
}

pub fn pyramids(frames: &[crate::synth::RenderedFrame], levels: usize) -> Result<Vec<ImagePyramid>> {
    frames.iter().map(|f| build_pyramid(&f.image, levels)).collect()
}

/// Rates of one database under every metric.
fn score(
    out: &mut Vec<RateRow>,
    scene: &str,
    method: Method,
    patch_size: usize,
    metrics: &[Metric],
    queries: &[(u64, crate::hog::DescriptorVector)],
    dbs: &[DescriptorDatabase],
) -> Result<()> {
    for &metric in metrics {
        let mut total = 0.0;
        for db in dbs {
            total += recognition_rate(queries, db, metric)?;
        }
        out.push(RateRow {
            scene: scene.to_string(),
            method,
            patch_size,
            metric,
            rate: total / dbs.len() as f64,
            queries: queries.len(),
        });
    }
    Ok(())
}

fn memory_row(scene: &str, patch_size: usize, db: &DescriptorDatabase) -> MemoryRow {
    MemoryRow {
        scene: scene.to_string(),
        patch_size,
        method: db.method(),
        entries: db.len(),
        bytes: db.memory_bytes(),
    }
}

fn run_patch_size(
    cfg: &ExperimentConfig,
    index: usize,
    ds: &Dataset,
    train_pyr: &[ImagePyramid],
    test_pyr: &[ImagePyramid],
    patch_size: usize,
    out: &mut SceneOutput,
) -> Result<()> {
    let scene = scene_name(index);
    let params: DescriptorParams = cfg.descriptor.params(patch_size);
    let metrics = cfg.metrics();
    let mut timing = Vec::new();
    let mut timer = Timer {
        rows: &mut timing,
        scene: scene.clone(),
        patch_size,
    };

    let tparams = TrackerParams {
        patch_size,
        ..cfg.tracker.clone()
    };
    let frames: Vec<GrayImage> = ds.training.iter().map(|f| f.image.clone()).collect();
    let all_tracks = timer
        .time("tracking", || run_tracker(&frames, &tparams))
        .map_err(|e| e.in_stage("tracking"))?;
    let detected = all_tracks.len();
    let selected = select_tracks(all_tracks, cfg.min_track_len, cfg.max_tracks);
    let tracks: Vec<TrackData> = timer
        .time("densities", || selected.into_iter().map(|t| TrackData::new(t, &params)).collect::<Result<Vec<_>>>())
        .map_err(|e| e.in_stage("densities"))?;
    if tracks.is_empty() {
        return Err(Error::Empty("tracks long enough to describe").in_stage("tracking"));
    }
    let queries = timer
        .time("queries", || build_test_queries(&ds.training, &ds.test, test_pyr, &tracks, &params))
        .map_err(|e| e.in_stage("queries"))?;
    if queries.is_empty() {
        return Err(Error::Empty("covisible test queries").in_stage("queries"));
    }
    let pairs = query_pairs(&queries);

    let mut info = SceneInfo {
        scene: scene.clone(),
        seed: ds.config.seed,
        patch_size,
        tracks_detected: detected,
        tracks_used: tracks.len(),
        mean_track_len: tracks.iter().map(|t| t.len() as f64).sum::<f64>() / tracks.len() as f64,
        queries: queries.len(),
        sv_frames: Vec::new(),
        synthesis: None,
    };

    let wants = |m: Method| cfg.methods.contains(&m);
    if wants(Method::SvHog) {
        let mut dbs = Vec::with_capacity(cfg.sv_trials);
        timer.time("build:sv_hog", || -> Result<()> {
            for trial in 0..cfg.sv_trials {
                let mut rng = unit_rng(cfg.seed, index, patch_size, STREAM_SV, trial);
                let (db, chosen) = build_sv_db(&tracks, &params, cfg.metric, &mut rng)?;
                dbs.push(db);
                info.sv_frames.push(chosen);
            }
            Ok(())
        })
        .map_err(|e| e.in_stage("sv_hog"))?;
        timer.time("query:sv_hog", || score(&mut out.rates, &scene, Method::SvHog, patch_size, &metrics, &pairs, &dbs))?;
        out.memory.push(memory_row(&scene, patch_size, &dbs[0]));
    }
    if wants(Method::MvHog) {
        let db = timer
            .time("build:mv_hog", || build_mv_db(&tracks, &params, cfg.metric))
            .map_err(|e| e.in_stage("mv_hog"))?;
        timer.time("query:mv_hog", || {
            score(&mut out.rates, &scene, Method::MvHog, patch_size, &metrics, &pairs, std::slice::from_ref(&db))
        })?;
        out.memory.push(memory_row(&scene, patch_size, &db));
    }
    if wants(Method::KeepAll) {
        let db = timer
            .time("build:keep_all", || build_keepall_db(&tracks, &params, cfg.metric))
            .map_err(|e| e.in_stage("keep_all"))?;
        timer.time("query:keep_all", || {
            score(&mut out.rates, &scene, Method::KeepAll, patch_size, &metrics, &pairs, std::slice::from_ref(&db))
        })?;
        out.memory.push(memory_row(&scene, patch_size, &db));
    }
    if wants(Method::RHog) || wants(Method::RHogMaxOut) {
        let built = timer
            .time("build:r_hog", || {
                build_rhog_db(&tracks, &ds.training, train_pyr, &params, &cfg.rhog, cfg.metric, wants(Method::RHogMaxOut))
            })
            .map_err(|e| e.in_stage("r_hog"))?;
        info.synthesis = Some(built.stats);
        if wants(Method::RHog) {
            timer.time("query:r_hog", || {
                score(&mut out.rates, &scene, Method::RHog, patch_size, &metrics, &pairs, std::slice::from_ref(&built.db))
            })?;
            out.memory.push(memory_row(&scene, patch_size, &built.db));
        }
        if let Some(db) = &built.maxout {
            timer.time("query:r_hog_maxout", || {
                score(&mut out.rates, &scene, Method::RHogMaxOut, patch_size, &metrics, &pairs, std::slice::from_ref(db))
            })?;
            out.memory.push(memory_row(&scene, patch_size, db));
        }
    }

    if !cfg.excitation_windows.is_empty() {
        let rows = timer
            .time("excitation", || excitation_study(cfg, index, patch_size, &tracks, &params, &pairs))
            .map_err(|e| e.in_stage("excitation"))?;
        out.excitation.extend(rows);
    }
    out.infos.push(info);
    out.timing.extend(timing);
    Ok(())
}

/// MV-HOG over one random contiguous window of each track, for every window
/// size; tracks shorter than the window use all their frames.
pub fn excitation_study(
    cfg: &ExperimentConfig,
    index: usize,
    patch_size: usize,
    tracks: &[TrackData],
    params: &DescriptorParams,
    queries: &[(u64, crate::hog::DescriptorVector)],
) -> Result<Vec<ExcitationRow>> {
    let scene = scene_name(index);
    let full: Vec<f64> = tracks
        .iter()
        .map(|t| raw_excitation(&t.track.patches))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(cfg.excitation_windows.len());
    for (wi, &k) in cfg.excitation_windows.iter().enumerate() {
        let mut rng = unit_rng(cfg.seed, index, patch_size, STREAM_EXCITATION, wi);
        let mut db = DescriptorDatabase::new(Method::MvHog, cfg.metric, params.bins, params.descriptor_len())?;
        let (mut exc, mut raw) = (0.0, 0.0);
        for (td, &norm) in tracks.iter().zip(&full) {
            let count = k.min(td.len());
            let start = rng.random_range(0..=td.len() - count);
            let window = &td.track.patches[start..start + count];
            exc += excitation_score(window, norm)?;
            raw += raw_excitation(window)?;
            db.insert(td.id(), start as u32, &td.mv_descriptor(start, count, params)?)?;
        }
        rows.push(ExcitationRow {
            scene: scene.clone(),
            patch_size,
            window: k,
            mean_excitation: exc / tracks.len() as f64,
            mean_raw_excitation: raw / tracks.len() as f64,
            rate: recognition_rate(queries, &db, cfg.metric)?,
            tracks: tracks.len(),
        });
    }
    Ok(rows)
}

fn run_scene(cfg: &ExperimentConfig, index: usize) -> Result<SceneOutput> {
    let mut out = SceneOutput::default();
    let dcfg = cfg.scene_dataset(index);
    let start = Instant::now();
    let ds = build_dataset(&dcfg).map_err(|e| e.in_stage("dataset"))?;
    out.timing.push(TimingRow {
        scene: scene_name(index),
        patch_size: 0,
        stage: "dataset".into(),
        frames: 0,
        seconds: start.elapsed().as_secs_f64(),
    });
    if cfg.write_datasets {
        let dir = cfg.output_dir.join("datasets").join(scene_name(index));
        write_dataset(&ds, &dir).map_err(|e| e.in_stage("dataset"))?;
    }
    let levels = usable_levels(dcfg.camera.width, dcfg.camera.height, cfg.tracker.levels);
    let train_pyr = pyramids(&ds.training, levels).map_err(|e| e.in_stage("pyramids"))?;
    let test_pyr = pyramids(&ds.test, levels).map_err(|e| e.in_stage("pyramids"))?;
    for &p in &cfg.patch_sizes {
        run_patch_size(cfg, index, &ds, &train_pyr, &test_pyr, p, &mut out)?;
    }
    Ok(out)
}

/// Storage per track and MV-HOG update cost as functions of the number of
/// frames folded in, on seeded random patches.
pub fn complexity_study(cfg: &ExperimentConfig) -> Result<(Vec<ComplexityRow>, Vec<TimingRow>)> {
    let patch_size = cfg.patch_sizes[0];
    let params = cfg.descriptor.params(patch_size);
    let mut rng = unit_rng(cfg.seed, 0xFFFF, patch_size, STREAM_COMPLEXITY, 0);
    const BATCH: usize = 32;
    const PASSES: usize = 4;
    let patches: Vec<GrayImage> = (0..BATCH)
        .map(|_| GrayImage::from_fn(patch_size, patch_size, |_, _| rng.random::<f64>()))
        .collect::<Result<Vec<_>>>()?;
    let dim = params.descriptor_len();
    let mut rows = Vec::new();
    let mut accumulators = Vec::new();
    for &t in &cfg.complexity_frames {
        let mut acc = MvAccumulator::new(params)?;
        let mut keep = DescriptorDatabase::new(Method::KeepAll, cfg.metric, params.bins, dim)?;
        let mut mv = DescriptorDatabase::new(Method::MvHog, cfg.metric, params.bins, dim)?;
        for k in 0..t {
            let p = &patches[k % BATCH];
            acc.update(p)?;
            keep.insert(0, k as u32, &crate::hog::sv_dog(p, &params)?)?;
        }
        mv.insert(0, 0, &acc.finalize()?)?;
        rows.push(ComplexityRow {
            frames: t,
            mv_accumulator_bytes: acc.memory_bytes(),
            mv_db_bytes: mv.memory_bytes(),
            keepall_db_bytes: keep.memory_bytes(),
        });
        accumulators.push(acc);
    }
    // rounds visit every length in turn so slow periods affect all of them
    let mut best = vec![f64::INFINITY; accumulators.len()];
    for _ in 0..cfg.timing_repeats.max(1) * 4 {
        for (acc, b) in accumulators.iter().zip(best.iter_mut()) {
            let mut a = acc.clone();
            let start = Instant::now();
            for _ in 0..PASSES {
                for p in &patches {
                    a.update(p)?;
                }
            }
            *b = b.min(start.elapsed().as_secs_f64() / (BATCH * PASSES) as f64);
            std::hint::black_box(&a);
        }
    }
    let timing = cfg
        .complexity_frames
        .iter()
        .zip(best)
        .map(|(&t, seconds)| TimingRow {
            scene: "complexity".into(),
            patch_size,
            stage: "mv_update".into(),
            frames: t,
            seconds,
        })
        .collect();
    Ok((rows, timing))
}

/// Runs every scene and study and assembles the report. Nothing is written
/// to disk except optional datasets; see [`run_and_write`].
pub fn run_benchmark(cfg: &ExperimentConfig) -> Result<BenchmarkReport> {
    cfg.validate()?;
    let outputs: Vec<SceneOutput> = (0..cfg.scenes)
        .into_par_iter()
        .map(|i| run_scene(cfg, i))
        .collect::<Result<Vec<_>>>()?;
    let (complexity, complexity_timing) = complexity_study(cfg).map_err(|e| e.in_stage("complexity"))?;
    let mut report = BenchmarkReport {
        schema_version: REPORT_SCHEMA_VERSION,
        seed: cfg.seed,
        scenes: Vec::new(),
        rates: Vec::new(),
        summary: Vec::new(),
        excitation: Vec::new(),
        excitation_summary: Vec::new(),
        excitation_spearman: None,
        memory: Vec::new(),
        complexity,
        timing: Vec::new(),
    };
    for o in outputs {
        report.scenes.extend(o.infos);
        report.rates.extend(o.rates);
        report.excitation.extend(o.excitation);
        report.memory.extend(o.memory);
        report.timing.extend(o.timing);
    }
    report.timing.extend(complexity_timing);
    report.summarize();
    Ok(report)
}

/// [`run_benchmark`] followed by writing all report files to `output_dir`.
pub fn run_and_write(cfg: &ExperimentConfig) -> Result<BenchmarkReport> {
    let report = run_benchmark(cfg)?;
    report.write(&cfg.output_dir).map_err(|e| e.in_stage("report"))?;
    Ok(report)
}
