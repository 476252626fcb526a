//! Seeded multi-view datasets: a closed training orbit around a textured
//! surface plus test views placed away from it.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::camera::{PinholeCamera, Pose};
use super::render::{render_view, DepthMap, RenderSettings, RenderedFrame};
use super::scene::{generate_texture, HeightField, SceneModel, Surface, TextureParams};
use crate::error::{Error, Result};
use crate::imgproc::{read_pgm, write_pgm, Contrast, GrayImage};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const DEPTH_MAGIC: &[u8; 4] = b"DPTH";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SurfaceKind {
    Plane,
    HeightField,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneParams {
    pub surface: SurfaceKind,
    /// Half-width of the square surface patch, meters.
    pub extent: f64,
    pub height_grid: usize,
    pub height_spacing: f64,
    pub height_amplitude: f64,
    pub texture: TextureParams,
    pub texels_per_meter: f64,
    pub background: f64,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            surface: SurfaceKind::HeightField,
            extent: 4.0,
            height_grid: 28,
            height_spacing: 0.3,
            height_amplitude: 0.12,
            texture: TextureParams::default(),
            texels_per_meter: 128.0,
            background: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OrbitParams {
    pub frames: usize,
    /// Nominal camera distance to the object origin, meters.
    pub distance: f64,
    /// Relative distance swing along the orbit.
    pub distance_variation: f64,
    /// Nominal viewing direction: angle from the surface normal and azimuth.
    pub polar_deg: f64,
    pub azimuth_deg: f64,
    /// Semi-axes of the elliptical orbit in (polar, azimuth) space.
    pub polar_radius_deg: f64,
    pub azimuth_radius_deg: f64,
    /// Camera roll oscillation amplitude.
    pub roll_deg: f64,
}

impl Default for OrbitParams {
    fn default() -> Self {
        Self {
            frames: 30,
            distance: 2.0,
            distance_variation: 0.08,
            polar_deg: 25.0,
            azimuth_deg: 0.0,
            polar_radius_deg: 10.0,
            azimuth_radius_deg: 20.0,
            roll_deg: 8.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TestViewParams {
    pub count: usize,
    /// Every test pose is at least this far (geodesic rotation angle) from
    /// every training pose.
    pub min_offset_deg: f64,
    /// Extra angle added to the orbit semi-axes when placing test views.
    pub offset_deg: f64,
    pub roll_deg: f64,
    pub distance_jitter: f64,
}

impl Default for TestViewParams {
    fn default() -> Self {
        Self {
            count: 6,
            min_offset_deg: 15.0,
            offset_deg: 12.0,
            roll_deg: 12.0,
            distance_jitter: 0.1,
        }
    }
}

/// Photometric nuisances applied per frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NuisanceParams {
    pub train_noise: f64,
    pub test_noise: f64,
    pub train_gain_jitter: f64,
    pub test_gain_range: (f64, f64),
    pub test_gamma_range: (f64, f64),
}

impl Default for NuisanceParams {
    fn default() -> Self {
        Self {
            train_noise: 0.01,
            test_noise: 0.01,
            train_gain_jitter: 0.03,
            test_gain_range: (0.7, 1.0),
            test_gamma_range: (0.8, 1.25),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub seed: u64,
    pub camera: PinholeCamera,
    pub scene: SceneParams,
    pub orbit: OrbitParams,
    pub test: TestViewParams,
    pub nuisance: NuisanceParams,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            camera: PinholeCamera {
                focal: 220.0,
                cx: 95.5,
                cy: 71.5,
                width: 192,
                height: 144,
            },
            scene: SceneParams::default(),
            orbit: OrbitParams::default(),
            test: TestViewParams::default(),
            nuisance: NuisanceParams::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub index: usize,
    pub pose: Pose,
    pub contrast: Contrast,
    pub noise_sigma: f64,
    pub image: String,
    pub depth: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub seed: u64,
    pub camera: PinholeCamera,
    pub config: DatasetConfig,
    pub texture: String,
    pub training: Vec<FrameEntry>,
    pub test: Vec<FrameEntry>,
}

/// A dataset held in memory.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub config: DatasetConfig,
    pub scene: SceneModel,
    pub training: Vec<RenderedFrame>,
    pub test: Vec<RenderedFrame>,
}

fn deg(v: f64) -> f64 {
    v * PI / 180.0
}

fn view_pose(distance: f64, polar: f64, azimuth: f64, roll: f64) -> Pose {
    let dir = Vector3::new(polar.sin() * azimuth.cos(), polar.sin() * azimuth.sin(), polar.cos());
    // looking straight down needs another up hint
    let up = if polar.abs() < 1e-6 { Vector3::y() } else { Vector3::z() };
    Pose::look_at(dir * distance, Vector3::zeros(), up, roll)
}

/// Camera poses of the closed training orbit.
pub fn orbit_poses(p: &OrbitParams) -> Vec<Pose> {
    (0..p.frames)
        .map(|t| {
            let a = 2.0 * PI * t as f64 / p.frames as f64;
            let polar = deg(p.polar_deg + p.polar_radius_deg * a.sin());
            let azimuth = deg(p.azimuth_deg + p.azimuth_radius_deg * a.cos());
            let distance = p.distance * (1.0 + p.distance_variation * (2.0 * a).sin());
            let roll = deg(p.roll_deg) * (a + 0.5).sin();
            view_pose(distance, polar, azimuth, roll)
        })
        .collect()
}

/// Smallest geodesic rotation angle from `pose` to any of `others`.
pub fn min_rotation_offset(pose: &Pose, others: &[Pose]) -> f64 {
    others
        .iter()
        .map(|o| pose.rotation_angle_to(o))
        .fold(f64::INFINITY, f64::min)
}

/// Test poses placed on an ellipse wider than the orbit, pushed outward
/// until they clear `min_offset_deg` from every training pose.
pub fn test_poses(orbit: &OrbitParams, test: &TestViewParams, training: &[Pose], rng: &mut ChaCha8Rng) -> Vec<Pose> {
    (0..test.count)
        .map(|k| {
            let a = 2.0 * PI * (k as f64 + 0.25) / test.count as f64;
            let roll = deg(test.roll_deg) * (2.0 * rng.random::<f64>() - 1.0);
            let distance = orbit.distance * (1.0 + test.distance_jitter * (2.0 * rng.random::<f64>() - 1.0));
            let mut extra = test.offset_deg;
            loop {
                let polar = orbit.polar_deg + (orbit.polar_radius_deg + extra) * a.sin();
                let azimuth = orbit.azimuth_deg + (orbit.azimuth_radius_deg + extra) * a.cos();
                let pose = view_pose(distance, deg(polar.clamp(0.0, 80.0)), deg(azimuth), roll);
                if min_rotation_offset(&pose, training) >= deg(test.min_offset_deg) || extra > 90.0 {
                    return pose;
                }
                extra += 1.0;
            }
        })
        .collect()
}

pub fn build_scene(params: &SceneParams, seed: u64) -> Result<SceneModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_5CE7E);
    let surface = match params.surface {
        SurfaceKind::Plane => Surface::Plane,
        SurfaceKind::HeightField => Surface::HeightField(HeightField::random(
            params.height_grid,
            params.height_spacing,
            params.height_amplitude,
            &mut rng,
        )),
    };
    let texture = generate_texture(&params.texture, rng.random())?;
    Ok(SceneModel {
        surface,
        texture,
        texels_per_meter: params.texels_per_meter,
        extent: params.extent,
        placement: Pose::identity(),
        background: params.background,
    })
}

/// Rounds intensities to 8 bits and depths to f32 so that a dataset read
/// back from disk is identical to the one held in memory.
fn quantize(mut frame: RenderedFrame) -> Result<RenderedFrame> {
    frame.image = GrayImage::from_u8(frame.image.width(), frame.image.height(), &frame.image.to_u8())?;
    frame.depth.data.iter_mut().for_each(|d| *d = f64::from(*d as f32));
    Ok(frame)
}

pub fn build_dataset(cfg: &DatasetConfig) -> Result<Dataset> {
    cfg.camera.validate()?;
    if cfg.orbit.frames < 2 {
        return Err(Error::InvalidParam("orbit needs at least 2 frames".into()));
    }
    let scene = build_scene(&cfg.scene, cfg.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let train_poses = orbit_poses(&cfg.orbit);
    let test_poses = test_poses(&cfg.orbit, &cfg.test, &train_poses, &mut rng);
    let n = &cfg.nuisance;
    let mut training = Vec::with_capacity(train_poses.len());
    for pose in &train_poses {
        let a = 1.0 + n.train_gain_jitter * (2.0 * rng.random::<f64>() - 1.0);
        let b = 0.5 * (1.0 - a);
        let settings = RenderSettings {
            contrast: Contrast::Affine { a, b },
            noise_sigma: n.train_noise,
            seed: rng.random(),
        };
        training.push(quantize(render_view(&scene, &cfg.camera, pose, &settings)?)?);
    }
    let mut test = Vec::with_capacity(test_poses.len());
    for pose in &test_poses {
        let gamma = rng.random_range(n.test_gamma_range.0..=n.test_gamma_range.1);
        let gain = rng.random_range(n.test_gain_range.0..=n.test_gain_range.1);
        let offset = (1.0 - gain) * rng.random::<f64>();
        // gamma then gain/offset, tabulated as one monotone curve
        let values = (0..=64)
            .map(|i| {
                let v = i as f64 / 64.0;
                gain * v.powf(gamma) + offset + 1e-9 * i as f64
            })
            .collect();
        let settings = RenderSettings {
            contrast: Contrast::Table { values },
            noise_sigma: n.test_noise,
            seed: rng.random(),
        };
        test.push(quantize(render_view(&scene, &cfg.camera, pose, &settings)?)?);
    }
    Ok(Dataset {
        config: cfg.clone(),
        scene,
        training,
        test,
    })
}

pub fn encode_depth(depth: &DepthMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * depth.data.len());
    out.extend_from_slice(DEPTH_MAGIC);
    out.extend_from_slice(&(depth.width as u32).to_le_bytes());
    out.extend_from_slice(&(depth.height as u32).to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for &d in &depth.data {
        out.extend_from_slice(&(d as f32).to_le_bytes());
    }
    out
}

pub fn decode_depth(bytes: &[u8]) -> Result<DepthMap> {
    if bytes.len() < 16 || &bytes[..4] != DEPTH_MAGIC {
        return Err(Error::format("depth raster", "bad magic"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (width, height) = (word(4), word(8));
    if bytes.len() != 16 + 4 * width * height {
        return Err(Error::format("depth raster", "size does not match header"));
    }
    let data = bytes[16..]
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
        .collect();
    Ok(DepthMap { width, height, data })
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn frame_entries(frames: &[RenderedFrame], dir: &Path, prefix: &str) -> Result<Vec<FrameEntry>> {
    let mut entries = Vec::with_capacity(frames.len());
    for (i, f) in frames.iter().enumerate() {
        let image = format!("{prefix}/{i:04}.pgm");
        let depth = format!("{prefix}/{i:04}.depth");
        write_pgm(&dir.join(&image), &f.image)?;
        write_bytes(&dir.join(&depth), &encode_depth(&f.depth))?;
        entries.push(FrameEntry {
            index: i,
            pose: f.pose,
            contrast: f.contrast.clone(),
            noise_sigma: f.noise_sigma,
            image,
            depth,
        });
    }
    Ok(entries)
}

/// Writes frames, depth rasters, the texture and `manifest.json` to `dir`.
pub fn write_dataset(ds: &Dataset, dir: &Path) -> Result<DatasetManifest> {
    for sub in ["train", "test"] {
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    write_pgm(&dir.join("texture.pgm"), &ds.scene.texture)?;
    let manifest = DatasetManifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        seed: ds.config.seed,
        camera: ds.config.camera,
        config: ds.config.clone(),
        texture: "texture.pgm".into(),
        training: frame_entries(&ds.training, dir, "train")?,
        test: frame_entries(&ds.test, dir, "test")?,
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    write_bytes(&dir.join("manifest.json"), json.as_bytes())?;
    Ok(manifest)
}

pub fn generate_dataset(cfg: &DatasetConfig, out_dir: &Path) -> Result<DatasetManifest> {
    let ds = build_dataset(cfg)?;
    write_dataset(&ds, out_dir)
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text)?;
    if manifest.schema_version != MANIFEST_SCHEMA_VERSION {
        return Err(Error::format(
            "manifest",
            format!("unsupported schema version {}", manifest.schema_version),
        ));
    }
    Ok(manifest)
}

fn load_frames(entries: &[FrameEntry], dir: &Path, camera: &PinholeCamera) -> Result<Vec<RenderedFrame>> {
    entries
        .iter()
        .map(|e| {
            let depth_path: PathBuf = dir.join(&e.depth);
            let bytes = fs::read(&depth_path).map_err(|err| Error::io(&depth_path, err))?;
            Ok(RenderedFrame {
                image: read_pgm(&dir.join(&e.image))?,
                depth: decode_depth(&bytes)?,
                camera: *camera,
                pose: e.pose,
                contrast: e.contrast.clone(),
                noise_sigma: e.noise_sigma,
            })
        })
        .collect()
}

/// Reads a dataset written by [`write_dataset`]; the scene geometry is
/// rebuilt from the recorded parameters and the texture from its file.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest = read_manifest(dir)?;
    let mut scene = build_scene(&manifest.config.scene, manifest.config.seed)?;
    scene.texture = read_pgm(&dir.join(&manifest.texture))?;
    Ok(Dataset {
        config: manifest.config.clone(),
        scene,
        training: load_frames(&manifest.training, dir, &manifest.camera)?,
        test: load_frames(&manifest.test, dir, &manifest.camera)?,
    })
}
