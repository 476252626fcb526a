//! Synthetic multi-view data with exact ground truth.

mod camera;
mod dataset;
mod render;
mod scene;

pub use camera::{axis_angle, is_rotation, level_to_base, PinholeCamera, Pose};
pub use dataset::{
    build_dataset, build_scene, decode_depth, encode_depth, generate_dataset, load_dataset, min_rotation_offset,
    orbit_poses, read_manifest, test_poses, write_dataset, Dataset, DatasetConfig, DatasetManifest, FrameEntry,
    NuisanceParams, OrbitParams, SceneParams, SurfaceKind, TestViewParams, MANIFEST_SCHEMA_VERSION,
};
pub use render::{
    back_project, ground_truth_correspondence, render_view, transfer_point, Correspondence, DepthMap,
    RenderSettings, RenderedFrame, OCCLUSION_TOLERANCE,
};
pub use scene::{generate_texture, sample_wrapped, HeightField, Hit, SceneModel, Surface, TextureParams};
