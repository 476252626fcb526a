//! End-to-end benchmark orchestration and reporting.

mod bench;
mod config;
mod methods;
mod report;
pub mod stats;

pub use bench::{complexity_study, excitation_study, pyramids, run_and_write, run_benchmark, scene_name, select_tracks, unit_rng};
pub use config::{DescriptorConfig, ExperimentConfig, RHogConfig};
pub use methods::{
    build_keepall_db, build_mv_db, build_rhog_db, build_sv_db, build_test_queries, query_pairs, recognition_rate,
    uniform_keyframes, Query, RHogBuild, SynthesisStats, TrackData,
};
pub use report::{
    BenchmarkReport, ComplexityRow, ExcitationRow, ExcitationSummary, MemoryRow, MethodSummary, RateRow, SceneInfo,
    TimingRow, REPORT_SCHEMA_VERSION,
};
