//! File formats and persistence: PLY point clouds, JSON configuration and
//! parameter files, trajectory directories, and PNG images. Byte-level
//! parsers (`parse_*`) are exposed separately from the path-based loaders so
//! untrusted input can be fed to them directly.

pub mod formats;
pub mod images;
pub mod ply;
pub mod trajectory;

pub use formats::{
    load_camera, load_checkpoint, load_scenario, load_similarity, load_topology, parse_camera,
    parse_checkpoint, parse_metric_report, parse_scenario, parse_similarity, parse_topology,
    save_camera, save_checkpoint, save_metric_report, save_scenario, save_similarity,
    save_topology, write_loss_csv, CameraFile, CheckpointConstants, CloudMetrics, GroundSpec,
    ImageMetrics, MetricReportFile, ParamCheckpoint, ScenarioConfig, SimilarityFile, TopologyFile,
    FORMAT_VERSION,
};
pub use images::{load_png, save_png};
pub use ply::{encode_ply, load_ply, parse_ply, save_ply};
pub use trajectory::{load_trajectory, parse_manifest, save_trajectory, TrajectoryManifest};
