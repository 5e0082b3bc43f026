//! JSON file formats: scenarios, parameter checkpoints, spring topologies,
//! cameras, similarity transforms, and metric reports, plus the loss-history
//! CSV. Every format carries a `format_version` and refuses versions it does
//! not know. Writers emit pretty JSON with a trailing newline so identical
//! data always produces identical bytes.

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::dynamics::{BoundaryParams, PhysicalParams, SimConstants};
use crate::error::{Error, Result};
use crate::geometry::SpringTopology;
use crate::identification::IterationRecord;
use crate::registration::Similarity;
use crate::splat::Camera;

pub const FORMAT_VERSION: u32 = 1;

fn check_version(what: &'static str, found: u32) -> Result<()> {
    if found != FORMAT_VERSION {
        return Err(Error::FormatVersion { what, found, supported: FORMAT_VERSION });
    }
    Ok(())
}

fn require_finite(what: &'static str, values: &[f64]) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput { what });
    }
    Ok(())
}

fn to_json(value: &impl Serialize, what: &'static str) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(what, e))?;
    text.push('\n');
    Ok(text)
}

fn write_json(value: &impl Serialize, what: &'static str, path: &Path) -> Result<()> {
    std::fs::write(path, to_json(value, what)?).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Ground plane as stored on disk; mirrors [`BoundaryParams`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundSpec {
    pub height: f64,
    pub friction_logit: f64,
    pub sticky: bool,
}

impl From<BoundaryParams> for GroundSpec {
    fn from(b: BoundaryParams) -> Self {
        GroundSpec { height: b.height, friction_logit: b.friction_logit, sticky: b.sticky }
    }
}

impl From<GroundSpec> for BoundaryParams {
    fn from(g: GroundSpec) -> Self {
        BoundaryParams { height: g.height, friction_logit: g.friction_logit, sticky: g.sticky }
    }
}

/// Everything that defines a simulation run apart from the learned physics:
/// scene forces, ground, timing, and optional overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub format_version: u32,
    /// Gravitational acceleration (m/s^2).
    pub gravity: [f64; 3],
    pub ground: GroundSpec,
    /// Multiplies every spring stiffness k_i; 1 leaves the checkpoint as is.
    pub stiffness_scale: f64,
    /// Replaces the checkpoint initial velocity when present.
    pub v0_override: Option<[f64; 3]>,
    /// Keyframe rate (frames per second).
    pub fps: f64,
    /// Keyframes to simulate, including the initial state.
    pub n_frames: usize,
    /// Integration substeps per keyframe interval.
    pub n_t: usize,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            format_version: FORMAT_VERSION,
            gravity: [0.0, 0.0, -9.8],
            ground: BoundaryParams::default().into(),
            stiffness_scale: 1.0,
            v0_override: None,
            fps: 30.0,
            n_frames: 30,
            n_t: 4,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        check_version("scenario", self.format_version)?;
        require_finite("scenario gravity", &self.gravity)?;
        require_finite(
            "scenario ground",
            &[self.ground.height, self.ground.friction_logit],
        )?;
        if !(self.stiffness_scale.is_finite() && self.stiffness_scale > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "stiffness scale must be positive, got {}",
                self.stiffness_scale
            )));
        }
        if let Some(v) = self.v0_override {
            require_finite("scenario v0 override", &v)?;
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::InvalidArgument(format!("fps must be positive, got {}", self.fps)));
        }
        if self.n_frames < 2 {
            return Err(Error::InvalidArgument(format!(
                "a scenario needs at least 2 keyframes, got {}",
                self.n_frames
            )));
        }
        if self.n_t < 1 {
            return Err(Error::InvalidArgument("n_t must be >= 1".into()));
        }
        Ok(())
    }

    pub fn gravity_vector(&self) -> Vector3<f64> {
        Vector3::new(self.gravity[0], self.gravity[1], self.gravity[2])
    }

    pub fn dt_frame(&self) -> f64 {
        1.0 / self.fps
    }
}

pub fn parse_scenario(data: &[u8]) -> Result<ScenarioConfig> {
    let config: ScenarioConfig =
        serde_json::from_slice(data).map_err(|e| Error::json("scenario", e))?;
    config.validate()?;
    Ok(config)
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioConfig> {
    parse_scenario(&read_file(path.as_ref())?)
}

pub fn save_scenario(config: &ScenarioConfig, path: impl AsRef<Path>) -> Result<()> {
    config.validate()?;
    write_json(config, "scenario", path.as_ref())
}

/// The fixed model constants stored alongside learned parameters. Gravity is
/// deliberately absent: it belongs to the scenario, not the material.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckpointConstants {
    pub mass: f64,
    pub damping: f64,
    pub spring_exponent: f64,
    pub binding_exponent: f64,
    pub n_k: usize,
    pub n_b: usize,
    pub n_c: usize,
}

/// Learned physical parameters in portable form. The topology fingerprint
/// pins the checkpoint to the exact spring table it was trained on; per-anchor
/// stiffness applied to a different anchor ordering would be silently wrong.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamCheckpoint {
    pub format_version: u32,
    pub v0: [f64; 3],
    pub log_k: Vec<f64>,
    pub kappa: f64,
    pub boundary: GroundSpec,
    pub constants: CheckpointConstants,
    pub topology_fingerprint: String,
}

impl ParamCheckpoint {
    pub fn from_params(params: &PhysicalParams, topology: &SpringTopology) -> Self {
        let c = &params.constants;
        ParamCheckpoint {
            format_version: FORMAT_VERSION,
            v0: [params.v0.x, params.v0.y, params.v0.z],
            log_k: params.log_k.clone(),
            kappa: params.kappa,
            boundary: params.boundary.into(),
            constants: CheckpointConstants {
                mass: c.mass,
                damping: c.damping,
                spring_exponent: c.spring_exponent,
                binding_exponent: c.binding_exponent,
                n_k: c.n_k,
                n_b: c.n_b,
                n_c: c.n_c,
            },
            topology_fingerprint: topology.fingerprint(),
        }
    }

    /// Rebuilds runtime parameters against `topology`, refusing any topology
    /// that does not match the stored fingerprint. Gravity comes from the
    /// caller (normally the scenario).
    pub fn into_params(
        &self,
        topology: &SpringTopology,
        gravity: Vector3<f64>,
    ) -> Result<PhysicalParams> {
        self.validate()?;
        let actual = topology.fingerprint();
        if actual != self.topology_fingerprint {
            return Err(Error::FingerprintMismatch {
                expected: self.topology_fingerprint.clone(),
                actual,
            });
        }
        if self.log_k.len() != topology.n_anchors() {
            return Err(Error::SizeMismatch {
                what: "checkpoint log_k",
                expected: topology.n_anchors(),
                actual: self.log_k.len(),
            });
        }
        if self.constants.n_k != topology.n_k {
            return Err(Error::SizeMismatch {
                what: "checkpoint n_k",
                expected: topology.n_k,
                actual: self.constants.n_k,
            });
        }
        let c = self.constants;
        Ok(PhysicalParams {
            v0: Vector3::new(self.v0[0], self.v0[1], self.v0[2]),
            log_k: self.log_k.clone(),
            kappa: self.kappa,
            boundary: self.boundary.into(),
            constants: SimConstants {
                mass: c.mass,
                damping: c.damping,
                spring_exponent: c.spring_exponent,
                binding_exponent: c.binding_exponent,
                n_k: c.n_k,
                n_b: c.n_b,
                n_c: c.n_c,
                gravity,
            },
        })
    }

    pub fn validate(&self) -> Result<()> {
        check_version("checkpoint", self.format_version)?;
        require_finite("checkpoint v0", &self.v0)?;
        require_finite("checkpoint log_k", &self.log_k)?;
        require_finite("checkpoint kappa", &[self.kappa])?;
        require_finite(
            "checkpoint boundary",
            &[self.boundary.height, self.boundary.friction_logit],
        )?;
        let c = self.constants;
        require_finite(
            "checkpoint constants",
            &[c.mass, c.damping, c.spring_exponent, c.binding_exponent],
        )?;
        if !(c.mass > 0.0) {
            return Err(Error::InvalidArgument(format!("mass must be positive, got {}", c.mass)));
        }
        if c.damping < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "damping must be non-negative, got {}",
                c.damping
            )));
        }
        if c.spring_exponent < 0.0 || c.binding_exponent < 0.0 {
            return Err(Error::InvalidArgument(
                "force exponents must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

pub fn parse_checkpoint(data: &[u8]) -> Result<ParamCheckpoint> {
    let checkpoint: ParamCheckpoint =
        serde_json::from_slice(data).map_err(|e| Error::json("checkpoint", e))?;
    checkpoint.validate()?;
    Ok(checkpoint)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ParamCheckpoint> {
    parse_checkpoint(&read_file(path.as_ref())?)
}

pub fn save_checkpoint(checkpoint: &ParamCheckpoint, path: impl AsRef<Path>) -> Result<()> {
    checkpoint.validate()?;
    write_json(checkpoint, "checkpoint", path.as_ref())
}

/// Spring table on disk. The fingerprint is stored redundantly and verified
/// on load so checkpoints can be matched without rebuilding anything.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyFile {
    pub format_version: u32,
    pub n_k: usize,
    pub n_anchors: usize,
    /// Row-major neighbor indices, `n_anchors * n_k` entries.
    pub neighbors: Vec<u32>,
    /// Rest lengths, same layout as `neighbors`.
    pub rest_lengths: Vec<f64>,
    pub fingerprint: String,
}

impl TopologyFile {
    pub fn from_topology(topology: &SpringTopology) -> Self {
        TopologyFile {
            format_version: FORMAT_VERSION,
            n_k: topology.n_k,
            n_anchors: topology.n_anchors(),
            neighbors: topology.neighbors.clone(),
            rest_lengths: topology.rest_lengths.clone(),
            fingerprint: topology.fingerprint(),
        }
    }

    pub fn into_topology(&self) -> Result<SpringTopology> {
        check_version("topology", self.format_version)?;
        let expected = self
            .n_anchors
            .checked_mul(self.n_k)
            .ok_or_else(|| Error::InvalidArgument("topology dimensions overflow".into()))?;
        if self.neighbors.len() != expected {
            return Err(Error::SizeMismatch {
                what: "topology neighbors",
                expected,
                actual: self.neighbors.len(),
            });
        }
        if self.rest_lengths.len() != expected {
            return Err(Error::SizeMismatch {
                what: "topology rest lengths",
                expected,
                actual: self.rest_lengths.len(),
            });
        }
        if self.n_k == 0 || self.n_anchors == 0 {
            return Err(Error::InvalidArgument("topology must be non-empty".into()));
        }
        if let Some(&bad) = self.neighbors.iter().find(|&&n| n as usize >= self.n_anchors) {
            return Err(Error::InvalidArgument(format!(
                "neighbor index {bad} out of range for {} anchors",
                self.n_anchors
            )));
        }
        require_finite("topology rest lengths", &self.rest_lengths)?;
        if self.rest_lengths.iter().any(|&l| l <= 0.0) {
            return Err(Error::InvalidArgument("rest lengths must be positive".into()));
        }
        let topology = SpringTopology {
            n_k: self.n_k,
            neighbors: self.neighbors.clone(),
            rest_lengths: self.rest_lengths.clone(),
        };
        let actual = topology.fingerprint();
        if actual != self.fingerprint {
            return Err(Error::FingerprintMismatch {
                expected: self.fingerprint.clone(),
                actual,
            });
        }
        Ok(topology)
    }
}

pub fn parse_topology(data: &[u8]) -> Result<SpringTopology> {
    let file: TopologyFile =
        serde_json::from_slice(data).map_err(|e| Error::json("topology", e))?;
    file.into_topology()
}

pub fn load_topology(path: impl AsRef<Path>) -> Result<SpringTopology> {
    parse_topology(&read_file(path.as_ref())?)
}

pub fn save_topology(topology: &SpringTopology, path: impl AsRef<Path>) -> Result<()> {
    write_json(&TopologyFile::from_topology(topology), "topology", path.as_ref())
}

/// Pinhole camera with a world-to-camera rigid transform as a 4x4 row-major
/// matrix (bottom row must be 0 0 0 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraFile {
    pub format_version: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub near: f64,
    pub w2c: [[f64; 4]; 4],
}

impl CameraFile {
    pub fn from_camera(camera: &Camera) -> Self {
        let r = &camera.rotation;
        let t = &camera.translation;
        let mut w2c = [[0.0; 4]; 4];
        for row in 0..3 {
            for col in 0..3 {
                w2c[row][col] = r[(row, col)];
            }
            w2c[row][3] = t[row];
        }
        w2c[3][3] = 1.0;
        CameraFile {
            format_version: FORMAT_VERSION,
            fx: camera.fx,
            fy: camera.fy,
            cx: camera.cx,
            cy: camera.cy,
            width: camera.width,
            height: camera.height,
            near: camera.near,
            w2c,
        }
    }

    pub fn into_camera(&self) -> Result<Camera> {
        check_version("camera", self.format_version)?;
        for row in &self.w2c {
            require_finite("camera w2c", row)?;
        }
        require_finite("camera intrinsics", &[self.fx, self.fy, self.cx, self.cy, self.near])?;
        if self.w2c[3] != [0.0, 0.0, 0.0, 1.0] {
            return Err(Error::InvalidArgument(
                "camera w2c bottom row must be 0 0 0 1".into(),
            ));
        }
        let mut rotation = Matrix3::zeros();
        for row in 0..3 {
            for col in 0..3 {
                rotation[(row, col)] = self.w2c[row][col];
            }
        }
        let camera = Camera {
            fx: self.fx,
            fy: self.fy,
            cx: self.cx,
            cy: self.cy,
            width: self.width,
            height: self.height,
            near: self.near,
            rotation,
            translation: Vector3::new(self.w2c[0][3], self.w2c[1][3], self.w2c[2][3]),
        };
        camera.validate()?;
        Ok(camera)
    }
}

pub fn parse_camera(data: &[u8]) -> Result<Camera> {
    let file: CameraFile = serde_json::from_slice(data).map_err(|e| Error::json("camera", e))?;
    file.into_camera()
}

pub fn load_camera(path: impl AsRef<Path>) -> Result<Camera> {
    parse_camera(&read_file(path.as_ref())?)
}

pub fn save_camera(camera: &Camera, path: impl AsRef<Path>) -> Result<()> {
    camera.validate()?;
    write_json(&CameraFile::from_camera(camera), "camera", path.as_ref())
}

/// Similarity transform on disk, rotation in the same 6D coordinates the
/// solver optimizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityFile {
    pub format_version: u32,
    pub scale: f64,
    pub translation: [f64; 3],
    pub rot6d: [f64; 6],
}

impl SimilarityFile {
    pub fn from_similarity(sim: &Similarity) -> Self {
        SimilarityFile {
            format_version: FORMAT_VERSION,
            scale: sim.scale,
            translation: [sim.translation.x, sim.translation.y, sim.translation.z],
            rot6d: sim.rot6d,
        }
    }

    pub fn into_similarity(&self) -> Result<Similarity> {
        check_version("similarity", self.format_version)?;
        require_finite("similarity translation", &self.translation)?;
        require_finite("similarity rotation", &self.rot6d)?;
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "similarity scale must be positive, got {}",
                self.scale
            )));
        }
        let sim = Similarity {
            scale: self.scale,
            translation: Vector3::new(
                self.translation[0],
                self.translation[1],
                self.translation[2],
            ),
            rot6d: self.rot6d,
        };
        // Rejects degenerate 6D coordinates up front.
        crate::registration::rot6d_to_matrix(&sim.rot6d)?;
        Ok(sim)
    }
}

pub fn parse_similarity(data: &[u8]) -> Result<Similarity> {
    let file: SimilarityFile =
        serde_json::from_slice(data).map_err(|e| Error::json("similarity", e))?;
    file.into_similarity()
}

pub fn load_similarity(path: impl AsRef<Path>) -> Result<Similarity> {
    parse_similarity(&read_file(path.as_ref())?)
}

pub fn save_similarity(sim: &Similarity, path: impl AsRef<Path>) -> Result<()> {
    write_json(&SimilarityFile::from_similarity(sim), "similarity", path.as_ref())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CloudMetrics {
    pub chamfer: f64,
    /// Chamfer after the display-unit scaling requested at report time.
    pub chamfer_display: f64,
    pub emd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub psnr: f64,
    pub ssim: f64,
}

/// Evaluation output; cloud and image sections are independent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReportFile {
    pub format_version: u32,
    pub cloud: Option<CloudMetrics>,
    pub image: Option<ImageMetrics>,
}

impl MetricReportFile {
    pub fn new(cloud: Option<CloudMetrics>, image: Option<ImageMetrics>) -> Self {
        MetricReportFile { format_version: FORMAT_VERSION, cloud, image }
    }
}

pub fn parse_metric_report(data: &[u8]) -> Result<MetricReportFile> {
    let report: MetricReportFile =
        serde_json::from_slice(data).map_err(|e| Error::json("metric report", e))?;
    check_version("metric report", report.format_version)?;
    Ok(report)
}

pub fn save_metric_report(report: &MetricReportFile, path: impl AsRef<Path>) -> Result<()> {
    write_json(report, "metric report", path.as_ref())
}

/// Loss history as `iteration,loss,n_t` CSV.
pub fn write_loss_csv(records: &[IterationRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::from("iteration,loss,n_t\n");
    for r in records {
        text.push_str(&format!("{},{},{}\n", r.iteration, r.loss, r.n_t));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_topology;
    use crate::registration::rot6d_to_matrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn test_topology() -> SpringTopology {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let points: Vec<Vector3<f64>> =
            (0..20).map(|_| Vector3::new(rng.gen(), rng.gen(), rng.gen())).collect();
        build_topology(&points, 4).unwrap()
    }

    #[test]
    fn scenario_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scenario.json");
        let mut config = ScenarioConfig::default();
        config.gravity = [0.0, 0.0, -4.9];
        config.v0_override = Some([0.5, 0.0, -1.0]);
        save_scenario(&config, &path).unwrap();
        assert_eq!(load_scenario(&path).unwrap(), config);

        config.stiffness_scale = 0.0;
        assert!(save_scenario(&config, &path).is_err());
        config.stiffness_scale = 1.0;
        config.fps = -30.0;
        assert!(config.validate().is_err());
        config.fps = 30.0;
        config.format_version = 99;
        assert!(matches!(
            config.validate(),
            Err(Error::FormatVersion { found: 99, supported: 1, .. })
        ));
    }

    #[test]
    fn scenario_parse_rejects_garbage() {
        assert!(parse_scenario(b"").is_err());
        assert!(parse_scenario(b"{}").is_err());
        assert!(parse_scenario(b"not json").is_err());
        let nan = br#"{"format_version":1,"gravity":[0.0,0.0,null],"ground":{"height":0.0,"friction_logit":0.0,"sticky":false},"stiffness_scale":1.0,"v0_override":null,"fps":30.0,"n_frames":10,"n_t":4,"seed":0}"#;
        assert!(parse_scenario(nan).is_err());
    }

    #[test]
    fn checkpoint_round_trips_and_pins_topology() {
        let topology = test_topology();
        let mut params = PhysicalParams::uniform(20, 1000f64.ln(), SimConstants {
            n_k: 4,
            ..SimConstants::default()
        });
        params.v0 = Vector3::new(0.5, 0.0, -1.0);
        params.kappa = -0.3;

        let checkpoint = ParamCheckpoint::from_params(&params, &topology);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("checkpoint.json");
        save_checkpoint(&checkpoint, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded, checkpoint);

        let gravity = Vector3::new(0.0, 0.0, -9.8);
        let rebuilt = loaded.into_params(&topology, gravity).unwrap();
        assert_eq!(rebuilt.v0, params.v0);
        assert_eq!(rebuilt.log_k, params.log_k);
        assert_eq!(rebuilt.kappa, params.kappa);
        assert_eq!(rebuilt.constants.gravity, gravity);

        // Any change to the spring table must refuse the checkpoint.
        let mut other = topology.clone();
        other.rest_lengths[0] += 1e-9;
        assert!(matches!(
            loaded.into_params(&other, gravity),
            Err(Error::FingerprintMismatch { .. })
        ));
    }

    #[test]
    fn checkpoint_gravity_comes_from_the_caller() {
        // The stored constants have no gravity field at all; two different
        // scene gravities rebuild different runtime constants from one file.
        let topology = test_topology();
        let params = PhysicalParams::uniform(20, 0.0, SimConstants {
            n_k: 4,
            ..SimConstants::default()
        });
        let checkpoint = ParamCheckpoint::from_params(&params, &topology);
        let text = to_json(&checkpoint, "checkpoint").unwrap();
        assert!(!text.contains("gravity"));
        let moon = checkpoint.into_params(&topology, Vector3::new(0.0, 0.0, -1.62)).unwrap();
        assert_eq!(moon.constants.gravity.z, -1.62);
    }

    #[test]
    fn checkpoint_parse_rejects_bad_values() {
        let topology = test_topology();
        let params = PhysicalParams::uniform(20, 0.0, SimConstants {
            n_k: 4,
            ..SimConstants::default()
        });
        let good = ParamCheckpoint::from_params(&params, &topology);
        let text = to_json(&good, "checkpoint").unwrap();
        assert!(parse_checkpoint(text.as_bytes()).is_ok());

        let bad_mass = text.replace("\"mass\": 1.0", "\"mass\": -1.0");
        assert!(parse_checkpoint(bad_mass.as_bytes()).is_err());
        let bad_version = text.replace("\"format_version\": 1", "\"format_version\": 7");
        assert!(matches!(
            parse_checkpoint(bad_version.as_bytes()),
            Err(Error::FormatVersion { found: 7, .. })
        ));
        assert!(parse_checkpoint(b"{\"format_version\":1}").is_err());
    }

    #[test]
    fn topology_file_round_trips_and_verifies() {
        let topology = test_topology();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("topology.json");
        save_topology(&topology, &path).unwrap();
        let loaded = load_topology(&path).unwrap();
        assert_eq!(loaded.n_k, topology.n_k);
        assert_eq!(loaded.neighbors, topology.neighbors);
        assert_eq!(loaded.rest_lengths, topology.rest_lengths);

        // Tampered rest length no longer matches the stored fingerprint.
        let text = std::fs::read_to_string(&path).unwrap();
        let mut file: TopologyFile = serde_json::from_str(&text).unwrap();
        file.rest_lengths[3] *= 2.0;
        assert!(matches!(file.into_topology(), Err(Error::FingerprintMismatch { .. })));

        // Out-of-range neighbor index.
        let mut file: TopologyFile = serde_json::from_str(&text).unwrap();
        file.neighbors[0] = 20;
        assert!(file.into_topology().is_err());

        // Length that disagrees with n_anchors * n_k.
        let mut file: TopologyFile = serde_json::from_str(&text).unwrap();
        file.neighbors.pop();
        assert!(matches!(file.into_topology(), Err(Error::SizeMismatch { .. })));
    }

    #[test]
    fn camera_round_trip_and_rigid_check() {
        // Rotation about z by 30 degrees, nontrivial translation.
        let (s, c) = (30f64.to_radians().sin(), 30f64.to_radians().cos());
        let camera = Camera {
            fx: 500.0,
            fy: 480.0,
            cx: 320.0,
            cy: 240.0,
            width: 640,
            height: 480,
            near: 0.1,
            rotation: Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0),
            translation: Vector3::new(0.1, -0.2, 3.0),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("camera.json");
        save_camera(&camera, &path).unwrap();
        let loaded = load_camera(&path).unwrap();
        assert_eq!(loaded.rotation, camera.rotation);
        assert_eq!(loaded.translation, camera.translation);
        assert_eq!(loaded.fx, camera.fx);

        let mut file = CameraFile::from_camera(&camera);
        file.w2c[3][0] = 1.0;
        assert!(file.into_camera().is_err());
        let mut file = CameraFile::from_camera(&camera);
        file.w2c[0][0] = 2.0; // not orthonormal
        assert!(file.into_camera().is_err());
        let mut file = CameraFile::from_camera(&camera);
        file.near = 0.0;
        assert!(file.into_camera().is_err());
    }

    #[test]
    fn similarity_round_trip() {
        let sim = Similarity {
            scale: 1.3,
            translation: Vector3::new(0.1, -0.2, 0.05),
            rot6d: [1.0, 0.0, 0.1, 0.0, 1.0, -0.2],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("similarity.json");
        save_similarity(&sim, &path).unwrap();
        let loaded = load_similarity(&path).unwrap();
        assert_eq!(loaded.scale, sim.scale);
        assert_eq!(loaded.translation, sim.translation);
        assert_eq!(loaded.rot6d, sim.rot6d);
        // The parsed form produces the same rotation matrix.
        assert_eq!(
            rot6d_to_matrix(&loaded.rot6d).unwrap(),
            rot6d_to_matrix(&sim.rot6d).unwrap()
        );

        assert!(parse_similarity(br#"{"format_version":1,"scale":0.0,"translation":[0,0,0],"rot6d":[1,0,0,0,1,0]}"#).is_err());
        assert!(parse_similarity(br#"{"format_version":1,"scale":1.0,"translation":[0,0,0],"rot6d":[0,0,0,0,0,0]}"#).is_err());
    }

    #[test]
    fn metric_report_round_trip() {
        let report = MetricReportFile::new(
            Some(CloudMetrics { chamfer: 0.125, chamfer_display: 125.0, emd: 0.3 }),
            None,
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        save_metric_report(&report, &path).unwrap();
        let loaded = parse_metric_report(&std::fs::read(&path).unwrap()).unwrap();
        assert_eq!(loaded, report);
    }

    #[test]
    fn loss_csv_format_is_stable() {
        let records = vec![
            IterationRecord { iteration: 0, loss: 0.5, n_t: 4 },
            IterationRecord { iteration: 1, loss: 0.25, n_t: 8 },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("loss.csv");
        write_loss_csv(&records, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "iteration,loss,n_t\n0,0.5,4\n1,0.25,8\n");
    }

    #[test]
    fn json_writes_are_deterministic() {
        let topology = test_topology();
        let params = PhysicalParams::uniform(20, 2.0, SimConstants {
            n_k: 4,
            ..SimConstants::default()
        });
        let checkpoint = ParamCheckpoint::from_params(&params, &topology);
        let a = to_json(&checkpoint, "checkpoint").unwrap();
        let b = to_json(&checkpoint, "checkpoint").unwrap();
        assert_eq!(a, b);
        assert!(a.ends_with('\n'));
    }
}
