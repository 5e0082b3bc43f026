//! Trajectory directories: `manifest.json` beside a `frames/` folder of
//! numbered PLY files. Keyframe times are not stored per frame; they are
//! reconstructed as f * dt from the manifest, which is what makes round
//! trips exact.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::identification::Trajectory;
use crate::io::formats::FORMAT_VERSION;
use crate::io::ply::{load_ply, save_ply};

/// The first keyframe must sit at t = 0 for the frame index to encode time.
const START_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryManifest {
    pub format_version: u32,
    pub fps: f64,
    pub n_frames: usize,
    /// Keyframe spacing in seconds; must equal 1/fps.
    pub dt: f64,
    /// Length unit of the frame clouds. Only meters are defined.
    pub units: String,
}

pub fn parse_manifest(data: &[u8]) -> Result<TrajectoryManifest> {
    let manifest: TrajectoryManifest =
        serde_json::from_slice(data).map_err(|e| Error::json("trajectory manifest", e))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::FormatVersion {
            what: "trajectory manifest",
            found: manifest.format_version,
            supported: FORMAT_VERSION,
        });
    }
    if manifest.units != "m" {
        return Err(Error::MalformedFile {
            what: "trajectory manifest",
            detail: format!("unsupported units {:?}, expected \"m\"", manifest.units),
        });
    }
    if !(manifest.fps.is_finite() && manifest.fps > 0.0) {
        return Err(Error::MalformedFile {
            what: "trajectory manifest",
            detail: format!("fps must be positive, got {}", manifest.fps),
        });
    }
    if manifest.n_frames == 0 {
        return Err(Error::MalformedFile {
            what: "trajectory manifest",
            detail: "n_frames must be at least 1".into(),
        });
    }
    if !(manifest.dt.is_finite() && (manifest.dt - 1.0 / manifest.fps).abs() <= 1e-9) {
        return Err(Error::MalformedFile {
            what: "trajectory manifest",
            detail: format!("dt {} disagrees with 1/fps {}", manifest.dt, 1.0 / manifest.fps),
        });
    }
    Ok(manifest)
}

fn frame_name(index: usize) -> String {
    format!("frame_{index:04}.ply")
}

/// Writes `manifest.json` and `frames/frame_%04d.ply` under `dir`, creating
/// the directories as needed.
pub fn save_trajectory(trajectory: &Trajectory, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let t0 = trajectory.keyframes[0].0;
    if t0.abs() > START_TOLERANCE {
        return Err(Error::InvalidArgument(format!(
            "trajectory must start at t = 0 to be saved, got {t0}"
        )));
    }
    let frames_dir = dir.join("frames");
    std::fs::create_dir_all(&frames_dir).map_err(|e| Error::io(&frames_dir, e))?;

    let dt = trajectory.dt_frame;
    let manifest = TrajectoryManifest {
        format_version: FORMAT_VERSION,
        fps: 1.0 / dt,
        n_frames: trajectory.n_frames(),
        dt,
        units: "m".to_string(),
    };
    let manifest_path = dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::json("trajectory manifest", e))?;
    text.push('\n');
    std::fs::write(&manifest_path, text).map_err(|e| Error::io(&manifest_path, e))?;

    for (index, (_, cloud)) in trajectory.keyframes.iter().enumerate() {
        save_ply(cloud, frames_dir.join(frame_name(index)))?;
    }
    Ok(())
}

/// Loads a trajectory directory, verifying the manifest against the frame
/// files actually present.
pub fn load_trajectory(dir: impl AsRef<Path>) -> Result<Trajectory> {
    let dir = dir.as_ref();
    let manifest_path = dir.join("manifest.json");
    let data = std::fs::read(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest = parse_manifest(&data)?;

    let frames_dir = dir.join("frames");
    let mut on_disk = 0usize;
    let entries = std::fs::read_dir(&frames_dir).map_err(|e| Error::io(&frames_dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(&frames_dir, e))?;
        let name = entry.file_name();
        let name = name.to_string_lossy();
        if name.starts_with("frame_") && name.ends_with(".ply") {
            on_disk += 1;
        }
    }
    if on_disk != manifest.n_frames {
        return Err(Error::MalformedFile {
            what: "trajectory directory",
            detail: format!(
                "manifest declares {} frames but {} frame files are present",
                manifest.n_frames, on_disk
            ),
        });
    }

    let mut keyframes = Vec::with_capacity(manifest.n_frames);
    for index in 0..manifest.n_frames {
        let cloud = load_ply(frames_dir.join(frame_name(index)))?;
        keyframes.push((index as f64 * manifest.dt, cloud));
    }
    Trajectory::new(keyframes, manifest.dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PointCloud;
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn f32_cloud(n: usize, rng: &mut ChaCha8Rng) -> PointCloud {
        PointCloud::new(
            (0..n)
                .map(|_| {
                    Vector3::new(
                        rng.gen::<f32>() as f64,
                        rng.gen::<f32>() as f64,
                        rng.gen::<f32>() as f64,
                    )
                })
                .collect(),
        )
        .unwrap()
    }

    fn sample_trajectory(n_frames: usize, fps: f64, seed: u64) -> Trajectory {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dt = 1.0 / fps;
        let keyframes =
            (0..n_frames).map(|f| (f as f64 * dt, f32_cloud(32, &mut rng))).collect();
        Trajectory::new(keyframes, dt).unwrap()
    }

    #[test]
    fn three_frame_round_trip_is_exact() {
        let trajectory = sample_trajectory(3, 25.0, 4);
        let dir = tempfile::tempdir().unwrap();
        save_trajectory(&trajectory, dir.path()).unwrap();
        let loaded = load_trajectory(dir.path()).unwrap();
        assert_eq!(loaded.n_frames(), 3);
        assert_eq!(loaded.dt_frame, trajectory.dt_frame);
        for (a, b) in loaded.keyframes.iter().zip(&trajectory.keyframes) {
            assert_eq!(a.0, b.0);
            assert_eq!(a.1.positions, b.1.positions);
        }
    }

    #[test]
    fn reconstructed_times_follow_the_manifest_grid() {
        let trajectory = sample_trajectory(20, 30.0, 7);
        let dir = tempfile::tempdir().unwrap();
        save_trajectory(&trajectory, dir.path()).unwrap();
        let loaded = load_trajectory(dir.path()).unwrap();
        for (f, (t, _)) in loaded.keyframes.iter().enumerate() {
            assert_eq!(*t, f as f64 * (1.0 / 30.0));
        }
        assert_eq!(loaded.keyframes[19].0, 19.0 / 30.0);
    }

    #[test]
    fn missing_frame_is_reported() {
        let trajectory = sample_trajectory(4, 30.0, 9);
        let dir = tempfile::tempdir().unwrap();
        save_trajectory(&trajectory, dir.path()).unwrap();
        std::fs::remove_file(dir.path().join("frames/frame_0002.ply")).unwrap();
        match load_trajectory(dir.path()) {
            Err(Error::MalformedFile { detail, .. }) => {
                assert!(detail.contains("4") && detail.contains("3"), "{detail}");
            }
            other => panic!("expected frame-count error, got {other:?}"),
        }

        // Same count but the wrong index: the named file is missing.
        std::fs::rename(
            dir.path().join("frames/frame_0003.ply"),
            dir.path().join("frames/frame_0002.ply"),
        )
        .unwrap();
        std::fs::copy(
            dir.path().join("frames/frame_0002.ply"),
            dir.path().join("frames/frame_0009.ply"),
        )
        .unwrap();
        match load_trajectory(dir.path()) {
            Err(Error::Io { path, .. }) => {
                assert!(path.to_string_lossy().contains("frame_0003.ply"));
            }
            other => panic!("expected io error naming the frame, got {other:?}"),
        }
    }

    #[test]
    fn manifest_validation() {
        let good = br#"{"format_version":1,"fps":30.0,"n_frames":2,"dt":0.03333333333333333,"units":"m"}"#;
        assert!(parse_manifest(good).is_ok());
        let cases: &[&[u8]] = &[
            b"",
            b"{}",
            br#"{"format_version":2,"fps":30.0,"n_frames":2,"dt":0.03333333333333333,"units":"m"}"#,
            br#"{"format_version":1,"fps":30.0,"n_frames":2,"dt":0.03333333333333333,"units":"cm"}"#,
            br#"{"format_version":1,"fps":0.0,"n_frames":2,"dt":0.03333333333333333,"units":"m"}"#,
            br#"{"format_version":1,"fps":30.0,"n_frames":0,"dt":0.03333333333333333,"units":"m"}"#,
            br#"{"format_version":1,"fps":30.0,"n_frames":2,"dt":0.5,"units":"m"}"#,
        ];
        for (i, case) in cases.iter().enumerate() {
            assert!(parse_manifest(case).is_err(), "case {i} should fail");
        }
    }

    #[test]
    fn save_requires_time_origin() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let dt = 0.1;
        let keyframes = vec![(1.0, f32_cloud(8, &mut rng)), (1.0 + dt, f32_cloud(8, &mut rng))];
        let trajectory = Trajectory::new(keyframes, dt).unwrap();
        let dir = tempfile::tempdir().unwrap();
        assert!(save_trajectory(&trajectory, dir.path()).is_err());
    }

    #[test]
    fn save_is_byte_deterministic() {
        let trajectory = sample_trajectory(3, 30.0, 21);
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        save_trajectory(&trajectory, dir_a.path()).unwrap();
        save_trajectory(&trajectory, dir_b.path()).unwrap();
        for name in ["manifest.json", "frames/frame_0000.ply", "frames/frame_0002.ply"] {
            let a = std::fs::read(dir_a.path().join(name)).unwrap();
            let b = std::fs::read(dir_b.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} differs");
        }
    }
}
