//! Command-line interface. Every subcommand reads and writes only the files
//! named in its arguments, so identical invocations on identical inputs
//! produce byte-identical outputs.
//!
//! Exit codes: 0 success, 1 usage error (bad flags or flag combinations),
//! 2 data error (unreadable, malformed, or inconsistent files).

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::Vector3;

use crate::dynamics::{rollout, PhysicalParams, SimConstants};
use crate::error::Error;
use crate::geometry::{build_topology, volume_sample, AnchorSystem, PointCloud, SpringTopology};
use crate::identification::{identify, IdentConfig, Trajectory};
use crate::io;
use crate::io::formats::{CloudMetrics, ImageMetrics, MetricReportFile, ScenarioConfig};
use crate::metrics;
use crate::registration::{register, RegisterConfig};
use crate::splat::{rasterize, Camera, GaussianCloud};

enum CliError {
    Usage(String),
    Data(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Data(e)
    }
}

type CliResult = Result<(), CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Parser)]
#[command(
    name = "springsim",
    version,
    about = "Spring-mass simulation, system identification, and evaluation for point-cloud dynamics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Downsample a cloud to anchors and build their spring topology.
    SampleAnchors(SampleAnchorsArgs),
    /// Roll the spring-mass model forward under a scenario.
    Simulate(SimulateArgs),
    /// Fit physical parameters to an observed trajectory.
    Identify(IdentifyArgs),
    /// Fit a similarity transform aligning one cloud onto another.
    Register(RegisterArgs),
    /// Compare two trajectories or two image directories.
    Eval(EvalArgs),
    /// Derive a new scenario file by overriding fields of a base scenario.
    EditScenario(EditScenarioArgs),
}

fn parse_vec3(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated numbers, got {s:?}"));
    }
    let mut out = [0.0; 3];
    for (slot, part) in out.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse::<f64>()
            .map_err(|_| format!("bad number {:?} in vector {s:?}", part))?;
    }
    Ok(out)
}

#[derive(Args)]
struct SampleAnchorsArgs {
    /// Input point cloud (PLY).
    #[arg(long)]
    input: PathBuf,
    /// Output anchor cloud (PLY).
    #[arg(long)]
    anchors: PathBuf,
    /// Output spring topology (JSON).
    #[arg(long)]
    topology: PathBuf,
    /// Number of anchors to keep.
    #[arg(long, default_value_t = 256)]
    n_anchors: usize,
    /// Springs per anchor.
    #[arg(long, default_value_t = 32)]
    n_k: usize,
    /// Seed for the farthest-point start index.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SimulateArgs {
    /// Anchor cloud (PLY).
    #[arg(long)]
    anchors: PathBuf,
    /// Spring topology (JSON).
    #[arg(long)]
    topology: PathBuf,
    /// Scenario file (JSON).
    #[arg(long)]
    scenario: PathBuf,
    /// Output trajectory directory.
    #[arg(long)]
    output: PathBuf,
    /// Parameter checkpoint; without it the default initialization is
    /// simulated (uniform k = 1000, kappa = 0, v0 from the scenario).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Directory for rendered frames (requires --camera).
    #[arg(long)]
    render: Option<PathBuf>,
    /// Camera file (JSON) for rendering.
    #[arg(long)]
    camera: Option<PathBuf>,
    /// Isotropic splat radius for rendering (m).
    #[arg(long, default_value_t = 0.02)]
    splat_scale: f64,
    /// Render background color.
    #[arg(long, value_parser = parse_vec3, default_value = "0,0,0")]
    background: [f64; 3],
    /// Accepted on every subcommand; simulation draws no randomness.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct IdentifyArgs {
    /// Anchor cloud (PLY).
    #[arg(long)]
    anchors: PathBuf,
    /// Spring topology (JSON).
    #[arg(long)]
    topology: PathBuf,
    /// Observed trajectory directory.
    #[arg(long)]
    observed: PathBuf,
    /// Scenario describing gravity, ground, and the starting substep count.
    #[arg(long)]
    scenario: PathBuf,
    /// Output parameter checkpoint (JSON).
    #[arg(long)]
    output: PathBuf,
    /// Optional loss history (CSV).
    #[arg(long)]
    loss_csv: Option<PathBuf>,
    /// Optimization iterations.
    #[arg(long, default_value_t = 300)]
    iterations: usize,
    /// Frames used by the initial-velocity pre-stage.
    #[arg(long, default_value_t = 3)]
    n_pre: usize,
    /// Tie all anchors to one global stiffness (ablation mode).
    #[arg(long)]
    single_k: bool,
    /// Keep v0 at the pre-stage estimate instead of refining it jointly.
    #[arg(long)]
    freeze_v0: bool,
    /// Recorded in the run configuration; the optimizer is deterministic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct RegisterArgs {
    /// Cloud to transform (PLY).
    #[arg(long)]
    source: PathBuf,
    /// Cloud to align onto (PLY).
    #[arg(long)]
    target: PathBuf,
    /// Output similarity transform (JSON).
    #[arg(long)]
    output: PathBuf,
    /// Optimization iterations.
    #[arg(long, default_value_t = 500)]
    iterations: usize,
    /// Accepted on every subcommand; registration draws no randomness.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct EvalArgs {
    /// Predicted trajectory directory (cloud mode).
    #[arg(long)]
    predicted: Option<PathBuf>,
    /// Observed trajectory directory (cloud mode).
    #[arg(long)]
    observed: Option<PathBuf>,
    /// Rendered image directory (image mode).
    #[arg(long)]
    images: Option<PathBuf>,
    /// Reference image directory (image mode).
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Report Chamfer distance in benchmark-table units (1e3 mm^2)
    /// instead of m^2.
    #[arg(long)]
    table_units: bool,
    /// Output metric report (JSON).
    #[arg(long)]
    output: PathBuf,
    /// Accepted on every subcommand; evaluation draws no randomness.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct EditScenarioArgs {
    /// Base scenario to modify; defaults apply when omitted.
    #[arg(long)]
    base: Option<PathBuf>,
    /// Output scenario file (JSON).
    #[arg(long)]
    output: PathBuf,
    /// Gravity override, e.g. 0,0,-4.9 (m/s^2).
    #[arg(long, value_parser = parse_vec3)]
    gravity: Option<[f64; 3]>,
    /// Ground height override (m).
    #[arg(long)]
    ground_height: Option<f64>,
    /// Ground friction logit override.
    #[arg(long)]
    friction_logit: Option<f64>,
    /// Sticky-ground override.
    #[arg(long)]
    sticky: Option<bool>,
    /// Stiffness scale override (multiplies every k_i).
    #[arg(long)]
    stiffness_scale: Option<f64>,
    /// Initial-velocity override, e.g. 0.5,0,-1 (m/s).
    #[arg(long, value_parser = parse_vec3)]
    v0: Option<[f64; 3]>,
    /// Remove an inherited initial-velocity override.
    #[arg(long)]
    clear_v0: bool,
    /// Frame rate override (fps).
    #[arg(long)]
    fps: Option<f64>,
    /// Keyframe count override.
    #[arg(long)]
    n_frames: Option<usize>,
    /// Substep count override.
    #[arg(long)]
    n_t: Option<usize>,
    /// Scenario seed override.
    #[arg(long)]
    seed: Option<u64>,
}

/// Parses argv and runs the selected subcommand, returning the process exit
/// code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let requested_display = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if requested_display { 0 } else { 1 };
        }
    };
    let result = match cli.command {
        Command::SampleAnchors(args) => cmd_sample_anchors(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Identify(args) => cmd_identify(args),
        Command::Register(args) => cmd_register(args),
        Command::Eval(args) => cmd_eval(args),
        Command::EditScenario(args) => cmd_edit_scenario(args),
    };
    match result {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            1
        }
        Err(CliError::Data(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn cmd_sample_anchors(args: SampleAnchorsArgs) -> CliResult {
    let cloud = io::load_ply(&args.input)?;
    let anchors = volume_sample(&cloud, args.n_anchors, args.seed)?;
    let topology = build_topology(&anchors.positions, args.n_k)?;
    io::save_ply(&anchors, &args.anchors)?;
    io::save_topology(&topology, &args.topology)?;
    println!(
        "sampled {} anchors from {} points, {} springs each",
        args.n_anchors,
        cloud.len(),
        args.n_k
    );
    Ok(())
}

/// Default soft-connectivity prefix, shortened when the topology has fewer
/// springs per anchor than the usual 16.
fn default_n_c(n_k: usize) -> usize {
    SimConstants::default().n_c.min(n_k)
}

/// Resolves the physical parameters a scenario asks to simulate: checkpoint
/// values when one is given, the identification initialization otherwise,
/// with the scenario's ground, gravity, v0 override, and stiffness scale
/// applied on top.
fn simulation_params(
    checkpoint: Option<&Path>,
    topology: &SpringTopology,
    scenario: &ScenarioConfig,
) -> Result<PhysicalParams, CliError> {
    let gravity = scenario.gravity_vector();
    let mut params = match checkpoint {
        Some(path) => io::load_checkpoint(path)?.into_params(topology, gravity)?,
        None => {
            let constants = SimConstants {
                n_k: topology.n_k,
                n_c: default_n_c(topology.n_k),
                gravity,
                ..SimConstants::default()
            };
            PhysicalParams::uniform(
                topology.n_anchors(),
                IdentConfig::default().log_k_init,
                constants,
            )
        }
    };
    params.boundary = scenario.ground.into();
    if let Some(v0) = scenario.v0_override {
        params.v0 = Vector3::new(v0[0], v0[1], v0[2]);
    }
    let log_scale = scenario.stiffness_scale.ln();
    for log_k in &mut params.log_k {
        *log_k += log_scale;
    }
    Ok(params)
}

fn cmd_simulate(args: SimulateArgs) -> CliResult {
    if args.render.is_some() != args.camera.is_some() {
        return Err(usage("--render and --camera must be given together"));
    }
    let _ = args.seed;

    let cloud = io::load_ply(&args.anchors)?;
    let topology = io::load_topology(&args.topology)?;
    let scenario = io::load_scenario(&args.scenario)?;
    let params = simulation_params(args.checkpoint.as_deref(), &topology, &scenario)?;

    let system = AnchorSystem::at_rest(cloud.positions.clone());
    let states = rollout(
        &system,
        &topology,
        &params,
        scenario.n_frames,
        scenario.n_t,
        scenario.dt_frame(),
    )?;
    let trajectory = Trajectory::from_states(&states, scenario.dt_frame())?;
    io::save_trajectory(&trajectory, &args.output)?;
    println!(
        "simulated {} frames at {} fps with {} substeps",
        scenario.n_frames, scenario.fps, scenario.n_t
    );

    if let (Some(render_dir), Some(camera_path)) = (&args.render, &args.camera) {
        let camera = io::load_camera(camera_path)?;
        render_frames(&trajectory, &cloud, &camera, args.splat_scale, args.background, render_dir)?;
        println!("rendered {} frames", trajectory.n_frames());
    }
    Ok(())
}

fn render_frames(
    trajectory: &Trajectory,
    cloud: &PointCloud,
    camera: &Camera,
    splat_scale: f64,
    background: [f64; 3],
    dir: &Path,
) -> CliResult {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let n = cloud.len();
    let colors = cloud.colors.clone().unwrap_or_else(|| vec![[0.7; 3]; n]);
    let opacities = cloud.opacities.clone().unwrap_or_else(|| vec![1.0; n]);
    for (index, (_, frame)) in trajectory.keyframes.iter().enumerate() {
        let gaussians = GaussianCloud::new(
            frame.positions.clone(),
            vec![splat_scale; frame.positions.len()],
            colors.clone(),
            opacities.clone(),
        )?;
        let image = rasterize(&gaussians, camera, background)?;
        io::save_png(&image, dir.join(format!("frame_{index:04}.png")))?;
    }
    Ok(())
}

fn cmd_identify(args: IdentifyArgs) -> CliResult {
    let cloud = io::load_ply(&args.anchors)?;
    let topology = io::load_topology(&args.topology)?;
    let scenario = io::load_scenario(&args.scenario)?;
    let observed = io::load_trajectory(&args.observed)?;
    if (observed.dt_frame - scenario.dt_frame()).abs() > 1e-9 {
        return Err(CliError::Data(Error::InvalidArgument(format!(
            "observed frame spacing {} disagrees with scenario fps {}",
            observed.dt_frame, scenario.fps
        ))));
    }

    let mut config = IdentConfig {
        iterations: args.iterations,
        n_pre: args.n_pre,
        freeze_v0: args.freeze_v0,
        single_k: args.single_k,
        seed: args.seed,
        boundary: scenario.ground.into(),
        constants: SimConstants {
            n_k: topology.n_k,
            n_c: default_n_c(topology.n_k),
            gravity: scenario.gravity_vector(),
            ..SimConstants::default()
        },
        ..IdentConfig::default()
    };
    config.schedule.initial = scenario.n_t;
    config.schedule.max = config.schedule.max.max(scenario.n_t);

    let system = AnchorSystem::at_rest(cloud.positions.clone());
    let (params, records) = identify(&system, &topology, &observed, &config)?;
    let checkpoint = io::ParamCheckpoint::from_params(&params, &topology);
    io::save_checkpoint(&checkpoint, &args.output)?;
    if let Some(csv_path) = &args.loss_csv {
        io::write_loss_csv(&records, csv_path)?;
    }
    if let (Some(first), Some(last)) = (records.first(), records.last()) {
        println!(
            "loss {} -> {} over {} iterations",
            first.loss,
            last.loss,
            records.len()
        );
    }
    Ok(())
}

fn cmd_register(args: RegisterArgs) -> CliResult {
    let _ = args.seed;
    let source = io::load_ply(&args.source)?;
    let target = io::load_ply(&args.target)?;
    let config = RegisterConfig { iterations: args.iterations, ..RegisterConfig::default() };
    let similarity = register(&source, &target, &config)?;
    io::save_similarity(&similarity, &args.output)?;
    println!(
        "scale {} translation {},{},{}",
        similarity.scale,
        similarity.translation.x,
        similarity.translation.y,
        similarity.translation.z
    );
    Ok(())
}

fn sorted_pngs(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut paths = Vec::new();
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if path.extension().is_some_and(|ext| ext == "png") {
            paths.push(path);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Data(Error::MalformedFile {
            what: "image directory",
            detail: format!("{} contains no .png files", dir.display()),
        }));
    }
    Ok(paths)
}

fn eval_trajectories(
    predicted_dir: &Path,
    observed_dir: &Path,
    table_units: bool,
) -> Result<CloudMetrics, CliError> {
    let predicted = io::load_trajectory(predicted_dir)?;
    let observed = io::load_trajectory(observed_dir)?;
    if predicted.n_frames() != observed.n_frames() {
        return Err(CliError::Data(Error::SizeMismatch {
            what: "evaluation frames",
            expected: observed.n_frames(),
            actual: predicted.n_frames(),
        }));
    }
    let mut cd_sum = 0.0;
    let mut emd_sum = 0.0;
    for ((_, p), (_, o)) in predicted.keyframes.iter().zip(&observed.keyframes) {
        cd_sum += metrics::chamfer(p, o)?;
        emd_sum += metrics::emd(p, o)?;
    }
    let n = predicted.n_frames() as f64;
    let chamfer = cd_sum / n;
    Ok(CloudMetrics {
        chamfer,
        chamfer_display: if table_units { metrics::cd_table_units(chamfer) } else { chamfer },
        emd: emd_sum / n,
    })
}

fn eval_images(images_dir: &Path, reference_dir: &Path) -> Result<ImageMetrics, CliError> {
    let image_paths = sorted_pngs(images_dir)?;
    let reference_paths = sorted_pngs(reference_dir)?;
    if image_paths.len() != reference_paths.len() {
        return Err(CliError::Data(Error::SizeMismatch {
            what: "evaluation images",
            expected: reference_paths.len(),
            actual: image_paths.len(),
        }));
    }
    let mut psnr_sum = 0.0;
    let mut ssim_sum = 0.0;
    for (img_path, ref_path) in image_paths.iter().zip(&reference_paths) {
        let image = io::load_png(img_path)?;
        let reference = io::load_png(ref_path)?;
        psnr_sum += metrics::psnr(&image, &reference)?;
        ssim_sum += metrics::ssim(&image, &reference)?;
    }
    let n = image_paths.len() as f64;
    Ok(ImageMetrics { psnr: psnr_sum / n, ssim: ssim_sum / n })
}

fn cmd_eval(args: EvalArgs) -> CliResult {
    let _ = args.seed;
    let cloud_mode = args.predicted.is_some() || args.observed.is_some();
    let image_mode = args.images.is_some() || args.reference.is_some();
    if cloud_mode == image_mode {
        return Err(usage(
            "give either --predicted with --observed, or --images with --reference",
        ));
    }

    let report = if cloud_mode {
        let (Some(predicted), Some(observed)) = (&args.predicted, &args.observed) else {
            return Err(usage("--predicted and --observed must be given together"));
        };
        let cloud = eval_trajectories(predicted, observed, args.table_units)?;
        println!("cd {}", cloud.chamfer_display);
        println!("emd {}", cloud.emd);
        MetricReportFile::new(Some(cloud), None)
    } else {
        if args.table_units {
            return Err(usage("--table-units only applies to trajectory evaluation"));
        }
        let (Some(images), Some(reference)) = (&args.images, &args.reference) else {
            return Err(usage("--images and --reference must be given together"));
        };
        let image = eval_images(images, reference)?;
        println!("psnr {}", image.psnr);
        println!("ssim {}", image.ssim);
        MetricReportFile::new(None, Some(image))
    };
    io::save_metric_report(&report, &args.output)?;
    Ok(())
}

fn cmd_edit_scenario(args: EditScenarioArgs) -> CliResult {
    if args.clear_v0 && args.v0.is_some() {
        return Err(usage("--v0 and --clear-v0 are mutually exclusive"));
    }
    let mut scenario = match &args.base {
        Some(path) => io::load_scenario(path)?,
        None => ScenarioConfig::default(),
    };
    if let Some(g) = args.gravity {
        scenario.gravity = g;
    }
    if let Some(h) = args.ground_height {
        scenario.ground.height = h;
    }
    if let Some(f) = args.friction_logit {
        scenario.ground.friction_logit = f;
    }
    if let Some(s) = args.sticky {
        scenario.ground.sticky = s;
    }
    if let Some(s) = args.stiffness_scale {
        scenario.stiffness_scale = s;
    }
    if args.clear_v0 {
        scenario.v0_override = None;
    }
    if let Some(v) = args.v0 {
        scenario.v0_override = Some(v);
    }
    if let Some(f) = args.fps {
        scenario.fps = f;
    }
    if let Some(n) = args.n_frames {
        scenario.n_frames = n;
    }
    if let Some(n) = args.n_t {
        scenario.n_t = n;
    }
    if let Some(s) = args.seed {
        scenario.seed = s;
    }
    io::save_scenario(&scenario, &args.output)?;
    println!("wrote scenario to {}", args.output.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn run_cli(args: &[&str]) -> i32 {
        run(std::iter::once("springsim").chain(args.iter().copied()))
    }

    fn write_cloud(path: &Path, n: usize, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let positions = (0..n)
            .map(|_| {
                Vector3::new(
                    rng.gen::<f32>() as f64,
                    rng.gen::<f32>() as f64,
                    rng.gen::<f32>() as f64 + 0.5,
                )
            })
            .collect();
        io::save_ply(&PointCloud::new(positions).unwrap(), path).unwrap();
    }

    #[test]
    fn exit_codes_follow_the_contract() {
        // Unknown flag and missing subcommand are usage errors.
        assert_eq!(run_cli(&["--bogus"]), 1);
        assert_eq!(run_cli(&[]), 1);
        assert_eq!(run_cli(&["eval", "--output", "/tmp/x.json"]), 1);
        // Help requests succeed.
        assert_eq!(run_cli(&["--help"]), 0);
        assert_eq!(run_cli(&["simulate", "--help"]), 0);
        // Unreadable data is a data error.
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("missing.ply");
        let out = dir.path().join("out.ply");
        let topo = dir.path().join("topo.json");
        assert_eq!(
            run_cli(&[
                "sample-anchors",
                "--input",
                missing.to_str().unwrap(),
                "--anchors",
                out.to_str().unwrap(),
                "--topology",
                topo.to_str().unwrap(),
            ]),
            2
        );
    }

    #[test]
    fn sample_anchors_then_simulate_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cloud_path = dir.path().join("cloud.ply");
        write_cloud(&cloud_path, 200, 3);
        let anchors = dir.path().join("anchors.ply");
        let topology = dir.path().join("topology.json");
        assert_eq!(
            run_cli(&[
                "sample-anchors",
                "--input",
                cloud_path.to_str().unwrap(),
                "--anchors",
                anchors.to_str().unwrap(),
                "--topology",
                topology.to_str().unwrap(),
                "--n-anchors",
                "24",
                "--n-k",
                "4",
            ]),
            0
        );
        assert_eq!(io::load_ply(&anchors).unwrap().len(), 24);

        let scenario_path = dir.path().join("scenario.json");
        assert_eq!(
            run_cli(&[
                "edit-scenario",
                "--output",
                scenario_path.to_str().unwrap(),
                "--n-frames",
                "4",
                "--v0",
                "0.1,0,-0.5",
            ]),
            0
        );

        let traj_a = dir.path().join("traj_a");
        let traj_b = dir.path().join("traj_b");
        for out in [&traj_a, &traj_b] {
            assert_eq!(
                run_cli(&[
                    "simulate",
                    "--anchors",
                    anchors.to_str().unwrap(),
                    "--topology",
                    topology.to_str().unwrap(),
                    "--scenario",
                    scenario_path.to_str().unwrap(),
                    "--output",
                    out.to_str().unwrap(),
                ]),
                0
            );
        }
        // Same inputs, byte-identical outputs.
        for name in ["manifest.json", "frames/frame_0003.ply"] {
            assert_eq!(
                std::fs::read(traj_a.join(name)).unwrap(),
                std::fs::read(traj_b.join(name)).unwrap(),
                "{name} differs"
            );
        }
        // Self-evaluation reports zero distance.
        let report_path = dir.path().join("report.json");
        assert_eq!(
            run_cli(&[
                "eval",
                "--predicted",
                traj_a.to_str().unwrap(),
                "--observed",
                traj_b.to_str().unwrap(),
                "--output",
                report_path.to_str().unwrap(),
            ]),
            0
        );
        let report =
            io::parse_metric_report(&std::fs::read(&report_path).unwrap()).unwrap();
        assert_eq!(report.cloud.unwrap().chamfer, 0.0);
    }

    #[test]
    fn edit_scenario_overrides_fields() {
        let dir = tempfile::tempdir().unwrap();
        let base = dir.path().join("base.json");
        let edited = dir.path().join("edited.json");
        assert_eq!(
            run_cli(&["edit-scenario", "--output", base.to_str().unwrap(), "--sticky", "true"]),
            0
        );
        assert_eq!(
            run_cli(&[
                "edit-scenario",
                "--base",
                base.to_str().unwrap(),
                "--output",
                edited.to_str().unwrap(),
                "--gravity",
                "0,0,-4.9",
                "--stiffness-scale",
                "2.5",
            ]),
            0
        );
        let scenario = io::load_scenario(&edited).unwrap();
        assert_eq!(scenario.gravity, [0.0, 0.0, -4.9]);
        assert_eq!(scenario.stiffness_scale, 2.5);
        assert!(scenario.ground.sticky, "inherited from base");

        // Conflicting v0 flags are a usage error; bad values a data error.
        assert_eq!(
            run_cli(&[
                "edit-scenario",
                "--output",
                edited.to_str().unwrap(),
                "--v0",
                "1,2,3",
                "--clear-v0",
            ]),
            1
        );
        assert_eq!(
            run_cli(&[
                "edit-scenario",
                "--output",
                edited.to_str().unwrap(),
                "--stiffness-scale",
                "0",
            ]),
            2
        );
        // Malformed vector literal is rejected at parse time.
        assert_eq!(
            run_cli(&["edit-scenario", "--output", edited.to_str().unwrap(), "--gravity", "1,2"]),
            1
        );
    }

    #[test]
    fn register_cli_writes_a_similarity() {
        let dir = tempfile::tempdir().unwrap();
        let source = dir.path().join("source.ply");
        write_cloud(&source, 64, 8);
        // Target: the same cloud shifted by a constant.
        let cloud = io::load_ply(&source).unwrap();
        let shifted = PointCloud::new(
            cloud.positions.iter().map(|p| p + Vector3::new(0.25, 0.0, -0.125)).collect(),
        )
        .unwrap();
        let target = dir.path().join("target.ply");
        io::save_ply(&shifted, &target).unwrap();

        let out = dir.path().join("similarity.json");
        assert_eq!(
            run_cli(&[
                "register",
                "--source",
                source.to_str().unwrap(),
                "--target",
                target.to_str().unwrap(),
                "--output",
                out.to_str().unwrap(),
                "--iterations",
                "200",
            ]),
            0
        );
        let similarity = io::load_similarity(&out).unwrap();
        assert!((similarity.translation - Vector3::new(0.25, 0.0, -0.125)).norm() < 1e-2);
        assert!((similarity.scale - 1.0).abs() < 1e-2);
    }

    #[test]
    fn vec3_parser_accepts_spaces_and_rejects_garbage() {
        assert_eq!(parse_vec3("1,2,3").unwrap(), [1.0, 2.0, 3.0]);
        assert_eq!(parse_vec3("0.5, -1e-3, 2").unwrap(), [0.5, -1e-3, 2.0]);
        assert!(parse_vec3("1,2").is_err());
        assert!(parse_vec3("a,b,c").is_err());
        assert!(parse_vec3("1,2,3,4").is_err());
    }
}
