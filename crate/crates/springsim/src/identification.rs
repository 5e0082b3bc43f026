//! The inverse problem: staged recovery of physical parameters from an
//! observed keyframe trajectory.
//!
//! Stage one fits the initial velocity from the first few (assumed
//! contact-free) frames in closed form. Stage two runs first-order
//! moment-based gradient descent on log stiffness, connectivity softness,
//! and boundary friction (optionally refining v0) against the mean
//! per-keyframe Chamfer loss, coarsening the integrator adaptively: the
//! substep count doubles whenever the loss plateaus.

use nalgebra::Vector3;

use crate::dynamics::{BoundaryParams, PhysicalParams, SimConstants, SimState};
use crate::error::{Error, Result};
use crate::geometry::{AnchorSystem, PointCloud, SpringTopology};
use crate::gradients::{grad_rollout, LossSpec};
use crate::metrics::chamfer_points;
use crate::optim::Adam;

/// Keyframe times must sit on a uniform grid to within this (seconds).
pub const TIME_TOLERANCE: f64 = 1e-9;

/// Time-stamped sequence of keyframe point clouds, in meters.
///
/// Construction accepts a single keyframe so simulator output of any length
/// is representable; entry points that consume observations (loss,
/// identification, the v0 pre-stage) require at least two.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// (time s, cloud) pairs with strictly increasing, uniformly spaced
    /// times.
    pub keyframes: Vec<(f64, PointCloud)>,
    /// Keyframe interval (s); equals the time step between entries.
    pub dt_frame: f64,
}

impl Trajectory {
    pub fn new(keyframes: Vec<(f64, PointCloud)>, dt_frame: f64) -> Result<Self> {
        if keyframes.is_empty() {
            return Err(Error::InvalidArgument("trajectory needs at least 1 keyframe".into()));
        }
        if !dt_frame.is_finite() || dt_frame <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "dt_frame must be finite and > 0, got {dt_frame}"
            )));
        }
        let t0 = keyframes[0].0;
        if !t0.is_finite() {
            return Err(Error::NonFiniteInput { what: "keyframe time" });
        }
        for (f, (t, _)) in keyframes.iter().enumerate() {
            let expected = t0 + f as f64 * dt_frame;
            if !t.is_finite() || (t - expected).abs() > TIME_TOLERANCE {
                return Err(Error::InvalidArgument(format!(
                    "keyframe {f} at t={t} is off the uniform grid (expected {expected})"
                )));
            }
        }
        Ok(Trajectory { keyframes, dt_frame })
    }

    /// Wraps simulator keyframe states as a trajectory.
    pub fn from_states(states: &[SimState], dt_frame: f64) -> Result<Self> {
        let keyframes = states
            .iter()
            .map(|s| Ok((s.time, PointCloud::new(s.positions.clone())?)))
            .collect::<Result<Vec<_>>>()?;
        Trajectory::new(keyframes, dt_frame)
    }

    pub fn n_frames(&self) -> usize {
        self.keyframes.len()
    }

    pub fn positions(&self, frame: usize) -> &[Vector3<f64>] {
        &self.keyframes[frame].1.positions
    }
}

/// Mean over keyframes of the symmetric Chamfer distance (m^2) between
/// predicted and observed clouds. Requires matching keyframe grids; point
/// counts may differ per frame.
pub fn trajectory_loss(predicted: &Trajectory, observed: &Trajectory) -> Result<f64> {
    if predicted.n_frames() != observed.n_frames() {
        return Err(Error::SizeMismatch {
            what: "keyframe count",
            expected: observed.n_frames(),
            actual: predicted.n_frames(),
        });
    }
    let mut sum = 0.0;
    for (f, ((tp, pred), (to, obs))) in
        predicted.keyframes.iter().zip(&observed.keyframes).enumerate()
    {
        if (tp - to).abs() > TIME_TOLERANCE {
            return Err(Error::InvalidArgument(format!(
                "keyframe {f} times differ: predicted {tp}, observed {to}"
            )));
        }
        sum += chamfer_points(&pred.positions, &obs.positions);
    }
    Ok(sum / predicted.n_frames() as f64)
}

/// Closed-form least-squares fit of the initial velocity from centroid
/// motion over the first `n_pre` keyframes, assumed contact-free:
/// v0 = argmin sum_f ||c_f - c_0 - v0 t_f - 1/2 g t_f^2||^2 with times
/// relative to the first frame.
pub fn estimate_v0(
    observed: &Trajectory,
    n_pre: usize,
    gravity: Vector3<f64>,
) -> Result<Vector3<f64>> {
    if n_pre < 2 {
        return Err(Error::InvalidArgument(format!("v0 pre-stage needs n_pre >= 2, got {n_pre}")));
    }
    if n_pre > observed.n_frames() {
        return Err(Error::InsufficientPoints { needed: n_pre, available: observed.n_frames() });
    }
    let t0 = observed.keyframes[0].0;
    let c0 = observed.keyframes[0].1.centroid();
    let mut num = Vector3::zeros();
    let mut den = 0.0;
    for (t, cloud) in &observed.keyframes[1..n_pre] {
        let tf = t - t0;
        num += tf * (cloud.centroid() - c0 - 0.5 * tf * tf * gravity);
        den += tf * tf;
    }
    Ok(num / den)
}

/// One optimization step as recorded in the loss history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub loss: f64,
    pub n_t: usize,
}

/// Plateau-triggered substep growth schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleConfig {
    /// Substep count at iteration 0.
    pub initial: usize,
    /// Multiplier applied on plateau.
    pub growth: usize,
    /// Number of trailing iterations (at the current substep count)
    /// inspected for a plateau.
    pub window: usize,
    /// A relative improvement below this over the window counts as a
    /// plateau.
    pub threshold: f64,
    /// Upper bound on the substep count.
    pub max: usize,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig { initial: 4, growth: 2, window: 20, threshold: 1e-3, max: 64 }
    }
}

/// Grows the substep count when the loss has plateaued.
///
/// Only the trailing run of iterations already at `current` substeps is
/// inspected, so a fresh growth gets a full window before the next one, and
/// losses from different discretizations are never compared.
pub fn substep_schedule(history: &[IterationRecord], current: usize, config: &ScheduleConfig) -> usize {
    if current >= config.max {
        return current;
    }
    let run = history.iter().rev().take_while(|r| r.n_t == current).count();
    if run < config.window {
        return current;
    }
    let last = history[history.len() - 1].loss;
    let first = history[history.len() - config.window].loss;
    let improvement = (first - last) / first.abs().max(f64::MIN_POSITIVE);
    if improvement < config.threshold {
        (current * config.growth).min(config.max)
    } else {
        current
    }
}

/// Configuration for [`identify`].
///
/// The ground plane height is taken from `boundary` and held fixed: it is
/// part of the scene description, not a recovered quantity. Friction is the
/// learned boundary parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentConfig {
    pub iterations: usize,
    /// Learning rate for log stiffness and kappa.
    pub lr_stiffness: f64,
    /// Learning rate for the friction logit.
    pub lr_boundary: f64,
    /// Learning rate for joint v0 refinement.
    pub lr_v0: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub schedule: ScheduleConfig,
    pub chamfer_weight: f64,
    /// Frames used by the v0 pre-stage.
    pub n_pre: usize,
    /// Keep v0 at its pre-stage estimate instead of refining it jointly.
    pub freeze_v0: bool,
    /// Tie all log k_i to a single global value (ablation mode).
    pub single_k: bool,
    pub log_k_init: f64,
    pub kappa_init: f64,
    /// Skips the pre-stage when set (checkpoint warm starts).
    pub v0_init: Option<Vector3<f64>>,
    pub boundary: BoundaryParams,
    pub constants: SimConstants,
    /// Recorded for provenance; the optimization itself is deterministic
    /// and draws no random numbers.
    pub seed: u64,
}

impl Default for IdentConfig {
    fn default() -> Self {
        IdentConfig {
            iterations: 300,
            lr_stiffness: 1e-2,
            lr_boundary: 1e-3,
            lr_v0: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            schedule: ScheduleConfig::default(),
            chamfer_weight: 1.0,
            n_pre: 3,
            freeze_v0: false,
            single_k: false,
            log_k_init: 1000.0f64.ln(),
            kappa_init: 0.0,
            v0_init: None,
            boundary: BoundaryParams::default(),
            constants: SimConstants::default(),
            seed: 0,
        }
    }
}

/// Recovers physical parameters from an observed trajectory.
///
/// Returns the best-loss parameters seen during optimization (never worse
/// than the initialization) together with the full loss history.
pub fn identify(
    anchors: &AnchorSystem,
    topology: &SpringTopology,
    observed: &Trajectory,
    config: &IdentConfig,
) -> Result<(PhysicalParams, Vec<IterationRecord>)> {
    let n = anchors.len();
    if topology.n_anchors() != n {
        return Err(Error::SizeMismatch {
            what: "anchors vs topology",
            expected: topology.n_anchors(),
            actual: n,
        });
    }
    if observed.n_frames() < 2 {
        return Err(Error::InvalidArgument(format!(
            "identification needs >= 2 observed keyframes, got {}",
            observed.n_frames()
        )));
    }
    if config.iterations == 0 {
        return Err(Error::InvalidArgument("iterations must be > 0".into()));
    }
    let sched = &config.schedule;
    if sched.initial < 1 || sched.max < sched.initial || sched.growth < 1 || sched.window < 1 {
        return Err(Error::InvalidArgument(format!(
            "bad substep schedule: initial {}, growth {}, window {}, max {}",
            sched.initial, sched.growth, sched.window, sched.max
        )));
    }

    let v0 = match config.v0_init {
        Some(v) => v,
        None => estimate_v0(observed, config.n_pre, config.constants.gravity)?,
    };
    let mut params = PhysicalParams {
        v0,
        log_k: vec![config.log_k_init; n],
        kappa: config.kappa_init,
        boundary: config.boundary,
        constants: config.constants,
    };

    let (b1, b2, eps) = (config.beta1, config.beta2, config.epsilon);
    let mut adam_k = Adam::new(if config.single_k { 1 } else { n }, b1, b2, eps);
    let mut adam_kappa = Adam::new(1, b1, b2, eps);
    let mut adam_friction = Adam::new(1, b1, b2, eps);
    let mut adam_v0 = Adam::new(3, b1, b2, eps);
    let mut shared_log_k = [config.log_k_init];

    let mut n_t = sched.initial;
    let mut history: Vec<IterationRecord> = Vec::with_capacity(config.iterations);
    let mut best_loss = f64::INFINITY;
    let mut best_params = params.clone();

    for iteration in 0..config.iterations {
        let spec = LossSpec { chamfer_weight: config.chamfer_weight, n_t };
        let (loss, grad) = grad_rollout(anchors, topology, &params, observed, &spec)
            .map_err(|e| match e {
                Error::NonFiniteState { .. } => Error::DivergedLoss { iteration },
                other => other,
            })?;
        history.push(IterationRecord { iteration, loss, n_t });
        if loss < best_loss {
            best_loss = loss;
            best_params = params.clone();
        }

        if config.single_k {
            let tied: f64 = grad.log_k.iter().sum();
            adam_k.step(&mut shared_log_k, &[tied], config.lr_stiffness);
            params.log_k.fill(shared_log_k[0]);
        } else {
            adam_k.step(&mut params.log_k, &grad.log_k, config.lr_stiffness);
        }
        let mut kappa = [params.kappa];
        adam_kappa.step(&mut kappa, &[grad.kappa], config.lr_stiffness);
        params.kappa = kappa[0];
        let mut friction = [params.boundary.friction_logit];
        adam_friction.step(&mut friction, &[grad.friction_logit], config.lr_boundary);
        params.boundary.friction_logit = friction[0];
        if !config.freeze_v0 {
            let mut v = [params.v0.x, params.v0.y, params.v0.z];
            adam_v0.step(&mut v, &[grad.v0.x, grad.v0.y, grad.v0.z], config.lr_v0);
            params.v0 = Vector3::new(v[0], v[1], v[2]);
        }

        n_t = substep_schedule(&history, n_t, sched);
    }
    Ok((best_params, history))
}
