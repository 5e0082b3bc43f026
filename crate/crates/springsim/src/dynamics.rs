//! Spring-mass physics core: soft connectivity vector, spring and damping
//! forces, gravity, semi-implicit Euler integration, ground contact, and
//! kernel interpolation.
//!
//! Forces follow the anchor-point model: each anchor i carries a stiffness
//! k_i, and the directed edge to its j-th neighbour gets k_ij = k_i / l_ij
//! and damping zeta_ij = zeta0 / l_ij, where l_ij is the rest length frozen
//! at topology build time. Neighbour sums always run in stored slot order so
//! results are bit-reproducible.

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::{AnchorSystem, BindingTable, SpringTopology};

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable ln(1 + e^x).
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Fixed, non-learnable scalars of the model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConstants {
    /// Anchor mass m0 (kg), shared by all anchors.
    pub mass: f64,
    /// Damping coefficient zeta0; per-edge damping is zeta0 / rest length.
    pub damping: f64,
    /// Spring nonlinearity exponent p_k >= 0; p_k = 0 is Hooke's law.
    pub spring_exponent: f64,
    /// Inverse-distance weighting exponent p_b for kernel binding.
    pub binding_exponent: f64,
    /// Springs per anchor.
    pub n_k: usize,
    /// Anchors bound per kernel.
    pub n_b: usize,
    /// Always-active spring count in the soft connectivity vector.
    pub n_c: usize,
    /// Gravitational acceleration (m/s^2).
    pub gravity: Vector3<f64>,
}

impl Default for SimConstants {
    fn default() -> Self {
        SimConstants {
            mass: 1.0,
            damping: 0.1,
            spring_exponent: 0.5,
            binding_exponent: 0.5,
            n_k: 256,
            n_b: 16,
            n_c: 16,
            gravity: Vector3::new(0.0, 0.0, -9.8),
        }
    }
}

/// Ground-plane contact parameters. The friction coefficient lives behind a
/// logit so it stays in (0, 1) under unconstrained optimization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryParams {
    /// Ground height h (m); contact triggers strictly below it.
    pub height: f64,
    /// Friction logit theta_f; mu_f = sigmoid(theta_f).
    pub friction_logit: f64,
    /// Sticky ground zeroes the full velocity on contact instead of damping
    /// only the tangential part.
    pub sticky: bool,
}

impl Default for BoundaryParams {
    fn default() -> Self {
        BoundaryParams {
            height: 0.0,
            friction_logit: 0.0,
            sticky: false,
        }
    }
}

impl BoundaryParams {
    pub fn friction(&self) -> f64 {
        sigmoid(self.friction_logit)
    }
}

/// Learnable physical parameters plus the fixed constants they act under.
///
/// Stiffness is stored as log k_i per anchor: positivity comes for free and
/// gradients are reported in log space.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalParams {
    /// Initial velocity applied uniformly to every anchor at rollout onset.
    pub v0: Vector3<f64>,
    /// Per-anchor log stiffness, one entry per anchor.
    pub log_k: Vec<f64>,
    /// Soft connectivity control; see [`soft_vector`].
    pub kappa: f64,
    pub boundary: BoundaryParams,
    pub constants: SimConstants,
}

impl PhysicalParams {
    /// Uniform-stiffness parameters over `n_anchors` anchors.
    pub fn uniform(n_anchors: usize, log_k: f64, constants: SimConstants) -> Self {
        PhysicalParams {
            v0: Vector3::zeros(),
            log_k: vec![log_k; n_anchors],
            kappa: 0.0,
            boundary: BoundaryParams::default(),
            constants,
        }
    }

    /// Natural-scale stiffness k_i = exp(log k_i).
    pub fn stiffness(&self) -> Vec<f64> {
        self.log_k.iter().map(|&l| l.exp()).collect()
    }
}

/// Anchor state at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub positions: Vec<Vector3<f64>>,
    pub velocities: Vec<Vector3<f64>>,
    pub time: f64,
}

impl SimState {
    pub fn new(positions: Vec<Vector3<f64>>, velocities: Vec<Vector3<f64>>, time: f64) -> Self {
        assert_eq!(positions.len(), velocities.len());
        SimState { positions, velocities, time }
    }

    pub fn from_anchors(anchors: &AnchorSystem) -> Self {
        SimState {
            positions: anchors.positions.clone(),
            velocities: anchors.velocities.clone(),
            time: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Per-neighbour-rank spring activation weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftVector {
    /// eta_j for slots j = 1..=n_k (stored 0-indexed), each in [0, 1],
    /// non-increasing, and exactly 1 for the first n_c slots.
    pub weights: Vec<f64>,
}

/// Soft connectivity vector: eta_j = 1 for j <= n_c, and
/// clamp(2 - exp(softplus(kappa))^(j - n_c), 0, 1) beyond, with j 1-indexed.
///
/// exp(softplus(kappa)) = 1 + e^kappa > 1, so the tail decays monotonically:
/// kappa -> -inf recovers all-ones, kappa -> +inf a hard cutoff at n_c.
pub fn soft_vector(kappa: f64, n_c: usize, n_k: usize) -> SoftVector {
    assert!(n_c >= 1 && n_c <= n_k, "need 1 <= n_c <= n_k");
    let base = softplus(kappa).exp();
    let mut weights = Vec::with_capacity(n_k);
    for j in 1..=n_k {
        if j <= n_c {
            weights.push(1.0);
        } else {
            let m = (j - n_c) as i32;
            weights.push((2.0 - base.powi(m)).clamp(0.0, 1.0));
        }
    }
    SoftVector { weights }
}

/// Soft vector together with d(eta_j)/d(kappa).
///
/// Interior branch: d/dk [2 - a^m] = -m * a^(m-1) * da/dk with
/// a = exp(softplus(kappa)) and da/dk = a * sigmoid(kappa). Clamped slots and
/// the always-on prefix get zero, the forward-branch convention.
pub fn soft_vector_with_grad(kappa: f64, n_c: usize, n_k: usize) -> (SoftVector, Vec<f64>) {
    assert!(n_c >= 1 && n_c <= n_k, "need 1 <= n_c <= n_k");
    let base = softplus(kappa).exp();
    let dbase = base * sigmoid(kappa);
    let mut weights = Vec::with_capacity(n_k);
    let mut grads = Vec::with_capacity(n_k);
    for j in 1..=n_k {
        if j <= n_c {
            weights.push(1.0);
            grads.push(0.0);
            continue;
        }
        let m = (j - n_c) as i32;
        let raw = 2.0 - base.powi(m);
        if raw <= 0.0 || raw >= 1.0 {
            weights.push(raw.clamp(0.0, 1.0));
            grads.push(0.0);
        } else {
            weights.push(raw);
            grads.push(-(m as f64) * base.powi(m - 1) * dbase);
        }
    }
    (SoftVector { weights }, grads)
}

/// Restoring force on x_i from the spring to x_j:
/// F = -eta_j * k_ij * dl * |dl|^{p_k} * u, dl = |x_i - x_j| - l,
/// u = (x_i - x_j) / |x_i - x_j|.
///
/// Coincident endpoints leave u undefined; the force is defined as zero
/// there.
pub fn spring_force(
    x_i: Vector3<f64>,
    x_j: Vector3<f64>,
    rest: f64,
    k_ij: f64,
    eta_j: f64,
    p_k: f64,
) -> Vector3<f64> {
    let diff = x_i - x_j;
    let dist = diff.norm();
    if dist == 0.0 {
        return Vector3::zeros();
    }
    let dl = dist - rest;
    let scale = -eta_j * k_ij * dl * dl.abs().powf(p_k) / dist;
    scale * diff
}

/// Damping force on x_i: the relative velocity projected onto the spring
/// axis, opposed. Zero for coincident endpoints.
pub fn damping_force(
    x_i: Vector3<f64>,
    x_j: Vector3<f64>,
    v_i: Vector3<f64>,
    v_j: Vector3<f64>,
    zeta_ij: f64,
) -> Vector3<f64> {
    let diff = x_i - x_j;
    let dist = diff.norm();
    if dist == 0.0 {
        return Vector3::zeros();
    }
    let u = diff / dist;
    let rate = (v_i - v_j).dot(&u);
    (-zeta_ij * rate) * u
}

/// Force accumulation over the stored neighbour order, shared by the public
/// API and the rollout fast path (which precomputes `stiffness` once).
pub(crate) fn accumulate_forces(
    positions: &[Vector3<f64>],
    velocities: &[Vector3<f64>],
    topology: &SpringTopology,
    stiffness: &[f64],
    eta: &SoftVector,
    constants: &SimConstants,
    out: &mut Vec<Vector3<f64>>,
) {
    let gravity_force = constants.mass * constants.gravity;
    out.clear();
    for i in 0..positions.len() {
        let (neighbors, rests) = topology.row(i);
        let mut f = gravity_force;
        for (slot, (&j, &rest)) in neighbors.iter().zip(rests).enumerate() {
            let j = j as usize;
            let k_ij = stiffness[i] / rest;
            let zeta_ij = constants.damping / rest;
            f += spring_force(
                positions[i],
                positions[j],
                rest,
                k_ij,
                eta.weights[slot],
                constants.spring_exponent,
            );
            f += damping_force(positions[i], positions[j], velocities[i], velocities[j], zeta_ij);
        }
        out.push(f);
    }
}

/// Net force on every anchor: springs, damping, gravity.
pub fn total_force(
    state: &SimState,
    topology: &SpringTopology,
    params: &PhysicalParams,
    eta: &SoftVector,
) -> Vec<Vector3<f64>> {
    let stiffness = params.stiffness();
    let mut out = Vec::with_capacity(state.len());
    accumulate_forces(
        &state.positions,
        &state.velocities,
        topology,
        &stiffness,
        eta,
        &params.constants,
        &mut out,
    );
    out
}

/// Ground-plane contact, applied after each integration step.
///
/// Strictly below the plane the anchor is snapped to it; sticky ground
/// zeroes the velocity, smooth ground zeroes the normal component and scales
/// the tangential one by (1 - mu_f). Above or exactly on the plane this is
/// the identity, which makes the operation idempotent.
pub fn apply_boundary(
    position: Vector3<f64>,
    velocity: Vector3<f64>,
    boundary: &BoundaryParams,
) -> (Vector3<f64>, Vector3<f64>) {
    if position.z >= boundary.height {
        return (position, velocity);
    }
    let pos = Vector3::new(position.x, position.y, boundary.height);
    let vel = if boundary.sticky {
        Vector3::zeros()
    } else {
        let keep = 1.0 - boundary.friction();
        Vector3::new(velocity.x * keep, velocity.y * keep, 0.0)
    };
    (pos, vel)
}

pub(crate) fn step_with_stiffness(
    state: &SimState,
    topology: &SpringTopology,
    stiffness: &[f64],
    eta: &SoftVector,
    constants: &SimConstants,
    boundary: &BoundaryParams,
    dt: f64,
    forces: &mut Vec<Vector3<f64>>,
) -> Result<SimState> {
    accumulate_forces(&state.positions, &state.velocities, topology, stiffness, eta, constants, forces);
    let inv_mass = 1.0 / constants.mass;
    let n = state.len();
    let mut positions = Vec::with_capacity(n);
    let mut velocities = Vec::with_capacity(n);
    for i in 0..n {
        let f = forces[i];
        if !(f.x.is_finite() && f.y.is_finite() && f.z.is_finite()) {
            return Err(Error::NonFiniteForce { anchor: i });
        }
        let v_hat = state.velocities[i] + f * (inv_mass * dt);
        let x_hat = state.positions[i] + v_hat * dt;
        let (x, v) = apply_boundary(x_hat, v_hat, boundary);
        positions.push(x);
        velocities.push(v);
    }
    Ok(SimState {
        positions,
        velocities,
        time: state.time + dt,
    })
}

/// One semi-implicit Euler step: velocity first, then position with the new
/// velocity, then the boundary per anchor.
pub fn step(
    state: &SimState,
    topology: &SpringTopology,
    params: &PhysicalParams,
    eta: &SoftVector,
    dt: f64,
) -> Result<SimState> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("dt must be positive and finite, got {dt}")));
    }
    let stiffness = params.stiffness();
    let mut forces = Vec::with_capacity(state.len());
    step_with_stiffness(
        state,
        topology,
        &stiffness,
        eta,
        &params.constants,
        &params.boundary,
        dt,
        &mut forces,
    )
}

/// Places each kernel at the inverse-distance-weighted mean of its bound
/// anchors' current positions. The weights were frozen at bind time.
pub fn interpolate_kernels(binding: &BindingTable, anchor_positions: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
    let mut out = Vec::with_capacity(binding.n_kernels());
    for i in 0..binding.n_kernels() {
        let (idx, w) = binding.row(i);
        let mut p = Vector3::zeros();
        for (&a, &wj) in idx.iter().zip(w) {
            p += wj * anchor_positions[a as usize];
        }
        out.push(p);
    }
    out
}

/// Branch decisions taken during a rollout, hashed into a signature.
///
/// Two rollouts that took identical contact and clamp branches produce equal
/// signatures; finite-difference probes use this to discard perturbations
/// that flipped a branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BranchSignature {
    pub hash: u64,
    /// Total (substep, anchor) contact activations.
    pub contact_events: u64,
}

/// Full rollout: `n_keyframes` anchor states sampled every `dt_frame`
/// seconds, the first being the initial state, with `n_t` integration
/// substeps per keyframe interval. Initial velocities are all set to
/// `params.v0`; the velocities stored in `anchors` are ignored.
pub fn rollout(
    anchors: &AnchorSystem,
    topology: &SpringTopology,
    params: &PhysicalParams,
    n_keyframes: usize,
    n_t: usize,
    dt_frame: f64,
) -> Result<Vec<SimState>> {
    Ok(rollout_traced(anchors, topology, params, n_keyframes, n_t, dt_frame)?.0)
}

/// [`rollout`] plus the branch signature of the run.
pub fn rollout_traced(
    anchors: &AnchorSystem,
    topology: &SpringTopology,
    params: &PhysicalParams,
    n_keyframes: usize,
    n_t: usize,
    dt_frame: f64,
) -> Result<(Vec<SimState>, BranchSignature)> {
    use std::hash::{Hash, Hasher};

    if n_keyframes < 1 {
        return Err(Error::InvalidArgument("n_keyframes must be >= 1".into()));
    }
    if n_t < 1 {
        return Err(Error::InvalidArgument("n_t must be >= 1".into()));
    }
    if !(dt_frame > 0.0 && dt_frame.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "dt_frame must be positive and finite, got {dt_frame}"
        )));
    }
    if anchors.len() != topology.n_anchors() {
        return Err(Error::SizeMismatch {
            what: "anchors vs topology",
            expected: topology.n_anchors(),
            actual: anchors.len(),
        });
    }
    if params.log_k.len() != anchors.len() {
        return Err(Error::SizeMismatch {
            what: "log_k",
            expected: anchors.len(),
            actual: params.log_k.len(),
        });
    }

    // SipHash with fixed keys: deterministic across runs.
    let mut hasher = std::collections::hash_map::DefaultHasher::new();
    let mut contact_events = 0u64;

    let (eta, _) = soft_vector_with_grad(params.kappa, params.constants.n_c, topology.n_k);
    // Hash the eta branch pattern: clamp state per slot.
    for &w in &eta.weights {
        let branch: u8 = if w <= 0.0 { 0 } else if w >= 1.0 { 2 } else { 1 };
        branch.hash(&mut hasher);
    }

    let stiffness = params.stiffness();
    let dt = dt_frame / n_t as f64;
    let n = anchors.len();
    let mut state = SimState {
        positions: anchors.positions.clone(),
        velocities: vec![params.v0; n],
        time: 0.0,
    };
    let mut keyframes = Vec::with_capacity(n_keyframes);
    keyframes.push(state.clone());
    let mut forces = Vec::with_capacity(n);
    let mut substep = 0u64;
    for _ in 1..n_keyframes {
        for _ in 0..n_t {
            let next = step_with_stiffness(
                &state,
                topology,
                &stiffness,
                &eta,
                &params.constants,
                &params.boundary,
                dt,
                &mut forces,
            )?;
            // Contact branches: recompute the pre-boundary position (bit-
            // identical to the step's own arithmetic) to see which anchors
            // were snapped.
            for i in 0..n {
                let pre_v = state.velocities[i] + forces[i] * (dt / params.constants.mass);
                let pre_x = state.positions[i] + pre_v * dt;
                if pre_x.z < params.boundary.height {
                    (substep, i as u64).hash(&mut hasher);
                    contact_events += 1;
                }
            }
            state = next;
            substep += 1;
        }
        keyframes.push(state.clone());
    }
    let signature = BranchSignature {
        hash: hasher.finish(),
        contact_events,
    };
    Ok((keyframes, signature))
}
