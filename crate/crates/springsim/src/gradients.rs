//! Reverse-mode differentiation of a full rollout-plus-Chamfer loss with
//! respect to every learnable parameter, plus a central finite-difference
//! oracle.
//!
//! The backward pass is a hand-derived discrete adjoint of the exact update
//! the integrator performs: forward substep states are stored (O(steps)
//! memory), and each backward substep recomputes that step's forces to
//! resolve branch decisions, then pushes adjoints through boundary,
//! integration, and force accumulation in reverse. Nonsmooth points (eta
//! clamps, ground contact, |dl|^{p_k} at zero) use the branch taken in the
//! forward pass.

use nalgebra::Vector3;

use crate::dynamics::{
    accumulate_forces, soft_vector_with_grad, step_with_stiffness, PhysicalParams, SimState,
};
use crate::error::{Error, Result};
use crate::geometry::{AnchorSystem, SpringTopology};
use crate::identification::Trajectory;
use crate::metrics::chamfer_with_grad;

/// Gradient of a rollout loss with respect to [`PhysicalParams`].
///
/// Stiffness gradients are reported in log space, matching how the
/// parameters are optimized.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGradient {
    pub v0: Vector3<f64>,
    pub log_k: Vec<f64>,
    pub kappa: f64,
    pub height: f64,
    pub friction_logit: f64,
}

impl ParamGradient {
    pub fn zeros(n_anchors: usize) -> Self {
        ParamGradient {
            v0: Vector3::zeros(),
            log_k: vec![0.0; n_anchors],
            kappa: 0.0,
            height: 0.0,
            friction_logit: 0.0,
        }
    }

    /// Flat layout [v0 xyz, log_k.., kappa, height, friction_logit], the
    /// same order as [`param_vector`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.log_k.len() + 6);
        v.extend_from_slice(&[self.v0.x, self.v0.y, self.v0.z]);
        v.extend_from_slice(&self.log_k);
        v.push(self.kappa);
        v.push(self.height);
        v.push(self.friction_logit);
        v
    }

    pub fn is_finite(&self) -> bool {
        self.flatten().iter().all(|x| x.is_finite())
    }
}

/// Loss definition for [`grad_rollout`]: weighted mean per-keyframe Chamfer
/// distance between simulated anchor positions and observed clouds, with
/// `n_t` integration substeps per keyframe interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSpec {
    pub chamfer_weight: f64,
    pub n_t: usize,
}

impl Default for LossSpec {
    fn default() -> Self {
        LossSpec { chamfer_weight: 1.0, n_t: 4 }
    }
}

/// Learnable parameters as a flat vector, ordered like
/// [`ParamGradient::flatten`]. Useful for finite-difference probing.
pub fn param_vector(params: &PhysicalParams) -> Vec<f64> {
    let mut v = Vec::with_capacity(params.log_k.len() + 6);
    v.extend_from_slice(&[params.v0.x, params.v0.y, params.v0.z]);
    v.extend_from_slice(&params.log_k);
    v.push(params.kappa);
    v.push(params.boundary.height);
    v.push(params.boundary.friction_logit);
    v
}

/// Rebuilds parameters from the flat layout of [`param_vector`].
pub fn params_from_vector(template: &PhysicalParams, x: &[f64]) -> PhysicalParams {
    let n = template.log_k.len();
    assert_eq!(x.len(), n + 6, "flat parameter vector has wrong length");
    let mut p = template.clone();
    p.v0 = Vector3::new(x[0], x[1], x[2]);
    p.log_k.copy_from_slice(&x[3..3 + n]);
    p.kappa = x[3 + n];
    p.boundary.height = x[4 + n];
    p.boundary.friction_logit = x[5 + n];
    p
}

/// Loss and exact reverse-mode gradient of the composed rollout + Chamfer
/// loss. The forward pass is bit-identical to [`crate::dynamics::rollout`]
/// followed by [`crate::identification::trajectory_loss`] scaled by
/// `spec.chamfer_weight`.
pub fn grad_rollout(
    anchors: &AnchorSystem,
    topology: &SpringTopology,
    params: &PhysicalParams,
    observed: &Trajectory,
    spec: &LossSpec,
) -> Result<(f64, ParamGradient)> {
    let n = anchors.len();
    if n != topology.n_anchors() {
        return Err(Error::SizeMismatch {
            what: "anchors vs topology",
            expected: topology.n_anchors(),
            actual: n,
        });
    }
    if params.log_k.len() != n {
        return Err(Error::SizeMismatch { what: "log_k", expected: n, actual: params.log_k.len() });
    }
    if spec.n_t < 1 {
        return Err(Error::InvalidArgument("n_t must be >= 1".into()));
    }
    let n_frames = observed.keyframes.len();
    let n_t = spec.n_t;
    let dt = observed.dt_frame / n_t as f64;
    let total_steps = (n_frames - 1) * n_t;

    let constants = &params.constants;
    let (eta, eta_grad) = soft_vector_with_grad(params.kappa, constants.n_c, topology.n_k);
    let stiffness = params.stiffness();

    // Forward: store the state at every substep boundary.
    let mut states: Vec<SimState> = Vec::with_capacity(total_steps + 1);
    states.push(SimState {
        positions: anchors.positions.clone(),
        velocities: vec![params.v0; n],
        time: 0.0,
    });
    let mut forces = Vec::with_capacity(n);
    for step_idx in 0..total_steps {
        let next = step_with_stiffness(
            &states[step_idx],
            topology,
            &stiffness,
            &eta,
            constants,
            &params.boundary,
            dt,
            &mut forces,
        )
        .map_err(|e| match e {
            Error::NonFiniteForce { .. } => Error::NonFiniteState { step: step_idx },
            other => other,
        })?;
        states.push(next);
    }

    // Loss over keyframes; accumulation mirrors trajectory_loss.
    let mut loss_sum = 0.0;
    let mut frame_grads: Vec<Vec<Vector3<f64>>> = Vec::with_capacity(n_frames);
    for f in 0..n_frames {
        let pred = &states[f * n_t].positions;
        let (cd, grad) = chamfer_with_grad(pred, &observed.keyframes[f].1.positions);
        loss_sum += cd;
        frame_grads.push(grad);
    }
    let loss = spec.chamfer_weight * (loss_sum / n_frames as f64);
    if !loss.is_finite() {
        return Err(Error::NonFiniteState { step: total_steps });
    }
    // d loss / d CD_f, identical for every frame.
    let frame_scale = spec.chamfer_weight / n_frames as f64;

    // Adjoint state at the time index currently being processed, starting
    // from the last keyframe.
    let mut xbar: Vec<Vector3<f64>> = frame_grads[n_frames - 1]
        .iter()
        .map(|g| frame_scale * g)
        .collect();
    let mut vbar: Vec<Vector3<f64>> = vec![Vector3::zeros(); n];

    let mut kbar = vec![0.0f64; n]; // natural-scale stiffness adjoint
    let mut eta_bar = vec![0.0f64; topology.n_k];
    let mut height_bar = 0.0f64;
    let mut friction_bar = 0.0f64; // adjoint of mu_f
    let mu = params.boundary.friction();
    let inv_mass = 1.0 / constants.mass;
    let p_k = constants.spring_exponent;

    let mut fbar: Vec<Vector3<f64>> = vec![Vector3::zeros(); n];
    for step_idx in (0..total_steps).rev() {
        let state = &states[step_idx];
        // Recompute this step's forces; branch decisions below re-derive the
        // pre-boundary candidates bit-identically to the forward pass.
        accumulate_forces(
            &state.positions,
            &state.velocities,
            topology,
            &stiffness,
            &eta,
            constants,
            &mut forces,
        );

        // Backward through boundary + integration, anchor by anchor.
        for i in 0..n {
            let v_hat = state.velocities[i] + forces[i] * (inv_mass * dt);
            let x_hat = state.positions[i] + v_hat * dt;
            let (xhat_bar, mut vhat_bar) = if x_hat.z < params.boundary.height {
                // Contact branch: z was snapped to the boundary height.
                height_bar += xbar[i].z;
                let xb = Vector3::new(xbar[i].x, xbar[i].y, 0.0);
                let vb = if params.boundary.sticky {
                    Vector3::zeros()
                } else {
                    friction_bar += -v_hat.x * vbar[i].x - v_hat.y * vbar[i].y;
                    let keep = 1.0 - mu;
                    Vector3::new(keep * vbar[i].x, keep * vbar[i].y, 0.0)
                };
                (xb, vb)
            } else {
                (xbar[i], vbar[i])
            };
            // x_hat = x + v_hat dt; v_hat = v + F (dt/m).
            vhat_bar += dt * xhat_bar;
            xbar[i] = xhat_bar;
            vbar[i] = vhat_bar;
            fbar[i] = (dt * inv_mass) * vhat_bar;
        }

        // Backward through force accumulation: F_i sums directed edges
        // (i -> j), each affecting x_i, x_j, v_i, v_j, k_i, eta_slot.
        for i in 0..n {
            let fb = fbar[i];
            if fb == Vector3::zeros() {
                continue;
            }
            let (neighbors, rests) = topology.row(i);
            for (slot, (&j, &rest)) in neighbors.iter().zip(rests).enumerate() {
                let j = j as usize;
                let diff = state.positions[i] - state.positions[j];
                let dist = diff.norm();
                if dist == 0.0 {
                    // Forward force was defined as zero; no gradient flows.
                    continue;
                }
                let u = diff / dist;
                let dl = dist - rest;
                let k_ij = stiffness[i] / rest;
                let zeta_ij = constants.damping / rest;
                let eta_s = eta.weights[slot];

                let sfun = dl * dl.abs().powf(p_k);
                let sprime = (1.0 + p_k) * dl.abs().powf(p_k);
                let relv = state.velocities[i] - state.velocities[j];
                let r = relv.dot(&u);
                // Edge force: (c + c_d) * u with c = -eta k_ij sfun and
                // c_d = -zeta r.
                let c = -eta_s * k_ij * sfun;
                let c_d = -zeta_ij * r;

                let abar = u.dot(&fb);
                let mut ubar = (c + c_d) * fb;

                // c = -eta k_ij sfun
                eta_bar[slot] += -k_ij * sfun * abar;
                kbar[i] += -eta_s * sfun * abar / rest;
                let dlbar = -eta_s * k_ij * sprime * abar;

                // c_d = -zeta (relv . u)
                let rbar = -zeta_ij * abar;
                let relvbar = rbar * u;
                ubar += rbar * relv;
                vbar[i] += relvbar;
                vbar[j] -= relvbar;

                // u = diff / dist, dist = |diff|, dl = dist - rest.
                let distbar = dlbar - u.dot(&ubar) / dist;
                let diffbar = ubar / dist + distbar * u;
                xbar[i] += diffbar;
                xbar[j] -= diffbar;
            }
        }

        // Keyframe boundary: inject that frame's Chamfer gradient.
        if step_idx % n_t == 0 && step_idx > 0 {
            let f = step_idx / n_t;
            for (xb, g) in xbar.iter_mut().zip(&frame_grads[f]) {
                *xb += frame_scale * g;
            }
        }
    }

    // Initial state: velocities are all v0; positions are fixed inputs.
    let mut v0_bar = Vector3::zeros();
    for vb in &vbar {
        v0_bar += vb;
    }
    let grad = ParamGradient {
        v0: v0_bar,
        log_k: kbar.iter().zip(&stiffness).map(|(&kb, &k)| kb * k).collect(),
        kappa: eta_bar.iter().zip(&eta_grad).map(|(&b, &g)| b * g).sum(),
        height: height_bar,
        friction_logit: friction_bar * mu * (1.0 - mu),
    };
    if !grad.is_finite() {
        return Err(Error::NonFiniteState { step: 0 });
    }
    Ok((loss, grad))
}

/// Central-difference gradient of an objective over the learnable
/// parameters, packaged like the reverse-mode result. Independent of the
/// adjoint code by construction; this is the verification oracle.
pub fn finite_diff_gradient<F>(
    mut objective: F,
    params: &PhysicalParams,
    h: f64,
) -> Result<ParamGradient>
where
    F: FnMut(&PhysicalParams) -> Result<f64>,
{
    let x0 = param_vector(params);
    let flat = finite_diff(|x| objective(&params_from_vector(params, x)), &x0, h)?;
    let n = params.log_k.len();
    Ok(ParamGradient {
        v0: Vector3::new(flat[0], flat[1], flat[2]),
        log_k: flat[3..3 + n].to_vec(),
        kappa: flat[3 + n],
        height: flat[4 + n],
        friction_logit: flat[5 + n],
    })
}

/// Central finite differences (f(x+h) - f(x-h)) / 2h per coordinate.
pub fn finite_diff<F>(mut objective: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("finite-difference step must be > 0, got {h}")));
    }
    let mut grad = Vec::with_capacity(x.len());
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let plus = objective(&probe)?;
        probe[i] = x[i] - h;
        let minus = objective(&probe)?;
        probe[i] = x[i];
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}
