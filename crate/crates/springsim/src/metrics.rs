//! Evaluation metrics: Chamfer distance, Earth Mover's distance, PSNR, and
//! SSIM, following the usual point-cloud benchmark conventions.
//!
//! Chamfer is the symmetric sum of directed means of squared distances, in
//! m^2. EMD is the exact minimum-cost one-to-one matching under Euclidean
//! cost, averaged per point, in m; unequal-size clouds are first reduced to
//! a common size by deterministic farthest-point sampling.

use nalgebra::Vector3;

use crate::assignment::min_cost_assignment;
use crate::error::{Error, Result};
use crate::geometry::{farthest_point_indices, PointCloud};
use crate::splat::Image;

/// EMD instances larger than this are subsampled: exact assignment is cubic.
pub const EMD_MAX_POINTS: usize = 1024;

/// All four metrics for one evaluation pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    /// Chamfer distance (m^2).
    pub cd: f64,
    /// Earth Mover's distance (m).
    pub emd: f64,
    /// Peak signal-to-noise ratio (dB), capped at 100.
    pub psnr: f64,
    /// Structural similarity in [-1, 1].
    pub ssim: f64,
}

/// Converts a Chamfer value in m^2 to benchmark-table units of 1e3 mm^2.
pub fn cd_table_units(cd_sq_m: f64) -> f64 {
    cd_sq_m * 1e3
}

fn nearest_sq(p: Vector3<f64>, cloud: &[Vector3<f64>]) -> (usize, f64) {
    let mut best = 0usize;
    let mut best_d2 = f64::INFINITY;
    for (i, q) in cloud.iter().enumerate() {
        let d2 = (p - q).norm_squared();
        if d2 < best_d2 {
            best_d2 = d2;
            best = i;
        }
    }
    (best, best_d2)
}

/// Symmetric Chamfer distance:
/// (1/|A|) sum_a min_b ||a-b||^2 + (1/|B|) sum_b min_a ||a-b||^2.
pub fn chamfer(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    Ok(chamfer_points(&a.positions, &b.positions))
}

/// [`chamfer`] on bare position slices. Both must be non-empty; the cloud
/// type enforces that for public callers.
pub fn chamfer_points(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> f64 {
    debug_assert!(!a.is_empty() && !b.is_empty());
    let mut sum_ab = 0.0;
    for &p in a {
        sum_ab += nearest_sq(p, b).1;
    }
    let mut sum_ba = 0.0;
    for &q in b {
        sum_ba += nearest_sq(q, a).1;
    }
    sum_ab / a.len() as f64 + sum_ba / b.len() as f64
}

/// Chamfer distance and its gradient with respect to the `pred` points, with
/// nearest-neighbour correspondences frozen at their forward values (first
/// minimum index on exact ties).
pub fn chamfer_with_grad(
    pred: &[Vector3<f64>],
    target: &[Vector3<f64>],
) -> (f64, Vec<Vector3<f64>>) {
    debug_assert!(!pred.is_empty() && !target.is_empty());
    let na = pred.len() as f64;
    let nb = target.len() as f64;
    let mut grad = vec![Vector3::zeros(); pred.len()];
    // Accumulation mirrors chamfer_points exactly so the forward value is
    // bit-identical to the plain metric.
    let mut sum_ab = 0.0;
    for (i, &p) in pred.iter().enumerate() {
        let (j, d2) = nearest_sq(p, target);
        sum_ab += d2;
        grad[i] += (2.0 / na) * (p - target[j]);
    }
    let mut sum_ba = 0.0;
    for &q in target {
        let (i, d2) = nearest_sq(q, pred);
        sum_ba += d2;
        grad[i] += (2.0 / nb) * (pred[i] - q);
    }
    (sum_ab / na + sum_ba / nb, grad)
}

/// Earth Mover's distance: both clouds are reduced to
/// min(|A|, |B|, 1024) points by farthest-point sampling (seed 0), then
/// matched one-to-one with exact minimum total Euclidean cost, reported as
/// cost per point.
pub fn emd(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    let m = a.len().min(b.len()).min(EMD_MAX_POINTS);
    let sa = subsampled(&a.positions, m)?;
    let sb = subsampled(&b.positions, m)?;
    let mut cost = Vec::with_capacity(m * m);
    for &p in &sa {
        for &q in &sb {
            cost.push((p - q).norm());
        }
    }
    let sol = min_cost_assignment(m, &cost);
    Ok(sol.cost / m as f64)
}

fn subsampled(points: &[Vector3<f64>], m: usize) -> Result<Vec<Vector3<f64>>> {
    if points.len() == m {
        return Ok(points.to_vec());
    }
    let idx = farthest_point_indices(points, m, 0)?;
    Ok(idx.into_iter().map(|i| points[i]).collect())
}

fn check_dims(a: &Image, b: &Image) -> Result<()> {
    if a.width != b.width || a.height != b.height || a.channels != b.channels {
        return Err(Error::SizeMismatch {
            what: "image dimensions",
            expected: a.data.len(),
            actual: b.data.len(),
        });
    }
    Ok(())
}

/// Peak signal-to-noise ratio over all channels, for images in [0, 1].
/// Identical images report the 100 dB cap.
pub fn psnr(image: &Image, reference: &Image) -> Result<f64> {
    check_dims(image, reference)?;
    let mut mse = 0.0;
    for (x, y) in image.data.iter().zip(&reference.data) {
        let d = x - y;
        mse += d * d;
    }
    mse /= image.data.len() as f64;
    if mse == 0.0 {
        return Ok(100.0);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(100.0))
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let mut g = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for (i, tap) in g.iter_mut().enumerate() {
        let d = i as f64 - c;
        *tap = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
        sum += *tap;
    }
    for tap in g.iter_mut() {
        *tap /= sum;
    }
    g
}

/// Valid-mode separable Gaussian filter; output is (w-10) x (h-10).
fn blur_valid(input: &[f64], w: usize, h: usize, taps: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = w - (SSIM_WINDOW - 1);
    let oh = h - (SSIM_WINDOW - 1);
    let mut horiz = vec![0.0; ow * h];
    for r in 0..h {
        for c in 0..ow {
            let mut acc = 0.0;
            for (k, &t) in taps.iter().enumerate() {
                acc += t * input[r * w + c + k];
            }
            horiz[r * ow + c] = acc;
        }
    }
    let mut out = vec![0.0; ow * oh];
    for r in 0..oh {
        for c in 0..ow {
            let mut acc = 0.0;
            for (k, &t) in taps.iter().enumerate() {
                acc += t * horiz[(r + k) * ow + c];
            }
            out[r * ow + c] = acc;
        }
    }
    out
}

/// Mean structural similarity: 11x11 Gaussian window (sigma 1.5), K1 = 0.01,
/// K2 = 0.03, dynamic range 1, valid windows only, channels averaged.
pub fn ssim(image: &Image, reference: &Image) -> Result<f64> {
    check_dims(image, reference)?;
    let (w, h) = (image.width, image.height);
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::InvalidArgument(format!(
            "ssim needs images at least {SSIM_WINDOW} pixels per side, got {w}x{h}"
        )));
    }
    let taps = gaussian_taps();
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let n = w * h;
    let mut total = 0.0;
    for ch in 0..image.channels {
        let mut x = vec![0.0; n];
        let mut y = vec![0.0; n];
        let mut xx = vec![0.0; n];
        let mut yy = vec![0.0; n];
        let mut xy = vec![0.0; n];
        for i in 0..n {
            let xv = image.data[i * image.channels + ch];
            let yv = reference.data[i * image.channels + ch];
            x[i] = xv;
            y[i] = yv;
            xx[i] = xv * xv;
            yy[i] = yv * yv;
            xy[i] = xv * yv;
        }
        let mu_x = blur_valid(&x, w, h, &taps);
        let mu_y = blur_valid(&y, w, h, &taps);
        let m_xx = blur_valid(&xx, w, h, &taps);
        let m_yy = blur_valid(&yy, w, h, &taps);
        let m_xy = blur_valid(&xy, w, h, &taps);
        let mut acc = 0.0;
        for i in 0..mu_x.len() {
            let var_x = m_xx[i] - mu_x[i] * mu_x[i];
            let var_y = m_yy[i] - mu_y[i] * mu_y[i];
            let cov = m_xy[i] - mu_x[i] * mu_y[i];
            let num = (2.0 * mu_x[i] * mu_y[i] + c1) * (2.0 * cov + c2);
            let den = (mu_x[i] * mu_x[i] + mu_y[i] * mu_y[i] + c1) * (var_x + var_y + c2);
            acc += num / den;
        }
        total += acc / mu_x.len() as f64;
    }
    Ok(total / image.channels as f64)
}
