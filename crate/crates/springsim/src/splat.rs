//! Forward rasterization of isotropic 3D Gaussians: projection through a
//! pinhole camera with the affine (Jacobian) approximation, depth-sorted
//! front-to-back alpha compositing, and silhouette rendering.
//!
//! Determinism contract: kernels are sorted by camera-space depth with index
//! as tie-break, every kernel contributes to exactly the pixels within three
//! projected standard deviations (a per-pixel Mahalanobis test, not a bbox
//! approximation), and per-pixel compositing is sequential. Tiling is purely
//! a traversal optimization, so images are bit-identical for any tile size.

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};

use crate::error::{Error, Result};

/// Opacity ceiling per splat, matching common splatting practice.
const ALPHA_MAX: f64 = 0.99;
/// Low-pass variance (px^2) added to the projected covariance diagonal.
const LOW_PASS: f64 = 0.3;
/// Squared Mahalanobis support cutoff: 3 standard deviations.
const MAHA_CUTOFF: f64 = 9.0;
/// Compositing early-out threshold on transmittance.
const T_MIN: f64 = 1e-4;

/// A cloud of isotropic Gaussian kernels (covariance s^2 I each).
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianCloud {
    pub centers: Vec<Vector3<f64>>,
    /// Standard deviation s (m) per kernel, strictly positive.
    pub scales: Vec<f64>,
    /// RGB in [0, 1].
    pub colors: Vec<[f64; 3]>,
    /// Opacity in [0, 1].
    pub opacities: Vec<f64>,
}

impl GaussianCloud {
    pub fn new(
        centers: Vec<Vector3<f64>>,
        scales: Vec<f64>,
        colors: Vec<[f64; 3]>,
        opacities: Vec<f64>,
    ) -> Result<Self> {
        let n = centers.len();
        if scales.len() != n {
            return Err(Error::SizeMismatch { what: "scales", expected: n, actual: scales.len() });
        }
        if colors.len() != n {
            return Err(Error::SizeMismatch { what: "colors", expected: n, actual: colors.len() });
        }
        if opacities.len() != n {
            return Err(Error::SizeMismatch {
                what: "opacities",
                expected: n,
                actual: opacities.len(),
            });
        }
        for c in &centers {
            if !(c.x.is_finite() && c.y.is_finite() && c.z.is_finite()) {
                return Err(Error::NonFiniteInput { what: "gaussian centers" });
            }
        }
        for &s in &scales {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::InvalidArgument(format!("gaussian scale must be > 0, got {s}")));
            }
        }
        for c in &colors {
            if c.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
                return Err(Error::InvalidArgument("colors must lie in [0,1]".into()));
            }
        }
        for &o in &opacities {
            if !(0.0..=1.0).contains(&o) {
                return Err(Error::InvalidArgument(format!("opacity must lie in [0,1], got {o}")));
            }
        }
        Ok(GaussianCloud { centers, scales, colors, opacities })
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }
}

/// Pinhole camera with a rigid world-to-camera transform.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    /// Principal point (px); pixel (r, c) has center (c + 0.5, r + 0.5).
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// Near plane (m); kernels at or behind it are culled.
    pub near: f64,
    /// World-to-camera rotation, orthonormal with det +1.
    pub rotation: Matrix3<f64>,
    /// World-to-camera translation.
    pub translation: Vector3<f64>,
}

impl Camera {
    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::InvalidArgument("focal lengths must be positive".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidArgument("image dimensions must be nonzero".into()));
        }
        if !(self.near > 0.0 && self.near.is_finite()) {
            return Err(Error::InvalidArgument("near plane must be positive".into()));
        }
        let rtr = self.rotation.transpose() * self.rotation;
        if (rtr - Matrix3::identity()).norm() > 1e-6 || (self.rotation.determinant() - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidArgument(
                "world-to-camera rotation must be orthonormal with det +1".into(),
            ));
        }
        Ok(())
    }

    /// World point to camera space.
    pub fn to_camera(&self, p: Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }
}

/// Row-major floating-point image, channel-interleaved, values in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        Image { width, height, channels, data: vec![value; width * height * channels] }
    }

    pub fn pixel(&self, row: usize, col: usize) -> &[f64] {
        let s = (row * self.width + col) * self.channels;
        &self.data[s..s + self.channels]
    }

    pub fn pixel_mut(&mut self, row: usize, col: usize) -> &mut [f64] {
        let s = (row * self.width + col) * self.channels;
        &mut self.data[s..s + self.channels]
    }
}

/// One kernel after projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedGaussian {
    /// Image-plane mean (px).
    pub mean: Vector2<f64>,
    /// 2x2 image-plane covariance (px^2), before low-pass.
    pub cov: Matrix2<f64>,
    /// Camera-space depth (m).
    pub depth: f64,
}

/// Projects one isotropic kernel; `None` when it sits at or behind the near
/// plane (culled, not an error).
///
/// With a rigid W and isotropic covariance, W Sigma W^T = s^2 I, so the
/// image covariance reduces to s^2 J J^T for the pinhole Jacobian J.
pub fn project_gaussian(center: Vector3<f64>, scale: f64, camera: &Camera) -> Option<ProjectedGaussian> {
    let q = camera.to_camera(center);
    if q.z <= camera.near {
        return None;
    }
    let inv_z = 1.0 / q.z;
    let mean = Vector2::new(
        camera.fx * q.x * inv_z + camera.cx,
        camera.fy * q.y * inv_z + camera.cy,
    );
    // J = [fx/z, 0, -fx x/z^2; 0, fy/z, -fy y/z^2]
    let j00 = camera.fx * inv_z;
    let j02 = -camera.fx * q.x * inv_z * inv_z;
    let j11 = camera.fy * inv_z;
    let j12 = -camera.fy * q.y * inv_z * inv_z;
    let s2 = scale * scale;
    let cov = Matrix2::new(
        s2 * (j00 * j00 + j02 * j02),
        s2 * (j02 * j12),
        s2 * (j02 * j12),
        s2 * (j11 * j11 + j12 * j12),
    );
    Some(ProjectedGaussian { mean, cov, depth: q.z })
}

struct Splat {
    mean: Vector2<f64>,
    /// Inverse of the low-passed covariance.
    inv_cov: Matrix2<f64>,
    color: [f64; 3],
    opacity: f64,
    /// Conservative pixel bounds [col0, col1) x [row0, row1).
    col0: usize,
    col1: usize,
    row0: usize,
    row1: usize,
}

fn prepare_splats(cloud: &GaussianCloud, camera: &Camera) -> Vec<Splat> {
    let mut order: Vec<(f64, usize, ProjectedGaussian)> = Vec::with_capacity(cloud.len());
    for i in 0..cloud.len() {
        if let Some(p) = project_gaussian(cloud.centers[i], cloud.scales[i], camera) {
            order.push((p.depth, i, p));
        }
    }
    // Ascending depth, ties by original index; depths are finite here.
    order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));

    let mut splats = Vec::with_capacity(order.len());
    for (_, i, p) in order {
        let cov = Matrix2::new(
            p.cov[(0, 0)] + LOW_PASS,
            p.cov[(0, 1)],
            p.cov[(1, 0)],
            p.cov[(1, 1)] + LOW_PASS,
        );
        let det = cov[(0, 0)] * cov[(1, 1)] - cov[(0, 1)] * cov[(1, 0)];
        if det <= 0.0 || !det.is_finite() {
            continue;
        }
        let inv_cov = Matrix2::new(cov[(1, 1)], -cov[(0, 1)], -cov[(1, 0)], cov[(0, 0)]) / det;
        // Support radius from the largest eigenvalue; the per-pixel test is
        // exact, this bound only trims traversal.
        let tr = cov[(0, 0)] + cov[(1, 1)];
        let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
        let lambda_max = 0.5 * tr + disc;
        let radius = 3.0 * lambda_max.sqrt();
        // Pixel (r, c) has center (c+0.5, r+0.5); intersect the support disc
        // with the image.
        let col0 = (p.mean.x - radius - 0.5).ceil().max(0.0) as usize;
        let col1 = ((p.mean.x + radius - 0.5).floor() as isize + 1).clamp(0, camera.width as isize) as usize;
        let row0 = (p.mean.y - radius - 0.5).ceil().max(0.0) as usize;
        let row1 = ((p.mean.y + radius - 0.5).floor() as isize + 1).clamp(0, camera.height as isize) as usize;
        if col0 >= col1 || row0 >= row1 {
            continue;
        }
        splats.push(Splat {
            mean: p.mean,
            inv_cov,
            color: cloud.colors[i],
            opacity: cloud.opacities[i],
            col0,
            col1,
            row0,
            row1,
        });
    }
    splats
}

fn composite_pixel(splat_list: &[&Splat], px: f64, py: f64, background: &[f64; 3], out: &mut [f64], alpha_out: &mut f64) {
    let mut t = 1.0f64;
    let mut rgb = [0.0f64; 3];
    for s in splat_list {
        let dx = px - s.mean.x;
        let dy = py - s.mean.y;
        let maha = s.inv_cov[(0, 0)] * dx * dx
            + (s.inv_cov[(0, 1)] + s.inv_cov[(1, 0)]) * dx * dy
            + s.inv_cov[(1, 1)] * dy * dy;
        if maha > MAHA_CUTOFF {
            continue;
        }
        let alpha = (s.opacity * (-0.5 * maha).exp()).min(ALPHA_MAX);
        for c in 0..3 {
            rgb[c] += t * alpha * s.color[c];
        }
        t *= 1.0 - alpha;
        if t < T_MIN {
            break;
        }
    }
    for c in 0..3 {
        out[c] = rgb[c] + t * background[c];
    }
    *alpha_out = 1.0 - t;
}

fn render(cloud: &GaussianCloud, camera: &Camera, background: [f64; 3], tile: usize) -> Result<(Image, Image)> {
    camera.validate()?;
    let splats = prepare_splats(cloud, camera);
    let mut rgb = Image::filled(camera.width, camera.height, 3, 0.0);
    let mut sil = Image::filled(camera.width, camera.height, 1, 0.0);
    let tile = tile.max(1);
    let mut tile_splats: Vec<&Splat> = Vec::new();
    for tile_row in (0..camera.height).step_by(tile) {
        let row_end = (tile_row + tile).min(camera.height);
        for tile_col in (0..camera.width).step_by(tile) {
            let col_end = (tile_col + tile).min(camera.width);
            // Kernels whose support bbox touches the tile, in global depth
            // order.
            tile_splats.clear();
            for s in &splats {
                if s.col0 < col_end && s.col1 > tile_col && s.row0 < row_end && s.row1 > tile_row {
                    tile_splats.push(s);
                }
            }
            for row in tile_row..row_end {
                for col in tile_col..col_end {
                    let px = col as f64 + 0.5;
                    let py = row as f64 + 0.5;
                    let mut alpha = 0.0;
                    composite_pixel(
                        &tile_splats,
                        px,
                        py,
                        &background,
                        rgb.pixel_mut(row, col),
                        &mut alpha,
                    );
                    sil.pixel_mut(row, col)[0] = alpha;
                }
            }
        }
    }
    Ok((rgb, sil))
}

/// Rasterizes the cloud over a uniform background color.
pub fn rasterize(cloud: &GaussianCloud, camera: &Camera, background: [f64; 3]) -> Result<Image> {
    Ok(render(cloud, camera, background, 16)?.0)
}

/// [`rasterize`] with an explicit tile size; the result is bit-identical for
/// every tile size.
pub fn rasterize_tiled(
    cloud: &GaussianCloud,
    camera: &Camera,
    background: [f64; 3],
    tile: usize,
) -> Result<Image> {
    Ok(render(cloud, camera, background, tile)?.0)
}

/// Accumulated opacity 1 - T per pixel, in [0, 1].
pub fn render_silhouette(cloud: &GaussianCloud, camera: &Camera) -> Result<Image> {
    Ok(render(cloud, camera, [0.0; 3], 16)?.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn test_camera(width: usize, height: usize) -> Camera {
        Camera {
            fx: 100.0,
            fy: 100.0,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            width,
            height,
            near: 0.01,
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    fn single_kernel(z: f64, scale: f64, color: [f64; 3], opacity: f64) -> GaussianCloud {
        GaussianCloud::new(vec![Vector3::new(0.0, 0.0, z)], vec![scale], vec![color], vec![opacity])
            .unwrap()
    }

    fn random_cloud(n: usize, seed: u64) -> GaussianCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers = (0..n)
            .map(|_| {
                Vector3::new(
                    rng.gen::<f64>() * 0.6 - 0.3,
                    rng.gen::<f64>() * 0.6 - 0.3,
                    1.0 + rng.gen::<f64>(),
                )
            })
            .collect();
        let scales = (0..n).map(|_| 0.02 + 0.05 * rng.gen::<f64>()).collect();
        let colors = (0..n)
            .map(|_| [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()])
            .collect();
        let opacities = (0..n).map(|_| rng.gen::<f64>()).collect();
        GaussianCloud::new(centers, scales, colors, opacities).unwrap()
    }

    #[test]
    fn on_axis_covariance_closed_form() {
        let cam = test_camera(64, 64);
        let p = project_gaussian(Vector3::new(0.0, 0.0, 2.0), 0.1, &cam).unwrap();
        // (fx * s / z)^2 = (100 * 0.1 / 2)^2 = 25.
        assert_relative_eq!(p.cov[(0, 0)], 25.0, epsilon = 1e-12);
        assert_relative_eq!(p.cov[(1, 1)], 25.0, epsilon = 1e-12);
        assert_relative_eq!(p.cov[(0, 1)], 0.0, epsilon = 1e-12);
        assert_eq!(p.mean, Vector2::new(32.0, 32.0));
        assert_eq!(p.depth, 2.0);
    }

    #[test]
    fn projected_std_scales_inversely_with_depth() {
        let cam = test_camera(64, 64);
        let near = project_gaussian(Vector3::new(0.0, 0.0, 2.0), 0.1, &cam).unwrap();
        let far = project_gaussian(Vector3::new(0.0, 0.0, 4.0), 0.1, &cam).unwrap();
        assert_relative_eq!(
            far.cov[(0, 0)].sqrt(),
            near.cov[(0, 0)].sqrt() / 2.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn behind_near_plane_is_culled() {
        let cam = test_camera(64, 64);
        assert!(project_gaussian(Vector3::new(0.0, 0.0, 0.005), 0.1, &cam).is_none());
        assert!(project_gaussian(Vector3::new(0.0, 0.0, -1.0), 0.1, &cam).is_none());
        assert!(project_gaussian(Vector3::new(0.0, 0.0, 0.02), 0.1, &cam).is_some());
    }

    #[test]
    fn off_axis_covariance_matches_explicit_jacobian() {
        let cam = test_camera(64, 64);
        let center = Vector3::new(0.3, -0.2, 1.7);
        let s = 0.05;
        let p = project_gaussian(center, s, &cam).unwrap();
        let q = center;
        let j = nalgebra::Matrix2x3::new(
            cam.fx / q.z,
            0.0,
            -cam.fx * q.x / (q.z * q.z),
            0.0,
            cam.fy / q.z,
            -cam.fy * q.y / (q.z * q.z),
        );
        let expected = j * (s * s * Matrix3::identity()) * j.transpose();
        assert_relative_eq!((p.cov - expected).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn empty_cloud_renders_background() {
        let cam = test_camera(32, 24);
        let cloud = GaussianCloud::new(vec![], vec![], vec![], vec![]).unwrap();
        let bg = [0.2, 0.4, 0.6];
        let img = rasterize(&cloud, &cam, bg).unwrap();
        for row in 0..24 {
            for col in 0..32 {
                assert_eq!(img.pixel(row, col), &bg);
            }
        }
        let sil = render_silhouette(&cloud, &cam).unwrap();
        assert!(sil.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn center_pixel_matches_single_term_compositing() {
        // 65x65 image, principal point 32.5 = center of pixel (32, 32), so
        // the exponent vanishes exactly there.
        let mut cam = test_camera(65, 65);
        cam.cx = 32.5;
        cam.cy = 32.5;
        let cloud = single_kernel(2.0, 0.05, [1.0, 0.0, 0.0], 0.99);
        let bg = [0.0, 0.0, 1.0];
        let img = rasterize(&cloud, &cam, bg).unwrap();
        let px = img.pixel(32, 32);
        assert_relative_eq!(px[0], 0.99, epsilon = 1e-6);
        assert_relative_eq!(px[1], 0.0, epsilon = 1e-12);
        assert_relative_eq!(px[2], 0.01, epsilon = 1e-6);
    }

    #[test]
    fn occluded_kernel_contributes_little() {
        let mut cam = test_camera(65, 65);
        cam.cx = 32.5;
        cam.cy = 32.5;
        let cloud = GaussianCloud::new(
            vec![Vector3::new(0.0, 0.0, 2.0), Vector3::new(0.001, 0.0, 3.0)],
            vec![0.05, 0.08],
            vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            vec![0.99, 1.0],
        )
        .unwrap();
        let img = rasterize(&cloud, &cam, [0.0; 3]).unwrap();
        let px = img.pixel(32, 32);
        assert!(px[0] > 0.98);
        assert!(px[1] < 0.015, "occluded kernel leaked {}", px[1]);
    }

    #[test]
    fn silhouette_bounds_and_monotonicity() {
        let cam = test_camera(48, 48);
        let small = random_cloud(12, 5);
        let sil_small = render_silhouette(&small, &cam).unwrap();
        assert!(sil_small.data.iter().all(|&v| (0.0..=1.0).contains(&v)));

        let mut bigger = small.clone();
        bigger.centers.push(Vector3::new(0.0, 0.0, 1.5));
        bigger.scales.push(0.1);
        bigger.colors.push([0.5, 0.5, 0.5]);
        bigger.opacities.push(0.8);
        let sil_big = render_silhouette(&bigger, &cam).unwrap();
        for (a, b) in sil_small.data.iter().zip(&sil_big.data) {
            assert!(b >= a, "silhouette decreased: {a} -> {b}");
        }
    }

    #[test]
    fn colors_stay_in_convex_hull() {
        let cam = test_camera(40, 40);
        let cloud = random_cloud(20, 9);
        let bg = [0.3, 0.1, 0.9];
        let img = rasterize(&cloud, &cam, bg).unwrap();
        for c in 0..3 {
            let mut lo = bg[c];
            let mut hi = bg[c];
            for col in &cloud.colors {
                lo = lo.min(col[c]);
                hi = hi.max(col[c]);
            }
            for px in img.data.chunks(3) {
                assert!(px[c] >= lo - 1e-12 && px[c] <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn color_weights_sum_to_one() {
        // All-white kernels over black background: the rendered value equals
        // the silhouette, confirming sum(T_i a_i) + T_final = 1.
        let cam = test_camera(48, 48);
        let mut cloud = random_cloud(15, 11);
        for c in cloud.colors.iter_mut() {
            *c = [1.0, 1.0, 1.0];
        }
        let img = rasterize(&cloud, &cam, [0.0; 3]).unwrap();
        let sil = render_silhouette(&cloud, &cam).unwrap();
        for (px, s) in img.data.chunks(3).zip(&sil.data) {
            assert_relative_eq!(px[0], *s, epsilon = 1e-12);
        }
    }

    #[test]
    fn images_are_bit_identical_across_tilings() {
        let cam = test_camera(50, 38);
        let cloud = random_cloud(40, 13);
        let bg = [0.25, 0.5, 0.75];
        let base = rasterize_tiled(&cloud, &cam, bg, 16).unwrap();
        for tile in [1usize, 3, 7, 64, 1000] {
            let other = rasterize_tiled(&cloud, &cam, bg, tile).unwrap();
            assert_eq!(base.data.len(), other.data.len());
            for (a, b) in base.data.iter().zip(&other.data) {
                assert_eq!(a.to_bits(), b.to_bits(), "tile={tile}");
            }
        }
    }

    #[test]
    fn equal_depth_ties_resolve_by_index() {
        let mut cam = test_camera(65, 65);
        cam.cx = 32.5;
        cam.cy = 32.5;
        // Two kernels at identical depth; index 0 must composite first.
        let cloud = GaussianCloud::new(
            vec![Vector3::new(0.0, 0.0, 2.0), Vector3::new(0.0, 0.0, 2.0)],
            vec![0.05, 0.05],
            vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            vec![0.6, 0.6],
        )
        .unwrap();
        let img = rasterize(&cloud, &cam, [0.0; 3]).unwrap();
        let px = img.pixel(32, 32);
        assert_relative_eq!(px[0], 0.6, epsilon = 1e-9);
        assert_relative_eq!(px[1], 0.4 * 0.6, epsilon = 1e-9);
    }

    #[test]
    fn cloud_validation_rejects_bad_inputs() {
        assert!(GaussianCloud::new(
            vec![Vector3::zeros()],
            vec![0.0],
            vec![[0.0; 3]],
            vec![0.5]
        )
        .is_err());
        assert!(GaussianCloud::new(
            vec![Vector3::zeros()],
            vec![0.1],
            vec![[1.5, 0.0, 0.0]],
            vec![0.5]
        )
        .is_err());
        assert!(GaussianCloud::new(
            vec![Vector3::zeros()],
            vec![0.1],
            vec![[0.5; 3]],
            vec![1.5]
        )
        .is_err());
        assert!(GaussianCloud::new(vec![Vector3::zeros()], vec![0.1, 0.2], vec![[0.5; 3]], vec![0.5])
            .is_err());
    }
}
