//! Point clouds, anchor sampling, and the static tables that tie a dense
//! kernel cloud to a sparse set of simulated anchors.
//!
//! Everything here is deterministic: farthest-point sampling is seeded only
//! through its start index, and every nearest-neighbour query breaks distance
//! ties by ascending point index.

use nalgebra::Vector3;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Minimum distance used when inverting distances for binding weights.
pub const MIN_BIND_DISTANCE: f64 = 1e-8;

/// A set of 3D points with optional per-point color and opacity.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub positions: Vec<Vector3<f64>>,
    /// RGB in [0, 1], same length as `positions` when present.
    pub colors: Option<Vec<[f64; 3]>>,
    /// Opacity in [0, 1], same length as `positions` when present.
    pub opacities: Option<Vec<f64>>,
}

impl PointCloud {
    /// A bare cloud with no attributes. Fails on an empty position list.
    pub fn new(positions: Vec<Vector3<f64>>) -> Result<Self> {
        Self::with_attributes(positions, None, None)
    }

    pub fn with_attributes(
        positions: Vec<Vector3<f64>>,
        colors: Option<Vec<[f64; 3]>>,
        opacities: Option<Vec<f64>>,
    ) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::EmptyCloud);
        }
        if positions.iter().any(|p| !p.x.is_finite() || !p.y.is_finite() || !p.z.is_finite()) {
            return Err(Error::NonFiniteInput { what: "point positions" });
        }
        if let Some(c) = &colors {
            if c.len() != positions.len() {
                return Err(Error::SizeMismatch {
                    what: "colors",
                    expected: positions.len(),
                    actual: c.len(),
                });
            }
        }
        if let Some(o) = &opacities {
            if o.len() != positions.len() {
                return Err(Error::SizeMismatch {
                    what: "opacities",
                    expected: positions.len(),
                    actual: o.len(),
                });
            }
        }
        Ok(PointCloud { positions, colors, opacities })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn centroid(&self) -> Vector3<f64> {
        let mut sum = Vector3::zeros();
        for p in &self.positions {
            sum += p;
        }
        sum / self.positions.len() as f64
    }

    /// Axis-aligned bounding box as (min, max).
    pub fn bounds(&self) -> (Vector3<f64>, Vector3<f64>) {
        let mut lo = self.positions[0];
        let mut hi = self.positions[0];
        for p in &self.positions {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        (lo, hi)
    }

    /// Sub-cloud at the given indices, carrying attributes along.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            positions: indices.iter().map(|&i| self.positions[i]).collect(),
            colors: self
                .colors
                .as_ref()
                .map(|c| indices.iter().map(|&i| c[i]).collect()),
            opacities: self
                .opacities
                .as_ref()
                .map(|o| indices.iter().map(|&i| o[i]).collect()),
        }
    }
}

/// Simulated anchor state: positions plus velocities, always equal length.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSystem {
    pub positions: Vec<Vector3<f64>>,
    pub velocities: Vec<Vector3<f64>>,
}

impl AnchorSystem {
    /// Anchors starting at rest.
    pub fn at_rest(positions: Vec<Vector3<f64>>) -> Self {
        let velocities = vec![Vector3::zeros(); positions.len()];
        AnchorSystem { positions, velocities }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// k-nearest-neighbour table, row-major: row `i` holds the neighbours of
/// query `i`, ordered by ascending distance with index as tie-break.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborTable {
    pub k: usize,
    pub indices: Vec<u32>,
    pub distances: Vec<f64>,
}

impl NeighborTable {
    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let s = i * self.k;
        (&self.indices[s..s + self.k], &self.distances[s..s + self.k])
    }

    pub fn rows(&self) -> usize {
        if self.k == 0 { 0 } else { self.indices.len() / self.k }
    }
}

/// Spring connectivity between anchors.
///
/// Row `i` lists the `n_k` neighbours of anchor `i` in ascending-distance
/// order; `rest_lengths` are the anchor distances at build time and are
/// strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct SpringTopology {
    pub n_k: usize,
    pub neighbors: Vec<u32>,
    pub rest_lengths: Vec<f64>,
}

impl SpringTopology {
    pub fn n_anchors(&self) -> usize {
        if self.n_k == 0 { 0 } else { self.neighbors.len() / self.n_k }
    }

    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let s = i * self.n_k;
        (
            &self.neighbors[s..s + self.n_k],
            &self.rest_lengths[s..s + self.n_k],
        )
    }

    /// SHA-256 over the neighbour indices (u32 little-endian) followed by the
    /// rest lengths (f64 little-endian bit patterns), as lowercase hex.
    ///
    /// Identical topologies hash identically across platforms; any change to
    /// connectivity or rest lengths changes the digest.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.n_k as u64).to_le_bytes());
        for &n in &self.neighbors {
            hasher.update(n.to_le_bytes());
        }
        for &l in &self.rest_lengths {
            hasher.update(l.to_bits().to_le_bytes());
        }
        let digest = hasher.finalize();
        let mut out = String::with_capacity(64);
        for b in digest {
            out.push_str(&format!("{b:02x}"));
        }
        out
    }
}

/// Frozen kernel-to-anchor interpolation weights.
///
/// Row `i` holds the `n_b` nearest anchors of kernel `i` and their
/// inverse-distance weights, normalized to sum to one. Distances are taken
/// at binding time and never updated.
#[derive(Debug, Clone, PartialEq)]
pub struct BindingTable {
    pub n_b: usize,
    pub anchor_indices: Vec<u32>,
    pub weights: Vec<f64>,
}

impl BindingTable {
    pub fn n_kernels(&self) -> usize {
        if self.n_b == 0 { 0 } else { self.anchor_indices.len() / self.n_b }
    }

    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let s = i * self.n_b;
        (
            &self.anchor_indices[s..s + self.n_b],
            &self.weights[s..s + self.n_b],
        )
    }
}

/// Greedy farthest-point sampling over `positions`.
///
/// Starts at index `seed % n`, then repeatedly picks the point with the
/// largest distance to the selected set, breaking exact ties by smallest
/// index. Returns the selected indices in selection order.
pub fn farthest_point_indices(positions: &[Vector3<f64>], n: usize, seed: u64) -> Result<Vec<usize>> {
    if positions.is_empty() {
        return Err(Error::EmptyCloud);
    }
    if n == 0 || n > positions.len() {
        return Err(Error::InsufficientPoints {
            needed: n.max(1),
            available: positions.len(),
        });
    }
    let start = (seed % positions.len() as u64) as usize;
    let mut selected = Vec::with_capacity(n);
    selected.push(start);
    let mut min_d2: Vec<f64> = positions
        .iter()
        .map(|p| (p - positions[start]).norm_squared())
        .collect();
    while selected.len() < n {
        let mut best = usize::MAX;
        let mut best_d2 = f64::NEG_INFINITY;
        for (i, &d2) in min_d2.iter().enumerate() {
            if d2 > best_d2 {
                best_d2 = d2;
                best = i;
            }
        }
        selected.push(best);
        let p = positions[best];
        for (i, d2) in min_d2.iter_mut().enumerate() {
            let nd2 = (positions[i] - p).norm_squared();
            if nd2 < *d2 {
                *d2 = nd2;
            }
        }
    }
    Ok(selected)
}

/// Downsamples a cloud to `n` points by farthest-point sampling.
pub fn volume_sample(cloud: &PointCloud, n: usize, seed: u64) -> Result<PointCloud> {
    let idx = farthest_point_indices(&cloud.positions, n, seed)?;
    Ok(cloud.select(&idx))
}

/// Brute-force k-nearest neighbours of each query point among `data`.
///
/// Neighbours are ordered by ascending distance, exact ties by ascending
/// index. `k` must not exceed the data size.
pub fn knn(data: &[Vector3<f64>], queries: &[Vector3<f64>], k: usize) -> Result<NeighborTable> {
    knn_impl(data, queries, k, None)
}

/// k-nearest neighbours of each point among its own cloud, excluding the
/// point itself (by index, so duplicate positions are still neighbours).
pub fn knn_self(points: &[Vector3<f64>], k: usize) -> Result<NeighborTable> {
    knn_impl(points, points, k, Some(()))
}

fn knn_impl(
    data: &[Vector3<f64>],
    queries: &[Vector3<f64>],
    k: usize,
    exclude_self: Option<()>,
) -> Result<NeighborTable> {
    let capacity = if exclude_self.is_some() {
        data.len().saturating_sub(1)
    } else {
        data.len()
    };
    if k == 0 || k > capacity {
        return Err(Error::InsufficientPoints {
            needed: k + exclude_self.map_or(0, |_| 1),
            available: data.len(),
        });
    }
    let mut indices = Vec::with_capacity(queries.len() * k);
    let mut distances = Vec::with_capacity(queries.len() * k);
    let mut scratch: Vec<(f64, u32)> = Vec::with_capacity(data.len());
    for (qi, q) in queries.iter().enumerate() {
        scratch.clear();
        for (di, d) in data.iter().enumerate() {
            if exclude_self.is_some() && di == qi {
                continue;
            }
            scratch.push(((d - q).norm_squared(), di as u32));
        }
        // Exact comparison is fine here: ties are broken by the index field.
        let cmp = |a: &(f64, u32), b: &(f64, u32)| {
            a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1))
        };
        if k < scratch.len() {
            scratch.select_nth_unstable_by(k - 1, cmp);
            scratch.truncate(k);
        }
        scratch.sort_unstable_by(cmp);
        for &(d2, i) in scratch.iter().take(k) {
            indices.push(i);
            distances.push(d2.sqrt());
        }
    }
    Ok(NeighborTable { k, indices, distances })
}

/// Builds spring connectivity over anchors: each anchor gets its `n_k`
/// nearest fellow anchors, with rest lengths frozen at the current distances.
///
/// Coincident anchors would produce zero-length springs and are rejected.
pub fn build_topology(anchors: &[Vector3<f64>], n_k: usize) -> Result<SpringTopology> {
    let table = knn_self(anchors, n_k)?;
    for (row, &d) in table.distances.iter().enumerate() {
        if d <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "coincident anchors produce a zero-length spring (anchor {})",
                row / n_k
            )));
        }
    }
    Ok(SpringTopology {
        n_k,
        neighbors: table.indices,
        rest_lengths: table.distances,
    })
}

/// Binds each kernel to its `n_b` nearest anchors with inverse-distance
/// weights `1 / d^{p_b}`, normalized per kernel. Distances below
/// [`MIN_BIND_DISTANCE`] are clamped before inversion so a kernel sitting on
/// an anchor cannot produce an infinite weight.
pub fn bind_kernels(
    kernels: &[Vector3<f64>],
    anchors: &[Vector3<f64>],
    n_b: usize,
    p_b: f64,
) -> Result<BindingTable> {
    if !(p_b.is_finite() && p_b >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "binding exponent must be finite and non-negative, got {p_b}"
        )));
    }
    let table = knn(anchors, kernels, n_b)?;
    let mut weights = Vec::with_capacity(table.distances.len());
    for row in 0..kernels.len() {
        let s = row * n_b;
        let ds = &table.distances[s..s + n_b];
        let mut sum = 0.0;
        let mut raw = [0.0f64; 0].to_vec();
        raw.reserve(n_b);
        for &d in ds {
            let w = 1.0 / d.max(MIN_BIND_DISTANCE).powf(p_b);
            raw.push(w);
            sum += w;
        }
        for w in raw {
            weights.push(w / sum);
        }
    }
    Ok(BindingTable {
        n_b,
        anchor_indices: table.indices,
        weights,
    })
}
