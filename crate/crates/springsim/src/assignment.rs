//! Exact minimum-cost perfect matching on a square cost matrix, via the
//! Jonker-Volgenant shortest-augmenting-path scheme with dual potentials.
//!
//! O(n^3) time, O(n^2) input. Deterministic: column scans run in ascending
//! order and ties keep the first minimum, so equal-cost matchings resolve
//! the same way on every run.

/// Solution of one assignment instance.
#[derive(Debug, Clone)]
pub struct Assignment {
    /// `col_of[i]` is the column matched to row `i`.
    pub col_of: Vec<usize>,
    /// Total cost of the matching, summed over matched entries.
    pub cost: f64,
    /// Row potentials; with `col_potentials`, a feasible dual certificate:
    /// u[i] + v[j] <= cost[i][j] for all pairs, with equality on matched
    /// ones.
    pub row_potentials: Vec<f64>,
    pub col_potentials: Vec<f64>,
}

/// Solves the n x n assignment problem for `cost` in row-major layout.
///
/// Costs must be finite. Panics on size mismatch; this is an internal
/// numeric kernel with programmatic callers only.
pub fn min_cost_assignment(n: usize, cost: &[f64]) -> Assignment {
    assert!(n > 0, "assignment needs at least one row");
    assert_eq!(cost.len(), n * n, "cost matrix must be n*n");
    debug_assert!(cost.iter().all(|c| c.is_finite()));

    // 1-indexed working arrays; index 0 is the virtual unmatched column.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1]; // p[j]: row matched to column j
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        // Augment along the recorded path.
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut col_of = vec![0usize; n];
    for j in 1..=n {
        col_of[p[j] - 1] = j - 1;
    }
    let cost_total: f64 = (0..n).map(|i| cost[i * n + col_of[i]]).sum();
    Assignment {
        col_of,
        cost: cost_total,
        row_potentials: u[1..].to_vec(),
        col_potentials: v[1..].to_vec(),
    }
}
