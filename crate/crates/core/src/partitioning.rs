//! Measurement-set partitioning: the subset of partitions considered by the
//! update, generated by running DBSCAN over a grid of distance thresholds.

use nalgebra::Vector2;

use crate::models::MeasModel;

/// One hypothesized group of measurements from a single object. Indices are
/// strictly increasing positions into the current scan.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cell {
    pub indices: Vec<usize>,
}

impl Cell {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// A disjoint cover of one scan's measurement set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub cells: Vec<Cell>,
}

impl Partition {
    /// Checks the disjoint-cover invariant against a scan of `n` measurements.
    pub fn is_valid_cover(&self, n: usize) -> bool {
        let mut seen = vec![false; n];
        for cell in &self.cells {
            if cell.indices.is_empty() {
                return false;
            }
            if !cell.indices.windows(2).all(|w| w[0] < w[1]) {
                return false;
            }
            for &i in &cell.indices {
                if i >= n || seen[i] {
                    return false;
                }
                seen[i] = true;
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// DBSCAN with `min_pts = 1` semantics: every point belongs to exactly one
/// cluster (no noise label), and clusters are the connected components of the
/// eps-neighborhood graph.
pub fn dbscan(points: &[Vector2<f64>], eps: f64, min_pts: usize) -> Partition {
    assert!(eps > 0.0, "eps must be positive");
    assert!(min_pts >= 1, "min_pts must be at least 1");
    let n = points.len();
    let eps2 = eps * eps;
    let mut component = vec![usize::MAX; n];
    let mut next = 0usize;
    let mut stack = Vec::new();
    for start in 0..n {
        if component[start] != usize::MAX {
            continue;
        }
        // min_pts = 1 makes every point a core point; grow the component by
        // breadth over the eps-neighborhood graph.
        component[start] = next;
        stack.push(start);
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if component[j] == usize::MAX && (points[i] - points[j]).norm_squared() <= eps2 {
                    component[j] = next;
                    stack.push(j);
                }
            }
        }
        next += 1;
    }
    let mut cells = vec![Vec::new(); next];
    for (i, &c) in component.iter().enumerate() {
        cells[c].push(i);
    }
    // indices come out sorted; order cells by their first index for a
    // canonical, input-order-independent representation
    let mut cells: Vec<Cell> = cells.into_iter().map(|indices| Cell { indices }).collect();
    cells.sort();
    Partition { cells }
}

/// Runs DBSCAN once per eps value and deduplicates identical partitions,
/// preserving first-occurrence order. An empty scan yields a single empty
/// partition.
pub fn generate_partitions(points: &[Vector2<f64>], eps_grid: &[f64]) -> Vec<Partition> {
    if points.is_empty() {
        return vec![Partition { cells: Vec::new() }];
    }
    let mut out: Vec<Partition> = Vec::new();
    for &eps in eps_grid {
        let p = dbscan(points, eps, 1);
        if !out.contains(&p) {
            out.push(p);
        }
    }
    out
}

/// Default log-spaced eps grid: 10 values between the sensor-noise scale
/// max(2 sigma_r, 1 m) and four times the largest birth-extent axis.
pub fn default_eps_grid(mm: &MeasModel, birth_extent_mean: &nalgebra::Matrix2<f64>) -> Vec<f64> {
    let lo = (2.0 * mm.sigma_r).max(1.0);
    let (_, max_eig) = crate::linalg::sym_eigenvalues2(birth_extent_mean);
    let hi = (4.0 * max_eig.max(0.0).sqrt()).max(lo * 1.001);
    let n = 10;
    (0..n)
        .map(|i| {
            let t = i as f64 / (n - 1) as f64;
            (lo.ln() + t * (hi.ln() - lo.ln())).exp()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(coords: &[(f64, f64)]) -> Vec<Vector2<f64>> {
        coords.iter().map(|&(x, y)| Vector2::new(x, y)).collect()
    }

    /// Brute-force connected components of the eps graph, as sets of sorted
    /// index lists.
    fn brute_force_components(points: &[Vector2<f64>], eps: f64) -> Vec<Vec<usize>> {
        let n = points.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut Vec<usize>, i: usize) -> usize {
            if parent[i] != i {
                let r = find(parent, parent[i]);
                parent[i] = r;
            }
            parent[i]
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if (points[i] - points[j]).norm() <= eps {
                    let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                    parent[ri] = rj;
                }
            }
        }
        let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for i in 0..n {
            let r = find(&mut parent, i);
            groups.entry(r).or_default().push(i);
        }
        let mut out: Vec<Vec<usize>> = groups.into_values().collect();
        out.sort();
        out
    }

    #[test]
    fn close_pair_is_one_cell() {
        let p = dbscan(&pts(&[(0.0, 0.0), (0.1, 0.0)]), 0.5, 1);
        assert_eq!(p.cells.len(), 1);
        assert_eq!(p.cells[0].indices, vec![0, 1]);
    }

    #[test]
    fn distant_pair_splits() {
        let p = dbscan(&pts(&[(0.0, 0.0), (100.0, 0.0)]), 0.5, 1);
        assert_eq!(p.cells.len(), 2);
    }

    #[test]
    fn chain_connects_transitively() {
        let points = pts(&[(0.0, 0.0), (0.4, 0.0), (0.8, 0.0)]);
        let p = dbscan(&points, 0.5, 1);
        assert_eq!(p.cells.len(), 1);
        let brute = brute_force_components(&points, 0.5);
        let got: Vec<Vec<usize>> = p.cells.iter().map(|c| c.indices.clone()).collect();
        assert_eq!(got, brute);
    }

    #[test]
    fn matches_brute_force_on_random_sets() {
        use rand::rngs::StdRng;
        use rand::{Rng, SeedableRng};
        let mut rng = StdRng::seed_from_u64(42);
        for case in 0..30 {
            let n = rng.random_range(1..30);
            let points: Vec<Vector2<f64>> = (0..n)
                .map(|_| Vector2::new(rng.random_range(0.0..10.0), rng.random_range(0.0..10.0)))
                .collect();
            let eps = rng.random_range(0.3..3.0);
            let p = dbscan(&points, eps, 1);
            assert!(p.is_valid_cover(n), "invalid cover in case {case}");
            let mut got: Vec<Vec<usize>> = p.cells.iter().map(|c| c.indices.clone()).collect();
            got.sort();
            assert_eq!(got, brute_force_components(&points, eps), "case {case}");
        }
    }

    #[test]
    fn invariant_to_input_order() {
        let points = pts(&[(0.0, 0.0), (0.4, 0.0), (5.0, 5.0), (0.8, 0.0)]);
        let mut reordered = points.clone();
        reordered.reverse();
        let a = dbscan(&points, 0.5, 1);
        let b = dbscan(&reordered, 0.5, 1);
        // map b's indices back through the reversal
        let n = points.len();
        let mut mapped: Vec<Vec<usize>> = b
            .cells
            .iter()
            .map(|c| {
                let mut v: Vec<usize> = c.indices.iter().map(|&i| n - 1 - i).collect();
                v.sort();
                v
            })
            .collect();
        mapped.sort();
        let mut expect: Vec<Vec<usize>> = a.cells.iter().map(|c| c.indices.clone()).collect();
        expect.sort();
        assert_eq!(mapped, expect);
    }

    #[test]
    fn duplicate_partitions_collapse() {
        let points = pts(&[(0.0, 0.0), (0.2, 0.0), (50.0, 0.0)]);
        let grid = [1.0, 2.0, 3.0];
        let ps = generate_partitions(&points, &grid);
        assert_eq!(ps.len(), 1);
    }

    #[test]
    fn empty_scan_yields_empty_partition() {
        let ps = generate_partitions(&[], &[1.0, 2.0]);
        assert_eq!(ps.len(), 1);
        assert!(ps[0].cells.is_empty());
    }

    #[test]
    fn split_and_merged_partitions_both_appear() {
        // two clusters 5 m apart; eps 1 splits them, eps 10 merges them
        let points = pts(&[(0.0, 0.0), (0.3, 0.0), (5.0, 0.0), (5.3, 0.0)]);
        let ps = generate_partitions(&points, &[1.0, 10.0]);
        assert_eq!(ps.len(), 2);
        assert_eq!(ps[0].cells.len(), 2);
        assert_eq!(ps[1].cells.len(), 1);
    }

    #[test]
    fn partition_count_bounded_by_grid() {
        use rand::rngs::StdRng;
        use rand::{Rng, SeedableRng};
        let mut rng = StdRng::seed_from_u64(9);
        let points: Vec<Vector2<f64>> = (0..40)
            .map(|_| Vector2::new(rng.random_range(0.0..30.0), rng.random_range(0.0..30.0)))
            .collect();
        let grid: Vec<f64> = (1..=8).map(|i| i as f64 * 0.7).collect();
        let ps = generate_partitions(&points, &grid);
        assert!(ps.len() <= grid.len());
        for p in &ps {
            assert!(p.is_valid_cover(points.len()));
        }
    }

    #[test]
    fn default_grid_spans_noise_to_object_scale() {
        let mm = MeasModel { sigma_r: 1.0, sigma_phi: 1e-4, rho: 0.75 };
        let grid = default_eps_grid(&mm, &nalgebra::Matrix2::new(16.0, 0.0, 0.0, 16.0));
        assert_eq!(grid.len(), 10);
        approx::assert_relative_eq!(grid[0], 2.0, epsilon = 1e-12);
        approx::assert_relative_eq!(grid[9], 16.0, epsilon = 1e-12);
        assert!(grid.windows(2).all(|w| w[0] < w[1]));
    }
}
