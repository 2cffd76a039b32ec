use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Edge weighting of the neighbour graph.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EdgeWeight {
    Binary,
    /// `exp(-d² / sigma²)` on Euclidean distance `d`.
    HeatKernel { sigma: f64 },
}

/// Sparse `L = D - A` over `S` samples.
///
/// Stores the symmetric adjacency as sorted neighbour lists; the dense
/// `S x S` matrices are only materialised on request.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphLaplacian {
    neighbors: Vec<Vec<(usize, f64)>>,
    degree: Vec<f64>,
}

impl GraphLaplacian {
    /// Builds a Laplacian from undirected weighted edges. Self loops are
    /// rejected; repeated edges keep the last weight.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut neighbors: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, w) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidInput(format!("edge ({i}, {j}) outside {n} nodes")));
            }
            if i == j {
                return Err(Error::InvalidInput(format!("self loop at node {i}")));
            }
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::InvalidInput(format!("edge weight {w} must be finite and non-negative")));
            }
            for (a, b) in [(i, j), (j, i)] {
                match neighbors[a].iter_mut().find(|(k, _)| *k == b) {
                    Some(e) => e.1 = w,
                    None => neighbors[a].push((b, w)),
                }
            }
        }
        for list in &mut neighbors {
            list.sort_by_key(|&(k, _)| k);
        }
        let degree = neighbors.iter().map(|l| l.iter().map(|&(_, w)| w).sum()).collect();
        Ok(GraphLaplacian { neighbors, degree })
    }

    pub fn len(&self) -> usize {
        self.degree.len()
    }

    pub fn is_empty(&self) -> bool {
        self.degree.is_empty()
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, f64)] {
        &self.neighbors[i]
    }

    pub fn degree(&self) -> &[f64] {
        &self.degree
    }

    pub fn num_edges(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn adjacency_dense(&self) -> Array2<f64> {
        let n = self.len();
        let mut a = Array2::zeros((n, n));
        for (i, list) in self.neighbors.iter().enumerate() {
            for &(j, w) in list {
                a[[i, j]] = w;
            }
        }
        a
    }

    pub fn laplacian_dense(&self) -> Array2<f64> {
        let mut l = -self.adjacency_dense();
        for (i, &d) in self.degree.iter().enumerate() {
            l[[i, i]] += d;
        }
        l
    }

    /// `H A` for `H` of shape `R x S`.
    pub fn right_mul_adjacency(&self, h: ArrayView2<'_, f64>) -> Array2<f64> {
        let mut out = Array2::zeros(h.raw_dim());
        for (j, list) in self.neighbors.iter().enumerate() {
            let mut col = out.column_mut(j);
            for &(i, w) in list {
                col.scaled_add(w, &h.column(i));
            }
        }
        out
    }

    /// `Tr(H L Hᵀ)`.
    pub fn trace_quadratic(&self, h: ArrayView2<'_, f64>) -> f64 {
        let ha = self.right_mul_adjacency(h);
        let mut t = 0.0;
        for (j, &d) in self.degree.iter().enumerate() {
            let hj = h.column(j);
            t += d * hj.dot(&hj) - hj.dot(&ha.column(j));
        }
        t
    }
}

/// Symmetrised k-nearest-neighbour graph over the columns of `x`.
///
/// `j` is linked to `i` when either is among the other's `k` nearest
/// columns by Euclidean distance. Ties go to the lower index.
pub fn build_knn_graph(x: ArrayView2<'_, f64>, k: usize) -> Result<GraphLaplacian> {
    build_knn_graph_weighted(x, k, EdgeWeight::Binary)
}

pub fn build_knn_graph_weighted(x: ArrayView2<'_, f64>, k: usize, weight: EdgeWeight) -> Result<GraphLaplacian> {
    let s = x.ncols();
    if k == 0 || k >= s {
        return Err(Error::InvalidInput(format!("k = {k} needs 1 <= k < S = {s}")));
    }
    let cols: Vec<Vec<f64>> = x.axis_iter(Axis(1)).map(|c| c.to_vec()).collect();
    let knn = knn_lists(&cols, k);
    let mut edges = Vec::with_capacity(s * k);
    for (i, list) in knn.iter().enumerate() {
        for &(d2, j) in list {
            let w = match weight {
                EdgeWeight::Binary => 1.0,
                EdgeWeight::HeatKernel { sigma } => (-d2 / (sigma * sigma)).exp(),
            };
            edges.push((i, j, w));
        }
    }
    GraphLaplacian::from_edges(s, &edges)
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

/// Exact k nearest neighbours of every point as `(squared distance, index)`.
///
/// Points are scanned outward in order of their projection onto the
/// leading principal axis; the scan stops once the projected gap alone
/// exceeds the current k-th best distance.
fn knn_lists(points: &[Vec<f64>], k: usize) -> Vec<Vec<(f64, usize)>> {
    let n = points.len();
    let axis = principal_axis(points);
    let proj: Vec<f64> = points.iter().map(|p| p.iter().zip(&axis).map(|(a, b)| a * b).sum()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| proj[a].total_cmp(&proj[b]).then(a.cmp(&b)));
    let mut rank = vec![0; n];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }

    let better = |a: (f64, usize), b: (f64, usize)| a.0 < b.0 || (a.0 == b.0 && a.1 < b.1);
    (0..n)
        .map(|i| {
            let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
            let consider = |best: &mut Vec<(f64, usize)>, j: usize| {
                let cand = (dist2(&points[i], &points[j]), j);
                if best.len() == k && !better(cand, best[k - 1]) {
                    return;
                }
                let pos = best.iter().position(|&b| better(cand, b)).unwrap_or(best.len());
                best.insert(pos, cand);
                best.truncate(k);
            };
            let r = rank[i];
            let (mut lo, mut hi) = (r, r + 1);
            loop {
                let gap_lo = (lo > 0).then(|| proj[i] - proj[order[lo - 1]]);
                let gap_hi = (hi < n).then(|| proj[order[hi]] - proj[i]);
                let step_lo = match (gap_lo, gap_hi) {
                    (None, None) => break,
                    (Some(_), None) => true,
                    (None, Some(_)) => false,
                    (Some(a), Some(b)) => a <= b,
                };
                let gap = if step_lo { gap_lo.unwrap() } else { gap_hi.unwrap() };
                // Strict comparison keeps equal-distance candidates, which
                // may still win the index tie-break.
                if best.len() == k && gap * gap > best[k - 1].0 * (1.0 + 1e-12) {
                    break;
                }
                if step_lo {
                    lo -= 1;
                    consider(&mut best, order[lo]);
                } else {
                    consider(&mut best, order[hi]);
                    hi += 1;
                }
            }
            best
        })
        .collect()
}

/// Leading eigenvector of the sample covariance by power iteration.
fn principal_axis(points: &[Vec<f64>]) -> Vec<f64> {
    let dim = points.first().map_or(0, Vec::len);
    let n = points.len() as f64;
    let mut mean = vec![0.0; dim];
    for p in points {
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v / n;
        }
    }
    let mut v: Vec<f64> = (0..dim).map(|i| 1.0 + i as f64 * 1e-3).collect();
    for _ in 0..50 {
        let mut next = vec![0.0; dim];
        for p in points {
            let c: f64 = p.iter().zip(&mean).zip(&v).map(|((a, m), b)| (a - m) * b).sum();
            for ((o, a), m) in next.iter_mut().zip(p).zip(&mean) {
                *o += c * (a - m);
            }
        }
        let norm = next.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        v = next.into_iter().map(|a| a / norm).collect();
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn brute_knn(points: &[Vec<f64>], k: usize) -> Vec<Vec<usize>> {
        (0..points.len())
            .map(|i| {
                let mut c: Vec<(f64, usize)> =
                    (0..points.len()).filter(|&j| j != i).map(|j| (dist2(&points[i], &points[j]), j)).collect();
                c.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                c.into_iter().take(k).map(|(_, j)| j).collect()
            })
            .collect()
    }

    #[test]
    fn line_example() {
        let x = array![[0.0, 1.0, 10.0]];
        let g = build_knn_graph(x.view(), 1).unwrap();
        let a = g.adjacency_dense();
        assert_eq!(a, array![[0.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 0.0]]);
    }

    #[test]
    fn identical_columns_break_ties_by_index() {
        let x = Array2::from_elem((2, 3), 1.0);
        let g = build_knn_graph(x.view(), 1).unwrap();
        // 0 -> 1, 1 -> 0, 2 -> 0
        assert_eq!(g.neighbors(0), &[(1, 1.0), (2, 1.0)]);
        assert_eq!(g.neighbors(2), &[(0, 1.0)]);
        let l = g.laplacian_dense();
        for r in l.rows() {
            assert_eq!(r.sum(), 0.0);
        }
    }

    #[test]
    fn k_full_gives_complete_graph() {
        let x = array![[0.0, 1.0, 3.0, 7.0], [2.0, 0.5, 1.0, 0.0]];
        let g = build_knn_graph(x.view(), 3).unwrap();
        assert_eq!(g.degree(), &[3.0; 4]);
        assert_eq!(g.num_edges(), 6);
    }

    #[test]
    fn rejects_bad_k() {
        let x = Array2::<f64>::ones((2, 3));
        assert!(build_knn_graph(x.view(), 3).is_err());
        assert!(build_knn_graph(x.view(), 0).is_err());
    }

    #[test]
    fn pruned_search_matches_brute_force() {
        let mut rng = crate::rng::seeded(5);
        for &(dim, n, k) in &[(3, 60, 5), (52, 200, 5), (1, 40, 3)] {
            let pts: Vec<Vec<f64>> =
                (0..n).map(|_| (0..dim).map(|_| crate::rng::uniform(&mut rng, 0.0, 1.0)).collect()).collect();
            let fast: Vec<Vec<usize>> = knn_lists(&pts, k).into_iter().map(|l| l.into_iter().map(|p| p.1).collect()).collect();
            assert_eq!(fast, brute_knn(&pts, k));
        }
    }

    #[test]
    fn pruned_search_handles_duplicates() {
        let pts: Vec<Vec<f64>> = (0..30).map(|i| vec![(i % 4) as f64, 0.0]).collect();
        let fast: Vec<Vec<usize>> = knn_lists(&pts, 5).into_iter().map(|l| l.into_iter().map(|p| p.1).collect()).collect();
        assert_eq!(fast, brute_knn(&pts, 5));
    }

    #[test]
    fn heat_kernel_weights() {
        let x = array![[0.0, 2.0]];
        let g = build_knn_graph_weighted(x.view(), 1, EdgeWeight::HeatKernel { sigma: 2.0 }).unwrap();
        assert!((g.neighbors(0)[0].1 - (-1.0f64).exp()).abs() < 1e-15);
    }
}
