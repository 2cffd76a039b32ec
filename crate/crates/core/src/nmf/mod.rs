//! Graph-regularised sparse non-negative matrix factorisation.
//!
//! Minimises
//!
//! ```text
//! ½‖X − WH‖²_F + ½λ·Tr(H L Hᵀ) + η·Σ √H
//! ```
//!
//! over non-negative `W` (F × R) and `H` (R × S) with multiplicative
//! updates. `L` is the Laplacian of a k-nearest-neighbour graph over the
//! columns of `X`.

mod graph;

use ndarray::{Array2, ArrayView2, Axis};

pub use graph::{build_knn_graph, build_knn_graph_weighted, EdgeWeight, GraphLaplacian};

use crate::error::{Error, Result};
use crate::rng;

/// Non-negative feature matrix, features × samples.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionFeatureMatrix(Array2<f64>);

impl MotionFeatureMatrix {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if let Some(v) = data.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidInput(format!("motion features must be finite and >= 0, found {v}")));
        }
        if let Some(j) = data.axis_iter(Axis(1)).position(|c| c.iter().all(|&v| v == 0.0)) {
            return Err(Error::InvalidInput(format!("column {j} is all zero")));
        }
        Ok(MotionFeatureMatrix(data))
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    pub fn features(&self) -> usize {
        self.0.nrows()
    }

    pub fn samples(&self) -> usize {
        self.0.ncols()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NmfConfig {
    pub rank: usize,
    pub lambda: f64,
    pub eta: f64,
    pub k_neighbors: usize,
    pub max_iters: usize,
    pub epsilon_floor: f64,
    /// Stop once the relative objective change falls below this.
    pub tol: f64,
    pub seed: u64,
}

impl Default for NmfConfig {
    fn default() -> Self {
        NmfConfig {
            rank: 20,
            lambda: 1.0,
            eta: 0.1,
            k_neighbors: 5,
            max_iters: 200,
            epsilon_floor: 1e-12,
            tol: 1e-6,
            seed: 0,
        }
    }
}

impl NmfConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.rank == 0 {
            return bad("rank must be >= 1".into());
        }
        if !(self.lambda >= 0.0) || !(self.eta >= 0.0) {
            return bad(format!("lambda ({}) and eta ({}) must be >= 0", self.lambda, self.eta));
        }
        if !(self.epsilon_floor > 0.0) {
            return bad(format!("epsilon_floor must be > 0, got {}", self.epsilon_floor));
        }
        if !(self.tol >= 0.0) {
            return bad(format!("tol must be >= 0, got {}", self.tol));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct NmfFactors {
    pub w: Array2<f64>,
    pub h: Array2<f64>,
    /// Objective at initialisation followed by one value per iteration.
    pub objective_trace: Vec<f64>,
}

impl NmfFactors {
    pub fn rank(&self) -> usize {
        self.h.nrows()
    }

    /// Scales every row of `H` to unit maximum and the matching column of
    /// `W` inversely, leaving `WH` unchanged.
    pub fn normalize_rows(&mut self) {
        for (mut hr, mut wc) in self.h.axis_iter_mut(Axis(0)).zip(self.w.axis_iter_mut(Axis(1))) {
            let m = hr.iter().copied().fold(0.0, f64::max);
            if m > 0.0 {
                hr.mapv_inplace(|v| v / m);
                wc.mapv_inplace(|v| v * m);
            }
        }
    }

    /// Reorders components by the centre of mass of each `H` row along the
    /// sample axis, so factorisations of similar inputs line up.
    pub fn sort_rows_by_centroid(&mut self) {
        let centroid = |r: ndarray::ArrayView1<'_, f64>| {
            let total: f64 = r.sum();
            r.iter().enumerate().map(|(j, v)| j as f64 * v).sum::<f64>() / total.max(f64::MIN_POSITIVE)
        };
        let c: Vec<f64> = self.h.axis_iter(Axis(0)).map(centroid).collect();
        let mut order: Vec<usize> = (0..c.len()).collect();
        order.sort_by(|&a, &b| c[a].total_cmp(&c[b]).then(a.cmp(&b)));
        self.h = self.h.select(Axis(0), &order);
        self.w = self.w.select(Axis(1), &order);
    }

    /// Reorders components so that column `i` of `W` is the one most similar
    /// (by cosine) to column `i` of `reference`, matching greedily from the
    /// most similar pair down. Gives components a shared meaning across
    /// factorisations of different inputs.
    pub fn align_rows_to(&mut self, reference: &Array2<f64>) -> Result<()> {
        let r = self.rank();
        if reference.dim() != self.w.dim() {
            return Err(Error::shape(
                "align_rows_to",
                format!("reference W is {:?}, factors have W {:?}", reference.dim(), self.w.dim()),
            ));
        }
        let unit = |m: &Array2<f64>| {
            let mut m = m.clone();
            for mut c in m.axis_iter_mut(Axis(1)) {
                let n = c.dot(&c).sqrt();
                if n > 0.0 {
                    c.mapv_inplace(|v| v / n);
                }
            }
            m
        };
        let sim = unit(reference).t().dot(&unit(&self.w));
        let mut pairs: Vec<(usize, usize)> = (0..r).flat_map(|i| (0..r).map(move |j| (i, j))).collect();
        pairs.sort_by(|a, b| sim[[b.0, b.1]].total_cmp(&sim[[a.0, a.1]]).then(a.cmp(b)));
        let mut order = vec![usize::MAX; r];
        let mut used = vec![false; r];
        for (i, j) in pairs {
            if order[i] == usize::MAX && !used[j] {
                order[i] = j;
                used[j] = true;
            }
        }
        self.h = self.h.select(Axis(0), &order);
        self.w = self.w.select(Axis(1), &order);
        Ok(())
    }
}

/// `½‖X − WH‖²_F + ½λ·Tr(H L Hᵀ) + η·Σ √H`.
pub fn nmf_objective(
    x: ArrayView2<'_, f64>,
    w: ArrayView2<'_, f64>,
    h: ArrayView2<'_, f64>,
    l: &GraphLaplacian,
    lambda: f64,
    eta: f64,
) -> Result<f64> {
    let (f, s) = x.dim();
    if w.nrows() != f || h.ncols() != s || w.ncols() != h.nrows() || l.len() != s {
        return Err(Error::shape(
            "nmf_objective",
            format!("X {:?}, W {:?}, H {:?}, L over {} nodes", x.dim(), w.dim(), h.dim(), l.len()),
        ));
    }
    for (name, m) in [("X", x.iter()), ("W", w.iter()), ("H", h.iter())] {
        if let Some(v) = m.into_iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::InvalidInput(format!("{name} has negative entry {v}")));
        }
    }
    Ok(objective_unchecked(x, w, h, l, lambda, eta))
}

fn objective_unchecked(
    x: ArrayView2<'_, f64>,
    w: ArrayView2<'_, f64>,
    h: ArrayView2<'_, f64>,
    l: &GraphLaplacian,
    lambda: f64,
    eta: f64,
) -> f64 {
    let r = &x - &w.dot(&h);
    let mut obj = 0.5 * r.iter().map(|v| v * v).sum::<f64>();
    if lambda != 0.0 {
        obj += 0.5 * lambda * l.trace_quadratic(h);
    }
    if eta != 0.0 {
        obj += eta * h.iter().map(|v| v.sqrt()).sum::<f64>();
    }
    obj
}

/// Random non-negative start: `|N(0,1)| · √(mean(X) / R)`.
fn init_factor(rows: usize, cols: usize, scale: f64, rng: &mut rng::Rng, floor: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || (rng::normal(rng).abs() * scale).max(floor))
}

/// Runs multiplicative updates from a seeded random start until
/// `max_iters` or the relative objective change drops below `tol`, then
/// normalises `H` rows to unit maximum.
pub fn nmf_factorize(x: &MotionFeatureMatrix, config: &NmfConfig, l: &GraphLaplacian) -> Result<NmfFactors> {
    nmf_factorize_from(x, config, l, None)
}

/// As [`nmf_factorize`], optionally starting `W` from `w0` instead of a
/// random draw (`H` is still drawn from `config.seed`).
pub fn nmf_factorize_from(
    x: &MotionFeatureMatrix,
    config: &NmfConfig,
    l: &GraphLaplacian,
    w0: Option<&Array2<f64>>,
) -> Result<NmfFactors> {
    config.validate()?;
    let xv = x.view();
    let (f, s) = xv.dim();
    if l.len() != s {
        return Err(Error::shape("nmf_factorize", format!("graph has {} nodes, X has {s} columns", l.len())));
    }
    let r = config.rank;
    let eps = config.epsilon_floor;
    let scale = (xv.mean().unwrap_or(0.0) / r as f64).sqrt();
    let mut rng = rng::seeded(config.seed);
    let mut w = init_factor(f, r, scale, &mut rng, eps);
    let mut h = init_factor(r, s, scale, &mut rng, eps);
    if let Some(w0) = w0 {
        if w0.dim() != (f, r) {
            return Err(Error::shape("nmf_factorize", format!("initial W is {:?}, expected {:?}", w0.dim(), (f, r))));
        }
        w = w0.mapv(|v| v.max(eps));
    }

    let degree = ndarray::Array1::from(l.degree().to_vec());
    let (lambda, eta) = (config.lambda, config.eta);
    let mut trace = vec![objective_unchecked(xv, w.view(), h.view(), l, lambda, eta)];
    for it in 1..=config.max_iters {
        // W ← W ∘ (XHᵀ) ⊘ (WHHᵀ + ε)
        let num = xv.dot(&h.t());
        let den = w.dot(&h.dot(&h.t()));
        ndarray::Zip::from(&mut w).and(&num).and(&den).for_each(|w, &n, &d| *w = (*w * n / (d + eps)).max(eps));

        // H ← H ∘ (WᵀX + λHA) ⊘ (WᵀWH + λHD + (η/2)H^{-1/2} + ε)
        let mut num = w.t().dot(&xv);
        let mut den = w.t().dot(&w).dot(&h);
        if lambda != 0.0 {
            num.scaled_add(lambda, &l.right_mul_adjacency(h.view()));
            den += &(&h * &degree * lambda);
        }
        ndarray::Zip::from(&mut h).and(&num).and(&den).for_each(|h, &n, &d| {
            let sparse = if eta != 0.0 { 0.5 * eta / h.sqrt() } else { 0.0 };
            *h = (*h * n / (d + sparse + eps)).max(eps);
        });

        let obj = objective_unchecked(xv, w.view(), h.view(), l, lambda, eta);
        if !obj.is_finite() {
            return Err(Error::Numerical(format!("nmf objective became {obj} at iteration {it}")));
        }
        let prev = *trace.last().unwrap();
        trace.push(obj);
        log::trace!("nmf iter {it}: {obj:.6e}");
        if (prev - obj).abs() <= config.tol * prev.abs().max(f64::MIN_POSITIVE) {
            break;
        }
    }
    let mut out = NmfFactors { w, h, objective_trace: trace };
    out.normalize_rows();
    out.h.mapv_inplace(|v| v.max(eps));
    Ok(out)
}

#[cfg(test)]
mod tests;
