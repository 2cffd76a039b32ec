use std::rc::Rc;

use super::ModelConfig;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::params::{init_fan_in, init_trunc_normal};
use crate::tensor::{Bound, ParamId, ParamStore, Real, Tape, Tensor, Var};

/// Logit added to keys that only exist as window padding.
const MASKED: f64 = -1e9;

/// Non-overlapping patches of a weighting map, flattened row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchGrid<T> {
    /// `[nx * ny, d]`; token `x * ny + y` is the patch at grid cell `(x, y)`.
    pub tokens: Tensor<T>,
    pub nx: usize,
    pub ny: usize,
}

impl<T: Real> PatchGrid<T> {
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn coords(&self, token: usize) -> (usize, usize) {
        (token / self.ny, token % self.ny)
    }
}

/// Splits `h` (`rows x width`) into `px x py` patches, zero-padding the
/// bottom and right edges up to whole patches.
pub fn patchify<T: Real>(h: &Tensor<T>, px: usize, py: usize) -> Result<PatchGrid<T>> {
    let &[rows, width] = h.shape() else {
        return Err(Error::shape("patchify", format!("expected a matrix, got {:?}", h.shape())));
    };
    if rows == 0 || width == 0 {
        return Err(Error::InvalidInput(format!("weighting map of shape {rows}x{width} is empty")));
    }
    if let Some(v) = h.data().iter().find(|v| !(**v >= T::zero())) {
        return Err(Error::InvalidInput(format!("weighting map entries must be >= 0, found {v}")));
    }
    let (nx, ny) = (rows.div_ceil(px), width.div_ceil(py));
    let d = px * py;
    let src = h.data();
    let mut tokens = vec![T::zero(); nx * ny * d];
    for x in 0..nx {
        for y in 0..ny {
            let dst = &mut tokens[(x * ny + y) * d..(x * ny + y + 1) * d];
            for i in 0..px {
                let r = x * px + i;
                if r >= rows {
                    break;
                }
                let c0 = y * py;
                let c1 = (c0 + py).min(width);
                dst[i * py..i * py + (c1 - c0)].copy_from_slice(&src[r * width + c0..r * width + c1]);
            }
        }
    }
    Ok(PatchGrid { tokens: Tensor::new(vec![nx * ny, d], tokens)?, nx, ny })
}

/// Flat index into a `(2 M_x − 1) x (2 M_y − 1)` table for the offset from
/// `b` to `a`, or `None` when the offset is out of range.
pub fn rel_index(a: (usize, usize), b: (usize, usize), max_grid: (usize, usize)) -> Option<usize> {
    let (mx, my) = (max_grid.0 as isize, max_grid.1 as isize);
    let dx = a.0 as isize - b.0 as isize + mx - 1;
    let dy = a.1 as isize - b.1 as isize + my - 1;
    if dx < 0 || dy < 0 || dx >= 2 * mx - 1 || dy >= 2 * my - 1 {
        return None;
    }
    Some((dx * (2 * my - 1) + dy) as usize)
}

/// Dense bias `R[a, b] = p[x_a − x_b + M_x − 1, y_a − y_b + M_y − 1]`.
pub fn rel_bias<T: Real>(
    coords_a: &[(usize, usize)],
    coords_b: &[(usize, usize)],
    table: &Tensor<T>,
) -> Result<Tensor<T>> {
    let &[tx, ty] = table.shape() else {
        return Err(Error::shape("rel_bias", format!("table must be a matrix, got {:?}", table.shape())));
    };
    if tx % 2 == 0 || ty % 2 == 0 {
        return Err(Error::shape("rel_bias", format!("table extents must be odd, got {tx}x{ty}")));
    }
    let max_grid = (tx.div_ceil(2), ty.div_ceil(2));
    let mut out = Vec::with_capacity(coords_a.len() * coords_b.len());
    for (i, &a) in coords_a.iter().enumerate() {
        for (j, &b) in coords_b.iter().enumerate() {
            let idx = rel_index(a, b, max_grid).ok_or_else(|| {
                Error::InvalidInput(format!(
                    "offset between token {i} at {a:?} and token {j} at {b:?} is outside the {tx}x{ty} bias table"
                ))
            })?;
            out.push(table.data()[idx]);
        }
    }
    Tensor::new(vec![coords_a.len(), coords_b.len()], out)
}

fn inv_sqrt(d: usize) -> f64 {
    1.0 / (d as f64).sqrt()
}

/// Windowed self-attention over row-major tokens of an `nx x ny` grid.
///
/// Each run of `window` consecutive tokens attends within itself with
/// logits `(QKᵀ + R)/√d`. The last window is filled with masked padding
/// keys. A window of at least `nx * ny` gives dense attention.
#[allow(clippy::too_many_arguments)]
pub fn local_attention<'t, T: Real>(
    q: Var<'t, T>,
    k: Var<'t, T>,
    v: Var<'t, T>,
    table: Var<'t, T>,
    grid: (usize, usize),
    max_grid: (usize, usize),
    window: usize,
) -> Result<Var<'t, T>> {
    let tape = q.tape();
    let (nx, ny) = grid;
    let n = nx * ny;
    let d = *q.shape().last().unwrap_or(&0);
    if q.shape() != [n, d] || k.shape() != [n, d] || v.shape() != [n, d] {
        return Err(Error::shape(
            "local_attention",
            format!("grid {nx}x{ny}: q {:?}, k {:?}, v {:?}", q.shape(), k.shape(), v.shape()),
        ));
    }
    if nx > max_grid.0 || ny > max_grid.1 {
        return Err(Error::shape("local_attention", format!("grid {nx}x{ny} exceeds bias table extent {max_grid:?}")));
    }
    let w = window.min(n).max(1);
    let nw = n.div_ceil(w);
    let pad = nw * w - n;
    let windowed = |x: Var<'t, T>| -> Result<Var<'t, T>> {
        let x = if pad > 0 { Var::concat(&[x, tape.constant(Tensor::zeros(&[pad, d]))], 0)? } else { x };
        x.reshape(&[nw, w, d])
    };
    let (q3, k3, v3) = (windowed(q)?, windowed(k)?, windowed(v)?);

    let mut idx = vec![0usize; nw * w * w];
    let mut mask = vec![T::zero(); if pad > 0 { nw * w * w } else { 0 }];
    let coord = |t: usize| (t / ny, t % ny);
    for win in 0..nw {
        for i in 0..w {
            let a = win * w + i;
            for j in 0..w {
                let b = win * w + j;
                let slot = (win * w + i) * w + j;
                if b >= n {
                    mask[slot] = T::c(MASKED);
                } else if a < n {
                    idx[slot] = rel_index(coord(a), coord(b), max_grid).expect("grid within table");
                }
            }
        }
    }
    let bias = table.gather(Rc::new(idx), &[nw, w, w])?;
    let mut logits = q3.matmul_nt(k3)?.add(bias)?.mul_scalar(inv_sqrt(d))?;
    if pad > 0 {
        logits = logits.add(tape.constant(Tensor::new(vec![nw, w, w], mask)?))?;
    }
    let out = logits.softmax(2)?.bmm(v3)?.reshape(&[nw * w, d])?;
    if pad > 0 {
        out.slice(0, 0, n)
    } else {
        Ok(out)
    }
}

/// Reference `SoftMax((QKᵀ + R)/√d)·V` over all token pairs.
pub fn dense_attention<'t, T: Real>(
    q: Var<'t, T>,
    k: Var<'t, T>,
    v: Var<'t, T>,
    bias: Option<Var<'t, T>>,
) -> Result<Var<'t, T>> {
    let d = *q.shape().last().unwrap_or(&0);
    let mut s = q.matmul_nt(k)?;
    if let Some(b) = bias {
        s = s.add(b)?;
    }
    s.mul_scalar(inv_sqrt(d))?.softmax(1)?.matmul(v)
}

/// Global tokens gather from every token: `SoftMax(G W_q Kᵀ/√d)·V`.
///
/// A per-global-token logit offset would be constant along the softmax
/// axis and cancel, so none is applied.
pub fn global_aggregate<'t, T: Real>(
    g: Var<'t, T>,
    k: Var<'t, T>,
    v: Var<'t, T>,
    wq: Var<'t, T>,
) -> Result<Var<'t, T>> {
    let d = *g.shape().last().unwrap_or(&0);
    g.matmul(wq)?.matmul_nt(k)?.mul_scalar(inv_sqrt(d))?.softmax(1)?.matmul(v)
}

/// Every token reads the aggregated global tokens:
/// `SoftMax((Q (Ĝ W_k)ᵀ + b)/√d)·(Ĝ W_v)` with `b` of shape `[1, T]`.
pub fn global_broadcast<'t, T: Real>(
    q: Var<'t, T>,
    g_hat: Var<'t, T>,
    wk: Var<'t, T>,
    wv: Var<'t, T>,
    bias: Var<'t, T>,
) -> Result<Var<'t, T>> {
    let d = *q.shape().last().unwrap_or(&0);
    let kg = g_hat.matmul(wk)?;
    let vg = g_hat.matmul(wv)?;
    q.matmul_nt(kg)?.add(bias)?.mul_scalar(inv_sqrt(d))?.softmax(1)?.matmul(vg)
}

/// Channel-wise average pooling of an `[nx, ny, d]` map onto a fixed bin grid.
pub fn sspp<'t, T: Real>(x: Var<'t, T>, bins: (usize, usize)) -> Result<Var<'t, T>> {
    x.avg_pool_bins(bins.0, bins.1)
}

/// Parameter handles of one transformer layer.
#[derive(Clone, Debug)]
pub struct PltLayer {
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub wo: ParamId,
    pub bo: ParamId,
    pub ln1_g: ParamId,
    pub ln1_b: ParamId,
    pub ln2_g: ParamId,
    pub ln2_b: ParamId,
    pub ff1_w: ParamId,
    pub ff1_b: ParamId,
    pub ff2_w: ParamId,
    pub ff2_b: ParamId,
    /// Relative position table.
    pub rel: ParamId,
    /// Broadcast-branch logit offset per global token, `[1, T]`.
    pub bc_bias: ParamId,
}

impl PltLayer {
    pub fn init<T: Real>(store: &mut ParamStore<T>, rng: &mut Rng, prefix: &str, cfg: &ModelConfig) -> Self {
        let d = cfg.d();
        let h = cfg.ff_mult * d;
        let (tx, ty) = cfg.table_shape();
        let mut add = |name: &str, value: Tensor<T>| store.add(format!("{prefix}.{name}"), value);
        PltLayer {
            wq: add("wq", init_fan_in(rng, &[d, d], d)),
            wk: add("wk", init_fan_in(rng, &[d, d], d)),
            wv: add("wv", init_fan_in(rng, &[d, d], d)),
            wo: add("wo", init_fan_in(rng, &[d, d], d)),
            bo: add("bo", Tensor::zeros(&[1, d])),
            ln1_g: add("ln1_g", Tensor::ones(&[d])),
            ln1_b: add("ln1_b", Tensor::zeros(&[d])),
            ln2_g: add("ln2_g", Tensor::ones(&[d])),
            ln2_b: add("ln2_b", Tensor::zeros(&[d])),
            ff1_w: add("ff1_w", init_fan_in(rng, &[d, h], d)),
            ff1_b: add("ff1_b", Tensor::zeros(&[1, h])),
            ff2_w: add("ff2_w", init_fan_in(rng, &[h, d], h)),
            ff2_b: add("ff2_b", Tensor::zeros(&[1, d])),
            rel: add("rel", init_trunc_normal(rng, &[tx, ty], cfg.init_std)),
            bc_bias: add("bc_bias", Tensor::zeros(&[1, cfg.global_tokens])),
        }
    }

    /// One layer on `[nx * ny, d]` tokens; returns tokens of the same shape.
    pub fn forward<'t, T: Real>(
        &self,
        b: &Bound<'t, T>,
        x: Var<'t, T>,
        g: Var<'t, T>,
        grid: (usize, usize),
        cfg: &ModelConfig,
    ) -> Result<Var<'t, T>> {
        let h = x.layer_norm(b.get(self.ln1_g), b.get(self.ln1_b), cfg.ln_eps)?;
        let (wq, wk, wv) = (b.get(self.wq), b.get(self.wk), b.get(self.wv));
        let q = h.matmul(wq)?;
        let k = h.matmul(wk)?;
        let v = h.matmul(wv)?;
        let local = local_attention(q, k, v, b.get(self.rel), grid, cfg.max_grid(), cfg.window)?;
        let g_hat = global_aggregate(g, k, v, wq)?;
        let global = global_broadcast(q, g_hat, wk, wv, b.get(self.bc_bias))?;
        let mixed = local.add(global)?.matmul(b.get(self.wo))?.add(b.get(self.bo))?;
        let x = x.add(mixed)?;
        let h = x.layer_norm(b.get(self.ln2_g), b.get(self.ln2_b), cfg.ln_eps)?;
        let ff = h
            .matmul(b.get(self.ff1_w))?
            .add(b.get(self.ff1_b))?
            .relu()?
            .matmul(b.get(self.ff2_w))?
            .add(b.get(self.ff2_b))?;
        x.add(ff)
    }
}

/// Stack of transformer layers, each followed by pooling to its bin grid.
#[derive(Clone, Debug)]
pub struct Encoder {
    pub global_tokens: ParamId,
    pub layers: Vec<PltLayer>,
}

impl Encoder {
    pub fn init<T: Real>(store: &mut ParamStore<T>, rng: &mut Rng, cfg: &ModelConfig) -> Self {
        let global_tokens = store.add("enc.g", init_trunc_normal(rng, &[cfg.global_tokens, cfg.d()], cfg.init_std));
        let layers = (0..cfg.bins.len()).map(|i| PltLayer::init(store, rng, &format!("enc.l{i}"), cfg)).collect();
        Encoder { global_tokens, layers }
    }

    /// Weighting map `rows x width` to a `[8, 8, d]` latent.
    pub fn forward<'t, T: Real>(
        &self,
        tape: &'t Tape<T>,
        b: &Bound<'t, T>,
        h: &Tensor<T>,
        cfg: &ModelConfig,
    ) -> Result<Var<'t, T>> {
        let &[rows, width] = h.shape() else {
            return Err(Error::shape("encoder", format!("expected a matrix, got {:?}", h.shape())));
        };
        if rows != cfg.rows {
            return Err(Error::shape("encoder", format!("weighting map has {rows} rows, expected {}", cfg.rows)));
        }
        if width == 0 || width > cfg.max_width {
            return Err(Error::InvalidInput(format!(
                "weighting map width {width} outside 1..={} supported by the bias table",
                cfg.max_width
            )));
        }
        let grid = patchify(h, cfg.patch.0, cfg.patch.1)?;
        self.forward_grid(tape, b, &grid, cfg)
    }

    pub fn forward_grid<'t, T: Real>(
        &self,
        tape: &'t Tape<T>,
        b: &Bound<'t, T>,
        grid: &PatchGrid<T>,
        cfg: &ModelConfig,
    ) -> Result<Var<'t, T>> {
        let d = cfg.d();
        let g = b.get(self.global_tokens);
        let mut x = tape.constant(grid.tokens.clone());
        let mut dims = (grid.nx, grid.ny);
        for (layer, &bins) in self.layers.iter().zip(&cfg.bins) {
            x = layer.forward(b, x, g, dims, cfg)?;
            x = sspp(x.reshape(&[dims.0, dims.1, d])?, bins)?;
            dims = bins;
            x = x.reshape(&[dims.0 * dims.1, d])?;
        }
        x.reshape(&[dims.0, dims.1, d])
    }
}
