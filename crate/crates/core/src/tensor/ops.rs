//! Differentiable primitives. Every constructor records a backward rule.

use std::rc::Rc;

use super::conv::{self, ConvGeom};
use super::tape::BackwardCtx;
use super::{gemm, strides, MatRef, Real, Tensor, Var};
use crate::error::{Error, Result};

fn zip_map<T: Real>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("zip_map shapes")
}

/// Visits every linear index of `shape` together with the offset given by
/// `strides` (a stride of 0 repeats the element along that axis).
fn for_each_strided(shape: &[usize], strides: &[usize], mut f: impl FnMut(usize, usize)) {
    let n: usize = shape.iter().product();
    let rank = shape.len();
    let mut idx = vec![0usize; rank];
    let mut off = 0usize;
    for i in 0..n {
        f(i, off);
        let mut d = rank;
        while d > 0 {
            d -= 1;
            idx[d] += 1;
            off += strides[d];
            if idx[d] < shape[d] {
                break;
            }
            off -= strides[d] * shape[d];
            idx[d] = 0;
        }
    }
}

/// Strides that read `b` broadcast up to `out`, or `None` if `b` cannot be
/// broadcast (it must have the same rank with each extent 1 or equal).
fn broadcast_strides(out: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    if out.len() != b.len() {
        return None;
    }
    let bs = strides(b);
    out.iter()
        .zip(b)
        .zip(bs)
        .map(|((&o, &bd), s)| {
            if bd == o {
                Some(if bd == 1 { 0 } else { s })
            } else if bd == 1 {
                Some(0)
            } else {
                None
            }
        })
        .collect()
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum BinKind {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinKind {
    fn name(self) -> &'static str {
        match self {
            BinKind::Add => "add",
            BinKind::Sub => "sub",
            BinKind::Mul => "mul",
            BinKind::Div => "div",
        }
    }

    #[inline]
    fn apply<T: Real>(self, a: T, b: T) -> T {
        match self {
            BinKind::Add => a + b,
            BinKind::Sub => a - b,
            BinKind::Mul => a * b,
            BinKind::Div => a / b,
        }
    }
}

fn check_axis(op: &'static str, shape: &[usize], axis: usize) -> Result<()> {
    if axis >= shape.len() {
        return Err(Error::shape(op, format!("axis {axis} out of range for shape {shape:?}")));
    }
    Ok(())
}

/// Splits `shape` around `axis` into (outer, axis extent, inner).
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl<'t, T: Real> Var<'t, T> {
    fn binary(self, other: Var<'t, T>, kind: BinKind) -> Result<Var<'t, T>> {
        let tape = self.tape;
        let op = kind.name();
        tape.check_inputs(op, &[self, other])?;
        let (out, bstr) = {
            let a = self.value();
            let b = other.value();
            if a.shape() == b.shape() {
                (zip_map(&a, &b, |x, y| kind.apply(x, y)), None)
            } else {
                let bstr = broadcast_strides(a.shape(), b.shape()).ok_or_else(|| {
                    Error::shape(op, format!("{:?} vs {:?}", a.shape(), b.shape()))
                })?;
                let mut out = vec![T::zero(); a.len()];
                let (ad, bd) = (a.data(), b.data());
                for_each_strided(a.shape(), &bstr, |i, off| out[i] = kind.apply(ad[i], bd[off]));
                (Tensor::new(a.shape().to_vec(), out)?, Some(bstr))
            }
        };
        tape.add_flops(out.len());
        Ok(tape.push(
            op,
            out,
            &[self, other],
            Box::new(move |ctx: &BackwardCtx<'_, T>| {
                let (g, a, b) = (ctx.grad, ctx.inputs[0], ctx.inputs[1]);
                let n = g.len();
                let (gd, ad, bd) = (g.data(), a.data(), b.data());
                let boff: Vec<usize> = match &bstr {
                    None => (0..n).collect(),
                    Some(s) => {
                        let mut v = vec![0; n];
                        for_each_strided(g.shape(), s, |i, off| v[i] = off);
                        v
                    }
                };
                let mut ga = vec![T::zero(); n];
                let mut gb = vec![T::zero(); b.len()];
                for i in 0..n {
                    let (x, y, gi) = (ad[i], bd[boff[i]], gd[i]);
                    let (da, db) = match kind {
                        BinKind::Add => (gi, gi),
                        BinKind::Sub => (gi, -gi),
                        BinKind::Mul => (gi * y, gi * x),
                        BinKind::Div => (gi / y, -gi * x / (y * y)),
                    };
                    ga[i] = da;
                    gb[boff[i]] += db;
                }
                vec![
                    Some(Tensor::new(a.shape().to_vec(), ga).unwrap()),
                    Some(Tensor::new(b.shape().to_vec(), gb).unwrap()),
                ]
            }),
        ))
    }

    /// Elementwise sum; `other` may broadcast along axes of extent 1.
    pub fn add(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary(other, BinKind::Add)
    }

    pub fn sub(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary(other, BinKind::Sub)
    }

    pub fn mul(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary(other, BinKind::Mul)
    }

    pub fn div(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        self.binary(other, BinKind::Div)
    }

    /// Elementwise map whose derivative is computed from input `x`, output
    /// `y` and upstream gradient `g`.
    fn unary(
        self,
        op: &'static str,
        f: impl Fn(T) -> T,
        df: impl Fn(T, T, T) -> T + 'static,
    ) -> Result<Var<'t, T>> {
        self.tape.check_inputs(op, &[self])?;
        let out = self.value().map(f);
        self.tape.add_flops(out.len());
        Ok(self.tape.push(
            op,
            out,
            &[self],
            Box::new(move |ctx| {
                let (g, x, y) = (ctx.grad.data(), ctx.inputs[0].data(), ctx.output.data());
                let d = (0..g.len()).map(|i| df(x[i], y[i], g[i])).collect();
                vec![Some(Tensor::new(ctx.grad.shape().to_vec(), d).unwrap())]
            }),
        ))
    }

    pub fn neg(self) -> Result<Var<'t, T>> {
        self.unary("neg", |x| -x, |_, _, g| -g)
    }

    pub fn add_scalar(self, c: f64) -> Result<Var<'t, T>> {
        let c = T::c(c);
        self.unary("add_scalar", move |x| x + c, |_, _, g| g)
    }

    pub fn mul_scalar(self, c: f64) -> Result<Var<'t, T>> {
        let c = T::c(c);
        self.unary("mul_scalar", move |x| x * c, move |_, _, g| g * c)
    }

    pub fn powf(self, p: f64) -> Result<Var<'t, T>> {
        let pt = T::c(p);
        self.unary("powf", move |x| x.powf(pt), move |x, _, g| g * pt * x.powf(pt - T::one()))
    }

    pub fn exp(self) -> Result<Var<'t, T>> {
        self.unary("exp", |x| x.exp(), |_, y, g| g * y)
    }

    pub fn log(self) -> Result<Var<'t, T>> {
        self.unary("log", |x| x.ln(), |x, _, g| g / x)
    }

    pub fn sqrt(self) -> Result<Var<'t, T>> {
        self.unary("sqrt", |x| x.sqrt(), |_, y, g| g / (y + y))
    }

    pub fn sigmoid(self) -> Result<Var<'t, T>> {
        self.unary("sigmoid", sigmoid, |_, y, g| g * y * (T::one() - y))
    }

    pub fn relu(self) -> Result<Var<'t, T>> {
        self.tape.record_branches(self.value().data().iter().map(|&x| x > T::zero()));
        self.unary(
            "relu",
            |x| if x > T::zero() { x } else { T::zero() },
            |x, _, g| if x > T::zero() { g } else { T::zero() },
        )
    }

    /// `ln(1 + e^x)`, evaluated without overflow.
    pub fn softplus(self) -> Result<Var<'t, T>> {
        self.unary(
            "softplus",
            |x| x.max(T::zero()) + (-x.abs()).exp().ln_1p(),
            |x, _, g| g * sigmoid(x),
        )
    }

    fn matmul_impl(self, other: Var<'t, T>, ta: bool, tb: bool, op: &'static str) -> Result<Var<'t, T>> {
        let tape = self.tape;
        tape.check_inputs(op, &[self, other])?;
        let out = {
            let a = self.value();
            let b = other.value();
            let (sa, sb) = (a.shape(), b.shape());
            let ok_rank = (sa.len() == 2 && sb.len() == 2)
                || (sa.len() == 3 && sb.len() == 3 && sa[0] == sb[0]);
            if !ok_rank {
                return Err(Error::shape(op, format!("{sa:?} vs {sb:?}")));
            }
            let batch = if sa.len() == 3 { sa[0] } else { 1 };
            let (ra, ca) = (sa[sa.len() - 2], sa[sa.len() - 1]);
            let (rb, cb) = (sb[sb.len() - 2], sb[sb.len() - 1]);
            let (m, k) = if ta { (ca, ra) } else { (ra, ca) };
            let (k2, n) = if tb { (cb, rb) } else { (rb, cb) };
            if k != k2 {
                return Err(Error::shape(op, format!("{sa:?} vs {sb:?} (inner {k} != {k2})")));
            }
            let mut out = vec![T::zero(); batch * m * n];
            for bi in 0..batch {
                gemm(
                    MatRef::new(&a.data()[bi * ra * ca..(bi + 1) * ra * ca], ra, ca, ta),
                    MatRef::new(&b.data()[bi * rb * cb..(bi + 1) * rb * cb], rb, cb, tb),
                    T::zero(),
                    &mut out[bi * m * n..(bi + 1) * m * n],
                );
            }
            tape.add_flops(batch * m * n * k);
            let shape = if sa.len() == 3 { vec![batch, m, n] } else { vec![m, n] };
            Tensor::new(shape, out)?
        };
        Ok(tape.push(
            op,
            out,
            &[self, other],
            Box::new(move |ctx| {
                let (g, a, b) = (ctx.grad, ctx.inputs[0], ctx.inputs[1]);
                let (sa, sb, sg) = (a.shape(), b.shape(), g.shape());
                let r = sa.len();
                let batch = if r == 3 { sa[0] } else { 1 };
                let (ra, ca) = (sa[r - 2], sa[r - 1]);
                let (rb, cb) = (sb[r - 2], sb[r - 1]);
                let (m, n) = (sg[r - 2], sg[r - 1]);
                let mut ga = vec![T::zero(); a.len()];
                let mut gb = vec![T::zero(); b.len()];
                for bi in 0..batch {
                    let am = MatRef::new(&a.data()[bi * ra * ca..(bi + 1) * ra * ca], ra, ca, false);
                    let bm = MatRef::new(&b.data()[bi * rb * cb..(bi + 1) * rb * cb], rb, cb, false);
                    let gm = &g.data()[bi * m * n..(bi + 1) * m * n];
                    let ga_s = &mut ga[bi * ra * ca..(bi + 1) * ra * ca];
                    if ta {
                        gemm(MatRef { trans: tb, ..bm }, MatRef::new(gm, m, n, true), T::zero(), ga_s);
                    } else {
                        gemm(MatRef::new(gm, m, n, false), MatRef { trans: !tb, ..bm }, T::zero(), ga_s);
                    }
                    let gb_s = &mut gb[bi * rb * cb..(bi + 1) * rb * cb];
                    if tb {
                        gemm(MatRef::new(gm, m, n, true), MatRef { trans: ta, ..am }, T::zero(), gb_s);
                    } else {
                        gemm(MatRef { trans: !ta, ..am }, MatRef::new(gm, m, n, false), T::zero(), gb_s);
                    }
                }
                vec![
                    Some(Tensor::new(sa.to_vec(), ga).unwrap()),
                    Some(Tensor::new(sb.to_vec(), gb).unwrap()),
                ]
            }),
        ))
    }

    /// `[m,k] x [k,n]`, or batched `[B,m,k] x [B,k,n]`.
    pub fn matmul(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        self.matmul_impl(other, false, false, "matmul")
    }

    /// `self * other^T` (over the last two axes).
    pub fn matmul_nt(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        self.matmul_impl(other, false, true, "matmul_nt")
    }

    /// `self^T * other` (over the last two axes).
    pub fn matmul_tn(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        self.matmul_impl(other, true, false, "matmul_tn")
    }

    /// Batched matrix product; alias of [`Var::matmul`] on rank-3 inputs.
    pub fn bmm(self, other: Var<'t, T>) -> Result<Var<'t, T>> {
        if self.shape().len() != 3 {
            return Err(Error::shape("bmm", format!("expected rank 3, got {:?}", self.shape())));
        }
        self.matmul_impl(other, false, false, "bmm")
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'t, T>> {
        let out = self.value().clone().reshape(shape)?;
        Ok(self.tape.push(
            "reshape",
            out,
            &[self],
            Box::new(|ctx| {
                vec![Some(ctx.grad.clone().reshape(ctx.inputs[0].shape()).unwrap())]
            }),
        ))
    }

    /// Reorders axes: output axis `i` is input axis `axes[i]`.
    pub fn permute(self, axes: &[usize]) -> Result<Var<'t, T>> {
        let shape = self.shape();
        let mut seen = vec![false; shape.len()];
        if axes.len() != shape.len() || axes.iter().any(|&a| a >= shape.len() || std::mem::replace(&mut seen[a], true)) {
            return Err(Error::shape("permute", format!("axes {axes:?} for shape {shape:?}")));
        }
        let in_str = strides(&shape);
        let out_shape: Vec<usize> = axes.iter().map(|&a| shape[a]).collect();
        let pstr: Vec<usize> = axes.iter().map(|&a| in_str[a]).collect();
        let out = {
            let x = self.value();
            let xd = x.data();
            let mut out = vec![T::zero(); x.len()];
            for_each_strided(&out_shape, &pstr, |i, off| out[i] = xd[off]);
            Tensor::new(out_shape.clone(), out)?
        };
        Ok(self.tape.push(
            "permute",
            out,
            &[self],
            Box::new(move |ctx| {
                let g = ctx.grad.data();
                let mut gx = vec![T::zero(); g.len()];
                for_each_strided(&out_shape, &pstr, |i, off| gx[off] = g[i]);
                vec![Some(Tensor::new(ctx.inputs[0].shape().to_vec(), gx).unwrap())]
            }),
        ))
    }

    /// Swaps the last two axes.
    pub fn transpose(self) -> Result<Var<'t, T>> {
        let r = self.shape().len();
        if r < 2 {
            return Err(Error::shape("transpose", format!("rank {r} < 2")));
        }
        let mut axes: Vec<usize> = (0..r).collect();
        axes.swap(r - 1, r - 2);
        self.permute(&axes)
    }

    /// Softmax along `axis`.
    pub fn softmax(self, axis: usize) -> Result<Var<'t, T>> {
        self.tape.check_inputs("softmax", &[self])?;
        let shape = self.shape();
        check_axis("softmax", &shape, axis)?;
        let (outer, len, inner) = split_axis(&shape, axis);
        let out = {
            let x = self.value();
            let xd = x.data();
            let mut y = vec![T::zero(); x.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let base = o * len * inner + i;
                    let mut mx = T::neg_infinity();
                    for j in 0..len {
                        mx = mx.max(xd[base + j * inner]);
                    }
                    let mut s = T::zero();
                    for j in 0..len {
                        let e = (xd[base + j * inner] - mx).exp();
                        y[base + j * inner] = e;
                        s += e;
                    }
                    for j in 0..len {
                        y[base + j * inner] /= s;
                    }
                }
            }
            self.tape.add_flops(3 * x.len());
            Tensor::new(shape.clone(), y)?
        };
        Ok(self.tape.push(
            "softmax",
            out,
            &[self],
            Box::new(move |ctx| {
                let (g, y) = (ctx.grad.data(), ctx.output.data());
                let mut gx = vec![T::zero(); g.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let base = o * len * inner + i;
                        let mut dot = T::zero();
                        for j in 0..len {
                            let k = base + j * inner;
                            dot += g[k] * y[k];
                        }
                        for j in 0..len {
                            let k = base + j * inner;
                            gx[k] = y[k] * (g[k] - dot);
                        }
                    }
                }
                vec![Some(Tensor::new(ctx.grad.shape().to_vec(), gx).unwrap())]
            }),
        ))
    }

    /// Sum of all elements, as a rank-0 tensor.
    pub fn sum(self) -> Result<Var<'t, T>> {
        let s = self.value().sum();
        Ok(self.tape.push(
            "sum",
            Tensor::scalar(s),
            &[self],
            Box::new(|ctx| {
                vec![Some(Tensor::full(ctx.inputs[0].shape(), ctx.grad.item()))]
            }),
        ))
    }

    pub fn mean(self) -> Result<Var<'t, T>> {
        let n = self.value().len();
        if n == 0 {
            return Err(Error::shape("mean", "empty tensor"));
        }
        self.sum()?.mul_scalar(1.0 / n as f64)
    }

    /// Sum over `axis`, removing it.
    pub fn sum_axis(self, axis: usize) -> Result<Var<'t, T>> {
        let shape = self.shape();
        check_axis("sum_axis", &shape, axis)?;
        let (outer, len, inner) = split_axis(&shape, axis);
        let out = {
            let x = self.value();
            let xd = x.data();
            let mut y = vec![T::zero(); outer * inner];
            for o in 0..outer {
                for j in 0..len {
                    let src = &xd[(o * len + j) * inner..(o * len + j + 1) * inner];
                    for (d, &s) in y[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                        *d += s;
                    }
                }
            }
            let mut out_shape = shape.clone();
            out_shape.remove(axis);
            Tensor::new(out_shape, y)?
        };
        Ok(self.tape.push(
            "sum_axis",
            out,
            &[self],
            Box::new(move |ctx| {
                let g = ctx.grad.data();
                let mut gx = vec![T::zero(); outer * len * inner];
                for o in 0..outer {
                    for j in 0..len {
                        gx[(o * len + j) * inner..(o * len + j + 1) * inner]
                            .copy_from_slice(&g[o * inner..(o + 1) * inner]);
                    }
                }
                vec![Some(Tensor::new(ctx.inputs[0].shape().to_vec(), gx).unwrap())]
            }),
        ))
    }

    pub fn mean_axis(self, axis: usize) -> Result<Var<'t, T>> {
        let shape = self.shape();
        check_axis("mean_axis", &shape, axis)?;
        let n = shape[axis];
        self.sum_axis(axis)?.mul_scalar(1.0 / n as f64)
    }

    /// Concatenates `parts` along `axis`.
    pub fn concat(parts: &[Var<'t, T>], axis: usize) -> Result<Var<'t, T>> {
        let first = parts.first().ok_or_else(|| Error::shape("concat", "no inputs"))?;
        let tape = first.tape;
        tape.check_inputs("concat", parts)?;
        let shape0 = first.shape();
        check_axis("concat", &shape0, axis)?;
        let mut lens = Vec::with_capacity(parts.len());
        for p in parts {
            let s = p.shape();
            let compatible = s.len() == shape0.len()
                && s.iter().zip(&shape0).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(Error::shape("concat", format!("{shape0:?} vs {s:?} on axis {axis}")));
            }
            lens.push(s[axis]);
        }
        let total: usize = lens.iter().sum();
        let (outer, _, inner) = split_axis(&shape0, axis);
        let mut out_shape = shape0.clone();
        out_shape[axis] = total;
        let mut out = vec![T::zero(); outer * total * inner];
        let mut start = 0;
        for (p, &l) in parts.iter().zip(&lens) {
            let v = p.value();
            for o in 0..outer {
                let dst = (o * total + start) * inner;
                out[dst..dst + l * inner].copy_from_slice(&v.data()[o * l * inner..(o + 1) * l * inner]);
            }
            start += l;
        }
        let out = Tensor::new(out_shape, out)?;
        Ok(tape.push(
            "concat",
            out,
            parts,
            Box::new(move |ctx| {
                let g = ctx.grad.data();
                let mut start = 0;
                lens.iter()
                    .zip(&ctx.inputs)
                    .map(|(&l, inp)| {
                        let mut gx = vec![T::zero(); outer * l * inner];
                        for o in 0..outer {
                            let src = (o * total + start) * inner;
                            gx[o * l * inner..(o + 1) * l * inner].copy_from_slice(&g[src..src + l * inner]);
                        }
                        start += l;
                        Some(Tensor::new(inp.shape().to_vec(), gx).unwrap())
                    })
                    .collect()
            }),
        ))
    }

    /// Elements `start..end` along `axis`.
    pub fn slice(self, axis: usize, start: usize, end: usize) -> Result<Var<'t, T>> {
        let shape = self.shape();
        check_axis("slice", &shape, axis)?;
        if start > end || end > shape[axis] {
            return Err(Error::shape("slice", format!("range {start}..{end} on axis {axis} of {shape:?}")));
        }
        let (outer, len, inner) = split_axis(&shape, axis);
        let l = end - start;
        let out = {
            let x = self.value();
            let xd = x.data();
            let mut y = Vec::with_capacity(outer * l * inner);
            for o in 0..outer {
                y.extend_from_slice(&xd[(o * len + start) * inner..(o * len + end) * inner]);
            }
            let mut s = shape.clone();
            s[axis] = l;
            Tensor::new(s, y)?
        };
        Ok(self.tape.push(
            "slice",
            out,
            &[self],
            Box::new(move |ctx| {
                let g = ctx.grad.data();
                let mut gx = vec![T::zero(); outer * len * inner];
                for o in 0..outer {
                    gx[(o * len + start) * inner..(o * len + end) * inner]
                        .copy_from_slice(&g[o * l * inner..(o + 1) * l * inner]);
                }
                vec![Some(Tensor::new(ctx.inputs[0].shape().to_vec(), gx).unwrap())]
            }),
        ))
    }

    /// `out[i] = self.flat[indices[i]]`, reshaped to `shape`. Backward
    /// scatter-adds, so repeated indices accumulate.
    pub fn gather(self, indices: Rc<Vec<usize>>, shape: &[usize]) -> Result<Var<'t, T>> {
        let n: usize = shape.iter().product();
        if n != indices.len() {
            return Err(Error::shape("gather", format!("{} indices for shape {shape:?}", indices.len())));
        }
        let out = {
            let x = self.value();
            let xd = x.data();
            if let Some(&bad) = indices.iter().find(|&&i| i >= xd.len()) {
                return Err(Error::shape("gather", format!("index {bad} out of range for {} elements", xd.len())));
            }
            Tensor::new(shape.to_vec(), indices.iter().map(|&i| xd[i]).collect())?
        };
        Ok(self.tape.push(
            "gather",
            out,
            &[self],
            Box::new(move |ctx| {
                let mut gx = Tensor::zeros(ctx.inputs[0].shape());
                let gd = gx.data_mut();
                for (&i, &g) in indices.iter().zip(ctx.grad.data()) {
                    gd[i] += g;
                }
                vec![Some(gx)]
            }),
        ))
    }

    /// Average pooling of an `[nx, ny, d]` grid onto a `[bx, by, d]` grid of
    /// rectangular bins (see [`pool_bin`]).
    pub fn avg_pool_bins(self, bx: usize, by: usize) -> Result<Var<'t, T>> {
        let shape = self.shape();
        if shape.len() != 3 || shape[0] == 0 || shape[1] == 0 || bx == 0 || by == 0 {
            return Err(Error::shape("avg_pool_bins", format!("input {shape:?}, bins {bx}x{by}")));
        }
        let (nx, ny, d) = (shape[0], shape[1], shape[2]);
        let xbins: Vec<_> = (0..bx).map(|i| pool_bin(i, nx, bx)).collect();
        let ybins: Vec<_> = (0..by).map(|j| pool_bin(j, ny, by)).collect();
        let out = {
            let x = self.value();
            let xd = x.data();
            let mut y = vec![T::zero(); bx * by * d];
            for (i, &(x0, x1)) in xbins.iter().enumerate() {
                for (j, &(y0, y1)) in ybins.iter().enumerate() {
                    let dst = &mut y[(i * by + j) * d..(i * by + j + 1) * d];
                    for xx in x0..x1 {
                        for yy in y0..y1 {
                            let src = &xd[(xx * ny + yy) * d..(xx * ny + yy + 1) * d];
                            for (a, &b) in dst.iter_mut().zip(src) {
                                *a += b;
                            }
                        }
                    }
                    let inv = T::one() / T::c(((x1 - x0) * (y1 - y0)) as f64);
                    for a in dst.iter_mut() {
                        *a *= inv;
                    }
                }
            }
            self.tape.add_flops(nx * ny * d);
            Tensor::new(vec![bx, by, d], y)?
        };
        Ok(self.tape.push(
            "avg_pool_bins",
            out,
            &[self],
            Box::new(move |ctx| {
                let g = ctx.grad.data();
                let mut gx = vec![T::zero(); nx * ny * d];
                for (i, &(x0, x1)) in xbins.iter().enumerate() {
                    for (j, &(y0, y1)) in ybins.iter().enumerate() {
                        let inv = T::one() / T::c(((x1 - x0) * (y1 - y0)) as f64);
                        let src = &g[(i * by + j) * d..(i * by + j + 1) * d];
                        for xx in x0..x1 {
                            for yy in y0..y1 {
                                let dst = &mut gx[(xx * ny + yy) * d..(xx * ny + yy + 1) * d];
                                for (a, &b) in dst.iter_mut().zip(src) {
                                    *a += b * inv;
                                }
                            }
                        }
                    }
                }
                vec![Some(Tensor::new(vec![nx, ny, d], gx).unwrap())]
            }),
        ))
    }

    /// Layer normalization over the last axis with affine `gamma`, `beta`.
    pub fn layer_norm(self, gamma: Var<'t, T>, beta: Var<'t, T>, eps: f64) -> Result<Var<'t, T>> {
        let tape = self.tape;
        tape.check_inputs("layer_norm", &[self, gamma, beta])?;
        let shape = self.shape();
        let d = *shape.last().ok_or_else(|| Error::shape("layer_norm", "rank 0 input"))?;
        if gamma.shape() != [d] || beta.shape() != [d] {
            return Err(Error::shape(
                "layer_norm",
                format!("input {shape:?}, gamma {:?}, beta {:?}", gamma.shape(), beta.shape()),
            ));
        }
        let rows = if d == 0 { 0 } else { self.value().len() / d };
        let eps = T::c(eps);
        let inv_d = T::one() / T::c(d as f64);
        // Normalized activations and inverse std are needed again in backward.
        let (out, xhat, rstd) = {
            let x = self.value();
            let (xd, gd, bd) = (x.data(), gamma.value(), beta.value());
            let mut xhat = vec![T::zero(); x.len()];
            let mut rstd = vec![T::zero(); rows];
            let mut y = vec![T::zero(); x.len()];
            for r in 0..rows {
                let row = &xd[r * d..(r + 1) * d];
                let mu = row.iter().copied().sum::<T>() * inv_d;
                let var = row.iter().map(|&v| (v - mu) * (v - mu)).sum::<T>() * inv_d;
                let rs = T::one() / (var + eps).sqrt();
                rstd[r] = rs;
                for k in 0..d {
                    let h = (row[k] - mu) * rs;
                    xhat[r * d + k] = h;
                    y[r * d + k] = h * gd.data()[k] + bd.data()[k];
                }
            }
            tape.add_flops(8 * x.len());
            (Tensor::new(shape.clone(), y)?, xhat, rstd)
        };
        Ok(tape.push(
            "layer_norm",
            out,
            &[self, gamma, beta],
            Box::new(move |ctx| {
                let g = ctx.grad.data();
                let gamma = ctx.inputs[1].data();
                let mut gx = vec![T::zero(); g.len()];
                let mut ggamma = vec![T::zero(); d];
                let mut gbeta = vec![T::zero(); d];
                for r in 0..rows {
                    let mut m1 = T::zero();
                    let mut m2 = T::zero();
                    for k in 0..d {
                        let i = r * d + k;
                        let dh = g[i] * gamma[k];
                        m1 += dh;
                        m2 += dh * xhat[i];
                        ggamma[k] += g[i] * xhat[i];
                        gbeta[k] += g[i];
                    }
                    m1 *= inv_d;
                    m2 *= inv_d;
                    for k in 0..d {
                        let i = r * d + k;
                        gx[i] = rstd[r] * (g[i] * gamma[k] - m1 - xhat[i] * m2);
                    }
                }
                vec![
                    Some(Tensor::new(ctx.inputs[0].shape().to_vec(), gx).unwrap()),
                    Some(Tensor::new(vec![d], ggamma).unwrap()),
                    Some(Tensor::new(vec![d], gbeta).unwrap()),
                ]
            }),
        ))
    }

    /// 2D convolution: input `[N,C,H,W]`, weight `[O,C,KH,KW]`.
    pub fn conv2d(self, weight: Var<'t, T>, stride: usize, pad: usize) -> Result<Var<'t, T>> {
        let tape = self.tape;
        tape.check_inputs("conv2d", &[self, weight])?;
        let (xs, ws) = (self.shape(), weight.shape());
        if xs.len() != 4 || ws.len() != 4 || xs[1] != ws[1] || stride == 0 {
            return Err(Error::shape("conv2d", format!("input {xs:?}, weight {ws:?}, stride {stride}")));
        }
        let geom = ConvGeom::forward(xs[2], xs[3], ws[2], ws[3], stride, pad)
            .ok_or_else(|| Error::shape("conv2d", format!("kernel {ws:?} does not fit input {xs:?}")))?;
        let (n, c, o) = (xs[0], xs[1], ws[0]);
        let out = {
            let (x, w) = (self.value(), weight.value());
            let y = conv::conv2d_forward(x.data(), w.data(), n, c, o, &geom);
            tape.add_flops(n * o * c * geom.kh * geom.kw * geom.oh * geom.ow);
            Tensor::new(vec![n, o, geom.oh, geom.ow], y)?
        };
        Ok(tape.push(
            "conv2d",
            out,
            &[self, weight],
            Box::new(move |ctx| {
                let (gx, gw) = conv::conv2d_backward(
                    ctx.grad.data(),
                    ctx.inputs[0].data(),
                    ctx.inputs[1].data(),
                    n,
                    c,
                    o,
                    &geom,
                );
                vec![
                    Some(Tensor::new(ctx.inputs[0].shape().to_vec(), gx).unwrap()),
                    Some(Tensor::new(ctx.inputs[1].shape().to_vec(), gw).unwrap()),
                ]
            }),
        ))
    }

    /// Transposed 2D convolution: input `[N,C,H,W]`, weight `[C,O,KH,KW]`,
    /// output extent `(H-1)*stride - 2*pad + KH`.
    pub fn conv_transpose2d(self, weight: Var<'t, T>, stride: usize, pad: usize) -> Result<Var<'t, T>> {
        let tape = self.tape;
        tape.check_inputs("conv_transpose2d", &[self, weight])?;
        let (xs, ws) = (self.shape(), weight.shape());
        if xs.len() != 4 || ws.len() != 4 || xs[1] != ws[0] || stride == 0 {
            return Err(Error::shape(
                "conv_transpose2d",
                format!("input {xs:?}, weight {ws:?}, stride {stride}"),
            ));
        }
        let geom = ConvGeom::transposed(xs[2], xs[3], ws[2], ws[3], stride, pad).ok_or_else(|| {
            Error::shape("conv_transpose2d", format!("kernel {ws:?} with padding {pad} on input {xs:?}"))
        })?;
        let (n, c, o) = (xs[0], xs[1], ws[1]);
        let out = {
            let (x, w) = (self.value(), weight.value());
            let y = conv::conv_transpose2d_forward(x.data(), w.data(), n, c, o, &geom);
            tape.add_flops(n * o * c * geom.kh * geom.kw * geom.oh * geom.ow);
            Tensor::new(vec![n, o, geom.h, geom.w], y)?
        };
        Ok(tape.push(
            "conv_transpose2d",
            out,
            &[self, weight],
            Box::new(move |ctx| {
                let (gx, gw) = conv::conv_transpose2d_backward(
                    ctx.grad.data(),
                    ctx.inputs[0].data(),
                    ctx.inputs[1].data(),
                    n,
                    c,
                    o,
                    &geom,
                );
                vec![
                    Some(Tensor::new(ctx.inputs[0].shape().to_vec(), gx).unwrap()),
                    Some(Tensor::new(ctx.inputs[1].shape().to_vec(), gw).unwrap()),
                ]
            }),
        ))
    }
}

#[inline]
pub(crate) fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Cell range `[start, end)` of bin `i` when `n` cells are pooled into `b`
/// bins. Bins partition the cells when `n >= b`; otherwise each bin takes
/// the single nearest cell, duplicating cells across bins.
pub fn pool_bin(i: usize, n: usize, b: usize) -> (usize, usize) {
    let start = (i * n / b).min(n - 1);
    let end = ((i + 1) * n / b).max(start + 1);
    (start, end)
}
