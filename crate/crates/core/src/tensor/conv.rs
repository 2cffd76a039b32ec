//! im2col / col2im kernels behind `conv2d` and `conv_transpose2d`.

use super::{gemm, MatRef, Real};

/// Geometry of a strided convolution from an `h x w` plane to `oh x ow`.
/// A transposed convolution runs the same geometry backwards.
#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    pub fn forward(h: usize, w: usize, kh: usize, kw: usize, stride: usize, pad: usize) -> Option<Self> {
        if h + 2 * pad < kh || w + 2 * pad < kw {
            return None;
        }
        let oh = (h + 2 * pad - kh) / stride + 1;
        let ow = (w + 2 * pad - kw) / stride + 1;
        Some(ConvGeom { h, w, kh, kw, stride, pad, oh, ow })
    }

    pub fn transposed(hin: usize, win: usize, kh: usize, kw: usize, stride: usize, pad: usize) -> Option<Self> {
        let h = ((hin.checked_sub(1)? * stride + kh) as isize - 2 * pad as isize).try_into().ok()?;
        let w = ((win.checked_sub(1)? * stride + kw) as isize - 2 * pad as isize).try_into().ok()?;
        if h == 0 || w == 0 {
            return None;
        }
        let g = Self::forward(h, w, kh, kw, stride, pad)?;
        (g.oh == hin && g.ow == win).then_some(g)
    }

    fn kk(&self) -> usize {
        self.kh * self.kw
    }

    fn plane(&self) -> usize {
        self.h * self.w
    }

    fn out_plane(&self) -> usize {
        self.oh * self.ow
    }
}

/// Unfolds a `[C, h, w]` plane into `[C*kh*kw, oh*ow]` patch columns.
fn im2col<T: Real>(x: &[T], c: usize, g: &ConvGeom, cols: &mut [T]) {
    let ohw = g.out_plane();
    for ci in 0..c {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (ci * g.kh + ki) * g.kw + kj;
                let dst = &mut cols[row * ohw..(row + 1) * ohw];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    for ox in 0..g.ow {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        dst[oy * g.ow + ox] = if iy >= 0 && (iy as usize) < g.h && ix >= 0 && (ix as usize) < g.w {
                            x[(ci * g.h + iy as usize) * g.w + ix as usize]
                        } else {
                            T::zero()
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates columns back onto a `[C, h, w]` plane.
fn col2im<T: Real>(cols: &[T], c: usize, g: &ConvGeom, x: &mut [T]) {
    let ohw = g.out_plane();
    for ci in 0..c {
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (ci * g.kh + ki) * g.kw + kj;
                let src = &cols[row * ohw..(row + 1) * ohw];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ki) as isize - g.pad as isize;
                    if iy < 0 || iy as usize >= g.h {
                        continue;
                    }
                    for ox in 0..g.ow {
                        let ix = (ox * g.stride + kj) as isize - g.pad as isize;
                        if ix >= 0 && (ix as usize) < g.w {
                            x[(ci * g.h + iy as usize) * g.w + ix as usize] += src[oy * g.ow + ox];
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv2d_forward<T: Real>(x: &[T], w: &[T], n: usize, c: usize, o: usize, g: &ConvGeom) -> Vec<T> {
    let ckk = c * g.kk();
    let (hw, ohw) = (g.plane(), g.out_plane());
    let mut cols = vec![T::zero(); ckk * ohw];
    let mut out = vec![T::zero(); n * o * ohw];
    for ni in 0..n {
        im2col(&x[ni * c * hw..(ni + 1) * c * hw], c, g, &mut cols);
        gemm(
            MatRef::new(w, o, ckk, false),
            MatRef::new(&cols, ckk, ohw, false),
            T::zero(),
            &mut out[ni * o * ohw..(ni + 1) * o * ohw],
        );
    }
    out
}

pub(crate) fn conv2d_backward<T: Real>(
    gy: &[T],
    x: &[T],
    w: &[T],
    n: usize,
    c: usize,
    o: usize,
    g: &ConvGeom,
) -> (Vec<T>, Vec<T>) {
    let ckk = c * g.kk();
    let (hw, ohw) = (g.plane(), g.out_plane());
    let mut cols = vec![T::zero(); ckk * ohw];
    let mut gx = vec![T::zero(); n * c * hw];
    let mut gw = vec![T::zero(); o * ckk];
    for ni in 0..n {
        let gyn = &gy[ni * o * ohw..(ni + 1) * o * ohw];
        im2col(&x[ni * c * hw..(ni + 1) * c * hw], c, g, &mut cols);
        gemm(MatRef::new(gyn, o, ohw, false), MatRef::new(&cols, ckk, ohw, true), T::one(), &mut gw);
        gemm(MatRef::new(w, o, ckk, true), MatRef::new(gyn, o, ohw, false), T::zero(), &mut cols);
        col2im(&cols, c, g, &mut gx[ni * c * hw..(ni + 1) * c * hw]);
    }
    (gx, gw)
}

pub(crate) fn conv_transpose2d_forward<T: Real>(
    x: &[T],
    w: &[T],
    n: usize,
    c: usize,
    o: usize,
    g: &ConvGeom,
) -> Vec<T> {
    let okk = o * g.kk();
    let (hw, ohw) = (g.plane(), g.out_plane());
    let mut cols = vec![T::zero(); okk * ohw];
    let mut out = vec![T::zero(); n * o * hw];
    for ni in 0..n {
        gemm(
            MatRef::new(w, c, okk, true),
            MatRef::new(&x[ni * c * ohw..(ni + 1) * c * ohw], c, ohw, false),
            T::zero(),
            &mut cols,
        );
        col2im(&cols, o, g, &mut out[ni * o * hw..(ni + 1) * o * hw]);
    }
    out
}

pub(crate) fn conv_transpose2d_backward<T: Real>(
    gy: &[T],
    x: &[T],
    w: &[T],
    n: usize,
    c: usize,
    o: usize,
    g: &ConvGeom,
) -> (Vec<T>, Vec<T>) {
    let okk = o * g.kk();
    let (hw, ohw) = (g.plane(), g.out_plane());
    let mut cols = vec![T::zero(); okk * ohw];
    let mut gx = vec![T::zero(); n * c * ohw];
    let mut gw = vec![T::zero(); c * okk];
    for ni in 0..n {
        im2col(&gy[ni * o * hw..(ni + 1) * o * hw], o, g, &mut cols);
        gemm(
            MatRef::new(w, c, okk, false),
            MatRef::new(&cols, okk, ohw, false),
            T::zero(),
            &mut gx[ni * c * ohw..(ni + 1) * c * ohw],
        );
        gemm(
            MatRef::new(&x[ni * c * ohw..(ni + 1) * c * ohw], c, ohw, false),
            MatRef::new(&cols, okk, ohw, true),
            T::one(),
            &mut gw,
        );
    }
    (gx, gw)
}
