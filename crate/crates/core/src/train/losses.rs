use log::warn;

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor, Var};

/// Mean of squared differences over all cells.
pub fn mse_loss<'t, T: Real>(s_hat: Var<'t, T>, s: Var<'t, T>) -> Result<Var<'t, T>> {
    if s_hat.shape() != s.shape() {
        return Err(Error::shape("mse_loss", format!("{:?} vs {:?}", s_hat.shape(), s.shape())));
    }
    s_hat.sub(s)?.powf(2.0)?.mean()
}

/// Median Euclidean distance over all pairs of rows of `z`.
pub fn median_pairwise_distance(z: &[Vec<f64>]) -> f64 {
    let mut d = Vec::with_capacity(z.len() * z.len().saturating_sub(1) / 2);
    for i in 0..z.len() {
        for j in i + 1..z.len() {
            d.push(z[i].iter().zip(&z[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt());
        }
    }
    if d.is_empty() {
        return 0.0;
    }
    d.sort_by(f64::total_cmp);
    let m = d.len() / 2;
    if d.len() % 2 == 1 {
        d[m]
    } else {
        0.5 * (d[m - 1] + d[m])
    }
}

/// Kernel widths: each multiplier times the median pairwise distance of the
/// pooled samples (1 when that median is zero).
pub fn rbf_bandwidths(pooled: &[Vec<f64>], multipliers: &[f64]) -> Vec<f64> {
    let med = median_pairwise_distance(pooled);
    let base = if med > 1e-12 { med } else { 1.0 };
    multipliers.iter().map(|m| m * base).collect()
}

fn rows<T: Real>(t: &Tensor<T>) -> Vec<Vec<f64>> {
    let n = t.shape()[0];
    let d = t.len() / n.max(1);
    (0..n).map(|i| t.data()[i * d..(i + 1) * d].iter().map(|v| v.to_f64().unwrap()).collect()).collect()
}

/// Mean of `k(a_i, b_j)` over pairs, excluding `i == j` when `within`.
fn mean_kernel<'t, T: Real>(a: Var<'t, T>, b: Var<'t, T>, bandwidths: &[f64], within: bool) -> Result<Var<'t, T>> {
    let tape = a.tape();
    let (n, m) = (a.shape()[0], b.shape()[0]);
    // ‖a_i − b_j‖² = ‖a_i‖² + ‖b_j‖² − 2 a_i·b_j
    // Outer sums via rank-one products, since `add` broadcasts one side only.
    let na = a.powf(2.0)?.sum_axis(1)?.reshape(&[n, 1])?.matmul(tape.constant(Tensor::ones(&[1, m])))?;
    let nb = tape.constant(Tensor::ones(&[n, 1])).matmul(b.powf(2.0)?.sum_axis(1)?.reshape(&[1, m])?)?;
    // Rounding can leave tiny negative values; exp keeps them harmless, and a
    // relu here would put every diagonal entry on its kink.
    let d2 = na.add(nb)?.sub(a.matmul_nt(b)?.mul_scalar(2.0)?)?;
    let mut k: Option<Var<'t, T>> = None;
    for &bw in bandwidths {
        let term = d2.mul_scalar(-1.0 / (2.0 * bw * bw))?.exp()?;
        k = Some(match k {
            None => term,
            Some(acc) => acc.add(term)?,
        });
    }
    let k = k.ok_or_else(|| Error::InvalidInput("mmd needs at least one bandwidth".into()))?;
    if within {
        let off = Tensor::from_fn(&[n, n], |i| if i / n == i % n { T::zero() } else { T::one() });
        k.mul(tape.constant(off))?.sum()?.mul_scalar(1.0 / (n * (n - 1)) as f64)
    } else {
        k.mean()
    }
}

/// Unbiased squared MMD between the rows of `x` `[n, p]` and `y` `[m, p]`
/// under a sum of RBF kernels with widths `multipliers x median distance`.
///
/// Different utterances (`same_utterance == false`) contribute an exact
/// constant zero. Fewer than two rows on either side also gives zero, with
/// a warning.
pub fn mmd_loss<'t, T: Real>(x: Var<'t, T>, y: Var<'t, T>, same_utterance: bool, multipliers: &[f64]) -> Result<Var<'t, T>> {
    let tape = x.tape();
    let zero = || tape.constant(Tensor::scalar(T::zero()));
    let (sx, sy) = (x.shape(), y.shape());
    if sx.len() != 2 || sy.len() != 2 || sx[1] != sy[1] {
        return Err(Error::shape("mmd_loss", format!("expected [n, p] and [m, p], got {sx:?} and {sy:?}")));
    }
    if !same_utterance {
        return Ok(zero());
    }
    if sx[0] < 2 || sy[0] < 2 {
        warn!("mmd_loss: {} and {} samples per side, need at least 2; using 0", sx[0], sy[0]);
        return Ok(zero());
    }
    let mut pooled = rows(&x.value());
    pooled.extend(rows(&y.value()));
    mmd_with_bandwidths(x, y, &rbf_bandwidths(&pooled, multipliers))
}

/// Unbiased MMD² under a sum of RBF kernels with the given widths, which
/// are treated as constants. Needs at least two rows per side.
pub fn mmd_with_bandwidths<'t, T: Real>(x: Var<'t, T>, y: Var<'t, T>, bandwidths: &[f64]) -> Result<Var<'t, T>> {
    let (sx, sy) = (x.shape(), y.shape());
    if sx.len() != 2 || sy.len() != 2 || sx[1] != sy[1] || sx[0] < 2 || sy[0] < 2 {
        return Err(Error::shape("mmd", format!("expected [n>=2, p] and [m>=2, p], got {sx:?} and {sy:?}")));
    }
    let kxx = mean_kernel(x, x, bandwidths, true)?;
    let kyy = mean_kernel(y, y, bandwidths, true)?;
    let kxy = mean_kernel(x, y, bandwidths, false)?;
    kxx.add(kyy)?.sub(kxy.mul_scalar(2.0)?)
}

/// Plain-loop unbiased MMD² with explicit bandwidths.
pub fn mmd2_unbiased(x: &[Vec<f64>], y: &[Vec<f64>], bandwidths: &[f64]) -> f64 {
    let k = |a: &[f64], b: &[f64]| {
        let d2: f64 = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum();
        bandwidths.iter().map(|bw| (-d2 / (2.0 * bw * bw)).exp()).sum::<f64>()
    };
    let within = |s: &[Vec<f64>]| {
        let n = s.len();
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    acc += k(&s[i], &s[j]);
                }
            }
        }
        acc / (n * (n - 1)) as f64
    };
    let mut cross = 0.0;
    for a in x {
        for b in y {
            cross += k(a, b);
        }
    }
    within(x) + within(y) - 2.0 * cross / (x.len() * y.len()) as f64
}

/// Generator objective for the adversarial term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum GeneratorLoss {
    /// `−log D(fake)`.
    #[default]
    NonSaturating,
    /// `−log(1 − D(fake))`, the formula as literally written; minimising
    /// it pushes fakes away from the real class.
    Literal,
}

/// `(loss_D, loss_T)` from critic logits. `fake_logit_detached` must come
/// from a detached fake so `loss_D` does not reach the translator.
///
/// With `D = sigmoid(z)`: `−log D = softplus(−z)` and
/// `−log(1 − D) = softplus(z)`.
pub fn gan_losses<'t, T: Real>(
    real_logit: Var<'t, T>,
    fake_logit_detached: Var<'t, T>,
    fake_logit: Var<'t, T>,
    kind: GeneratorLoss,
) -> Result<(Var<'t, T>, Var<'t, T>)> {
    let loss_d = real_logit.neg()?.softplus()?.add(fake_logit_detached.softplus()?)?;
    let loss_t = match kind {
        GeneratorLoss::NonSaturating => fake_logit.neg()?.softplus()?,
        GeneratorLoss::Literal => fake_logit.softplus()?,
    };
    Ok((loss_d, loss_t))
}

/// `L_MSE + β·L_MMD + λ·L_GAN`.
pub fn total_translator_loss<'t, T: Real>(
    mse: Var<'t, T>,
    mmd: Var<'t, T>,
    gan: Var<'t, T>,
    beta: f64,
    lambda: f64,
) -> Result<Var<'t, T>> {
    mse.add(mmd.mul_scalar(beta)?)?.add(gan.mul_scalar(lambda)?)
}
