//! Central finite-difference verification of reverse-mode gradients.

use rand::seq::index::sample;

use super::{Bound, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use rand::Rng as _;

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    pub eps: f64,
    /// Coordinates checked per parameter tensor; `None` checks all of them.
    pub max_coords_per_param: Option<usize>,
    pub seed: u64,
    /// Coordinates where both gradients are smaller than this are counted
    /// as unresolved instead of compared: the difference quotient's
    /// rounding noise is of the same order there.
    pub min_magnitude: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions { eps: 1e-5, max_coords_per_param: None, seed: 0, min_magnitude: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Worst {
    pub param: String,
    pub index: usize,
    pub autodiff: f64,
    pub finite_diff: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub coords_checked: usize,
    /// Coordinates whose stencil crossed a relu kink.
    pub coords_skipped: usize,
    /// Coordinates below [`GradCheckOptions::min_magnitude`].
    pub coords_unresolved: usize,
    pub worst: Option<Worst>,
}

/// `|a - b| / max(1e-8, |a| + |b|)`.
pub fn relative_error(autodiff: f64, finite_diff: f64) -> f64 {
    (autodiff - finite_diff).abs() / (autodiff.abs() + finite_diff.abs()).max(1e-8)
}

fn evaluate<F>(f: &F, store: &ParamStore<f64>) -> Result<(f64, u64)>
where
    F: for<'t> Fn(&'t Tape<f64>, &Bound<'t, f64>) -> Result<Var<'t, f64>>,
{
    let tape = Tape::new();
    let bound = store.bind_frozen(&tape);
    let out = f(&tape, &bound)?;
    let v = out.value();
    if v.len() != 1 {
        return Err(Error::shape("grad_check", format!("objective must be scalar, got {:?}", v.shape())));
    }
    Ok((v.item(), tape.branch_signature()))
}

/// Compares autodiff gradients of a scalar objective over the parameters in
/// `store` against central differences with step `eps`.
pub fn grad_check_store<F>(f: F, store: &ParamStore<f64>, opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&'t Tape<f64>, &Bound<'t, f64>) -> Result<Var<'t, f64>>,
{
    let analytic: Vec<Tensor<f64>> = {
        let tape = Tape::new();
        let bound = store.bind(&tape);
        let loss = f(&tape, &bound)?;
        let grads = tape.backward(loss)?;
        store.ids().map(|id| grads.get_or_zeros(bound.get(id))).collect()
    };
    let base = evaluate(&f, store)?.0;
    let again = evaluate(&f, store)?.0;
    if base.to_bits() != again.to_bits() {
        return Err(Error::Numerical(format!(
            "objective is non-deterministic: {base:e} then {again:e}"
        )));
    }

    let mut rng = rng::stream(opts.seed, 0x6772_6164);
    let mut work = store.clone();
    let mut report = GradCheckReport { max_relative_error: 0.0, coords_checked: 0, coords_skipped: 0, coords_unresolved: 0, worst: None };
    for (id, ad) in store.ids().zip(&analytic) {
        let n = ad.len();
        let coords: Vec<usize> = match opts.max_coords_per_param {
            Some(k) if k < n => {
                // Half the budget goes to coordinates the objective actually
                // touches, the rest is uniform over the tensor.
                let touched: Vec<usize> = (0..n).filter(|&i| ad.data()[i] != 0.0).collect();
                let k_touched = (k / 2).min(touched.len());
                let mut picked: Vec<usize> =
                    sample(&mut rng, touched.len(), k_touched).into_iter().map(|i| touched[i]).collect();
                picked.extend(sample(&mut rng, n, k - k_touched).into_iter());
                picked.sort_unstable();
                picked.dedup();
                picked
            }
            _ => (0..n).collect(),
        };
        for i in coords {
            let orig = work.get(id).value.data()[i];
            work.get_mut(id).value.data_mut()[i] = orig + opts.eps;
            let (plus, sig_plus) = evaluate(&f, &work)?;
            work.get_mut(id).value.data_mut()[i] = orig - opts.eps;
            let (minus, sig_minus) = evaluate(&f, &work)?;
            work.get_mut(id).value.data_mut()[i] = orig;
            if sig_plus != sig_minus {
                // A relu changes sign inside the stencil; the difference
                // quotient does not estimate the derivative there.
                report.coords_skipped += 1;
                continue;
            }
            let fd = (plus - minus) / (2.0 * opts.eps);
            let a = ad.data()[i];
            if a.abs() < opts.min_magnitude && fd.abs() < opts.min_magnitude {
                report.coords_unresolved += 1;
                continue;
            }
            let err = relative_error(a, fd);
            if !err.is_finite() {
                return Err(Error::Numerical(format!("non-finite gradient at {}[{i}]", store.get(id).name)));
            }
            report.coords_checked += 1;
            if report.worst.is_none() || err > report.max_relative_error {
                report.max_relative_error = err;
                report.worst = Some(Worst {
                    param: store.get(id).name.clone(),
                    index: i,
                    autodiff: a,
                    finite_diff: fd,
                });
            }
        }
    }
    Ok(report)
}

/// Moves near-zero parameters (biases, tables, token embeddings at their
/// initial values) to `U(-scale, scale)`. At initialization many of these
/// sit where their gradients vanish by symmetry, below what a finite
/// difference can resolve.
pub fn generic_point(store: &mut ParamStore<f64>, seed: u64, scale: f64) {
    let mut rng = rng::stream(seed, 0x6765_6e65);
    for p in store.iter_mut() {
        if p.value.data().iter().all(|v| v.abs() < 0.1) {
            p.value.data_mut().iter_mut().for_each(|v| *v = rng.gen_range(-scale..scale));
        }
    }
}

/// [`grad_check_store`] over a plain list of tensors.
pub fn grad_check<F>(f: F, params: &[Tensor<f64>], opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Result<Var<'t, f64>>,
{
    let mut store = ParamStore::new();
    let ids: Vec<_> = params.iter().enumerate().map(|(i, p)| store.add(format!("p{i}"), p.clone())).collect();
    grad_check_store(
        |tape, bound| {
            let vars: Vec<_> = ids.iter().map(|&id| bound.get(id)).collect();
            f(tape, &vars)
        },
        &store,
        opts,
    )
}


fn rand_tensor(rng: &mut Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng::uniform(rng, lo, hi))
}

/// Values bounded away from zero (for kinks and singularities).
fn rand_signed_away(rng: &mut Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| {
        let m = rng::uniform(rng, 0.1, 1.5);
        if rng.gen_bool(0.5) { m } else { -m }
    })
}

fn dims(rng: &mut Rng, rank: usize, lo: usize) -> Vec<usize> {
    (0..rank).map(|_| rng.gen_range(lo..=8)).collect()
}

/// Gradient check of `sum(g(inputs) * W)` for a random fixed weighting `W`.
fn check_case<G>(rng: &mut Rng, inputs: Vec<Tensor<f64>>, g: G) -> Result<f64>
where
    G: for<'t> Fn(&[Var<'t, f64>]) -> Result<Var<'t, f64>>,
{
    let shape = {
        let tape = Tape::new();
        let vars: Vec<_> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
        let out = g(&vars)?;
        out.shape()
    };
    let w = rand_tensor(rng, &shape, -1.0, 1.0);
    let report = grad_check(
        |tape, v| g(v)?.mul(tape.constant(w.clone()))?.sum(),
        &inputs,
        &GradCheckOptions { seed: rng.gen(), ..Default::default() },
    )?;
    Ok(report.max_relative_error)
}

type Case = fn(&mut Rng) -> Result<f64>;

fn primitive_cases() -> Vec<(&'static str, Case)> {
    vec![
        ("add", |r| {
            let s = dims(r, 2, 1);
            let (a, b) = (rand_tensor(r, &s, -1.0, 1.0), rand_tensor(r, &s, -1.0, 1.0));
            check_case(r, vec![a, b], |v| v[0].add(v[1]))
        }),
        ("add_broadcast", |r| {
            let s = dims(r, 3, 1);
            let a = rand_tensor(r, &s, -1.0, 1.0);
            let b = rand_tensor(r, &[1, s[1], 1], -1.0, 1.0);
            check_case(r, vec![a, b], |v| v[0].add(v[1]))
        }),
        ("sub", |r| {
            let s = dims(r, 2, 1);
            let (a, b) = (rand_tensor(r, &s, -1.0, 1.0), rand_tensor(r, &[1, s[1]], -1.0, 1.0));
            check_case(r, vec![a, b], |v| v[0].sub(v[1]))
        }),
        ("mul", |r| {
            let s = dims(r, 2, 1);
            let (a, b) = (rand_tensor(r, &s, -1.0, 1.0), rand_tensor(r, &[s[0], 1], -1.0, 1.0));
            check_case(r, vec![a, b], |v| v[0].mul(v[1]))
        }),
        ("div", |r| {
            let s = dims(r, 2, 1);
            let (a, b) = (rand_tensor(r, &s, -1.0, 1.0), rand_tensor(r, &s, 0.5, 2.0));
            check_case(r, vec![a, b], |v| v[0].div(v[1]))
        }),
        ("scalar_ops", |r| {
            let s = dims(r, 2, 1);
            let a = rand_tensor(r, &s, -1.0, 1.0);
            check_case(r, vec![a], |v| v[0].mul_scalar(-1.7)?.add_scalar(0.3)?.neg())
        }),
        ("powf", |r| {
            let s = dims(r, 2, 1);
            let a = rand_tensor(r, &s, 0.5, 2.0);
            check_case(r, vec![a], |v| v[0].powf(1.5))
        }),
        ("exp", |r| {
            let s = dims(r, 2, 1);
            let a = rand_tensor(r, &s, -1.0, 1.0);
            check_case(r, vec![a], |v| v[0].exp())
        }),
        ("log", |r| {
            let s = dims(r, 2, 1);
            let a = rand_tensor(r, &s, 0.5, 2.0);
            check_case(r, vec![a], |v| v[0].log())
        }),
        ("sqrt", |r| {
            let s = dims(r, 2, 1);
            let a = rand_tensor(r, &s, 0.5, 2.0);
            check_case(r, vec![a], |v| v[0].sqrt())
        }),
        ("sigmoid", |r| {
            let s = dims(r, 2, 1);
            let a = rand_tensor(r, &s, -3.0, 3.0);
            check_case(r, vec![a], |v| v[0].sigmoid())
        }),
        ("relu", |r| {
            let s = dims(r, 2, 1);
            let a = rand_signed_away(r, &s);
            check_case(r, vec![a], |v| v[0].relu())
        }),
        ("softplus", |r| {
            let s = dims(r, 2, 1);
            let a = rand_tensor(r, &s, -3.0, 3.0);
            check_case(r, vec![a], |v| v[0].softplus())
        }),
        ("matmul", |r| {
            let d = dims(r, 3, 1);
            let (a, b) = (rand_tensor(r, &[d[0], d[1]], -1.0, 1.0), rand_tensor(r, &[d[1], d[2]], -1.0, 1.0));
            check_case(r, vec![a, b], |v| v[0].matmul(v[1]))
        }),
        ("matmul_nt", |r| {
            let d = dims(r, 3, 1);
            let (a, b) = (rand_tensor(r, &[d[0], d[1]], -1.0, 1.0), rand_tensor(r, &[d[2], d[1]], -1.0, 1.0));
            check_case(r, vec![a, b], |v| v[0].matmul_nt(v[1]))
        }),
        ("matmul_tn", |r| {
            let d = dims(r, 3, 1);
            let (a, b) = (rand_tensor(r, &[d[1], d[0]], -1.0, 1.0), rand_tensor(r, &[d[1], d[2]], -1.0, 1.0));
            check_case(r, vec![a, b], |v| v[0].matmul_tn(v[1]))
        }),
        ("bmm", |r| {
            let d = dims(r, 4, 1);
            let a = rand_tensor(r, &[d[0], d[1], d[2]], -1.0, 1.0);
            let b = rand_tensor(r, &[d[0], d[2], d[3]], -1.0, 1.0);
            check_case(r, vec![a, b], |v| v[0].bmm(v[1]))
        }),
        ("bmm_nt", |r| {
            let d = dims(r, 4, 1);
            let a = rand_tensor(r, &[d[0], d[1], d[2]], -1.0, 1.0);
            let b = rand_tensor(r, &[d[0], d[3], d[2]], -1.0, 1.0);
            check_case(r, vec![a, b], |v| v[0].matmul_nt(v[1]))
        }),
        ("transpose", |r| {
            let s = dims(r, 3, 1);
            let a = rand_tensor(r, &s, -1.0, 1.0);
            check_case(r, vec![a], |v| v[0].transpose())
        }),
        ("permute", |r| {
            let s = dims(r, 3, 1);
            let a = rand_tensor(r, &s, -1.0, 1.0);
            check_case(r, vec![a], |v| v[0].permute(&[2, 0, 1]))
        }),
        ("reshape", |r| {
            let s = dims(r, 2, 1);
            let a = rand_tensor(r, &s, -1.0, 1.0);
            check_case(r, vec![a], move |v| v[0].reshape(&[s[1], s[0]]))
        }),
        ("softmax", |r| {
            let s = dims(r, 3, 1);
            let axis = r.gen_range(0..3);
            let a = rand_tensor(r, &s, -2.0, 2.0);
            check_case(r, vec![a], move |v| v[0].softmax(axis))
        }),
        ("sum", |r| {
            let s = dims(r, 2, 1);
            let a = rand_tensor(r, &s, -1.0, 1.0);
            check_case(r, vec![a], |v| v[0].sum())
        }),
        ("mean", |r| {
            let s = dims(r, 2, 1);
            let a = rand_tensor(r, &s, -1.0, 1.0);
            check_case(r, vec![a], |v| v[0].mean())
        }),
        ("sum_axis", |r| {
            let s = dims(r, 3, 1);
            let axis = r.gen_range(0..3);
            let a = rand_tensor(r, &s, -1.0, 1.0);
            check_case(r, vec![a], move |v| v[0].sum_axis(axis))
        }),
        ("mean_axis", |r| {
            let s = dims(r, 3, 1);
            let axis = r.gen_range(0..3);
            let a = rand_tensor(r, &s, -1.0, 1.0);
            check_case(r, vec![a], move |v| v[0].mean_axis(axis))
        }),
        ("concat", |r| {
            let s = dims(r, 3, 1);
            let axis = r.gen_range(0..3);
            let mut s2 = s.clone();
            s2[axis] = r.gen_range(1..=8);
            let (a, b) = (rand_tensor(r, &s, -1.0, 1.0), rand_tensor(r, &s2, -1.0, 1.0));
            check_case(r, vec![a, b], move |v| Var::concat(&[v[0], v[1]], axis))
        }),
        ("slice", |r| {
            let s = dims(r, 3, 2);
            let axis = r.gen_range(0..3);
            let start = r.gen_range(0..s[axis] - 1);
            let end = r.gen_range(start + 1..=s[axis]);
            let a = rand_tensor(r, &s, -1.0, 1.0);
            check_case(r, vec![a], move |v| v[0].slice(axis, start, end))
        }),
        ("gather", |r| {
            let s = dims(r, 2, 1);
            let n = s[0] * s[1];
            let out = dims(r, 2, 1);
            let idx: std::rc::Rc<Vec<usize>> = std::rc::Rc::new((0..out[0] * out[1]).map(|_| r.gen_range(0..n)).collect());
            let a = rand_tensor(r, &s, -1.0, 1.0);
            check_case(r, vec![a], move |v| v[0].gather(idx.clone(), &out))
        }),
        ("avg_pool_bins", |r| {
            let s = dims(r, 3, 1);
            let (bx, by) = (r.gen_range(1..=8), r.gen_range(1..=8));
            let a = rand_tensor(r, &s, -1.0, 1.0);
            check_case(r, vec![a], move |v| v[0].avg_pool_bins(bx, by))
        }),
        ("layer_norm", |r| {
            let s = dims(r, 2, 2);
            let x = rand_tensor(r, &s, -2.0, 2.0);
            let g = rand_tensor(r, &[s[1]], 0.5, 1.5);
            let b = rand_tensor(r, &[s[1]], -0.5, 0.5);
            check_case(r, vec![x, g, b], |v| v[0].layer_norm(v[1], v[2], 1e-5))
        }),
        ("conv2d", |r| {
            let (n, c, o) = (r.gen_range(1..=2), r.gen_range(1..=3), r.gen_range(1..=3));
            let (h, w) = (r.gen_range(3..=8), r.gen_range(3..=8));
            let (k, stride, pad) = (r.gen_range(1..=3), r.gen_range(1..=2), r.gen_range(0..=1));
            let x = rand_tensor(r, &[n, c, h, w], -1.0, 1.0);
            let wt = rand_tensor(r, &[o, c, k, k], -1.0, 1.0);
            check_case(r, vec![x, wt], move |v| v[0].conv2d(v[1], stride, pad))
        }),
        ("conv_transpose2d", |r| {
            let (n, c, o) = (r.gen_range(1..=2), r.gen_range(1..=3), r.gen_range(1..=3));
            let (h, w) = (r.gen_range(2..=5), r.gen_range(2..=5));
            let (k, stride, pad) = (r.gen_range(2..=4), r.gen_range(1..=2), r.gen_range(0..=1));
            let x = rand_tensor(r, &[n, c, h, w], -1.0, 1.0);
            let wt = rand_tensor(r, &[c, o, k, k], -1.0, 1.0);
            check_case(r, vec![x, wt], move |v| v[0].conv_transpose2d(v[1], stride, pad))
        }),
    ]
}

/// Worst relative gradient error of one primitive over random instances.
#[derive(Clone, Debug, PartialEq)]
pub struct PrimitiveCheck {
    pub name: &'static str,
    pub instances: usize,
    pub max_relative_error: f64,
}

/// Gradient-checks every primitive on `instances` random inputs with at
/// most 8 elements per axis.
pub fn check_primitives(seed: u64, instances: usize) -> Result<Vec<PrimitiveCheck>> {
    let mut rng = rng::stream(seed, 0x7072_696d);
    primitive_cases()
        .into_iter()
        .map(|(name, case)| {
            let mut worst = 0.0f64;
            for _ in 0..instances {
                worst = worst.max(case(&mut rng)?);
            }
            Ok(PrimitiveCheck { name, instances, max_relative_error: worst })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_sum_matches_analytic() {
        let x = Tensor::new(vec![4], vec![0.3, -1.2, 2.0, 0.7]).unwrap();
        let r = grad_check(|_, v| v[0].mul(v[0])?.sum(), &[x], &GradCheckOptions::default()).unwrap();
        assert!(r.max_relative_error < 1e-6, "{r:?}");
        assert_eq!(r.coords_checked, 4);
    }

    #[test]
    fn constant_objective_has_zero_error() {
        let x = Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap();
        let r = grad_check(
            |t, _| Ok(t.constant(Tensor::scalar(4.0))),
            &[x],
            &GradCheckOptions::default(),
        )
        .unwrap();
        assert_eq!(r.max_relative_error, 0.0);
    }

    #[test]
    fn detects_nondeterminism() {
        use std::cell::Cell;
        let calls = Cell::new(0.0);
        let x = Tensor::new(vec![1], vec![1.0]).unwrap();
        let res = grad_check(
            |t, v| {
                calls.set(calls.get() + 1.0);
                v[0].add(t.constant(Tensor::new(vec![1], vec![calls.get()]).unwrap()))?.sum()
            },
            &[x],
            &GradCheckOptions::default(),
        );
        assert!(matches!(res, Err(Error::Numerical(_))));
    }
}
