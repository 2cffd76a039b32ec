use std::rc::Rc;

use super::gradcheck::{check_primitives, grad_check, GradCheckOptions};
use super::*;

fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
    Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
}

#[test]
fn softmax_of_equal_logits_is_uniform() {
    let tape = Tape::<f64>::new();
    let x = tape.constant(Tensor::zeros(&[3]));
    let y = x.softmax(0).unwrap();
    for &v in y.value().data() {
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }
}

#[test]
fn identity_matmul() {
    let tape = Tape::<f64>::new();
    let eye = tape.constant(t(&[3, 3], &[1., 0., 0., 0., 1., 0., 0., 0., 1.]));
    let a = t(&[3, 2], &[1., 2., 3., 4., 5., 6.]);
    let out = eye.matmul(tape.constant(a.clone())).unwrap();
    assert_eq!(*out.value(), a);
}

#[test]
fn sigmoid_at_zero() {
    let tape = Tape::<f64>::new();
    let y = tape.constant(Tensor::scalar(0.0)).sigmoid().unwrap();
    assert_eq!(y.item(), 0.5);
}

#[test]
fn sum_gradient_is_ones() {
    let tape = Tape::<f64>::new();
    let x = tape.variable(Tensor::zeros(&[2, 2]));
    let g = tape.backward(x.sum().unwrap()).unwrap();
    assert_eq!(g.get(x).unwrap().data(), &[1.0; 4]);
}

#[test]
fn square_gradient() {
    let tape = Tape::<f64>::new();
    let x = tape.variable(t(&[1], &[3.0]));
    let loss = x.mul(x).unwrap().sum().unwrap();
    let g = tape.backward(loss).unwrap();
    assert_eq!(g.get(x).unwrap().data(), &[6.0]);
}

#[test]
fn sum_of_softmax_has_zero_gradient() {
    let x0 = t(&[5], &[0.3, -1.0, 2.0, 0.1, 0.7]);
    let tape = Tape::new();
    let x = tape.variable(x0.clone());
    let g = tape.backward(x.softmax(0).unwrap().sum().unwrap()).unwrap();
    // Finite-difference oracle: the objective is constant.
    let f = |v: &Tensor<f64>| {
        let tape = Tape::new();
        tape.constant(v.clone()).softmax(0).unwrap().sum().unwrap().item()
    };
    for i in 0..5 {
        let mut p = x0.clone();
        p.data_mut()[i] += 1e-5;
        let mut m = x0.clone();
        m.data_mut()[i] -= 1e-5;
        let fd = (f(&p) - f(&m)) / 2e-5;
        assert!(fd.abs() < 1e-9);
        assert!(g.get(x).unwrap().data()[i].abs() < 1e-12);
    }
}

#[test]
fn backward_rejects_non_scalar() {
    let tape = Tape::<f64>::new();
    let x = tape.variable(Tensor::zeros(&[2]));
    assert!(matches!(tape.backward(x), Err(Error::Shape { .. })));
}

#[test]
fn shape_mismatch_names_op_and_shapes() {
    let tape = Tape::<f64>::new();
    let a = tape.constant(Tensor::zeros(&[2, 3]));
    let b = tape.constant(Tensor::zeros(&[4, 5]));
    let err = a.matmul(b).unwrap_err().to_string();
    assert!(err.contains("matmul") && err.contains("[2, 3]") && err.contains("[4, 5]"), "{err}");
    let err = a.add(b).unwrap_err().to_string();
    assert!(err.contains("add"), "{err}");
}

#[test]
fn strict_mode_rejects_non_finite() {
    let tape = Tape::<f64>::strict();
    let a = tape.constant(t(&[2], &[1.0, f64::NAN]));
    assert!(matches!(a.exp(), Err(Error::NonFinite { op: "exp" })));
    let lax = Tape::<f64>::new();
    assert!(lax.constant(t(&[1], &[f64::NAN])).exp().is_ok());
}

#[test]
fn repeated_backward_accumulates_in_store() {
    let mut store = ParamStore::<f64>::new();
    let id = store.add("x", t(&[2], &[1.0, -2.0]));
    for _ in 0..2 {
        let tape = Tape::new();
        let b = store.bind(&tape);
        let x = b.get(id);
        let loss = x.mul(x).unwrap().sum().unwrap();
        let g = tape.backward(loss).unwrap();
        store.accumulate(&b, &g);
    }
    assert_eq!(store.get(id).grad.data(), &[4.0, -8.0]);
    store.zero_grad();
    assert_eq!(store.get(id).grad.data(), &[0.0, 0.0]);
}

#[test]
fn fan_out_sums_both_paths() {
    // y = exp(x) * sin-free mix: x feeds two consumers.
    let x0 = t(&[3], &[0.2, -0.4, 1.1]);
    let r = grad_check(
        |_, v| {
            let a = v[0].exp()?;
            let b = v[0].mul_scalar(3.0)?;
            a.mul(b)?.add(v[0])?.sum()
        },
        &[x0],
        &GradCheckOptions::default(),
    )
    .unwrap();
    assert!(r.max_relative_error < 1e-8, "{r:?}");
}

#[test]
fn every_primitive_passes_gradient_check() {
    for c in check_primitives(7, 5).unwrap() {
        assert!(c.max_relative_error < 1e-4, "{} {}", c.name, c.max_relative_error);
    }
}

#[test]
fn deterministic_replay() {
    let run = || {
        let mut rng = crate::rng::seeded(3);
        let a: Tensor<f64> = params::init_fan_in(&mut rng, &[6, 7], 7);
        let b: Tensor<f64> = params::init_fan_in(&mut rng, &[7, 5], 5);
        let tape = Tape::new();
        let y = tape.constant(a).matmul(tape.constant(b)).unwrap().softmax(1).unwrap();
        let v = y.value().clone();
        v
    };
    let (x, y) = (run(), run());
    assert!(x.data().iter().zip(y.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn conv_transpose_doubles_resolution() {
    let tape = Tape::<f64>::new();
    let x = tape.constant(Tensor::ones(&[1, 2, 8, 8]));
    let w = tape.constant(Tensor::ones(&[2, 3, 4, 4]));
    let y = x.conv_transpose2d(w, 2, 1).unwrap();
    assert_eq!(y.shape(), vec![1, 3, 16, 16]);
    let z = y.conv2d(tape.constant(Tensor::ones(&[5, 3, 4, 4])), 2, 1).unwrap();
    assert_eq!(z.shape(), vec![1, 5, 8, 8]);
}

#[test]
fn conv2d_matches_direct_sum() {
    let mut rng = crate::rng::seeded(11);
    let x: Tensor<f64> = params::init_fan_in(&mut rng, &[1, 2, 5, 6], 1);
    let w: Tensor<f64> = params::init_fan_in(&mut rng, &[3, 2, 3, 3], 1);
    let tape = Tape::new();
    let y = tape.constant(x.clone()).conv2d(tape.constant(w.clone()), 2, 1).unwrap();
    let yv = y.value();
    let (oh, ow) = (yv.shape()[2], yv.shape()[3]);
    for o in 0..3 {
        for i in 0..oh {
            for j in 0..ow {
                let mut s = 0.0;
                for c in 0..2 {
                    for ki in 0..3 {
                        for kj in 0..3 {
                            let (yy, xx) = ((i * 2 + ki) as isize - 1, (j * 2 + kj) as isize - 1);
                            if yy >= 0 && yy < 5 && xx >= 0 && xx < 6 {
                                s += x.data()[(c * 5 + yy as usize) * 6 + xx as usize]
                                    * w.data()[((o * 2 + c) * 3 + ki) * 3 + kj];
                            }
                        }
                    }
                }
                assert!((s - yv.data()[(o * oh + i) * ow + j]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn gather_scatters_repeated_indices() {
    let tape = Tape::<f64>::new();
    let x = tape.variable(t(&[3], &[1.0, 2.0, 3.0]));
    let y = x.gather(Rc::new(vec![2, 2, 0]), &[3]).unwrap();
    assert_eq!(y.value().data(), &[3.0, 3.0, 1.0]);
    let g = tape.backward(y.sum().unwrap()).unwrap();
    assert_eq!(g.get(x).unwrap().data(), &[1.0, 0.0, 2.0]);
}

#[test]
fn f32_engine_runs() {
    let tape = Tape::<f32>::new();
    let a = tape.variable(Tensor::from_f64(&[2, 2], &[1.0, 2.0, 3.0, 4.0]).unwrap());
    let loss = a.matmul(a).unwrap().sum().unwrap();
    let g = tape.backward(loss).unwrap();
    assert_eq!(g.get(a).unwrap().shape(), &[2, 2]);
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn softmax_rows_sum_to_one(v in proptest::collection::vec(-20.0f64..20.0, 1..40)) {
            let n = v.len();
            let tape = Tape::new();
            let y = tape.constant(Tensor::new(vec![n], v).unwrap()).softmax(0).unwrap();
            let s: f64 = y.value().data().iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-12);
        }

        #[test]
        fn permute_round_trips(a in 1usize..6, b in 1usize..6, c in 1usize..6) {
            let x = Tensor::from_fn(&[a, b, c], |i| i as f64);
            let tape = Tape::new();
            let y = tape.constant(x.clone()).permute(&[2, 0, 1]).unwrap().permute(&[1, 2, 0]).unwrap();
            prop_assert_eq!(&*y.value(), &x);
        }
    }
}
