//! Windowed attention against dense softmax attention, and the
//! directional relative position bias.
//!
//! Run with `cargo run --release --example attention_oracles`.

use plastic_speech::model::{dense_attention, local_attention, rel_bias};
use plastic_speech::rng;
use plastic_speech::tensor::{Tape, Tensor};

fn main() -> plastic_speech::Result<()> {
    let (nx, ny, d) = (4, 8, 5);
    let n = nx * ny;
    let mut r = rng::seeded(3);
    let mut rand = |shape: &[usize]| Tensor::<f64>::from_fn(shape, |_| rng::uniform(&mut r, -1.0, 1.0));
    let (q, k, v) = (rand(&[n, d]), rand(&[n, d]), rand(&[n, d]));
    let max_grid = (nx, ny);
    let table_shape = [2 * nx - 1, 2 * ny - 1];

    let tape = Tape::new();
    let (qv, kv, vv) = (tape.constant(q.clone()), tape.constant(k.clone()), tape.constant(v.clone()));
    let zero = tape.constant(Tensor::zeros(&table_shape));
    let dense = dense_attention(qv, kv, vv, None)?.value().clone();
    for window in [4, 16, n] {
        let local = local_attention(qv, kv, vv, zero, (nx, ny), max_grid, window)?.value().clone();
        let diff = local.data().iter().zip(dense.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        println!("window {window:>2}: max |local - dense| = {diff:.2e}");
    }

    // A table with distinct entries gives R[a, b] != R[b, a].
    let table = Tensor::<f64>::from_fn(&table_shape, |i| i as f64);
    let coords: Vec<(usize, usize)> = (0..4).flat_map(|x| (0..4).map(move |y| (x, y))).collect();
    let bias = rel_bias(&coords, &coords, &table)?;
    let m = coords.len();
    let asymmetric = (0..m).flat_map(|a| (0..m).map(move |b| (a, b))).filter(|(a, b)| a != b).all(|(a, b)| bias.data()[a * m + b] != bias.data()[b * m + a]);
    println!("4x4 grid: bias is directional for every off-diagonal pair: {asymmetric}");
    Ok(())
}
