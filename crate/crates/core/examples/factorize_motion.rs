//! Factorize a motion-feature matrix into building blocks `W` and a sparse,
//! graph-smooth weighting map `H`.
//!
//! Run with `cargo run --release --example factorize_motion`.

use ndarray::Array2;
use plastic_speech::nmf::{build_knn_graph, nmf_factorize, MotionFeatureMatrix, NmfConfig};
use plastic_speech::rng;

fn main() -> plastic_speech::Result<()> {
    // 24 features over 2,000 frames built from 3 hidden sources.
    let mut r = rng::seeded(1);
    let w = Array2::from_shape_simple_fn((24, 3), || rng::uniform(&mut r, 0.0, 1.0));
    let h = Array2::from_shape_fn((3, 2000), |(k, j)| (1.0 + (j as f64 / 150.0 * (k + 1) as f64).sin()) / 2.0);
    let x = MotionFeatureMatrix::new(w.dot(&h) + 0.01)?;

    let graph = build_knn_graph(x.view(), 5)?;
    let config = NmfConfig { rank: 3, max_iters: 150, ..NmfConfig::default() };
    let mut f = nmf_factorize(&x, &config, &graph)?;
    f.sort_rows_by_centroid();

    let trace = &f.objective_trace;
    println!("graph edges: {}", graph.num_edges());
    println!("objective {:.4} -> {:.4} in {} iterations", trace[0], trace[trace.len() - 1], trace.len() - 1);
    println!("W {:?}, H {:?}", f.w.dim(), f.h.dim());
    let residual = (&x.view() - &f.w.dot(&f.h)).mapv(|v| v * v).sum().sqrt() / x.view().mapv(|v| v * v).sum().sqrt();
    println!("relative residual {residual:.4}");
    Ok(())
}
