//! Finite-difference checks of every autodiff primitive and of the full
//! training objectives.
//!
//! Run with `cargo run --release --example gradient_check [model]`.

use plastic_speech::tensor::gradcheck::check_primitives;
use plastic_speech::train::check_model_gradients;

fn main() -> plastic_speech::Result<()> {
    for c in check_primitives(0, 3)? {
        println!("{:<22} {:.2e}", c.name, c.max_relative_error);
    }
    if std::env::args().nth(1).as_deref() == Some("model") {
        for (name, r) in check_model_gradients(0)? {
            println!("{name:<22} {:.2e} over {} coordinates", r.max_relative_error, r.coords_checked);
        }
    }
    Ok(())
}
