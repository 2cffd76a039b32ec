//! Finite-difference checks of the full training objectives, run by
//! `gradcheck --scope model`.

use super::losses::{gan_losses, mmd_with_bandwidths, rbf_bandwidths, GeneratorLoss};
use crate::error::Result;
use crate::model::{Critic, ModelConfig, Translator};
use crate::rng;
use crate::tensor::gradcheck::{generic_point, grad_check_store, GradCheckOptions, GradCheckReport};
use crate::tensor::{Bound, Tape, Tensor, Var};

fn rand_tensor(shape: &[usize], seed: u64, lo: f64, hi: f64) -> Tensor<f64> {
    let mut r = rng::seeded(seed);
    Tensor::from_fn(shape, |_| rng::uniform(&mut r, lo, hi))
}

/// Utterance channels of the latent as `cells x channels` points.
fn points<'t>(t: &Translator, tape: &'t Tape<f64>, b: &Bound<'t, f64>, h: &Tensor<f64>) -> Result<Var<'t, f64>> {
    let f = t.forward(tape, b, h)?.f_u;
    let s = f.shape();
    f.reshape(&[s[0] * s[1], s[2]])
}

/// Checks, in 64-bit, the gradient of each training objective with respect
/// to the parameters it updates:
///
/// * `translator_mse`: MSE of the full translator on a `20 x 100` input;
/// * `translator_mmd`: latent MMD between two inputs (bandwidths pinned);
/// * `translator_gan`: generator loss through a frozen critic;
/// * `critic_bce`: critic loss on a real and a detached fake.
///
/// Parameters are first moved to a generic point (see
/// [`generic_point`]) so no gradient is structurally tiny.
pub fn check_model_gradients(seed: u64) -> Result<Vec<(&'static str, GradCheckReport)>> {
    let cfg = ModelConfig::default();
    let (t, mut t_store) = Translator::init::<f64>(&cfg, seed)?;
    generic_point(&mut t_store, seed, 1.0);
    let (c, mut c_store) = Critic::init::<f64>(&cfg, seed)?;
    generic_point(&mut c_store, seed ^ 1, 0.1);
    let h1 = rand_tensor(&[cfg.rows, 100], seed ^ 2, 0.0, 1.0);
    let h2 = rand_tensor(&[cfg.rows, 120], seed ^ 3, 0.0, 1.0);
    let target = rand_tensor(&[64, 64], seed ^ 4, 0.0, 1.0);
    let opts = GradCheckOptions { max_coords_per_param: Some(4), min_magnitude: 1e-7, seed, ..GradCheckOptions::default() };

    let mut out = Vec::new();
    out.push((
        "translator_mse",
        grad_check_store(|tape, b| t.forward(tape, b, &h1)?.spec.sub(tape.constant(target.clone()))?.powf(2.0)?.mean(), &t_store, &opts)?,
    ));

    let bandwidths = {
        let tape = Tape::new();
        let b = t_store.bind_frozen(&tape);
        let mut pooled = Vec::new();
        for h in [&h1, &h2] {
            let f = t.forward(&tape, &b, h)?.f_u;
            let v = f.value();
            let p = *v.shape().last().unwrap_or(&1);
            pooled.extend(v.data().chunks(p).map(|c| c.to_vec()));
        }
        rbf_bandwidths(&pooled, &[1.0, 2.0, 4.0, 8.0])
    };
    out.push((
        "translator_mmd",
        grad_check_store(|tape, b| mmd_with_bandwidths(points(&t, tape, b, &h1)?, points(&t, tape, b, &h2)?, &bandwidths), &t_store, &opts)?,
    ));

    out.push((
        "translator_gan",
        grad_check_store(
            |tape, b| {
                let d = c_store.bind_frozen(tape);
                let z = c.net.logit(&d, t.forward(tape, b, &h1)?.spec)?;
                Ok(gan_losses(z, z.detach(), z, GeneratorLoss::NonSaturating)?.1)
            },
            &t_store,
            &opts,
        )?,
    ));

    let fake = t.synthesize(&t_store, &h1)?;
    out.push((
        "critic_bce",
        grad_check_store(
            |tape, b| {
                let zr = c.net.logit(b, tape.constant(target.clone()))?;
                let zf = c.net.logit(b, tape.constant(fake.clone()))?;
                Ok(gan_losses(zr, zf, zf, GeneratorLoss::NonSaturating)?.0)
            },
            &c_store,
            &GradCheckOptions { max_coords_per_param: Some(8), ..opts.clone() },
        )?,
    ));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_objectives_pass() {
        for (name, r) in check_model_gradients(3).unwrap() {
            assert!(r.max_relative_error < 1e-4, "{name}: {r:?}");
            assert!(r.coords_checked > 20, "{name}: {r:?}");
        }
    }
}
