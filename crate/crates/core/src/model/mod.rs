//! The translator from weighting maps to mel-spectrograms and its
//! adversarial critic.
//!
//! The encoder cuts a `20 x Y` weighting map into `1 x 20` patches and runs
//! four transformer layers over the patch grid. Each layer mixes windowed
//! local attention (with a learned bias indexed by signed 2D patch offset)
//! and attention through a small set of learned global tokens, then pools
//! the grid onto a fixed bin layout. The result is an `8 x 8 x 20` latent
//! whatever the input width. A transposed-convolution decoder maps it to a
//! `64 x 64` spectrogram.

mod config;
mod decoder;
mod encoder;

pub use config::ModelConfig;
pub use decoder::{Decoder, Discriminator};
pub use encoder::{
    dense_attention, global_aggregate, global_broadcast, local_attention, patchify, rel_bias, rel_index, sspp, Encoder,
    PatchGrid, PltLayer,
};

use crate::error::Result;
use crate::rng;
use crate::tensor::{Bound, ParamStore, Real, Tape, Tensor, Var};

/// Output of one translator pass.
#[derive(Clone, Copy, Debug)]
pub struct Translation<'t, T: Real> {
    /// `[8, 8, d]`.
    pub latent: Var<'t, T>,
    /// Utterance channels of the latent, `[8, 8, utterance_channels]`.
    pub f_u: Var<'t, T>,
    /// Subject channels, the rest of the latent.
    pub f_s: Var<'t, T>,
    /// `[64, 64]` in `(0, 1)`.
    pub spec: Var<'t, T>,
}

/// Splits a latent along channels into utterance and subject parts.
pub fn split_latent<'t, T: Real>(f: Var<'t, T>, utterance_channels: usize) -> Result<(Var<'t, T>, Var<'t, T>)> {
    let d = f.shape()[2];
    Ok((f.slice(2, 0, utterance_channels)?, f.slice(2, utterance_channels, d)?))
}

pub fn join_latent<'t, T: Real>(f_u: Var<'t, T>, f_s: Var<'t, T>) -> Result<Var<'t, T>> {
    Var::concat(&[f_u, f_s], 2)
}

/// Encoder plus decoder. Parameters live in a separate [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Translator {
    pub config: ModelConfig,
    pub encoder: Encoder,
    pub decoder: Decoder,
}

impl Translator {
    pub fn init<T: Real>(config: &ModelConfig, seed: u64) -> Result<(Self, ParamStore<T>)> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut rng = rng::stream(seed, 1);
        let encoder = Encoder::init(&mut store, &mut rng, config);
        let decoder = Decoder::init(&mut store, &mut rng, config);
        Ok((Translator { config: config.clone(), encoder, decoder }, store))
    }

    pub fn encode<'t, T: Real>(&self, tape: &'t Tape<T>, b: &Bound<'t, T>, h: &Tensor<T>) -> Result<Var<'t, T>> {
        self.encoder.forward(tape, b, h, &self.config)
    }

    pub fn forward<'t, T: Real>(&self, tape: &'t Tape<T>, b: &Bound<'t, T>, h: &Tensor<T>) -> Result<Translation<'t, T>> {
        let latent = self.encode(tape, b, h)?;
        let (f_u, f_s) = split_latent(latent, self.config.utterance_channels)?;
        let spec = self.decoder.forward(b, join_latent(f_u, f_s)?)?;
        Ok(Translation { latent, f_u, f_s, spec })
    }

    /// Spectrogram for `h` without recording gradients.
    pub fn synthesize<T: Real>(&self, store: &ParamStore<T>, h: &Tensor<T>) -> Result<Tensor<T>> {
        let tape = Tape::new();
        let b = store.bind_frozen(&tape);
        let out = self.forward(&tape, &b, h)?;
        let spec = out.spec.value().clone();
        Ok(spec)
    }
}

/// Critic wrapper with its own parameter store.
#[derive(Clone, Debug)]
pub struct Critic {
    pub config: ModelConfig,
    pub net: Discriminator,
}

impl Critic {
    pub fn init<T: Real>(config: &ModelConfig, seed: u64) -> Result<(Self, ParamStore<T>)> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut rng = rng::stream(seed, 2);
        let net = Discriminator::init(&mut store, &mut rng, config);
        Ok((Critic { config: config.clone(), net }, store))
    }
}
