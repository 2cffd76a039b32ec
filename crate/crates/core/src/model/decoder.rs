use super::ModelConfig;
use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::params::init_fan_in;
use crate::tensor::{Bound, ParamId, ParamStore, Real, Tensor, Var};

const K: usize = 4;
const STRIDE: usize = 2;
const PAD: usize = 1;

#[derive(Clone, Debug)]
struct ConvLayer {
    w: ParamId,
    b: ParamId,
}

impl ConvLayer {
    fn transposed<T: Real>(store: &mut ParamStore<T>, rng: &mut Rng, name: &str, cin: usize, cout: usize) -> Self {
        // Each output pixel sees cin * (K / STRIDE)² inputs.
        let fan_in = cin * (K / STRIDE) * (K / STRIDE);
        ConvLayer {
            w: store.add(format!("{name}.w"), init_fan_in(rng, &[cin, cout, K, K], fan_in)),
            b: store.add(format!("{name}.b"), Tensor::zeros(&[1, cout, 1, 1])),
        }
    }

    fn forward_conv<T: Real>(store: &mut ParamStore<T>, rng: &mut Rng, name: &str, cin: usize, cout: usize) -> Self {
        ConvLayer {
            w: store.add(format!("{name}.w"), init_fan_in(rng, &[cout, cin, K, K], cin * K * K)),
            b: store.add(format!("{name}.b"), Tensor::zeros(&[1, cout, 1, 1])),
        }
    }

    fn apply_transposed<'t, T: Real>(&self, b: &Bound<'t, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        x.conv_transpose2d(b.get(self.w), STRIDE, PAD)?.add(b.get(self.b))
    }

    fn apply<'t, T: Real>(&self, b: &Bound<'t, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        x.conv2d(b.get(self.w), STRIDE, PAD)?.add(b.get(self.b))
    }
}

#[derive(Clone, Debug)]
struct Dense {
    w: ParamId,
    b: ParamId,
}

impl Dense {
    fn init<T: Real>(store: &mut ParamStore<T>, rng: &mut Rng, name: &str, fin: usize, fout: usize) -> Self {
        Dense {
            w: store.add(format!("{name}.w"), init_fan_in(rng, &[fin, fout], fin)),
            b: store.add(format!("{name}.b"), Tensor::zeros(&[1, fout])),
        }
    }

    fn apply<'t, T: Real>(&self, b: &Bound<'t, T>, x: Var<'t, T>) -> Result<Var<'t, T>> {
        x.matmul(b.get(self.w))?.add(b.get(self.b))
    }
}

/// Three stride-2 transposed convolutions from an `[8, 8, d]` latent to a
/// `64 x 64` grid in `(0, 1)`.
#[derive(Clone, Debug)]
pub struct Decoder {
    layers: [ConvLayer; 3],
}

impl Decoder {
    pub fn init<T: Real>(store: &mut ParamStore<T>, rng: &mut Rng, cfg: &ModelConfig) -> Self {
        let (c1, c2) = cfg.decoder_channels;
        Decoder {
            layers: [
                ConvLayer::transposed(store, rng, "dec.ct0", cfg.d(), c1),
                ConvLayer::transposed(store, rng, "dec.ct1", c1, c2),
                ConvLayer::transposed(store, rng, "dec.ct2", c2, 1),
            ],
        }
    }

    pub fn forward<'t, T: Real>(&self, b: &Bound<'t, T>, f: Var<'t, T>) -> Result<Var<'t, T>> {
        let &[bx, by, d] = &f.shape()[..] else {
            return Err(Error::shape("decoder", format!("expected [8, 8, d], got {:?}", f.shape())));
        };
        let mut x = f.permute(&[2, 0, 1])?.reshape(&[1, d, bx, by])?;
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.apply_transposed(b, x)?;
            if i < 2 {
                x = x.relu()?;
            }
        }
        let s = x.shape();
        x.sigmoid()?.reshape(&[s[2], s[3]])
    }
}

/// Convolutional critic on a `64 x 64` grid producing one logit.
#[derive(Clone, Debug)]
pub struct Discriminator {
    convs: [ConvLayer; 3],
    fc1: Dense,
    fc2: Dense,
}

impl Discriminator {
    pub fn init<T: Real>(store: &mut ParamStore<T>, rng: &mut Rng, cfg: &ModelConfig) -> Self {
        let (c1, c2, c3) = cfg.disc_channels;
        let flat = c3 * 8 * 8;
        Discriminator {
            convs: [
                ConvLayer::forward_conv(store, rng, "disc.c0", 1, c1),
                ConvLayer::forward_conv(store, rng, "disc.c1", c1, c2),
                ConvLayer::forward_conv(store, rng, "disc.c2", c2, c3),
            ],
            fc1: Dense::init(store, rng, "disc.fc0", flat, cfg.disc_hidden),
            fc2: Dense::init(store, rng, "disc.fc1", cfg.disc_hidden, 1),
        }
    }

    /// Pre-sigmoid score, rank 0.
    pub fn logit<'t, T: Real>(&self, b: &Bound<'t, T>, s: Var<'t, T>) -> Result<Var<'t, T>> {
        if s.shape() != [64, 64] {
            return Err(Error::shape("discriminator", format!("expected [64, 64], got {:?}", s.shape())));
        }
        let mut x = s.reshape(&[1, 1, 64, 64])?;
        for c in &self.convs {
            x = c.apply(b, x)?.relu()?;
        }
        let flat = x.value().len();
        let h = self.fc1.apply(b, x.reshape(&[1, flat])?)?.relu()?;
        self.fc2.apply(b, h)?.reshape(&[])
    }

    /// `D(s)` in `(0, 1)`.
    pub fn prob<'t, T: Real>(&self, b: &Bound<'t, T>, s: Var<'t, T>) -> Result<Var<'t, T>> {
        self.logit(b, s)?.sigmoid()
    }
}
