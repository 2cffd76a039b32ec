use std::collections::BTreeMap;
use log::{debug, info};
use ndarray::Array2;
use rand::seq::SliceRandom;

use super::corpus::Sample;
use super::losses::{gan_losses, mmd_loss, mse_loss, total_translator_loss, GeneratorLoss};
use crate::dsp::{corr2d, log_spectral_distance, MelConfig, MelSpectrogram};
use crate::error::{Error, Result};
use crate::model::{Critic, ModelConfig, Translator};
use crate::rng::{self, Rng};
use crate::tensor::optim::{Adam, SgdMomentum};
use crate::tensor::{ParamStore, Real, Tape, Tensor, Var};

/// Update rule for both networks. `momentum` is Adam's `beta1` or the
/// heavy-ball coefficient of SGD.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(OptimizerKind::Adam),
            "sgd" => Ok(OptimizerKind::Sgd),
            _ => Err(Error::Config(format!("unknown optimizer {s:?}, expected adam or sgd"))),
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Optimizer {
    Adam(Adam),
    Sgd(SgdMomentum),
}

impl Optimizer {
    fn new(kind: OptimizerKind, lr: f64, momentum: f64) -> Self {
        match kind {
            OptimizerKind::Adam => Optimizer::Adam(Adam::new(lr, momentum)),
            OptimizerKind::Sgd => Optimizer::Sgd(SgdMomentum::new(lr, momentum)),
        }
    }

    fn step<T: Real>(&mut self, store: &mut ParamStore<T>) {
        match self {
            Optimizer::Adam(a) => a.step(store),
            Optimizer::Sgd(s) => s.step(store),
        }
    }
}

/// Reduction of the squared error over the `64 x 64` pixels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum MseReduction {
    /// Mean over pixels.
    Mean,
    /// Sum over pixels, the squared Frobenius norm.
    #[default]
    Sum,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub mse_reduction: MseReduction,
    pub lr_t: f64,
    pub lr_d: f64,
    pub momentum: f64,
    pub beta: f64,
    pub lambda_gan: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    /// Multipliers of the median pairwise distance.
    pub mmd_bandwidths: Vec<f64>,
    pub generator_loss: GeneratorLoss,
    /// Draw a column-dropped `H` and a sliding-window audio crop per visit.
    pub augment: bool,
    /// Number of crops/versions when augmenting.
    pub augment_versions: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            optimizer: OptimizerKind::Adam,
            mse_reduction: MseReduction::Sum,
            lr_t: 1e-3,
            lr_d: 1e-4,
            momentum: 0.5,
            beta: 0.75,
            lambda_gan: 1.0,
            epochs: 200,
            batch: 8,
            seed: 0,
            mmd_bandwidths: vec![1.0, 2.0, 4.0, 8.0],
            generator_loss: GeneratorLoss::NonSaturating,
            augment: false,
            augment_versions: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lr_t > 0.0 && self.lr_d > 0.0) {
            return bad(format!("learning rates must be positive, got lr_t={} lr_d={}", self.lr_t, self.lr_d));
        }
        if !(self.beta >= 0.0 && self.lambda_gan >= 0.0) {
            return bad(format!("beta and lambda_gan must be non-negative, got {} and {}", self.beta, self.lambda_gan));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if self.batch == 0 || self.epochs == 0 {
            return bad("batch and epochs must be positive".into());
        }
        if self.mmd_bandwidths.is_empty() || self.mmd_bandwidths.iter().any(|b| !(*b > 0.0)) {
            return bad("mmd_bandwidths must be a non-empty list of positive numbers".into());
        }
        if self.augment && self.augment_versions == 0 {
            return bad("augment_versions must be positive".into());
        }
        Ok(())
    }
}

pub fn h_tensor<T: Real>(h: &Array2<f64>) -> Tensor<T> {
    let data: Vec<T> = h.iter().map(|&v| T::c(v)).collect();
    Tensor::new(vec![h.nrows(), h.ncols()], data).expect("shape matches data")
}

pub fn grid_of<T: Real>(t: &Tensor<T>) -> Array2<f64> {
    let s = t.shape();
    Array2::from_shape_vec((s[0], s[1]), t.data().iter().map(|v| v.f64()).collect()).expect("rank-2 tensor")
}

/// Batches of training indices. Samples of one utterance are cut into
/// chunks of `max(2, batch / 2)` that are never split across batches, so
/// every batch holds same-utterance groups for the MMD term.
pub fn make_batches(samples: &[Sample], indices: &[usize], batch: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for &i in indices {
        groups.entry(samples[i].utterance_id.as_str()).or_default().push(i);
    }
    let chunk = (batch / 2).max(2);
    let mut chunks: Vec<Vec<usize>> = Vec::new();
    for g in groups.values_mut() {
        g.shuffle(rng);
        let mut parts: Vec<Vec<usize>> = g.chunks(chunk).map(|c| c.to_vec()).collect();
        if parts.len() > 1 && parts.last().is_some_and(|p| p.len() < 2) {
            let tail = parts.pop().unwrap();
            parts.last_mut().unwrap().extend(tail);
        }
        chunks.extend(parts);
    }
    chunks.shuffle(rng);
    let mut out: Vec<Vec<usize>> = Vec::new();
    for c in chunks {
        match out.last_mut() {
            Some(b) if b.len() + c.len() <= batch.max(chunk) => b.extend(c),
            _ => out.push(c),
        }
    }
    out
}

/// Loss parts of one translator step, averaged over the batch.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepStats {
    pub total: f64,
    pub mse: f64,
    pub mmd: f64,
    pub gan_t: f64,
    pub loss_d: f64,
    /// Corr2D of each prediction (made before the update) with its target.
    pub corr2d: Vec<f64>,
}

/// Translator, critic and their optimizers.
pub struct Trainer<T: Real> {
    pub config: TrainConfig,
    pub translator: Translator,
    pub t_store: ParamStore<T>,
    pub critic: Critic,
    pub d_store: ParamStore<T>,
    t_opt: Optimizer,
    d_opt: Optimizer,
}

struct Pair<T: Real> {
    h: Tensor<T>,
    s: Tensor<T>,
    utterance: String,
}

impl<T: Real> Trainer<T> {
    pub fn new(model: &ModelConfig, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let (translator, t_store) = Translator::init(model, config.seed)?;
        let (critic, d_store) = Critic::init(model, config.seed)?;
        let t_opt = Optimizer::new(config.optimizer, config.lr_t, config.momentum);
        let d_opt = Optimizer::new(config.optimizer, config.lr_d, config.momentum);
        Ok(Trainer { config: config.clone(), translator, t_store, critic, d_store, t_opt, d_opt })
    }

    /// One critic update on detached fakes; returns `loss_D`.
    pub fn discriminator_step(&mut self, reals: &[Tensor<T>], fakes: &[Tensor<T>]) -> Result<f64> {
        let tape = Tape::new();
        let b = self.d_store.bind(&tape);
        let mut parts = Vec::with_capacity(reals.len());
        for (r, f) in reals.iter().zip(fakes) {
            let zr = self.critic.net.logit(&b, tape.constant(r.clone()))?;
            let zf = tape.constant(f.clone());
            let zf = self.critic.net.logit(&b, zf)?;
            let (ld, _) = gan_losses(zr, zf, zf, self.config.generator_loss)?;
            parts.push(ld);
        }
        let loss = Var::concat(&parts.iter().map(|p| p.reshape(&[1])).collect::<Result<Vec<_>>>()?, 0)?.mean()?;
        let v = loss.item().f64();
        if !v.is_finite() {
            return Err(Error::Numerical(format!("discriminator loss is {v}")));
        }
        let g = tape.backward(loss)?;
        self.d_store.accumulate(&b, &g);
        self.d_opt.step(&mut self.d_store);
        Ok(v)
    }

    /// One critic step then one translator step on `batch`.
    pub fn step(&mut self, batch: &[&Sample], h_override: Option<&[Array2<f64>]>, s_override: Option<&[Array2<f64>]>) -> Result<StepStats> {
        let pairs: Vec<Pair<T>> = batch
            .iter()
            .enumerate()
            .map(|(i, s)| Pair {
                h: h_tensor(h_override.map_or(&s.h, |o| &o[i])),
                s: h_tensor(s_override.map_or(&s.s, |o| &o[i])),
                utterance: s.utterance_id.clone(),
            })
            .collect();
        let cfg = self.config.clone();
        let tape = Tape::new();
        let bt = self.t_store.bind(&tape);
        let outs = pairs.iter().map(|p| self.translator.forward(&tape, &bt, &p.h)).collect::<Result<Vec<_>>>()?;
        let fakes: Vec<Tensor<T>> = outs.iter().map(|o| o.spec.value().clone()).collect();
        let reals: Vec<Tensor<T>> = pairs.iter().map(|p| p.s.clone()).collect();
        let corr = fakes
            .iter()
            .zip(&reals)
            .map(|(f, r)| corr2d(grid_of(f).view(), grid_of(r).view()).unwrap_or(0.0))
            .collect();

        // The critic does not influence the translator when λ = 0.
        let loss_d = if cfg.lambda_gan > 0.0 { self.discriminator_step(&reals, &fakes)? } else { 0.0 };

        let n = pairs.len() as f64;
        let bd = self.d_store.bind_frozen(&tape);
        let mut mse_parts = Vec::with_capacity(pairs.len());
        let mut gan_parts = Vec::with_capacity(pairs.len());
        for (o, p) in outs.iter().zip(&pairs) {
            let mut mse = mse_loss(o.spec, tape.constant(p.s.clone()))?;
            if cfg.mse_reduction == MseReduction::Sum {
                mse = mse.mul_scalar(p.s.len() as f64)?;
            }
            mse_parts.push(mse.reshape(&[1])?);
            if cfg.lambda_gan > 0.0 {
                let z = self.critic.net.logit(&bd, o.spec)?;
                let (_, lt) = gan_losses(z, z.detach(), z, cfg.generator_loss)?;
                gan_parts.push(lt.reshape(&[1])?);
            }
        }
        let zero = || tape.constant(Tensor::scalar(T::zero()));
        if mse_parts.is_empty() {
            return Err(Error::InvalidInput("empty batch".into()));
        }
        let mse = Var::concat(&mse_parts, 0)?.sum()?.mul_scalar(1.0 / n)?;
        let gan = if gan_parts.is_empty() { zero() } else { Var::concat(&gan_parts, 0)?.sum()?.mul_scalar(1.0 / n)? };
        let mmd = if cfg.beta > 0.0 { self.batch_mmd(&outs.iter().map(|o| o.f_u).collect::<Vec<_>>(), &pairs)? } else { zero() };
        let total = total_translator_loss(mse, mmd, gan, cfg.beta, cfg.lambda_gan)?;
        let stats = StepStats {
            total: total.item().f64(),
            mse: mse.item().f64(),
            mmd: mmd.item().f64(),
            gan_t: gan.item().f64(),
            loss_d,
            corr2d: corr,
        };
        if !stats.total.is_finite() {
            return Err(Error::Numerical(format!(
                "translator loss is {} (mse {}, mmd {}, gan {})",
                stats.total, stats.mse, stats.mmd, stats.gan_t
            )));
        }
        let g = tape.backward(total)?;
        self.t_store.accumulate(&bt, &g);
        self.t_opt.step(&mut self.t_store);
        Ok(stats)
    }

    /// Mean of `MMD(f_u_i, f_u_j)` over the batch's same-utterance pairs.
    /// Each latent is read as a set of `8 x 8` points in the utterance
    /// channels; cross-utterance pairs enter with γ = 0. Each estimate is
    /// clamped at zero: the unbiased estimator dips below zero and the
    /// translator would otherwise keep pushing it down.
    fn batch_mmd<'t>(&self, f_u: &[Var<'t, T>], pairs: &[Pair<T>]) -> Result<Var<'t, T>> {
        let tape = f_u[0].tape();
        let points = |i: usize| -> Result<Var<'t, T>> {
            let s = f_u[i].shape();
            f_u[i].reshape(&[s[0] * s[1], s[2]])
        };
        let mut terms = Vec::new();
        for i in 0..pairs.len() {
            for j in i + 1..pairs.len() {
                let same = pairs[i].utterance == pairs[j].utterance;
                let m = mmd_loss(points(i)?, points(j)?, same, &self.config.mmd_bandwidths)?;
                if same {
                    terms.push(m.relu()?.reshape(&[1])?);
                }
            }
        }
        if terms.is_empty() {
            return Ok(tape.constant(Tensor::scalar(T::zero())));
        }
        Var::concat(&terms, 0)?.mean()
    }

    pub fn predict(&self, h: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(grid_of(&self.translator.synthesize(&self.t_store, &h_tensor(h))?))
    }
}

/// Per-epoch record of a training run.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub total: f64,
    pub mse: f64,
    pub mmd: f64,
    pub gan_t: f64,
    pub loss_d: f64,
    pub train_corr2d: f64,
    pub val_corr2d: Option<f64>,
    /// Whether this epoch's parameters became the kept ones.
    pub improved: bool,
}

impl EpochLog {
    pub fn record(&self, fold: &str, seed: u64) -> [String; 11] {
        [
            fold.to_string(),
            seed.to_string(),
            self.epoch.to_string(),
            self.total.to_string(),
            self.mse.to_string(),
            self.mmd.to_string(),
            self.gan_t.to_string(),
            self.loss_d.to_string(),
            self.train_corr2d.to_string(),
            self.val_corr2d.map(|v| v.to_string()).unwrap_or_default(),
            (self.improved as u8).to_string(),
        ]
    }
}

pub const TRAIN_LOG_HEADER: [&str; 11] =
    ["fold", "seed", "epoch", "loss_total", "loss_mse", "loss_mmd", "loss_gan_t", "loss_d", "train_corr2d", "val_corr2d", "best"];

/// Result of [`train`]: the retained translator parameters and the log.
pub struct TrainOutcome<T: Real> {
    pub translator: Translator,
    pub params: ParamStore<T>,
    pub critic: Critic,
    pub critic_params: ParamStore<T>,
    pub history: Vec<EpochLog>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Trains on `train_idx`, scoring `val_idx` after every epoch.
///
/// The kept parameters are those of the epoch with the best validation
/// Corr2D, or the last epoch when there is no validation set.
pub fn train<T: Real>(
    samples: &[Sample],
    train_idx: &[usize],
    val_idx: &[usize],
    model: &ModelConfig,
    config: &TrainConfig,
    mel: &MelConfig,
) -> Result<TrainOutcome<T>> {
    if train_idx.is_empty() {
        return Err(Error::InvalidInput("no training samples".into()));
    }
    let mut trainer = Trainer::<T>::new(model, config)?;
    let mut rng = rng::stream(config.seed, 4);
    let mut aug_rng = rng::stream(config.seed, 5);
    let mut best: Option<(f64, ParamStore<T>, ParamStore<T>, usize)> = None;
    let mut history = Vec::with_capacity(config.epochs);
    let analyzer = if config.augment { Some(crate::dsp::MelAnalyzer::new(mel.clone())?) } else { None };
    for epoch in 1..=config.epochs {
        let batches = make_batches(samples, train_idx, config.batch, &mut rng);
        let mut stats = Vec::with_capacity(batches.len());
        for (bi, b) in batches.iter().enumerate() {
            let batch: Vec<&Sample> = b.iter().map(|&i| &samples[i]).collect();
            let (hs, ss) = match &analyzer {
                Some(an) => augmented(&batch, an, config.augment_versions, &mut aug_rng)?,
                None => (None, None),
            };
            let st = trainer.step(&batch, hs.as_deref(), ss.as_deref()).map_err(|e| match e {
                Error::Numerical(m) => Error::Numerical(format!("training diverged at epoch {epoch}, batch {}: {m}", bi + 1)),
                Error::NonFinite { op } => {
                    Error::Numerical(format!("training diverged at epoch {epoch}, batch {}: non-finite value in {op}", bi + 1))
                }
                other => other,
            })?;
            debug!("epoch {epoch} batch {} loss {:.6}", bi + 1, st.total);
            stats.push(st);
        }
        let corr: Vec<f64> = stats.iter().flat_map(|s| s.corr2d.iter().copied()).collect();
        let val_corr2d = if val_idx.is_empty() {
            None
        } else {
            let v = val_idx
                .iter()
                .map(|&i| Ok(corr2d(trainer.predict(&samples[i].h)?.view(), samples[i].s.view()).unwrap_or(0.0)))
                .collect::<Result<Vec<f64>>>()?;
            Some(mean(&v))
        };
        let entry = EpochLog {
            epoch,
            total: mean(&stats.iter().map(|s| s.total).collect::<Vec<_>>()),
            mse: mean(&stats.iter().map(|s| s.mse).collect::<Vec<_>>()),
            mmd: mean(&stats.iter().map(|s| s.mmd).collect::<Vec<_>>()),
            gan_t: mean(&stats.iter().map(|s| s.gan_t).collect::<Vec<_>>()),
            loss_d: mean(&stats.iter().map(|s| s.loss_d).collect::<Vec<_>>()),
            train_corr2d: mean(&corr),
            val_corr2d,
            improved: false,
        };
        let score = val_corr2d.unwrap_or(f64::NEG_INFINITY);
        let improved = match &best {
            None => true,
            Some((b, ..)) => val_corr2d.is_none() || score > *b,
        };
        let mut entry = entry;
        entry.improved = improved;
        if improved {
            best = Some((score, trainer.t_store.clone(), trainer.d_store.clone(), epoch));
        }
        info!(
            "epoch {epoch}: loss {:.5} mse {:.5} train corr2d {:.4}{}",
            entry.total,
            entry.mse,
            entry.train_corr2d,
            val_corr2d.map(|v| format!(" val corr2d {v:.4}")).unwrap_or_default()
        );
        history.push(entry);
    }
    let (_, params, critic_params, best_epoch) = best.expect("at least one epoch");
    Ok(TrainOutcome { translator: trainer.translator, params, critic: trainer.critic, critic_params, history, best_epoch })
}

type Overrides = (Option<Vec<Array2<f64>>>, Option<Vec<Array2<f64>>>);

fn augmented(batch: &[&Sample], an: &crate::dsp::MelAnalyzer, versions: usize, rng: &mut Rng) -> Result<Overrides> {
    use rand::Rng as _;
    let mut hs = Vec::with_capacity(batch.len());
    let mut ss = Vec::with_capacity(batch.len());
    for s in batch {
        hs.push(super::augment::augment_h(&s.h, rng)?);
        match &s.audio {
            Some(a) => {
                let offs = super::augment::crop_offsets(a.len(), an.config().crop_len, versions)?;
                let o = offs[rng.gen_range(0..offs.len())];
                ss.push(an.spectrogram(&a.crop(o, an.config().crop_len)?)?.grid);
            }
            None => ss.push(s.s.clone()),
        }
    }
    Ok((Some(hs), Some(ss)))
}

/// Scores of one evaluated sample.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleMetrics {
    pub index: usize,
    pub corr2d: f64,
    pub lsd: f64,
    pub prediction: Array2<f64>,
}

/// Corr2D and log-spectral distance of predictions against targets.
pub fn evaluate<T: Real>(
    translator: &Translator,
    params: &ParamStore<T>,
    samples: &[Sample],
    indices: &[usize],
    mel: &MelConfig,
) -> Result<Vec<SampleMetrics>> {
    indices
        .iter()
        .map(|&i| {
            let pred = grid_of(&translator.synthesize(params, &h_tensor(&samples[i].h))?);
            let target = &samples[i].s;
            let corr = corr2d(pred.view(), target.view()).unwrap_or(0.0);
            let lsd = log_spectral_distance(
                &MelSpectrogram::new(pred.clone(), mel.clone())?,
                &MelSpectrogram::new(target.clone(), mel.clone())?,
            )?;
            Ok(SampleMetrics { index: i, corr2d: corr, lsd, prediction: pred })
        })
        .collect()
}

/// A permutation of `0..n` with no fixed points (identity for `n < 2`).
pub fn derangement(n: usize, rng: &mut Rng) -> Vec<usize> {
    if n < 2 {
        return (0..n).collect();
    }
    // Sattolo's algorithm yields a single n-cycle.
    let mut p: Vec<usize> = (0..n).collect();
    use rand::Rng as _;
    for i in (1..n).rev() {
        let j = rng.gen_range(0..i);
        p.swap(i, j);
    }
    p
}

#[derive(Clone, Debug, PartialEq)]
pub struct LooRow {
    pub fold: String,
    pub seed: u64,
    pub sample: usize,
    pub subject_id: String,
    pub utterance_id: String,
    pub corr2d: f64,
    pub lsd: f64,
}

pub const METRICS_HEADER: [&str; 7] = ["fold", "seed", "sample", "subject_id", "utterance_id", "corr2d", "lsd"];

impl LooRow {
    pub fn record(&self) -> [String; 7] {
        [
            self.fold.clone(),
            self.seed.to_string(),
            self.sample.to_string(),
            self.subject_id.clone(),
            self.utterance_id.clone(),
            self.corr2d.to_string(),
            self.lsd.to_string(),
        ]
    }
}

/// Mean and spread of a set of evaluation rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub mean_corr2d: f64,
    /// Standard deviation of the per-seed means.
    pub std_over_seeds: f64,
    pub std_over_samples: f64,
    pub mean_lsd: f64,
    pub n: usize,
}

fn std(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

pub fn summarize(rows: &[LooRow]) -> Summary {
    let corr: Vec<f64> = rows.iter().map(|r| r.corr2d).collect();
    let mut by_seed: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for r in rows {
        by_seed.entry(r.seed).or_default().push(r.corr2d);
    }
    let seed_means: Vec<f64> = by_seed.values().map(|v| mean(v)).collect();
    Summary {
        mean_corr2d: mean(&corr),
        std_over_seeds: std(&seed_means),
        std_over_samples: std(&corr),
        mean_lsd: mean(&rows.iter().map(|r| r.lsd).collect::<Vec<_>>()),
        n: rows.len(),
    }
}

pub struct LooResult {
    pub rows: Vec<LooRow>,
    /// Training history of every `(fold, seed)` run.
    pub logs: Vec<(String, u64, Vec<EpochLog>)>,
}

/// Which training targets a leave-one-out run sees.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Targets {
    Paired,
    /// Targets shuffled among the training samples (no sample keeps its
    /// own); a baseline that cannot learn the pairing.
    Permuted,
}

/// Subject-independent leave-one-out: one fold per subject, trained on all
/// other subjects with every seed, scored on the held-out subject.
pub fn leave_one_out<T: Real>(
    samples: &[Sample],
    model: &ModelConfig,
    config: &TrainConfig,
    seeds: &[u64],
    targets: Targets,
    mel: &MelConfig,
) -> Result<LooResult> {
    let mut subjects: Vec<&str> = samples.iter().map(|s| s.subject_id.as_str()).collect();
    subjects.sort_unstable();
    subjects.dedup();
    if subjects.len() < 2 {
        return Err(Error::InvalidInput("leave-one-out needs at least two subjects".into()));
    }
    let mut rows = Vec::new();
    let mut logs = Vec::new();
    for fold in &subjects {
        let test: Vec<usize> = (0..samples.len()).filter(|&i| samples[i].subject_id == *fold).collect();
        let train_idx: Vec<usize> = (0..samples.len()).filter(|&i| samples[i].subject_id != *fold).collect();
        for &seed in seeds {
            let cfg = TrainConfig { seed, ..config.clone() };
            let train_set: Vec<Sample>;
            let (pool, idx): (&[Sample], Vec<usize>) = match targets {
                Targets::Paired => (samples, train_idx.clone()),
                Targets::Permuted => {
                    let perm = derangement(train_idx.len(), &mut rng::stream(seed, 3));
                    train_set = train_idx
                        .iter()
                        .zip(&perm)
                        .map(|(&i, &j)| Sample { s: samples[train_idx[j]].s.clone(), audio: None, ..samples[i].clone() })
                        .collect();
                    (&train_set, (0..train_idx.len()).collect())
                }
            };
            info!("fold {fold} seed {seed}: training on {} samples", idx.len());
            let out = train::<T>(pool, &idx, &[], model, &cfg, mel)?;
            for m in evaluate(&out.translator, &out.params, samples, &test, mel)? {
                rows.push(LooRow {
                    fold: fold.to_string(),
                    seed,
                    sample: m.index,
                    subject_id: samples[m.index].subject_id.clone(),
                    utterance_id: samples[m.index].utterance_id.clone(),
                    corr2d: m.corr2d,
                    lsd: m.lsd,
                });
            }
            logs.push((fold.to_string(), seed, out.history));
        }
    }
    Ok(LooResult { rows, logs })
}
