//! Synthetic paired corpus.
//!
//! Every utterance is a sequence of phone segments. A smooth segment
//! weighting over normalised time is the shared latent trajectory: it
//! interpolates acoustic targets (voicing, formants, frication) for the
//! waveform and articulator targets for the motion features. Subjects scale
//! formants, pick a pitch and perturb how articulators map to features;
//! repetitions jitter segment timing, recording length and motion frame
//! count.

use std::f64::consts::PI;

use ndarray::Array2;

use crate::dsp::{MelAnalyzer, MelConfig, Waveform};
use crate::error::{Error, Result};
use crate::nmf::{build_knn_graph, nmf_factorize, nmf_factorize_from, MotionFeatureMatrix, NmfConfig, NmfFactors};
use crate::rng::{self, Rng};

/// Articulator dimensions: jaw opening, tongue height, tongue frontness,
/// lip rounding, constriction.
pub const ARTICULATORS: usize = 5;

#[derive(Clone, Debug, PartialEq)]
pub enum PhoneKind {
    Vowel { formants: [f64; 3] },
    Fricative { center_hz: f64, bandwidth_hz: f64 },
    /// Closure followed by a release burst; voiced stops keep a weak voice bar.
    Stop { voiced: bool },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Phone {
    pub symbol: char,
    pub kind: PhoneKind,
    pub articulators: [f64; ARTICULATORS],
}

impl Phone {
    pub fn by_symbol(symbol: char) -> Option<Phone> {
        use PhoneKind::*;
        let (kind, articulators) = match symbol {
            'a' => (Vowel { formants: [730.0, 1090.0, 2440.0] }, [1.0, 0.1, 0.4, 0.1, 0.0]),
            'i' => (Vowel { formants: [270.0, 2290.0, 3010.0] }, [0.15, 0.95, 1.0, 0.0, 0.3]),
            'u' => (Vowel { formants: [300.0, 870.0, 2240.0] }, [0.3, 0.8, 0.1, 0.9, 0.2]),
            'e' => (Vowel { formants: [530.0, 1840.0, 2480.0] }, [0.6, 0.5, 0.8, 0.0, 0.1]),
            'o' => (Vowel { formants: [570.0, 840.0, 2410.0] }, [0.6, 0.5, 0.1, 0.7, 0.1]),
            's' => (Fricative { center_hz: 4300.0, bandwidth_hz: 1400.0 }, [0.2, 0.8, 0.9, 0.0, 0.9]),
            'f' => (Fricative { center_hz: 2500.0, bandwidth_hz: 3000.0 }, [0.3, 0.3, 0.5, 0.4, 0.8]),
            'k' => (Stop { voiced: false }, [0.2, 0.9, 0.0, 0.2, 1.0]),
            'g' => (Stop { voiced: true }, [0.25, 0.9, 0.05, 0.2, 1.0]),
            't' => (Stop { voiced: false }, [0.2, 0.9, 0.9, 0.0, 1.0]),
            'd' => (Stop { voiced: true }, [0.25, 0.9, 0.9, 0.0, 1.0]),
            _ => return None,
        };
        Some(Phone { symbol, kind, articulators })
    }
}

/// An utterance as phones with relative durations.
#[derive(Clone, Debug, PartialEq)]
pub struct UtteranceTemplate {
    pub name: String,
    pub phones: Vec<(Phone, f64)>,
}

impl UtteranceTemplate {
    /// Parses `"a:0.28 s:0.24 u:0.34 k:0.14"`.
    pub fn parse(name: &str, phones: &str) -> Result<Self> {
        let mut out = Vec::new();
        for tok in phones.split_whitespace() {
            let (sym, dur) = tok
                .split_once(':')
                .ok_or_else(|| Error::Config(format!("utterance {name:?}: expected phone:duration, got {tok:?}")))?;
            let mut chars = sym.chars();
            let (Some(c), None) = (chars.next(), chars.next()) else {
                return Err(Error::Config(format!("utterance {name:?}: phone {sym:?} is not one symbol")));
            };
            let phone = Phone::by_symbol(c).ok_or_else(|| Error::Config(format!("utterance {name:?}: unknown phone {c:?}")))?;
            let d: f64 = dur.parse().map_err(|_| Error::Config(format!("utterance {name:?}: bad duration {dur:?}")))?;
            if !(d > 0.0) {
                return Err(Error::Config(format!("utterance {name:?}: duration must be positive")));
            }
            out.push((phone, d));
        }
        if out.is_empty() {
            return Err(Error::Config(format!("utterance {name:?} has no phones")));
        }
        Ok(UtteranceTemplate { name: name.to_string(), phones: out })
    }

    /// The `phone:duration` list accepted by [`UtteranceTemplate::parse`].
    pub fn phone_string(&self) -> String {
        self.phones.iter().map(|(p, d)| format!("{}:{d}", p.symbol)).collect::<Vec<_>>().join(" ")
    }

    pub fn a_souk() -> Self {
        Self::parse("a souk", "a:0.28 s:0.24 u:0.34 k:0.14").expect("valid template")
    }

    pub fn a_geese() -> Self {
        Self::parse("a geese", "a:0.16 g:0.08 i:0.38 s:0.38").expect("valid template")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticCorpusSpec {
    pub n_subjects: usize,
    pub utterances: Vec<UtteranceTemplate>,
    pub repetitions: usize,
    /// Relative spread of the per-subject formant scale.
    pub formant_scale: f64,
    /// Per-subject pitch range in Hz.
    pub f0_range: (f64, f64),
    /// Spread of the per-subject articulator-to-feature perturbation.
    pub motion_scale: f64,
    /// Relative jitter of segment durations per repetition.
    pub timing_jitter: f64,
    pub motion_features: usize,
    pub width_range: (usize, usize),
    pub audio_len_range: (usize, usize),
    pub mel: MelConfig,
    pub nmf: NmfConfig,
    pub row_alignment: RowAlignment,
}

/// How the components of each per-sample factorisation are ordered.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RowAlignment {
    /// Warm-start `W` from a reference factorisation of the subject-free
    /// motion of all utterances and match components to it.
    #[default]
    Reference,
    /// Random start, components sorted by their temporal centre of mass.
    Centroid,
}

impl Default for SyntheticCorpusSpec {
    fn default() -> Self {
        SyntheticCorpusSpec {
            n_subjects: 6,
            utterances: vec![UtteranceTemplate::a_souk(), UtteranceTemplate::a_geese()],
            repetitions: 10,
            formant_scale: 0.06,
            f0_range: (100.0, 200.0),
            motion_scale: 0.15,
            timing_jitter: 0.06,
            motion_features: 24,
            width_range: (5745, 11938),
            audio_len_range: (21832, 24175),
            mel: MelConfig::default(),
            nmf: NmfConfig { max_iters: 60, ..NmfConfig::default() },
            row_alignment: RowAlignment::Reference,
        }
    }
}

impl SyntheticCorpusSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_subjects == 0 || self.repetitions == 0 || self.utterances.is_empty() {
            return bad("corpus needs at least one subject, utterance and repetition");
        }
        if self.width_range.0 == 0 || self.width_range.0 > self.width_range.1 {
            return bad("width_range must be a non-empty positive range");
        }
        if self.audio_len_range.0 < self.mel.crop_len || self.audio_len_range.0 > self.audio_len_range.1 {
            return bad("audio_len_range must be ordered and start at or above crop_len");
        }
        if !(self.f0_range.0 > 0.0 && self.f0_range.0 <= self.f0_range.1) {
            return bad("f0_range must be positive and ordered");
        }
        if self.motion_features == 0 {
            return bad("motion_features must be positive");
        }
        if self.nmf.k_neighbors >= self.width_range.0 {
            return bad("k_neighbors must be below the smallest width");
        }
        self.nmf.validate()
    }
}

/// One paired example.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    /// Weighting map, rank x width.
    pub h: Array2<f64>,
    /// Target mel-spectrogram grid.
    pub s: Array2<f64>,
    pub subject_id: String,
    pub utterance_id: String,
    /// Full recording the target was cropped from, when kept.
    pub audio: Option<Waveform>,
}

pub fn subject_name(i: usize) -> String {
    format!("s{:02}", i + 1)
}

struct Subject {
    formant_scale: f64,
    f0: f64,
    /// Per-feature perturbation of the articulator loadings.
    loading_delta: Array2<f64>,
}

/// Articulator loadings and offsets of the motion features, shared by all
/// subjects.
struct Anatomy {
    loadings: Array2<f64>,
    offsets: Vec<f64>,
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Segment weights at normalised time `tau` for boundaries `b` (len n+1).
fn segment_weights(bounds: &[f64], tau: f64, out: &mut [f64]) {
    const SMOOTH: f64 = 0.012;
    let mut total = 0.0;
    for (j, w) in out.iter_mut().enumerate() {
        *w = logistic((tau - bounds[j]) / SMOOTH) - logistic((tau - bounds[j + 1]) / SMOOTH);
        // The outer edges extend to the whole window.
        if j == 0 && tau < bounds[0] {
            *w = 1.0;
        }
        *w = w.max(0.0);
        total += *w;
    }
    if total > 0.0 {
        out.iter_mut().for_each(|w| *w /= total);
    }
}

fn boundaries(u: &UtteranceTemplate, jitter: f64, rng: &mut Rng) -> Vec<f64> {
    let durs: Vec<f64> = u.phones.iter().map(|(_, d)| d * (1.0 + rng::uniform(rng, -jitter, jitter + 1e-12))).collect();
    let total: f64 = durs.iter().sum();
    let mut b = vec![0.0];
    for d in durs {
        b.push(b.last().unwrap() + d / total);
    }
    b
}

/// Second-order band-pass (constant peak gain).
struct BandPass {
    b0: f64,
    a1: f64,
    a2: f64,
    x1: f64,
    x2: f64,
    y1: f64,
    y2: f64,
}

impl BandPass {
    fn new(center: f64, bandwidth: f64, sr: f64) -> Self {
        let w0 = 2.0 * PI * center / sr;
        let q = center / bandwidth;
        let alpha = w0.sin() / (2.0 * q);
        let a0 = 1.0 + alpha;
        BandPass { b0: alpha / a0, a1: -2.0 * w0.cos() / a0, a2: (1.0 - alpha) / a0, x1: 0.0, x2: 0.0, y1: 0.0, y2: 0.0 }
    }

    fn tick(&mut self, x: f64) -> f64 {
        let y = self.b0 * x - self.b0 * self.x2 - self.a1 * self.y1 - self.a2 * self.y2;
        self.x2 = self.x1;
        self.x1 = x;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

fn synth_audio(u: &UtteranceTemplate, bounds: &[f64], subj: &Subject, len: usize, sr: f64, rng: &mut Rng) -> Result<Waveform> {
    let n_seg = u.phones.len();
    let nyq = sr / 2.0;
    let mut weights = vec![0.0; n_seg];
    let mut filters: Vec<Option<BandPass>> = u
        .phones
        .iter()
        .map(|(p, _)| match p.kind {
            PhoneKind::Fricative { center_hz, bandwidth_hz } => {
                Some(BandPass::new((center_hz * subj.formant_scale).min(0.9 * nyq), bandwidth_hz, sr))
            }
            _ => None,
        })
        .collect();
    let bursts: Vec<usize> = u
        .phones
        .iter()
        .enumerate()
        .filter(|(_, (p, _))| matches!(p.kind, PhoneKind::Stop { .. }))
        .map(|(j, _)| ((bounds[j] + 0.7 * (bounds[j + 1] - bounds[j])) * len as f64) as usize)
        .collect();
    let burst_len = (0.015 * sr) as usize;
    let max_h = 64;
    let mut phase = vec![0.0; max_h];
    let mut gains = vec![0.0; max_h];
    let vibrato = rng::uniform(rng, 4.0, 6.0);
    let mut out = Vec::with_capacity(len);
    for n in 0..len {
        let tau = n as f64 / len as f64;
        if n % 16 == 0 {
            segment_weights(bounds, tau, &mut weights);
        }
        let mut voicing = 0.0;
        let mut formants = [0.0; 3];
        let mut vowel_w = 0.0;
        for (j, (p, _)) in u.phones.iter().enumerate() {
            match p.kind {
                PhoneKind::Vowel { formants: f } => {
                    voicing += weights[j];
                    vowel_w += weights[j];
                    for k in 0..3 {
                        formants[k] += weights[j] * f[k];
                    }
                }
                PhoneKind::Stop { voiced: true } => voicing += 0.08 * weights[j],
                _ => {}
            }
        }
        if vowel_w > 1e-9 {
            formants.iter_mut().for_each(|f| *f *= subj.formant_scale / vowel_w);
        } else {
            formants = [500.0, 1500.0, 2500.0];
        }
        let f0 = subj.f0 * (1.0 + 0.08 * (0.5 - tau) + 0.01 * (2.0 * PI * vibrato * n as f64 / sr).sin());
        if n % 16 == 0 {
            for (h, g) in gains.iter_mut().enumerate() {
                let fh = f0 * (h + 1) as f64;
                *g = if fh < 0.95 * nyq {
                    let res: f64 = formants
                        .iter()
                        .zip([90.0, 120.0, 180.0])
                        .map(|(&fc, bw)| 1.0 / (1.0 + ((fh - fc) / bw).powi(2)))
                        .sum();
                    res / (1.0 + fh / 1500.0)
                } else {
                    0.0
                };
            }
        }
        let mut v = 0.0;
        if voicing > 1e-4 {
            for (h, ph) in phase.iter_mut().enumerate() {
                *ph = (*ph + 2.0 * PI * f0 * (h + 1) as f64 / sr) % (2.0 * PI);
                v += gains[h] * ph.sin();
            }
            v *= voicing;
        } else {
            for (h, ph) in phase.iter_mut().enumerate() {
                *ph = (*ph + 2.0 * PI * f0 * (h + 1) as f64 / sr) % (2.0 * PI);
            }
        }
        let white = rng::normal(rng);
        for (j, f) in filters.iter_mut().enumerate() {
            if let Some(bp) = f {
                v += 2.5 * weights[j] * bp.tick(white);
            }
        }
        for &b in &bursts {
            if n >= b && n < b + burst_len {
                v += 0.6 * (-((n - b) as f64) / (0.3 * burst_len as f64)).exp() * white;
            }
        }
        out.push(v);
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        out.iter_mut().for_each(|v| *v *= 0.5 / peak);
    }
    Waveform::new(out, sr as u32)
}

fn synth_motion(bounds: &[f64], u: &UtteranceTemplate, anatomy: &Anatomy, subj: &Subject, width: usize, rng: &mut Rng) -> Array2<f64> {
    let f = anatomy.offsets.len();
    let mut weights = vec![0.0; u.phones.len()];
    let mut x = Array2::zeros((f, width));
    for y in 0..width {
        let tau = (y as f64 + 0.5) / width as f64;
        segment_weights(bounds, tau, &mut weights);
        let mut z = [0.0; ARTICULATORS];
        for (w, (p, _)) in weights.iter().zip(&u.phones) {
            for (zk, a) in z.iter_mut().zip(p.articulators) {
                *zk += w * a;
            }
        }
        for i in 0..f {
            let mut act = anatomy.offsets[i];
            for (k, zk) in z.iter().enumerate() {
                act += (anatomy.loadings[[i, k]] + subj.loading_delta[[i, k]]) * zk;
            }
            // softplus keeps features non-negative and smooth
            let v = (3.0 * act).max(0.0) / 3.0 + (-(3.0 * act).abs()).exp().ln_1p() / 3.0;
            x[[i, y]] = v + 0.01 + 0.01 * rng::normal(rng).abs();
        }
    }
    x
}

fn draw_subject(spec: &SyntheticCorpusSpec, rng: &mut Rng) -> Subject {
    Subject {
        formant_scale: 1.0 + rng::uniform(rng, -spec.formant_scale, spec.formant_scale + 1e-12),
        f0: rng::uniform(rng, spec.f0_range.0, spec.f0_range.1 + 1e-9),
        loading_delta: Array2::from_shape_simple_fn((spec.motion_features, ARTICULATORS), || {
            spec.motion_scale * rng::normal(rng)
        }),
    }
}

/// Factorisation of the motion of every utterance at nominal timing with no
/// subject perturbation, laid side by side.
fn reference_factors(spec: &SyntheticCorpusSpec, anatomy: &Anatomy, seed: u64) -> Result<NmfFactors> {
    const WIDTH: usize = 1000;
    let mut rng = rng::stream(seed, 500);
    let neutral = Subject {
        formant_scale: 1.0,
        f0: spec.f0_range.0,
        loading_delta: Array2::zeros((spec.motion_features, ARTICULATORS)),
    };
    let parts: Vec<Array2<f64>> = spec
        .utterances
        .iter()
        .map(|u| synth_motion(&boundaries(u, 0.0, &mut rng), u, anatomy, &neutral, WIDTH, &mut rng))
        .collect();
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    let x = MotionFeatureMatrix::new(ndarray::concatenate(ndarray::Axis(1), &views).expect("equal row counts"))?;
    let graph = build_knn_graph(x.view(), spec.nmf.k_neighbors)?;
    let cfg = NmfConfig { seed, max_iters: spec.nmf.max_iters.max(200), ..spec.nmf.clone() };
    let mut f = nmf_factorize(&x, &cfg, &graph)?;
    f.sort_rows_by_centroid();
    Ok(f)
}

fn uniform_usize(rng: &mut Rng, lo: usize, hi: usize) -> usize {
    use rand::Rng as _;
    rng.gen_range(lo..=hi)
}

/// Generates `n_subjects x utterances x repetitions` samples in that
/// nesting order. Each sample draws from its own RNG stream, so the output
/// depends only on `seed` and the spec.
pub fn generate_synthetic_corpus(spec: &SyntheticCorpusSpec, seed: u64) -> Result<Vec<Sample>> {
    generate_synthetic_corpus_with(spec, seed, |_, _| {})
}

/// As [`generate_synthetic_corpus`], reporting `(done, total)` after each
/// sample.
pub fn generate_synthetic_corpus_with(
    spec: &SyntheticCorpusSpec,
    seed: u64,
    mut progress: impl FnMut(usize, usize),
) -> Result<Vec<Sample>> {
    spec.validate()?;
    let analyzer = MelAnalyzer::new(spec.mel.clone())?;
    let sr = spec.mel.sample_rate as f64;
    let mut anatomy_rng = rng::stream(seed, 0);
    let anatomy = Anatomy {
        loadings: Array2::from_shape_simple_fn((spec.motion_features, ARTICULATORS), || rng::normal(&mut anatomy_rng)),
        offsets: (0..spec.motion_features).map(|_| rng::uniform(&mut anatomy_rng, -1.0, 0.5)).collect(),
    };
    let reference = match spec.row_alignment {
        RowAlignment::Reference => Some(reference_factors(spec, &anatomy, seed)?),
        RowAlignment::Centroid => None,
    };
    let total = spec.n_subjects * spec.utterances.len() * spec.repetitions;
    let mut out = Vec::with_capacity(total);
    for si in 0..spec.n_subjects {
        let subj = draw_subject(spec, &mut rng::stream(seed, 1 + si as u64));
        for (ui, u) in spec.utterances.iter().enumerate() {
            for rep in 0..spec.repetitions {
                let idx = (si * spec.utterances.len() + ui) * spec.repetitions + rep;
                let mut rng = rng::stream(seed, 1_000 + idx as u64);
                let bounds = boundaries(u, spec.timing_jitter, &mut rng);
                let width = uniform_usize(&mut rng, spec.width_range.0, spec.width_range.1);
                let len = uniform_usize(&mut rng, spec.audio_len_range.0, spec.audio_len_range.1);
                let audio = synth_audio(u, &bounds, &subj, len, sr, &mut rng)?;
                let crop = audio.crop((len - spec.mel.crop_len) / 2, spec.mel.crop_len)?;
                let s = analyzer.spectrogram(&crop)?.grid;
                let x = MotionFeatureMatrix::new(synth_motion(&bounds, u, &anatomy, &subj, width, &mut rng))?;
                let graph = build_knn_graph(x.view(), spec.nmf.k_neighbors)?;
                let nmf_cfg = NmfConfig { seed: seed ^ idx as u64, ..spec.nmf.clone() };
                let factors = match &reference {
                    Some(r) => {
                        let mut f = nmf_factorize_from(&x, &nmf_cfg, &graph, Some(&r.w))?;
                        f.align_rows_to(&r.w)?;
                        f
                    }
                    None => {
                        let mut f = nmf_factorize(&x, &nmf_cfg, &graph)?;
                        f.sort_rows_by_centroid();
                        f
                    }
                };
                out.push(Sample {
                    h: factors.h,
                    s,
                    subject_id: subject_name(si),
                    utterance_id: u.name.clone(),
                    audio: Some(audio),
                });
                progress(out.len(), total);
            }
        }
    }
    Ok(out)
}
