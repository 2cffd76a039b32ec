//! Command-line front end. Each subcommand returns a [`Report`] whose
//! [`Display`](std::fmt::Display) form is the single `key=value` summary
//! line printed on stdout; details go to the log.

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use ndarray::Array2;

use crate::dsp::{read_wav_expecting, write_wav, GriffinLimConfig, MelAnalyzer, MelConfig, MelSpectrogram};
use crate::error::{Error, Result};
use crate::io::{self, ManifestRecord, ProjectConfig};
use crate::model::{ModelConfig, Translator};
use crate::nmf::{build_knn_graph, nmf_factorize, MotionFeatureMatrix, NmfConfig};
use crate::tensor::gradcheck::check_primitives;
use crate::tensor::{checkpoint, ParamStore, Real};
use crate::train::{
    check_model_gradients, evaluate, generate_synthetic_corpus_with, grid_of, h_tensor, leave_one_out, summarize, train,
    Sample, Targets, TrainConfig, METRICS_HEADER, TRAIN_LOG_HEADER,
};

const EXIT_CODES: &str = "Exit codes:\n  0  success\n  1  usage error (bad flags or arguments)\n  2  input error (missing file, malformed container, manifest or config)\n  3  numerical failure (divergence, non-finite values, failed gradient check)";

/// Gradient threshold for `gradcheck`.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Parser, Debug)]
#[command(name = "plastic-speech", version, about = "Synthesize speech spectrograms from NMF weighting maps", after_help = EXIT_CODES)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Seed for every random choice a command makes.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Append detailed logs to this file instead of stderr.
    #[arg(long, global = true, value_name = "PATH")]
    pub log_file: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Factorize a motion-feature container into W, H and an objective trace.
    Factorize(FactorizeArgs),
    /// Translate a weighting map into a 64x64 mel-spectrogram (and audio).
    Synthesize(SynthesizeArgs),
    /// Train the translator on a corpus manifest.
    Train(TrainArgs),
    /// Score a checkpoint on every sample of a corpus.
    Eval(EvalArgs),
    /// Generate the synthetic paired corpus.
    GenCorpus(GenCorpusArgs),
    /// Finite-difference gradient checks.
    Gradcheck(GradcheckArgs),
    /// Render a matrix container or a CSV column as a PGM image.
    Plot(PlotArgs),
    /// Subject-independent leave-one-out evaluation.
    Loo(LooArgs),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Args, Debug)]
pub struct FactorizeArgs {
    /// Motion-feature matrix (features x samples) in an NMFH container.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub rank: usize,
    /// Graph regularization weight.
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    /// Sparsity weight.
    #[arg(long, default_value_t = 0.1)]
    pub eta: f64,
    /// Neighbours per column in the k-NN graph.
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 200)]
    pub max_iters: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct SynthesizeArgs {
    /// Weighting map container.
    #[arg(long)]
    pub h: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Project config giving the model and dsp settings (defaults otherwise).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output spectrogram container.
    #[arg(long)]
    pub out: PathBuf,
    /// Also reconstruct audio with Griffin-Lim.
    #[arg(long)]
    pub wav: Option<PathBuf>,
    /// Also write the spectrogram as a PGM image.
    #[arg(long)]
    pub plot: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Precision::F32)]
    pub precision: Precision,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Corpus manifest; overrides `[paths] corpus`.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Overrides `[paths] out_dir`.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Hold out this subject for per-epoch validation and model selection.
    #[arg(long)]
    pub val_subject: Option<String>,
    #[arg(long, value_enum, default_value_t = Precision::F32)]
    pub precision: Precision,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    /// Per-sample metrics CSV.
    #[arg(long)]
    pub metrics: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Precision::F32)]
    pub precision: Precision,
}

#[derive(Args, Debug)]
pub struct GenCorpusArgs {
    /// Project config whose `[corpus]` section describes the corpus.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Scope {
    /// Every autodiff primitive on small random inputs.
    Ops,
    /// The full training objectives with respect to the model parameters.
    Model,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    #[arg(long, value_enum, default_value_t = Scope::Ops)]
    pub scope: Scope,
    /// Random instances per primitive (ops scope).
    #[arg(long, default_value_t = 3)]
    pub instances: usize,
}

#[derive(Args, Debug)]
pub struct PlotArgs {
    /// An NMFH container (drawn as a heat map) or a CSV file (drawn as a
    /// line chart of one column).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// CSV column to draw; the last numeric column by default.
    #[arg(long)]
    pub column: Option<String>,
    /// Draw row 0 at the top instead of the bottom.
    #[arg(long)]
    pub no_flip: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TargetsArg {
    Paired,
    Permuted,
}

#[derive(Args, Debug)]
pub struct LooArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Comma-separated training seeds; `--seed` alone by default.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    #[arg(long, value_enum, default_value_t = TargetsArg::Paired)]
    pub targets: TargetsArg,
    /// Per-sample metrics CSV.
    #[arg(long)]
    pub metrics: PathBuf,
    /// Per-epoch training log CSV.
    #[arg(long)]
    pub train_log: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Precision::F32)]
    pub precision: Precision,
}

/// Outcome of a command: summary pairs and the process exit code.
#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub pairs: Vec<(String, String)>,
    pub exit_code: i32,
}

impl Report {
    fn new(command: &str) -> Self {
        Report { pairs: vec![("command".into(), command.into())], exit_code: 0 }
    }

    fn with(mut self, key: &str, value: impl fmt::Display) -> Self {
        self.pairs.push((key.into(), value.to_string().replace(char::is_whitespace, "_")));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.pairs.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.pairs.iter().map(|(k, v)| format!("{k}={v}")).collect();
        f.write_str(&parts.join(" "))
    }
}

/// Sends `log` output to `path` (appending) or to stderr.
pub fn init_logging(path: Option<&Path>) -> Result<()> {
    let mut b = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"));
    if let Some(p) = path {
        let file = fs::OpenOptions::new().create(true).append(true).open(p)?;
        b.target(env_logger::Target::Pipe(Box::new(file)));
    }
    // A second initialisation (tests running several commands) is harmless.
    let _ = b.try_init();
    Ok(())
}

/// Parses `args`, runs the command and prints the summary line. Returns the
/// process exit code.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    if let Err(e) = init_logging(cli.log_file.as_deref()) {
        eprintln!("error: {e}");
        return e.exit_code();
    }
    match run(&cli) {
        Ok(report) => {
            println!("{report}");
            report.exit_code
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<Report> {
    let seed = cli.seed;
    match &cli.command {
        Command::Factorize(a) => factorize(a, seed),
        Command::Synthesize(a) => synthesize(a, seed),
        Command::Train(a) => train_cmd(a, seed),
        Command::Eval(a) => eval(a),
        Command::GenCorpus(a) => gen_corpus(a, seed),
        Command::Gradcheck(a) => gradcheck(a, seed),
        Command::Plot(a) => plot(a),
        Command::Loo(a) => loo(a, seed),
    }
}

fn load_config(path: Option<&Path>) -> Result<ProjectConfig> {
    match path {
        Some(p) => ProjectConfig::load(p),
        None => Ok(ProjectConfig::default()),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::InvalidInput(format!("cannot create {}: {e}", dir.display())))
}

fn factorize(a: &FactorizeArgs, seed: u64) -> Result<Report> {
    if a.rank == 0 {
        return Err(Error::Usage("--rank must be at least 1".into()));
    }
    let config = NmfConfig { rank: a.rank, lambda: a.lambda, eta: a.eta, k_neighbors: a.k, max_iters: a.max_iters, seed, ..NmfConfig::default() };
    config.validate().map_err(|e| Error::Usage(e.to_string()))?;
    let x = MotionFeatureMatrix::new(io::read_matrix(&a.input)?)
        .map_err(|e| Error::Format(format!("{}: {e}", a.input.display())))?;
    let graph = build_knn_graph(x.view(), a.k)?;
    let f = nmf_factorize(&x, &config, &graph)?;
    create_dir(&a.out_dir)?;
    io::write_matrix(a.out_dir.join("W.nmfh"), &f.w)?;
    io::write_matrix(a.out_dir.join("H.nmfh"), &f.h)?;
    // One row per iteration run; the initial objective is not an iteration.
    let rows = f.objective_trace.iter().enumerate().skip(1).map(|(i, v)| [i.to_string(), v.to_string()]);
    io::write_csv(&a.out_dir.join("trace.csv"), &["iteration", "objective"], rows)?;
    let iterations = f.objective_trace.len() - 1;
    info!("factorized {}x{} at rank {} in {iterations} iterations", x.features(), x.samples(), a.rank);
    Ok(Report::new("factorize")
        .with("rank", a.rank)
        .with("iterations", iterations)
        .with("objective", f.objective_trace.last().copied().unwrap_or(f64::NAN))
        .with("out_dir", a.out_dir.display()))
}

fn load_translator<T: Real>(model: &ModelConfig, path: &Path) -> Result<(Translator, ParamStore<T>)> {
    let values = checkpoint::load(path).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })?;
    let (t, mut store) = Translator::init::<T>(model, 0)?;
    store.load_values(&values)?;
    Ok((t, store))
}

fn predict<T: Real>(model: &ModelConfig, checkpoint: &Path, h: &Array2<f64>) -> Result<(Array2<f64>, f64)> {
    let (t, store) = load_translator::<T>(model, checkpoint)?;
    let start = Instant::now();
    let s = grid_of(&t.synthesize(&store, &h_tensor::<T>(h))?);
    Ok((s, start.elapsed().as_secs_f64()))
}

fn synthesize(a: &SynthesizeArgs, seed: u64) -> Result<Report> {
    let cfg = load_config(a.config.as_deref())?;
    let h = io::read_matrix(&a.h)?;
    if h.nrows() != cfg.model.rows {
        return Err(Error::Format(format!("{}: H has {} rows, expected {}", a.h.display(), h.nrows(), cfg.model.rows)));
    }
    if h.ncols() > cfg.model.max_width {
        return Err(Error::InvalidInput(format!("H width {} exceeds the maximum {}", h.ncols(), cfg.model.max_width)));
    }
    let (spec, secs) = match a.precision {
        Precision::F32 => predict::<f32>(&cfg.model, &a.checkpoint, &h)?,
        Precision::F64 => predict::<f64>(&cfg.model, &a.checkpoint, &h)?,
    };
    info!("synthesized {}x{} -> {:?} in {:.1} ms", h.nrows(), h.ncols(), spec.dim(), secs * 1e3);
    io::write_matrix(&a.out, &spec)?;
    if let Some(p) = &a.plot {
        io::write_pgm(p, &spec, true)?;
    }
    if let Some(p) = &a.wav {
        let mel = MelSpectrogram::new(spec.mapv(|v| v.clamp(0.0, 1.0)), cfg.mel.clone())?;
        let gl = GriffinLimConfig { seed, ..cfg.griffin_lim.clone() };
        write_wav(p, &MelAnalyzer::new(cfg.mel.clone())?.griffin_lim(&mel, &gl)?)?;
    }
    Ok(Report::new("synthesize")
        .with("width", h.ncols())
        .with("rows", spec.nrows())
        .with("cols", spec.ncols())
        .with("inference_ms", format!("{:.1}", secs * 1e3))
        .with("out", a.out.display()))
}

/// Reads a manifest into samples, recomputing each target from the centre
/// crop of its recording.
pub fn load_corpus(manifest: &Path, mel: &MelConfig) -> Result<Vec<Sample>> {
    let analyzer = MelAnalyzer::new(mel.clone())?;
    io::read_manifest(manifest)?
        .into_iter()
        .map(|r| {
            let h = io::read_matrix(&r.h_path)?;
            let (audio, _) = read_wav_expecting(&r.wav_path, mel.sample_rate)?;
            if audio.len() < mel.crop_len {
                return Err(Error::Format(format!(
                    "{}: {} samples, shorter than the {}-sample crop",
                    r.wav_path.display(),
                    audio.len(),
                    mel.crop_len
                )));
            }
            let crop = audio.crop((audio.len() - mel.crop_len) / 2, mel.crop_len)?;
            let s = analyzer.spectrogram(&crop)?.grid;
            Ok(Sample { h, s, subject_id: r.subject_id, utterance_id: r.utterance_id, audio: Some(audio) })
        })
        .collect()
}

fn corpus_path(arg: Option<&PathBuf>, cfg: &ProjectConfig) -> Result<PathBuf> {
    arg.or(cfg.paths.corpus.as_ref())
        .cloned()
        .ok_or_else(|| Error::Usage("no corpus manifest: pass --corpus or set [paths] corpus".into()))
}

fn train_cmd(a: &TrainArgs, seed: u64) -> Result<Report> {
    let mut cfg = load_config(a.config.as_deref())?;
    let manifest = corpus_path(a.corpus.as_ref(), &cfg)?;
    let out_dir = a
        .out_dir
        .clone()
        .or(cfg.paths.out_dir.clone())
        .ok_or_else(|| Error::Usage("no output directory: pass --out-dir or set [paths] out_dir".into()))?;
    cfg.train.seed = seed;
    let samples = load_corpus(&manifest, &cfg.mel)?;
    let (val_idx, train_idx): (Vec<usize>, Vec<usize>) = match &a.val_subject {
        Some(v) => (0..samples.len()).partition(|&i| samples[i].subject_id == *v),
        None => (Vec::new(), (0..samples.len()).collect()),
    };
    if a.val_subject.is_some() && val_idx.is_empty() {
        return Err(Error::InvalidInput(format!("no samples for validation subject {:?}", a.val_subject)));
    }
    info!("training on {} samples, validating on {}", train_idx.len(), val_idx.len());
    create_dir(&out_dir)?;
    let (history, best_epoch) = match a.precision {
        Precision::F32 => train_and_save::<f32>(&samples, &train_idx, &val_idx, &cfg, &out_dir)?,
        Precision::F64 => train_and_save::<f64>(&samples, &train_idx, &val_idx, &cfg, &out_dir)?,
    };
    let kept = &history[best_epoch - 1];
    // Paths are machine-specific; the saved config records settings only.
    let saved = ProjectConfig { paths: Default::default(), ..cfg.clone() };
    fs::write(out_dir.join("config.ini"), saved.to_ini_string())?;
    let mut r = Report::new("train")
        .with("samples", train_idx.len())
        .with("epochs", history.len())
        .with("best_epoch", best_epoch)
        .with("train_corr2d", kept.train_corr2d);
    if let Some(v) = kept.val_corr2d {
        r = r.with("val_corr2d", v);
    }
    Ok(r.with("checkpoint", out_dir.join("model.pltc").display()))
}

fn train_and_save<T: Real>(
    samples: &[Sample],
    train_idx: &[usize],
    val_idx: &[usize],
    cfg: &ProjectConfig,
    out_dir: &Path,
) -> Result<(Vec<crate::train::EpochLog>, usize)> {
    let out = train::<T>(samples, train_idx, val_idx, &cfg.model, &cfg.train, &cfg.mel)?;
    checkpoint::save(&out.params, &out_dir.join("model.pltc"))?;
    checkpoint::save(&out.critic_params, &out_dir.join("critic.pltc"))?;
    let rows = out.history.iter().map(|e| e.record("all", cfg.train.seed));
    io::write_csv(&out_dir.join("train_log.csv"), &TRAIN_LOG_HEADER, rows)?;
    Ok((out.history, out.best_epoch))
}

fn eval(a: &EvalArgs) -> Result<Report> {
    let cfg = load_config(a.config.as_deref())?;
    let samples = load_corpus(&a.corpus, &cfg.mel)?;
    let idx: Vec<usize> = (0..samples.len()).collect();
    let metrics = match a.precision {
        Precision::F32 => {
            let (t, p) = load_translator::<f32>(&cfg.model, &a.checkpoint)?;
            evaluate(&t, &p, &samples, &idx, &cfg.mel)?
        }
        Precision::F64 => {
            let (t, p) = load_translator::<f64>(&cfg.model, &a.checkpoint)?;
            evaluate(&t, &p, &samples, &idx, &cfg.mel)?
        }
    };
    let rows = metrics.iter().map(|m| {
        let s = &samples[m.index];
        [m.index.to_string(), s.subject_id.clone(), s.utterance_id.clone(), m.corr2d.to_string(), m.lsd.to_string()]
    });
    io::write_csv(&a.metrics, &["sample", "subject_id", "utterance_id", "corr2d", "lsd"], rows)?;
    let n = metrics.len().max(1) as f64;
    Ok(Report::new("eval")
        .with("samples", metrics.len())
        .with("mean_corr2d", metrics.iter().map(|m| m.corr2d).sum::<f64>() / n)
        .with("mean_lsd", metrics.iter().map(|m| m.lsd).sum::<f64>() / n)
        .with("metrics", a.metrics.display()))
}

fn gen_corpus(a: &GenCorpusArgs, seed: u64) -> Result<Report> {
    let cfg = load_config(a.spec.as_deref())?;
    let samples = generate_synthetic_corpus_with(&cfg.corpus, seed, |done, total| info!("generated sample {done}/{total}"))?;
    create_dir(&a.out_dir.join("h"))?;
    create_dir(&a.out_dir.join("wav"))?;
    let mut records = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let h_path = a.out_dir.join("h").join(format!("{i:04}.nmfh"));
        let wav_path = a.out_dir.join("wav").join(format!("{i:04}.wav"));
        io::write_matrix(&h_path, &s.h)?;
        match &s.audio {
            Some(w) => write_wav(&wav_path, w)?,
            None => return Err(Error::Numerical(format!("sample {i} has no recording"))),
        }
        records.push(ManifestRecord { subject_id: s.subject_id.clone(), utterance_id: s.utterance_id.clone(), h_path, wav_path });
    }
    let manifest = a.out_dir.join("manifest.csv");
    io::write_manifest(&manifest, &records)?;
    let saved = ProjectConfig { paths: Default::default(), ..cfg };
    fs::write(a.out_dir.join("corpus.ini"), saved.to_ini_string())?;
    Ok(Report::new("gen-corpus")
        .with("samples", samples.len())
        .with("subjects", saved.corpus.n_subjects)
        .with("manifest", manifest.display()))
}

fn gradcheck(a: &GradcheckArgs, seed: u64) -> Result<Report> {
    let start = Instant::now();
    let results: Vec<(String, f64)> = match a.scope {
        Scope::Ops => {
            if a.instances == 0 {
                return Err(Error::Usage("--instances must be at least 1".into()));
            }
            check_primitives(seed, a.instances)?.into_iter().map(|c| (c.name.to_string(), c.max_relative_error)).collect()
        }
        Scope::Model => check_model_gradients(seed)?
            .into_iter()
            .map(|(name, r)| {
                info!("{name}: {} coordinates, {} skipped at kinks, {} unresolved", r.coords_checked, r.coords_skipped, r.coords_unresolved);
                (name.to_string(), r.max_relative_error)
            })
            .collect(),
    };
    for (name, err) in &results {
        info!("{name}: max relative error {err:.3e}");
    }
    let failed: Vec<&str> = results.iter().filter(|(_, e)| !(*e < GRADCHECK_TOLERANCE)).map(|(n, _)| n.as_str()).collect();
    let (worst_name, worst) = results
        .iter()
        .max_by(|x, y| x.1.total_cmp(&y.1))
        .map(|(n, e)| (n.as_str(), *e))
        .unwrap_or(("none", 0.0));
    for name in &failed {
        warn!("gradient check failed for {name}");
    }
    let mut r = Report::new("gradcheck")
        .with("scope", format!("{:?}", a.scope).to_lowercase())
        .with("checks", results.len())
        .with("failed", failed.len())
        .with("max_rel_err", format!("{worst:.3e}"))
        .with("worst", worst_name)
        .with("seconds", format!("{:.1}", start.elapsed().as_secs_f64()));
    if !failed.is_empty() {
        r.exit_code = 3;
    }
    Ok(r)
}

/// Size of CSV line charts in pixels; longer series get one column per
/// value.
const CHART_HEIGHT: usize = 200;
const CHART_MIN_WIDTH: usize = 400;

/// Rasterizes `values` as a polyline with 0 on the line and 1 elsewhere.
/// Non-finite values break the line.
pub fn line_chart(values: &[f64]) -> Array2<f64> {
    let width = values.len().max(CHART_MIN_WIDTH);
    let mut img = Array2::from_elem((CHART_HEIGHT, width), 1.0);
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() {
        return img;
    }
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let row = |v: f64| -> f64 {
        let frac = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
        (1.0 - frac) * (CHART_HEIGHT - 1) as f64
    };
    let col = |i: usize| -> usize {
        if values.len() < 2 {
            0
        } else {
            (i as f64 * (width - 1) as f64 / (values.len() - 1) as f64).round() as usize
        }
    };
    let mut draw = |c: usize, r0: f64, r1: f64| {
        let (a, b) = (r0.min(r1).round() as usize, r0.max(r1).round() as usize);
        for r in a..=b {
            img[[r, c]] = 0.0;
        }
    };
    let mut prev: Option<(usize, f64)> = None;
    for (i, v) in values.iter().enumerate() {
        if !v.is_finite() {
            prev = None;
            continue;
        }
        let (c, r) = (col(i), row(*v));
        match prev {
            Some((pc, pr)) => {
                // Each column spans the segment's rows between its two edges.
                let at = |x: f64| pr + (r - pr) * (x - pc as f64) / (c - pc) as f64;
                for x in pc..=c {
                    let (x0, x1) = ((x as f64 - 0.5).max(pc as f64), (x as f64 + 0.5).min(c as f64));
                    draw(x, at(x0), at(x1));
                }
            }
            None => draw(c, r, r),
        }
        prev = Some((c, r));
    }
    img
}

fn plot(a: &PlotArgs) -> Result<Report> {
    let ext = a.input.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    let (grid, flip, what) = match ext.as_str() {
        "csv" => {
            let (header, rows) = io::read_csv(&a.input)?;
            let numeric = |j: usize| rows.iter().all(|r| r.get(j).is_some_and(|v| v.is_empty() || v.parse::<f64>().is_ok()));
            let col = match &a.column {
                Some(name) => header
                    .iter()
                    .position(|h| h == name)
                    .ok_or_else(|| Error::Usage(format!("no column {name:?} in {}", a.input.display())))?,
                None => (0..header.len())
                    .rev()
                    .find(|&j| numeric(j))
                    .ok_or_else(|| Error::Format(format!("{}: no numeric column", a.input.display())))?,
            };
            let values = rows
                .iter()
                .map(|r| match r.get(col).map(String::as_str) {
                    Some("") | None => Ok(f64::NAN),
                    Some(v) => v.parse::<f64>().map_err(|_| Error::Format(format!("{}: {v:?} is not a number", a.input.display()))),
                })
                .collect::<Result<Vec<f64>>>()?;
            (line_chart(&values), false, header[col].clone())
        }
        _ => (io::read_matrix(&a.input)?, !a.no_flip, "matrix".to_string()),
    };
    io::write_pgm(&a.out, &grid, flip)?;
    Ok(Report::new("plot")
        .with("source", what)
        .with("width", grid.ncols())
        .with("height", grid.nrows())
        .with("out", a.out.display()))
}

fn loo(a: &LooArgs, seed: u64) -> Result<Report> {
    let cfg = load_config(a.config.as_deref())?;
    let samples = load_corpus(&corpus_path(a.corpus.as_ref(), &cfg)?, &cfg.mel)?;
    let seeds = if a.seeds.is_empty() { vec![seed] } else { a.seeds.clone() };
    let targets = match a.targets {
        TargetsArg::Paired => Targets::Paired,
        TargetsArg::Permuted => Targets::Permuted,
    };
    let tc: &TrainConfig = &cfg.train;
    let result = match a.precision {
        Precision::F32 => leave_one_out::<f32>(&samples, &cfg.model, tc, &seeds, targets, &cfg.mel)?,
        Precision::F64 => leave_one_out::<f64>(&samples, &cfg.model, tc, &seeds, targets, &cfg.mel)?,
    };
    io::write_csv(&a.metrics, &METRICS_HEADER, result.rows.iter().map(|r| r.record()))?;
    if let Some(p) = &a.train_log {
        let rows = result.logs.iter().flat_map(|(fold, s, h)| h.iter().map(move |e| e.record(fold, *s)));
        io::write_csv(p, &TRAIN_LOG_HEADER, rows)?;
    }
    let s = summarize(&result.rows);
    Ok(Report::new("loo")
        .with("targets", format!("{:?}", a.targets).to_lowercase())
        .with("seeds", seeds.len())
        .with("samples", s.n)
        .with("mean_corr2d", s.mean_corr2d)
        .with("std_over_seeds", s.std_over_seeds)
        .with("mean_lsd", s.mean_lsd)
        .with("metrics", a.metrics.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_is_key_value_line() {
        let r = Report::new("x").with("path", "a b").with("n", 3);
        assert_eq!(r.to_string(), "command=x path=a_b n=3");
        assert_eq!(r.get("n"), Some("3"));
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(main_with_args(["plastic-speech", "no-such-command"]), 1);
        assert_eq!(main_with_args(["plastic-speech", "factorize", "--out-dir", "x"]), 1);
    }

    #[test]
    fn line_chart_connects_points() {
        let img = line_chart(&[0.0, 1.0, 0.5]);
        let w = CHART_MIN_WIDTH;
        assert_eq!(img.dim(), (CHART_HEIGHT, w));
        assert_eq!(img[[CHART_HEIGHT - 1, 0]], 0.0);
        assert_eq!(img[[0, (w - 1) / 2 + 1]], 0.0);
        assert_eq!(img[[(CHART_HEIGHT - 1) / 2, w - 1]], 0.0);
        // every column is inked, and the line is unbroken
        for c in 0..w {
            assert!(img.column(c).iter().any(|v| *v == 0.0), "column {c}");
        }
        assert_eq!(line_chart(&vec![1.0; 1000]).ncols(), 1000);
    }
}
