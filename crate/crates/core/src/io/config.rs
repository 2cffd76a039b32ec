//! Project config: INI-style `key = value` lines under `[dsp]`, `[nmf]`,
//! `[model]`, `[train]`, `[corpus]` and `[paths]`. Unknown sections and keys
//! are errors; missing keys keep their defaults.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ini::Ini;

use crate::dsp::{GriffinLimConfig, MelConfig};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::nmf::NmfConfig;
use crate::train::{GeneratorLoss, MseReduction, OptimizerKind, RowAlignment, SyntheticCorpusSpec, TrainConfig, UtteranceTemplate};

/// Locations used by the commands. Relative entries in a config file are
/// resolved against the file's directory.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ProjectPaths {
    pub corpus: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProjectConfig {
    pub mel: MelConfig,
    pub griffin_lim: GriffinLimConfig,
    pub nmf: NmfConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub corpus: SyntheticCorpusSpec,
    pub paths: ProjectPaths,
}

impl Default for ProjectConfig {
    fn default() -> Self {
        let mut cfg = ProjectConfig {
            mel: MelConfig::default(),
            griffin_lim: GriffinLimConfig::default(),
            nmf: NmfConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            corpus: SyntheticCorpusSpec::default(),
            paths: ProjectPaths::default(),
        };
        cfg.sync();
        cfg
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn parse_two<T: FromStr>(key: &str, v: &str) -> Result<(T, T)> {
    match v.split(',').collect::<Vec<_>>()[..] {
        [a, b] => Ok((parse(key, a)?, parse(key, b)?)),
        _ => Err(Error::Config(format!("{key}: expected two comma-separated values, got {v:?}"))),
    }
}

fn unknown(section: &str, key: &str) -> Error {
    Error::Config(format!("unknown key {key:?} in [{section}]"))
}

impl ProjectConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse_str(&text, base).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Parses config text, resolving relative paths against `base`.
    pub fn parse_str(text: &str, base: &Path) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| Error::Config(format!("syntax: {e}")))?;
        let mut cfg = ProjectConfig::default();
        for (section, props) in ini.iter() {
            let Some(section) = section else {
                if let Some((k, _)) = props.iter().next() {
                    return Err(Error::Config(format!("key {k:?} outside any section")));
                }
                continue;
            };
            for (k, v) in props.iter() {
                match section {
                    "dsp" => cfg.set_dsp(k, v)?,
                    "nmf" => cfg.set_nmf(k, v)?,
                    "model" => cfg.model.set(k, v)?,
                    "train" => cfg.set_train(k, v)?,
                    "corpus" => cfg.set_corpus(k, v)?,
                    "paths" => {
                        let p = Some(base.join(v.trim()));
                        match k {
                            "corpus" => cfg.paths.corpus = p,
                            "out_dir" => cfg.paths.out_dir = p,
                            "checkpoint" => cfg.paths.checkpoint = p,
                            _ => return Err(unknown(section, k)),
                        }
                    }
                    _ => return Err(Error::Config(format!("unknown section [{section}]"))),
                }
            }
        }
        cfg.sync();
        cfg.model.validate()?;
        cfg.train.validate()?;
        cfg.corpus.validate()?;
        Ok(cfg)
    }

    /// The corpus generator shares the `[dsp]` and `[nmf]` settings.
    fn sync(&mut self) {
        self.corpus.mel = self.mel.clone();
        self.corpus.nmf = self.nmf.clone();
    }

    fn set_dsp(&mut self, k: &str, v: &str) -> Result<()> {
        let m = &mut self.mel;
        let g = &mut self.griffin_lim;
        match k {
            "sample_rate" => m.sample_rate = parse(k, v)?,
            "fft_size" => m.fft_size = parse(k, v)?,
            "hop" => m.hop = parse(k, v)?,
            "n_mels" => m.n_mels = parse(k, v)?,
            "n_frames" => m.n_frames = parse(k, v)?,
            "fmin" => m.fmin = parse(k, v)?,
            "fmax" => m.fmax = if v.trim() == "nyquist" { None } else { Some(parse(k, v)?) },
            "floor_db" => m.floor_db = parse(k, v)?,
            "ref_db" => m.ref_db = parse(k, v)?,
            "crop_len" => m.crop_len = parse(k, v)?,
            "gl_iters" => g.iters = parse(k, v)?,
            "gl_nnls_iters" => g.nnls_iters = parse(k, v)?,
            "gl_momentum" => g.momentum = parse(k, v)?,
            "gl_peak" => g.peak = parse(k, v)?,
            _ => return Err(unknown("dsp", k)),
        }
        Ok(())
    }

    fn set_nmf(&mut self, k: &str, v: &str) -> Result<()> {
        let n = &mut self.nmf;
        match k {
            "rank" => n.rank = parse(k, v)?,
            "lambda" => n.lambda = parse(k, v)?,
            "eta" => n.eta = parse(k, v)?,
            "k_neighbors" => n.k_neighbors = parse(k, v)?,
            "max_iters" => n.max_iters = parse(k, v)?,
            "epsilon_floor" => n.epsilon_floor = parse(k, v)?,
            "tol" => n.tol = parse(k, v)?,
            _ => return Err(unknown("nmf", k)),
        }
        Ok(())
    }

    fn set_train(&mut self, k: &str, v: &str) -> Result<()> {
        let t = &mut self.train;
        match k {
            "optimizer" => t.optimizer = parse(k, v)?,
            "mse_reduction" => {
                t.mse_reduction = match v.trim() {
                    "sum" => MseReduction::Sum,
                    "mean" => MseReduction::Mean,
                    _ => return Err(Error::Config(format!("{k}: expected sum or mean, got {v:?}"))),
                }
            }
            "lr_t" => t.lr_t = parse(k, v)?,
            "lr_d" => t.lr_d = parse(k, v)?,
            "momentum" => t.momentum = parse(k, v)?,
            "beta" => t.beta = parse(k, v)?,
            "lambda_gan" => t.lambda_gan = parse(k, v)?,
            "epochs" => t.epochs = parse(k, v)?,
            "batch" => t.batch = parse(k, v)?,
            "mmd_bandwidths" => t.mmd_bandwidths = v.split(',').map(|b| parse(k, b)).collect::<Result<_>>()?,
            "generator_loss" => {
                t.generator_loss = match v.trim() {
                    "non_saturating" => GeneratorLoss::NonSaturating,
                    "literal" => GeneratorLoss::Literal,
                    _ => return Err(Error::Config(format!("{k}: expected non_saturating or literal, got {v:?}"))),
                }
            }
            "augment" => t.augment = parse(k, v)?,
            "augment_versions" => t.augment_versions = parse(k, v)?,
            _ => return Err(unknown("train", k)),
        }
        Ok(())
    }

    fn set_corpus(&mut self, k: &str, v: &str) -> Result<()> {
        let c = &mut self.corpus;
        match k {
            "n_subjects" => c.n_subjects = parse(k, v)?,
            "repetitions" => c.repetitions = parse(k, v)?,
            "formant_scale" => c.formant_scale = parse(k, v)?,
            "f0_range" => c.f0_range = parse_two(k, v)?,
            "motion_scale" => c.motion_scale = parse(k, v)?,
            "timing_jitter" => c.timing_jitter = parse(k, v)?,
            "motion_features" => c.motion_features = parse(k, v)?,
            "width_range" => c.width_range = parse_two(k, v)?,
            "audio_len_range" => c.audio_len_range = parse_two(k, v)?,
            "utterances" => {
                c.utterances = v
                    .split(';')
                    .map(|u| {
                        let (name, phones) = u
                            .split_once('=')
                            .ok_or_else(|| Error::Config(format!("{k}: expected name=phones, got {u:?}")))?;
                        UtteranceTemplate::parse(name.trim(), phones)
                    })
                    .collect::<Result<_>>()?
            }
            "row_alignment" => {
                c.row_alignment = match v.trim() {
                    "reference" => RowAlignment::Reference,
                    "centroid" => RowAlignment::Centroid,
                    _ => return Err(Error::Config(format!("{k}: expected reference or centroid, got {v:?}"))),
                }
            }
            _ => return Err(unknown("corpus", k)),
        }
        Ok(())
    }

    /// Renders every setting; parsing the result gives back `self`
    /// (paths are written as given).
    pub fn to_ini_string(&self) -> String {
        let mut out = String::new();
        let mut section = |name: &str, entries: Vec<(&str, String)>| {
            let _ = writeln!(out, "[{name}]");
            for (k, v) in entries {
                let _ = writeln!(out, "{k} = {v}");
            }
            out.push('\n');
        };
        let m = &self.mel;
        let g = &self.griffin_lim;
        section(
            "dsp",
            vec![
                ("sample_rate", m.sample_rate.to_string()),
                ("fft_size", m.fft_size.to_string()),
                ("hop", m.hop.to_string()),
                ("n_mels", m.n_mels.to_string()),
                ("n_frames", m.n_frames.to_string()),
                ("fmin", m.fmin.to_string()),
                ("fmax", m.fmax.map_or("nyquist".to_string(), |f| f.to_string())),
                ("floor_db", m.floor_db.to_string()),
                ("ref_db", m.ref_db.to_string()),
                ("crop_len", m.crop_len.to_string()),
                ("gl_iters", g.iters.to_string()),
                ("gl_nnls_iters", g.nnls_iters.to_string()),
                ("gl_momentum", g.momentum.to_string()),
                ("gl_peak", g.peak.to_string()),
            ],
        );
        let n = &self.nmf;
        section(
            "nmf",
            vec![
                ("rank", n.rank.to_string()),
                ("lambda", n.lambda.to_string()),
                ("eta", n.eta.to_string()),
                ("k_neighbors", n.k_neighbors.to_string()),
                ("max_iters", n.max_iters.to_string()),
                ("epsilon_floor", n.epsilon_floor.to_string()),
                ("tol", n.tol.to_string()),
            ],
        );
        section("model", self.model.entries());
        let t = &self.train;
        let list = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        section(
            "train",
            vec![
                ("optimizer", match t.optimizer {
                    OptimizerKind::Adam => "adam".into(),
                    OptimizerKind::Sgd => "sgd".into(),
                }),
                ("mse_reduction", match t.mse_reduction {
                    MseReduction::Sum => "sum".into(),
                    MseReduction::Mean => "mean".into(),
                }),
                ("lr_t", t.lr_t.to_string()),
                ("lr_d", t.lr_d.to_string()),
                ("momentum", t.momentum.to_string()),
                ("beta", t.beta.to_string()),
                ("lambda_gan", t.lambda_gan.to_string()),
                ("epochs", t.epochs.to_string()),
                ("batch", t.batch.to_string()),
                ("mmd_bandwidths", list(&t.mmd_bandwidths)),
                ("generator_loss", match t.generator_loss {
                    GeneratorLoss::NonSaturating => "non_saturating".into(),
                    GeneratorLoss::Literal => "literal".into(),
                }),
                ("augment", t.augment.to_string()),
                ("augment_versions", t.augment_versions.to_string()),
            ],
        );
        let c = &self.corpus;
        let utterances: Vec<String> = c.utterances.iter().map(|u| format!("{}={}", u.name, u.phone_string())).collect();
        section(
            "corpus",
            vec![
                ("n_subjects", c.n_subjects.to_string()),
                ("repetitions", c.repetitions.to_string()),
                ("formant_scale", c.formant_scale.to_string()),
                ("f0_range", format!("{},{}", c.f0_range.0, c.f0_range.1)),
                ("motion_scale", c.motion_scale.to_string()),
                ("timing_jitter", c.timing_jitter.to_string()),
                ("motion_features", c.motion_features.to_string()),
                ("width_range", format!("{},{}", c.width_range.0, c.width_range.1)),
                ("audio_len_range", format!("{},{}", c.audio_len_range.0, c.audio_len_range.1)),
                ("utterances", utterances.join("; ")),
                ("row_alignment", match c.row_alignment {
                    RowAlignment::Reference => "reference".into(),
                    RowAlignment::Centroid => "centroid".into(),
                }),
            ],
        );
        let p = &self.paths;
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        let entries: Vec<(&str, String)> = [("corpus", path(&p.corpus)), ("out_dir", path(&p.out_dir)), ("checkpoint", path(&p.checkpoint))]
            .into_iter()
            .filter_map(|(k, v)| v.map(|v| (k, v)))
            .collect();
        if !entries.is_empty() {
            section("paths", entries);
        }
        out
    }
}
