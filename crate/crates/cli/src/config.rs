//! Experiment configuration as flat `key = value` text.
//!
//! One assignment per line, `#` starts a comment, blank lines are ignored.
//! Keys not present keep their defaults; command-line overrides are applied
//! last (flag > file > default). Values are read as follows:
//!
//! | key | default | meaning |
//! |---|---|---|
//! | `model` | `lognormal` | `gaussian`, `lognormal` or `logistic` |
//! | `data` | `synthetic` | `synthetic` or a CSV / LIBSVM file path |
//! | `data_format` | `auto` | `auto` (by extension), `csv` or `libsvm` |
//! | `label_column` | `auto` | CSV label column: name, 0-based index, `none`, or `auto` (`label` for logistic, none otherwise) |
//! | `synthetic_n` | `1000` | rows generated when `data = synthetic` |
//! | `synthetic_dim` | `10` | dimension of synthetic data |
//! | `true_param` | `1` | comma list; generating mean or weights (one value is broadcast) |
//! | `data_seed` | `0` | seed of the synthetic data stream |
//! | `prior_precision` | `1` | λ of the `N(0, λ⁻¹ I)` prior |
//! | `train_fraction` | `0.8` | logistic only: share of rows used for training |
//! | `split_seed` | `0` | logistic only: seed of the train/test shuffle |
//! | `standardize` | `true` | logistic only: z-score features on the training split |
//! | `intercept` | `false` | logistic only: append a constant feature |
//! | `subsample` | `0` | keep a seeded subsample of this many rows (`0` keeps all) |
//! | `subsample_seed` | `0` | seed of that subsample |
//! | `algorithms` | `SPOS` | comma list of algorithm names, see [`Algorithm`] |
//! | `step_size` | `0.0001` | h |
//! | `beta_inv` | `1` | β⁻¹ |
//! | `kernel` | `median` | `median` (resolved once at start) or `fixed` |
//! | `bandwidth` | `1` | η for `kernel = fixed` |
//! | `batch_size` | `15` | B |
//! | `epoch_length` | `auto` | τ; `auto` is `⌈N/B⌉` |
//! | `anchor_batch` | `100` | b, the SVRG+ anchor batch |
//! | `minibatch` | `per-particle` | `per-particle` or `shared` |
//! | `particles` | `50` | M |
//! | `iterations` | `1000` | T |
//! | `init_mean` | `0` | initial particles are `N(init_mean, init_std² I)` |
//! | `init_std` | `1` | |
//! | `seeds` | `0` | comma list of run indices |
//! | `root_seed` | `0` | combined with algorithm name and seed index per run |
//! | `record_every` | `0.1 passes` | `<x> passes` or `<k> steps` |
//! | `timing` | `none` | `wall` fills `wall_time_s`; `none` writes 0 and keeps files reproducible |
//! | `plot_metric` | `auto` | metric plotted by `compare`; `auto` is the first one |
//! | `log_y` | `false` | log-scale y axis in plots |
//! | `output` | `results` | output directory |

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use spos_core::{Dynamics, EstimatorKind, MetricSchedule, MinibatchMode, ModelKind};

/// Named (dynamics, estimator) pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Spos,
    SagaPos,
    SvrgPos,
    SvrgPosII,
    SvrgPosPlus,
    Sgld,
    SagaLd,
    SvrgLd,
    SvrgLdPlus,
    Svgd,
}

impl Algorithm {
    pub const ALL: [Algorithm; 10] = [
        Algorithm::Spos,
        Algorithm::SagaPos,
        Algorithm::SvrgPos,
        Algorithm::SvrgPosII,
        Algorithm::SvrgPosPlus,
        Algorithm::Sgld,
        Algorithm::SagaLd,
        Algorithm::SvrgLd,
        Algorithm::SvrgLdPlus,
        Algorithm::Svgd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Spos => "SPOS",
            Algorithm::SagaPos => "SAGA-POS",
            Algorithm::SvrgPos => "SVRG-POS",
            Algorithm::SvrgPosII => "SVRG-POS-II",
            Algorithm::SvrgPosPlus => "SVRG-POS+",
            Algorithm::Sgld => "SGLD",
            Algorithm::SagaLd => "SAGA-LD",
            Algorithm::SvrgLd => "SVRG-LD",
            Algorithm::SvrgLdPlus => "SVRG-LD+",
            Algorithm::Svgd => "SVGD",
        }
    }

    pub fn dynamics(self) -> Dynamics {
        match self {
            Algorithm::Sgld | Algorithm::SagaLd | Algorithm::SvrgLd | Algorithm::SvrgLdPlus => {
                Dynamics::Sgld
            }
            Algorithm::Svgd => Dynamics::Svgd,
            _ => Dynamics::Spos,
        }
    }

    pub fn estimator(self) -> EstimatorKind {
        match self {
            Algorithm::Spos | Algorithm::Sgld | Algorithm::Svgd => EstimatorKind::Plain,
            Algorithm::SagaPos | Algorithm::SagaLd => EstimatorKind::Saga,
            Algorithm::SvrgPos | Algorithm::SvrgLd => EstimatorKind::SvrgI,
            Algorithm::SvrgPosII => EstimatorKind::SvrgII,
            Algorithm::SvrgPosPlus | Algorithm::SvrgLdPlus => EstimatorKind::SvrgPlus,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| {
                let known: Vec<&str> = Algorithm::ALL.iter().map(|a| a.name()).collect();
                format!("unknown algorithm '{s}' (known: {})", known.join(", "))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DataSource {
    Synthetic,
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    Auto,
    Csv,
    Libsvm,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LabelSpec {
    Auto,
    None,
    Name(String),
    Index(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelChoice {
    Median,
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpochLength {
    Auto,
    Steps(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub data: DataSource,
    pub data_format: DataFormat,
    pub label_column: LabelSpec,
    pub synthetic_n: usize,
    pub synthetic_dim: usize,
    pub true_param: Vec<f64>,
    pub data_seed: u64,
    pub prior_precision: f64,
    pub train_fraction: f64,
    pub split_seed: u64,
    pub standardize: bool,
    pub intercept: bool,
    pub subsample: usize,
    pub subsample_seed: u64,
    pub algorithms: Vec<Algorithm>,
    pub step_size: f64,
    pub beta_inv: f64,
    pub kernel: KernelChoice,
    pub bandwidth: f64,
    pub batch_size: usize,
    pub epoch_length: EpochLength,
    pub anchor_batch: usize,
    pub minibatch: MinibatchMode,
    pub particles: usize,
    pub iterations: u64,
    pub init_mean: f64,
    pub init_std: f64,
    pub seeds: Vec<u64>,
    pub root_seed: u64,
    pub record_every: MetricSchedule,
    pub wall_time: bool,
    pub plot_metric: Option<String>,
    pub log_y: bool,
    pub output: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelKind::LogNormalMean,
            data: DataSource::Synthetic,
            data_format: DataFormat::Auto,
            label_column: LabelSpec::Auto,
            synthetic_n: 1000,
            synthetic_dim: 10,
            true_param: vec![1.0],
            data_seed: 0,
            prior_precision: 1.0,
            train_fraction: 0.8,
            split_seed: 0,
            standardize: true,
            intercept: false,
            subsample: 0,
            subsample_seed: 0,
            algorithms: vec![Algorithm::Spos],
            step_size: 1e-4,
            beta_inv: 1.0,
            kernel: KernelChoice::Median,
            bandwidth: 1.0,
            batch_size: 15,
            epoch_length: EpochLength::Auto,
            anchor_batch: 100,
            minibatch: MinibatchMode::PerParticle,
            particles: 50,
            iterations: 1000,
            init_mean: 0.0,
            init_std: 1.0,
            seeds: vec![0],
            root_seed: 0,
            record_every: MetricSchedule::EveryPasses(0.1),
            wall_time: false,
            plot_metric: None,
            log_y: false,
            output: PathBuf::from("results"),
        }
    }
}

/// Every key, in serialization order.
pub const KEYS: [&str; 35] = [
    "model",
    "data",
    "data_format",
    "label_column",
    "synthetic_n",
    "synthetic_dim",
    "true_param",
    "data_seed",
    "prior_precision",
    "train_fraction",
    "split_seed",
    "standardize",
    "intercept",
    "subsample",
    "subsample_seed",
    "algorithms",
    "step_size",
    "beta_inv",
    "kernel",
    "bandwidth",
    "batch_size",
    "epoch_length",
    "anchor_batch",
    "minibatch",
    "particles",
    "iterations",
    "init_mean",
    "init_std",
    "seeds",
    "root_seed",
    "record_every",
    "timing",
    "plot_metric",
    "log_y",
    "output",
];

fn parse_num<T: FromStr>(v: &str) -> Result<T, String> {
    v.parse()
        .map_err(|_| format!("'{v}' is not a valid number"))
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("'{v}' is not a boolean (true/false)")),
    }
}

fn parse_list<T: FromStr>(
    v: &str,
    item: impl Fn(&str) -> Result<T, String>,
) -> Result<Vec<T>, String> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| item(s.trim())).collect()
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items
        .iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

pub fn model_from_str(v: &str) -> Result<ModelKind, String> {
    match v {
        "gaussian" => Ok(ModelKind::GaussianMean),
        "lognormal" => Ok(ModelKind::LogNormalMean),
        "logistic" => Ok(ModelKind::LogisticRegression),
        _ => Err(format!(
            "unknown model '{v}' (gaussian, lognormal, logistic)"
        )),
    }
}

impl ExperimentConfig {
    /// Assigns one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let v = value.trim();
        match key {
            "model" => self.model = model_from_str(v)?,
            "data" => {
                self.data = match v {
                    "" => return Err("empty data source".into()),
                    "synthetic" => DataSource::Synthetic,
                    path => DataSource::File(PathBuf::from(path)),
                }
            }
            "data_format" => {
                self.data_format = match v {
                    "auto" => DataFormat::Auto,
                    "csv" => DataFormat::Csv,
                    "libsvm" => DataFormat::Libsvm,
                    _ => return Err(format!("unknown data format '{v}' (auto, csv, libsvm)")),
                }
            }
            "label_column" => {
                self.label_column = match v {
                    "" => return Err("empty label column".into()),
                    "auto" => LabelSpec::Auto,
                    "none" => LabelSpec::None,
                    _ => v
                        .parse()
                        .map_or_else(|_| LabelSpec::Name(v.to_string()), LabelSpec::Index),
                }
            }
            "synthetic_n" => self.synthetic_n = parse_num(v)?,
            "synthetic_dim" => self.synthetic_dim = parse_num(v)?,
            "true_param" => self.true_param = parse_list(v, parse_num)?,
            "data_seed" => self.data_seed = parse_num(v)?,
            "prior_precision" => self.prior_precision = parse_num(v)?,
            "train_fraction" => self.train_fraction = parse_num(v)?,
            "split_seed" => self.split_seed = parse_num(v)?,
            "standardize" => self.standardize = parse_bool(v)?,
            "intercept" => self.intercept = parse_bool(v)?,
            "subsample" => self.subsample = parse_num(v)?,
            "subsample_seed" => self.subsample_seed = parse_num(v)?,
            "algorithms" => self.algorithms = parse_list(v, Algorithm::from_str)?,
            "step_size" => self.step_size = parse_num(v)?,
            "beta_inv" => self.beta_inv = parse_num(v)?,
            "kernel" => {
                self.kernel = match v {
                    "median" => KernelChoice::Median,
                    "fixed" => KernelChoice::Fixed,
                    _ => return Err(format!("unknown kernel mode '{v}' (median, fixed)")),
                }
            }
            "bandwidth" => self.bandwidth = parse_num(v)?,
            "batch_size" => self.batch_size = parse_num(v)?,
            "epoch_length" => {
                self.epoch_length = if v == "auto" {
                    EpochLength::Auto
                } else {
                    EpochLength::Steps(parse_num(v)?)
                }
            }
            "anchor_batch" => self.anchor_batch = parse_num(v)?,
            "minibatch" => {
                self.minibatch = match v {
                    "per-particle" => MinibatchMode::PerParticle,
                    "shared" => MinibatchMode::Shared,
                    _ => {
                        return Err(format!(
                            "unknown minibatch mode '{v}' (per-particle, shared)"
                        ))
                    }
                }
            }
            "particles" => self.particles = parse_num(v)?,
            "iterations" => self.iterations = parse_num(v)?,
            "init_mean" => self.init_mean = parse_num(v)?,
            "init_std" => self.init_std = parse_num(v)?,
            "seeds" => self.seeds = parse_list(v, parse_num)?,
            "root_seed" => self.root_seed = parse_num(v)?,
            "record_every" => {
                let (amount, unit) = v.split_once(char::is_whitespace).unwrap_or((v, ""));
                self.record_every = match unit.trim() {
                    "passes" | "pass" => MetricSchedule::EveryPasses(parse_num(amount)?),
                    "steps" | "step" => MetricSchedule::EverySteps(parse_num(amount)?),
                    _ => return Err(format!("'{v}' should read '<x> passes' or '<k> steps'")),
                }
            }
            "timing" => {
                self.wall_time = match v {
                    "wall" => true,
                    "none" => false,
                    _ => return Err(format!("unknown timing '{v}' (wall, none)")),
                }
            }
            "plot_metric" => {
                self.plot_metric = match v {
                    "" => return Err("empty metric name".into()),
                    "auto" => None,
                    name => Some(name.to_string()),
                }
            }
            "log_y" => self.log_y = parse_bool(v)?,
            "output" => {
                if v.is_empty() {
                    return Err("empty output directory".into());
                }
                self.output = PathBuf::from(v)
            }
            _ => return Err(format!("unknown key '{key}'")),
        }
        Ok(())
    }

    /// Text form of one key, as accepted by [`ExperimentConfig::set`].
    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "model" => self.model.name().to_string(),
            "data" => match &self.data {
                DataSource::Synthetic => "synthetic".into(),
                DataSource::File(p) => p.display().to_string(),
            },
            "data_format" => match self.data_format {
                DataFormat::Auto => "auto",
                DataFormat::Csv => "csv",
                DataFormat::Libsvm => "libsvm",
            }
            .into(),
            "label_column" => match &self.label_column {
                LabelSpec::Auto => "auto".into(),
                LabelSpec::None => "none".into(),
                LabelSpec::Name(n) => n.clone(),
                LabelSpec::Index(i) => i.to_string(),
            },
            "synthetic_n" => self.synthetic_n.to_string(),
            "synthetic_dim" => self.synthetic_dim.to_string(),
            "true_param" => join(&self.true_param),
            "data_seed" => self.data_seed.to_string(),
            "prior_precision" => self.prior_precision.to_string(),
            "train_fraction" => self.train_fraction.to_string(),
            "split_seed" => self.split_seed.to_string(),
            "standardize" => self.standardize.to_string(),
            "intercept" => self.intercept.to_string(),
            "subsample" => self.subsample.to_string(),
            "subsample_seed" => self.subsample_seed.to_string(),
            "algorithms" => join(&self.algorithms),
            "step_size" => self.step_size.to_string(),
            "beta_inv" => self.beta_inv.to_string(),
            "kernel" => match self.kernel {
                KernelChoice::Median => "median",
                KernelChoice::Fixed => "fixed",
            }
            .into(),
            "bandwidth" => self.bandwidth.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "epoch_length" => match self.epoch_length {
                EpochLength::Auto => "auto".into(),
                EpochLength::Steps(t) => t.to_string(),
            },
            "anchor_batch" => self.anchor_batch.to_string(),
            "minibatch" => match self.minibatch {
                MinibatchMode::PerParticle => "per-particle",
                MinibatchMode::Shared => "shared",
            }
            .into(),
            "particles" => self.particles.to_string(),
            "iterations" => self.iterations.to_string(),
            "init_mean" => self.init_mean.to_string(),
            "init_std" => self.init_std.to_string(),
            "seeds" => join(&self.seeds),
            "root_seed" => self.root_seed.to_string(),
            "record_every" => match self.record_every {
                MetricSchedule::EveryPasses(p) => format!("{p} passes"),
                MetricSchedule::EverySteps(s) => format!("{s} steps"),
            },
            "timing" => if self.wall_time { "wall" } else { "none" }.into(),
            "plot_metric" => self.plot_metric.clone().unwrap_or_else(|| "auto".into()),
            "log_y" => self.log_y.to_string(),
            "output" => self.output.display().to_string(),
            _ => return None,
        })
    }

    /// Parses config text over the defaults. Every bad line is reported.
    pub fn parse(text: &str) -> Result<Self, Vec<String>> {
        let mut config = Self::default();
        let mut errors = Vec::new();
        let mut seen: Vec<&str> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split_once('#').map_or(raw, |(before, _)| before).trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                errors.push(format!("line {}: expected 'key = value'", i + 1));
                continue;
            };
            let key = key.trim();
            if seen.contains(&key) {
                errors.push(format!("line {}: duplicate key '{key}'", i + 1));
                continue;
            }
            seen.push(key);
            if let Err(e) = config.set(key, value) {
                errors.push(format!("line {}: {key}: {e}", i + 1));
            }
        }
        if errors.is_empty() {
            Ok(config)
        } else {
            Err(errors)
        }
    }

    pub fn load(path: &Path) -> Result<Self, Vec<String>> {
        let text =
            std::fs::read_to_string(path).map_err(|e| vec![format!("{}: {e}", path.display())])?;
        Self::parse(&text).map_err(|errs| {
            errs.into_iter()
                .map(|e| format!("{}: {e}", path.display()))
                .collect()
        })
    }

    /// Applies `key=value` overrides; every bad one is reported.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<(), Vec<String>> {
        let mut errors = Vec::new();
        for o in overrides {
            let o = o.as_ref();
            match o.split_once('=') {
                Some((k, v)) => {
                    if let Err(e) = self.set(k.trim(), v) {
                        errors.push(format!("override '{o}': {e}"));
                    }
                }
                None => errors.push(format!("override '{o}': expected key=value")),
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors)
        }
    }

    /// Full text form; parses back to an identical config.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let value = self.get(key).expect("every listed key has a value");
            out.push_str(&format!("{key} = {value}\n"));
        }
        out
    }

    /// `true_param` expanded to `synthetic_dim` entries.
    pub fn true_param_vector(&self) -> Vec<f64> {
        match self.true_param.as_slice() {
            [v] => vec![*v; self.synthetic_dim],
            p => p.to_vec(),
        }
    }

    /// Training-set size known without reading any file.
    pub fn synthetic_train_size(&self) -> Option<usize> {
        if self.data != DataSource::Synthetic {
            return None;
        }
        let mut n = self.synthetic_n;
        if self.subsample > 0 {
            n = n.min(self.subsample);
        }
        if self.model == ModelKind::LogisticRegression && n >= 2 {
            n = ((self.train_fraction * n as f64).ceil() as usize).clamp(1, n - 1);
        }
        Some(n)
    }

    pub fn uses(&self, kind: EstimatorKind) -> bool {
        self.algorithms.iter().any(|a| a.estimator() == kind)
    }

    /// Every problem that can be found without loading data.
    pub fn validate(&self) -> Vec<String> {
        let mut e = Vec::new();
        let positive = |x: f64| x.is_finite() && x > 0.0;
        if !positive(self.step_size) {
            e.push(format!("step_size must be > 0 (got {})", self.step_size));
        }
        if !positive(self.beta_inv) {
            e.push(format!("beta_inv must be > 0 (got {})", self.beta_inv));
        }
        if self.kernel == KernelChoice::Fixed && !positive(self.bandwidth) {
            e.push(format!("bandwidth must be > 0 (got {})", self.bandwidth));
        }
        if !(self.prior_precision.is_finite() && self.prior_precision >= 0.0) {
            e.push(format!(
                "prior_precision must be >= 0 (got {})",
                self.prior_precision
            ));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            e.push(format!(
                "train_fraction must lie in (0, 1) (got {})",
                self.train_fraction
            ));
        }
        if self.batch_size == 0 {
            e.push("batch_size must be >= 1".into());
        }
        if self.anchor_batch == 0 {
            e.push("anchor_batch must be >= 1".into());
        }
        if self.epoch_length == EpochLength::Steps(0) {
            e.push("epoch_length must be >= 1 or auto".into());
        }
        if self.particles == 0 {
            e.push("particles must be >= 1".into());
        }
        if !self.init_mean.is_finite() {
            e.push(format!("init_mean must be finite (got {})", self.init_mean));
        }
        if !(self.init_std.is_finite() && self.init_std >= 0.0) {
            e.push(format!("init_std must be >= 0 (got {})", self.init_std));
        }
        if self.algorithms.is_empty() {
            e.push("algorithms must name at least one algorithm".into());
        }
        for (i, a) in self.algorithms.iter().enumerate() {
            if self.algorithms[..i].contains(a) {
                e.push(format!("algorithm {a} listed twice"));
            }
        }
        if self.seeds.is_empty() {
            e.push("seeds must list at least one seed".into());
        }
        for (i, s) in self.seeds.iter().enumerate() {
            if self.seeds[..i].contains(s) {
                e.push(format!("seed {s} listed twice"));
            }
        }
        match self.record_every {
            MetricSchedule::EverySteps(0) => e.push("record_every must be at least 1 step".into()),
            MetricSchedule::EveryPasses(p) if !positive(p) => {
                e.push(format!("record_every must be > 0 passes (got {p})"))
            }
            _ => {}
        }
        match &self.data {
            DataSource::Synthetic => {
                let min_n = if self.model == ModelKind::LogisticRegression {
                    2
                } else {
                    1
                };
                if self.synthetic_n < min_n {
                    e.push(format!(
                        "synthetic_n must be >= {min_n} (got {})",
                        self.synthetic_n
                    ));
                }
                if self.synthetic_dim == 0 {
                    e.push("synthetic_dim must be >= 1".into());
                }
                if self.true_param.len() != 1 && self.true_param.len() != self.synthetic_dim {
                    e.push(format!(
                        "true_param has {} values; expected 1 or synthetic_dim = {}",
                        self.true_param.len(),
                        self.synthetic_dim
                    ));
                }
                if self.true_param.iter().any(|v| !v.is_finite()) {
                    e.push("true_param values must be finite".into());
                }
            }
            DataSource::File(path) => {
                if !path.is_file() {
                    e.push(format!("data file {} does not exist", path.display()));
                }
            }
        }
        if let Some(n) = self.synthetic_train_size() {
            e.extend(self.size_errors(n));
        }
        e
    }

    /// Checks that depend on the training-set size `n`.
    pub fn size_errors(&self, n: usize) -> Vec<String> {
        let mut e = Vec::new();
        if self.batch_size > n {
            e.push(format!(
                "batch_size {} exceeds the {n} training rows",
                self.batch_size
            ));
        }
        if self.uses(EstimatorKind::SvrgPlus) && self.anchor_batch > n {
            e.push(format!(
                "anchor_batch {} exceeds the {n} training rows",
                self.anchor_batch
            ));
        }
        e
    }

    pub fn epoch_steps(&self, n: usize) -> usize {
        match self.epoch_length {
            EpochLength::Steps(t) => t,
            EpochLength::Auto => n.div_ceil(self.batch_size.max(1)).max(1),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::parse(&c.serialize()).unwrap(), c);
    }

    #[test]
    fn every_key_is_readable_and_writable() {
        let c = ExperimentConfig::default();
        for key in KEYS {
            let mut d = ExperimentConfig::default();
            d.set(key, &c.get(key).unwrap()).unwrap();
            assert_eq!(d, c, "{key}");
        }
        assert!(c.get("nope").is_none());
    }

    #[test]
    fn comments_blank_lines_and_spacing() {
        let c = ExperimentConfig::parse(
            "# header\n\n model=gaussian   # trailing\nseeds = 1,2 , 3\nrecord_every = 5 steps\n",
        )
        .unwrap();
        assert_eq!(c.model, ModelKind::GaussianMean);
        assert_eq!(c.seeds, vec![1, 2, 3]);
        assert_eq!(c.record_every, MetricSchedule::EverySteps(5));
    }

    #[test]
    fn parse_reports_every_bad_line() {
        let errs = ExperimentConfig::parse(
            "model = cat\nwhat\nsteps = 3\nparticles = -1\nmodel = gaussian\n",
        )
        .unwrap_err();
        assert_eq!(errs.len(), 5, "{errs:?}");
        assert!(errs[0].starts_with("line 1"));
        assert!(errs[4].contains("duplicate key 'model'"));
        assert!(errs[1].starts_with("line 2"));
        assert!(errs[2].contains("unknown key 'steps'"));
        assert!(errs[3].contains("line 4"));
    }

    #[test]
    fn validation_is_exhaustive() {
        let c = ExperimentConfig {
            step_size: 0.0,
            beta_inv: -1.0,
            batch_size: 5000,
            seeds: vec![],
            ..Default::default()
        };
        let errs = c.validate();
        assert_eq!(errs.len(), 4, "{errs:?}");
        assert!(errs.iter().any(|e| e.contains("batch_size 5000 exceeds")));
    }

    #[test]
    fn overrides_apply_in_order() {
        let mut c = ExperimentConfig::default();
        c.apply_overrides(&["particles=7", "algorithms = SPOS, saga-pos", "particles=8"])
            .unwrap();
        assert_eq!(c.particles, 8);
        assert_eq!(c.algorithms, vec![Algorithm::Spos, Algorithm::SagaPos]);
        assert_eq!(
            c.apply_overrides(&["x", "particles=a"]).unwrap_err().len(),
            2
        );
    }

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
    }

    #[test]
    fn auto_epoch_is_passes_per_batch() {
        let c = ExperimentConfig::default();
        assert_eq!(c.epoch_steps(1000), 67);
        assert_eq!(c.epoch_steps(15), 1);
    }
}
