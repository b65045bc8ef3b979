//! Turning a config into a model, metrics and independent runs.

use std::path::Path;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use spos_core::data::{self, LabelColumn, SplitSpec};
use spos_core::metrics::{BlrTest, GaussianW2, LogMse, MetricSuite};
use spos_core::model::{make_gaussian_data, make_logistic_data, make_lognormal_data};
use spos_core::rng::derive_seed;
use spos_core::sampler::run_from;
use spos_core::{
    Dataset, EstimatorConfig, KernelConfig, MetricRecord, MetricSet, Model, ModelKind,
    ParticleSystem, Potential, RunOptions, SamplerConfig,
};

use crate::config::{Algorithm, DataFormat, DataSource, ExperimentConfig, KernelChoice, LabelSpec};
use crate::error::{CliError, CliResult};

/// Metric columns produced for a model kind.
pub fn metric_names(kind: ModelKind) -> Vec<String> {
    let names: &[&str] = match kind {
        ModelKind::GaussianMean => &["log_mse", "w2_gaussian"],
        ModelKind::LogNormalMean => &["log_mse"],
        ModelKind::LogisticRegression => &["test_accuracy", "test_loglik"],
    };
    names.iter().map(|s| s.to_string()).collect()
}

/// A loaded problem: training model, held-out metrics and provenance.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub model: Model,
    pub metrics: MetricSuite,
    /// `key = value` lines describing where the data came from.
    pub provenance: Vec<(String, String)>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn load_file(config: &ExperimentConfig, path: &Path) -> CliResult<Dataset> {
    let format = match config.data_format {
        DataFormat::Auto
            if path
                .extension()
                .is_some_and(|e| e.eq_ignore_ascii_case("csv")) =>
        {
            DataFormat::Csv
        }
        DataFormat::Auto => DataFormat::Libsvm,
        f => f,
    };
    let mut dataset = match format {
        DataFormat::Csv => {
            let label = match (&config.label_column, config.model) {
                (LabelSpec::Auto, ModelKind::LogisticRegression) => {
                    LabelColumn::Name("label".into())
                }
                (LabelSpec::Auto | LabelSpec::None, _) => LabelColumn::None,
                (LabelSpec::Name(n), _) => LabelColumn::Name(n.clone()),
                (LabelSpec::Index(i), _) => LabelColumn::Index(*i),
            };
            data::load_csv(path, &label)?
        }
        _ => data::load_libsvm(path)?,
    };
    if config.model != ModelKind::LogisticRegression {
        dataset.labels = None;
    } else if dataset.labels.is_none() {
        return Err(CliError::Config(vec![format!(
            "{}: logistic regression needs a label column",
            path.display()
        )]));
    }
    Ok(dataset)
}

impl Experiment {
    /// Validates, loads the data and builds the model. Configuration problems
    /// are reported all at once.
    pub fn prepare(config: &ExperimentConfig) -> CliResult<Self> {
        let errors = config.validate();
        if !errors.is_empty() {
            return Err(CliError::Config(errors));
        }
        let mut provenance = Vec::new();
        let mut dataset = match &config.data {
            DataSource::Synthetic => {
                let param = config.true_param_vector();
                let (n, seed) = (config.synthetic_n, config.data_seed);
                provenance.push(("data".into(), "synthetic".into()));
                provenance.push(("data_seed".into(), seed.to_string()));
                match config.model {
                    ModelKind::GaussianMean => make_gaussian_data(&param, n, seed)?,
                    ModelKind::LogNormalMean => make_lognormal_data(&param, n, seed)?,
                    ModelKind::LogisticRegression => make_logistic_data(&param, n, seed)?,
                }
            }
            DataSource::File(path) => {
                let bytes = std::fs::read(path)?;
                provenance.push(("data".into(), path.display().to_string()));
                provenance.push(("data_sha256".into(), sha256_hex(&bytes)));
                load_file(config, path)?
            }
        };
        provenance.push(("data_rows".into(), dataset.len().to_string()));
        if config.subsample > 0 && config.subsample < dataset.len() {
            dataset = data::subsample(&dataset, config.subsample, config.subsample_seed)?;
            provenance.push(("subsample_rows".into(), dataset.len().to_string()));
            provenance.push(("subsample_seed".into(), config.subsample_seed.to_string()));
        }
        let (model, metrics) = match config.model {
            ModelKind::LogisticRegression => {
                let (mut train, mut test) = data::split(
                    &dataset,
                    SplitSpec {
                        train_fraction: config.train_fraction,
                        seed: config.split_seed,
                    },
                )?;
                if config.standardize {
                    (train, test, _) = data::standardize(&train, &test)?;
                }
                if config.intercept {
                    train = data::with_intercept(&train)?;
                    test = data::with_intercept(&test)?;
                }
                provenance.push(("train_rows".into(), train.len().to_string()));
                provenance.push(("test_rows".into(), test.len().to_string()));
                let model = Model::new(config.model, train, config.prior_precision)?;
                (model, MetricSuite::new().with(BlrTest { test }))
            }
            kind => {
                let model = Model::new(kind, dataset, config.prior_precision)?;
                let posterior = model.closed_form_posterior()?;
                let mut suite = MetricSuite::new().with(LogMse {
                    reference: posterior.mean.clone(),
                });
                if kind == ModelKind::GaussianMean {
                    suite = suite.with(GaussianW2 { posterior });
                }
                (model, suite)
            }
        };
        let size_errors = config.size_errors(model.num_data());
        if !size_errors.is_empty() {
            return Err(CliError::Config(size_errors));
        }
        debug_assert_eq!(metrics.names(), metric_names(config.model));
        Ok(Self {
            config: config.clone(),
            model,
            metrics,
            provenance,
        })
    }

    pub fn sampler_config(&self, algorithm: Algorithm) -> SamplerConfig {
        let c = &self.config;
        let n = self.model.num_data();
        let estimator = EstimatorConfig::new(algorithm.estimator(), c.batch_size)
            .with_epoch(c.epoch_steps(n))
            .with_anchor_batch(c.anchor_batch);
        let kernel = match c.kernel {
            KernelChoice::Median => KernelConfig::median(),
            KernelChoice::Fixed => KernelConfig::fixed(c.bandwidth),
        };
        let mut sc = SamplerConfig::new(
            algorithm.dynamics(),
            c.step_size,
            c.beta_inv,
            kernel,
            estimator,
        );
        sc.minibatch = c.minibatch;
        sc
    }

    pub fn run_seed(&self, algorithm: Algorithm, seed: u64) -> u64 {
        derive_seed(self.config.root_seed, algorithm.name(), seed)
    }

    /// One independent run. Divergence is returned as a trace with `diverged` set.
    pub fn run_one(&self, algorithm: Algorithm, seed: u64) -> CliResult<Trace> {
        let c = &self.config;
        let run_seed = self.run_seed(algorithm, seed);
        let system = ParticleSystem::gaussian(
            run_seed,
            c.particles,
            self.model.dim(),
            c.init_mean,
            c.init_std,
        )?;
        let options = RunOptions {
            iterations: c.iterations,
            schedule: c.record_every,
            record_wall_time: c.wall_time,
        };
        let names = self.metrics.names();
        let trace = |records, diverged| Trace {
            algorithm,
            seed,
            run_seed,
            metric_names: names.clone(),
            records,
            diverged,
        };
        match run_from(
            &self.model,
            self.sampler_config(algorithm),
            system,
            &options,
            &self.metrics,
        ) {
            Ok(out) => {
                let mut t = trace(out.records, None);
                t.truncate_non_finite();
                Ok(t)
            }
            Err(spos_core::Error::Diverged {
                step,
                norm,
                records,
            }) => {
                let mut t = trace(
                    *records,
                    Some(format!("diverged at step {step}: position norm {norm:e}")),
                );
                t.truncate_non_finite();
                Ok(t)
            }
            Err(e) => Err(e.into()),
        }
    }

    /// Every (algorithm, seed) run in config order; runs execute in parallel.
    pub fn run_all(&self) -> CliResult<Vec<Trace>> {
        let jobs: Vec<(Algorithm, u64)> = self
            .config
            .algorithms
            .iter()
            .flat_map(|&a| self.config.seeds.iter().map(move |&s| (a, s)))
            .collect();
        jobs.par_iter().map(|&(a, s)| self.run_one(a, s)).collect()
    }
}

/// Metric records of one (algorithm, seed) run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub run_seed: u64,
    pub metric_names: Vec<String>,
    pub records: Vec<MetricRecord>,
    /// Diagnostic when the run stopped early.
    pub diverged: Option<String>,
}

impl Trace {
    pub fn file_stem(&self) -> String {
        format!("{}_seed{}", self.algorithm.name(), self.seed)
    }

    /// Drops records from the first non-finite metric on, marking the run as diverged.
    fn truncate_non_finite(&mut self) {
        if let Some(pos) = self
            .records
            .iter()
            .position(|r| r.values.iter().any(|(_, v)| !v.is_finite()))
        {
            let step = self.records[pos].step;
            self.records.truncate(pos);
            self.diverged
                .get_or_insert_with(|| format!("non-finite metric at step {step}"));
        }
    }

    /// `(data_passes, value)` pairs of one metric.
    pub fn series(&self, metric: &str) -> Option<Vec<(f64, f64)>> {
        let col = self.metric_names.iter().position(|m| m == metric)?;
        Some(
            self.records
                .iter()
                .map(|r| (r.data_passes, r.values[col].1))
                .collect(),
        )
    }
}
