//! The subcommands, as library functions returning what they wrote or found.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand_distr::{Distribution, StandardNormal};

use spos_core::diagnostics::{enumeration_check, fd_gradient_check, sgld_reduction_check};
use spos_core::model::{make_gaussian_data, make_logistic_data, make_lognormal_data};
use spos_core::rng::{self, Purpose};
use spos_core::theory::{bound_eval, theory_constants, BoundVariant, TheoryInputs};
use spos_core::{
    Dataset, EstimatorConfig, EstimatorKind, Matrix, MetricSchedule, Model, ModelKind, Potential,
};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::experiment::{metric_names, Experiment, Trace};
use crate::plot::{Chart, Series};
use crate::summary::{summarize, SummaryRow};

pub const SUMMARY_FILE: &str = "summary.csv";
pub const METADATA_FILE: &str = "metadata.txt";
pub const CONFIG_FILE: &str = "config.txt";
pub const COMBINED_FILE: &str = "combined.csv";
pub const PLOT_FILE: &str = "plot.svg";
pub const PARTIAL_SUFFIX: &str = ".partial";

/// What `run` produced.
#[derive(Debug)]
pub struct RunReport {
    pub traces: Vec<Trace>,
    /// `(algorithm, rows)` in config order.
    pub summaries: Vec<(String, Vec<SummaryRow>)>,
    pub trace_files: Vec<PathBuf>,
    pub summary_file: PathBuf,
}

fn trace_header(names: &[String]) -> Vec<String> {
    let mut h = vec![
        "step".to_string(),
        "data_passes".to_string(),
        "wall_time_s".to_string(),
    ];
    h.extend(names.iter().cloned());
    h
}

fn write_trace(path: &Path, trace: &Trace) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(trace_header(&trace.metric_names))?;
    for r in &trace.records {
        let mut row = vec![
            r.step.to_string(),
            r.data_passes.to_string(),
            r.wall_time_s.to_string(),
        ];
        row.extend(r.values.iter().map(|(_, v)| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn summary_header(first: &str, names: &[String]) -> Vec<String> {
    let mut h = vec![first.to_string(), "data_passes".to_string()];
    for m in names {
        h.push(format!("{m}_mean"));
        h.push(format!("{m}_std"));
    }
    h
}

fn write_summary(
    path: &Path,
    first: &str,
    names: &[String],
    groups: &[(String, Vec<SummaryRow>)],
) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(summary_header(first, names))?;
    for (label, rows) in groups {
        for row in rows {
            let mut rec = vec![label.clone(), row.data_passes.to_string()];
            for (mean, std) in &row.stats {
                rec.push(mean.to_string());
                rec.push(std.to_string());
            }
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Grid spacing for summaries: the recording interval when it is given in
/// passes, otherwise a hundredth of the shortest trace.
fn grid_spacing(config: &ExperimentConfig, traces: &[&Trace]) -> f64 {
    match config.record_every {
        MetricSchedule::EveryPasses(p) => p,
        MetricSchedule::EverySteps(_) => {
            let shortest = traces
                .iter()
                .filter_map(|t| t.records.last().map(|r| r.data_passes))
                .fold(f64::INFINITY, f64::min);
            if shortest.is_finite() && shortest > 0.0 {
                shortest / 100.0
            } else {
                1.0
            }
        }
    }
}

fn metadata(exp: &Experiment, traces: &[Trace]) -> String {
    let c = &exp.config;
    let mut s = String::new();
    let _ = writeln!(s, "tool = spos {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(s, "model = {}", c.model.name());
    for (k, v) in &exp.provenance {
        let _ = writeln!(s, "{k} = {v}");
    }
    let _ = writeln!(s, "dim = {}", exp.model.dim());
    let _ = writeln!(
        s,
        "epoch_length_resolved = {}",
        c.epoch_steps(exp.model.num_data())
    );
    for t in traces {
        let status = t.diverged.as_deref().unwrap_or("complete");
        let _ = writeln!(
            s,
            "run {} = run_seed {}, {}",
            t.file_stem(),
            t.run_seed,
            status
        );
    }
    s
}

/// Runs every (algorithm, seed) pair of `config` and writes traces, a
/// summary, the effective config and metadata into `config.output`.
///
/// A diverged run keeps the records taken before the blow-up, gets a
/// `.partial` marker next to its CSV, and turns the result into
/// [`CliError::Diverged`] once everything else has been written.
pub fn cmd_run(config: &ExperimentConfig) -> CliResult<RunReport> {
    let exp = Experiment::prepare(config)?;
    let traces = exp.run_all()?;
    let out = &config.output;
    fs::create_dir_all(out)?;
    fs::write(out.join(CONFIG_FILE), config.serialize())?;
    fs::write(out.join(METADATA_FILE), metadata(&exp, &traces))?;

    let mut trace_files = Vec::new();
    let mut diverged = Vec::new();
    for t in &traces {
        let path = out.join(format!("{}.csv", t.file_stem()));
        write_trace(&path, t)?;
        let marker = out.join(format!("{}.csv{PARTIAL_SUFFIX}", t.file_stem()));
        match &t.diverged {
            Some(msg) => {
                fs::write(&marker, format!("{msg}\n"))?;
                diverged.push(format!("{}: {msg}", t.file_stem()));
            }
            None if marker.exists() => fs::remove_file(&marker)?,
            None => {}
        }
        trace_files.push(path);
    }

    let names = metric_names(config.model);
    let mut summaries = Vec::new();
    for &alg in &config.algorithms {
        let complete: Vec<&Trace> = traces
            .iter()
            .filter(|t| t.algorithm == alg && t.diverged.is_none())
            .collect();
        let rows = summarize(&complete, grid_spacing(config, &complete));
        summaries.push((alg.name().to_string(), rows));
    }
    let summary_file = out.join(SUMMARY_FILE);
    write_summary(&summary_file, "algorithm", &names, &summaries)?;

    if !diverged.is_empty() {
        return Err(CliError::Diverged(diverged));
    }
    Ok(RunReport {
        traces,
        summaries,
        trace_files,
        summary_file,
    })
}

#[derive(Debug)]
pub struct CompareReport {
    pub metric: String,
    /// Legend labels in plotting order.
    pub series: Vec<String>,
    pub combined_file: PathBuf,
    pub plot_file: PathBuf,
}

/// Runs each named config into `out/<name>` and plots the chosen metric of
/// every algorithm on one chart, series in config order.
pub fn cmd_compare(
    configs: &[(String, ExperimentConfig)],
    out: &Path,
    metric: Option<&str>,
    log_y: Option<bool>,
) -> CliResult<CompareReport> {
    let Some((_, first)) = configs.first() else {
        return Err(CliError::Config(vec![
            "compare needs at least one config".into()
        ]));
    };
    let names = metric_names(first.model);
    let mut errors = Vec::new();
    for (i, (name, c)) in configs.iter().enumerate() {
        if metric_names(c.model) != names {
            errors.push(format!(
                "metric mismatch: '{name}' records [{}] but '{}' records [{}]",
                metric_names(c.model).join(", "),
                configs[0].0,
                names.join(", ")
            ));
        }
        if name.is_empty() || name.contains(['/', '\\']) || name == "." || name == ".." {
            errors.push(format!("'{name}' cannot be used as a directory name"));
        }
        if configs[..i].iter().any(|(n, _)| n == name) {
            errors.push(format!("config name '{name}' used twice"));
        }
    }
    let metric = metric
        .map(str::to_string)
        .or_else(|| first.plot_metric.clone())
        .unwrap_or_else(|| names[0].clone());
    if !names.contains(&metric) {
        errors.push(format!(
            "metric '{metric}' is not recorded (available: {})",
            names.join(", ")
        ));
    }
    for (name, c) in configs {
        errors.extend(c.validate().into_iter().map(|e| format!("{name}: {e}")));
    }
    if !errors.is_empty() {
        return Err(CliError::Config(errors));
    }

    let mut groups = Vec::new();
    for (name, c) in configs {
        let c = ExperimentConfig {
            output: out.join(name),
            ..c.clone()
        };
        let report = cmd_run(&c)?;
        for (alg, rows) in report.summaries {
            let label = match (configs.len(), c.algorithms.len()) {
                (1, _) => alg,
                (_, 1) => name.clone(),
                _ => format!("{name}/{alg}"),
            };
            groups.push((label, rows));
        }
    }
    let col = names
        .iter()
        .position(|m| *m == metric)
        .expect("checked above");
    let chart = Chart {
        x_label: "data passes".into(),
        y_label: metric.clone(),
        log_y: log_y.unwrap_or(first.log_y),
        series: groups
            .iter()
            .map(|(label, rows)| Series {
                label: label.clone(),
                points: rows
                    .iter()
                    .map(|r| (r.data_passes, r.stats[col].0))
                    .collect(),
            })
            .collect(),
    };
    fs::create_dir_all(out)?;
    let combined_file = out.join(COMBINED_FILE);
    write_summary(&combined_file, "series", &names, &groups)?;
    let svg = chart.to_svg().map_err(CliError::Plot)?;
    let plot_file = out.join(PLOT_FILE);
    fs::write(&plot_file, svg)?;
    Ok(CompareReport {
        metric,
        series: groups.into_iter().map(|g| g.0).collect(),
        combined_file,
        plot_file,
    })
}

/// A model whose per-datum gradients are scaled by 1.01; used to confirm
/// that `check` notices a wrong gradient.
struct CorruptedGradient<'a>(&'a Model);

impl Potential for CorruptedGradient<'_> {
    fn num_data(&self) -> usize {
        self.0.num_data()
    }

    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn grad_component_into(&self, j: usize, theta: &[f64], out: &mut [f64]) {
        self.0.grad_component_into(j, theta, out);
        out.iter_mut().for_each(|v| *v *= 1.01);
    }

    fn potential_value(&self, theta: &[f64]) -> f64 {
        self.0.potential_value(theta)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckItem {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub tolerance: f64,
    pub what: &'static str,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub items: Vec<CheckItem>,
}

impl CheckReport {
    pub fn passed(&self) -> bool {
        self.items.iter().all(|i| i.passed)
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for i in &self.items {
            let tag = if i.passed { "PASS" } else { "FAIL" };
            let _ = writeln!(
                s,
                "{tag} {:<28} {} = {:.3e} (tolerance {:.1e})",
                i.name, i.what, i.value, i.tolerance
            );
        }
        s
    }
}

pub const FD_TOLERANCE: f64 = 1e-5;
pub const ENUMERATION_TOLERANCE: f64 = 1e-12;
const FD_POINTS: usize = 20;
const REDUCTION_STEPS: u64 = 50;

/// Gradient finite differences on the configured model, exact estimator
/// unbiasedness on a four-row copy (B = 2), and the zero-kernel SGLD
/// reduction for every estimator kind.
pub fn cmd_check(config: &ExperimentConfig, corrupt_gradient: bool) -> CliResult<CheckReport> {
    let exp = Experiment::prepare(config)?;
    let model = &exp.model;
    let corrupted = CorruptedGradient(model);
    let potential: &dyn Potential = if corrupt_gradient { &corrupted } else { model };
    let d = model.dim();
    let mut r = rng::stream(config.root_seed, Purpose::Diagnostics, 0);
    let mut normal =
        |len: usize| -> Vec<f64> { (0..len).map(|_| StandardNormal.sample(&mut r)).collect() };
    let mut items = Vec::new();

    let points = Matrix::from_vec(FD_POINTS, d, normal(FD_POINTS * d));
    let fd = fd_gradient_check(potential, &points, 1e-5);
    items.push(CheckItem {
        name: "gradient_fd".into(),
        passed: fd < FD_TOLERANCE,
        value: fd,
        tolerance: FD_TOLERANCE,
        what: "max relative error",
    });

    let shadow_rows: Vec<usize> = (0..4.min(model.num_data())).collect();
    let shadow_data: Dataset = model.dataset().subset(&shadow_rows, "shadow");
    let shadow = Model::new(model.kind(), shadow_data, model.prior_precision())?;
    let theta = normal(d);
    let mut full = vec![0.0; d];
    shadow.full_grad_into(&theta, &mut full);
    let scale = full.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    for kind in EstimatorKind::ALL {
        let err = enumeration_check(&shadow, kind, 2.min(shadow_rows.len()), &theta, &mut r)?;
        items.push(CheckItem {
            name: format!("unbiasedness[{kind:?}]"),
            passed: err <= ENUMERATION_TOLERANCE * scale,
            value: err,
            tolerance: ENUMERATION_TOLERANCE * scale,
            what: "max abs deviation",
        });
    }

    let n = model.num_data();
    for kind in EstimatorKind::ALL {
        let est = EstimatorConfig::new(kind, config.batch_size.min(n))
            .with_epoch(config.epoch_steps(n))
            .with_anchor_batch(config.anchor_batch.min(n));
        let report = sgld_reduction_check(
            potential,
            est,
            config.step_size,
            config.beta_inv,
            config.particles.min(4),
            REDUCTION_STEPS,
            config.root_seed,
        )?;
        items.push(CheckItem {
            name: format!("sgld_reduction[{kind:?}]"),
            passed: report.mismatches == 0,
            value: report.max_abs_diff,
            tolerance: 0.0,
            what: "max abs difference",
        });
    }
    Ok(CheckReport { items })
}

/// Reads `key = value` theory inputs over the defaults; every bad line is reported.
pub fn parse_theory_inputs(text: &str) -> Result<TheoryInputs, Vec<String>> {
    let mut x = TheoryInputs::default();
    let mut errors = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split_once('#').map_or(raw, |(before, _)| before).trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            errors.push(format!("line {}: expected 'key = value'", i + 1));
            continue;
        };
        let (key, value) = (key.trim(), value.trim());
        let parsed = match value {
            "inf" | "infinity" => Ok(f64::INFINITY),
            v => v.parse::<f64>(),
        };
        match parsed {
            Ok(v) if x.set(key, v) => {}
            Ok(_) => errors.push(format!("line {}: unknown key '{key}'", i + 1)),
            Err(_) => errors.push(format!("line {}: {key}: '{value}' is not a number", i + 1)),
        }
    }
    if errors.is_empty() {
        Ok(x)
    } else {
        Err(errors)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstantsReport {
    pub text: String,
    /// Variants whose step-size conditions failed, with the reason.
    pub refused: Vec<String>,
}

/// C1..C5 followed by each requested bound with its terms.
pub fn constants_report(x: &TheoryInputs, variants: &[BoundVariant]) -> CliResult<ConstantsReport> {
    x.validate()?;
    let c = theory_constants(x).map_err(|e| CliError::Refused(format!("refused: {e}")))?;
    let mut text = String::new();
    for (name, v) in [
        ("C1", c.c1),
        ("C2", c.c2),
        ("C3", c.c3),
        ("C4", c.c4),
        ("C5", c.c5),
    ] {
        let _ = writeln!(text, "{name} = {v:.10e}");
    }
    let mut refused = Vec::new();
    for &variant in variants {
        let _ = writeln!(text, "\n{}", variant.name());
        match bound_eval(variant, x) {
            Ok(report) => {
                for (term, v) in &report.terms {
                    let _ = writeln!(text, "  {term:<62} {v:.6e}");
                }
                let _ = writeln!(text, "  {:<62} {:.6e}", "total", report.total);
                if let Some(tau) = report.prescribed_tau {
                    let _ = writeln!(text, "  stated for tau = {tau:.6e}");
                }
            }
            Err(e) => {
                let _ = writeln!(text, "  refused: {e}");
                refused.push(format!("{}: {e}", variant.name()));
            }
        }
    }
    Ok(ConstantsReport { text, refused })
}

pub fn cmd_constants(path: &Path, variants: &[BoundVariant]) -> CliResult<ConstantsReport> {
    let text = fs::read_to_string(path)?;
    let x = parse_theory_inputs(&text).map_err(|errs| {
        CliError::Config(
            errs.into_iter()
                .map(|e| format!("{}: {e}", path.display()))
                .collect(),
        )
    })?;
    constants_report(&x, variants)
}

/// Writes a synthetic dataset as CSV: columns `x1..xd`, plus `label` for
/// logistic data.
pub fn cmd_make_synthetic(
    model: ModelKind,
    param: &[f64],
    n: usize,
    seed: u64,
    out: &Path,
) -> CliResult<Dataset> {
    let ds = match model {
        ModelKind::GaussianMean => make_gaussian_data(param, n, seed)?,
        ModelKind::LogNormalMean => make_lognormal_data(param, n, seed)?,
        ModelKind::LogisticRegression => make_logistic_data(param, n, seed)?,
    };
    if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(out)?;
    let mut header: Vec<String> = (1..=ds.dim()).map(|i| format!("x{i}")).collect();
    if ds.labels.is_some() {
        header.push("label".into());
    }
    w.write_record(&header)?;
    for (i, row) in ds.features.iter_rows().enumerate() {
        let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        if let Some(labels) = &ds.labels {
            rec.push(labels[i].to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(ds)
}
