use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use spos_cli::commands::constants_report;
use spos_cli::config::model_from_str;
use spos_cli::{
    cmd_check, cmd_compare, cmd_constants, cmd_make_synthetic, cmd_run, CliError, CliResult,
    ExperimentConfig,
};
use spos_core::theory::BoundVariant;

/// Variance-reduced particle samplers: experiments, checks and bounds.
///
/// Settings come from a flat `key = value` config file; `--set key=value`
/// and the named flags override it (flag > file > default). Set
/// SPOS_THREADS to fix the number of worker threads.
#[derive(Parser)]
#[command(name = "spos", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Overrides {
    /// Override a config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated seed list.
    #[arg(long)]
    seeds: Option<String>,
    /// Comma-separated algorithm list.
    #[arg(long)]
    algorithms: Option<String>,
    /// Number of iterations T.
    #[arg(long)]
    iterations: Option<u64>,
}

impl Overrides {
    fn pairs(&self) -> Vec<String> {
        let mut v = self.set.clone();
        if let Some(out) = &self.out {
            v.push(format!("output={}", out.display()));
        }
        if let Some(s) = &self.seeds {
            v.push(format!("seeds={s}"));
        }
        if let Some(a) = &self.algorithms {
            v.push(format!("algorithms={a}"));
        }
        if let Some(t) = self.iterations {
            v.push(format!("iterations={t}"));
        }
        v
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Saga,
    SvrgI,
    SvrgIi,
    SvrgPlus,
    All,
}

#[derive(Subcommand)]
enum Command {
    /// Run every configured algorithm and seed; write traces and a summary.
    Run {
        /// Config file (defaults are used when omitted).
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run several configs and plot one metric of all of them.
    Compare {
        /// `NAME=FILE` or `FILE` (named after the file stem), in legend order.
        #[arg(required = true)]
        configs: Vec<String>,
        /// Output directory for the combined CSV, plot and per-config runs.
        #[arg(long, default_value = "compare")]
        out: PathBuf,
        /// Metric to plot (defaults to the first config's `plot_metric`).
        #[arg(long)]
        metric: Option<String>,
        /// Log-scale y axis.
        #[arg(long)]
        log_y: bool,
        /// Override a key in every config; repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Gradient, unbiasedness and SGLD-reduction self-checks.
    Check {
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
        /// Scale model gradients by 1.01 (negative control).
        #[arg(long, hide = true)]
        corrupt_gradient: bool,
    },
    /// Print C1..C5 and the W2 bounds for theory inputs in a `key = value` file.
    Constants {
        /// Input file; the defaults (see `--template`) are used when omitted.
        inputs: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "all")]
        variant: VariantArg,
        /// Print the default input file and exit.
        #[arg(long)]
        template: bool,
    },
    /// Write a synthetic dataset as CSV.
    MakeSynthetic {
        /// gaussian, lognormal or logistic.
        #[arg(long, default_value = "lognormal")]
        model: String,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 10)]
        dim: usize,
        /// Comma list of generating means (or weights); one value is broadcast.
        #[arg(long, default_value = "1")]
        param: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: Option<&Path>, overrides: &[String]) -> CliResult<ExperimentConfig> {
    let mut config = match path {
        Some(p) => ExperimentConfig::load(p).map_err(CliError::Config)?,
        None => ExperimentConfig::default(),
    };
    config
        .apply_overrides(overrides)
        .map_err(CliError::Config)?;
    Ok(config)
}

fn parse_named(arg: &str) -> (String, PathBuf) {
    match arg.split_once('=') {
        Some((name, path)) => (name.to_string(), PathBuf::from(path)),
        None => {
            let path = PathBuf::from(arg);
            let name = path
                .file_stem()
                .map_or_else(|| arg.to_string(), |s| s.to_string_lossy().into_owned());
            (name, path)
        }
    }
}

fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Run { config, overrides } => {
            let config = load_config(config.as_deref(), &overrides.pairs())?;
            let report = cmd_run(&config)?;
            for t in &report.traces {
                let last = t.records.last().expect("every run records step 0");
                let values: Vec<String> = last
                    .values
                    .iter()
                    .map(|(k, v)| format!("{k}={v:.6}"))
                    .collect();
                println!(
                    "{}: step {} passes {:.3} {}",
                    t.file_stem(),
                    last.step,
                    last.data_passes,
                    values.join(" ")
                );
            }
            println!(
                "wrote {} trace(s) and {}",
                report.trace_files.len(),
                report.summary_file.display()
            );
        }
        Command::Compare {
            configs,
            out,
            metric,
            log_y,
            set,
        } => {
            let mut named = Vec::new();
            let mut errors = Vec::new();
            for arg in &configs {
                let (name, path) = parse_named(arg);
                match load_config(Some(&path), &set) {
                    Ok(c) => named.push((name, c)),
                    Err(CliError::Config(e)) => errors.extend(e),
                    Err(e) => return Err(e),
                }
            }
            if !errors.is_empty() {
                return Err(CliError::Config(errors));
            }
            let report = cmd_compare(&named, &out, metric.as_deref(), log_y.then_some(true))?;
            println!("plotted {} for {}", report.metric, report.series.join(", "));
            println!(
                "wrote {} and {}",
                report.combined_file.display(),
                report.plot_file.display()
            );
        }
        Command::Check {
            config,
            overrides,
            corrupt_gradient,
        } => {
            let config = load_config(config.as_deref(), &overrides.pairs())?;
            let report = cmd_check(&config, corrupt_gradient)?;
            print!("{}", report.render());
            let failed = report.items.iter().filter(|i| !i.passed).count();
            if failed > 0 {
                return Err(CliError::ChecksFailed(failed));
            }
        }
        Command::Constants {
            inputs,
            variant,
            template,
        } => {
            if template {
                for (k, v) in spos_core::TheoryInputs::default().fields() {
                    println!("{k} = {v}");
                }
                return Ok(());
            }
            let variants: Vec<BoundVariant> = match variant {
                VariantArg::Saga => vec![BoundVariant::Saga],
                VariantArg::SvrgI => vec![BoundVariant::SvrgI],
                VariantArg::SvrgIi => vec![BoundVariant::SvrgII],
                VariantArg::SvrgPlus => vec![BoundVariant::SvrgPlus],
                VariantArg::All => BoundVariant::ALL.to_vec(),
            };
            let report = match inputs {
                Some(path) => cmd_constants(&path, &variants)?,
                None => constants_report(&spos_core::TheoryInputs::default(), &variants)?,
            };
            print!("{}", report.text);
            if !report.refused.is_empty() {
                return Err(CliError::Refused(format!(
                    "{} bound(s) refused",
                    report.refused.len()
                )));
            }
        }
        Command::MakeSynthetic {
            model,
            n,
            dim,
            param,
            seed,
            out,
        } => {
            let kind = model_from_str(&model).map_err(|e| CliError::Config(vec![e]))?;
            let mut c = ExperimentConfig {
                synthetic_dim: dim,
                ..ExperimentConfig::default()
            };
            c.set("true_param", &param)
                .map_err(|e| CliError::Config(vec![format!("param: {e}")]))?;
            if c.true_param.len() != 1 && c.true_param.len() != dim {
                return Err(CliError::Config(vec![format!(
                    "param has {} values for dim {dim}",
                    c.true_param.len()
                )]));
            }
            let ds = cmd_make_synthetic(kind, &c.true_param_vector(), n, seed, &out)?;
            println!(
                "wrote {} rows x {} features to {}",
                ds.len(),
                ds.dim(),
                out.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    if let Err(e) = spos_cli::init_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
