//! End-to-end behaviour of the `spos` binary and the command functions.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use spos_cli::commands::{cmd_check, cmd_compare, cmd_run, COMBINED_FILE, PLOT_FILE, SUMMARY_FILE};
use spos_cli::config::{Algorithm, DataSource};
use spos_cli::{CliError, ExperimentConfig};
use spos_core::{MetricSchedule, ModelKind};

fn spos(dir: &Path, args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_spos"));
    cmd.current_dir(dir).args(args);
    match threads {
        Some(t) => cmd.env("SPOS_THREADS", t),
        None => cmd.env_remove("SPOS_THREADS"),
    };
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn small(out: &Path) -> ExperimentConfig {
    ExperimentConfig {
        synthetic_n: 200,
        synthetic_dim: 3,
        particles: 8,
        iterations: 60,
        output: out.to_path_buf(),
        ..ExperimentConfig::default()
    }
}

fn read_rows(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(|f| f.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

#[test]
fn zero_iterations_give_a_single_row() {
    let dir = tempfile::tempdir().unwrap();
    let c = ExperimentConfig {
        iterations: 0,
        ..small(dir.path())
    };
    let report = cmd_run(&c).unwrap();
    let (header, rows) = read_rows(&report.trace_files[0]);
    assert_eq!(header, ["step", "data_passes", "wall_time_s", "log_mse"]);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0], 0.0);
}

#[test]
fn two_seeds_give_two_traces_and_one_summary() {
    let dir = tempfile::tempdir().unwrap();
    let c = ExperimentConfig {
        seeds: vec![3, 9],
        ..small(dir.path())
    };
    cmd_run(&c).unwrap();
    let mut csvs: Vec<String> = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    csvs.sort();
    assert_eq!(csvs, ["SPOS_seed3.csv", "SPOS_seed9.csv", SUMMARY_FILE]);
    let (header, labels) = read_rows_labelled(&dir.path().join(SUMMARY_FILE));
    assert_eq!(
        header,
        ["algorithm", "data_passes", "log_mse_mean", "log_mse_std"]
    );
    assert!(!labels.is_empty() && labels.iter().all(|l| l == "SPOS"));
}

#[test]
fn summary_is_the_mean_of_interpolated_traces() {
    let dir = tempfile::tempdir().unwrap();
    let c = ExperimentConfig {
        seeds: vec![0, 1, 2],
        ..small(dir.path())
    };
    let report = cmd_run(&c).unwrap();
    let rows = &report.summaries[0].1;
    assert!(rows.len() > 5);
    for row in rows {
        let vals: Vec<f64> = report
            .traces
            .iter()
            .map(|t| {
                spos_cli::summary::interpolate(&t.series("log_mse").unwrap(), row.data_passes)
                    .unwrap()
            })
            .collect();
        let mean = vals.iter().sum::<f64>() / 3.0;
        let std = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 2.0).sqrt();
        assert!((row.stats[0].0 - mean).abs() < 1e-12);
        assert!((row.stats[0].1 - std).abs() < 1e-12);
    }
}

#[test]
fn traces_have_nondecreasing_passes_and_no_nan() {
    let dir = tempfile::tempdir().unwrap();
    let c = ExperimentConfig {
        algorithms: vec![
            Algorithm::Spos,
            Algorithm::SagaPos,
            Algorithm::SvrgPos,
            Algorithm::SvrgPosPlus,
            Algorithm::Svgd,
        ],
        anchor_batch: 50,
        ..small(dir.path())
    };
    let report = cmd_run(&c).unwrap();
    for f in &report.trace_files {
        let (_, rows) = read_rows(f);
        assert!(
            rows.windows(2).all(|w| w[0][1] <= w[1][1]),
            "{}",
            f.display()
        );
        assert!(rows.iter().flatten().all(|v| v.is_finite()));
    }
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let conf = "algorithms = SPOS, SAGA-POS, SVRG-POS-II\nseeds = 0, 1\niterations = 80\nsynthetic_n = 300\nparticles = 12\n";
    fs::write(dir.path().join("e.conf"), conf).unwrap();
    let mut outputs = Vec::new();
    for (out, threads) in [("a", Some("1")), ("b", Some("4")), ("c", None)] {
        let o = spos(dir.path(), &["run", "e.conf", "--out", out], threads);
        assert!(o.status.success(), "{}", stderr(&o));
        let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir.path().join(out))
            .unwrap()
            .map(|e| e.unwrap())
            .filter(|e| e.file_name().to_string_lossy().ends_with(".csv"))
            .map(|e| {
                (
                    e.file_name().to_string_lossy().into_owned(),
                    fs::read(e.path()).unwrap(),
                )
            })
            .collect();
        files.sort();
        assert_eq!(files.len(), 7);
        outputs.push(files);
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
}

#[test]
fn effective_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let c = ExperimentConfig {
        model: ModelKind::GaussianMean,
        true_param: vec![0.5, -1.25, 3.0],
        record_every: MetricSchedule::EverySteps(7),
        algorithms: vec![Algorithm::SvrgLdPlus, Algorithm::Spos],
        step_size: 3.3e-5,
        plot_metric: Some("w2_gaussian".into()),
        anchor_batch: 20,
        ..small(dir.path())
    };
    cmd_run(&c).unwrap();
    let written = fs::read_to_string(dir.path().join("config.txt")).unwrap();
    let back = ExperimentConfig::parse(&written).unwrap();
    assert_eq!(back, c);
    assert_eq!(back.serialize(), written);
}

#[test]
fn flags_override_file_which_overrides_defaults() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("p.conf"),
        "particles = 5\niterations = 3\nseeds = 4\nsynthetic_n = 100\n",
    )
    .unwrap();
    let o = spos(
        dir.path(),
        &[
            "run",
            "p.conf",
            "--set",
            "particles=6",
            "--iterations",
            "2",
            "--out",
            "o",
        ],
        Some("1"),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let c = ExperimentConfig::load(&dir.path().join("o/config.txt")).unwrap();
    assert_eq!(
        (c.particles, c.iterations, c.seeds.clone(), c.batch_size),
        (6, 2, vec![4], 15)
    );
}

#[test]
fn validation_errors_are_listed_before_any_run() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("bad.conf"),
        "step_size = -1\nbatch_size = 5000\nseeds =\ndata = missing.csv\n",
    )
    .unwrap();
    let o = spos(
        dir.path(),
        &["run", "bad.conf", "--out", "never"],
        Some("1"),
    );
    assert!(!o.status.success());
    let err = stderr(&o);
    for needle in ["step_size", "seeds", "missing.csv"] {
        assert!(err.contains(needle), "{needle} missing from: {err}");
    }
    assert!(!dir.path().join("never").exists());

    let o = spos(
        dir.path(),
        &[
            "run",
            "--set",
            "batch_size=5000",
            "--set",
            "particles=0",
            "--out",
            "never",
        ],
        Some("1"),
    );
    let err = stderr(&o);
    assert!(
        err.contains("batch_size 5000 exceeds") && err.contains("particles"),
        "{err}"
    );
}

#[test]
fn divergence_leaves_a_marked_partial_trace() {
    let dir = tempfile::tempdir().unwrap();
    let c = ExperimentConfig {
        step_size: 10.0,
        seeds: vec![0, 1],
        ..small(dir.path())
    };
    match cmd_run(&c) {
        Err(CliError::Diverged(runs)) => assert_eq!(runs.len(), 2),
        other => panic!("expected divergence, got {other:?}"),
    }
    let marker = dir.path().join("SPOS_seed0.csv.partial");
    assert!(fs::read_to_string(marker)
        .unwrap()
        .contains("diverged at step"));
    let (_, rows) = read_rows(&dir.path().join("SPOS_seed0.csv"));
    assert!(!rows.is_empty());
    assert!(rows.iter().flatten().all(|v| v.is_finite()));

    let o = spos(
        dir.path(),
        &[
            "run",
            "--set",
            "step_size=10",
            "--set",
            "synthetic_n=100",
            "--out",
            "x",
        ],
        Some("1"),
    );
    assert!(!o.status.success());
    assert!(dir.path().join("x/SPOS_seed0.csv.partial").exists());

    // A later clean run clears the stale marker.
    let o = spos(
        dir.path(),
        &[
            "run",
            "--set",
            "synthetic_n=100",
            "--iterations",
            "5",
            "--out",
            "x",
        ],
        Some("1"),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(!dir.path().join("x/SPOS_seed0.csv.partial").exists());
}

/// Balanced tags and finite coordinates, checked with an XML parser.
fn assert_well_formed(svg: &str) -> Vec<String> {
    let doc = roxmltree::Document::parse(svg).expect("well-formed XML");
    let mut polylines = 0;
    for node in doc.descendants().filter(|n| n.is_element()) {
        for attr in ["x", "y", "x1", "x2", "y1", "y2", "width", "height"] {
            if let Some(v) = node.attribute(attr) {
                assert!(v.parse::<f64>().unwrap().is_finite(), "{attr}={v}");
            }
        }
        if node.tag_name().name() == "polyline" {
            polylines += 1;
            for pair in node.attribute("points").unwrap().split_whitespace() {
                let (x, y) = pair.split_once(',').unwrap();
                assert!(
                    x.parse::<f64>().unwrap().is_finite() && y.parse::<f64>().unwrap().is_finite()
                );
            }
        }
    }
    assert!(polylines > 0);
    doc.descendants()
        .filter(|n| n.tag_name().name() == "text")
        .filter_map(|n| n.text().map(String::from))
        .collect()
}

#[test]
fn compare_plots_series_in_config_order() {
    let dir = tempfile::tempdir().unwrap();
    let base = small(dir.path());
    let configs = vec![
        (
            "zeta".to_string(),
            ExperimentConfig {
                algorithms: vec![Algorithm::SagaPos],
                ..base.clone()
            },
        ),
        (
            "alpha".to_string(),
            ExperimentConfig {
                algorithms: vec![Algorithm::Spos],
                ..base.clone()
            },
        ),
        (
            "mid".to_string(),
            ExperimentConfig {
                algorithms: vec![Algorithm::Sgld, Algorithm::Svgd],
                ..base.clone()
            },
        ),
    ];
    let out = dir.path().join("cmp");
    let report = cmd_compare(&configs, &out, None, None).unwrap();
    assert_eq!(report.series, ["zeta", "alpha", "mid/SGLD", "mid/SVGD"]);
    let texts = assert_well_formed(&fs::read_to_string(out.join(PLOT_FILE)).unwrap());
    let legend: Vec<&String> = texts.iter().filter(|t| report.series.contains(t)).collect();
    assert_eq!(legend, report.series.iter().collect::<Vec<_>>());
    let (header, rows) = read_rows_labelled(&out.join(COMBINED_FILE));
    assert_eq!(header[..2], ["series", "data_passes"]);
    let mut order: Vec<String> = Vec::new();
    for r in rows {
        if order.last() != Some(&r) {
            order.push(r);
        }
    }
    assert_eq!(order, report.series);
}

fn read_rows_labelled(path: &Path) -> (Vec<String>, Vec<String>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    (
        header,
        r.records().map(|rec| rec.unwrap()[0].to_string()).collect(),
    )
}

#[test]
fn single_config_compare_has_one_series() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("one.conf"),
        "iterations = 40\nsynthetic_n = 100\nparticles = 4\n",
    )
    .unwrap();
    let o = spos(
        dir.path(),
        &["compare", "one.conf", "--out", "p"],
        Some("2"),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let svg = fs::read_to_string(dir.path().join("p").join(PLOT_FILE)).unwrap();
    assert_well_formed(&svg);
    assert_eq!(svg.matches("<polyline").count(), 1);
}

#[test]
fn compare_rejects_mismatched_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let a = small(dir.path());
    let b = ExperimentConfig {
        model: ModelKind::LogisticRegression,
        ..small(dir.path())
    };
    let err = cmd_compare(
        &[("a".into(), a.clone()), ("b".into(), b)],
        dir.path(),
        None,
        None,
    )
    .unwrap_err();
    assert!(err.to_string().contains("metric mismatch"), "{err}");
    let err = cmd_compare(&[("a".into(), a)], dir.path(), Some("test_accuracy"), None).unwrap_err();
    assert!(err.to_string().contains("not recorded"), "{err}");
}

#[test]
fn log_scale_plot_for_positive_metric() {
    let dir = tempfile::tempdir().unwrap();
    let c = ExperimentConfig {
        model: ModelKind::GaussianMean,
        synthetic_dim: 2,
        ..small(dir.path())
    };
    let report = cmd_compare(
        &[("g".into(), c)],
        &dir.path().join("o"),
        Some("w2_gaussian"),
        Some(true),
    )
    .unwrap();
    let svg = fs::read_to_string(report.plot_file).unwrap();
    assert!(svg.contains("(log scale)"));
    assert_well_formed(&svg);
}

#[test]
fn check_passes_by_default_and_catches_a_bad_gradient() {
    let dir = tempfile::tempdir().unwrap();
    let o = spos(dir.path(), &["check"], Some("2"));
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    let text = stdout(&o);
    assert!(text.lines().all(|l| l.starts_with("PASS")));
    assert!(text.contains("gradient_fd") && text.contains("max relative error = "));

    let o = spos(dir.path(), &["check", "--corrupt-gradient"], Some("2"));
    assert!(!o.status.success());
    let fd_line = stdout(&o)
        .lines()
        .find(|l| l.contains("gradient_fd"))
        .unwrap()
        .to_string();
    assert!(fd_line.starts_with("FAIL"), "{fd_line}");
}

#[test]
fn check_covers_every_model() {
    let dir = tempfile::tempdir().unwrap();
    for model in [
        ModelKind::GaussianMean,
        ModelKind::LogNormalMean,
        ModelKind::LogisticRegression,
    ] {
        let c = ExperimentConfig {
            model,
            ..small(dir.path())
        };
        let report = cmd_check(&c, false).unwrap();
        assert!(report.passed(), "{}", report.render());
        assert_eq!(report.items.len(), 11);
    }
}

#[test]
fn constants_from_a_file() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("in.txt"),
        "# worked example\nh_grad_k = 1\nh_f = 1\nbeta_inv = 1\nl_k = 0.1\nl_f = 0.1\n",
    )
    .unwrap();
    let o = spos(dir.path(), &["constants", "in.txt"], None);
    assert!(o.status.success(), "{}", stderr(&o));
    let c1: f64 = stdout(&o)
        .lines()
        .find_map(|l| l.strip_prefix("C1 = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((c1 - 2.0 / (2f64.sqrt() * 0.5)).abs() < 1e-9);

    fs::write(
        dir.path().join("beta.txt"),
        "h_f = 1\nl_k = 0.1\nl_f = 0.1\nbeta_inv = 0.5\n",
    )
    .unwrap();
    let o = spos(dir.path(), &["constants", "beta.txt"], None);
    assert!(!o.status.success());
    assert!(
        stderr(&o).contains("beta_inv > 3 H_F L_K + 2 L_F"),
        "{}",
        stderr(&o)
    );

    fs::write(dir.path().join("h.txt"), "h = 0.5\n").unwrap();
    let o = spos(
        dir.path(),
        &["constants", "h.txt", "--variant", "saga"],
        None,
    );
    assert!(!o.status.success());
    assert!(stdout(&o).contains("h < B/(8 C2 N)"), "{}", stdout(&o));

    fs::write(dir.path().join("typo.txt"), "hh = 1\nh = x\n").unwrap();
    let o = spos(dir.path(), &["constants", "typo.txt"], None);
    assert!(stderr(&o).contains("unknown key 'hh'") && stderr(&o).contains("'x' is not a number"));
}

#[test]
fn synthetic_files_feed_back_into_runs() {
    let dir = tempfile::tempdir().unwrap();
    let o = spos(
        dir.path(),
        &[
            "make-synthetic",
            "--model",
            "logistic",
            "--n",
            "120",
            "--dim",
            "4",
            "--param",
            "1,-1,0.5,0",
            "--out",
            "d/l.csv",
        ],
        None,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let c = ExperimentConfig {
        model: ModelKind::LogisticRegression,
        data: DataSource::File(dir.path().join("d/l.csv")),
        ..small(&dir.path().join("r"))
    };
    let report = cmd_run(&c).unwrap();
    assert_eq!(
        report.traces[0].metric_names,
        ["test_accuracy", "test_loglik"]
    );
    let meta = fs::read_to_string(dir.path().join("r/metadata.txt")).unwrap();
    assert!(
        meta.contains("data_sha256 = ")
            && meta.contains("train_rows = 96")
            && meta.contains("test_rows = 24")
    );

    let c = ExperimentConfig {
        subsample: 50,
        subsample_seed: 11,
        ..c
    };
    cmd_run(&c).unwrap();
    let meta = fs::read_to_string(dir.path().join("r/metadata.txt")).unwrap();
    assert!(
        meta.contains("subsample_rows = 50") && meta.contains("subsample_seed = 11"),
        "{meta}"
    );
}

#[test]
fn thread_override_must_be_a_positive_integer() {
    let dir = tempfile::tempdir().unwrap();
    let o = spos(dir.path(), &["constants"], Some("zero"));
    assert!(!o.status.success());
    assert!(stderr(&o).contains("SPOS_THREADS"));
}
