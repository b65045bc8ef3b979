//! Sampler-level properties: SGLD reduction, exchangeability, noise scale,
//! evaluation accounting, thread-count independence and convergence.

mod common;

use common::random_model;
use spos_core::diagnostics::sgld_reduction_check;
use spos_core::estimator::{EstimatorConfig, EstimatorKind};
use spos_core::kernel::KernelConfig;
use spos_core::metrics::MetricSuite;
use spos_core::model::{make_gaussian_data, Model, ModelKind};
use spos_core::sampler::{
    self, Dynamics, MetricSchedule, ParticleSystem, RunOptions, Sampler, SamplerConfig,
};
use spos_core::{Matrix, Potential};

#[test]
fn zero_kernel_spos_is_independent_sgld_bit_for_bit() {
    let model = random_model(ModelKind::LogisticRegression, 40, 3, 1.0, 1);
    for kind in EstimatorKind::ALL {
        let est = EstimatorConfig::new(kind, 5)
            .with_epoch(13)
            .with_anchor_batch(7);
        let report = sgld_reduction_check(&model, est, 1e-3, 0.5, 4, 300, 99).unwrap();
        assert_eq!(report.mismatches, 0, "{kind:?}: {report:?}");
    }
}

#[test]
fn zero_kernel_spos_matches_hand_rolled_sgld() {
    // Independent loop: same streams, same formula, no sampler machinery.
    use rand::Rng;
    use rand_distr::StandardNormal;
    use spos_core::rng::{stream, Purpose};

    let model = random_model(ModelKind::GaussianMean, 20, 2, 1.0, 3);
    let (m, steps, h, beta_inv, b, seed) = (3, 200, 1e-3, 0.2, 4, 5u64);
    let cfg = SamplerConfig::new(
        Dynamics::Spos,
        h,
        beta_inv,
        KernelConfig::zero(),
        EstimatorConfig::new(EstimatorKind::Plain, b),
    );
    let init = ParticleSystem::standard_normal(seed, m, 2).unwrap();
    let mut s = Sampler::new(&model, cfg, init.clone()).unwrap();
    for _ in 0..steps {
        s.step().unwrap();
    }
    for i in 0..m {
        let mut theta = init.positions.row(i).to_vec();
        let mut mb = stream(seed, Purpose::Minibatch, i as u64);
        let mut nz = stream(seed, Purpose::Noise, i as u64);
        for _ in 0..steps {
            let idx: Vec<usize> = (0..b).map(|_| mb.random_range(0..20)).collect();
            let mut g = [0.0; 2];
            let mut gj = [0.0; 2];
            for &j in &idx {
                model.grad_component_into(j, &theta, &mut gj);
                for k in 0..2 {
                    g[k] += gj[k];
                }
            }
            let scale = (2.0 * beta_inv * h).sqrt();
            for k in 0..2 {
                let gk = g[k] * (20.0 / b as f64);
                let xi: f64 = nz.sample(StandardNormal);
                theta[k] = theta[k] - beta_inv * gk * h + scale * xi;
            }
        }
        for (a, e) in s.positions().row(i).iter().zip(&theta) {
            assert!((a - e).abs() < 1e-12, "particle {i}: {a} vs {e}");
        }
    }
}

#[test]
fn permuting_particles_with_their_streams_permutes_the_trajectory() {
    let model = random_model(ModelKind::GaussianMean, 30, 2, 1.0, 8);
    let perm = [3, 0, 4, 1, 2];
    for kind in [
        EstimatorKind::Plain,
        EstimatorKind::Saga,
        EstimatorKind::SvrgII,
    ] {
        let cfg = SamplerConfig::new(
            Dynamics::Spos,
            5e-4,
            0.1,
            KernelConfig::median(),
            EstimatorConfig::new(kind, 3).with_epoch(9),
        );
        let base = ParticleSystem::standard_normal(17, 5, 2).unwrap();
        let permuted = ParticleSystem::with_streams(
            base.positions.select_rows(&perm),
            17,
            perm.iter().map(|&p| p as u64).collect(),
        )
        .unwrap();
        let mut a = Sampler::new(&model, cfg, base).unwrap();
        let mut b = Sampler::new(&model, cfg, permuted).unwrap();
        for _ in 0..100 {
            a.step().unwrap();
            b.step().unwrap();
            for (row, &p) in perm.iter().enumerate() {
                for (x, y) in b.positions().row(row).iter().zip(a.positions().row(p)) {
                    // only the pairwise summation order differs
                    assert!((x - y).abs() < 1e-12, "{kind:?}: {x} vs {y}");
                }
            }
        }
    }
}

/// A potential with identically zero gradient.
struct Flat;

impl Potential for Flat {
    fn num_data(&self) -> usize {
        4
    }
    fn dim(&self) -> usize {
        3
    }
    fn grad_component_into(&self, _: usize, _: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn potential_value(&self, _: &[f64]) -> f64 {
        0.0
    }
}

#[test]
fn injected_noise_has_variance_two_beta_inv_h() {
    let (h, beta_inv) = (0.01, 0.5);
    let cfg = SamplerConfig::new(
        Dynamics::Spos,
        h,
        beta_inv,
        KernelConfig::zero(),
        EstimatorConfig::new(EstimatorKind::Plain, 2),
    );
    let mut s = Sampler::new(
        &Flat,
        cfg,
        ParticleSystem::standard_normal(2, 2, 3).unwrap(),
    )
    .unwrap();
    let steps = 10_000;
    let mut prev = s.positions().clone();
    let mut incs: Vec<Vec<f64>> = (0..6).map(|_| Vec::with_capacity(steps)).collect();
    for _ in 0..steps {
        s.step().unwrap();
        for (k, (a, b)) in s
            .positions()
            .as_slice()
            .iter()
            .zip(prev.as_slice())
            .enumerate()
        {
            incs[k].push(a - b);
        }
        prev = s.positions().clone();
    }
    let target = 2.0 * beta_inv * h;
    for inc in incs {
        let mean = inc.iter().sum::<f64>() / steps as f64;
        let var = inc.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (steps - 1) as f64;
        assert!(
            (var / target - 1.0).abs() < 0.05,
            "variance {var} vs {target}"
        );
    }
}

#[test]
fn evaluation_counter_follows_the_accounting_formulas() {
    let model = random_model(ModelKind::GaussianMean, 50, 2, 1.0, 21);
    let (m, n, b, tau, ab, t) = (3u64, 50u64, 4u64, 7u64, 9u64, 45u64);
    for kind in EstimatorKind::ALL {
        let est = EstimatorConfig::new(kind, b as usize)
            .with_epoch(tau as usize)
            .with_anchor_batch(ab as usize);
        let cfg = SamplerConfig::new(Dynamics::Spos, 1e-4, 0.1, KernelConfig::fixed(1.0), est);
        let mut s = Sampler::new(
            &model,
            cfg,
            ParticleSystem::standard_normal(1, m as usize, 2).unwrap(),
        )
        .unwrap();
        for _ in 0..t {
            s.step().unwrap();
        }
        let expected = match kind {
            EstimatorKind::Plain => t * m * b,
            EstimatorKind::Saga => m * n + t * m * b,
            EstimatorKind::SvrgI | EstimatorKind::SvrgII => {
                m * n + t * m * 2 * b + (t / tau) * m * n
            }
            EstimatorKind::SvrgPlus => m * n + t * m * 2 * b + (t / tau) * m * ab,
        };
        assert_eq!(s.estimator().eval_count(), expected, "{kind:?}");
        assert_eq!(s.data_passes(), expected as f64 / (n * m) as f64);
    }
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let model = random_model(ModelKind::LogisticRegression, 60, 4, 1.0, 31);
    let run_with = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| {
            let cfg = SamplerConfig::new(
                Dynamics::Spos,
                1e-3,
                1.0,
                KernelConfig::median(),
                EstimatorConfig::new(EstimatorKind::Saga, 5),
            );
            let opts = RunOptions {
                iterations: 150,
                schedule: MetricSchedule::EverySteps(10),
                record_wall_time: false,
            };
            sampler::run(&model, cfg, 12, &opts, &MetricSuite::new(), 4).unwrap()
        })
    };
    let one = run_with(1);
    let many = run_with(4);
    let bits = |m: &Matrix| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&one.system.positions), bits(&many.system.positions));
    assert_eq!(one.records, many.records);
}

#[test]
fn spos_particle_mean_tracks_the_posterior_mean() {
    let (n, m) = (100, 16);
    let mut hits = 0;
    for seed in 0..20u64 {
        let data = make_gaussian_data(&[0.5, -1.0], n, 300 + seed).unwrap();
        let model = Model::new(ModelKind::GaussianMean, data, 1.0).unwrap();
        let post = model.closed_form_posterior().unwrap();
        let cfg = SamplerConfig::new(
            Dynamics::Spos,
            1e-3,
            1.0 / n as f64,
            KernelConfig::median(),
            EstimatorConfig::new(EstimatorKind::Plain, 10),
        );
        let opts = RunOptions {
            iterations: 2000,
            schedule: MetricSchedule::EverySteps(2000),
            record_wall_time: false,
        };
        let out = sampler::run(&model, cfg, m, &opts, &MetricSuite::new(), seed).unwrap();
        let mean = out.system.positions.column_mean();
        let err: f64 = mean
            .iter()
            .zip(&post.mean)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let trace = post.covariance[(0, 0)] + post.covariance[(1, 1)];
        if err < 3.0 * (trace / m as f64).sqrt() {
            hits += 1;
        }
    }
    assert!(hits >= 18, "{hits}/20 seeds within tolerance");
}

#[test]
fn svgd_single_particle_follows_the_score() {
    // With M = 1 the SVGD update is θ + h·(-G), a plain gradient step.
    let model = random_model(ModelKind::GaussianMean, 10, 2, 0.0, 41);
    let cfg = SamplerConfig::new(
        Dynamics::Svgd,
        1e-2,
        1.0,
        KernelConfig::fixed(1.0),
        EstimatorConfig::new(EstimatorKind::Plain, 10),
    );
    let init = ParticleSystem::new(Matrix::from_rows(&[[3.0, -2.0]]), 0).unwrap();
    let mut s = Sampler::new(&model, cfg, init).unwrap();
    for _ in 0..2000 {
        s.step().unwrap();
    }
    let mean = model.dataset().features.column_mean();
    for (a, b) in s.positions().row(0).iter().zip(&mean) {
        // B = N draws with replacement still jitter the estimate; the mode is the data mean.
        assert!((a - b).abs() < 0.2, "{a} vs {b}");
    }
}
