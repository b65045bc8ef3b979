//! Particle dynamics and the training loop.
//!
//! * SGLD: `θ ← θ - β⁻¹ G h + sqrt(2β⁻¹h) ξ`, per particle.
//! * SVGD: `θ_i ← θ_i + (h/M) Σ_q [K(θ_q - θ_i) s_q + ∇_{θ_q} K(θ_q - θ_i)]`,
//!   where `s_q` is the score fed to [`svgd_step`] (the training loop passes
//!   `-G_q`).
//! * SPOS: `θ_i ← θ_i - hβ⁻¹ G_i - (h/M) Σ_j K(θ_i - θ_j) G_j
//!   + (h/M) Σ_j ∇K(θ_j - θ_i) + sqrt(2β⁻¹h) ξ_i`.
//!
//! The SPOS kernel-gradient term is evaluated at `θ_j - θ_i`, the gradient with
//! respect to the neighbour as in SVGD, which pushes particles apart.
//!
//! Every pairwise term reads the step-k snapshot, so particle order never
//! changes a result. Each particle draws its minibatches and noise from its own
//! stream, which keeps runs bit-identical for any thread count.

use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{ensure_finite, Error, Result};
use crate::estimator::{
    sample_minibatch, Estimate, EstimatorConfig, EstimatorState, MinibatchDraw,
};
use crate::kernel::KernelConfig;
use crate::matrix::{norm, Matrix};
use crate::metrics::{MetricRecord, MetricSet};
use crate::model::Potential;
use crate::rng::{self, Purpose, StreamRng};

/// Positions with norm above this abort the run.
pub const DIVERGENCE_NORM: f64 = 1e8;

/// Stream index used for shared minibatch draws.
const SHARED_STREAM: u64 = 1 << 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dynamics {
    Sgld,
    Svgd,
    Spos,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MinibatchMode {
    /// One independent draw per particle per step.
    PerParticle,
    /// A single draw per step used by every particle.
    Shared,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    pub dynamics: Dynamics,
    pub step_size: f64,
    /// `β⁻¹`; ignored by SVGD.
    pub beta_inv: f64,
    pub kernel: KernelConfig,
    pub estimator: EstimatorConfig,
    pub minibatch: MinibatchMode,
}

impl SamplerConfig {
    pub fn new(
        dynamics: Dynamics,
        step_size: f64,
        beta_inv: f64,
        kernel: KernelConfig,
        estimator: EstimatorConfig,
    ) -> Self {
        Self {
            dynamics,
            step_size,
            beta_inv,
            kernel,
            estimator,
            minibatch: MinibatchMode::PerParticle,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "step size must be > 0 (got {})",
                self.step_size
            )));
        }
        if self.dynamics != Dynamics::Svgd && !(self.beta_inv.is_finite() && self.beta_inv > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "beta_inv must be > 0 (got {})",
                self.beta_inv
            )));
        }
        self.kernel.validate()?;
        self.estimator.validate()
    }
}

/// Particle positions plus the stream index each particle draws from.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSystem {
    pub positions: Matrix,
    pub step: u64,
    pub seed: u64,
    /// Stream index per particle (defaults to `0..M`).
    pub stream_ids: Vec<u64>,
}

impl ParticleSystem {
    pub fn new(positions: Matrix, seed: u64) -> Result<Self> {
        let stream_ids = (0..positions.rows() as u64).collect();
        Self::with_streams(positions, seed, stream_ids)
    }

    pub fn with_streams(positions: Matrix, seed: u64, stream_ids: Vec<u64>) -> Result<Self> {
        if positions.rows() == 0 || positions.cols() == 0 {
            return Err(Error::InvalidArgument(
                "need M >= 1 particles of dimension >= 1".into(),
            ));
        }
        if stream_ids.len() != positions.rows() {
            return Err(Error::DimensionMismatch {
                expected: positions.rows(),
                got: stream_ids.len(),
            });
        }
        ensure_finite(positions.as_slice(), "initial positions")?;
        Ok(Self {
            positions,
            step: 0,
            seed,
            stream_ids,
        })
    }

    /// `M` particles drawn i.i.d. from `N(mean, std² I)`, each from its own
    /// init stream.
    pub fn gaussian(seed: u64, m: usize, d: usize, mean: f64, std: f64) -> Result<Self> {
        let mut data = Vec::with_capacity(m * d);
        for i in 0..m {
            let mut r = rng::stream(seed, Purpose::Init, i as u64);
            for _ in 0..d {
                let z: f64 = r.sample(StandardNormal);
                data.push(mean + std * z);
            }
        }
        Self::new(Matrix::from_vec(m, d, data), seed)
    }

    pub fn standard_normal(seed: u64, m: usize, d: usize) -> Result<Self> {
        Self::gaussian(seed, m, d, 0.0, 1.0)
    }

    pub fn num_particles(&self) -> usize {
        self.positions.rows()
    }

    pub fn dim(&self) -> usize {
        self.positions.cols()
    }
}

#[inline]
fn langevin(theta: &[f64], g: &[f64], h: f64, beta_inv: f64, noise: &[f64], out: &mut [f64]) {
    let scale = (2.0 * beta_inv * h).sqrt();
    for (((o, t), gi), n) in out.iter_mut().zip(theta).zip(g).zip(noise) {
        *o = t - beta_inv * gi * h + scale * n;
    }
}

fn check_batch(particles: &Matrix, other: &Matrix, what: &'static str) -> Result<()> {
    if other.rows() != particles.rows() || other.cols() != particles.cols() {
        return Err(Error::DimensionMismatch {
            expected: particles.as_slice().len(),
            got: other.as_slice().len(),
        });
    }
    ensure_finite(other.as_slice(), what)
}

/// `θ - β⁻¹ G h + sqrt(2β⁻¹h) ξ`
pub fn sgld_step(
    theta: &[f64],
    grad: &[f64],
    h: f64,
    beta_inv: f64,
    noise: &[f64],
) -> Result<Vec<f64>> {
    if grad.len() != theta.len() || noise.len() != theta.len() {
        return Err(Error::DimensionMismatch {
            expected: theta.len(),
            got: grad.len().min(noise.len()),
        });
    }
    if !(h > 0.0 && beta_inv > 0.0) {
        return Err(Error::InvalidArgument("h and beta_inv must be > 0".into()));
    }
    ensure_finite(theta, "theta")?;
    ensure_finite(grad, "gradient")?;
    ensure_finite(noise, "noise")?;
    let mut out = vec![0.0; theta.len()];
    langevin(theta, grad, h, beta_inv, noise, &mut out);
    Ok(out)
}

/// One SVGD update from the snapshot `particles`; `scores` are `∇ log p`
/// estimates per particle.
pub fn svgd_step(
    particles: &Matrix,
    scores: &Matrix,
    kernel: &KernelConfig,
    h: f64,
) -> Result<Matrix> {
    ensure_finite(particles.as_slice(), "particles")?;
    check_batch(particles, scores, "scores")?;
    let (m, d) = (particles.rows(), particles.cols());
    let mut out = particles.clone();
    if kernel.zero_kernel {
        return Ok(out);
    }
    let w = h / m as f64;
    out.as_mut_slice()
        .par_chunks_mut(d)
        .enumerate()
        .for_each(|(i, row)| {
            let ti = particles.row(i);
            let mut acc = vec![0.0; d];
            let mut grad = vec![0.0; d];
            for q in 0..m {
                let k = kernel.eval_with_grad(particles.row(q), ti, &mut grad);
                for ((a, s), g) in acc.iter_mut().zip(scores.row(q)).zip(&grad) {
                    *a += k * s + g;
                }
            }
            for (r, a) in row.iter_mut().zip(&acc) {
                *r += w * a;
            }
        });
    Ok(out)
}

/// One SPOS update from the snapshot `particles`.
pub fn spos_step(
    particles: &Matrix,
    grads: &Matrix,
    kernel: &KernelConfig,
    h: f64,
    beta_inv: f64,
    noise: &Matrix,
) -> Result<Matrix> {
    if !(h > 0.0 && beta_inv > 0.0) {
        return Err(Error::InvalidArgument("h and beta_inv must be > 0".into()));
    }
    ensure_finite(particles.as_slice(), "particles")?;
    check_batch(particles, grads, "gradients")?;
    check_batch(particles, noise, "noise")?;
    Ok(spos_unchecked(particles, grads, kernel, h, beta_inv, noise))
}

fn spos_unchecked(
    particles: &Matrix,
    grads: &Matrix,
    kernel: &KernelConfig,
    h: f64,
    beta_inv: f64,
    noise: &Matrix,
) -> Matrix {
    let (m, d) = (particles.rows(), particles.cols());
    let mut out = Matrix::zeros(m, d);
    let w = h / m as f64;
    let scale = (2.0 * beta_inv * h).sqrt();
    out.as_mut_slice()
        .par_chunks_mut(d)
        .enumerate()
        .for_each(|(i, row)| {
            let ti = particles.row(i);
            if kernel.zero_kernel {
                langevin(ti, grads.row(i), h, beta_inv, noise.row(i), row);
                return;
            }
            let mut drift = vec![0.0; d];
            let mut grad = vec![0.0; d];
            for j in 0..m {
                let k = kernel.eval_with_grad(particles.row(j), ti, &mut grad);
                for ((a, gj), r) in drift.iter_mut().zip(grads.row(j)).zip(&grad) {
                    *a += r - k * gj;
                }
            }
            for (((o, t), (gi, n)), a) in row
                .iter_mut()
                .zip(ti)
                .zip(grads.row(i).iter().zip(noise.row(i)))
                .zip(&drift)
            {
                *o = t - h * beta_inv * gi + w * a + scale * n;
            }
        });
    out
}

/// When metric records are taken (step 0 and the final step always are).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MetricSchedule {
    EverySteps(u64),
    /// Whenever cumulative data passes cross a multiple of this value.
    EveryPasses(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub iterations: u64,
    pub schedule: MetricSchedule,
    /// Fill `wall_time_s`; off keeps traces byte-reproducible.
    pub record_wall_time: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<MetricRecord>,
    pub system: ParticleSystem,
    pub eval_count: u64,
    /// Kernel actually used (median heuristic resolved).
    pub kernel: KernelConfig,
}

/// A particle system bound to a model, estimator state and random streams.
pub struct Sampler<'a, P: Potential + ?Sized> {
    model: &'a P,
    config: SamplerConfig,
    system: ParticleSystem,
    estimator: EstimatorState,
    minibatch_rngs: Vec<StreamRng>,
    noise_rngs: Vec<StreamRng>,
    shared_rng: StreamRng,
    epoch_rng: StreamRng,
}

impl<'a, P: Potential + ?Sized> Sampler<'a, P> {
    pub fn new(model: &'a P, config: SamplerConfig, system: ParticleSystem) -> Result<Self> {
        config.validate()?;
        if system.dim() != model.dim() {
            return Err(Error::DimensionMismatch {
                expected: model.dim(),
                got: system.dim(),
            });
        }
        let n = model.num_data();
        if config.estimator.batch_size > n {
            return Err(Error::InvalidArgument(format!(
                "batch size {} exceeds N = {n}",
                config.estimator.batch_size
            )));
        }
        let kernel = config.kernel.resolve(&system.positions)?;
        let config = SamplerConfig { kernel, ..config };
        let estimator = EstimatorState::init(config.estimator, model, &system.positions)?;
        let seed = system.seed;
        let minibatch_rngs = system
            .stream_ids
            .iter()
            .map(|&s| rng::stream(seed, Purpose::Minibatch, s))
            .collect();
        let noise_rngs = system
            .stream_ids
            .iter()
            .map(|&s| rng::stream(seed, Purpose::Noise, s))
            .collect();
        Ok(Self {
            model,
            config,
            system,
            estimator,
            minibatch_rngs,
            noise_rngs,
            shared_rng: rng::stream(seed, Purpose::Minibatch, SHARED_STREAM),
            epoch_rng: rng::stream(seed, Purpose::Epoch, 0),
        })
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    pub fn system(&self) -> &ParticleSystem {
        &self.system
    }

    pub fn positions(&self) -> &Matrix {
        &self.system.positions
    }

    pub fn estimator(&self) -> &EstimatorState {
        &self.estimator
    }

    /// Cumulative gradient evaluations divided by `N·M`.
    pub fn data_passes(&self) -> f64 {
        self.estimator.eval_count() as f64
            / (self.model.num_data() * self.system.num_particles()) as f64
    }

    /// Advances one step. On divergence the system is left at the offending
    /// state and an error is returned.
    pub fn step(&mut self) -> Result<()> {
        let (m, d) = (self.system.num_particles(), self.system.dim());
        let n = self.model.num_data();
        let batch = self.config.estimator.batch_size;
        let draws: Vec<MinibatchDraw> = match self.config.minibatch {
            MinibatchMode::PerParticle => self
                .minibatch_rngs
                .par_iter_mut()
                .map(|r| sample_minibatch(r, n, batch))
                .collect::<Result<_>>()?,
            MinibatchMode::Shared => vec![sample_minibatch(&mut self.shared_rng, n, batch)?; m],
        };
        let positions = &self.system.positions;
        let estimator = &self.estimator;
        let model = self.model;
        let estimates: Vec<Estimate> = draws
            .par_iter()
            .enumerate()
            .map(|(i, draw)| estimator.estimate_unchecked(model, positions.row(i), i, draw))
            .collect();
        let mut grads = Matrix::zeros(m, d);
        for (row, e) in grads.as_mut_slice().chunks_exact_mut(d).zip(&estimates) {
            row.copy_from_slice(&e.gradient);
        }
        let (h, beta_inv) = (self.config.step_size, self.config.beta_inv);
        let mut next = match self.config.dynamics {
            Dynamics::Svgd => {
                let scores = Matrix::from_vec(m, d, grads.as_slice().iter().map(|g| -g).collect());
                svgd_step(positions, &scores, &self.config.kernel, h)?
            }
            dynamics => {
                let mut noise = Matrix::zeros(m, d);
                noise
                    .as_mut_slice()
                    .par_chunks_mut(d)
                    .zip(self.noise_rngs.par_iter_mut())
                    .for_each(|(row, r)| {
                        row.iter_mut().for_each(|v| *v = r.sample(StandardNormal))
                    });
                if dynamics == Dynamics::Sgld {
                    let mut out = Matrix::zeros(m, d);
                    out.as_mut_slice()
                        .par_chunks_mut(d)
                        .enumerate()
                        .for_each(|(i, row)| {
                            langevin(
                                positions.row(i),
                                grads.row(i),
                                h,
                                beta_inv,
                                noise.row(i),
                                row,
                            )
                        });
                    out
                } else {
                    spos_unchecked(positions, &grads, &self.config.kernel, h, beta_inv, &noise)
                }
            }
        };
        let step = self.system.step;
        self.estimator.post_step_update(
            self.model,
            &mut next,
            &estimates,
            step,
            &mut self.epoch_rng,
        )?;
        self.system.positions = next;
        self.system.step += 1;
        let worst = self
            .system
            .positions
            .iter_rows()
            .map(|r| {
                if r.iter().all(|v| v.is_finite()) {
                    norm(r)
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0, f64::max);
        if worst.is_nan() || worst > DIVERGENCE_NORM {
            return Err(Error::Diverged {
                step: self.system.step,
                norm: worst,
                records: Box::default(),
            });
        }
        Ok(())
    }

    pub fn into_system(self) -> ParticleSystem {
        self.system
    }
}

fn record<P: Potential + ?Sized>(
    sampler: &Sampler<'_, P>,
    metrics: &dyn MetricSet,
    names: &[String],
    start: Option<Instant>,
) -> Result<MetricRecord> {
    let values = metrics.evaluate(sampler.positions())?;
    Ok(MetricRecord {
        step: sampler.system.step,
        data_passes: sampler.data_passes(),
        wall_time_s: start.map_or(0.0, |s| s.elapsed().as_secs_f64()),
        values: names.iter().cloned().zip(values).collect(),
    })
}

/// Runs `options.iterations` steps from `system`, recording metrics per the
/// schedule. On divergence the error carries every record taken so far.
pub fn run_from<P: Potential + ?Sized>(
    model: &P,
    config: SamplerConfig,
    system: ParticleSystem,
    options: &RunOptions,
    metrics: &dyn MetricSet,
) -> Result<RunOutput> {
    match options.schedule {
        MetricSchedule::EverySteps(0) => {
            return Err(Error::InvalidArgument(
                "metric interval must be >= 1 step".into(),
            ))
        }
        MetricSchedule::EveryPasses(p) if !(p.is_finite() && p > 0.0) => {
            return Err(Error::InvalidArgument(format!(
                "metric interval must be > 0 passes (got {p})"
            )))
        }
        _ => {}
    }
    let start = options.record_wall_time.then(Instant::now);
    let names = metrics.names();
    let mut sampler = Sampler::new(model, config, system)?;
    let mut records = vec![record(&sampler, metrics, &names, start)?];
    let mut next_mark = match options.schedule {
        MetricSchedule::EveryPasses(p) => ((sampler.data_passes() / p).floor() + 1.0) * p,
        MetricSchedule::EverySteps(_) => 0.0,
    };
    for k in 1..=options.iterations {
        if let Err(err) = sampler.step() {
            return Err(match err {
                Error::Diverged { step, norm, .. } => Error::Diverged {
                    step,
                    norm,
                    records: Box::new(records),
                },
                other => other,
            });
        }
        let due = match options.schedule {
            MetricSchedule::EverySteps(s) => k % s == 0,
            MetricSchedule::EveryPasses(p) => {
                let passes = sampler.data_passes();
                if passes >= next_mark {
                    next_mark = ((passes / p).floor() + 1.0) * p;
                    true
                } else {
                    false
                }
            }
        };
        if due || k == options.iterations {
            records.push(record(&sampler, metrics, &names, start)?);
        }
    }
    let eval_count = sampler.estimator().eval_count();
    let kernel = sampler.config().kernel;
    Ok(RunOutput {
        records,
        system: sampler.into_system(),
        eval_count,
        kernel,
    })
}

/// [`run_from`] with `M` standard-normal initial particles.
pub fn run<P: Potential + ?Sized>(
    model: &P,
    config: SamplerConfig,
    particles: usize,
    options: &RunOptions,
    metrics: &dyn MetricSet,
    seed: u64,
) -> Result<RunOutput> {
    let system = ParticleSystem::standard_normal(seed, particles, model.dim())?;
    run_from(model, config, system, options, metrics)
}
