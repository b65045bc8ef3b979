//! Self-checks used by the `check` command: gradient finite differences,
//! exact unbiasedness of the estimators by enumeration, and the SGLD
//! reduction of SPOS.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::estimator::{EstimatorConfig, EstimatorKind, EstimatorState, MinibatchDraw};
use crate::kernel::KernelConfig;
use crate::matrix::Matrix;
use crate::model::Potential;
use crate::rng::StreamRng;
use crate::sampler::{Dynamics, ParticleSystem, Sampler, SamplerConfig};

/// Largest relative error `‖fd - g‖ / ‖g‖` of central differences of the
/// potential against `full_grad` over the rows of `points`.
pub fn fd_gradient_check<P: Potential + ?Sized>(model: &P, points: &Matrix, eps: f64) -> f64 {
    let d = model.dim();
    let mut worst: f64 = 0.0;
    let mut g = vec![0.0; d];
    for theta in points.iter_rows() {
        model.full_grad_into(theta, &mut g);
        let mut diff = 0.0;
        let mut probe = theta.to_vec();
        for i in 0..d {
            probe[i] = theta[i] + eps;
            let up = model.potential_value(&probe);
            probe[i] = theta[i] - eps;
            let dn = model.potential_value(&probe);
            probe[i] = theta[i];
            let fd = (up - dn) / (2.0 * eps);
            diff += (fd - g[i]).powi(2);
        }
        let scale = g.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
        worst = worst.max(diff.sqrt() / scale);
    }
    worst
}

/// Every ordered tuple in `{0..n}^len`, in lexicographic order.
pub fn all_tuples(n: usize, len: usize) -> impl Iterator<Item = Vec<usize>> {
    let total = n.pow(len as u32);
    (0..total).map(move |mut code| {
        let mut t = vec![0; len];
        for slot in t.iter_mut().rev() {
            *slot = code % n;
            code /= n;
        }
        t
    })
}

/// Max-abs deviation between `full_grad(θ)` and the exact average of the
/// estimator over all `N^B` ordered minibatches, with randomized estimator
/// memory. For SVRG+ the anchor batch (`b = B`) is enumerated as well.
pub fn enumeration_check<P: Potential + ?Sized>(
    model: &P,
    kind: EstimatorKind,
    batch: usize,
    theta: &[f64],
    rng: &mut StreamRng,
) -> Result<f64> {
    let (n, d) = (model.num_data(), model.dim());
    if n.checked_pow(2 * batch as u32).is_none_or(|c| c > 1 << 24) {
        return Err(Error::InvalidArgument(format!(
            "N^B too large to enumerate (N = {n}, B = {batch})"
        )));
    }
    let mut random = |len: usize| -> Vec<f64> {
        (0..len)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect()
    };
    let start = Matrix::from_vec(1, d, random(d));
    let config = EstimatorConfig::new(kind, batch)
        .with_epoch(1)
        .with_anchor_batch(batch);
    let mut state = EstimatorState::init(config, model, &start)?;
    let mut full = vec![0.0; d];
    model.full_grad_into(theta, &mut full);

    let average = |state: &EstimatorState| -> Result<Vec<f64>> {
        let mut acc = vec![0.0; d];
        let mut count = 0.0;
        for t in all_tuples(n, batch) {
            let g = state
                .estimate(model, theta, 0, &MinibatchDraw { indices: t })?
                .gradient;
            for (a, v) in acc.iter_mut().zip(&g) {
                *a += v;
            }
            count += 1.0;
        }
        Ok(acc.into_iter().map(|a| a / count).collect())
    };

    let mean = match kind {
        EstimatorKind::Plain => average(&state)?,
        EstimatorKind::Saga => {
            for j in 0..n {
                state.set_saga_entry(0, j, &random(d))?;
            }
            average(&state)?
        }
        EstimatorKind::SvrgI | EstimatorKind::SvrgII => {
            let anchor = random(d);
            let mut grad = vec![0.0; d];
            model.full_grad_into(&anchor, &mut grad);
            state.set_anchor(0, &anchor, &grad)?;
            average(&state)?
        }
        EstimatorKind::SvrgPlus => {
            let anchor = random(d);
            let mut outer = vec![0.0; d];
            let mut count = 0.0;
            let mut grad = vec![0.0; d];
            for j_batch in all_tuples(n, batch) {
                crate::estimator::subsampled_grad_into(
                    model,
                    &anchor,
                    &MinibatchDraw { indices: j_batch },
                    &mut grad,
                );
                state.set_anchor(0, &anchor, &grad)?;
                for (o, v) in outer.iter_mut().zip(average(&state)?) {
                    *o += v;
                }
                count += 1.0;
            }
            outer.into_iter().map(|o| o / count).collect()
        }
    };
    Ok(mean
        .iter()
        .zip(&full)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReductionReport {
    pub steps: u64,
    /// Coordinates whose bits differ at any step.
    pub mismatches: usize,
    pub max_abs_diff: f64,
}

/// Runs SPOS with a zero kernel on `m` particles next to `m` separate
/// single-particle SGLD runs that use the same streams, comparing positions
/// bit by bit after every step.
pub fn sgld_reduction_check<P: Potential + ?Sized>(
    model: &P,
    estimator: EstimatorConfig,
    step_size: f64,
    beta_inv: f64,
    m: usize,
    steps: u64,
    seed: u64,
) -> Result<ReductionReport> {
    let spos_cfg = SamplerConfig::new(
        Dynamics::Spos,
        step_size,
        beta_inv,
        KernelConfig::zero(),
        estimator,
    );
    let sgld_cfg = SamplerConfig {
        dynamics: Dynamics::Sgld,
        ..spos_cfg
    };
    let init = ParticleSystem::standard_normal(seed, m, model.dim())?;
    let mut joint = Sampler::new(model, spos_cfg, init.clone())?;
    let mut chains = (0..m)
        .map(|i| {
            let single = ParticleSystem::with_streams(
                init.positions.select_rows(&[i]),
                seed,
                vec![i as u64],
            )?;
            Sampler::new(model, sgld_cfg, single)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut report = ReductionReport {
        steps,
        mismatches: 0,
        max_abs_diff: 0.0,
    };
    for _ in 0..steps {
        joint.step()?;
        for (i, chain) in chains.iter_mut().enumerate() {
            chain.step()?;
            for (a, b) in joint
                .positions()
                .row(i)
                .iter()
                .zip(chain.positions().row(0))
            {
                if a.to_bits() != b.to_bits() {
                    report.mismatches += 1;
                    report.max_abs_diff = report.max_abs_diff.max((a - b).abs());
                }
            }
        }
    }
    Ok(report)
}
