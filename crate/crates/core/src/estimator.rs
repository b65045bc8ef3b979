//! Per-particle stochastic gradient estimators.
//!
//! * `Plain`:    `G = (N/B) Σ_{j∈I} F_j(θ)`
//! * `Saga`:     `G = Σ_j g_j + (N/B) Σ_{j∈I} (F_j(θ) - g_j)` with a per-particle
//!   table `g` refreshed at the drawn indices after every step.
//! * `SvrgI`, `SvrgII`, `SvrgPlus`: `G = G̃ + (N/B) Σ_{j∈I} (F_j(θ) - F_j(θ̃))`
//!   with an anchor `(θ̃, G̃)` refreshed every `τ` steps.
//!
//! Draws are with replacement; a duplicated index counts with multiplicity in
//! every sum.
//!
//! `estimate` takes `&self` and may run concurrently across particles. All
//! state changes happen in `post_step_update`, once per step, after every
//! particle's estimate for that step is computed.
//!
//! Initialization cost: `M·N` gradient evaluations for every kind except
//! `Plain` (SVRG+ also starts from the full gradient).

use std::collections::VecDeque;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::Potential;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimatorKind {
    Plain,
    Saga,
    /// SVRG with a randomly lagged snapshot and a position reset at each epoch.
    SvrgI,
    /// SVRG anchored at the current position.
    SvrgII,
    /// SVRG with a subsampled anchor gradient of size `b`.
    SvrgPlus,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 5] = [
        EstimatorKind::Plain,
        EstimatorKind::Saga,
        EstimatorKind::SvrgI,
        EstimatorKind::SvrgII,
        EstimatorKind::SvrgPlus,
    ];

    pub fn is_svrg(self) -> bool {
        matches!(
            self,
            EstimatorKind::SvrgI | EstimatorKind::SvrgII | EstimatorKind::SvrgPlus
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConfig {
    pub kind: EstimatorKind,
    /// Minibatch size `B`.
    pub batch_size: usize,
    /// Epoch length `τ` (SVRG kinds).
    pub epoch_length: usize,
    /// Anchor batch size `b` (SVRG+).
    pub anchor_batch: usize,
}

impl EstimatorConfig {
    pub fn new(kind: EstimatorKind, batch_size: usize) -> Self {
        Self {
            kind,
            batch_size,
            epoch_length: 100,
            anchor_batch: 100,
        }
    }

    pub fn with_epoch(mut self, epoch_length: usize) -> Self {
        self.epoch_length = epoch_length;
        self
    }

    pub fn with_anchor_batch(mut self, anchor_batch: usize) -> Self {
        self.anchor_batch = anchor_batch;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size B must be >= 1".into()));
        }
        if self.kind.is_svrg() && self.epoch_length == 0 {
            return Err(Error::InvalidArgument(
                "epoch length tau must be >= 1".into(),
            ));
        }
        if self.kind == EstimatorKind::SvrgPlus && self.anchor_batch == 0 {
            return Err(Error::InvalidArgument("anchor batch b must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MinibatchDraw {
    pub indices: Vec<usize>,
}

/// `batch` i.i.d. uniform indices from `0..n`.
pub fn sample_minibatch<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    batch: usize,
) -> Result<MinibatchDraw> {
    if n == 0 || batch == 0 {
        return Err(Error::InvalidArgument(format!(
            "minibatch needs N >= 1 and B >= 1 (got {n}, {batch})"
        )));
    }
    Ok(MinibatchDraw {
        indices: (0..batch).map(|_| rng.random_range(0..n)).collect(),
    })
}

/// One particle's gradient estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub gradient: Vec<f64>,
    indices: Vec<usize>,
    /// `F_j(θ)` per draw slot (SAGA only), reused by the table refresh.
    fresh: Vec<f64>,
}

#[derive(Debug, Clone)]
enum Memory {
    Plain,
    Saga {
        /// `M × N × d`
        table: Vec<f64>,
        /// Running `Σ_j g_j` per particle, `M × d`.
        sums: Vec<f64>,
    },
    Svrg {
        anchor_positions: Matrix,
        anchor_grads: Matrix,
        /// Last `τ` post-step snapshots (Option I only).
        history: Option<VecDeque<Matrix>>,
    },
}

#[derive(Debug)]
pub struct EstimatorState {
    config: EstimatorConfig,
    particles: usize,
    num_data: usize,
    dim: usize,
    memory: Memory,
    eval_counter: AtomicU64,
    last_step: Option<u64>,
}

impl Clone for EstimatorState {
    fn clone(&self) -> Self {
        Self {
            config: self.config,
            particles: self.particles,
            num_data: self.num_data,
            dim: self.dim,
            memory: self.memory.clone(),
            eval_counter: AtomicU64::new(self.eval_count()),
            last_step: self.last_step,
        }
    }
}

impl EstimatorState {
    /// Builds the estimator memory for particles at `positions` (θ₀).
    pub fn init<P: Potential + ?Sized>(
        config: EstimatorConfig,
        model: &P,
        positions: &Matrix,
    ) -> Result<Self> {
        config.validate()?;
        let (m, n, d) = (positions.rows(), model.num_data(), model.dim());
        if positions.cols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: positions.cols(),
            });
        }
        if m == 0 {
            return Err(Error::InvalidArgument("need at least one particle".into()));
        }
        let (memory, init_evals) = match config.kind {
            EstimatorKind::Plain => (Memory::Plain, 0),
            EstimatorKind::Saga => {
                let mut table = vec![0.0; m * n * d];
                let mut sums = vec![0.0; m * d];
                table
                    .par_chunks_mut(n * d)
                    .zip(sums.par_chunks_mut(d))
                    .enumerate()
                    .for_each(|(i, (rows, sum))| {
                        let theta = positions.row(i);
                        for (j, g) in rows.chunks_exact_mut(d).enumerate() {
                            model.grad_component_into(j, theta, g);
                            for (s, v) in sum.iter_mut().zip(g.iter()) {
                                *s += v;
                            }
                        }
                    });
                (Memory::Saga { table, sums }, m * n)
            }
            kind => {
                let anchor_positions = positions.clone();
                let anchor_grads = full_grads(model, &anchor_positions);
                let history = (kind == EstimatorKind::SvrgI)
                    .then(|| VecDeque::with_capacity(config.epoch_length));
                (
                    Memory::Svrg {
                        anchor_positions,
                        anchor_grads,
                        history,
                    },
                    m * n,
                )
            }
        };
        Ok(Self {
            config,
            particles: m,
            num_data: n,
            dim: d,
            memory,
            eval_counter: AtomicU64::new(init_evals as u64),
            last_step: None,
        })
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.config
    }

    pub fn kind(&self) -> EstimatorKind {
        self.config.kind
    }

    /// Cumulative per-datum gradient evaluations, initialization included.
    pub fn eval_count(&self) -> u64 {
        self.eval_counter.load(Ordering::Relaxed)
    }

    /// Number of f64 values held as variance-reduction memory.
    pub fn memory_len(&self) -> usize {
        match &self.memory {
            Memory::Plain => 0,
            Memory::Saga { table, sums } => table.len() + sums.len(),
            Memory::Svrg {
                anchor_positions,
                anchor_grads,
                history,
            } => {
                anchor_positions.as_slice().len()
                    + anchor_grads.as_slice().len()
                    + history.as_ref().map_or(0, |h| {
                        self.config.epoch_length.max(h.len()) * self.particles * self.dim
                    })
            }
        }
    }

    pub fn saga_entry(&self, i: usize, j: usize) -> Option<&[f64]> {
        match &self.memory {
            Memory::Saga { table, .. } => {
                let start = (i * self.num_data + j) * self.dim;
                Some(&table[start..start + self.dim])
            }
            _ => None,
        }
    }

    /// Cached `Σ_j g_j` of particle `i`.
    pub fn saga_sum(&self, i: usize) -> Option<&[f64]> {
        match &self.memory {
            Memory::Saga { sums, .. } => Some(&sums[i * self.dim..(i + 1) * self.dim]),
            _ => None,
        }
    }

    /// Overwrites one SAGA table entry, keeping the running sum consistent.
    pub fn set_saga_entry(&mut self, i: usize, j: usize, value: &[f64]) -> Result<()> {
        let (n, d) = (self.num_data, self.dim);
        self.check_particle(i)?;
        if j >= n {
            return Err(Error::IndexOutOfRange { index: j, len: n });
        }
        if value.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: value.len(),
            });
        }
        match &mut self.memory {
            Memory::Saga { table, sums } => {
                write_entry(
                    &mut table[(i * n + j) * d..(i * n + j + 1) * d],
                    &mut sums[i * d..(i + 1) * d],
                    value,
                );
                Ok(())
            }
            _ => Err(Error::EstimatorState("not a SAGA estimator".into())),
        }
    }

    pub fn anchor(&self, i: usize) -> Option<(&[f64], &[f64])> {
        match &self.memory {
            Memory::Svrg {
                anchor_positions,
                anchor_grads,
                ..
            } => Some((anchor_positions.row(i), anchor_grads.row(i))),
            _ => None,
        }
    }

    /// Sets particle `i`'s anchor to `(position, grad)` verbatim.
    pub fn set_anchor(&mut self, i: usize, position: &[f64], grad: &[f64]) -> Result<()> {
        self.check_particle(i)?;
        for v in [position, grad] {
            if v.len() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    got: v.len(),
                });
            }
        }
        match &mut self.memory {
            Memory::Svrg {
                anchor_positions,
                anchor_grads,
                ..
            } => {
                anchor_positions.row_mut(i).copy_from_slice(position);
                anchor_grads.row_mut(i).copy_from_slice(grad);
                Ok(())
            }
            _ => Err(Error::EstimatorState("not an SVRG estimator".into())),
        }
    }

    /// Gradient estimate `G^{(i)}` at `theta` for the given draw.
    pub fn estimate<P: Potential + ?Sized>(
        &self,
        model: &P,
        theta: &[f64],
        i: usize,
        draw: &MinibatchDraw,
    ) -> Result<Estimate> {
        self.check_particle(i)?;
        if theta.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: theta.len(),
            });
        }
        if draw.indices.len() != self.config.batch_size {
            return Err(Error::InvalidArgument(format!(
                "draw has {} indices, estimator batch size is {}",
                draw.indices.len(),
                self.config.batch_size
            )));
        }
        if let Some(&j) = draw.indices.iter().find(|&&j| j >= self.num_data) {
            return Err(Error::IndexOutOfRange {
                index: j,
                len: self.num_data,
            });
        }
        Ok(self.estimate_unchecked(model, theta, i, draw))
    }

    /// Sampler hot path: inputs are trusted.
    pub(crate) fn estimate_unchecked<P: Potential + ?Sized>(
        &self,
        model: &P,
        theta: &[f64],
        i: usize,
        draw: &MinibatchDraw,
    ) -> Estimate {
        let cost = if self.config.kind.is_svrg() { 2 } else { 1 } * draw.indices.len() as u64;
        self.eval_counter.fetch_add(cost, Ordering::Relaxed);
        self.compute(model, theta, i, draw)
    }

    fn compute<P: Potential + ?Sized>(
        &self,
        model: &P,
        theta: &[f64],
        i: usize,
        draw: &MinibatchDraw,
    ) -> Estimate {
        let d = self.dim;
        let scale = self.num_data as f64 / draw.indices.len() as f64;
        let mut acc = vec![0.0; d];
        let mut g = vec![0.0; d];
        let mut fresh = Vec::new();
        match &self.memory {
            Memory::Plain => {
                for &j in &draw.indices {
                    model.grad_component_into(j, theta, &mut g);
                    add_assign(&mut acc, &g);
                }
                acc.iter_mut().for_each(|a| *a *= scale);
            }
            Memory::Saga { table, sums } => {
                fresh.reserve(draw.indices.len() * d);
                for &j in &draw.indices {
                    model.grad_component_into(j, theta, &mut g);
                    let stale =
                        &table[(i * self.num_data + j) * d..(i * self.num_data + j + 1) * d];
                    for ((a, f), s) in acc.iter_mut().zip(&g).zip(stale) {
                        *a += f - s;
                    }
                    fresh.extend_from_slice(&g);
                }
                let sum = &sums[i * d..(i + 1) * d];
                for (a, s) in acc.iter_mut().zip(sum) {
                    *a = s + scale * *a;
                }
            }
            Memory::Svrg {
                anchor_positions,
                anchor_grads,
                ..
            } => {
                let anchor = anchor_positions.row(i);
                let mut ga = vec![0.0; d];
                for &j in &draw.indices {
                    model.grad_component_into(j, theta, &mut g);
                    model.grad_component_into(j, anchor, &mut ga);
                    for ((a, f), fa) in acc.iter_mut().zip(&g).zip(&ga) {
                        *a += f - fa;
                    }
                }
                for (a, s) in acc.iter_mut().zip(anchor_grads.row(i)) {
                    *a = s + scale * *a;
                }
            }
        }
        Estimate {
            gradient: acc,
            indices: draw.indices.clone(),
            fresh,
        }
    }

    /// Refreshes the estimator memory after step `step` (θ_k → θ_{k+1}).
    ///
    /// `positions` holds θ_{k+1}; SVRG Option I may reset it to the new anchor.
    /// `epoch_rng` is the shared stream for the snapshot lag and the SVRG+
    /// anchor batch.
    pub fn post_step_update<P: Potential + ?Sized, R: Rng + ?Sized>(
        &mut self,
        model: &P,
        positions: &mut Matrix,
        estimates: &[Estimate],
        step: u64,
        epoch_rng: &mut R,
    ) -> Result<()> {
        if self.last_step.is_some_and(|last| step <= last) {
            return Err(Error::EstimatorState(format!(
                "post-step update already applied for step {step}"
            )));
        }
        if positions.rows() != self.particles || positions.cols() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.particles * self.dim,
                got: positions.as_slice().len(),
            });
        }
        let (n, d, tau) = (self.num_data, self.dim, self.config.epoch_length as u64);
        let epoch_end = (step + 1).is_multiple_of(tau.max(1));
        match &mut self.memory {
            Memory::Plain => {}
            Memory::Saga { table, sums } => {
                if estimates.len() != self.particles {
                    return Err(Error::DimensionMismatch {
                        expected: self.particles,
                        got: estimates.len(),
                    });
                }
                table
                    .par_chunks_mut(n * d)
                    .zip(sums.par_chunks_mut(d))
                    .zip(estimates.par_iter())
                    .for_each(|((rows, sum), est)| {
                        for (slot, &j) in est.indices.iter().enumerate() {
                            if est.indices[..slot].contains(&j) {
                                continue;
                            }
                            write_entry(
                                &mut rows[j * d..(j + 1) * d],
                                sum,
                                &est.fresh[slot * d..(slot + 1) * d],
                            );
                        }
                    });
            }
            Memory::Svrg {
                anchor_positions,
                anchor_grads,
                history,
            } => {
                if let Some(history) = history.as_mut() {
                    if history.len() == self.config.epoch_length {
                        history.pop_front();
                    }
                    history.push_back(positions.clone());
                }
                if epoch_end {
                    match self.config.kind {
                        EstimatorKind::SvrgI => {
                            let history = history.as_mut().expect("option I keeps history");
                            let lag = epoch_rng.random_range(0..self.config.epoch_length);
                            if lag >= history.len() {
                                return Err(Error::EstimatorState(format!(
                                    "snapshot lag {lag} exceeds stored history of {} steps",
                                    history.len()
                                )));
                            }
                            let snapshot = history[history.len() - 1 - lag].clone();
                            history.clear();
                            *positions = snapshot.clone();
                            *anchor_grads = full_grads(model, &snapshot);
                            *anchor_positions = snapshot;
                            self.eval_counter
                                .fetch_add((self.particles * n) as u64, Ordering::Relaxed);
                        }
                        EstimatorKind::SvrgII => {
                            *anchor_positions = positions.clone();
                            *anchor_grads = full_grads(model, anchor_positions);
                            self.eval_counter
                                .fetch_add((self.particles * n) as u64, Ordering::Relaxed);
                        }
                        EstimatorKind::SvrgPlus => {
                            let batch = sample_minibatch(epoch_rng, n, self.config.anchor_batch)?;
                            *anchor_positions = positions.clone();
                            anchor_grads
                                .as_mut_slice()
                                .par_chunks_mut(d)
                                .enumerate()
                                .for_each(|(i, out)| {
                                    subsampled_grad_into(
                                        model,
                                        anchor_positions.row(i),
                                        &batch,
                                        out,
                                    )
                                });
                            self.eval_counter.fetch_add(
                                (self.particles * self.config.anchor_batch) as u64,
                                Ordering::Relaxed,
                            );
                        }
                        _ => unreachable!("plain and saga hold no anchors"),
                    }
                }
            }
        }
        self.last_step = Some(step);
        Ok(())
    }

    /// Sample trace-variance of particle `i`'s estimate over `trials`
    /// independent draws, with the state held fixed (the evaluation counter
    /// is not touched).
    pub fn estimator_variance<P: Potential + ?Sized, R: Rng + ?Sized>(
        &self,
        model: &P,
        theta: &[f64],
        i: usize,
        trials: usize,
        rng: &mut R,
    ) -> Result<f64> {
        if trials < 2 {
            return Err(Error::InvalidArgument(
                "estimator variance needs at least 2 trials".into(),
            ));
        }
        self.check_particle(i)?;
        if theta.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: theta.len(),
            });
        }
        let d = self.dim;
        let mut mean = vec![0.0; d];
        let mut m2 = vec![0.0; d];
        for t in 0..trials {
            let draw = sample_minibatch(rng, self.num_data, self.config.batch_size)?;
            let g = self.compute(model, theta, i, &draw).gradient;
            // Welford
            let count = (t + 1) as f64;
            for ((mu, s), x) in mean.iter_mut().zip(m2.iter_mut()).zip(&g) {
                let delta = x - *mu;
                *mu += delta / count;
                *s += delta * (x - *mu);
            }
        }
        Ok(m2.iter().sum::<f64>() / (trials - 1) as f64)
    }

    fn check_particle(&self, i: usize) -> Result<()> {
        if i >= self.particles {
            Err(Error::IndexOutOfRange {
                index: i,
                len: self.particles,
            })
        } else {
            Ok(())
        }
    }
}

/// `(N/b) Σ_{j∈batch} F_j(θ)`
pub fn subsampled_grad_into<P: Potential + ?Sized>(
    model: &P,
    theta: &[f64],
    batch: &MinibatchDraw,
    out: &mut [f64],
) {
    out.fill(0.0);
    let mut g = vec![0.0; out.len()];
    for &j in &batch.indices {
        model.grad_component_into(j, theta, &mut g);
        add_assign(out, &g);
    }
    let scale = model.num_data() as f64 / batch.indices.len() as f64;
    out.iter_mut().for_each(|o| *o *= scale);
}

fn full_grads<P: Potential + ?Sized>(model: &P, positions: &Matrix) -> Matrix {
    let d = positions.cols();
    let mut out = Matrix::zeros(positions.rows(), d);
    out.as_mut_slice()
        .par_chunks_mut(d)
        .enumerate()
        .for_each(|(i, g)| model.full_grad_into(positions.row(i), g));
    out
}

fn write_entry(entry: &mut [f64], sum: &mut [f64], value: &[f64]) {
    for ((e, s), v) in entry.iter_mut().zip(sum.iter_mut()).zip(value) {
        *s += v - *e;
        *e = *v;
    }
}

fn add_assign(acc: &mut [f64], v: &[f64]) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += b;
    }
}
