//! Sum-decomposable potentials `U(θ) = -Σ_j log p(x_j | θ) - log p(θ)`.
//!
//! Every model uses a Gaussian prior `N(0, λ⁻¹ I)` (λ = 0 is a flat prior) and
//! splits the prior gradient evenly across the `N` data terms, so that
//! `F(θ) = Σ_j F_j(θ)` holds exactly.
//!
//! Additive constants: all θ-independent terms are dropped from `U`.
//! * `GaussianMean`:  `U = Σ_j ½‖θ - x_j‖² + ½λ‖θ‖²`
//! * `LogNormalMean`: `U = Σ_j ½‖θ - ln x_j‖² + ½λ‖θ‖²`
//! * `LogisticRegression`: `U = Σ_j [softplus(θᵀx_j) - y_j θᵀx_j] + ½λ‖θ‖²`

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{ensure_finite, Error, Result};
use crate::matrix::{dot, Matrix};
use crate::rng::{self, Purpose};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub features: Matrix,
    /// Binary labels in {0, 1}; present only for classification data.
    pub labels: Option<Vec<u8>>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, features: Matrix, labels: Option<Vec<u8>>) -> Result<Self> {
        if features.rows() == 0 || features.cols() == 0 {
            return Err(Error::InvalidArgument(format!(
                "dataset must have N >= 1 and d >= 1 (got {}x{})",
                features.rows(),
                features.cols()
            )));
        }
        ensure_finite(features.as_slice(), "dataset features")?;
        if let Some(labels) = &labels {
            if labels.len() != features.rows() {
                return Err(Error::DimensionMismatch {
                    expected: features.rows(),
                    got: labels.len(),
                });
            }
            if labels.iter().any(|&y| y > 1) {
                return Err(Error::InvalidArgument("labels must be 0 or 1".into()));
            }
        }
        Ok(Self {
            name: name.into(),
            features,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Rows selected by `indices`, in that order.
    pub fn subset(&self, indices: &[usize], name: impl Into<String>) -> Dataset {
        Dataset {
            name: name.into(),
            features: self.features.select_rows(indices),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    GaussianMean,
    LogNormalMean,
    LogisticRegression,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::GaussianMean => "gaussian",
            ModelKind::LogNormalMean => "lognormal",
            ModelKind::LogisticRegression => "logistic",
        }
    }
}

/// Anything exposing per-datum gradients of a sum-decomposable potential.
///
/// The `_into` methods are the unchecked hot path used by the samplers.
pub trait Potential: Sync {
    fn num_data(&self) -> usize;
    fn dim(&self) -> usize;
    /// Writes `F_j(θ)` into `out`.
    fn grad_component_into(&self, j: usize, theta: &[f64], out: &mut [f64]);
    /// `U(θ)` up to the model's additive constant.
    fn potential_value(&self, theta: &[f64]) -> f64;

    /// Writes `F(θ) = Σ_j F_j(θ)` into `out`.
    fn full_grad_into(&self, theta: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        let mut g = vec![0.0; self.dim()];
        for j in 0..self.num_data() {
            self.grad_component_into(j, theta, &mut g);
            for (o, v) in out.iter_mut().zip(&g) {
                *o += v;
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Model {
    kind: ModelKind,
    dataset: Dataset,
    prior_precision: f64,
    /// Per-datum location: `x_j` (Gaussian), `ln x_j` (log-normal), features (logistic).
    targets: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClosedFormPosterior {
    pub mean: Vec<f64>,
    pub covariance: Matrix,
}

impl Model {
    pub fn new(kind: ModelKind, dataset: Dataset, prior_precision: f64) -> Result<Self> {
        if !(prior_precision.is_finite() && prior_precision >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "prior precision must be finite and >= 0 (got {prior_precision})"
            )));
        }
        let targets = match kind {
            ModelKind::GaussianMean => {
                if dataset.labels.is_some() {
                    return Err(Error::InvalidArgument(
                        "gaussian model takes unlabeled data".into(),
                    ));
                }
                dataset.features.clone()
            }
            ModelKind::LogNormalMean => {
                if dataset.labels.is_some() {
                    return Err(Error::InvalidArgument(
                        "log-normal model takes unlabeled data".into(),
                    ));
                }
                if dataset.features.as_slice().iter().any(|&v| v <= 0.0) {
                    return Err(Error::InvalidArgument(
                        "log-normal data must be strictly positive".into(),
                    ));
                }
                let logs = dataset.features.as_slice().iter().map(|v| v.ln()).collect();
                Matrix::from_vec(dataset.len(), dataset.dim(), logs)
            }
            ModelKind::LogisticRegression => {
                if dataset.labels.is_none() {
                    return Err(Error::InvalidArgument(
                        "logistic regression needs labels".into(),
                    ));
                }
                dataset.features.clone()
            }
        };
        Ok(Self {
            kind,
            dataset,
            prior_precision,
            targets,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn prior_precision(&self) -> f64 {
        self.prior_precision
    }

    /// `F_j(θ)`, validated.
    pub fn grad_component(&self, j: usize, theta: &[f64]) -> Result<Vec<f64>> {
        self.check_theta(theta)?;
        if j >= self.num_data() {
            return Err(Error::IndexOutOfRange {
                index: j,
                len: self.num_data(),
            });
        }
        let mut out = vec![0.0; self.dim()];
        self.grad_component_into(j, theta, &mut out);
        Ok(out)
    }

    pub fn full_grad(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.check_theta(theta)?;
        let mut out = vec![0.0; self.dim()];
        self.full_grad_into(theta, &mut out);
        Ok(out)
    }

    pub fn potential(&self, theta: &[f64]) -> Result<f64> {
        self.check_theta(theta)?;
        Ok(self.potential_value(theta))
    }

    /// Conjugate posterior for the unit-variance Gaussian likelihoods.
    pub fn closed_form_posterior(&self) -> Result<ClosedFormPosterior> {
        if self.kind == ModelKind::LogisticRegression {
            return Err(Error::Unsupported(
                "closed-form posterior of logistic regression".into(),
            ));
        }
        let precision = self.num_data() as f64 + self.prior_precision;
        let d = self.dim();
        let mut mean = vec![0.0; d];
        for row in self.targets.iter_rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= precision);
        let mut covariance = Matrix::zeros(d, d);
        for a in 0..d {
            covariance[(a, a)] = 1.0 / precision;
        }
        Ok(ClosedFormPosterior { mean, covariance })
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: theta.len(),
            });
        }
        ensure_finite(theta, "theta")
    }
}

impl Potential for Model {
    fn num_data(&self) -> usize {
        self.dataset.len()
    }

    fn dim(&self) -> usize {
        self.dataset.dim()
    }

    fn grad_component_into(&self, j: usize, theta: &[f64], out: &mut [f64]) {
        let shrink = self.prior_precision / self.num_data() as f64;
        let x = self.targets.row(j);
        match self.kind {
            ModelKind::GaussianMean | ModelKind::LogNormalMean => {
                for ((o, t), xi) in out.iter_mut().zip(theta).zip(x) {
                    *o = (t - xi) + shrink * t;
                }
            }
            ModelKind::LogisticRegression => {
                let y = f64::from(self.dataset.labels.as_ref().expect("validated")[j]);
                let residual = y - sigmoid(dot(theta, x));
                for ((o, t), xi) in out.iter_mut().zip(theta).zip(x) {
                    *o = -residual * xi + shrink * t;
                }
            }
        }
    }

    fn potential_value(&self, theta: &[f64]) -> f64 {
        let prior = 0.5 * self.prior_precision * dot(theta, theta);
        let likelihood: f64 = match self.kind {
            ModelKind::GaussianMean | ModelKind::LogNormalMean => self
                .targets
                .iter_rows()
                .map(|x| {
                    0.5 * theta
                        .iter()
                        .zip(x)
                        .map(|(t, v)| (t - v) * (t - v))
                        .sum::<f64>()
                })
                .sum(),
            ModelKind::LogisticRegression => {
                let labels = self.dataset.labels.as_ref().expect("validated");
                self.targets
                    .iter_rows()
                    .zip(labels)
                    .map(|(x, &y)| {
                        let z = dot(theta, x);
                        softplus(z) - f64::from(y) * z
                    })
                    .sum()
            }
        };
        likelihood + prior
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Posterior-predictive probabilities `p_i = (1/M) Σ_m σ(α_mᵀ x_i)`.
pub fn blr_predict(samples: &Matrix, x_test: &Matrix) -> Result<Vec<f64>> {
    if samples.rows() == 0 {
        return Err(Error::InvalidArgument(
            "need at least one coefficient sample".into(),
        ));
    }
    if samples.cols() != x_test.cols() {
        return Err(Error::DimensionMismatch {
            expected: samples.cols(),
            got: x_test.cols(),
        });
    }
    let m = samples.rows() as f64;
    Ok(x_test
        .iter_rows()
        .map(|x| samples.iter_rows().map(|a| sigmoid(dot(a, x))).sum::<f64>() / m)
        .collect())
}

/// Draws `x = exp(μ + z)`, `z ~ N(0, I)`, from the seeded data stream.
pub fn make_lognormal_data(mu: &[f64], n: usize, seed: u64) -> Result<Dataset> {
    let gauss = make_gaussian_data(mu, n, seed)?;
    let data = gauss.features.as_slice().iter().map(|v| v.exp()).collect();
    Dataset::new(
        "lognormal-synthetic",
        Matrix::from_vec(n, mu.len(), data),
        None,
    )
}

/// Draws `x = μ + z`, `z ~ N(0, I)`, from the seeded data stream.
pub fn make_gaussian_data(mu: &[f64], n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 || mu.is_empty() {
        return Err(Error::InvalidArgument("need N >= 1 and d >= 1".into()));
    }
    ensure_finite(mu, "mu")?;
    let mut rng = rng::stream(seed, Purpose::Data, 0);
    let mut data = Vec::with_capacity(n * mu.len());
    for _ in 0..n {
        for m in mu {
            let z: f64 = rng.sample(StandardNormal);
            data.push(m + z);
        }
    }
    Dataset::new(
        "gaussian-synthetic",
        Matrix::from_vec(n, mu.len(), data),
        None,
    )
}

/// Standard-normal features with labels drawn from `Bernoulli(σ(wᵀx))`.
pub fn make_logistic_data(weights: &[f64], n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 || weights.is_empty() {
        return Err(Error::InvalidArgument("need N >= 1 and d >= 1".into()));
    }
    let mut rng = rng::stream(seed, Purpose::Data, 1);
    let d = weights.len();
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let p = sigmoid(dot(weights, &row));
        labels.push(u8::from(rng.random::<f64>() < p));
        data.extend(row);
    }
    Dataset::new(
        "logistic-synthetic",
        Matrix::from_vec(n, d, data),
        Some(labels),
    )
}
