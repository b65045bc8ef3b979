//! Quality measurements recorded along a run.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::model::{blr_predict, ClosedFormPosterior, Dataset};
use crate::wasserstein::w2_gaussian;

/// Lower clamp applied to the mean squared error before taking the log.
pub const LOG_MSE_FLOOR: f64 = 1e-300;

/// One row of a run trace.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord {
    pub step: u64,
    pub data_passes: f64,
    pub wall_time_s: f64,
    /// Metric values in the order reported by the [`MetricSet`].
    pub values: Vec<(String, f64)>,
}

impl MetricRecord {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }
}

/// `ln((1/d) Σ (mean_i - reference_i)²)`, clamped below at `ln(1e-300)`.
pub fn log_mse_mean(particle_mean: &[f64], reference: &[f64]) -> Result<f64> {
    if particle_mean.len() != reference.len() {
        return Err(Error::DimensionMismatch {
            expected: reference.len(),
            got: particle_mean.len(),
        });
    }
    if reference.is_empty() {
        return Err(Error::InvalidArgument("log-MSE of an empty vector".into()));
    }
    let mse = particle_mean
        .iter()
        .zip(reference)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / reference.len() as f64;
    Ok(mse.max(LOG_MSE_FLOOR).ln())
}

/// Test accuracy and average log-likelihood of the posterior predictive.
/// A predictive probability of exactly 0.5 predicts class 1.
pub fn blr_test_metrics(samples: &Matrix, test: &Dataset) -> Result<(f64, f64)> {
    let labels = test
        .labels
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument(format!("test set '{}' has no labels", test.name)))?;
    if labels.is_empty() {
        return Err(Error::InvalidArgument("empty test set".into()));
    }
    let probs = blr_predict(samples, &test.features)?;
    let mut correct = 0usize;
    let mut loglik = 0.0;
    for (&p, &y) in probs.iter().zip(labels) {
        let predicted = u8::from(p >= 0.5);
        correct += usize::from(predicted == y);
        loglik += if y == 1 { p.ln() } else { (1.0 - p).ln() };
    }
    let n = labels.len() as f64;
    Ok((correct as f64 / n, loglik / n))
}

/// A named family of scalar metrics evaluated on the particle positions.
pub trait MetricSet: Sync {
    fn names(&self) -> Vec<String>;
    fn evaluate(&self, positions: &Matrix) -> Result<Vec<f64>>;
}

/// `log_mse` of the particle mean against a fixed reference.
#[derive(Debug, Clone)]
pub struct LogMse {
    pub reference: Vec<f64>,
}

impl MetricSet for LogMse {
    fn names(&self) -> Vec<String> {
        vec!["log_mse".into()]
    }

    fn evaluate(&self, positions: &Matrix) -> Result<Vec<f64>> {
        Ok(vec![log_mse_mean(
            &positions.column_mean(),
            &self.reference,
        )?])
    }
}

/// `test_accuracy` and `test_loglik` on a held-out set.
#[derive(Debug, Clone)]
pub struct BlrTest {
    pub test: Dataset,
}

impl MetricSet for BlrTest {
    fn names(&self) -> Vec<String> {
        vec!["test_accuracy".into(), "test_loglik".into()]
    }

    fn evaluate(&self, positions: &Matrix) -> Result<Vec<f64>> {
        let (acc, ll) = blr_test_metrics(positions, &self.test)?;
        Ok(vec![acc, ll])
    }
}

/// `w2_gaussian` between the particles' moment-matched Gaussian and a
/// closed-form posterior.
#[derive(Debug, Clone)]
pub struct GaussianW2 {
    pub posterior: ClosedFormPosterior,
}

impl MetricSet for GaussianW2 {
    fn names(&self) -> Vec<String> {
        vec!["w2_gaussian".into()]
    }

    fn evaluate(&self, positions: &Matrix) -> Result<Vec<f64>> {
        let w2 = w2_gaussian(
            &positions.column_mean(),
            &positions.covariance(),
            &self.posterior.mean,
            &self.posterior.covariance,
        )?;
        Ok(vec![w2])
    }
}

/// Concatenation of several metric sets.
#[derive(Default)]
pub struct MetricSuite {
    sets: Vec<Box<dyn MetricSet>>,
}

impl MetricSuite {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, set: impl MetricSet + 'static) -> Self {
        self.sets.push(Box::new(set));
        self
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }
}

impl MetricSet for MetricSuite {
    fn names(&self) -> Vec<String> {
        self.sets.iter().flat_map(|s| s.names()).collect()
    }

    fn evaluate(&self, positions: &Matrix) -> Result<Vec<f64>> {
        let mut out = Vec::new();
        for set in &self.sets {
            out.extend(set.evaluate(positions)?);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::LN_2;

    #[test]
    fn log_mse_examples() {
        assert_eq!(
            log_mse_mean(&[1.0, 2.0], &[1.0, 2.0]).unwrap(),
            LOG_MSE_FLOOR.ln()
        );
        assert_eq!(log_mse_mean(&[1.0, 1.0], &[0.0, 0.0]).unwrap(), 0.0);
        let a = log_mse_mean(&[0.3, -0.2, 0.1], &[0.0; 3]).unwrap();
        let b = log_mse_mean(&[3.0, -2.0, 1.0], &[0.0; 3]).unwrap();
        assert_relative_eq!(b - a, 2.0 * 10f64.ln(), epsilon = 1e-12);
        assert!(log_mse_mean(&[1.0], &[1.0, 2.0]).is_err());
    }

    fn labeled(rows: &[&[f64]], labels: &[u8]) -> Dataset {
        Dataset::new("t", Matrix::from_rows(rows), Some(labels.to_vec())).unwrap()
    }

    #[test]
    fn blr_examples() {
        let test = labeled(&[&[1.0, 0.0], &[0.0, 1.0], &[-1.0, 2.0]], &[1, 0, 1]);
        let (acc, ll) = blr_test_metrics(&Matrix::zeros(4, 2), &test).unwrap();
        assert_relative_eq!(acc, 2.0 / 3.0);
        assert_relative_eq!(ll, -LN_2, epsilon = 1e-15);

        let sep = labeled(&[&[1.0], &[-1.0], &[2.0]], &[1, 0, 1]);
        let (acc, ll) = blr_test_metrics(&Matrix::from_rows(&[[40.0]]), &sep).unwrap();
        assert_eq!(acc, 1.0);
        assert!(ll <= 0.0 && ll > -1e-15);

        // σ(ln 4) = 0.8
        let one = labeled(&[&[1.0]], &[1]);
        let (_, ll) = blr_test_metrics(&Matrix::from_rows(&[[4f64.ln()]]), &one).unwrap();
        assert_relative_eq!(ll, 0.8f64.ln(), epsilon = 1e-12);
        assert_relative_eq!(ll, -0.2231, epsilon = 1e-4);
    }

    #[test]
    fn blr_requires_labels() {
        let unlabeled = Dataset::new("t", Matrix::from_rows(&[[1.0]]), None).unwrap();
        assert!(blr_test_metrics(&Matrix::zeros(1, 1), &unlabeled).is_err());
    }

    #[test]
    fn suite_concatenates_in_order() {
        let suite = MetricSuite::new()
            .with(LogMse {
                reference: vec![0.0, 0.0],
            })
            .with(BlrTest {
                test: labeled(&[&[1.0, 0.0]], &[1]),
            });
        assert_eq!(
            suite.names(),
            vec!["log_mse", "test_accuracy", "test_loglik"]
        );
        let v = suite
            .evaluate(&Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]))
            .unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(v[0], 0.0);
    }
}
