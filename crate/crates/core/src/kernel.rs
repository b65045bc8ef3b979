//! RBF kernel `K(u) = exp(-‖u‖² / 2η²)` and bandwidth selection.

use crate::error::{Error, Result};
use crate::matrix::{squared_distance, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandwidthMode {
    Fixed,
    /// Resolved once from the initial particles (see [`median_bandwidth`]).
    MedianHeuristic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConfig {
    pub bandwidth: f64,
    pub mode: BandwidthMode,
    /// Forces `K ≡ 0` and `∇K ≡ 0`, which turns SPOS into independent SGLD chains.
    pub zero_kernel: bool,
}

impl KernelConfig {
    pub fn fixed(bandwidth: f64) -> Self {
        Self {
            bandwidth,
            mode: BandwidthMode::Fixed,
            zero_kernel: false,
        }
    }

    pub fn median() -> Self {
        Self {
            bandwidth: 1.0,
            mode: BandwidthMode::MedianHeuristic,
            zero_kernel: false,
        }
    }

    pub fn zero() -> Self {
        Self {
            bandwidth: 1.0,
            mode: BandwidthMode::Fixed,
            zero_kernel: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.zero_kernel
            && self.mode == BandwidthMode::Fixed
            && !(self.bandwidth.is_finite() && self.bandwidth > 0.0)
        {
            return Err(Error::InvalidArgument(format!(
                "kernel bandwidth must be positive (got {})",
                self.bandwidth
            )));
        }
        Ok(())
    }

    /// Fixes the bandwidth for a run. The median heuristic needs two or more
    /// particles; with a single particle the interaction terms do not depend
    /// on η, so the configured value is kept.
    pub fn resolve(&self, positions: &Matrix) -> Result<KernelConfig> {
        self.validate()?;
        match self.mode {
            BandwidthMode::MedianHeuristic if !self.zero_kernel && positions.rows() >= 2 => {
                Ok(KernelConfig {
                    bandwidth: median_bandwidth(positions)?,
                    mode: BandwidthMode::Fixed,
                    ..*self
                })
            }
            _ => Ok(KernelConfig {
                mode: BandwidthMode::Fixed,
                ..*self
            }),
        }
    }

    #[inline]
    fn of_squared_norm(&self, sq: f64) -> f64 {
        if self.zero_kernel {
            0.0
        } else {
            (-sq / (2.0 * self.bandwidth * self.bandwidth)).exp()
        }
    }

    /// Writes `K(a - b)` and `∇K(a - b)` in one pass.
    pub(crate) fn eval_with_grad(&self, a: &[f64], b: &[f64], grad: &mut [f64]) -> f64 {
        if self.zero_kernel {
            grad.fill(0.0);
            return 0.0;
        }
        let k = self.of_squared_norm(squared_distance(a, b));
        let scale = -k / (self.bandwidth * self.bandwidth);
        for ((g, x), y) in grad.iter_mut().zip(a).zip(b) {
            *g = scale * (x - y);
        }
        k
    }
}

pub fn kernel_eval(cfg: &KernelConfig, u: &[f64]) -> f64 {
    cfg.of_squared_norm(u.iter().map(|v| v * v).sum())
}

/// `∇K(u) = -(u / η²) K(u)`.
pub fn kernel_grad(cfg: &KernelConfig, u: &[f64]) -> Vec<f64> {
    if cfg.zero_kernel {
        return vec![0.0; u.len()];
    }
    let k = kernel_eval(cfg, u);
    let scale = -k / (cfg.bandwidth * cfg.bandwidth);
    u.iter().map(|v| scale * v).collect()
}

/// `η = sqrt(med / (2 ln(M + 1)))` where `med` is the median pairwise squared
/// distance (mean of the two middle values for an even count), floored at 1e-6.
pub fn median_bandwidth(positions: &Matrix) -> Result<f64> {
    let m = positions.rows();
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "median bandwidth needs at least 2 particles (got {m})"
        )));
    }
    let mut sq = Vec::with_capacity(m * (m - 1) / 2);
    for i in 0..m {
        for j in i + 1..m {
            sq.push(squared_distance(positions.row(i), positions.row(j)));
        }
    }
    sq.sort_by(f64::total_cmp);
    let mid = sq.len() / 2;
    let median = if sq.len() % 2 == 1 {
        sq[mid]
    } else {
        0.5 * (sq[mid - 1] + sq[mid])
    };
    let eta = (median / (2.0 * ((m + 1) as f64).ln())).sqrt();
    Ok(eta.max(1e-6))
}
