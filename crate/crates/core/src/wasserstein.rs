//! 2-Wasserstein distances: exact between equal-size empirical samples, and
//! closed form between Gaussians.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{ensure_finite, Error, Result};
use crate::matrix::{squared_distance, Matrix};

/// Largest sample size accepted by the assignment solver.
pub const MAX_ASSIGNMENT_SIZE: usize = 512;

/// Minimum-cost perfect matching on a square cost matrix (Hungarian method
/// with potentials, O(n³)). Returns `assignment[row] = column`.
pub fn assignment(cost: &Matrix) -> Vec<usize> {
    let n = cost.rows();
    assert_eq!(n, cost.cols(), "assignment needs a square cost matrix");
    if n == 0 {
        return Vec::new();
    }
    // 1-based with a virtual column 0.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0; n];
    for j in 1..=n {
        out[p[j] - 1] = j - 1;
    }
    out
}

fn check_samples(a: &Matrix, b: &Matrix) -> Result<()> {
    if a.rows() != b.rows() {
        return Err(Error::InvalidArgument(format!(
            "sample counts differ ({} vs {})",
            a.rows(),
            b.rows()
        )));
    }
    if a.cols() != b.cols() {
        return Err(Error::DimensionMismatch {
            expected: a.cols(),
            got: b.cols(),
        });
    }
    if a.rows() == 0 {
        return Err(Error::InvalidArgument("empty samples".into()));
    }
    ensure_finite(a.as_slice(), "samples")?;
    ensure_finite(b.as_slice(), "samples")
}

/// Exact W2 via optimal assignment on squared distances, any dimension.
pub fn w2_assignment(a: &Matrix, b: &Matrix) -> Result<f64> {
    check_samples(a, b)?;
    let n = a.rows();
    if n > MAX_ASSIGNMENT_SIZE {
        return Err(Error::InvalidArgument(format!(
            "{n} samples exceed the assignment cap of {MAX_ASSIGNMENT_SIZE}; subsample or use the 1-D path"
        )));
    }
    let mut cost = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            cost[(i, j)] = squared_distance(a.row(i), b.row(j));
        }
    }
    let total: f64 = assignment(&cost)
        .iter()
        .enumerate()
        .map(|(i, &j)| cost[(i, j)])
        .sum();
    Ok((total / n as f64).sqrt())
}

/// Exact 1-D W2 by matching sorted samples. No size cap.
pub fn w2_sorted_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "sample counts differ ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::InvalidArgument("empty samples".into()));
    }
    ensure_finite(a, "samples")?;
    ensure_finite(b, "samples")?;
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let total: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((total / a.len() as f64).sqrt())
}

/// Exact W2 between two equal-size empirical distributions. One-dimensional
/// samples take the sorting path; otherwise the assignment path (n ≤ 512).
pub fn w2_empirical(a: &Matrix, b: &Matrix) -> Result<f64> {
    check_samples(a, b)?;
    if a.cols() == 1 {
        w2_sorted_1d(a.as_slice(), b.as_slice())
    } else {
        w2_assignment(a, b)
    }
}

fn to_dmatrix(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

/// Symmetric PSD square root; rejects asymmetric or indefinite input.
fn psd_sqrt(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let scale = m.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1.0);
    if (m - m.transpose()).iter().any(|v| v.abs() > 1e-9 * scale) {
        return Err(Error::InvalidArgument(format!("{what} is not symmetric")));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    if let Some(min) = eig.eigenvalues.iter().copied().reduce(f64::min) {
        if min < -1e-9 * scale {
            return Err(Error::InvalidArgument(format!(
                "{what} is not positive semidefinite (eigenvalue {min:e})"
            )));
        }
    }
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose())
}

/// `sqrt(‖μ1 - μ2‖² + tr(Σ1 + Σ2 - 2 (Σ2^{1/2} Σ1 Σ2^{1/2})^{1/2}))`
pub fn w2_gaussian(mean1: &[f64], cov1: &Matrix, mean2: &[f64], cov2: &Matrix) -> Result<f64> {
    let d = mean1.len();
    if mean2.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: mean2.len(),
        });
    }
    for c in [cov1, cov2] {
        if c.rows() != d || c.cols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: c.rows(),
            });
        }
    }
    ensure_finite(mean1, "mean")?;
    ensure_finite(mean2, "mean")?;
    ensure_finite(cov1.as_slice(), "covariance")?;
    ensure_finite(cov2.as_slice(), "covariance")?;
    let s1 = to_dmatrix(cov1);
    let s2 = to_dmatrix(cov2);
    psd_sqrt(&s1, "first covariance")?;
    let r2 = psd_sqrt(&s2, "second covariance")?;
    let cross = psd_sqrt(&(&r2 * &s1 * &r2), "cross term")?;
    let trace = s1.trace() + s2.trace() - 2.0 * cross.trace();
    let mean_sq = squared_distance(mean1, mean2);
    Ok((mean_sq + trace).max(0.0).sqrt())
}
