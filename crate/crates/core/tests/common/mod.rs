#![allow(dead_code)]

use rand::Rng;
use rand_distr::StandardNormal;
use spos_core::model::{Dataset, Model, ModelKind};
use spos_core::rng::{self, Purpose, StreamRng};
use spos_core::Matrix;

pub fn rng(seed: u64) -> StreamRng {
    rng::stream(seed, Purpose::Diagnostics, 0)
}

pub fn normal_vec(r: &mut StreamRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| r.sample(StandardNormal)).collect()
}

pub fn normal_matrix(r: &mut StreamRng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(rows, cols, normal_vec(r, rows * cols))
}

/// A random model of the given kind with `n` data points in `d` dimensions.
pub fn random_model(kind: ModelKind, n: usize, d: usize, lambda: f64, seed: u64) -> Model {
    let mut r = rng(seed);
    let x = normal_matrix(&mut r, n, d);
    let dataset = match kind {
        ModelKind::GaussianMean => Dataset::new("g", x, None),
        ModelKind::LogNormalMean => {
            let pos = x.as_slice().iter().map(|v| (v + 0.5).exp()).collect();
            Dataset::new("ln", Matrix::from_vec(n, d, pos), None)
        }
        ModelKind::LogisticRegression => {
            let labels = (0..n).map(|_| u8::from(r.random::<bool>())).collect();
            Dataset::new("lr", x, Some(labels))
        }
    }
    .unwrap();
    Model::new(kind, dataset, lambda).unwrap()
}

pub const KINDS: [ModelKind; 3] = [
    ModelKind::GaussianMean,
    ModelKind::LogNormalMean,
    ModelKind::LogisticRegression,
];
