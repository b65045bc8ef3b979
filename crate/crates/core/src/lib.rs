//! Variance-reduced stochastic particle-optimization sampling.
//!
//! Interacting-particle samplers (SPOS, with SGLD and SVGD as special cases)
//! driven by plain, SAGA or SVRG-style stochastic gradients, together with the
//! metrics, data handling and bound calculator used to evaluate them.

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod estimator;
pub mod kernel;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod sampler;
pub mod theory;
pub mod wasserstein;

pub use error::{Error, Result};
pub use estimator::{EstimatorConfig, EstimatorKind, EstimatorState, MinibatchDraw};
pub use kernel::{BandwidthMode, KernelConfig};
pub use matrix::Matrix;
pub use metrics::{MetricRecord, MetricSet};
pub use model::{Dataset, Model, ModelKind, Potential};
pub use sampler::{
    Dynamics, MetricSchedule, MinibatchMode, ParticleSystem, RunOptions, RunOutput, Sampler,
    SamplerConfig,
};
pub use theory::{BoundVariant, TheoryConstants, TheoryInputs};
