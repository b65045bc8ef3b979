//! Convergence-bound calculator for the variance-reduced particle samplers.
//!
//! All constants are user inputs; nothing here is estimated from a model.
//!
//! ```text
//! C1 = (H_∇K + H_F) / (√2 (β⁻¹ - 3 H_F L_K - 2 L_F))
//! C2 = sqrt(2 (β⁻¹ L_F + 2 L_K H_F + H_K L_F + L_∇K)² + 2)
//! C3 = β⁻¹ m_F - 2 L_F - 3 H_F L_K
//! C4 = β⁻¹ D_F + 4 D_∇²K + 4 H_F L_∇K + 2 L_F H_∇K + 2 H_F L_K + L_F H_K
//! C5 = 2 β⁻¹ σ² + 2 H_K² σ²
//! ```

use std::f64::consts::SQRT_2;

use crate::error::{Error, Result};

/// Inputs to [`theory_constants`] and [`bound_eval`].
///
/// Counts (`m`, `batch`, `anchor_batch`, `tau`, `iterations`, `dim`, `n`) are
/// stored as reals so that limits such as `T → ∞` can be evaluated directly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryInputs {
    pub m_f: f64,
    pub l_f: f64,
    pub h_f: f64,
    pub d_f: f64,
    pub m_k: f64,
    pub l_k: f64,
    pub h_k: f64,
    pub l_grad_k: f64,
    pub h_grad_k: f64,
    pub d_hess_k: f64,
    pub sigma: f64,
    pub beta_inv: f64,
    /// Particle count `M`.
    pub m: f64,
    pub alpha: f64,
    pub h: f64,
    /// Minibatch size `B`.
    pub batch: f64,
    /// SVRG+ anchor batch `b`.
    pub anchor_batch: f64,
    pub tau: f64,
    /// Iteration count `T`.
    pub iterations: f64,
    /// Initial distance `W2(μ₀, μ*)`.
    pub w2_0: f64,
    pub dim: f64,
    pub n: f64,
}

impl Default for TheoryInputs {
    fn default() -> Self {
        Self {
            m_f: 1.0,
            l_f: 0.1,
            h_f: 1.0,
            d_f: 1.0,
            m_k: 1.0,
            l_k: 0.1,
            h_k: 1.0,
            l_grad_k: 1.0,
            h_grad_k: 1.0,
            d_hess_k: 1.0,
            sigma: 1.0,
            beta_inv: 1.0,
            m: 100.0,
            alpha: 0.25,
            h: 1e-4,
            batch: 10.0,
            anchor_batch: 10.0,
            tau: 100.0,
            iterations: 1e4,
            w2_0: 1.0,
            dim: 2.0,
            n: 100.0,
        }
    }
}

impl TheoryInputs {
    /// `(name, value)` for every field, in declaration order.
    pub fn fields(&self) -> [(&'static str, f64); 22] {
        [
            ("m_f", self.m_f),
            ("l_f", self.l_f),
            ("h_f", self.h_f),
            ("d_f", self.d_f),
            ("m_k", self.m_k),
            ("l_k", self.l_k),
            ("h_k", self.h_k),
            ("l_grad_k", self.l_grad_k),
            ("h_grad_k", self.h_grad_k),
            ("d_hess_k", self.d_hess_k),
            ("sigma", self.sigma),
            ("beta_inv", self.beta_inv),
            ("m", self.m),
            ("alpha", self.alpha),
            ("h", self.h),
            ("batch", self.batch),
            ("anchor_batch", self.anchor_batch),
            ("tau", self.tau),
            ("iterations", self.iterations),
            ("w2_0", self.w2_0),
            ("dim", self.dim),
            ("n", self.n),
        ]
    }

    /// Sets a field by name; returns `false` for an unknown name.
    pub fn set(&mut self, name: &str, value: f64) -> bool {
        let slot = match name {
            "m_f" => &mut self.m_f,
            "l_f" => &mut self.l_f,
            "h_f" => &mut self.h_f,
            "d_f" => &mut self.d_f,
            "m_k" => &mut self.m_k,
            "l_k" => &mut self.l_k,
            "h_k" => &mut self.h_k,
            "l_grad_k" => &mut self.l_grad_k,
            "h_grad_k" => &mut self.h_grad_k,
            "d_hess_k" => &mut self.d_hess_k,
            "sigma" => &mut self.sigma,
            "beta_inv" => &mut self.beta_inv,
            "m" => &mut self.m,
            "alpha" => &mut self.alpha,
            "h" => &mut self.h,
            "batch" => &mut self.batch,
            "anchor_batch" => &mut self.anchor_batch,
            "tau" => &mut self.tau,
            "iterations" => &mut self.iterations,
            "w2_0" => &mut self.w2_0,
            "dim" => &mut self.dim,
            "n" => &mut self.n,
            _ => return false,
        };
        *slot = value;
        true
    }

    /// Domain checks. Constants may be zero; `T` may be infinite.
    pub fn validate(&self) -> Result<()> {
        for (name, value) in self.fields() {
            let finite_ok = value.is_finite() || (name == "iterations" && value == f64::INFINITY);
            if !finite_ok || value < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be finite and >= 0 (got {value})"
                )));
            }
        }
        for (name, value) in [("beta_inv", self.beta_inv), ("h", self.h)] {
            if value <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be > 0 (got {value})"
                )));
            }
        }
        for (name, value) in [
            ("m", self.m),
            ("batch", self.batch),
            ("anchor_batch", self.anchor_batch),
            ("tau", self.tau),
            ("dim", self.dim),
            ("n", self.n),
        ] {
            if value < 1.0 {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be >= 1 (got {value})"
                )));
            }
        }
        if !(self.alpha > 0.0 && self.alpha <= 0.5) {
            return Err(Error::InvalidArgument(format!(
                "alpha must lie in (0, 1/2] (got {})",
                self.alpha
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoryConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
}

pub fn theory_constants(x: &TheoryInputs) -> Result<TheoryConstants> {
    x.validate()?;
    let c1_den = x.beta_inv - 3.0 * x.h_f * x.l_k - 2.0 * x.l_f;
    if c1_den <= 0.0 {
        return Err(Error::Precondition(format!(
            "beta_inv > 3 H_F L_K + 2 L_F fails ({} <= {})",
            x.beta_inv,
            3.0 * x.h_f * x.l_k + 2.0 * x.l_f
        )));
    }
    let c3 = x.beta_inv * x.m_f - 2.0 * x.l_f - 3.0 * x.h_f * x.l_k;
    if c3 <= 0.0 {
        return Err(Error::Precondition(format!(
            "C3 = beta_inv m_F - 2 L_F - 3 H_F L_K > 0 fails (C3 = {c3})"
        )));
    }
    let c1 = (x.h_grad_k + x.h_f) / (SQRT_2 * c1_den);
    let inner = x.beta_inv * x.l_f + 2.0 * x.l_k * x.h_f + x.h_k * x.l_f + x.l_grad_k;
    let c2 = (2.0 * inner * inner + 2.0).sqrt();
    let c4 = x.beta_inv * x.d_f
        + 4.0 * x.d_hess_k
        + 4.0 * x.h_f * x.l_grad_k
        + 2.0 * x.l_f * x.h_grad_k
        + 2.0 * x.h_f * x.l_k
        + x.l_f * x.h_k;
    let s2 = x.sigma * x.sigma;
    let c5 = 2.0 * x.beta_inv * s2 + 2.0 * x.h_k * x.h_k * s2;
    Ok(TheoryConstants { c1, c2, c3, c4, c5 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundVariant {
    Saga,
    SvrgI,
    SvrgII,
    SvrgPlus,
}

impl BoundVariant {
    pub const ALL: [BoundVariant; 4] = [
        BoundVariant::Saga,
        BoundVariant::SvrgI,
        BoundVariant::SvrgII,
        BoundVariant::SvrgPlus,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BoundVariant::Saga => "SAGA-POS",
            BoundVariant::SvrgI => "SVRG-POS (option I)",
            BoundVariant::SvrgII => "SVRG-POS (option II)",
            BoundVariant::SvrgPlus => "SVRG-POS+",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub variant: BoundVariant,
    pub constants: TheoryConstants,
    /// Each additive term, labelled by its formula.
    pub terms: Vec<(&'static str, f64)>,
    pub total: f64,
    /// Epoch length the option-I bound is stated for (reported, not enforced).
    pub prescribed_tau: Option<f64>,
}

fn require(ok: bool, inequality: &str, detail: String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Precondition(format!("{inequality} ({detail})")))
    }
}

/// Evaluates a W2 bound term by term after checking its step-size conditions.
pub fn bound_eval(variant: BoundVariant, x: &TheoryInputs) -> Result<BoundReport> {
    let c = theory_constants(x)?;
    let (h, m, d, b, t) = (x.h, x.m, x.dim, x.batch, x.iterations);
    let m_alpha = m.powf(x.alpha);
    let particle = ("C1/sqrt(M)", c.c1 / m.sqrt());
    let discretization = |coef: f64| coef * h * c.c4 * d * m.powf(0.5 - x.alpha) / c.c3;
    let curvature = |coef: f64| coef * h * c.c2.powf(1.5) * d.sqrt() / (c.c3 * m_alpha);
    // exp(-r T) W2_0, with 0·∞ = 0 when W2_0 = 0
    let decay = |rate: f64, pre: f64| {
        if x.w2_0 == 0.0 {
            0.0
        } else {
            pre * (-rate * t).exp() * x.w2_0
        }
    };
    let mut prescribed_tau = None;
    let terms = match variant {
        BoundVariant::Saga => {
            let cap = b / (8.0 * c.c2 * x.n);
            require(
                h < cap,
                "h < B/(8 C2 N)",
                format!("h = {h}, B/(8 C2 N) = {cap}"),
            )?;
            require(b >= 9.0, "B >= 9", format!("B = {b}"))?;
            vec![
                particle,
                ("5 exp(-C3 h T/4) W2_0", decay(c.c3 * h / 4.0, 5.0)),
                ("2 h C4 d M^(1/2-alpha)/C3", discretization(2.0)),
                ("2 h C2^(3/2) sqrt(d)/(C3 M^alpha)", curvature(2.0)),
                (
                    "24 h C2 sqrt(d N)/(M^alpha sqrt(C3) B)",
                    24.0 * h * c.c2 * (d * x.n).sqrt() / (m_alpha * c.c3.sqrt() * b),
                ),
            ]
        }
        BoundVariant::SvrgI => {
            let cap = 1.0 / (8.0 * c.c2);
            require(
                h < cap,
                "h < 1/(8 C2)",
                format!("h = {h}, 1/(8 C2) = {cap}"),
            )?;
            require(b >= 2.0, "B >= 2", format!("B = {b}"))?;
            let shrink = 1.0 - 2.0 * h * c.c2 * (1.0 + 2.0 / b);
            require(
                shrink > 0.0,
                "1 - 2 h C2 (1 + 2/B) > 0",
                format!("value {shrink}"),
            )?;
            prescribed_tau = Some(4.0 / (h * c.c3 * shrink));
            vec![
                particle,
                (
                    "exp(-C3 h T/56) sqrt(C2/C3) W2_0",
                    decay(c.c3 * h / 56.0, (c.c2 / c.c3).sqrt()),
                ),
                ("2 h C4 d M^(1/2-alpha)/C3", discretization(2.0)),
                ("2 h C2^(3/2) sqrt(d)/(C3 M^alpha)", curvature(2.0)),
                (
                    "64 C2^(3/2) sqrt(h d)/(M^alpha sqrt(B) C3)",
                    64.0 * c.c2.powf(1.5) * (h * d).sqrt() / (m_alpha * b.sqrt() * c.c3),
                ),
            ]
        }
        BoundVariant::SvrgII => {
            let cap = b.sqrt() / (4.0 * x.tau * c.c2);
            require(
                h < cap,
                "h < sqrt(B)/(4 tau C2)",
                format!("h = {h}, sqrt(B)/(4 tau C2) = {cap}"),
            )?;
            vec![
                particle,
                ("exp(-C3 h T/4) W2_0", decay(c.c3 * h / 4.0, 1.0)),
                ("sqrt(2) h C4 d M^(1/2-alpha)/C3", discretization(SQRT_2)),
                ("5 h C2^(3/2) sqrt(d)/(C3 M^alpha)", curvature(5.0)),
                (
                    "9 h C2 tau sqrt(d)/(M^alpha sqrt(B C3))",
                    9.0 * h * c.c2 * x.tau * d.sqrt() / (m_alpha * (b * c.c3).sqrt()),
                ),
            ]
        }
        BoundVariant::SvrgPlus => {
            let cap1 = (b * c.c3 / (24.0 * c.c2.powi(4) * x.tau * x.tau)).cbrt();
            let cap2 = 1.0 / (6.0 * x.tau * (c.c5 * c.c5 / x.anchor_batch + c.c2));
            require(
                h <= cap1.min(cap2),
                "h <= min((B C3/(24 C2^4 tau^2))^(1/3), 1/(6 tau (C5^2/b + C2)))",
                format!("h = {h}, caps = ({cap1}, {cap2})"),
            )?;
            let base = 1.0 - h * c.c3 / 4.0;
            require(base >= 0.0, "h C3 <= 4", format!("h C3 = {}", h * c.c3))?;
            let contraction = if x.w2_0 == 0.0 {
                0.0
            } else if t == 0.0 {
                x.w2_0
            } else {
                // ln_1p keeps the base distinct from 1 for tiny h C3
                (t * (-h * c.c3 / 4.0).ln_1p()).exp() * x.w2_0
            };
            let indicator = if x.anchor_batch <= x.n { 1.0 } else { 0.0 };
            let wedge = (4.0 * h * c.c2 * (x.tau * d).sqrt()).min(3.0 * h.sqrt() * d.sqrt() * c.c5);
            vec![
                particle,
                ("(1 - h C3/4)^T W2_0", contraction),
                (
                    "3 C5 sqrt(d)/(M^alpha C3 sqrt(b)) 1(b <= N)",
                    3.0 * c.c5 * d.sqrt() / (m_alpha * c.c3 * x.anchor_batch.sqrt()) * indicator,
                ),
                ("2 h C4 d M^(1/2-alpha)/C3", discretization(2.0)),
                ("2 h C2^(3/2) sqrt(d)/(C3 M^alpha)", curvature(2.0)),
                (
                    "min(4 h C2 sqrt(tau d), 3 sqrt(h d) C5)/(M^alpha sqrt(B C3))",
                    wedge / (m_alpha * (b * c.c3).sqrt()),
                ),
            ]
        }
    };
    let total = terms.iter().map(|(_, v)| v).sum();
    Ok(BoundReport {
        variant,
        constants: c,
        terms,
        total,
        prescribed_tau,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn example() -> TheoryInputs {
        TheoryInputs {
            h_grad_k: 1.0,
            h_f: 1.0,
            beta_inv: 1.0,
            l_k: 0.1,
            l_f: 0.1,
            ..TheoryInputs::default()
        }
    }

    #[test]
    fn constant_examples() {
        let c = theory_constants(&example()).unwrap();
        assert_relative_eq!(c.c1, 2.0 / (SQRT_2 * 0.5), epsilon = 1e-14);
        assert_relative_eq!(c.c1, 2.8284, epsilon = 1e-4);

        let zeros = TheoryInputs {
            l_f: 0.0,
            l_k: 0.0,
            h_f: 0.0,
            l_grad_k: 0.0,
            beta_inv: 1.0,
            ..TheoryInputs::default()
        };
        assert_relative_eq!(
            theory_constants(&zeros).unwrap().c2,
            SQRT_2,
            epsilon = 1e-15
        );

        let quiet = TheoryInputs {
            sigma: 0.0,
            ..example()
        };
        assert_eq!(theory_constants(&quiet).unwrap().c5, 0.0);
    }

    #[test]
    fn constants_refuse_small_beta_inv() {
        let bad = TheoryInputs {
            beta_inv: 0.5,
            ..example()
        };
        let err = theory_constants(&bad).unwrap_err().to_string();
        assert!(err.contains("beta_inv > 3 H_F L_K + 2 L_F"), "{err}");
        let bad_alpha = TheoryInputs {
            alpha: 0.7,
            ..example()
        };
        assert!(theory_constants(&bad_alpha).is_err());
    }

    #[test]
    fn saga_refuses_large_step() {
        let x = TheoryInputs {
            h: 1.0,
            ..example()
        };
        let err = bound_eval(BoundVariant::Saga, &x).unwrap_err().to_string();
        assert!(err.contains("h < B/(8 C2 N)"), "{err}");
        let small_b = TheoryInputs {
            batch: 8.0,
            h: 1e-6,
            ..example()
        };
        assert!(bound_eval(BoundVariant::Saga, &small_b)
            .unwrap_err()
            .to_string()
            .contains("B >= 9"));
    }

    #[test]
    fn limits_collapse_to_particle_term() {
        for v in BoundVariant::ALL {
            let x = TheoryInputs {
                iterations: f64::INFINITY,
                h: 1e-24,
                anchor_batch: 1e300,
                ..example()
            };
            let r = bound_eval(v, &x).unwrap();
            let c1 = r.constants.c1 / x.m.sqrt();
            assert_relative_eq!(r.total, c1, max_relative = 1e-5);
        }
    }

    #[test]
    fn zero_initial_distance_removes_only_decay_term() {
        let x = TheoryInputs {
            m: 100.0,
            alpha: 0.25,
            h: 1e-4,
            dim: 2.0,
            n: 100.0,
            batch: 10.0,
            iterations: 1e4,
            ..example()
        };
        let with = bound_eval(BoundVariant::Saga, &x).unwrap();
        let without = bound_eval(BoundVariant::Saga, &TheoryInputs { w2_0: 0.0, ..x }).unwrap();
        for (k, ((_, a), (_, b))) in with.terms.iter().zip(&without.terms).enumerate() {
            if k == 1 {
                assert!(*a > 0.0 && *b == 0.0);
            } else {
                assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn svrg1_reports_prescribed_tau() {
        let x = TheoryInputs {
            h: 1e-3,
            ..example()
        };
        let r = bound_eval(BoundVariant::SvrgI, &x).unwrap();
        let c = r.constants;
        let expected = 4.0 / (x.h * c.c3 * (1.0 - 2.0 * x.h * c.c2 * (1.0 + 2.0 / x.batch)));
        assert_relative_eq!(r.prescribed_tau.unwrap(), expected);
    }

    #[test]
    fn fields_round_trip_through_set() {
        let x = example();
        let mut y = TheoryInputs::default();
        for (name, value) in x.fields() {
            assert!(y.set(name, value));
        }
        assert_eq!(x, y);
        assert!(!y.set("nope", 1.0));
    }
}
