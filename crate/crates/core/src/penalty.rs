//! The catalog of admissible penalty functions.
//!
//! A penalty p is a strictly convex, increasing function whose domain
//! contains (−∞, 0) and whose derivative vanishes at −∞. Its convex
//! conjugate q = p* drives the dual solver: the penalized dual objective
//! needs q, the gradient needs q′ (the inverse of p′), and the Newton
//! Hessian needs q″ = 1/p″∘q′. Each catalog entry also carries its decay
//! rate β(r), the scale at which p′(−1/r) vanishes as r ↓ 0 — the knob
//! that controls how fast the penalized solution approaches the LP vertex.
//!
//! | kind               | p(x)          | dom p    | β(r)    |
//! |--------------------|---------------|----------|---------|
//! | log_barrier        | −ln(−x)       | (−∞, 0)  | r       |
//! | inverse_poly(α)    | (−x)^{−α}     | (−∞, 0)  | r^{α+1} |
//! | exponential        | eˣ            | ℝ        | r^κ     |
//! | smoothed_quadratic | ln(1+eˣ)²     | ℝ        | r^κ     |
//!
//! κ defaults to 3 and is configurable via [`PenaltySpec::with_kappa`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PenaltyError {
    #[error("penalty domain violation: {0}")]
    DomainError(String),
}

/// Which penalty from the catalog.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyKind {
    LogBarrier,
    InversePoly { alpha: f64 },
    SmoothedQuadratic,
    Exponential,
}

impl std::fmt::Display for PenaltyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PenaltyKind::LogBarrier => write!(f, "log_barrier"),
            PenaltyKind::InversePoly { alpha } => write!(f, "inverse_poly({alpha})"),
            PenaltyKind::SmoothedQuadratic => write!(f, "smoothed_quadratic"),
            PenaltyKind::Exponential => write!(f, "exponential"),
        }
    }
}

/// A penalty with its derivatives, conjugate derivatives, domain edge,
/// and decay rate. Immutable and freely shareable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    kind: PenaltyKind,
    /// Decay-rate exponent for the full-domain penalties (exponential,
    /// smoothed_quadratic): β(r) = r^κ.
    kappa: f64,
}

/// Construct a catalog penalty, validating its parameters.
pub fn make_penalty(kind: PenaltyKind) -> Result<PenaltySpec, PenaltyError> {
    if let PenaltyKind::InversePoly { alpha } = kind {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(PenaltyError::DomainError(format!(
                "inverse_poly exponent must be a positive finite number, got {alpha}"
            )));
        }
    }
    Ok(PenaltySpec { kind, kappa: 3.0 })
}

/// Evaluate q′(y), the derivative of the conjugate, with domain checking.
pub fn conjugate_prime(spec: &PenaltySpec, y: f64) -> Result<f64, PenaltyError> {
    if !(y > 0.0 && y.is_finite()) {
        return Err(PenaltyError::DomainError(format!(
            "q′ is defined on (0, ∞) only, got {y}"
        )));
    }
    Ok(spec.q_prime(y))
}

/// Self-consistency of a spec on a grid of positive values: the larger of
/// max |p′(q′(y)) − y| and max |p″(q′(y))·q″_fd(y) − 1|, where q″_fd is a
/// central finite difference of q′. Small values certify that the stored
/// derivative pairs really are conjugate inverses.
pub fn verify_conjugacy(spec: &PenaltySpec, grid: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for &y in grid {
        assert!(y > 0.0, "conjugacy grid must be positive");
        let x = spec.q_prime(y);
        worst = worst.max((spec.p_prime(x) - y).abs());
        let h = 1e-6 * y.max(1e-3);
        let fd = (spec.q_prime(y + h) - spec.q_prime(y - h)) / (2.0 * h);
        worst = worst.max((spec.p_second(x) * fd - 1.0).abs());
    }
    worst
}

impl PenaltySpec {
    pub fn kind(&self) -> PenaltyKind {
        self.kind
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// Replace the decay exponent κ used by the full-domain penalties.
    pub fn with_kappa(mut self, kappa: f64) -> Result<Self, PenaltyError> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(PenaltyError::DomainError(format!(
                "decay exponent must be a positive finite number, got {kappa}"
            )));
        }
        self.kappa = kappa;
        Ok(self)
    }

    /// Supremum of dom p: 0 for the barrier-type penalties, +∞ for the
    /// full-domain ones.
    pub fn dom_p_upper(&self) -> f64 {
        match self.kind {
            PenaltyKind::LogBarrier | PenaltyKind::InversePoly { .. } => 0.0,
            PenaltyKind::SmoothedQuadratic | PenaltyKind::Exponential => f64::INFINITY,
        }
    }

    /// True when dom p is all of ℝ.
    pub fn full_domain(&self) -> bool {
        self.dom_p_upper().is_infinite()
    }

    /// p(x); +∞ outside the domain. The exponential is clamped at
    /// exp(700) — callers treat values of that size as divergence rather
    /// than relying on IEEE infinity arithmetic.
    pub fn p(&self, x: f64) -> f64 {
        match self.kind {
            PenaltyKind::LogBarrier => {
                if x < 0.0 {
                    -(-x).ln()
                } else {
                    f64::INFINITY
                }
            }
            PenaltyKind::InversePoly { alpha } => {
                if x < 0.0 {
                    (-x).powf(-alpha)
                } else {
                    f64::INFINITY
                }
            }
            PenaltyKind::Exponential => x.min(700.0).exp(),
            PenaltyKind::SmoothedQuadratic => {
                let s = softplus(x);
                s * s
            }
        }
    }

    /// p′(x); +∞ outside the domain.
    pub fn p_prime(&self, x: f64) -> f64 {
        match self.kind {
            PenaltyKind::LogBarrier => {
                if x < 0.0 {
                    -1.0 / x
                } else {
                    f64::INFINITY
                }
            }
            PenaltyKind::InversePoly { alpha } => {
                if x < 0.0 {
                    alpha * (-x).powf(-(alpha + 1.0))
                } else {
                    f64::INFINITY
                }
            }
            PenaltyKind::Exponential => x.min(700.0).exp(),
            PenaltyKind::SmoothedQuadratic => 2.0 * softplus(x) * sigmoid(x),
        }
    }

    /// p″(x); +∞ outside the domain. Strictly positive on the interior.
    pub fn p_second(&self, x: f64) -> f64 {
        match self.kind {
            PenaltyKind::LogBarrier => {
                if x < 0.0 {
                    1.0 / (x * x)
                } else {
                    f64::INFINITY
                }
            }
            PenaltyKind::InversePoly { alpha } => {
                if x < 0.0 {
                    alpha * (alpha + 1.0) * (-x).powf(-(alpha + 2.0))
                } else {
                    f64::INFINITY
                }
            }
            PenaltyKind::Exponential => x.min(700.0).exp(),
            PenaltyKind::SmoothedQuadratic => {
                let s = sigmoid(x);
                2.0 * s * (s + softplus(x) * (1.0 - s))
            }
        }
    }

    /// The conjugate q(y) = sup_x { xy − p(x) } for y > 0.
    pub fn q(&self, y: f64) -> f64 {
        debug_assert!(y > 0.0, "q is defined on (0, ∞), got {y}");
        match self.kind {
            PenaltyKind::LogBarrier => -1.0 - y.ln(),
            PenaltyKind::Exponential => y * y.ln() - y,
            PenaltyKind::InversePoly { .. } | PenaltyKind::SmoothedQuadratic => {
                // Fenchel identity at the maximizer x* = q′(y).
                let x = self.q_prime(y);
                x * y - self.p(x)
            }
        }
    }

    /// q′(y) = (p′)⁻¹(y) for y > 0. Hot path: domain enforced by
    /// debug assertion only; use [`conjugate_prime`] for checked access.
    pub fn q_prime(&self, y: f64) -> f64 {
        debug_assert!(y > 0.0, "q′ is defined on (0, ∞), got {y}");
        match self.kind {
            PenaltyKind::LogBarrier => -1.0 / y,
            PenaltyKind::InversePoly { alpha } => -(alpha / y).powf(1.0 / (alpha + 1.0)),
            PenaltyKind::Exponential => y.ln(),
            PenaltyKind::SmoothedQuadratic => invert_sq_prime(y),
        }
    }

    /// q″(y) = 1/p″(q′(y)) by the inverse-function theorem; closed forms
    /// where available.
    pub fn q_second(&self, y: f64) -> f64 {
        debug_assert!(y > 0.0, "q″ is defined on (0, ∞), got {y}");
        match self.kind {
            PenaltyKind::LogBarrier => 1.0 / (y * y),
            PenaltyKind::Exponential => 1.0 / y,
            PenaltyKind::InversePoly { .. } | PenaltyKind::SmoothedQuadratic => {
                1.0 / self.p_second(self.q_prime(y))
            }
        }
    }

    /// Decay rate β(r): how fast p′(−1/r) vanishes as r ↓ 0.
    pub fn beta(&self, r: f64) -> f64 {
        match self.kind {
            PenaltyKind::LogBarrier => r,
            PenaltyKind::InversePoly { alpha } => r.powf(alpha + 1.0),
            PenaltyKind::SmoothedQuadratic | PenaltyKind::Exponential => r.powf(self.kappa),
        }
    }
}

/// ln(1 + eˣ), computed without overflow for large |x|.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// 1/(1 + e⁻ˣ), computed without overflow for large |x|.
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Invert p′ for the smoothed quadratic by safeguarded Newton: p′ is
/// strictly increasing from 0 to ∞, so a bracket always exists. The
/// asymptotics p′(x) ≈ 2e²ˣ (x → −∞) and p′(x) ≈ 2x (x → ∞) seed the
/// initial guess.
fn invert_sq_prime(y: f64) -> f64 {
    let sq = PenaltySpec { kind: PenaltyKind::SmoothedQuadratic, kappa: 3.0 };
    let mut x = if y < 1.0 { 0.5 * (y / 2.0).ln() } else { y / 2.0 };

    let mut lo = x;
    let mut step = 1.0;
    while sq.p_prime(lo) >= y {
        lo -= step;
        step *= 2.0;
    }
    let mut hi = x.max(lo + 1.0);
    step = 1.0;
    while sq.p_prime(hi) <= y {
        hi += step;
        step *= 2.0;
    }
    x = x.clamp(lo, hi);

    for _ in 0..100 {
        let f = sq.p_prime(x) - y;
        if f.abs() <= 1e-13 * y.max(1.0) {
            break;
        }
        if f > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let d = sq.p_second(x);
        let newton = x - f / d;
        x = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo <= f64::EPSILON * (1.0 + x.abs()) {
            break;
        }
    }
    x
}
