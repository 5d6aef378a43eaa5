//! Two-point extrapolation of penalized solutions and the expansion
//! oracle used to verify it.
//!
//! Solving the penalized program at strengths `r` and `r/2` and combining
//! the two solutions as `2·x(r/2) − x(r)` cancels the leading (linear)
//! term of the penalization bias.  The companion estimate
//! `d̂ = (2/r)·(x(r) − x(r/2))` recovers the bias direction itself.
//!
//! The oracle side computes the objects that the first-order expansion
//! `x(r, b′) ≈ x* + r·d* + M*·(b′ − b)` is built from:
//!
//! * `d*` — the bias direction, a convex program over the kernel of `A`
//!   penalizing exactly the coordinates that vanish at the vertex;
//! * `Σ` — the diagonal curvature matrix `Σᵢᵢ = p″(−d*ᵢ)` on that set;
//! * `M*` — the `Σ`-weighted right inverse of `A`, mapping perturbations
//!   of the right-hand side to first-order movements of the solution.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg::solve_spd_damped;
use crate::lp_core::{
    null_space_basis, solve_lp, strict_feasible_point, zero_set, LpError, LpSolution,
    StandardFormLP, ZeroSet, DEFAULT_TOL,
};
use crate::penalized_solver::{solve_penalized, PenalizedSolution, SolverError, SolverOptions};
use crate::penalty::PenaltySpec;

/// First-order stationarity tolerance for the `d*` Newton solve,
/// relative to `1 + ‖c‖∞`.
const D_STAR_TOL: f64 = 1e-10;
const D_STAR_MAX_ITER: usize = 200;
/// Iterate magnitude (relative to `1 + ‖x*‖∞`) beyond which the reduced
/// objective is declared unbounded below.
const D_STAR_CLIP: f64 = 1e8;

#[derive(Debug, Error)]
pub enum OracleError {
    /// One of the penalized solves behind an estimate failed.
    #[error("penalized solve for {which} (r = {r:.3e}) failed: {source}")]
    SolveFailed {
        which: &'static str,
        r: f64,
        #[source]
        source: SolverError,
    },
    /// The d* program decreases without bound along a kernel direction,
    /// which signals that the dual of the base LP is infeasible.
    #[error(
        "d* program is unbounded below (iterates exceeded {clip:.1e} with slope {slope:.3e}); \
         the base LP violates dual feasibility"
    )]
    Unbounded { clip: f64, slope: f64 },
    /// The d* Newton iteration stalled before reaching stationarity.
    #[error(
        "d* solve did not reach stationarity {tol:.1e} in {iters} iterations \
         (last gradient norm {grad:.3e})"
    )]
    NonConvergence { iters: usize, grad: f64, tol: f64 },
    /// ZᵀΣZ is singular beyond the damping floor: the base solution is
    /// degenerate and the expansion does not exist.  The operation aborts
    /// instead of regularizing, which would fake a guarantee.
    #[error("KKT system for M* is singular: ZᵀΣZ is not invertible (degenerate LP solution)")]
    SingularKkt,
    #[error(transparent)]
    Lp(#[from] LpError),
}

// ---------------------------------------------------------------------------
// Debiased estimate
// ---------------------------------------------------------------------------

/// The pair of penalized solves at `(r, r/2)` combined into an
/// extrapolated solution estimate and a bias-direction estimate.
#[derive(Debug, Clone)]
pub struct DebiasedEstimate {
    /// `2·x(r/2) − x(r)`.  No nonnegativity is enforced: small negative
    /// entries are part of the estimator.
    pub x_hat: Vec<f64>,
    /// `(2/r)·(x(r) − x(r/2))`, an estimate of the bias direction `d*`.
    pub d_hat: Vec<f64>,
    /// Penalty strength of the coarser solve.
    pub r_n: f64,
    /// The underlying solves `(x(r), x(r/2))`.
    pub solutions: (PenalizedSolution, PenalizedSolution),
}

impl DebiasedEstimate {
    pub fn x_hat_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.x_hat)
    }

    pub fn d_hat_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.d_hat)
    }
}

/// Solves the penalized program at `r_n` and `r_n/2` and extrapolates the
/// linear bias term away.
///
/// The second solve is warm-started from the multipliers of the first
/// when the first ran on the dual path.  Errors are tagged with the solve
/// that failed.
pub fn debiased_estimate(
    lp_n: &StandardFormLP,
    pen: &PenaltySpec,
    r_n: f64,
    opts: &SolverOptions,
) -> Result<DebiasedEstimate, OracleError> {
    let full = solve_penalized(lp_n, pen, r_n, opts).map_err(|e| OracleError::SolveFailed {
        which: "x(r)",
        r: r_n,
        source: e,
    })?;
    let mut half_opts = opts.clone();
    if full.dual_path {
        half_opts.warm_start = Some(full.lambda.clone());
    }
    let half = solve_penalized(lp_n, pen, r_n / 2.0, &half_opts).map_err(|e| {
        OracleError::SolveFailed {
            which: "x(r/2)",
            r: r_n / 2.0,
            source: e,
        }
    })?;

    let x_hat = two_point_extrapolation(r_n, &full.x, r_n / 2.0, &half.x);
    let d_hat: Vec<f64> = full
        .x
        .iter()
        .zip(&half.x)
        .map(|(&xf, &xh)| (2.0 / r_n) * (xf - xh))
        .collect();
    Ok(DebiasedEstimate {
        x_hat,
        d_hat,
        r_n,
        solutions: (full, half),
    })
}

/// Generalized two-point extrapolation with weights
/// `r₁/(r₁−r₂)·x(r₂) − r₂/(r₁−r₂)·x(r₁)`; any pair `r₁ > r₂ > 0` kills an
/// exactly-linear bias term.  For `r₂ = r₁/2` the weights are exactly
/// `(2, 1)`, so this reduces bitwise to `2·x(r/2) − x(r)`.
pub(crate) fn two_point_extrapolation(r1: f64, x1: &[f64], r2: f64, x2: &[f64]) -> Vec<f64> {
    let w2 = r1 / (r1 - r2);
    let w1 = r2 / (r1 - r2);
    x1.iter().zip(x2).map(|(&a, &b)| w2 * b - w1 * a).collect()
}

// ---------------------------------------------------------------------------
// Expansion oracle: d*, Σ, M*
// ---------------------------------------------------------------------------

/// The ingredients of the first-order expansion
/// `x(r, b′) ≈ x* + r·d* + M*·(b′ − b)` around a unique vertex solution.
#[derive(Debug, Clone)]
pub struct ExpansionOracle {
    /// The exact LP solution the expansion is anchored at.
    pub x_star: LpSolution,
    /// Coordinates vanishing at the vertex.
    pub i0: ZeroSet,
    /// Bias direction: the minimizer of `⟨c,d⟩ + Σ_{i∈I₀} p(−dᵢ)` over
    /// `Ad = 0`.
    pub d_star: DVector<f64>,
    /// Diagonal of `Σ`: `p″(−d*ᵢ)` on `I₀`, zero elsewhere.
    pub sigma: DVector<f64>,
    /// `Σ`-weighted right inverse of `A` (m×k).
    pub m_star: DMatrix<f64>,
}

/// Solves the base LP and assembles the full expansion oracle for it.
pub fn expansion_oracle(
    lp: &StandardFormLP,
    pen: &PenaltySpec,
) -> Result<ExpansionOracle, OracleError> {
    let x_star = solve_lp(lp)?;
    let i0 = zero_set(&x_star, DEFAULT_TOL)?;
    let d_star = d_star_newton(lp, pen, &i0, &x_star.x_vector())?;
    let sigma = sigma_diagonal(pen, &d_star, &i0);
    let m_star = oracle_m_star(lp.a(), &sigma)?;
    Ok(ExpansionOracle {
        x_star,
        i0,
        d_star,
        sigma,
        m_star,
    })
}

/// Diagonal of `Σ`: the penalty curvature `p″(−d*ᵢ)` on the zero set,
/// zero off it.
pub fn sigma_diagonal(pen: &PenaltySpec, d_star: &DVector<f64>, i0: &ZeroSet) -> DVector<f64> {
    let mut sigma = DVector::zeros(d_star.len());
    for &i in &i0.indices {
        sigma[i] = pen.p_second(-d_star[i]);
    }
    sigma
}

/// Bias direction of the penalization: the unique minimizer of
/// `⟨c,d⟩ + Σ_{i∈I₀} p(−dᵢ)` subject to `Ad = 0`.
///
/// The base LP is solved internally to obtain the vertex and its zero
/// set; the convex program is then solved by Newton's method in
/// null-space coordinates `d = Z·v`, started (for barrier penalties) from
/// the difference between a strictly feasible point and the vertex so
/// that every penalized coordinate begins strictly positive.
pub fn oracle_d_star(lp: &StandardFormLP, pen: &PenaltySpec) -> Result<DVector<f64>, OracleError> {
    let base = solve_lp(lp)?;
    let i0 = zero_set(&base, DEFAULT_TOL)?;
    d_star_newton(lp, pen, &i0, &base.x_vector())
}

fn d_star_newton(
    lp: &StandardFormLP,
    pen: &PenaltySpec,
    i0: &ZeroSet,
    x_star: &DVector<f64>,
) -> Result<DVector<f64>, OracleError> {
    let m = lp.m();
    let c = lp.c();
    let z = null_space_basis(lp.a())?;
    if z.ncols() == 0 {
        // A is square and invertible: the kernel is trivial.
        return Ok(DVector::zeros(m));
    }
    let mut on_i0 = vec![false; m];
    for &i in &i0.indices {
        on_i0[i] = true;
    }

    let grad_tol = D_STAR_TOL * (1.0 + c.amax());
    let clip = D_STAR_CLIP * (1.0 + x_star.amax());
    let barrier = !pen.full_domain();

    let objective = |d: &DVector<f64>| -> f64 {
        let mut val = c.dot(d);
        for &i in &i0.indices {
            val += pen.p(-d[i]);
        }
        val
    };
    let in_domain = |d: &DVector<f64>| -> bool {
        !barrier || i0.indices.iter().all(|&i| d[i] > 0.0)
    };

    // Barrier penalties need every penalized coordinate strictly positive
    // at the start; the difference between a strictly feasible point and
    // the vertex lies in ker A and has exactly that property.
    let mut v = DVector::zeros(z.ncols());
    let mut d = DVector::zeros(m);
    if barrier {
        let xs = strict_feasible_point(lp)?;
        v = z.transpose() * (xs - x_star);
        d = &z * &v;
        if !in_domain(&d) {
            return Err(OracleError::NonConvergence {
                iters: 0,
                grad: f64::INFINITY,
                tol: grad_tol,
            });
        }
    }

    let mut grad_norm = f64::INFINITY;
    for _ in 0..D_STAR_MAX_ITER {
        let mut grad_d = c.clone();
        let mut weights = DVector::zeros(m);
        for &i in &i0.indices {
            grad_d[i] -= pen.p_prime(-d[i]);
            weights[i] = pen.p_second(-d[i]);
        }
        let gv = z.transpose() * &grad_d;
        grad_norm = gv.amax();

        if d.amax() > clip || objective(&d) < -1e14 {
            return Err(OracleError::Unbounded {
                clip,
                slope: grad_norm,
            });
        }

        if grad_norm <= grad_tol {
            // A stationary point in a region where the penalty has gone
            // numerically flat is a minimizing ray, not a minimizer.
            let flat = i0.indices.iter().any(|&i| {
                weights[i] < 1e-9 && d[i].abs() > 10.0 * (1.0 + x_star.amax())
            });
            if flat {
                return Err(OracleError::Unbounded {
                    clip,
                    slope: grad_norm,
                });
            }
            return Ok(d);
        }

        // Reduced Hessian ZᵀWZ through a row-scaled copy of Z.
        let mut zw = z.clone();
        for i in 0..m {
            let s = weights[i].sqrt();
            for j in 0..zw.ncols() {
                zw[(i, j)] *= s;
            }
        }
        let h = zw.transpose() * &zw;
        let Some((step, _)) = solve_spd_damped(&h, &(-&gv)) else {
            return Err(OracleError::NonConvergence {
                iters: D_STAR_MAX_ITER,
                grad: grad_norm,
                tol: grad_tol,
            });
        };

        let dir_d = &z * &step;
        let mut alpha: f64 = 1.0;
        if barrier {
            for &i in &i0.indices {
                if dir_d[i] < 0.0 {
                    alpha = alpha.min(0.95 * d[i] / -dir_d[i]);
                }
            }
        }
        let phi0 = objective(&d);
        let slope = gv.dot(&step);
        let mut accepted = false;
        while alpha >= 1e-14 {
            let d_try = &d + alpha * &dir_d;
            if in_domain(&d_try) && objective(&d_try) <= phi0 + 1e-4 * alpha * slope {
                v += alpha * &step;
                d = &z * &v;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            return Err(OracleError::NonConvergence {
                iters: D_STAR_MAX_ITER,
                grad: grad_norm,
                tol: grad_tol,
            });
        }
    }
    Err(OracleError::NonConvergence {
        iters: D_STAR_MAX_ITER,
        grad: grad_norm,
        tol: grad_tol,
    })
}

/// `Σ`-weighted right inverse of `A`: column `j` solves
/// `min xᵀΣx  s.t.  Ax = eⱼ` by the null-space method
/// `x = x_p + Z·v`, `(ZᵀΣZ)v = −ZᵀΣx_p`.
///
/// `sigma` is the diagonal of `Σ` (entrywise nonnegative, supported on
/// the zero set of the vertex).  Fails with [`OracleError::SingularKkt`]
/// when `ZᵀΣZ` cannot be factorized even at the damping floor, which is
/// the numerical signature of a degenerate vertex.
pub fn oracle_m_star(a: &DMatrix<f64>, sigma: &DVector<f64>) -> Result<DMatrix<f64>, OracleError> {
    let (k, m) = a.shape();
    if sigma.len() != m {
        return Err(OracleError::Lp(LpError::InvalidData(format!(
            "sigma has {} entries for {} columns",
            sigma.len(),
            m
        ))));
    }
    if sigma.min() < 0.0 {
        return Err(OracleError::Lp(LpError::InvalidData(
            "sigma must be entrywise nonnegative".into(),
        )));
    }
    let z = null_space_basis(a)?;

    // Minimum-norm particular solutions for all right-hand sides at once:
    // X_p = Aᵀ(AAᵀ)⁻¹.
    let gram = a * a.transpose();
    let chol = gram
        .clone()
        .cholesky()
        .ok_or(OracleError::Lp(LpError::RankDeficient { rank: 0, rows: k }))?;
    let mut gram_inv = DMatrix::identity(k, k);
    chol.solve_mut(&mut gram_inv);
    let x_p = a.transpose() * gram_inv;

    if z.ncols() == 0 {
        return Ok(x_p);
    }

    // Reduced normal matrix ZᵀΣZ; a single damping step at the floor is
    // allowed, anything beyond aborts as degenerate.
    let sz = {
        let mut sz = z.clone();
        for i in 0..m {
            for j in 0..sz.ncols() {
                sz[(i, j)] *= sigma[i];
            }
        }
        sz
    };
    let h = z.transpose() * &sz;
    let h_sym = (&h + h.transpose()) * 0.5;
    let eigs = h_sym.symmetric_eigenvalues();
    let floor = 1e-14 * (1.0 + eigs.amax());
    if eigs.min() <= floor {
        return Err(OracleError::SingularKkt);
    }
    let chol_h = h_sym.clone().cholesky().or_else(|| {
        (h_sym + DMatrix::from_diagonal_element(z.ncols(), z.ncols(), floor)).cholesky()
    });
    let Some(chol_h) = chol_h else {
        return Err(OracleError::SingularKkt);
    };

    let mut rhs = -(sz.transpose() * &x_p);
    chol_h.solve_mut(&mut rhs);
    Ok(&x_p + &z * rhs)
}

// ---------------------------------------------------------------------------
// Expansion residual
// ---------------------------------------------------------------------------

/// What the first-order expansion fails to explain:
/// `x(r, b′) − x* − r·d* − M*(b′ − b)`.
///
/// Under the expansion's validity regime (`r·β(r) ≪ ‖b′ − b‖ ≪ r`) the
/// returned vector is `O(‖b′ − b‖²/r + r·β(r))`.
pub fn expansion_residual(
    lp: &StandardFormLP,
    pen: &PenaltySpec,
    r: f64,
    b_prime: &DVector<f64>,
    oracle: &ExpansionOracle,
) -> Result<DVector<f64>, OracleError> {
    let perturbed = lp.with_b(b_prime.clone())?;
    let sol = solve_penalized(&perturbed, pen, r, &SolverOptions::default()).map_err(|e| {
        OracleError::SolveFailed {
            which: "perturbed solve",
            r,
            source: e,
        }
    })?;
    let db = b_prime - lp.b();
    Ok(sol.x_vector() - oracle.x_star.x_vector() - r * &oracle.d_star - &oracle.m_star * db)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::penalty::{make_penalty, PenaltyKind};
    use approx::assert_abs_diff_eq;

    fn log_pen() -> PenaltySpec {
        make_penalty(PenaltyKind::LogBarrier).unwrap()
    }

    fn exp_pen() -> PenaltySpec {
        make_penalty(PenaltyKind::Exponential).unwrap()
    }

    /// min x₂ s.t. x₁ + x₂ = 1.
    fn toy_lp() -> StandardFormLP {
        StandardFormLP::new(
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DVector::from_vec(vec![1.0]),
            DVector::from_vec(vec![0.0, 1.0]),
        )
        .unwrap()
    }

    /// 2×2 transport with c = (0,1,2,0), t = s = (½,½); unique plan
    /// diag(½,½), I₀ = {1,2}.
    fn ot_2x2() -> StandardFormLP {
        StandardFormLP::new(
            DMatrix::from_row_slice(
                3,
                4,
                &[1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 0.0],
            ),
            DVector::from_vec(vec![0.5, 0.5, 0.5]),
            DVector::from_vec(vec![0.0, 1.0, 2.0, 0.0]),
        )
        .unwrap()
    }

    fn toy_x2(r: f64) -> f64 {
        ((1.0 + 2.0 * r) - (1.0 + 4.0 * r * r).sqrt()) / 2.0
    }

    #[test]
    fn defining_identities_hold_to_roundoff() {
        // A dyadic r makes the weights and the r·d̂ product exact, so the
        // three defining identities close at machine precision.
        let r = 0.03125;
        let est = debiased_estimate(&toy_lp(), &log_pen(), r, &SolverOptions::default()).unwrap();
        let (full, half) = (&est.solutions.0, &est.solutions.1);
        assert_eq!(full.r, r);
        assert_eq!(half.r, r / 2.0);
        for i in 0..2 {
            assert_eq!(est.x_hat[i], 2.0 * half.x[i] - full.x[i]);
            assert_eq!(est.d_hat[i], (2.0 / r) * (full.x[i] - half.x[i]));
            assert_abs_diff_eq!(est.x_hat[i] + r * est.d_hat[i], full.x[i], epsilon = 1e-15);
        }
    }

    #[test]
    fn quadratic_bias_cancellation_on_toy() {
        let r = 0.01;
        let est = debiased_estimate(&toy_lp(), &log_pen(), r, &SolverOptions::default()).unwrap();
        let closed = 2.0 * toy_x2(r / 2.0) - toy_x2(r);
        assert_abs_diff_eq!(est.x_hat[1], closed, epsilon = 1e-12);
        // Leading term r²/2 = 5.0e-5, versus a raw bias of x₂(r) ≈ 9.9e-3.
        assert_abs_diff_eq!(est.x_hat[1], r * r / 2.0, epsilon = 1e-8);
        assert!(est.x_hat[1] < est.solutions.0.x[1] / 100.0);
        // The bias-direction estimate approaches d* = (−1, 1).
        assert_abs_diff_eq!(est.d_hat[0], -1.0, epsilon = 5e-2);
        assert_abs_diff_eq!(est.d_hat[1], 1.0, epsilon = 5e-2);
    }

    #[test]
    fn exactly_linear_bias_is_removed_exactly() {
        // x₁ is pinned to 1 by the single constraint; x₂ is unconstrained
        // and recovered in closed form as r/5, so the bias is exactly
        // linear in r and extrapolation cancels it bitwise.
        let lp = StandardFormLP::new(
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DVector::from_vec(vec![1.0]),
            DVector::from_vec(vec![1.0, 5.0]),
        )
        .unwrap();
        let r = 0.03125;
        let est = debiased_estimate(&lp, &log_pen(), r, &SolverOptions::default()).unwrap();
        assert_eq!(est.x_hat[1], 0.0);
        assert_abs_diff_eq!(est.x_hat[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(est.d_hat[1], 0.2, epsilon = 1e-13);
        assert_abs_diff_eq!(est.d_hat[0], 0.0, epsilon = 1e-10);
    }

    #[test]
    fn d_hat_matches_exponential_d_star_on_transport() {
        let est = debiased_estimate(&ot_2x2(), &exp_pen(), 0.05, &SolverOptions::default()).unwrap();
        let delta = (2.0f64 / 3.0).ln();
        assert_abs_diff_eq!(est.d_hat[1], delta, epsilon = 5e-3);
        assert_abs_diff_eq!(est.d_hat[2], delta, epsilon = 5e-3);
        assert_abs_diff_eq!(est.d_hat[0], -delta, epsilon = 5e-3);
        assert_abs_diff_eq!(est.d_hat[3], -delta, epsilon = 5e-3);
        for (i, &p) in [0.5, 0.0, 0.0, 0.5].iter().enumerate() {
            assert_abs_diff_eq!(est.x_hat[i], p, epsilon = 1e-3);
        }
    }

    #[test]
    fn general_two_point_weights_cancel_linear_bias() {
        let (r1, r2) = (0.1, 0.03);
        let x1 = [toy_x2(r1)];
        let x2 = [toy_x2(r2)];
        let ex = two_point_extrapolation(r1, &x1, r2, &x2);
        // x₂(r) = r − r² + O(r⁴): the linear term cancels and the
        // quadratic term becomes +r₁r₂.
        assert_abs_diff_eq!(ex[0], r1 * r2, epsilon = 2e-4);
        // The (r, r/2) case reduces to the shipped weights exactly.
        let half = two_point_extrapolation(0.01, &x1, 0.005, &x2);
        assert_eq!(half[0], 2.0 * x2[0] - x1[0]);
    }

    #[test]
    fn solve_failures_are_tagged_with_the_failing_solve() {
        let mut opts = SolverOptions::default();
        opts.max_iter = 1;
        match debiased_estimate(&ot_2x2(), &log_pen(), 0.01, &opts) {
            Err(OracleError::SolveFailed { which, .. }) => assert_eq!(which, "x(r)"),
            other => panic!("expected SolveFailed, got {other:?}"),
        }
    }

    #[test]
    fn d_star_on_toy_is_minus_one_one() {
        let d = oracle_d_star(&toy_lp(), &log_pen()).unwrap();
        assert_abs_diff_eq!(d[0], -1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(d[1], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn d_star_on_transport_for_both_penalties() {
        let d_log = oracle_d_star(&ot_2x2(), &log_pen()).unwrap();
        for (i, sign) in [(0, -1.0), (1, 1.0), (2, 1.0), (3, -1.0)] {
            assert_abs_diff_eq!(d_log[i], sign * 2.0 / 3.0, epsilon = 1e-9);
        }
        let d_exp = oracle_d_star(&ot_2x2(), &exp_pen()).unwrap();
        let delta = (2.0f64 / 3.0).ln();
        for (i, sign) in [(0, -1.0), (1, 1.0), (2, 1.0), (3, -1.0)] {
            assert_abs_diff_eq!(d_exp[i], sign * delta, epsilon = 1e-9);
        }
    }

    #[test]
    fn d_star_detects_unbounded_program() {
        // Every feasible point of min x₁+x₂ s.t. x₁+x₂ = 1 is optimal;
        // the vertex returned by the simplex has one zero coordinate and
        // the kernel direction that grows it is penalized like −ln, so
        // the reduced objective falls without bound.
        let lp = StandardFormLP::new(
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DVector::from_vec(vec![1.0]),
            DVector::from_vec(vec![1.0, 1.0]),
        )
        .unwrap();
        assert!(matches!(
            oracle_d_star(&lp, &log_pen()),
            Err(OracleError::Unbounded { .. })
        ));
    }

    #[test]
    fn m_star_matches_hand_kkt_solution() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let sigma = DVector::from_vec(vec![0.0, 1.0]);
        let m = oracle_m_star(&a, &sigma).unwrap();
        assert_abs_diff_eq!(m[(0, 0)], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(m[(1, 0)], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn m_star_with_identity_sigma_is_min_norm_right_inverse() {
        let a = DMatrix::from_row_slice(
            2,
            4,
            &[1.0, 2.0, 0.0, -1.0, 0.0, 1.0, 1.0, 3.0],
        );
        let sigma = DVector::from_element(4, 1.0);
        let m = oracle_m_star(&a, &sigma).unwrap();
        let gram_inv = (&a * a.transpose()).try_inverse().unwrap();
        let min_norm = a.transpose() * gram_inv;
        assert_abs_diff_eq!((m - min_norm).amax(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn m_star_is_singular_for_zero_sigma() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let sigma = DVector::zeros(2);
        assert!(matches!(
            oracle_m_star(&a, &sigma),
            Err(OracleError::SingularKkt)
        ));
    }

    #[test]
    fn oracle_invariants_on_transport() {
        let lp = ot_2x2();
        let oracle = expansion_oracle(&lp, &log_pen()).unwrap();
        assert_eq!(oracle.i0.indices, vec![1, 2]);
        // Σ = diag(0, 9/4, 9/4, 0): curvature of −ln at 2/3 is (3/2)².
        assert_abs_diff_eq!(oracle.sigma[1], 2.25, epsilon = 1e-8);
        assert_abs_diff_eq!(oracle.sigma[2], 2.25, epsilon = 1e-8);
        assert_eq!(oracle.sigma[0], 0.0);
        assert_eq!(oracle.sigma[3], 0.0);

        assert!((lp.a() * &oracle.d_star).amax() <= 1e-9);
        let am = lp.a() * &oracle.m_star;
        assert!((am - DMatrix::<f64>::identity(3, 3)).amax() <= 1e-10);
        let z = null_space_basis(lp.a()).unwrap();
        let zsm = z.transpose() * DMatrix::from_diagonal(&oracle.sigma) * &oracle.m_star;
        assert!(zsm.amax() <= 1e-8);
    }

    #[test]
    fn expansion_residual_is_second_order() {
        let lp = ot_2x2();
        let pen = log_pen();
        let oracle = expansion_oracle(&lp, &pen).unwrap();
        let r = 0.01;

        // b′ = b: what is left is the pure bias error x(r) − x* − r·d*,
        // of order r².
        let res_r = expansion_residual(&lp, &pen, r, lp.b(), &oracle).unwrap();
        assert!(res_r.amax() <= 2e-4, "bias residual {:.3e}", res_r.amax());
        let res_half = expansion_residual(&lp, &pen, r / 2.0, lp.b(), &oracle).unwrap();
        let order = (res_r.amax() / res_half.amax()).log2();
        assert!(order >= 1.8, "bias order {order:.2}");

        // Fixed r, shrinking perturbation: the unexplained part of the
        // b-response is quadratic in ‖b′ − b‖.
        let dir = DVector::from_vec(vec![1.0, -1.0, 0.0]);
        let pert = |e: f64| -> DVector<f64> {
            let b1 = lp.b() + e * &dir;
            expansion_residual(&lp, &pen, r, &b1, &oracle).unwrap() - &res_r
        };
        let d1 = pert(1e-3);
        let d2 = pert(5e-4);
        let order_b = (d1.amax() / d2.amax()).log2();
        assert!(order_b >= 1.8, "perturbation order {order_b:.2}");
    }
}
