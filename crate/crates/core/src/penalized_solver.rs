//! Newton solvers for the penalized program
//! min ⟨c,x⟩ + r·Σᵢ p(−xᵢ/r) subject to Ax = b.
//!
//! The workhorse is Newton ascent on the smooth unconstrained dual
//! g(λ) = ⟨b,λ⟩ − r·Σᵢ q(ηᵢ) with η = c − Aᵀλ: the dual lives in k ≪ m
//! dimensions, its gradient b − Ax(λ) is exactly the primal residual of
//! the recovered point x(λ) = −r·q′(η), and its Hessian
//! −r·A·diag(q″(η))·Aᵀ is assembled in O(nnz) from the sparse column
//! pattern of A.
//!
//! Deep in the vertex regime (solution entries much larger than r) the
//! full-domain penalties need reduced costs like e^{−x/r} that are far
//! below the roundoff of the difference c − Aᵀλ, so no dual iterate can
//! represent them. For那 regime a primal null-space Newton path (x = x₀ +
//! Z·v on the feasible affine subspace) solves the same program in
//! coordinates where the small quantities appear only as benign
//! underflow. Method selection is automatic and can be forced through
//! [`SolverOptions::method`].

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{solve_spd_damped, CscPattern};
use crate::lp_core::simplex::{revised_simplex, SimplexOptions};
use crate::lp_core::{strict_feasible_point, LpError, LpStatus, StandardFormLP};
use crate::penalty::PenaltySpec;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(
        "no strictly dual-feasible starting point exists (best margin {margin:.3e}); \
         the penalized program is unbounded below"
    )]
    DualInfeasibleStart { margin: f64 },
    #[error("solver diverged: {0}")]
    Diverged(String),
    #[error("domain violation: {0}")]
    DomainViolation(String),
    #[error("solve failed at r = {r:.6e}: {source}")]
    PathEntry { r: f64, source: Box<SolverError> },
    #[error("auxiliary problem failed: {0}")]
    Auxiliary(#[from] LpError),
}

/// Which Newton path to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    /// Dual Newton, with a primal fallback for full-domain penalties in
    /// the deep-vertex regime.
    Auto,
    /// Dual Newton only.
    Dual,
    /// Primal null-space Newton only.
    Primal,
}

#[derive(Debug, Clone)]
pub struct SolverOptions {
    /// Newton-decrement and (scaled) primal-residual tolerance.
    pub tol: f64,
    /// Maximum Newton iterations.
    pub max_iter: usize,
    /// Fraction-to-boundary factor keeping η (dual) or x (barrier primal)
    /// strictly interior; in (0,1).
    pub fraction_to_boundary: f64,
    /// Optional dual warm start; used by the dual path when strictly
    /// feasible, silently replaced by a computed start otherwise.
    pub warm_start: Option<Vec<f64>>,
    pub method: SolveMethod,
    /// Record (dual objective, duality gap) per iteration (dual path).
    pub record_trace: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-10,
            max_iter: 200,
            fraction_to_boundary: 0.95,
            warm_start: None,
            method: SolveMethod::Auto,
            record_trace: false,
        }
    }
}

/// Solution of the penalized program at strength r.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PenalizedSolution {
    /// Primal point, identically −r·q′(η) entrywise.
    pub x: Vec<f64>,
    /// Dual multipliers of Ax = b.
    pub lambda: Vec<f64>,
    /// Reduced costs c − Aᵀλ, kept as their own vector: in the
    /// deep-vertex regime they carry information far below the roundoff
    /// of the subtraction.
    pub eta: Vec<f64>,
    /// Penalty strength used.
    pub r: f64,
    /// Newton iterations performed.
    pub iterations: usize,
    /// ‖Ax − b‖∞ of the returned x.
    pub primal_residual: f64,
    /// Final Newton decrement.
    pub newton_decrement: f64,
    /// Whether the dual path produced the result.
    pub dual_path: bool,
    /// Optional per-iteration (dual objective, duality gap) log.
    pub trace: Vec<(f64, f64)>,
}

impl PenalizedSolution {
    pub fn x_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.x)
    }

    pub fn lambda_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.lambda)
    }

    pub fn eta_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.eta)
    }
}

/// Magnitude at which a primal iterate is declared divergent.
const X_CLIP: f64 = 1e12;
/// b-to-r ratio above which a full-domain penalty is routed to the primal
/// path: beyond it the dual reduced costs drown in cancellation noise.
const DEEP_VERTEX_RATIO: f64 = 30.0;

/// Solve the penalized program. See the module docs for the method
/// selection rules.
pub fn solve_penalized(
    lp: &StandardFormLP,
    pen: &PenaltySpec,
    r: f64,
    opts: &SolverOptions,
) -> Result<PenalizedSolution, SolverError> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(SolverError::DomainViolation(format!(
            "penalty strength must be positive and finite, got {r}"
        )));
    }
    match opts.method {
        SolveMethod::Dual => dual_newton(lp, pen, r, opts),
        SolveMethod::Primal => primal_newton(lp, pen, r, opts),
        SolveMethod::Auto => {
            let deep = pen.full_domain() && lp.b().amax() / r > DEEP_VERTEX_RATIO;
            if deep {
                return primal_newton(lp, pen, r, opts);
            }
            match dual_newton(lp, pen, r, opts) {
                Ok(sol) => Ok(sol),
                Err(SolverError::DualInfeasibleStart { .. }) if pen.full_domain() => {
                    // The dual polytope may have empty interior while the
                    // full-domain primal is still well posed only if the
                    // program is unbounded; let the primal path decide.
                    primal_newton(lp, pen, r, opts)
                }
                Err(SolverError::Diverged(_)) | Err(SolverError::DomainViolation(_))
                    if pen.full_domain() =>
                {
                    primal_newton(lp, pen, r, opts)
                }
                Err(e) => Err(e),
            }
        }
    }
}

/// A strictly dual-feasible starting point: λ₀ with c − Aᵀλ₀ > 0.
///
/// Cascade: λ₀ = 0 whenever min c > 0 (margin = min c); otherwise a
/// least-squares probe λ = (AAᵀ)⁻¹A(c − δ·1) over a few shifts δ (the
/// residual c − Aᵀλ = P_ker(A)(c − δ1) + δ1 is often uniformly positive);
/// finally the margin linear program max s s.t. c − Aᵀλ ≥ s·1, s ≤ 1.
/// Errors when the best achievable margin is not strictly positive —
/// there is then no interior dual point and the penalized program is
/// unbounded below.
pub fn dual_feasible_start(
    lp: &StandardFormLP,
    _pen: &PenaltySpec,
) -> Result<DVector<f64>, SolverError> {
    feasible_start_with_margin(lp).map(|(lambda, _)| lambda)
}

fn feasible_start_with_margin(lp: &StandardFormLP) -> Result<(DVector<f64>, f64), SolverError> {
    let k = lp.k();
    let c = lp.c();
    let cmin = c.min();
    if cmin > 0.0 {
        return Ok((DVector::zeros(k), cmin));
    }

    let scale = 1.0 + c.amax();
    let csc = CscPattern::from_dense(lp.a());
    let gram = csc.weighted_gram(&DVector::from_element(lp.m(), 1.0));
    if let Some(chol) = nalgebra::Cholesky::new(gram) {
        for eps in [0.5, 1.0, 0.1, 2.0, 0.01] {
            let delta = eps * scale;
            let shifted = c - DVector::from_element(lp.m(), delta);
            let lambda = chol.solve(&csc.mul_vec(&shifted));
            let eta = c - csc.tr_mul_vec(&lambda);
            let margin = eta.min();
            if margin >= 1e-7 * scale {
                return Ok((lambda, margin));
            }
        }
    }
    margin_lp(lp)
}

/// max s s.t. Aᵀλ + s·1 + v = c, v ≥ 0, s ≤ 1 — in standard form with
/// λ = λ⁺ − λ⁻ and s = s⁺ − s⁻.
fn margin_lp(lp: &StandardFormLP) -> Result<(DVector<f64>, f64), SolverError> {
    let k = lp.k();
    let m = lp.m();
    let ncols = 2 * k + 2 + m + 1;
    let mut a = nalgebra::DMatrix::<f64>::zeros(m + 1, ncols);
    for j in 0..m {
        for i in 0..k {
            let v = lp.a()[(i, j)];
            a[(j, i)] = v;
            a[(j, k + i)] = -v;
        }
        a[(j, 2 * k)] = 1.0;
        a[(j, 2 * k + 1)] = -1.0;
        a[(j, 2 * k + 2 + j)] = 1.0;
    }
    a[(m, 2 * k)] = 1.0;
    a[(m, ncols - 1)] = 1.0;
    let mut b = DVector::<f64>::zeros(m + 1);
    for j in 0..m {
        b[j] = lp.c()[j];
    }
    b[m] = 1.0;
    let mut cost = DVector::<f64>::zeros(ncols);
    cost[2 * k] = -1.0;
    cost[2 * k + 1] = 1.0;

    let out = revised_simplex(&a, &b, &cost, &SimplexOptions::default())?;
    if out.status != LpStatus::Optimal {
        return Err(SolverError::Diverged(format!(
            "margin program ended with status {}",
            out.status
        )));
    }
    let margin = out.x[2 * k] - out.x[2 * k + 1];
    if margin <= 1e-9 * (1.0 + lp.c().amax()) {
        return Err(SolverError::DualInfeasibleStart { margin });
    }
    let lambda = DVector::from_iterator(k, (0..k).map(|i| out.x[i] - out.x[k + i]));
    Ok((lambda, margin))
}

/// Warm-started continuation along a strictly decreasing list of penalty
/// strengths; each solve starts from the previous dual point. Failures
/// are tagged with the r at which they occurred.
pub fn solve_path(
    lp: &StandardFormLP,
    pen: &PenaltySpec,
    r_list: &[f64],
    opts: &SolverOptions,
) -> Result<Vec<PenalizedSolution>, SolverError> {
    for w in r_list.windows(2) {
        if !(w[1] < w[0]) {
            return Err(SolverError::DomainViolation(format!(
                "r_list must be strictly decreasing, got {} before {}",
                w[0], w[1]
            )));
        }
    }
    let mut solutions = Vec::with_capacity(r_list.len());
    let mut current = opts.clone();
    for &r in r_list {
        let sol = solve_penalized(lp, pen, r, &current)
            .map_err(|e| SolverError::PathEntry { r, source: Box::new(e) })?;
        current.warm_start = Some(sol.lambda.clone());
        solutions.push(sol);
    }
    Ok(solutions)
}

/// Duality gap f_r(x) − (⟨b,λ⟩ − r·Σq(η)) of a solution. Nonnegative up
/// to the feasibility residual of x; near zero certifies optimality.
pub fn duality_gap(
    lp: &StandardFormLP,
    pen: &PenaltySpec,
    r: f64,
    sol: &PenalizedSolution,
) -> f64 {
    let x = sol.x_vector();
    let primal = lp.c().dot(&x) + r * sol.x.iter().map(|&xi| pen.p(-xi / r)).sum::<f64>();
    let dual = lp.b().dot(&sol.lambda_vector())
        - r * sol.eta.iter().map(|&e| pen.q(e)).sum::<f64>();
    primal - dual
}

fn primal_objective(lp: &StandardFormLP, pen: &PenaltySpec, r: f64, x: &DVector<f64>) -> f64 {
    lp.c().dot(x) + r * x.iter().map(|&xi| pen.p(-xi / r)).sum::<f64>()
}

// ---------------------------------------------------------------------------
// Dual Newton path
// ---------------------------------------------------------------------------

fn dual_newton(
    lp: &StandardFormLP,
    pen: &PenaltySpec,
    r: f64,
    opts: &SolverOptions,
) -> Result<PenalizedSolution, SolverError> {
    let k = lp.k();
    let m = lp.m();
    let b = lp.b();
    let c = lp.c();
    let csc = CscPattern::from_dense(lp.a());
    let b_scale = 1.0 + b.amax();

    let mut lambda = match &opts.warm_start {
        Some(l0) if l0.len() == k => {
            let cand = DVector::from_column_slice(l0);
            let eta = c - csc.tr_mul_vec(&cand);
            if eta.min() > 0.0 {
                cand
            } else {
                feasible_start_with_margin(lp)?.0
            }
        }
        _ => feasible_start_with_margin(lp)?.0,
    };
    let mut eta = c - csc.tr_mul_vec(&lambda);
    debug_assert!(eta.min() > 0.0);

    let dual_objective = |lambda: &DVector<f64>, eta: &DVector<f64>| -> f64 {
        b.dot(lambda) - r * eta.iter().map(|&e| pen.q(e)).sum::<f64>()
    };

    let mut trace = Vec::new();
    let mut decrement = f64::INFINITY;
    for it in 0..opts.max_iter {
        let x = eta.map(|e| -r * pen.q_prime(e));
        if x.amax() > X_CLIP {
            return Err(SolverError::Diverged(format!(
                "primal recovery exceeded {X_CLIP:.0e} at iteration {it}"
            )));
        }
        let grad = b - csc.mul_vec(&x);
        let weights = eta.map(|e| r * pen.q_second(e));
        let hess = csc.weighted_gram(&weights);
        let Some((delta, _)) = solve_spd_damped(&hess, &grad) else {
            return Err(SolverError::Diverged(
                "dual Hessian could not be factorized even with damping".into(),
            ));
        };
        decrement = grad.dot(&delta).max(0.0).sqrt();
        let primal_res = grad.amax();

        if opts.record_trace {
            let g0 = dual_objective(&lambda, &eta);
            let f0 = primal_objective(lp, pen, r, &x);
            trace.push((g0, f0 - g0));
        }

        if decrement <= opts.tol && primal_res <= opts.tol * b_scale {
            // One guarded extra step before reporting: at the local quadratic
            // rate this drives the equality residual — and with it the
            // duality-gap certificate, which equals ⟨Ax − b, λ⟩ at a recovered
            // primal point — from ~tol down toward machine precision.
            let a_delta = csc.tr_mul_vec(&delta);
            let mut alpha: f64 = 1.0;
            for i in 0..m {
                if a_delta[i] > 0.0 {
                    alpha = alpha.min(opts.fraction_to_boundary * eta[i] / a_delta[i]);
                }
            }
            let eta_try = &eta - alpha * &a_delta;
            if eta_try.min() > 0.0 {
                let lambda_try = &lambda + alpha * &delta;
                let g0 = dual_objective(&lambda, &eta);
                if dual_objective(&lambda_try, &eta_try) >= g0 - 1e-12 * (1.0 + g0.abs()) {
                    lambda = lambda_try;
                    eta = eta_try;
                }
            }
            return finish_dual(lp, pen, r, &csc, lambda, eta, it, decrement, trace);
        }

        // η moves along −Aᵀδ: fraction-to-boundary keeps it interior.
        let a_delta = csc.tr_mul_vec(&delta);
        let mut alpha: f64 = 1.0;
        for i in 0..m {
            if a_delta[i] > 0.0 {
                alpha = alpha.min(opts.fraction_to_boundary * eta[i] / a_delta[i]);
            }
        }
        let g0 = dual_objective(&lambda, &eta);
        let slope = grad.dot(&delta);
        // Near the floor the predicted gain 1e-4·α·slope drops below one
        // ulp of g, and a strict Armijo test would reject the (perfectly
        // good) full step over rounding noise; the slack keeps the test
        // meaningful exactly until improvement stops being representable.
        let g_slack = 4.0 * f64::EPSILON * (1.0 + g0.abs());
        let mut accepted = false;
        while alpha >= 1e-14 {
            let eta_try = &eta - alpha * &a_delta;
            if eta_try.min() > 0.0 {
                let lambda_try = &lambda + alpha * &delta;
                let g_try = dual_objective(&lambda_try, &eta_try);
                if g_try >= g0 + 1e-4 * alpha * slope - g_slack {
                    lambda = lambda_try;
                    eta = eta_try;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            return Err(SolverError::DomainViolation(format!(
                "line search collapsed at iteration {it} (dual objective cannot improve while \
                 keeping reduced costs positive)"
            )));
        }
    }
    Err(SolverError::Diverged(format!(
        "dual Newton did not converge in {} iterations (last decrement {decrement:.3e})",
        opts.max_iter
    )))
}

#[allow(clippy::too_many_arguments)]
fn finish_dual(
    lp: &StandardFormLP,
    pen: &PenaltySpec,
    r: f64,
    csc: &CscPattern,
    lambda: DVector<f64>,
    eta_inc: DVector<f64>,
    iterations: usize,
    newton_decrement: f64,
    trace: Vec<(f64, f64)>,
) -> Result<PenalizedSolution, SolverError> {
    // Prefer the literal reduced costs c − Aᵀλ when they are still
    // strictly positive; keep the incrementally tracked η otherwise
    // (identical in exact arithmetic, immune to subtractive cancellation).
    let eta_re = lp.c() - csc.tr_mul_vec(&lambda);
    let eta = if eta_re.min() > 0.0 { eta_re } else { eta_inc };
    let x = eta.map(|e| -r * pen.q_prime(e));
    let primal_residual = (csc.mul_vec(&x) - lp.b()).amax();
    Ok(PenalizedSolution {
        x: x.as_slice().to_vec(),
        lambda: lambda.as_slice().to_vec(),
        eta: eta.as_slice().to_vec(),
        r,
        iterations,
        primal_residual,
        newton_decrement,
        dual_path: true,
        trace,
    })
}

// ---------------------------------------------------------------------------
// Primal null-space path
// ---------------------------------------------------------------------------

fn primal_newton(
    lp: &StandardFormLP,
    pen: &PenaltySpec,
    r: f64,
    opts: &SolverOptions,
) -> Result<PenalizedSolution, SolverError> {
    let m = lp.m();
    let b_scale = 1.0 + lp.b().amax();
    let csc = CscPattern::from_dense(lp.a());
    let z = crate::lp_core::null_space_basis(lp.a())?;
    let dim = z.ncols();

    let mut x = strict_feasible_point(lp).map_err(|e| match e {
        LpError::NoStrictInterior { margin } => SolverError::DomainViolation(format!(
            "the feasible region has no strict interior (margin {margin:.3e}); \
             the penalized program requires one"
        )),
        other => SolverError::Auxiliary(other),
    })?;

    let barrier = !pen.full_domain();
    let mut decrement = f64::INFINITY;
    let mut iterations = 0;

    if dim > 0 {
        for it in 0..opts.max_iter {
            iterations = it;
            let grad_x = lp.c() - x.map(|xi| pen.p_prime(-xi / r));
            let gv = z.transpose() * &grad_x;
            // Reduced Hessian Zᵀ·diag(p″(−x/r)/r)·Z via row scaling.
            let mut zs = z.clone();
            for i in 0..m {
                let d = (pen.p_second(-x[i] / r) / r).sqrt();
                for j in 0..dim {
                    zs[(i, j)] *= d;
                }
            }
            let hv = zs.transpose() * &zs;
            let Some((dsol, _)) = solve_spd_damped(&hv, &gv) else {
                return Err(SolverError::Diverged(
                    "reduced primal Hessian could not be factorized even with damping".into(),
                ));
            };
            decrement = gv.dot(&dsol).max(0.0).sqrt();
            if decrement <= opts.tol {
                break;
            }
            let mut dx = -(&z * &dsol);
            // Far from the solution the full-domain penalties flatten out
            // and the Newton model produces absurdly long steps; cap the
            // step so the line search works with a usable direction. Near
            // convergence the cap is inactive and quadratic convergence is
            // untouched.
            let cap = 100.0 * (1.0 + x.amax());
            let len = dx.amax();
            let scale = if len > cap { cap / len } else { 1.0 };
            if scale < 1.0 {
                dx *= scale;
            }

            let mut alpha: f64 = 1.0;
            if barrier {
                for i in 0..m {
                    if dx[i] < 0.0 {
                        alpha = alpha.min(opts.fraction_to_boundary * x[i] / (-dx[i]));
                    }
                }
            }
            let f0 = primal_objective(lp, pen, r, &x);
            let slope = -gv.dot(&dsol) * scale;
            // Same rounding-level slack as the dual search: once the
            // predicted decrease falls under one ulp of f, sufficient
            // decrease cannot be measured and must not be demanded.
            let f_slack = 4.0 * f64::EPSILON * (1.0 + f0.abs());
            let mut accepted = false;
            while alpha >= 1e-14 {
                let x_try = &x + alpha * &dx;
                let f_try = primal_objective(lp, pen, r, &x_try);
                if f_try <= f0 + 1e-4 * alpha * slope + f_slack {
                    x = x_try;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                return Err(SolverError::DomainViolation(format!(
                    "primal line search collapsed at iteration {it}"
                )));
            }
            if x.amax() > X_CLIP {
                return Err(SolverError::Diverged(format!(
                    "primal iterate exceeded {X_CLIP:.0e} at iteration {it}"
                )));
            }
        }
        if decrement > opts.tol {
            return Err(SolverError::Diverged(format!(
                "primal Newton did not converge in {} iterations (last decrement {decrement:.3e})",
                opts.max_iter
            )));
        }
    } else {
        // k = m: the feasible point is unique, nothing to optimize.
        decrement = 0.0;
    }

    let eta = x.map(|xi| pen.p_prime(-xi / r));
    if eta.min() <= 0.0 || !eta.iter().all(|e| e.is_finite()) {
        return Err(SolverError::Diverged(
            "reduced costs underflowed or overflowed: r is too extreme relative to the \
             solution scale"
                .into(),
        ));
    }
    // Exactify the primal-recovery identity x = −r·q′(η).
    let x = eta.map(|e| -r * pen.q_prime(e));
    let primal_residual = (csc.mul_vec(&x) - lp.b()).amax();
    if primal_residual > 10.0 * opts.tol.max(1e-12) * b_scale {
        return Err(SolverError::Diverged(format!(
            "primal residual {primal_residual:.3e} after convergence exceeds tolerance"
        )));
    }

    // Least-squares multipliers: Aᵀλ ≈ c − η.
    let gram = csc.weighted_gram(&DVector::from_element(m, 1.0));
    let lambda = match nalgebra::Cholesky::new(gram) {
        Some(chol) => chol.solve(&csc.mul_vec(&(lp.c() - &eta))),
        None => DVector::zeros(lp.k()),
    };

    Ok(PenalizedSolution {
        x: x.as_slice().to_vec(),
        lambda: lambda.as_slice().to_vec(),
        eta: eta.as_slice().to_vec(),
        r,
        iterations,
        primal_residual,
        newton_decrement: decrement,
        dual_path: false,
        trace: Vec::new(),
    })
}
