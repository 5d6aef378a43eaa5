//! Two-phase revised simplex with an explicitly maintained basis inverse.
//!
//! Scope: dense desk-scale problems (k up to a few hundred rows). Phase 1
//! introduces one artificial variable per row and minimizes their sum;
//! phase 2 optimizes the true cost from the feasible basis. The basis
//! inverse is updated in product form at each pivot and refactorized from
//! scratch periodically to keep roundoff in check. Pricing is Dantzig's
//! rule until a run of degenerate pivots is detected, after which Bland's
//! rule takes over to rule out cycling.

use nalgebra::{DMatrix, DVector};

use super::{LpError, LpStatus};

/// Tunables for the simplex driver. The defaults match the library-wide
/// tolerances: 1e-9 feasibility/optimality, 1e-7 pivot stability floor.
#[derive(Debug, Clone)]
pub struct SimplexOptions {
    /// Feasibility tolerance (primal residuals, phase-1 objective).
    pub feas_tol: f64,
    /// Optimality tolerance on reduced costs.
    pub opt_tol: f64,
    /// Smallest pivot magnitude accepted by the ratio test.
    pub pivot_floor: f64,
    /// Refactorize the basis inverse after this many product-form updates.
    pub refactor_every: usize,
    /// Switch from Dantzig to Bland pricing after this many consecutive
    /// degenerate pivots.
    pub degenerate_switch: usize,
    /// Hard iteration cap per phase; 0 picks one from the problem size.
    pub max_iters: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        SimplexOptions {
            feas_tol: 1e-9,
            opt_tol: 1e-9,
            pivot_floor: 1e-7,
            refactor_every: 64,
            degenerate_switch: 24,
            max_iters: 0,
        }
    }
}

/// Raw result of a simplex run, in the coordinates of the original
/// (unflipped) problem.
#[derive(Debug, Clone)]
pub(crate) struct SimplexOutcome {
    pub status: LpStatus,
    pub x: DVector<f64>,
    pub basis: Vec<usize>,
    pub lambda: DVector<f64>,
    pub reduced_costs: DVector<f64>,
    pub objective: f64,
}

enum PhaseResult {
    Optimal,
    Unbounded,
}

/// Solve min ⟨c,x⟩ s.t. Ax = b, x ≥ 0.
pub(crate) fn revised_simplex(
    a0: &DMatrix<f64>,
    b0: &DVector<f64>,
    c: &DVector<f64>,
    opts: &SimplexOptions,
) -> Result<SimplexOutcome, LpError> {
    let k = a0.nrows();
    let m = a0.ncols();
    debug_assert_eq!(b0.len(), k);
    debug_assert_eq!(c.len(), m);

    // Flip rows so the right-hand side is nonnegative; duals are
    // un-flipped on extraction.
    let mut a = a0.clone();
    let mut b = b0.clone();
    let mut sigma = vec![1.0f64; k];
    for i in 0..k {
        if b[i] < 0.0 {
            sigma[i] = -1.0;
            b[i] = -b[i];
            for j in 0..m {
                a[(i, j)] = -a[(i, j)];
            }
        }
    }
    let b_scale = 1.0 + b.amax();

    // Phase 1: [A | I] with unit costs on the artificial block.
    let mut ax = DMatrix::<f64>::zeros(k, m + k);
    ax.view_mut((0, 0), (k, m)).copy_from(&a);
    for i in 0..k {
        ax[(i, m + i)] = 1.0;
    }
    let mut c1 = DVector::<f64>::zeros(m + k);
    for i in 0..k {
        c1[m + i] = 1.0;
    }
    let mut basis: Vec<usize> = (m..m + k).collect();
    let mut binv = DMatrix::<f64>::identity(k, k);

    match optimize(&ax, &b, &c1, &mut basis, &mut binv, m, opts)? {
        PhaseResult::Optimal => {}
        PhaseResult::Unbounded => {
            return Err(LpError::NumericalBreakdown(
                "phase-1 objective reported unbounded; it is bounded below by zero".into(),
            ));
        }
    }

    let xb = &binv * &b;
    let infeasibility: f64 = basis
        .iter()
        .zip(xb.iter())
        .filter(|(j, _)| **j >= m)
        .map(|(_, v)| v.max(0.0))
        .sum();
    if infeasibility > opts.feas_tol * b_scale {
        return Ok(SimplexOutcome {
            status: LpStatus::Infeasible,
            x: DVector::zeros(m),
            basis,
            lambda: DVector::zeros(k),
            reduced_costs: DVector::zeros(m),
            objective: f64::NAN,
        });
    }

    // Drive any remaining artificial variables (basic at level zero) out of
    // the basis so phase 2 works on original columns only.
    let mut in_basis = vec![false; m];
    for &j in &basis {
        if j < m {
            in_basis[j] = true;
        }
    }
    for i in 0..k {
        if basis[i] >= m {
            let brow = binv.row(i).transpose().into_owned();
            let mut best: Option<(usize, f64)> = None;
            for j in 0..m {
                if in_basis[j] {
                    continue;
                }
                let v = a.column(j).dot(&brow);
                if v.abs() > best.map_or(opts.pivot_floor, |(_, bv)| bv) {
                    best = Some((j, v.abs()));
                }
            }
            let Some((j, _)) = best else {
                return Err(LpError::NumericalBreakdown(format!(
                    "cannot drive artificial variable out of row {i}: the row is \
                     numerically dependent on the others"
                )));
            };
            let w = &binv * a.column(j);
            product_form_update(&mut binv, &w, i);
            basis[i] = j;
            in_basis[j] = true;
        }
    }

    // Phase 2 on the original columns.
    refactorize(&a, &basis, &mut binv)?;
    let status = match optimize(&a, &b, c, &mut basis, &mut binv, m, opts)? {
        PhaseResult::Optimal => LpStatus::Optimal,
        PhaseResult::Unbounded => LpStatus::Unbounded,
    };
    if status == LpStatus::Unbounded {
        return Ok(SimplexOutcome {
            status,
            x: DVector::zeros(m),
            basis,
            lambda: DVector::zeros(k),
            reduced_costs: DVector::zeros(m),
            objective: f64::NEG_INFINITY,
        });
    }

    // Clean extraction from a freshly factorized basis.
    refactorize(&a, &basis, &mut binv)?;
    let xb = &binv * &b;
    let mut x = DVector::<f64>::zeros(m);
    for (i, &j) in basis.iter().enumerate() {
        x[j] = xb[i];
    }
    let cb = DVector::from_iterator(k, basis.iter().map(|&j| c[j]));
    let lambda_flipped = binv.transpose() * cb;
    let mut lambda = lambda_flipped;
    for i in 0..k {
        lambda[i] *= sigma[i];
    }
    let mut reduced_costs = DVector::<f64>::zeros(m);
    for j in 0..m {
        reduced_costs[j] = c[j] - a0.column(j).dot(&lambda);
    }

    // Certify the claimed optimum instead of trusting the pivot sequence.
    let primal_res = (a0 * &x - b0).amax();
    let x_min = x.min();
    let mut in_basis = vec![false; m];
    for &j in &basis {
        in_basis[j] = true;
    }
    let worst_reduced = (0..m)
        .filter(|j| !in_basis[*j])
        .map(|j| reduced_costs[j])
        .fold(f64::INFINITY, f64::min);
    if primal_res > opts.feas_tol * b_scale
        || x_min < -opts.feas_tol * b_scale
        || worst_reduced < -opts.opt_tol * (1.0 + c.amax())
    {
        return Err(LpError::NumericalBreakdown(format!(
            "optimality certificate failed: primal residual {primal_res:.3e}, \
             min x {x_min:.3e}, min nonbasic reduced cost {worst_reduced:.3e}"
        )));
    }

    let objective = c.dot(&x);
    Ok(SimplexOutcome { status, x, basis, lambda, reduced_costs, objective })
}

/// Run pivots until optimality or unboundedness. Columns `>= allowed`
/// (the artificial block) are never priced back in.
fn optimize(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    c: &DVector<f64>,
    basis: &mut [usize],
    binv: &mut DMatrix<f64>,
    allowed: usize,
    opts: &SimplexOptions,
) -> Result<PhaseResult, LpError> {
    let k = a.nrows();
    let mut in_basis = vec![false; a.ncols()];
    for &j in basis.iter() {
        in_basis[j] = true;
    }
    let mut bland = false;
    let mut degen_streak = 0usize;
    let mut since_refactor = 0usize;
    let max_iters = if opts.max_iters == 0 { 50 * (a.ncols() + k) + 500 } else { opts.max_iters };

    for _ in 0..max_iters {
        let xb = &*binv * b;
        let cb = DVector::from_iterator(k, basis.iter().map(|&j| c[j]));
        let lambda = binv.transpose() * cb;

        let mut entering: Option<usize> = None;
        let mut best = -opts.opt_tol;
        for j in 0..allowed {
            if in_basis[j] {
                continue;
            }
            let dj = c[j] - a.column(j).dot(&lambda);
            if bland {
                if dj < -opts.opt_tol {
                    entering = Some(j);
                    break;
                }
            } else if dj < best {
                best = dj;
                entering = Some(j);
            }
        }
        let Some(e) = entering else {
            return Ok(PhaseResult::Optimal);
        };

        let w = &*binv * a.column(e);
        let mut leave: Option<usize> = None;
        let mut theta = f64::INFINITY;
        for i in 0..k {
            if w[i] > opts.pivot_floor {
                let ratio = xb[i].max(0.0) / w[i];
                let take = match leave {
                    None => true,
                    Some(l) => {
                        ratio < theta - 1e-12
                            || (ratio < theta + 1e-12
                                && if bland { basis[i] < basis[l] } else { w[i] > w[l] })
                    }
                };
                if take {
                    leave = Some(i);
                    theta = ratio;
                }
            }
        }
        let Some(l) = leave else {
            return Ok(PhaseResult::Unbounded);
        };

        if theta < opts.feas_tol {
            degen_streak += 1;
            if degen_streak >= opts.degenerate_switch {
                bland = true;
            }
        } else {
            degen_streak = 0;
        }

        product_form_update(binv, &w, l);
        in_basis[basis[l]] = false;
        in_basis[e] = true;
        basis[l] = e;

        since_refactor += 1;
        if since_refactor >= opts.refactor_every {
            refactorize(a, basis, binv)?;
            since_refactor = 0;
        }
    }
    Err(LpError::NumericalBreakdown(format!(
        "simplex failed to converge within {max_iters} pivots"
    )))
}

/// Replace row `l` of the inverse after the entering column (with
/// transformed coordinates `w = B⁻¹·a_e`) takes over that basis slot:
/// B_new⁻¹ = E·B⁻¹ with E the elementary eta matrix for (w, l).
fn product_form_update(binv: &mut DMatrix<f64>, w: &DVector<f64>, l: usize) {
    let k = binv.nrows();
    let wl = w[l];
    for c in 0..k {
        binv[(l, c)] /= wl;
    }
    for i in 0..k {
        if i == l {
            continue;
        }
        let wi = w[i];
        if wi != 0.0 {
            for c in 0..k {
                binv[(i, c)] -= wi * binv[(l, c)];
            }
        }
    }
}

fn refactorize(a: &DMatrix<f64>, basis: &[usize], binv: &mut DMatrix<f64>) -> Result<(), LpError> {
    let k = a.nrows();
    let mut bmat = DMatrix::<f64>::zeros(k, k);
    for (i, &j) in basis.iter().enumerate() {
        bmat.set_column(i, &a.column(j));
    }
    match bmat.try_inverse() {
        Some(inv) => {
            *binv = inv;
            Ok(())
        }
        None => Err(LpError::NumericalBreakdown(
            "basis matrix became numerically singular during refactorization".into(),
        )),
    }
}
