//! Optimal-transport and flow front-ends: problem builders, the entropic
//! (Sinkhorn) baseline, colocalization curves, and demand rebalancing.
//!
//! Everything here reduces to a [`StandardFormLP`] or consumes a plan
//! produced by one.  The constructions pin down conventions that the
//! math leaves implicit — row-major flattening of plans, which redundant
//! marginal constraint is dropped, how empirical supports are restricted
//! and re-embedded — so that bases, duals, and serialized plans are
//! reproducible.

pub mod pgm;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::lp_core::{check_assumptions, solve_lp, LpError, StandardFormLP};

/// Marginal vectors must sit on the probability simplex this tightly.
const MARGINAL_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("net demand sums to {sum:.3e}, not 0: rebalancing is infeasible")]
    UnbalancedDemand { sum: f64 },
    #[error(
        "Sinkhorn did not reach marginal residual {tol:.1e} in {iterations} iterations \
         (residual {residual:.3e}); lambda may be too small"
    )]
    NonConvergence {
        iterations: usize,
        residual: f64,
        tol: f64,
    },
    #[error(transparent)]
    Lp(#[from] LpError),
}

// ---------------------------------------------------------------------------
// Discrete optimal transport
// ---------------------------------------------------------------------------

/// A discrete transport problem: move mass `t` onto mass `s` at cost
/// `cost[(i, j)]` per unit moved from source atom `i` to target atom `j`.
#[derive(Debug, Clone)]
pub struct OtProblem {
    t: Vec<f64>,
    s: Vec<f64>,
    cost: DMatrix<f64>,
}

fn check_marginal(name: &str, v: &[f64]) -> Result<(), TransportError> {
    if v.is_empty() {
        return Err(TransportError::InvalidData(format!("{name} is empty")));
    }
    if v.iter().any(|&x| !x.is_finite() || x < 0.0) {
        return Err(TransportError::InvalidData(format!(
            "{name} has a negative or non-finite entry"
        )));
    }
    let sum: f64 = v.iter().sum();
    if (sum - 1.0).abs() > MARGINAL_TOL {
        return Err(TransportError::InvalidData(format!(
            "{name} sums to {sum} (must be 1 within {MARGINAL_TOL:.0e})"
        )));
    }
    Ok(())
}

impl OtProblem {
    pub fn new(t: Vec<f64>, s: Vec<f64>, cost: DMatrix<f64>) -> Result<Self, TransportError> {
        check_marginal("t", &t)?;
        check_marginal("s", &s)?;
        if cost.nrows() != t.len() || cost.ncols() != s.len() {
            return Err(TransportError::InvalidData(format!(
                "cost is {}×{} but marginals have lengths {} and {}",
                cost.nrows(),
                cost.ncols(),
                t.len(),
                s.len()
            )));
        }
        if cost.iter().any(|x| !x.is_finite()) {
            return Err(TransportError::InvalidData(
                "cost matrix has a non-finite entry".into(),
            ));
        }
        Ok(OtProblem { t, s, cost })
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }

    pub fn s(&self) -> &[f64] {
        &self.s
    }

    pub fn cost(&self) -> &DMatrix<f64> {
        &self.cost
    }

    /// Source and target support sizes.
    pub fn shape(&self) -> (usize, usize) {
        (self.t.len(), self.s.len())
    }

    /// Drops zero-mass atoms from both marginals; mass can only be
    /// transported between the supports.  The returned maps re-embed
    /// restricted plans into the original index set.
    pub fn restrict_support(&self) -> SupportRestriction {
        let source: Vec<usize> = (0..self.t.len()).filter(|&i| self.t[i] > 0.0).collect();
        let target: Vec<usize> = (0..self.s.len()).filter(|&j| self.s[j] > 0.0).collect();
        let t: Vec<f64> = source.iter().map(|&i| self.t[i]).collect();
        let s: Vec<f64> = target.iter().map(|&j| self.s[j]).collect();
        let mut cost = DMatrix::zeros(source.len(), target.len());
        for (ri, &i) in source.iter().enumerate() {
            for (rj, &j) in target.iter().enumerate() {
                cost[(ri, rj)] = self.cost[(i, j)];
            }
        }
        SupportRestriction {
            problem: OtProblem { t, s, cost },
            source,
            target,
            full_shape: self.shape(),
        }
    }
}

/// A support-restricted problem together with the index maps back into
/// the full atom sets.
#[derive(Debug, Clone)]
pub struct SupportRestriction {
    pub problem: OtProblem,
    /// Restricted source index → original source index.
    pub source: Vec<usize>,
    /// Restricted target index → original target index.
    pub target: Vec<usize>,
    pub full_shape: (usize, usize),
}

impl SupportRestriction {
    /// Places a plan on the restricted supports back into the full grid,
    /// zero everywhere off-support.
    pub fn embed_plan(&self, plan: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(
            (plan.nrows(), plan.ncols()),
            (self.source.len(), self.target.len()),
            "plan shape does not match the restricted supports"
        );
        let mut full = DMatrix::zeros(self.full_shape.0, self.full_shape.1);
        for (ri, &i) in self.source.iter().enumerate() {
            for (rj, &j) in self.target.iter().enumerate() {
                full[(i, j)] = plan[(ri, rj)];
            }
        }
        full
    }
}

/// Reshapes a row-major LP solution vector into a p×q plan matrix.
pub fn plan_from_vector(p: usize, q: usize, x: &[f64]) -> DMatrix<f64> {
    assert_eq!(x.len(), p * q, "solution length does not match plan shape");
    DMatrix::from_row_slice(p, q, x)
}

/// Standard-form LP of a transport problem: row-major plan variables,
/// all `p` source-marginal rows, and the first `q − 1` target-marginal
/// rows (the last one is redundant and dropping it makes the constraint
/// matrix full row rank `p + q − 1`).
pub fn ot_to_lp(prob: &OtProblem) -> StandardFormLP {
    let (p, q) = prob.shape();
    let m = p * q;
    let k = p + q - 1;
    let mut a = DMatrix::zeros(k, m);
    for i in 0..p {
        for j in 0..q {
            a[(i, i * q + j)] = 1.0;
        }
    }
    for j in 0..q - 1 {
        for i in 0..p {
            a[(p + j, i * q + j)] = 1.0;
        }
    }
    let mut b = DVector::zeros(k);
    for i in 0..p {
        b[i] = prob.t[i];
    }
    for j in 0..q - 1 {
        b[p + j] = prob.s[j];
    }
    let mut c = DVector::zeros(m);
    for i in 0..p {
        for j in 0..q {
            c[i * q + j] = prob.cost[(i, j)];
        }
    }
    // Rank p + q − 1 holds by construction (the dropped row is the only
    // dependency), so the expensive numerical rank check is skipped.
    StandardFormLP::new_unchecked(a, b, c)
}

/// Cost matrix of an L×L equispaced grid on [0,1]²: entry (a, b) is the
/// Euclidean distance between grid points a and b raised to `exponent`.
/// Grid points are indexed row-major.
pub fn grid_cost(l: usize, exponent: f64) -> DMatrix<f64> {
    assert!(l >= 1, "grid needs at least one point per side");
    let n = l * l;
    let coord = |idx: usize| -> (f64, f64) {
        let (i, j) = (idx / l, idx % l);
        if l == 1 {
            (0.0, 0.0)
        } else {
            (i as f64 / (l - 1) as f64, j as f64 / (l - 1) as f64)
        }
    };
    let mut c = DMatrix::zeros(n, n);
    for a in 0..n {
        let (xa, ya) = coord(a);
        for b in (a + 1)..n {
            let (xb, yb) = coord(b);
            let d = ((xa - xb).powi(2) + (ya - yb).powi(2)).sqrt().powf(exponent);
            c[(a, b)] = d;
            c[(b, a)] = d;
        }
    }
    c
}

// ---------------------------------------------------------------------------
// Entropic baseline
// ---------------------------------------------------------------------------

/// A Sinkhorn fixed point: strictly positive plan of Gibbs form
/// `diag(u)·exp(−c/λ)·diag(v)` whose marginals match `(t, s)` up to the
/// reported residual.
#[derive(Debug, Clone)]
pub struct EntropicPlan {
    pub plan: DMatrix<f64>,
    pub lambda: f64,
    pub iterations: usize,
    /// ℓ₁ error of both marginals at the returned plan.
    pub marginal_residual: f64,
}

fn log_sum_exp(terms: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = terms.collect();
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

/// Log-domain Sinkhorn scaling.  Marginals must be strictly positive
/// (restrict the support first); convergence is declared when the sum of
/// the ℓ₁ marginal errors falls below `tol`.
pub fn sinkhorn(
    prob: &OtProblem,
    lambda: f64,
    tol: f64,
    max_iter: usize,
) -> Result<EntropicPlan, TransportError> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(TransportError::InvalidData(format!(
            "lambda must be positive and finite, got {lambda}"
        )));
    }
    if prob.t.iter().any(|&x| x == 0.0) || prob.s.iter().any(|&x| x == 0.0) {
        return Err(TransportError::InvalidData(
            "marginals must be strictly positive for Sinkhorn; restrict the support first".into(),
        ));
    }
    let (p, q) = prob.shape();
    let ln_t: Vec<f64> = prob.t.iter().map(|&x| x.ln()).collect();
    let ln_s: Vec<f64> = prob.s.iter().map(|&x| x.ln()).collect();
    // π_ij = exp(φ_i + ψ_j − c_ij/λ)
    let mut phi = vec![0.0f64; p];
    let mut psi = vec![0.0f64; q];
    let kernel = |i: usize, j: usize| -> f64 { -prob.cost[(i, j)] / lambda };

    let mut residual = f64::INFINITY;
    for it in 1..=max_iter {
        for i in 0..p {
            phi[i] = ln_t[i] - log_sum_exp((0..q).map(|j| psi[j] + kernel(i, j)));
        }
        for j in 0..q {
            psi[j] = ln_s[j] - log_sum_exp((0..p).map(|i| phi[i] + kernel(i, j)));
        }
        // After the ψ update the column sums are exact; measure both.
        let mut row_err = 0.0;
        let mut col = vec![0.0f64; q];
        for i in 0..p {
            let mut row = 0.0;
            for j in 0..q {
                let pij = (phi[i] + psi[j] + kernel(i, j)).exp();
                row += pij;
                col[j] += pij;
            }
            row_err += (row - prob.t[i]).abs();
        }
        let col_err: f64 = (0..q).map(|j| (col[j] - prob.s[j]).abs()).sum();
        residual = row_err + col_err;
        if residual <= tol {
            let plan =
                DMatrix::from_fn(p, q, |i, j| (phi[i] + psi[j] + kernel(i, j)).exp());
            return Ok(EntropicPlan {
                plan,
                lambda,
                iterations: it,
                marginal_residual: residual,
            });
        }
    }
    Err(TransportError::NonConvergence {
        iterations: max_iter,
        residual,
        tol,
    })
}

/// One row of an entropic bias profile.
#[derive(Debug, Clone, Copy)]
pub struct EntropicBiasRow {
    pub lambda: f64,
    /// ‖π_λ − π*‖∞ against the exact (unregularized) plan.
    pub sup_error: f64,
    /// λ·ln(1/sup_error): bounded away from 0 and ∞ when the error
    /// decays exponentially in 1/λ.
    pub rate: f64,
}

/// Measures how fast the entropic plan approaches the exact one as λ
/// shrinks.  Requires the exact plan to be unique.
pub fn entropic_bias_profile(
    prob: &OtProblem,
    lambdas: &[f64],
) -> Result<Vec<EntropicBiasRow>, TransportError> {
    let lp = ot_to_lp(prob);
    let report = check_assumptions(&lp);
    if !report.unique_solution_ok {
        return Err(TransportError::InvalidData(
            "exact plan is not certified unique; the bias profile has no target".into(),
        ));
    }
    let sol = solve_lp(&lp)?;
    let (p, q) = prob.shape();
    let star = plan_from_vector(p, q, &sol.x);
    let mut rows = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let ent = sinkhorn(prob, lambda, 1e-12, 200_000)?;
        let sup_error = (&ent.plan - &star).amax();
        rows.push(EntropicBiasRow {
            lambda,
            sup_error,
            rate: lambda * (1.0 / sup_error).ln(),
        });
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// Colocalization curves
// ---------------------------------------------------------------------------

/// Mass of a plan sitting at cost at most ξ, as a function of ξ.
#[derive(Debug, Clone)]
pub struct ColocCurve {
    pub xi_grid: Vec<f64>,
    pub values: Vec<f64>,
}

/// Evaluates `Col(ξ) = Σ_{ij} plan_ij·1{cost_ij ≤ ξ}` on a sorted grid
/// of thresholds.  Linear in the plan, which is what lets bootstrap
/// bands transfer to curves.
pub fn colocalization(plan: &DMatrix<f64>, cost: &DMatrix<f64>, xi_grid: &[f64]) -> ColocCurve {
    assert_eq!(plan.shape(), cost.shape(), "plan and cost shapes differ");
    assert!(
        xi_grid.windows(2).all(|w| w[0] <= w[1]),
        "threshold grid must be sorted"
    );
    assert!(
        plan.iter().all(|x| x.is_finite()) && xi_grid.iter().all(|x| x.is_finite()),
        "plan and grid must be finite"
    );
    // Sort (cost, mass) once, prefix-sum, then binary-search each ξ.
    let mut pairs: Vec<(f64, f64)> = cost.iter().cloned().zip(plan.iter().cloned()).collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut cum = Vec::with_capacity(pairs.len());
    let mut acc = 0.0;
    for &(_, mass) in &pairs {
        acc += mass;
        cum.push(acc);
    }
    let values = xi_grid
        .iter()
        .map(|&xi| {
            // Number of entries with cost ≤ ξ.
            let k = pairs.partition_point(|&(c, _)| c <= xi);
            if k == 0 {
                0.0
            } else {
                cum[k - 1]
            }
        })
        .collect();
    ColocCurve {
        xi_grid: xi_grid.to_vec(),
        values,
    }
}

// ---------------------------------------------------------------------------
// Rebalancing flows
// ---------------------------------------------------------------------------

/// Minimum-cost rebalancing: ship flow on the complete digraph so that
/// each node's net outflow matches its imbalance `d_i`.
#[derive(Debug, Clone)]
pub struct FlowProblem {
    d: Vec<f64>,
    cost: DMatrix<f64>,
}

impl FlowProblem {
    pub fn new(d: Vec<f64>, cost: DMatrix<f64>) -> Result<Self, TransportError> {
        let n = d.len();
        if n < 2 {
            return Err(TransportError::InvalidData(
                "rebalancing needs at least two nodes".into(),
            ));
        }
        if d.iter().any(|x| !x.is_finite()) {
            return Err(TransportError::InvalidData(
                "demand vector has a non-finite entry".into(),
            ));
        }
        let sum: f64 = d.iter().sum();
        let scale = 1.0 + d.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
        if sum.abs() > 1e-9 * scale {
            return Err(TransportError::UnbalancedDemand { sum });
        }
        if cost.nrows() != n || cost.ncols() != n {
            return Err(TransportError::InvalidData(format!(
                "cost is {}×{} for {} nodes",
                cost.nrows(),
                cost.ncols(),
                n
            )));
        }
        if cost.iter().any(|x| !x.is_finite()) {
            return Err(TransportError::InvalidData(
                "cost matrix has a non-finite entry".into(),
            ));
        }
        if (0..n).any(|i| cost[(i, i)] != 0.0) {
            return Err(TransportError::InvalidData(
                "cost diagonal must be zero (self-loops carry no cost and are excluded)".into(),
            ));
        }
        Ok(FlowProblem { d, cost })
    }

    pub fn d(&self) -> &[f64] {
        &self.d
    }

    pub fn nodes(&self) -> usize {
        self.d.len()
    }
}

/// Column index of the flow variable i→j (i ≠ j) in the rebalancing LP:
/// row-major over ordered pairs with the diagonal removed.
pub fn flow_index(n: usize, i: usize, j: usize) -> usize {
    assert!(i != j && i < n && j < n, "flow variables exclude self-loops");
    i * (n - 1) + if j < i { j } else { j - 1 }
}

/// Standard-form LP of a rebalancing problem: variables are the
/// `n(n−1)` off-diagonal flows, constraints are the first `n − 1` net
/// outflow balances `Σ_j (π_ij − π_ji) = d_i` (the last is redundant).
pub fn rebalance_to_lp(prob: &FlowProblem) -> StandardFormLP {
    let n = prob.nodes();
    let m = n * (n - 1);
    let k = n - 1;
    let mut a = DMatrix::zeros(k, m);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let col = flow_index(n, i, j);
            if i < k {
                a[(i, col)] += 1.0;
            }
            if j < k {
                a[(j, col)] -= 1.0;
            }
        }
    }
    let b = DVector::from_column_slice(&prob.d[..k]);
    let mut c = DVector::zeros(m);
    for i in 0..n {
        for j in 0..n {
            if i != j {
                c[flow_index(n, i, j)] = prob.cost[(i, j)];
            }
        }
    }
    StandardFormLP::new_unchecked(a, b, c)
}
