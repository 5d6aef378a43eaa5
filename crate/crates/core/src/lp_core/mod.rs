//! Standard-form linear programs, an exact simplex baseline, and
//! structural checks (rank, interior feasibility, uniqueness heuristics).
//!
//! Everything downstream — the penalized solver, the extrapolation
//! estimator, the bootstrap — speaks in terms of [`StandardFormLP`]:
//! minimize ⟨c,x⟩ subject to Ax = b, x ≥ 0 with a full-row-rank A.
//! Transport plans are flattened row-major (π₁₁, π₁₂, …, π₂₁, …) wherever
//! they appear as LP variables.

pub(crate) mod simplex;

pub use simplex::SimplexOptions;
use simplex::{revised_simplex, SimplexOutcome};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Library-wide feasibility/optimality tolerance.
pub const DEFAULT_TOL: f64 = 1e-9;
/// Pivot floor below which a matrix is treated as numerically rank deficient.
pub const RANK_PIVOT_FLOOR: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum LpError {
    #[error("constraint matrix is numerically rank deficient (rank {rank} of {rows} rows)")]
    RankDeficient { rank: usize, rows: usize },
    #[error("invalid problem data: {0}")]
    InvalidData(String),
    #[error("numerical breakdown in the simplex solver: {0}")]
    NumericalBreakdown(String),
    #[error("input outside the admissible domain: {0}")]
    DomainError(String),
    #[error(
        "zero-set tolerance is ambiguous: |x[{index}]| = {value:.3e} falls strictly between \
         tol = {tol:.3e} and 10·tol"
    )]
    AmbiguousZero { index: usize, value: f64, tol: f64 },
    #[error("no strictly positive feasible point found (best margin {margin:.3e})")]
    NoStrictInterior { margin: f64 },
}

/// Solve status of a linear program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

impl std::fmt::Display for LpStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            LpStatus::Optimal => "optimal",
            LpStatus::Infeasible => "infeasible",
            LpStatus::Unbounded => "unbounded",
        };
        f.write_str(s)
    }
}

/// min ⟨c,x⟩ subject to Ax = b, x ≥ 0, with A of full row rank (k ≤ m).
///
/// Construction verifies dimensions, finiteness, and the numerical row
/// rank of A; [`StandardFormLP::new_unchecked`] skips all of that for
/// callers that already hold a validated matrix.
#[derive(Debug, Clone)]
pub struct StandardFormLP {
    a: DMatrix<f64>,
    b: DVector<f64>,
    c: DVector<f64>,
}

impl StandardFormLP {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, c: DVector<f64>) -> Result<Self, LpError> {
        let (k, m) = a.shape();
        if k == 0 || m == 0 {
            return Err(LpError::InvalidData("A must have at least one row and column".into()));
        }
        if b.len() != k {
            return Err(LpError::InvalidData(format!(
                "b has length {} but A has {k} rows",
                b.len()
            )));
        }
        if c.len() != m {
            return Err(LpError::InvalidData(format!(
                "c has length {} but A has {m} columns",
                c.len()
            )));
        }
        if a.iter().any(|v| !v.is_finite())
            || b.iter().any(|v| !v.is_finite())
            || c.iter().any(|v| !v.is_finite())
        {
            return Err(LpError::InvalidData("entries must all be finite".into()));
        }
        let rank = numerical_row_rank(&a, RANK_PIVOT_FLOOR);
        if rank < k {
            return Err(LpError::RankDeficient { rank, rows: k });
        }
        Ok(StandardFormLP { a, b, c })
    }

    /// Build without any validation. The caller is responsible for the
    /// type invariants; other operations may misbehave if they are broken.
    pub fn new_unchecked(a: DMatrix<f64>, b: DVector<f64>, c: DVector<f64>) -> Self {
        StandardFormLP { a, b, c }
    }

    /// Same constraints and cost, new right-hand side. A's rank was
    /// already certified, so only b is re-validated — this is the cheap
    /// path for resampled/bootstrap right-hand sides.
    pub fn with_b(&self, b: DVector<f64>) -> Result<Self, LpError> {
        if b.len() != self.k() {
            return Err(LpError::InvalidData(format!(
                "b has length {} but A has {} rows",
                b.len(),
                self.k()
            )));
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(LpError::InvalidData("entries of b must be finite".into()));
        }
        Ok(StandardFormLP { a: self.a.clone(), b, c: self.c.clone() })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn c(&self) -> &DVector<f64> {
        &self.c
    }

    /// Number of constraint rows.
    pub fn k(&self) -> usize {
        self.a.nrows()
    }

    /// Number of variables.
    pub fn m(&self) -> usize {
        self.a.ncols()
    }
}

/// Residual norms certifying an optimal solve.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Residuals {
    /// ‖Ax − b‖∞.
    pub primal: f64,
    /// max(0, −min reduced cost): violation of dual feasibility.
    pub dual: f64,
}

/// A basic solution returned by [`solve_lp`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub basis: Vec<usize>,
    pub objective: f64,
    pub status: LpStatus,
    pub residuals: Residuals,
    #[serde(skip)]
    pub lambda: Vec<f64>,
    #[serde(skip)]
    pub reduced_costs: Vec<f64>,
}

impl LpSolution {
    pub fn x_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.x)
    }

    pub fn lambda_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.lambda)
    }
}

/// The index set I₀ of entries of an optimal solution that are zero at a
/// given tolerance. Indices are 0-based positions in the flattened
/// variable vector.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ZeroSet {
    pub indices: Vec<usize>,
    pub tol: f64,
}

impl ZeroSet {
    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }
}

/// Outcome of the structural checks on an instance. Flags, never errors:
/// a failed check is information, not an invalid input.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssumptionReport {
    /// A has full numerical row rank.
    pub row_rank_ok: bool,
    /// A strictly positive feasible point exists (exhibited, not assumed).
    pub slater_ok: bool,
    /// Sufficient condition for a unique optimum: every nonbasic reduced
    /// cost strictly positive at the optimal basis. `false` means
    /// "not certified", not "non-unique".
    pub unique_solution_ok: bool,
    /// The optimal basic solution has fewer than k nonzero entries.
    pub degenerate: bool,
    /// The margin s* of the interior-point auxiliary program (capped at 1).
    pub slater_margin: f64,
}

/// Solve the program with the two-phase revised simplex baseline.
pub fn solve_lp(lp: &StandardFormLP) -> Result<LpSolution, LpError> {
    solve_lp_with(lp, &SimplexOptions::default())
}

pub fn solve_lp_with(lp: &StandardFormLP, opts: &SimplexOptions) -> Result<LpSolution, LpError> {
    let out = revised_simplex(&lp.a, &lp.b, &lp.c, opts)?;
    Ok(package(lp, out))
}

fn package(lp: &StandardFormLP, out: SimplexOutcome) -> LpSolution {
    let SimplexOutcome { status, x, basis, lambda, reduced_costs, objective } = out;
    let residuals = if status == LpStatus::Optimal {
        let primal = (&lp.a * &x - &lp.b).amax();
        let dual = reduced_costs.iter().fold(0.0f64, |acc, &d| acc.max(-d));
        Residuals { primal, dual }
    } else {
        Residuals { primal: f64::NAN, dual: f64::NAN }
    };
    LpSolution {
        x: x.as_slice().to_vec(),
        basis,
        objective,
        status,
        residuals,
        lambda: lambda.as_slice().to_vec(),
        reduced_costs: reduced_costs.as_slice().to_vec(),
    }
}

/// Closed-form 2×2 transport plan for marginals t, s on the 2-point
/// simplex when the cost places all mass on the diagonal: entries
/// (min{t₁,s₁}, (t₁−s₁)₊; (t₂−s₂)₊, min{t₂,s₂}), flattened row-major.
pub fn plug_in_2x2(t: [f64; 2], s: [f64; 2]) -> Result<[f64; 4], LpError> {
    for (name, v) in [("t", &t), ("s", &s)] {
        if v.iter().any(|x| !x.is_finite() || *x < -DEFAULT_TOL) {
            return Err(LpError::DomainError(format!("{name} has a negative or non-finite entry")));
        }
        if (v[0] + v[1] - 1.0).abs() > DEFAULT_TOL {
            return Err(LpError::DomainError(format!(
                "{name} does not sum to 1 (sum = {})",
                v[0] + v[1]
            )));
        }
    }
    Ok([
        t[0].min(s[0]),
        (t[0] - s[0]).max(0.0),
        (t[1] - s[1]).max(0.0),
        t[1].min(s[1]),
    ])
}

/// Extract the zero set I₀ = {i : |xᵢ| ≤ tol} from an optimal solution.
///
/// Entries with |xᵢ| strictly inside (tol, 10·tol) are rejected as
/// [`LpError::AmbiguousZero`]: the tolerance straddles an entry and the
/// partition would be an artifact of its exact value.
pub fn zero_set(sol: &LpSolution, tol: f64) -> Result<ZeroSet, LpError> {
    assert_eq!(sol.status, LpStatus::Optimal, "zero_set requires an optimal solution");
    let mut indices = Vec::new();
    for (i, &v) in sol.x.iter().enumerate() {
        let a = v.abs();
        if a <= tol {
            indices.push(i);
        } else if a < 10.0 * tol {
            return Err(LpError::AmbiguousZero { index: i, value: a, tol });
        }
    }
    Ok(ZeroSet { indices, tol })
}

/// Run the structural checks: numerical row rank, existence of a strictly
/// positive feasible point (via the auxiliary margin program), the strict
/// reduced-cost uniqueness certificate, and degeneracy of the optimum.
pub fn check_assumptions(lp: &StandardFormLP) -> AssumptionReport {
    let k = lp.k();
    let row_rank_ok = numerical_row_rank(&lp.a, RANK_PIVOT_FLOOR) == k;

    let (slater_ok, slater_margin) = match slater_margin_program(lp) {
        Ok((margin, _)) => (margin > DEFAULT_TOL, margin),
        Err(_) => (false, f64::NAN),
    };

    let (unique_solution_ok, degenerate) = match solve_lp(lp) {
        Ok(sol) if sol.status == LpStatus::Optimal => {
            let in_basis: std::collections::HashSet<usize> = sol.basis.iter().copied().collect();
            let strict = sol
                .reduced_costs
                .iter()
                .enumerate()
                .filter(|(j, _)| !in_basis.contains(j))
                .all(|(_, &d)| d > DEFAULT_TOL);
            let support = sol.x.iter().filter(|v| v.abs() > DEFAULT_TOL).count();
            (strict, support < k)
        }
        _ => (false, false),
    };

    AssumptionReport { row_rank_ok, slater_ok, unique_solution_ok, degenerate, slater_margin }
}

/// A strictly positive feasible point of Ax = b, x > 0, obtained from the
/// margin program max s s.t. Ax = b, x ≥ s·1, s ≤ 1. Errors with
/// [`LpError::NoStrictInterior`] when the best margin is not positive.
pub fn strict_feasible_point(lp: &StandardFormLP) -> Result<DVector<f64>, LpError> {
    let (margin, point) = slater_margin_program(lp)?;
    if margin > DEFAULT_TOL {
        Ok(point)
    } else {
        Err(LpError::NoStrictInterior { margin })
    }
}

/// Solve max s s.t. Ax = b, x − s·1 ≥ 0 with the cap s ≤ 1, returning
/// (s*, x*). Variables: x = w + s·1 with w ≥ 0 and s = s⁺ − s⁻ split into
/// nonnegative parts; the cap row s⁺ + u = 1 keeps the program bounded
/// (free circulation structures would otherwise let s grow forever).
fn slater_margin_program(lp: &StandardFormLP) -> Result<(f64, DVector<f64>), LpError> {
    let k = lp.k();
    let m = lp.m();
    let a1 = &lp.a * DVector::from_element(m, 1.0);

    // Columns: w (m), s⁺, s⁻, u — rows: the k original constraints plus the cap.
    let mut a_aux = DMatrix::<f64>::zeros(k + 1, m + 3);
    a_aux.view_mut((0, 0), (k, m)).copy_from(&lp.a);
    for i in 0..k {
        a_aux[(i, m)] = a1[i];
        a_aux[(i, m + 1)] = -a1[i];
    }
    a_aux[(k, m)] = 1.0;
    a_aux[(k, m + 2)] = 1.0;
    let mut b_aux = DVector::<f64>::zeros(k + 1);
    b_aux.view_mut((0, 0), (k, 1)).copy_from(&lp.b);
    b_aux[k] = 1.0;
    let mut c_aux = DVector::<f64>::zeros(m + 3);
    c_aux[m] = -1.0;
    c_aux[m + 1] = 1.0;

    let out = revised_simplex(&a_aux, &b_aux, &c_aux, &SimplexOptions::default())?;
    match out.status {
        LpStatus::Optimal => {
            let s = out.x[m] - out.x[m + 1];
            let point = DVector::from_iterator(m, (0..m).map(|j| out.x[j] + s));
            Ok((s, point))
        }
        LpStatus::Infeasible => Ok((f64::NEG_INFINITY, DVector::zeros(m))),
        LpStatus::Unbounded => Err(LpError::NumericalBreakdown(
            "margin program reported unbounded despite the cap row".into(),
        )),
    }
}

/// Orthonormal basis Z of ker(A) with AZ = 0; errors if A is numerically
/// rank deficient.
pub fn null_space_basis(a: &DMatrix<f64>) -> Result<DMatrix<f64>, LpError> {
    crate::linalg::null_space_basis(a, RANK_PIVOT_FLOOR).ok_or_else(|| {
        let rank = numerical_row_rank(a, RANK_PIVOT_FLOOR);
        LpError::RankDeficient { rank, rows: a.nrows() }
    })
}

/// Numerical row rank via the spectrum of A·Aᵀ (k×k, cheap for wide
/// matrices): the singular values of A are the square roots of its
/// eigenvalues, and the rank counts those above the relative floor.
fn numerical_row_rank(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    let csc = crate::linalg::CscPattern::from_dense(a);
    let gram = csc.weighted_gram(&DVector::from_element(a.ncols(), 1.0));
    let eigs = gram.symmetric_eigenvalues();
    let sigma_max = eigs.iter().fold(0.0f64, |acc, &e| acc.max(e.max(0.0))).sqrt();
    if sigma_max == 0.0 {
        return 0;
    }
    let floor = rel_tol * sigma_max;
    eigs.iter().filter(|&&e| e.max(0.0).sqrt() > floor).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    const TOL: f64 = 1e-9;

    /// 2×2 transport instance, redundant marginal row dropped; variables
    /// flattened row-major.
    fn ot_2x2(t: [f64; 2], s: [f64; 2], c: [f64; 4]) -> StandardFormLP {
        let a = DMatrix::from_row_slice(
            3,
            4,
            &[1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 1.0, 0.0],
        );
        let b = DVector::from_vec(vec![t[0], t[1], s[0]]);
        let c = DVector::from_column_slice(&c);
        StandardFormLP::new(a, b, c).unwrap()
    }

    #[test]
    fn transport_instance_recovers_diagonal_plan() {
        let lp = ot_2x2([0.5, 0.5], [0.5, 0.5], [0.0, 1.0, 2.0, 0.0]);
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        let expected = [0.5, 0.0, 0.0, 0.5];
        for (got, want) in sol.x.iter().zip(expected) {
            assert_abs_diff_eq!(*got, want, epsilon = TOL);
        }
        assert_abs_diff_eq!(sol.objective, 0.0, epsilon = TOL);
        assert!(sol.residuals.primal <= TOL);
    }

    #[test]
    fn zero_cost_gives_zero_objective() {
        let lp = ot_2x2([0.3, 0.7], [0.6, 0.4], [0.0; 4]);
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_abs_diff_eq!(sol.objective, 0.0, epsilon = TOL);
        // Any feasible basic point is acceptable; verify feasibility only.
        assert!(sol.residuals.primal <= TOL);
        assert!(sol.x.iter().all(|&v| v >= -TOL));
    }

    #[test]
    fn two_station_rebalance_flow() {
        // Stations with imbalance d = (3, −3); variables (π₁₂, π₂₁), unit
        // costs; station-2 row dropped as redundant. Of the two basic
        // feasible flows, shipping 3 units from 1 to 2 is optimal.
        let a = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        let b = DVector::from_vec(vec![3.0]);
        let c = DVector::from_vec(vec![1.0, 1.0]);
        let lp = StandardFormLP::new(a, b, c).unwrap();
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert_abs_diff_eq!(sol.x[0], 3.0, epsilon = TOL);
        assert_abs_diff_eq!(sol.x[1], 0.0, epsilon = TOL);
        assert_abs_diff_eq!(sol.objective, 3.0, epsilon = TOL);
    }

    #[test]
    fn plug_in_matches_closed_form() {
        let plan = plug_in_2x2([0.6, 0.4], [0.5, 0.5]).unwrap();
        let expected = [0.5, 0.1, 0.0, 0.4];
        for (got, want) in plan.iter().zip(expected) {
            assert_abs_diff_eq!(*got, want, epsilon = TOL);
        }
        let diag = plug_in_2x2([0.5, 0.5], [0.5, 0.5]).unwrap();
        for (got, want) in diag.iter().zip([0.5, 0.0, 0.0, 0.5]) {
            assert_abs_diff_eq!(*got, want, epsilon = TOL);
        }
    }

    #[test]
    fn plug_in_rejects_off_simplex_input() {
        assert!(matches!(plug_in_2x2([0.7, 0.4], [0.5, 0.5]), Err(LpError::DomainError(_))));
        assert!(matches!(plug_in_2x2([1.2, -0.2], [0.5, 0.5]), Err(LpError::DomainError(_))));
    }

    #[test]
    fn plug_in_agrees_with_simplex_on_random_marginals() {
        // The closed form must coincide with the generic solver across the
        // whole 2×2 family (cost favoring the diagonal).
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..1000 {
            let t1: f64 = rng.random();
            let s1: f64 = rng.random();
            let t = [t1, 1.0 - t1];
            let s = [s1, 1.0 - s1];
            let plan = plug_in_2x2(t, s).unwrap();
            let lp = ot_2x2(t, s, [0.0, 1.0, 2.0, 0.0]);
            let sol = solve_lp(&lp).unwrap();
            assert_eq!(sol.status, LpStatus::Optimal);
            for (got, want) in sol.x.iter().zip(plan) {
                assert_abs_diff_eq!(*got, want, epsilon = TOL);
            }
        }
    }

    #[test]
    fn zero_set_partitions_exact_and_tiny_entries() {
        let lp = ot_2x2([0.5, 0.5], [0.5, 0.5], [0.0, 1.0, 2.0, 0.0]);
        let sol = solve_lp(&lp).unwrap();
        let z = zero_set(&sol, 1e-9).unwrap();
        assert_eq!(z.indices, vec![1, 2]);
        assert!(z.contains(1) && !z.contains(0));

        let mut sol2 = sol.clone();
        sol2.x = vec![1.0, 0.0, 0.0];
        let z2 = zero_set(&sol2, 1e-9).unwrap();
        assert_eq!(z2.indices, vec![1, 2]);

        let mut sol3 = sol.clone();
        sol3.x = vec![1e-10, 1.0];
        let z3 = zero_set(&sol3, 1e-9).unwrap();
        assert_eq!(z3.indices, vec![0]);
    }

    #[test]
    fn zero_set_flags_straddled_tolerance() {
        let lp = ot_2x2([0.5, 0.5], [0.5, 0.5], [0.0, 1.0, 2.0, 0.0]);
        let mut sol = solve_lp(&lp).unwrap();
        sol.x = vec![5e-9, 1.0];
        match zero_set(&sol, 1e-9) {
            Err(LpError::AmbiguousZero { index, .. }) => assert_eq!(index, 0),
            other => panic!("expected AmbiguousZero, got {other:?}"),
        }
    }

    #[test]
    fn assumptions_hold_on_the_reduced_transport_instance() {
        let lp = ot_2x2([0.5, 0.5], [0.5, 0.5], [0.0, 1.0, 2.0, 0.0]);
        let report = check_assumptions(&lp);
        assert!(report.row_rank_ok);
        assert!(report.slater_ok, "interior point (¼,¼,¼,¼) exists");
        assert!(report.unique_solution_ok);
        assert!(report.degenerate, "optimum has support 2 < k = 3");
        assert!(report.slater_margin > 0.0);
    }

    #[test]
    fn duplicated_row_fails_rank_check() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 0.0, 1.0, 1.0, 0.0]);
        let b = DVector::from_vec(vec![1.0, 1.0]);
        let c = DVector::from_vec(vec![1.0, 1.0, 1.0]);
        assert!(matches!(
            StandardFormLP::new(a.clone(), b.clone(), c.clone()),
            Err(LpError::RankDeficient { rank: 1, rows: 2 })
        ));
        let lp = StandardFormLP::new_unchecked(a, b, c);
        let report = check_assumptions(&lp);
        assert!(!report.row_rank_ok);
    }

    #[test]
    fn zero_cost_is_not_certified_unique() {
        let lp = ot_2x2([0.5, 0.5], [0.5, 0.5], [0.0; 4]);
        let report = check_assumptions(&lp);
        assert!(!report.unique_solution_ok);
    }

    #[test]
    fn constructor_rejects_bad_data() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, f64::NAN]);
        let b = DVector::from_vec(vec![1.0]);
        let c = DVector::from_vec(vec![0.0, 0.0]);
        assert!(matches!(StandardFormLP::new(a, b, c), Err(LpError::InvalidData(_))));

        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, 2.0]);
        let c = DVector::from_vec(vec![0.0, 0.0]);
        assert!(matches!(StandardFormLP::new(a, b, c), Err(LpError::InvalidData(_))));
    }

    #[test]
    fn null_space_of_row_vector_and_identity() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let z = null_space_basis(&a).unwrap();
        assert_eq!(z.shape(), (2, 1));
        let r = 1.0 / 2.0f64.sqrt();
        assert!((z[(0, 0)] - r).abs() < TOL && (z[(1, 0)] + r).abs() < TOL
            || (z[(0, 0)] + r).abs() < TOL && (z[(1, 0)] - r).abs() < TOL);

        let eye = DMatrix::<f64>::identity(3, 3);
        let z = null_space_basis(&eye).unwrap();
        assert_eq!(z.ncols(), 0);
    }

    #[test]
    fn null_space_annihilates_random_wide_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let a = DMatrix::from_fn(5, 8, |_, _| rng.random::<f64>() - 0.5);
            let z = null_space_basis(&a).unwrap();
            assert!((&a * &z).amax() <= 1e-12);
        }
    }

    #[test]
    fn strict_feasible_point_is_strictly_positive() {
        let lp = ot_2x2([0.5, 0.5], [0.5, 0.5], [0.0, 1.0, 2.0, 0.0]);
        let x = strict_feasible_point(&lp).unwrap();
        assert!(x.iter().all(|&v| v > 0.0));
        assert!((lp.a() * &x - lp.b()).amax() <= 1e-9);
    }

    #[test]
    fn strict_feasible_point_fails_on_boundary_polytopes() {
        // t = (1, 0) forces π₂· = 0: the feasible set has empty interior.
        let lp = ot_2x2([1.0, 0.0], [0.5, 0.5], [0.0, 1.0, 2.0, 0.0]);
        assert!(matches!(strict_feasible_point(&lp), Err(LpError::NoStrictInterior { .. })));
    }

    /// Random instances that are feasible and bounded by construction:
    /// b = A·x₀ for a nonnegative x₀, and c = Aᵀy + s with s ≥ 0 makes y
    /// dual feasible.
    fn random_solvable(
        seed: u64,
        k: usize,
        m: usize,
        strict: bool,
    ) -> Option<(StandardFormLP, DVector<f64>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(k, m, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let mut x0 = DVector::zeros(m);
        for i in 0..k {
            x0[i] = rng.random::<f64>() + 0.1;
        }
        let b = &a * &x0;
        let y = DVector::from_fn(k, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        let mut s = DVector::zeros(m);
        for j in k..m {
            s[j] = if strict { rng.random::<f64>() + 0.5 } else { rng.random::<f64>() };
        }
        let c = a.transpose() * y + s;
        StandardFormLP::new(a, b, c).ok().map(|lp| (lp, x0))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn strong_duality_on_random_solvable_instances(seed in 0u64..10_000, k in 1usize..4, extra in 0usize..4) {
            let m = k + extra;
            prop_assume!(random_solvable(seed, k, m, false).is_some());
            let (lp, _) = random_solvable(seed, k, m, false).unwrap();
            let sol = solve_lp(&lp).unwrap();
            prop_assert_eq!(sol.status, LpStatus::Optimal);
            let dual_obj = lp.b().dot(&sol.lambda_vector());
            prop_assert!((sol.objective - dual_obj).abs() <= 1e-8 * (1.0 + sol.objective.abs()));
            prop_assert!(sol.residuals.primal <= 1e-8);
            prop_assert!(sol.x.iter().all(|&v| v >= -1e-9));
        }

        #[test]
        fn solution_is_permutation_equivariant(seed in 0u64..10_000, k in 1usize..4, extra in 1usize..4) {
            // Instances built with strictly positive nonbasic reduced costs
            // have a unique optimum, so the solved vertex cannot depend on
            // row/column ordering.
            let m = k + extra;
            prop_assume!(random_solvable(seed, k, m, true).is_some());
            let (lp, _) = random_solvable(seed, k, m, true).unwrap();
            let sol = solve_lp(&lp).unwrap();
            prop_assume!(sol.status == LpStatus::Optimal);

            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
            let mut rows: Vec<usize> = (0..k).collect();
            let mut cols: Vec<usize> = (0..m).collect();
            rows.shuffle(&mut rng);
            cols.shuffle(&mut rng);
            let ap = DMatrix::from_fn(k, m, |i, j| lp.a()[(rows[i], cols[j])]);
            let bp = DVector::from_fn(k, |i, _| lp.b()[rows[i]]);
            let cp = DVector::from_fn(m, |j, _| lp.c()[cols[j]]);
            let lp2 = StandardFormLP::new(ap, bp, cp).unwrap();
            let sol2 = solve_lp(&lp2).unwrap();
            prop_assert_eq!(sol2.status, LpStatus::Optimal);
            for j in 0..m {
                prop_assert!((sol2.x[j] - sol.x[cols[j]]).abs() <= 1e-7);
            }
        }
    }
}
