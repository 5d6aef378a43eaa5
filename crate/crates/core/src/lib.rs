//! Debiased estimation of linear-program solutions from noisy data.
//!
//! The pipeline: pose the problem as a standard-form LP ([`lp_core`]),
//! smooth it with a penalty from the catalog ([`penalty`]), solve the
//! penalized program at strengths r and r/2 ([`penalized_solver`]), and
//! extrapolate the two solutions to cancel the leading bias term
//! ([`debias_oracle`]). Sampling models, bootstrap ensembles, and
//! confidence sets live in [`stochastic_inference`]; optimal-transport
//! and flow-rebalancing front-ends in [`transport`].

pub mod debias_oracle;
pub mod linalg;
pub mod lp_core;
pub mod penalized_solver;
pub mod penalty;
pub mod stochastic_inference;
pub mod transport;

pub use debias_oracle::{
    debiased_estimate, expansion_oracle, expansion_residual, oracle_d_star, oracle_m_star,
    sigma_diagonal, DebiasedEstimate, ExpansionOracle, OracleError,
};
pub use lp_core::{
    check_assumptions, null_space_basis, plug_in_2x2, solve_lp, solve_lp_with, zero_set,
    AssumptionReport, LpError, LpSolution, LpStatus, SimplexOptions, StandardFormLP, ZeroSet,
};
pub use penalized_solver::{
    dual_feasible_start, duality_gap, solve_path, solve_penalized, PenalizedSolution, SolveMethod,
    SolverError, SolverOptions,
};
pub use penalty::{
    conjugate_prime, make_penalty, verify_conjugacy, PenaltyError, PenaltyKind, PenaltySpec,
};
pub use stochastic_inference::{
    bootstrap_ensemble, ci_entrywise, coverage_experiment, ks_normal, ks_two_sample, normal_cdf,
    sample_empirical, uniform_band, BootstrapEnsemble, ConfidenceKind, ConfidenceSet,
    CoverageConfig, CoverageReport, EmpiricalSample, EstimatorConfig, InferenceError,
    SamplingKind, SamplingModel,
};
pub use transport::{
    colocalization, entropic_bias_profile, grid_cost, ot_to_lp, plan_from_vector,
    rebalance_to_lp, sinkhorn, ColocCurve, EntropicBiasRow, EntropicPlan, FlowProblem,
    OtProblem, SupportRestriction, TransportError,
};
