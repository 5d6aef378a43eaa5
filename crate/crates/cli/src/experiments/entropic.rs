//! `entropic_compare`: entropic smoothing versus dual-penalty debiasing
//! on the symmetric 2×2 instance.
//!
//! Three blocks, all against the same exact plan:
//! 1. the noiseless bias profile of the entropic plan — `‖π_λ − π*‖∞`
//!    decays like `e^{−c/λ}`, so `λ·ln(1/error)` stays order one;
//! 2. the λ→∞ endpoint, where the entropic plan collapses to the product
//!    coupling of the marginals;
//! 3. a Monte-Carlo contrast at fixed λ: the entropic estimator keeps an
//!    O(1) smoothing bias as `n` grows while the debiased estimator's
//!    error keeps shrinking.

use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::json;

use lp_debias_core::{
    debiased_estimate, entropic_bias_profile, make_penalty, ot_to_lp, plan_from_vector,
    sample_empirical, sinkhorn, solve_lp, OtProblem, SamplingKind, SamplingModel, SolverOptions,
};

use crate::experiments::{require, two_by_two, PenaltyName, TAG_ENTROPIC};
use crate::manifest::{ResultBundle, RunManifest, Table, SCHEMA_VERSION};
use crate::runner::{run_replicates, thread_pool};
use crate::{derive_seed, fmt_f64, mean, CliError, DEFAULT_SEED};

const SINKHORN_TOL: f64 = 1e-11;
const SINKHORN_MAX_ITER: usize = 100_000;

#[derive(Debug, Clone, Serialize)]
pub struct EntropicConfig {
    /// Profile block: small λ values probing the exponential decay.
    pub lambdas: Vec<f64>,
    /// Endpoint block: a λ large enough to reach the product coupling.
    pub product_lambda: f64,
    /// Contrast block: the fixed smoothing strength held while n grows.
    pub contrast_lambda: f64,
    pub ns: Vec<u64>,
    pub reps: usize,
    pub r0: f64,
    pub seed: u64,
}

impl Default for EntropicConfig {
    fn default() -> Self {
        EntropicConfig {
            lambdas: vec![0.05, 0.1, 0.2, 0.3, 0.4, 0.5],
            product_lambda: 1e6,
            contrast_lambda: 2.0,
            ns: vec![1_000, 100_000],
            reps: 200,
            r0: 3.0,
            seed: DEFAULT_SEED,
        }
    }
}

fn sup_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).iter().fold(0.0f64, |acc, d| acc.max(d.abs()))
}

pub fn run(cfg: &EntropicConfig) -> Result<ResultBundle, CliError> {
    require(
        !cfg.lambdas.is_empty() && cfg.lambdas.iter().all(|&l| l > 0.0 && l.is_finite()),
        "profile lambdas must be positive and finite",
    )?;
    require(cfg.product_lambda > 0.0, "product lambda must be positive")?;
    require(cfg.contrast_lambda > 0.0, "contrast lambda must be positive")?;
    require(!cfg.ns.is_empty() && cfg.ns.iter().all(|&n| n >= 2), "n must be ≥ 2")?;
    require(cfg.reps >= 2, "reps must be ≥ 2")?;
    require(cfg.r0 > 0.0 && cfg.r0.is_finite(), "r0 must be positive and finite")?;

    let (prob, lp) = two_by_two([0.0, 1.0, 1.0, 0.0]);
    let exact = solve_lp(&lp).map_err(|e| CliError::Run(e.to_string()))?;
    let plan_star = plan_from_vector(2, 2, &exact.x);
    let pen = make_penalty(PenaltyName::Exp.kind()).expect("exponential penalty exists");
    let opts = SolverOptions::default();
    let pool = thread_pool()?;

    // Block 1: the noiseless bias profile.
    let profile =
        entropic_bias_profile(&prob, &cfg.lambdas).map_err(|e| CliError::Run(e.to_string()))?;
    let mut profile_table = Table::new("bias_profile", &["lambda", "sup_error", "rate"]);
    for row in &profile {
        profile_table.push(vec![
            fmt_f64(row.lambda),
            fmt_f64(row.sup_error),
            fmt_f64(row.rate),
        ]);
    }

    // Block 2: λ→∞ endpoint vs the product coupling.
    let big = sinkhorn(&prob, cfg.product_lambda, SINKHORN_TOL, SINKHORN_MAX_ITER)
        .map_err(|e| CliError::Run(e.to_string()))?;
    let product = DMatrix::from_fn(2, 2, |i, j| prob.t()[i] * prob.s()[j]);
    let product_block = json!({
        "lambda": cfg.product_lambda,
        "sup_error_vs_exact": sup_err(&big.plan, &plan_star),
        "sup_error_vs_product": sup_err(&big.plan, &product),
        "product_vs_exact": sup_err(&product, &plan_star),
    });

    // Block 3: fixed-λ entropic estimate vs the debiased estimate.
    let mut contrast_table = Table::new(
        "contrast",
        &["n", "rep", "err_entropic", "err_debiased", "status"],
    );
    let mut contrast_rows = Vec::new();
    let mut total_failures = 0usize;
    for (n_idx, &n) in cfg.ns.iter().enumerate() {
        let r_n = cfg.r0 / (n as f64).cbrt();
        let (ok, failed) = run_replicates(&pool, cfg.reps, |rep| -> Result<(f64, f64), String> {
            let model = SamplingModel {
                kind: SamplingKind::OtMarginals {
                    t: prob.t().to_vec(),
                    s: prob.s().to_vec(),
                    n,
                },
                seed: derive_seed(cfg.seed, TAG_ENTROPIC, n_idx as u64, rep as u64),
            };
            let sample = sample_empirical(&model);
            let eprob = OtProblem::new(
                sample.t_n.expect("transport sample has t_n"),
                sample.s_n.expect("transport sample has s_n"),
                prob.cost().clone(),
            )
            .map_err(|e| e.to_string())?;
            // Sampling zeros would put the entropic scaling and the
            // penalized interior at the boundary; drop empty atoms and
            // re-embed both plans.
            let restr = eprob.restrict_support();

            let ent = sinkhorn(&restr.problem, cfg.contrast_lambda, SINKHORN_TOL, SINKHORN_MAX_ITER)
                .map_err(|e| e.to_string())?;
            let plan_ent = restr.embed_plan(&ent.plan);

            let rlp = ot_to_lp(&restr.problem);
            let est = debiased_estimate(&rlp, &pen, r_n, &opts).map_err(|e| e.to_string())?;
            let (p_r, q_r) = restr.problem.shape();
            let plan_deb = restr.embed_plan(&plan_from_vector(p_r, q_r, &est.x_hat));

            Ok((sup_err(&plan_ent, &plan_star), sup_err(&plan_deb, &plan_star)))
        });

        for f in &failed {
            contrast_table.push(vec![
                n.to_string(),
                f.index.to_string(),
                String::new(),
                String::new(),
                f.message.clone(),
            ]);
        }
        for (i, (ee, ed)) in &ok {
            contrast_table.push(vec![
                n.to_string(),
                i.to_string(),
                fmt_f64(*ee),
                fmt_f64(*ed),
                "ok".into(),
            ]);
        }

        let entry = if ok.is_empty() {
            json!({
                "n": n,
                "lambda": cfg.contrast_lambda,
                "r_n": r_n,
                "failures": failed.len(),
                "mean_err_entropic": serde_json::Value::Null,
                "mean_err_debiased": serde_json::Value::Null,
                "error_ratio": serde_json::Value::Null,
            })
        } else {
            let me = mean(&ok.iter().map(|(_, (e, _))| *e).collect::<Vec<_>>());
            let md = mean(&ok.iter().map(|(_, (_, d))| *d).collect::<Vec<_>>());
            json!({
                "n": n,
                "lambda": cfg.contrast_lambda,
                "r_n": r_n,
                "failures": failed.len(),
                "mean_err_entropic": me,
                "mean_err_debiased": md,
                "error_ratio": me / md,
            })
        };
        contrast_rows.push(entry);
        total_failures += failed.len();
    }

    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "experiment": "entropic_compare",
        "seed": cfg.seed,
        "rates": profile
            .iter()
            .map(|r| json!({"lambda": r.lambda, "sup_error": r.sup_error, "rate": r.rate}))
            .collect::<Vec<_>>(),
        "product_coupling": product_block,
        "contrast": contrast_rows,
        "total_failures": total_failures,
    });
    Ok(ResultBundle {
        manifest: RunManifest::new("entropic_compare", cfg.seed, cfg),
        summary,
        tables: vec![profile_table, contrast_table],
        replicate_failures: total_failures,
    })
}
