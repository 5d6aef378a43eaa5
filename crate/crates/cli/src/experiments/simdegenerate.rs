//! `simdegenerate`: convergence rate of the debiased cost when the exact
//! cost gradient vanishes.
//!
//! On the symmetric 2×2 instance with equal marginals and cost
//! (0, 1, 1, 0), the limiting cost fluctuation degenerates — the
//! first-order term of `ŵ − w*` is identically zero — so the mean squared
//! error decays faster than the usual 1/n.  With the exponential penalty
//! and `r_n = r₀·n^{−1/4}` the fitted log-log slope comes out near −2;
//! the log barrier has no such guarantee and stays near −1, which is why
//! it is offered as the contrast arm.

use serde::Serialize;
use serde_json::json;

use lp_debias_core::{
    make_penalty, sample_empirical, EstimatorConfig, SamplingKind, SamplingModel, SolverOptions,
};

use crate::experiments::{dot, require, two_by_two, PenaltyName, TAG_DEGENERATE};
use crate::manifest::{ResultBundle, RunManifest, Table, SCHEMA_VERSION};
use crate::runner::{run_replicates, thread_pool};
use crate::{derive_seed, fit_slope, fmt_f64, mean, CliError, DEFAULT_SEED};

#[derive(Debug, Clone, Serialize)]
pub struct SimDegenerateConfig {
    pub ns: Vec<u64>,
    pub reps: usize,
    pub r0: f64,
    pub penalty: PenaltyName,
    pub seed: u64,
}

impl Default for SimDegenerateConfig {
    fn default() -> Self {
        SimDegenerateConfig {
            ns: vec![1_000, 10_000, 100_000, 1_000_000, 10_000_000],
            reps: 200,
            r0: 3.0,
            penalty: PenaltyName::Exp,
            seed: DEFAULT_SEED,
        }
    }
}

pub fn run(cfg: &SimDegenerateConfig) -> Result<ResultBundle, CliError> {
    require(cfg.ns.len() >= 2, "the rate fit needs at least two sample sizes")?;
    require(cfg.ns.iter().all(|&n| n >= 2), "n must be ≥ 2")?;
    require(cfg.reps >= 2, "reps must be ≥ 2")?;
    require(cfg.r0 > 0.0 && cfg.r0.is_finite(), "r0 must be positive and finite")?;

    // Equal marginals, symmetric cost, zero diagonal: the degenerate case.
    let (prob, lp) = two_by_two([0.0, 1.0, 1.0, 0.0]);
    let c = lp.c().clone();
    let w_star = 0.0;
    let pen_kind = cfg.penalty;
    let pool = thread_pool()?;

    let mut replicates = Table::new("replicates", &["n", "rep", "w_hat", "status"]);
    let mut mse_table = Table::new("mse", &["n", "mse", "mean_abs_scaled", "failures"]);
    let mut per_n = Vec::new();
    let mut fit_points: Vec<(f64, f64)> = Vec::new();
    let mut total_failures = 0usize;

    for (n_idx, &n) in cfg.ns.iter().enumerate() {
        let pen = make_penalty(pen_kind.kind()).expect("closed-form penalties exist");
        let estimator = EstimatorConfig {
            lp_template: lp.clone(),
            pen,
            r_n: cfg.r0 * (n as f64).powf(-0.25),
            opts: SolverOptions::default(),
        };
        let model = SamplingModel {
            kind: SamplingKind::OtMarginals {
                t: prob.t().to_vec(),
                s: prob.s().to_vec(),
                n,
            },
            seed: 0,
        };
        let (ok, failed) = run_replicates(&pool, cfg.reps, |rep| {
            let m = model.with_seed(derive_seed(cfg.seed, TAG_DEGENERATE, n_idx as u64, rep as u64));
            let sample = sample_empirical(&m);
            let est = estimator.estimate(&sample.b_n).map_err(|e| e.to_string())?;
            Ok(dot(&c, &est.x_hat))
        });

        for f in &failed {
            replicates.push(vec![
                n.to_string(),
                f.index.to_string(),
                String::new(),
                f.message.clone(),
            ]);
        }
        for (i, w) in &ok {
            replicates.push(vec![n.to_string(), i.to_string(), fmt_f64(*w), "ok".into()]);
        }

        let entry = if ok.len() >= 2 {
            let sq: Vec<f64> = ok.iter().map(|(_, w)| (w - w_star) * (w - w_star)).collect();
            let mse = mean(&sq);
            let mean_abs_scaled = mean(
                &ok.iter()
                    .map(|(_, w)| (n as f64).sqrt() * (w - w_star).abs())
                    .collect::<Vec<_>>(),
            );
            mse_table.push(vec![
                n.to_string(),
                fmt_f64(mse),
                fmt_f64(mean_abs_scaled),
                failed.len().to_string(),
            ]);
            if mse > 0.0 {
                fit_points.push(((n as f64).ln(), mse.ln()));
            }
            json!({
                "n": n,
                "r_n": estimator.r_n,
                "reps": cfg.reps,
                "failures": failed.len(),
                "mse": mse,
                "mean_abs_scaled": mean_abs_scaled,
            })
        } else {
            json!({
                "n": n,
                "r_n": estimator.r_n,
                "reps": cfg.reps,
                "failures": failed.len(),
                "mse": serde_json::Value::Null,
                "mean_abs_scaled": serde_json::Value::Null,
            })
        };
        per_n.push(entry);
        total_failures += failed.len();
    }

    let slope = if fit_points.len() >= 2 {
        let xs: Vec<f64> = fit_points.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = fit_points.iter().map(|p| p.1).collect();
        Some(fit_slope(&xs, &ys))
    } else {
        None
    };

    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "experiment": "simdegenerate",
        "penalty": cfg.penalty.as_str(),
        "r0": cfg.r0,
        "seed": cfg.seed,
        "mse_log_slope": slope,
        "per_n": per_n,
        "total_failures": total_failures,
    });
    Ok(ResultBundle {
        manifest: RunManifest::new("simdegenerate", cfg.seed, cfg),
        summary,
        tables: vec![replicates, mse_table],
        replicate_failures: total_failures,
    })
}
