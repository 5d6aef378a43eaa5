//! `sim2x2`: Monte-Carlo study of the debiased cost on the fixed 2×2
//! transport instance with uniform marginals and cost (0, 1, 2, 0).
//!
//! Both marginals are sampled as independent multinomials of size `n`,
//! the plan is re-estimated with penalty strength `r_n = r₀/∛n`, and the
//! rescaled cost error `√n·(ŵ − w*)` is compared against its Gaussian
//! limit, which has variance 1/8 on this instance.  The sweep crosses
//! sample sizes, penalty scales, and both penalty families, so the output
//! doubles as a sensitivity study in r₀.

use serde::Serialize;
use serde_json::json;

use lp_debias_core::{
    ks_normal, make_penalty, sample_empirical, EstimatorConfig, SamplingKind, SamplingModel,
    SolverOptions,
};

use crate::experiments::{dot, require, two_by_two, PenaltyName, TAG_SIM2X2};
use crate::manifest::{ResultBundle, RunManifest, Table, SCHEMA_VERSION};
use crate::runner::{run_replicates, thread_pool};
use crate::{derive_seed, fmt_f64, inv_normal_cdf, mean, sample_variance, CliError, DEFAULT_SEED};

/// Asymptotic variance of the rescaled cost on this instance.
pub const VARIANCE_TARGET: f64 = 0.125;

/// Histogram range (in rescaled units) and bin count for `hist.csv`.
const HIST_RANGE: f64 = 4.0;
const HIST_BINS: usize = 40;

#[derive(Debug, Clone, Serialize)]
pub struct Sim2x2Config {
    pub ns: Vec<u64>,
    pub r0s: Vec<f64>,
    pub penalties: Vec<PenaltyName>,
    pub reps: usize,
    pub seed: u64,
}

impl Default for Sim2x2Config {
    fn default() -> Self {
        Sim2x2Config {
            ns: vec![100, 10_000],
            r0s: vec![0.05, 1.0, 20.0],
            penalties: vec![PenaltyName::Log, PenaltyName::Exp],
            reps: 1000,
            seed: DEFAULT_SEED,
        }
    }
}

pub fn run(cfg: &Sim2x2Config) -> Result<ResultBundle, CliError> {
    require(!cfg.ns.is_empty() && cfg.ns.iter().all(|&n| n >= 1), "n must be ≥ 1")?;
    require(cfg.reps >= 2, "reps must be ≥ 2")?;
    require(
        !cfg.r0s.is_empty() && cfg.r0s.iter().all(|&r| r > 0.0 && r.is_finite()),
        "r0 must be positive and finite",
    )?;
    require(!cfg.penalties.is_empty(), "at least one penalty is required")?;

    let (prob, lp) = two_by_two([0.0, 1.0, 2.0, 0.0]);
    let c = lp.c().clone();
    let w_star = 0.0;
    let pool = thread_pool()?;

    let mut replicates = Table::new(
        "replicates",
        &["cell", "penalty", "n", "r0", "rep", "w_hat", "status"],
    );
    let mut qq = Table::new(
        "qq",
        &["cell", "penalty", "n", "r0", "idx", "theoretical", "observed"],
    );
    let mut hist = Table::new(
        "hist",
        &["cell", "penalty", "n", "r0", "bin_lo", "bin_hi", "count"],
    );
    let mut cell_summaries = Vec::new();
    let mut total_failures = 0usize;

    let mut cell = 0u64;
    for &pen_name in &cfg.penalties {
        for &r0 in &cfg.r0s {
            for &n in &cfg.ns {
                let pen = make_penalty(pen_name.kind())
                    .map_err(|e| CliError::Config(e.to_string()))?;
                let estimator = EstimatorConfig {
                    lp_template: lp.clone(),
                    pen,
                    r_n: r0 / (n as f64).cbrt(),
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
                    let m = model.with_seed(derive_seed(cfg.seed, TAG_SIM2X2, cell, rep as u64));
                    let sample = sample_empirical(&m);
                    let est = estimator.estimate(&sample.b_n).map_err(|e| e.to_string())?;
                    Ok(dot(&c, &est.x_hat))
                });

                let cell_id = format!("{}_r0_{}_n{}", pen_name.as_str(), fmt_f64(r0), n);
                let mut w_by_rep: Vec<Option<f64>> = vec![None; cfg.reps];
                for &(i, w) in &ok {
                    w_by_rep[i] = Some(w);
                }
                for f in &failed {
                    replicates.push(vec![
                        cell_id.clone(),
                        pen_name.as_str().into(),
                        n.to_string(),
                        fmt_f64(r0),
                        f.index.to_string(),
                        String::new(),
                        f.message.clone(),
                    ]);
                }
                for (i, w) in w_by_rep.iter().enumerate() {
                    if let Some(w) = w {
                        replicates.push(vec![
                            cell_id.clone(),
                            pen_name.as_str().into(),
                            n.to_string(),
                            fmt_f64(r0),
                            i.to_string(),
                            fmt_f64(*w),
                            "ok".into(),
                        ]);
                    }
                }

                // Per-cell statistics over the surviving replicates.
                let ws: Vec<f64> = ok.iter().map(|&(_, w)| w).collect();
                let summary = if ws.len() >= 2 {
                    let scaled: Vec<f64> =
                        ws.iter().map(|w| (n as f64).sqrt() * (w - w_star)).collect();
                    let mut deltas: Vec<f64> =
                        scaled.iter().map(|z| z / VARIANCE_TARGET.sqrt()).collect();
                    deltas.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    let ks = ks_normal(&deltas);
                    let mse = mean(&ws.iter().map(|w| (w - w_star) * (w - w_star)).collect::<Vec<_>>());
                    let var_scaled = sample_variance(&scaled);

                    let m = deltas.len();
                    for (i, &obs) in deltas.iter().enumerate() {
                        qq.push(vec![
                            cell_id.clone(),
                            pen_name.as_str().into(),
                            n.to_string(),
                            fmt_f64(r0),
                            i.to_string(),
                            fmt_f64(inv_normal_cdf((i as f64 + 0.5) / m as f64)),
                            fmt_f64(obs),
                        ]);
                    }
                    let bin_w = 2.0 * HIST_RANGE / HIST_BINS as f64;
                    let mut counts = vec![0usize; HIST_BINS];
                    for &d in &deltas {
                        let idx = (((d + HIST_RANGE) / bin_w).floor() as isize)
                            .clamp(0, HIST_BINS as isize - 1) as usize;
                        counts[idx] += 1;
                    }
                    for (bi, &count) in counts.iter().enumerate() {
                        let lo = -HIST_RANGE + bi as f64 * bin_w;
                        hist.push(vec![
                            cell_id.clone(),
                            pen_name.as_str().into(),
                            n.to_string(),
                            fmt_f64(r0),
                            fmt_f64(lo),
                            fmt_f64(lo + bin_w),
                            count.to_string(),
                        ]);
                    }

                    json!({
                        "cell": cell_id,
                        "penalty": pen_name.as_str(),
                        "n": n,
                        "r0": r0,
                        "r_n": estimator.r_n,
                        "reps": cfg.reps,
                        "failures": failed.len(),
                        "mse": mse,
                        "ks_delta_w": ks,
                        "var_scaled": var_scaled,
                        "first_failure": failed.first().map(|f| f.message.clone()),
                    })
                } else {
                    json!({
                        "cell": cell_id,
                        "penalty": pen_name.as_str(),
                        "n": n,
                        "r0": r0,
                        "r_n": estimator.r_n,
                        "reps": cfg.reps,
                        "failures": failed.len(),
                        "mse": serde_json::Value::Null,
                        "ks_delta_w": serde_json::Value::Null,
                        "var_scaled": serde_json::Value::Null,
                        "first_failure": failed.first().map(|f| f.message.clone()),
                    })
                };
                cell_summaries.push(summary);
                total_failures += failed.len();
                cell += 1;
            }
        }
    }

    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "experiment": "sim2x2",
        "variance_target": VARIANCE_TARGET,
        "seed": cfg.seed,
        "cells": cell_summaries,
        "total_failures": total_failures,
    });
    Ok(ResultBundle {
        manifest: RunManifest::new("sim2x2", cfg.seed, cfg),
        summary,
        tables: vec![replicates, qq, hist],
        replicate_failures: total_failures,
    })
}
