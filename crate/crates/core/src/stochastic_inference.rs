//! Sampling models, the naïve bootstrap of the debiased estimator, and
//! quantile-based confidence sets.
//!
//! The statistical pipeline: draw an empirical right-hand side `b_n` from
//! a [`SamplingModel`], run the debiased estimator on it, then resample
//! `b_n` itself to build a [`BootstrapEnsemble`] whose spread mimics the
//! sampling law of the estimator.  Entrywise intervals invert the
//! empirical quantiles of `√n(x̃ − x̂)`; uniform bands use the quantile of
//! the sup-deviation across a grid of functionals.
//!
//! Every random draw is tied to a master seed through counter-based
//! stream derivation, so serial and parallel runs produce bit-identical
//! ensembles.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::debias_oracle::{debiased_estimate, DebiasedEstimate, OracleError};
use crate::lp_core::StandardFormLP;
use crate::penalized_solver::SolverOptions;
use crate::penalty::PenaltySpec;

/// Tolerance for "sums to one" checks on probability vectors.
const SIMPLEX_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    /// More than 1% of bootstrap replicates failed to converge.  The
    /// ensemble built from the surviving replicates is attached so the
    /// caller can still inspect it.
    #[error("{} of {} bootstrap replicates failed to converge", failed.len(), requested)]
    ReplicateFailure {
        failed: Vec<usize>,
        requested: usize,
        ensemble: Box<BootstrapEnsemble>,
    },
    /// A base (non-replicate) estimate could not be computed.
    #[error("estimator failed on the base sample: {0}")]
    BaseEstimateFailed(#[from] OracleError),
}

// ---------------------------------------------------------------------------
// RNG streams
// ---------------------------------------------------------------------------

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent generator from a master seed and a list of
/// stream tags (purpose, replicate index, …).  Identical inputs give the
/// identical stream regardless of execution order, which is what makes
/// parallel ensembles bit-reproducible.
pub(crate) fn stream_rng(master: u64, tags: &[u64]) -> ChaCha8Rng {
    let mut h = splitmix64(master);
    for &t in tags {
        h = splitmix64(h ^ t.wrapping_mul(0xA24B_AED4_963E_E407));
    }
    ChaCha8Rng::seed_from_u64(h)
}

/// Stream tags (first entry of the tag list) for the different consumers
/// of a master seed.
const TAG_BASE_SAMPLE: u64 = 1;
const TAG_REPLICATE: u64 = 2;
const TAG_TRIAL: u64 = 3;

// ---------------------------------------------------------------------------
// Sampling models
// ---------------------------------------------------------------------------

/// How the random right-hand side `b_n` arises.
#[derive(Debug, Clone)]
pub enum SamplingKind {
    /// `n` categorical draws from the simplex vector `t`; the empirical
    /// frequency vector is `b_n` itself.
    Multinomial { t: Vec<f64>, n: u64 },
    /// Two independent multinomials of size `n` over the marginals of a
    /// transport problem; `b_n` stacks `t_n` and `s_n` with the last
    /// (redundant) row of `s_n` dropped.
    OtMarginals { t: Vec<f64>, s: Vec<f64>, n: u64 },
    /// I.i.d. rows whose mean is `b_n`; resampling draws rows with
    /// replacement.
    IidRows { data: DMatrix<f64> },
}

#[derive(Debug, Clone)]
pub struct SamplingModel {
    pub kind: SamplingKind,
    pub seed: u64,
}

/// One draw from a sampling model: the right-hand side to solve with,
/// plus the raw empirical frequencies when the model is a transport pair.
#[derive(Debug, Clone)]
pub struct EmpiricalSample {
    pub b_n: DVector<f64>,
    pub t_n: Option<Vec<f64>>,
    pub s_n: Option<Vec<f64>>,
}

fn check_simplex(name: &str, t: &[f64]) -> Result<(), InferenceError> {
    if t.is_empty() {
        return Err(InferenceError::InvalidConfig(format!("{name} is empty")));
    }
    if t.iter().any(|&p| !p.is_finite() || p < 0.0) {
        return Err(InferenceError::InvalidConfig(format!(
            "{name} has a negative or non-finite entry"
        )));
    }
    let sum: f64 = t.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(InferenceError::InvalidConfig(format!(
            "{name} sums to {sum}, not 1"
        )));
    }
    Ok(())
}

impl SamplingModel {
    pub fn multinomial(t: Vec<f64>, n: u64, seed: u64) -> Result<Self, InferenceError> {
        check_simplex("t", &t)?;
        if n == 0 {
            return Err(InferenceError::InvalidConfig("n must be at least 1".into()));
        }
        Ok(SamplingModel {
            kind: SamplingKind::Multinomial { t, n },
            seed,
        })
    }

    pub fn ot_marginals(t: Vec<f64>, s: Vec<f64>, n: u64, seed: u64) -> Result<Self, InferenceError> {
        check_simplex("t", &t)?;
        check_simplex("s", &s)?;
        if n == 0 {
            return Err(InferenceError::InvalidConfig("n must be at least 1".into()));
        }
        Ok(SamplingModel {
            kind: SamplingKind::OtMarginals { t, s, n },
            seed,
        })
    }

    pub fn iid_rows(data: DMatrix<f64>, seed: u64) -> Result<Self, InferenceError> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(InferenceError::InvalidConfig("data matrix is empty".into()));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(InferenceError::InvalidConfig(
                "data matrix has a non-finite entry".into(),
            ));
        }
        Ok(SamplingModel {
            kind: SamplingKind::IidRows { data },
            seed,
        })
    }

    /// Sample size driving the `√n` scaling.
    pub fn n_effective(&self) -> u64 {
        match &self.kind {
            SamplingKind::Multinomial { n, .. } | SamplingKind::OtMarginals { n, .. } => *n,
            SamplingKind::IidRows { data } => data.nrows() as u64,
        }
    }

    pub fn with_seed(&self, seed: u64) -> SamplingModel {
        SamplingModel {
            kind: self.kind.clone(),
            seed,
        }
    }
}

/// Multinomial counts by the conditional-binomial decomposition.
fn multinomial_counts(rng: &mut ChaCha8Rng, n: u64, probs: &[f64]) -> Vec<u64> {
    let m = probs.len();
    let mut counts = vec![0u64; m];
    let mut left = n;
    let mut rest = 1.0f64;
    for i in 0..m {
        if left == 0 || rest <= 0.0 {
            break;
        }
        if i == m - 1 {
            counts[i] = left;
            break;
        }
        let frac = (probs[i] / rest).clamp(0.0, 1.0);
        let draw = Binomial::new(left, frac)
            .expect("conditional binomial probability is in [0,1]")
            .sample(rng);
        counts[i] = draw;
        left -= draw;
        rest -= probs[i];
    }
    counts
}

fn frequencies(rng: &mut ChaCha8Rng, n: u64, probs: &[f64]) -> Vec<f64> {
    multinomial_counts(rng, n, probs)
        .into_iter()
        .map(|c| c as f64 / n as f64)
        .collect()
}

fn sample_with_rng(kind: &SamplingKind, rng: &mut ChaCha8Rng) -> EmpiricalSample {
    match kind {
        SamplingKind::Multinomial { t, n } => {
            let t_n = frequencies(rng, *n, t);
            EmpiricalSample {
                b_n: DVector::from_column_slice(&t_n),
                t_n: Some(t_n),
                s_n: None,
            }
        }
        SamplingKind::OtMarginals { t, s, n } => {
            let t_n = frequencies(rng, *n, t);
            let s_n = frequencies(rng, *n, s);
            let mut b = t_n.clone();
            b.extend_from_slice(&s_n[..s_n.len() - 1]);
            EmpiricalSample {
                b_n: DVector::from_vec(b),
                t_n: Some(t_n),
                s_n: Some(s_n),
            }
        }
        SamplingKind::IidRows { data } => {
            let _ = rng; // the base sample is the data itself
            EmpiricalSample {
                b_n: data.row_mean().transpose(),
                t_n: None,
                s_n: None,
            }
        }
    }
}

/// Draws the empirical right-hand side `b_n` of the model: multinomial
/// frequencies for categorical models, the row mean for i.i.d. data.
/// Fully determined by the model's seed.
pub fn sample_empirical(model: &SamplingModel) -> EmpiricalSample {
    let mut rng = stream_rng(model.seed, &[TAG_BASE_SAMPLE]);
    sample_with_rng(&model.kind, &mut rng)
}

/// Resamples *from the empirical distribution* of a base sample: the
/// bootstrap step.  Multinomial models redraw `Mult(n, t_n)`; i.i.d.
/// models draw rows with replacement.
fn resample(kind: &SamplingKind, base: &EmpiricalSample, rng: &mut ChaCha8Rng) -> DVector<f64> {
    match kind {
        SamplingKind::Multinomial { n, .. } => {
            let t_n = base.t_n.as_ref().expect("multinomial base has t_n");
            DVector::from_vec(frequencies(rng, *n, t_n))
        }
        SamplingKind::OtMarginals { n, .. } => {
            let t_n = base.t_n.as_ref().expect("transport base has t_n");
            let s_n = base.s_n.as_ref().expect("transport base has s_n");
            let tb = frequencies(rng, *n, t_n);
            let sb = frequencies(rng, *n, s_n);
            let mut b = tb;
            b.extend_from_slice(&sb[..sb.len() - 1]);
            DVector::from_vec(b)
        }
        SamplingKind::IidRows { data } => {
            let n = data.nrows();
            let mut mean = DVector::zeros(data.ncols());
            for _ in 0..n {
                let i = rng.random_range(0..n);
                mean += data.row(i).transpose();
            }
            mean / n as f64
        }
    }
}

// ---------------------------------------------------------------------------
// Bootstrap ensemble
// ---------------------------------------------------------------------------

/// Everything the debiased estimator needs apart from the right-hand
/// side: the LP template, the penalty, and the strength `r_n` (a function
/// of `n`, hence identical across bootstrap replicates).
#[derive(Debug, Clone)]
pub struct EstimatorConfig {
    pub lp_template: StandardFormLP,
    pub pen: PenaltySpec,
    pub r_n: f64,
    pub opts: SolverOptions,
}

impl EstimatorConfig {
    pub fn estimate(&self, b_n: &DVector<f64>) -> Result<DebiasedEstimate, OracleError> {
        let lp = self.lp_template.with_b(b_n.clone())?;
        debiased_estimate(&lp, &self.pen, self.r_n, &self.opts)
    }
}

/// Debiased estimates recomputed on `B` resamples of one data set.
#[derive(Debug, Clone)]
pub struct BootstrapEnsemble {
    /// One row per surviving replicate (`B − failed` × m).
    pub replicates: DMatrix<f64>,
    /// The estimate on the original sample, x̂_n.
    pub center: Vec<f64>,
    /// Replicates requested.
    pub b: usize,
    /// Indices of replicates whose estimator did not converge; their rows
    /// are excluded from `replicates`.
    pub failed: Vec<usize>,
    pub seed: u64,
}

/// Runs the full debiased estimator on `B` bootstrap resamples of the
/// model's empirical sample.
///
/// Replicate `i` draws its randomness from the stream `(seed, i)`, so the
/// ensemble is bit-identical however the replicates are scheduled.  If
/// more than 1% of replicates fail, a [`InferenceError::ReplicateFailure`]
/// is returned that still carries the ensemble of survivors.
pub fn bootstrap_ensemble(
    model: &SamplingModel,
    cfg: &EstimatorConfig,
    b: usize,
    seed: u64,
) -> Result<BootstrapEnsemble, InferenceError> {
    if b < 2 {
        return Err(InferenceError::InvalidConfig(
            "bootstrap needs at least B = 2 replicates".into(),
        ));
    }
    let base = sample_empirical(model);
    let center = cfg.estimate(&base.b_n)?;

    let results: Vec<Option<Vec<f64>>> = (0..b)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, &[TAG_REPLICATE, i as u64]);
            let b_tilde = resample(&model.kind, &base, &mut rng);
            cfg.estimate(&b_tilde).ok().map(|est| est.x_hat)
        })
        .collect();

    let m = center.x_hat.len();
    let mut rows: Vec<f64> = Vec::with_capacity(b * m);
    let mut failed = Vec::new();
    for (i, res) in results.into_iter().enumerate() {
        match res {
            Some(row) => rows.extend_from_slice(&row),
            None => failed.push(i),
        }
    }
    let ensemble = BootstrapEnsemble {
        replicates: DMatrix::from_row_slice(b - failed.len(), m, &rows),
        center: center.x_hat,
        b,
        failed: failed.clone(),
        seed,
    };
    if failed.len() * 100 > b {
        return Err(InferenceError::ReplicateFailure {
            failed,
            requested: b,
            ensemble: Box::new(ensemble),
        });
    }
    Ok(ensemble)
}

// ---------------------------------------------------------------------------
// Confidence sets
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfidenceKind {
    Entrywise,
    UniformBand,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfidenceSet {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub alpha: f64,
    pub kind: ConfidenceKind,
    /// Set when the ensemble was a point mass and the intervals collapsed
    /// to the center; informative, not fatal.
    pub degenerate_ensemble: bool,
}

impl ConfidenceSet {
    pub fn covers(&self, i: usize, value: f64) -> bool {
        self.lo[i] <= value && value <= self.hi[i]
    }

    pub fn width(&self, i: usize) -> f64 {
        self.hi[i] - self.lo[i]
    }
}

/// Empirical quantile with type-7 (linear) interpolation on a sorted
/// slice.  This is the documented convention for every quantile in the
/// crate.
pub(crate) fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    debug_assert!(n > 0 && (0.0..=1.0).contains(&p));
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn check_alpha(alpha: f64) -> Result<(), InferenceError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(InferenceError::InvalidConfig(format!(
            "alpha must be in (0,1), got {alpha}"
        )));
    }
    Ok(())
}

/// Entrywise quantile intervals: for each coordinate the empirical
/// quantiles `F̂⁻¹` of `√n(x̃ᵢ − x̂ᵢ)` across replicates give
/// `[x̂ᵢ − F̂⁻¹(1−α/2)/√n, x̂ᵢ − F̂⁻¹(α/2)/√n]`.
pub fn ci_entrywise(
    ens: &BootstrapEnsemble,
    n: u64,
    alpha: f64,
) -> Result<ConfidenceSet, InferenceError> {
    check_alpha(alpha)?;
    let b_ok = ens.replicates.nrows();
    if b_ok == 0 {
        return Err(InferenceError::InvalidConfig(
            "ensemble has no surviving replicates".into(),
        ));
    }
    let sqrt_n = (n as f64).sqrt();
    let m = ens.center.len();
    let mut lo = vec![0.0; m];
    let mut hi = vec![0.0; m];
    let mut degenerate = true;
    let mut deltas = vec![0.0; b_ok];
    for i in 0..m {
        for (bi, d) in deltas.iter_mut().enumerate() {
            *d = sqrt_n * (ens.replicates[(bi, i)] - ens.center[i]);
        }
        deltas.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if deltas[b_ok - 1] - deltas[0] > 0.0 {
            degenerate = false;
        }
        let q_lo = quantile_type7(&deltas, alpha / 2.0);
        let q_hi = quantile_type7(&deltas, 1.0 - alpha / 2.0);
        lo[i] = ens.center[i] - q_hi / sqrt_n;
        hi[i] = ens.center[i] - q_lo / sqrt_n;
    }
    Ok(ConfidenceSet {
        lo,
        hi,
        alpha,
        kind: ConfidenceKind::Entrywise,
        degenerate_ensemble: degenerate,
    })
}

/// Uniform band over a grid of functionals: center ± `u_{1−α}/√n` where
/// `u_{1−α}` is the empirical `1−α` quantile of the sup-deviation
/// `√n·max_ξ |curve_b(ξ) − center(ξ)|` across replicates.
pub fn uniform_band(
    curve_replicates: &DMatrix<f64>,
    center_curve: &[f64],
    n: u64,
    alpha: f64,
) -> Result<ConfidenceSet, InferenceError> {
    check_alpha(alpha)?;
    let g = center_curve.len();
    if g == 0 || curve_replicates.ncols() != g || curve_replicates.nrows() == 0 {
        return Err(InferenceError::InvalidConfig(
            "curve replicates and center must share a nonempty grid".into(),
        ));
    }
    let sqrt_n = (n as f64).sqrt();
    let mut sups: Vec<f64> = (0..curve_replicates.nrows())
        .map(|bi| {
            (0..g)
                .map(|j| sqrt_n * (curve_replicates[(bi, j)] - center_curve[j]).abs())
                .fold(0.0f64, f64::max)
        })
        .collect();
    sups.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let u = quantile_type7(&sups, 1.0 - alpha);
    let half = u / sqrt_n;
    Ok(ConfidenceSet {
        lo: center_curve.iter().map(|&c| c - half).collect(),
        hi: center_curve.iter().map(|&c| c + half).collect(),
        alpha,
        kind: ConfidenceKind::UniformBand,
        degenerate_ensemble: sups[sups.len() - 1] == 0.0,
    })
}

// ---------------------------------------------------------------------------
// Distributional diagnostics
// ---------------------------------------------------------------------------

/// Standard normal CDF via the complementary error function; accurate to
/// better than 1e-12 over the double range.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Kolmogorov–Smirnov distance between the empirical law of `samples`
/// and the standard normal, with the supremum evaluated at the jump
/// points of the empirical CDF.
pub fn ks_normal(samples: &[f64]) -> f64 {
    assert!(!samples.is_empty(), "KS distance of an empty sample");
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    let mut i = 0;
    while i < xs.len() {
        let mut j = i + 1;
        while j < xs.len() && xs[j] == xs[i] {
            j += 1;
        }
        let phi = normal_cdf(xs[i]);
        let below = i as f64 / n;
        let at = j as f64 / n;
        d = d.max((phi - below).abs()).max((at - phi).abs());
        i = j;
    }
    d
}

/// Two-sample Kolmogorov–Smirnov distance: the supremum gap between the
/// empirical CDFs, evaluated by merging the sorted samples.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty(), "KS distance of an empty sample");
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(|p, q| p.partial_cmp(q).unwrap());
    ys.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let (na, nb) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < xs.len() || j < ys.len() {
        // Advance past the smallest remaining value in both samples so the
        // CDFs are compared just after each jump.
        let v = match (xs.get(i), ys.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        while i < xs.len() && xs[i] <= v {
            i += 1;
        }
        while j < ys.len() && ys[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

// ---------------------------------------------------------------------------
// Coverage experiment
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct CoverageConfig {
    /// Outer Monte-Carlo trials (fresh data sets).
    pub trials: usize,
    /// Bootstrap replicates per trial.
    pub inner_b: usize,
    pub model: SamplingModel,
    pub estimator: EstimatorConfig,
    /// The exact solution whose coverage is being checked.
    pub target: Vec<f64>,
    pub alpha: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverageReport {
    /// Fraction of trials whose interval covered the target, per entry.
    pub coverage: Vec<f64>,
    pub trials: usize,
    /// Total replicate failures across all trials.
    pub replicate_failures: usize,
}

/// Repeats (sample → bootstrap → interval) over fresh data sets and
/// reports how often the intervals cover the exact solution.
///
/// Trial `t` derives its data seed and bootstrap seed from the master
/// seed and `t`, so the whole experiment is reproducible from one number.
pub fn coverage_experiment(cfg: &CoverageConfig) -> Result<CoverageReport, InferenceError> {
    if cfg.trials < 50 {
        return Err(InferenceError::InvalidConfig(format!(
            "need at least 50 outer trials for a meaningful rate, got {}",
            cfg.trials
        )));
    }
    check_alpha(cfg.alpha)?;
    let m = cfg.target.len();
    let n = cfg.model.n_effective();
    let mut covered = vec![0usize; m];
    let mut failures = 0usize;
    for t in 0..cfg.trials {
        let trial_seed = splitmix64(cfg.model.seed ^ (TAG_TRIAL << 56) ^ t as u64);
        let model_t = cfg.model.with_seed(trial_seed);
        let ens = match bootstrap_ensemble(&model_t, &cfg.estimator, cfg.inner_b, trial_seed) {
            Ok(e) => e,
            Err(InferenceError::ReplicateFailure {
                failed, ensemble, ..
            }) => {
                failures += failed.len();
                *ensemble
            }
            Err(other) => return Err(other),
        };
        failures += ens.failed.len();
        let ci = ci_entrywise(&ens, n, cfg.alpha)?;
        for i in 0..m {
            if ci.covers(i, cfg.target[i]) {
                covered[i] += 1;
            }
        }
    }
    Ok(CoverageReport {
        coverage: covered
            .into_iter()
            .map(|c| c as f64 / cfg.trials as f64)
            .collect(),
        trials: cfg.trials,
        replicate_failures: failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::penalty::{make_penalty, PenaltyKind};
    use approx::assert_abs_diff_eq;

    fn ot_lp_template() -> StandardFormLP {
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

    fn ot_estimator(kind: PenaltyKind, r_n: f64) -> EstimatorConfig {
        EstimatorConfig {
            lp_template: ot_lp_template(),
            pen: make_penalty(kind).unwrap(),
            r_n,
            opts: SolverOptions::default(),
        }
    }

    #[test]
    fn multinomial_counts_partition_n() {
        let mut rng = stream_rng(7, &[9]);
        for &n in &[1u64, 13, 1000] {
            let counts = multinomial_counts(&mut rng, n, &[0.2, 0.5, 0.25, 0.05]);
            assert_eq!(counts.iter().sum::<u64>(), n);
        }
    }

    #[test]
    fn degenerate_category_is_sampled_surely() {
        let model = SamplingModel::multinomial(vec![1.0, 0.0], 57, 3).unwrap();
        let s = sample_empirical(&model);
        assert_eq!(s.b_n.as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn sampling_is_deterministic_in_the_seed() {
        let model = SamplingModel::ot_marginals(vec![0.5, 0.5], vec![0.5, 0.5], 1000, 42).unwrap();
        let a = sample_empirical(&model);
        let b = sample_empirical(&model);
        assert_eq!(a.b_n, b.b_n);
        let c = sample_empirical(&model.with_seed(43));
        assert_ne!(a.b_n, c.b_n);
        // b_n stacks t_n and all but the last entry of s_n.
        assert_eq!(a.b_n.len(), 3);
        assert_abs_diff_eq!(a.b_n[0] + a.b_n[1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn iid_rows_mean_and_validation() {
        let data = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 3.0, 2.0, 5.0, 4.0, 7.0, 2.0]);
        let model = SamplingModel::iid_rows(data, 0).unwrap();
        let s = sample_empirical(&model);
        assert_abs_diff_eq!(s.b_n[0], 4.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.b_n[1], 2.0, epsilon = 1e-15);
        assert!(SamplingModel::iid_rows(DMatrix::zeros(0, 2), 0).is_err());
        assert!(SamplingModel::multinomial(vec![0.7, 0.7], 10, 0).is_err());
        assert!(SamplingModel::multinomial(vec![0.5, 0.5], 0, 0).is_err());
    }

    #[test]
    fn bootstrap_is_reproducible_and_centered() {
        let model = SamplingModel::ot_marginals(vec![0.5, 0.5], vec![0.5, 0.5], 10_000, 11).unwrap();
        let cfg = ot_estimator(PenaltyKind::LogBarrier, 0.05);
        let e1 = bootstrap_ensemble(&model, &cfg, 8, 99).unwrap();
        let e2 = bootstrap_ensemble(&model, &cfg, 8, 99).unwrap();
        assert_eq!(e1.replicates, e2.replicates);
        assert_eq!(e1.center, e2.center);
        assert!(e1.failed.is_empty());
        assert_eq!(e1.replicates.nrows(), 8);
        assert!(e1.replicates.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn degenerate_model_gives_identical_replicates() {
        // t = s = (1, 0): every resample is the same point mass, so all
        // replicate estimates coincide and intervals collapse.  The
        // feasible set has no strict interior, which rules out barrier
        // penalties but not the exponential one.
        let model = SamplingModel::ot_marginals(vec![1.0, 0.0], vec![1.0, 0.0], 100, 5).unwrap();
        let cfg = ot_estimator(PenaltyKind::Exponential, 0.1);
        let ens = bootstrap_ensemble(&model, &cfg, 4, 1).unwrap();
        for bi in 0..4 {
            for j in 0..4 {
                assert_eq!(ens.replicates[(bi, j)], ens.center[j]);
            }
        }
        let ci = ci_entrywise(&ens, 100, 0.05).unwrap();
        assert!(ci.degenerate_ensemble);
        for i in 0..4 {
            assert_eq!(ci.lo[i], ci.hi[i]);
            assert_eq!(ci.lo[i], ens.center[i]);
        }
    }

    #[test]
    fn base_estimate_failure_is_its_own_error() {
        let model = SamplingModel::ot_marginals(vec![0.5, 0.5], vec![0.5, 0.5], 1000, 2).unwrap();
        let mut cfg = ot_estimator(PenaltyKind::LogBarrier, 0.05);
        cfg.opts.max_iter = 1; // every solve diverges
        match bootstrap_ensemble(&model, &cfg, 4, 3) {
            Err(InferenceError::BaseEstimateFailed(_)) => {}
            other => panic!("expected the base estimate to fail first, got {other:?}"),
        }
    }

    #[test]
    fn replicate_failures_are_flagged_with_the_ensemble() {
        // Rows {2, 2, −1} have mean 1, so the base problem x₁+x₂ = 1 is
        // fine; a resample drawing the −1 row twice or more has a
        // nonpositive right-hand side, which the barrier solve rejects.
        let data = DMatrix::from_row_slice(3, 1, &[2.0, 2.0, -1.0]);
        let model = SamplingModel::iid_rows(data, 61).unwrap();
        let cfg = EstimatorConfig {
            lp_template: StandardFormLP::new(
                DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
                DVector::from_vec(vec![1.0]),
                DVector::from_vec(vec![0.0, 1.0]),
            )
            .unwrap(),
            pen: make_penalty(PenaltyKind::LogBarrier).unwrap(),
            r_n: 0.05,
            opts: SolverOptions::default(),
        };
        match bootstrap_ensemble(&model, &cfg, 16, 4) {
            Err(InferenceError::ReplicateFailure {
                failed,
                requested,
                ensemble,
            }) => {
                assert_eq!(requested, 16);
                assert!(!failed.is_empty());
                assert_eq!(ensemble.replicates.nrows(), 16 - failed.len());
                assert_eq!(ensemble.failed, failed);
                assert!(ensemble.replicates.iter().all(|x| x.is_finite()));
            }
            other => panic!("expected ReplicateFailure, got {other:?}"),
        }
    }

    #[test]
    fn type7_quantiles_interpolate() {
        let sorted = [1.0, 2.0, 4.0];
        assert_eq!(quantile_type7(&sorted, 0.0), 1.0);
        assert_eq!(quantile_type7(&sorted, 1.0), 4.0);
        assert_abs_diff_eq!(quantile_type7(&sorted, 0.5), 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(quantile_type7(&sorted, 0.75), 3.0, epsilon = 1e-15);
        assert_eq!(quantile_type7(&[5.0], 0.3), 5.0);
    }

    #[test]
    fn two_point_ensemble_interval_follows_type7() {
        // Replicates {c−h, c+h} with α = 1/2: the type-7 quantiles of
        // √n(x̃−x̂) sit at ±√n·h/2, so the interval is [c−h/2, c+h/2].
        let n = 4u64;
        let (c, h) = (1.0, 0.25);
        let ens = BootstrapEnsemble {
            replicates: DMatrix::from_row_slice(2, 1, &[c - h, c + h]),
            center: vec![c],
            b: 2,
            failed: vec![],
            seed: 0,
        };
        let ci = ci_entrywise(&ens, n, 0.5).unwrap();
        assert_abs_diff_eq!(ci.lo[0], c - h / 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(ci.hi[0], c + h / 2.0, epsilon = 1e-14);
    }

    #[test]
    fn interval_width_grows_as_alpha_shrinks() {
        let model = SamplingModel::ot_marginals(vec![0.5, 0.5], vec![0.5, 0.5], 10_000, 21).unwrap();
        let cfg = ot_estimator(PenaltyKind::LogBarrier, 0.05);
        let ens = bootstrap_ensemble(&model, &cfg, 64, 7).unwrap();
        let wide = ci_entrywise(&ens, 10_000, 0.05).unwrap();
        let narrow = ci_entrywise(&ens, 10_000, 0.5).unwrap();
        for i in 0..4 {
            assert!(wide.width(i) >= narrow.width(i) - 1e-15);
            assert!(wide.lo[i] <= wide.hi[i]);
        }
    }

    #[test]
    fn uniform_band_covers_entrywise_cases() {
        // All curves equal the center: zero width.
        let center = [0.3, 0.7];
        let flat = DMatrix::from_row_slice(3, 2, &[0.3, 0.7, 0.3, 0.7, 0.3, 0.7]);
        let band = uniform_band(&flat, &center, 100, 0.1).unwrap();
        assert!(band.degenerate_ensemble);
        assert_eq!(band.lo, vec![0.3, 0.7]);
        assert_eq!(band.hi, vec![0.3, 0.7]);

        // Singleton grid: the band equals a symmetric entrywise interval
        // built from |deviations|.
        let reps = DMatrix::from_row_slice(4, 1, &[0.1, 0.2, 0.05, 0.4]);
        let b1 = uniform_band(&reps, &[0.2], 10_000, 0.5).unwrap();
        let mut devs: Vec<f64> = [0.1f64, 0.0, 0.15, 0.2]
            .iter()
            .map(|d| 100.0 * d)
            .collect();
        devs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let u = quantile_type7(&devs, 0.5) / 100.0;
        assert_abs_diff_eq!(b1.hi[0] - 0.2, u, epsilon = 1e-14);
        assert_abs_diff_eq!(0.2 - b1.lo[0], u, epsilon = 1e-14);
    }

    #[test]
    fn ks_normal_matches_hand_values() {
        assert_abs_diff_eq!(ks_normal(&[0.0]), 0.5, epsilon = 1e-12);
        // Exact normal quantiles at midpoints: KS ≤ 1/(2N) + inversion slack.
        let n = 1000;
        let quantiles: Vec<f64> = (1..=n)
            .map(|i| {
                let p = (i as f64 - 0.5) / n as f64;
                let (mut lo, mut hi) = (-10.0f64, 10.0f64);
                for _ in 0..80 {
                    let mid = 0.5 * (lo + hi);
                    if normal_cdf(mid) < p {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                0.5 * (lo + hi)
            })
            .collect();
        assert!(ks_normal(&quantiles) <= 0.5 / n as f64 + 1e-9);
        // A mean-10 shift leaves essentially no overlap.
        let shifted: Vec<f64> = quantiles.iter().map(|x| x + 10.0).collect();
        assert!(ks_normal(&shifted) > 0.99);
    }

    #[test]
    fn ks_two_sample_matches_hand_values() {
        assert_eq!(ks_two_sample(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0]), 0.0);
        assert_eq!(ks_two_sample(&[0.0], &[1.0]), 1.0);
        // Interleaved: the CDFs differ by ½ just after 1 and just after 3.
        assert_abs_diff_eq!(ks_two_sample(&[1.0, 3.0], &[2.0, 4.0]), 0.5, epsilon = 1e-15);
        // Ties inside and across samples.
        assert_abs_diff_eq!(
            ks_two_sample(&[1.0, 1.0, 2.0], &[1.0, 2.0, 2.0]),
            1.0 / 3.0,
            epsilon = 1e-15
        );
        // Unequal sizes: {1} vs {0,2}: after 0 the gap is ½, after 1 it is ½.
        assert_abs_diff_eq!(ks_two_sample(&[1.0], &[0.0, 2.0]), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn normal_cdf_reference_points() {
        assert_abs_diff_eq!(normal_cdf(0.0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(normal_cdf(1.959963984540054), 0.975, epsilon = 1e-12);
        assert_abs_diff_eq!(normal_cdf(-8.0), 6.22096057427178e-16, epsilon = 1e-26);
    }

    #[test]
    fn coverage_experiment_is_exact_on_degenerate_models() {
        // t = s = (1,0) is a point mass: every trial sees the identical
        // sample, every interval has zero width, and coverage of the
        // (deterministic) estimate itself is exactly 1.
        let model = SamplingModel::ot_marginals(vec![1.0, 0.0], vec![1.0, 0.0], 50, 17).unwrap();
        let estimator = ot_estimator(PenaltyKind::Exponential, 0.1);
        let constant = estimator
            .estimate(&sample_empirical(&model).b_n)
            .unwrap()
            .x_hat;
        // The extrapolated estimate sits near the exact plan (1,0,0,0).
        assert_abs_diff_eq!(constant[0], 1.0, epsilon = 2e-2);
        let cfg = CoverageConfig {
            trials: 50,
            inner_b: 4,
            model,
            estimator,
            target: constant,
            alpha: 0.05,
        };
        let report = coverage_experiment(&cfg).unwrap();
        assert_eq!(report.trials, 50);
        assert_eq!(report.coverage, vec![1.0; 4]);
        assert_eq!(report.replicate_failures, 0);
        assert!(coverage_experiment(&CoverageConfig {
            trials: 10,
            ..cfg
        })
        .is_err());
    }
}
