//! `coloc`: colocalization curves of two images with bootstrap bands.
//!
//! The two images are normalized to probability vectors over their
//! pixels, the transport cost is the Euclidean pixel distance, and the
//! colocalization curve `Col(ξ)` is the plan mass transported at most ξ
//! pixels.  The run computes the exact curve from a full LP solve
//! (restricted to the joint support), a debiased subsampled estimate, an
//! entropically smoothed estimate on the same subsample, and a uniform
//! bootstrap band around the debiased curve.
//!
//! Without image paths a built-in 32×32 pair is used: two Gaussian spots
//! offset by a few pixels, thresholded so each support holds ~25 pixels.
//! That keeps the exact LP small while leaving the subsample size `n`
//! well below the number of support pairs, as required.

use std::path::PathBuf;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use lp_debias_core::transport::pgm::{read_pgm, PgmImage};
use lp_debias_core::{
    check_assumptions, colocalization, debiased_estimate, make_penalty, ot_to_lp,
    plan_from_vector, sinkhorn, solve_lp, uniform_band, OtProblem, PenaltySpec, SolverOptions,
    SupportRestriction,
};

use crate::experiments::{multinomial_frequencies, require, PenaltyName, TAG_COLOC_BOOT, TAG_COLOC_SAMPLE};
use crate::manifest::{ResultBundle, RunManifest, Table, SCHEMA_VERSION};
use crate::{derive_seed, fmt_f64, CliError, DEFAULT_SEED};

const SINKHORN_TOL: f64 = 1e-11;
const SINKHORN_MAX_ITER: usize = 100_000;

/// Thresholds below this are dominated by subsampling resolution; the
/// coverage figure in the summary is reported for ξ ≥ this cut.
pub const LARGE_XI_CUT: f64 = 2.0;

#[derive(Debug, Clone, Serialize)]
pub struct ColocConfig {
    /// Both paths or neither; absent means the built-in synthetic pair.
    pub image_a: Option<PathBuf>,
    pub image_b: Option<PathBuf>,
    /// Subsample size; must not exceed the number of support pairs.
    pub n: u64,
    /// Bootstrap replicates for the band.
    pub b: usize,
    /// Entropic smoothing strength of the comparison estimate.
    pub lambda: f64,
    pub alpha: f64,
    /// Penalty family of the debiased estimate.
    pub penalty: PenaltyName,
    pub r0: f64,
    pub seed: u64,
    pub xi_max: f64,
    pub xi_step: f64,
}

impl Default for ColocConfig {
    fn default() -> Self {
        ColocConfig {
            image_a: None,
            image_b: None,
            n: 500,
            b: 200,
            lambda: 2.0,
            alpha: 0.05,
            penalty: PenaltyName::Log,
            r0: 3.0,
            seed: DEFAULT_SEED,
            xi_max: 14.0,
            xi_step: 0.5,
        }
    }
}

/// A Gaussian spot on a `side`×`side` canvas, thresholded to a compact
/// support. Deterministic; the geometry is part of the experiment.
fn gaussian_spot(side: usize, center: (f64, f64), sigma: f64, floor: u16) -> PgmImage {
    let mut px = vec![0u16; side * side];
    for (idx, p) in px.iter_mut().enumerate() {
        let (r, c) = ((idx / side) as f64, (idx % side) as f64);
        let d2 = (r - center.0).powi(2) + (c - center.1).powi(2);
        let v = (255.0 * (-d2 / (2.0 * sigma * sigma)).exp()).round() as u16;
        if v >= floor {
            *p = v;
        }
    }
    PgmImage::new(side, side, 255, px).expect("spot image is well formed")
}

/// The built-in image pair: two equal spots offset by ~4.3 pixels.
pub fn synthetic_pair() -> (PgmImage, PgmImage) {
    (
        gaussian_spot(32, (11.2, 15.4), 1.8, 70),
        gaussian_spot(32, (14.8, 13.1), 1.8, 70),
    )
}

/// Sub-pixel jitter applied to pixel positions before measuring
/// distances (same hash construction as the grid experiment).  On an
/// exact lattice the transport LP ties along every collinear pixel
/// triple — the optimal plan is then non-unique and the curve of a
/// returned vertex is an arbitrary selection.  Displacing each position
/// deterministically by well under half a pixel breaks the ties while
/// moving every threshold crossing by less than a pixel.
const PIXEL_JITTER: f64 = 0.3;

fn jittered_position(row: usize, col: usize) -> (f64, f64) {
    let mut h = (((row as u64) << 32) | col as u64) ^ 0x9E37_79B9_7F4A_7C15;
    let u1 = crate::splitmix64(&mut h) as f64 / u64::MAX as f64 - 0.5;
    let u2 = crate::splitmix64(&mut h) as f64 / u64::MAX as f64 - 0.5;
    (row as f64 + PIXEL_JITTER * u1, col as f64 + PIXEL_JITTER * u2)
}

/// Euclidean distance between (jittered) pixel centers of a `w`×`h`
/// canvas, row-major indexing.
fn pixel_cost(w: usize, h: usize) -> DMatrix<f64> {
    let q = w * h;
    let pos: Vec<(f64, f64)> = (0..q).map(|a| jittered_position(a / w, a % w)).collect();
    DMatrix::from_fn(q, q, |a, b| {
        let (ra, ca) = pos[a];
        let (rb, cb) = pos[b];
        ((ra - rb).powi(2) + (ca - cb).powi(2)).sqrt()
    })
}

/// Debiased plan for empirical marginals on the atoms of `restr`,
/// restricted further to the sampled support and re-embedded.
fn debiased_plan(
    t_n: &[f64],
    s_n: &[f64],
    cost: &DMatrix<f64>,
    pen: &PenaltySpec,
    r_n: f64,
    opts: &SolverOptions,
) -> Result<DMatrix<f64>, String> {
    let eprob =
        OtProblem::new(t_n.to_vec(), s_n.to_vec(), cost.clone()).map_err(|e| e.to_string())?;
    let erestr = eprob.restrict_support();
    let rlp = ot_to_lp(&erestr.problem);
    let est = debiased_estimate(&rlp, pen, r_n, opts).map_err(|e| e.to_string())?;
    let (p_r, q_r) = erestr.problem.shape();
    Ok(erestr.embed_plan(&plan_from_vector(p_r, q_r, &est.x_hat)))
}

fn load_images(cfg: &ColocConfig) -> Result<(PgmImage, PgmImage, String), CliError> {
    match (&cfg.image_a, &cfg.image_b) {
        (Some(a), Some(b)) => {
            let ia = read_pgm(a).map_err(|e| CliError::Config(format!("{}: {e}", a.display())))?;
            let ib = read_pgm(b).map_err(|e| CliError::Config(format!("{}: {e}", b.display())))?;
            Ok((ia, ib, format!("{}|{}", a.display(), b.display())))
        }
        (None, None) => {
            let (a, b) = synthetic_pair();
            Ok((a, b, "synthetic".to_string()))
        }
        _ => Err(CliError::Config(
            "pass both --image-a and --image-b, or neither for the synthetic pair".into(),
        )),
    }
}

pub fn run(cfg: &ColocConfig) -> Result<ResultBundle, CliError> {
    require(cfg.n >= 2, "subsample size must be ≥ 2")?;
    require(cfg.b >= 2, "bootstrap replicates must be ≥ 2")?;
    require(cfg.lambda > 0.0 && cfg.lambda.is_finite(), "lambda must be positive")?;
    require(cfg.alpha > 0.0 && cfg.alpha < 1.0, "alpha must lie in (0,1)")?;
    require(cfg.r0 > 0.0 && cfg.r0.is_finite(), "r0 must be positive and finite")?;
    require(
        cfg.xi_step > 0.0 && cfg.xi_max >= cfg.xi_step,
        "the threshold grid must be non-empty with positive step",
    )?;

    let (img_a, img_b, source) = load_images(cfg)?;
    if (img_a.width, img_a.height) != (img_b.width, img_b.height) {
        return Err(CliError::Config(format!(
            "images must have the same dimensions, got {}x{} and {}x{}",
            img_a.width, img_a.height, img_b.width, img_b.height
        )));
    }
    let t = img_a.to_simplex().map_err(|e| CliError::Config(e.to_string()))?;
    let s = img_b.to_simplex().map_err(|e| CliError::Config(e.to_string()))?;
    let cost = pixel_cost(img_a.width, img_a.height);
    let prob = OtProblem::new(t, s, cost).map_err(|e| CliError::Config(e.to_string()))?;
    let restr: SupportRestriction = prob.restrict_support();
    let (supp_a, supp_b) = restr.problem.shape();
    let pairs = (supp_a as u64) * (supp_b as u64);
    if cfg.n > pairs {
        return Err(CliError::Config(format!(
            "subsample size {} exceeds the {} support pairs ({supp_a}×{supp_b})",
            cfg.n, pairs
        )));
    }

    let rcost = restr.problem.cost().clone();
    let xi_grid: Vec<f64> = {
        let steps = (cfg.xi_max / cfg.xi_step).floor() as usize;
        (0..=steps).map(|i| i as f64 * cfg.xi_step).collect()
    };

    // Exact curve from the full LP on the joint support.  Uniqueness of
    // the exact plan is not guaranteed on pixel lattices (translated
    // pixel pairs tie exactly); the assumption flags are recorded rather
    // than enforced, and the reported curve belongs to the returned
    // optimal vertex.
    let rlp = ot_to_lp(&restr.problem);
    let report = check_assumptions(&rlp);
    let exact = solve_lp(&rlp).map_err(|e| CliError::Run(e.to_string()))?;
    let plan_star = plan_from_vector(supp_a, supp_b, &exact.x);
    let col_star = colocalization(&plan_star, &rcost, &xi_grid);

    // One subsample of size n from each marginal.
    let mut sample_rng =
        ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, TAG_COLOC_SAMPLE, 0, 0));
    let t_n = multinomial_frequencies(&mut sample_rng, cfg.n, restr.problem.t());
    let s_n = multinomial_frequencies(&mut sample_rng, cfg.n, restr.problem.s());

    let pen = make_penalty(cfg.penalty.kind()).map_err(|e| CliError::Config(e.to_string()))?;
    let opts = SolverOptions::default();
    let r_n = cfg.r0 / (cfg.n as f64).cbrt();

    let plan_hat =
        debiased_plan(&t_n, &s_n, &rcost, &pen, r_n, &opts).map_err(CliError::Run)?;
    let p_col = colocalization(&plan_hat, &rcost, &xi_grid);

    // The entropic comparison estimate on the same subsample.
    let eprob = OtProblem::new(t_n.clone(), s_n.clone(), rcost.clone())
        .map_err(|e| CliError::Run(e.to_string()))?;
    let erestr = eprob.restrict_support();
    let ent = sinkhorn(&erestr.problem, cfg.lambda, SINKHORN_TOL, SINKHORN_MAX_ITER)
        .map_err(|e| CliError::Run(e.to_string()))?;
    let plan_ent = erestr.embed_plan(&ent.plan);
    let r_col = colocalization(&plan_ent, &rcost, &xi_grid);

    // Bootstrap curves around the debiased estimate.
    let mut curves: Vec<Vec<f64>> = Vec::with_capacity(cfg.b);
    let mut boot_failures = 0usize;
    let mut first_failure: Option<String> = None;
    for rep in 0..cfg.b {
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, TAG_COLOC_BOOT, 0, rep as u64));
        let tb = multinomial_frequencies(&mut rng, cfg.n, &t_n);
        let sb = multinomial_frequencies(&mut rng, cfg.n, &s_n);
        match debiased_plan(&tb, &sb, &rcost, &pen, r_n, &opts) {
            Ok(plan) => curves.push(colocalization(&plan, &rcost, &xi_grid).values),
            Err(msg) => {
                boot_failures += 1;
                if first_failure.is_none() {
                    first_failure = Some(msg);
                }
            }
        }
    }
    if curves.len() < 2 {
        return Err(CliError::Run(format!(
            "bootstrap collapsed: {boot_failures} of {} replicates failed ({})",
            cfg.b,
            first_failure.as_deref().unwrap_or("no diagnostics")
        )));
    }
    let curve_mat = DMatrix::from_fn(curves.len(), xi_grid.len(), |i, j| curves[i][j]);
    let band = uniform_band(&curve_mat, &p_col.values, cfg.n, cfg.alpha)
        .map_err(|e| CliError::Run(e.to_string()))?;

    let mut table = Table::new(
        "curves",
        &["xi", "col_star", "p_col", "r_col", "band_lo", "band_hi"],
    );
    for (i, &xi) in xi_grid.iter().enumerate() {
        table.push(vec![
            fmt_f64(xi),
            fmt_f64(col_star.values[i]),
            fmt_f64(p_col.values[i]),
            fmt_f64(r_col.values[i]),
            fmt_f64(band.lo[i]),
            fmt_f64(band.hi[i]),
        ]);
    }

    // Sup-norm deviations from the exact curve, full grid and the
    // resolution-limited region.
    let sup_dev = |vals: &[f64], from: f64| {
        xi_grid
            .iter()
            .enumerate()
            .filter(|(_, &xi)| xi >= from)
            .map(|(i, _)| (vals[i] - col_star.values[i]).abs())
            .fold(0.0f64, f64::max)
    };
    let covered_large_xi: Vec<bool> = xi_grid
        .iter()
        .enumerate()
        .filter(|(_, &xi)| xi >= LARGE_XI_CUT)
        .map(|(i, _)| band.lo[i] <= col_star.values[i] && col_star.values[i] <= band.hi[i])
        .collect();
    let coverage_frac =
        covered_large_xi.iter().filter(|&&c| c).count() as f64 / covered_large_xi.len() as f64;

    let summary = json!({
        "schema_version": SCHEMA_VERSION,
        "experiment": "coloc",
        "seed": cfg.seed,
        "source": source,
        "width": img_a.width,
        "height": img_a.height,
        "support_a": supp_a,
        "support_b": supp_b,
        "support_pairs": pairs,
        "n": cfg.n,
        "b": cfg.b,
        "lambda": cfg.lambda,
        "alpha": cfg.alpha,
        "r_n": r_n,
        "penalty": cfg.penalty.as_str(),
        "assumptions": {
            "row_rank_ok": report.row_rank_ok,
            "slater_ok": report.slater_ok,
            "unique_solution_ok": report.unique_solution_ok,
            "degenerate": report.degenerate,
        },
        "sup_dev_debiased": sup_dev(&p_col.values, 0.0),
        "sup_dev_entropic": sup_dev(&r_col.values, 0.0),
        "sup_dev_debiased_large_xi": sup_dev(&p_col.values, LARGE_XI_CUT),
        "sup_dev_entropic_large_xi": sup_dev(&r_col.values, LARGE_XI_CUT),
        "large_xi_cut": LARGE_XI_CUT,
        "band_coverage_frac_large_xi": coverage_frac,
        "band_degenerate": band.degenerate_ensemble,
        "bootstrap_failures": boot_failures,
        "first_failure": first_failure,
    });
    Ok(ResultBundle {
        manifest: RunManifest::new("coloc", cfg.seed, cfg),
        summary,
        tables: vec![table],
        replicate_failures: boot_failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn the_synthetic_supports_leave_room_for_the_default_subsample() {
        let (a, b) = synthetic_pair();
        let na = a.pixels.iter().filter(|&&v| v > 0).count();
        let nb = b.pixels.iter().filter(|&&v| v > 0).count();
        assert!(na >= 20 && na <= 40, "support a = {na}");
        assert!(nb >= 20 && nb <= 40, "support b = {nb}");
        assert!(na * nb >= 500, "pairs = {}", na * nb);
    }

    #[test]
    fn pixel_costs_stay_within_the_jitter_of_the_lattice_metric() {
        let c = pixel_cost(4, 3);
        assert_eq!(c.nrows(), 12);
        assert_eq!(pixel_cost(4, 3), c, "the metric must be a pure function of the canvas");
        for a in 0..12usize {
            assert_eq!(c[(a, a)], 0.0);
            for b in 0..12usize {
                assert_eq!(c[(a, b)], c[(b, a)]);
                let (ra, ca) = ((a / 4) as f64, (a % 4) as f64);
                let (rb, cb) = ((b / 4) as f64, (b % 4) as f64);
                let nominal = ((ra - rb).powi(2) + (ca - cb).powi(2)).sqrt();
                // Each endpoint moves by at most PIXEL_JITTER/2 per axis.
                let slack = 2.0 * PIXEL_JITTER * 2f64.sqrt() / 2.0;
                assert!((c[(a, b)] - nominal).abs() <= slack);
            }
        }
    }

    #[test]
    fn mismatched_images_are_rejected() {
        let dir = std::env::temp_dir().join("lp_debias_coloc_dims_test");
        std::fs::create_dir_all(&dir).unwrap();
        let small = PgmImage::new(2, 2, 255, vec![10, 0, 0, 10]).unwrap();
        let big = PgmImage::new(3, 3, 255, vec![10, 0, 0, 0, 10, 0, 0, 0, 10]).unwrap();
        let pa = dir.join("a.pgm");
        let pb = dir.join("b.pgm");
        lp_debias_core::transport::pgm::write_pgm(&pa, &small, true).unwrap();
        lp_debias_core::transport::pgm::write_pgm(&pb, &big, true).unwrap();
        let cfg = ColocConfig {
            image_a: Some(pa),
            image_b: Some(pb),
            ..ColocConfig::default()
        };
        match run(&cfg) {
            Err(CliError::Config(msg)) => assert!(msg.contains("same dimensions")),
            other => panic!("expected dimension refusal, got {other:?}"),
        }
    }

    #[test]
    fn oversubscribed_subsamples_are_rejected() {
        let cfg = ColocConfig { n: 1_000_000, ..ColocConfig::default() };
        match run(&cfg) {
            Err(CliError::Config(msg)) => assert!(msg.contains("support pairs")),
            other => panic!("expected support-size refusal, got {other:?}"),
        }
    }
}
