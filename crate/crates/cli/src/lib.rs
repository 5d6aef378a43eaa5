//! Experiment driver behind the `lp-debias` binary.
//!
//! Each experiment is an ordinary library function taking a config struct
//! and returning a [`manifest::ResultBundle`]: a schema-versioned summary,
//! CSV tables with replicate-level data, and a manifest that pins the
//! config, seed, and build.  The binary is a thin argument-parsing shell
//! around these functions so tests can call them directly.

pub mod experiments;
pub mod manifest;
pub mod runner;

use thiserror::Error;

/// Master seed used when the command line does not supply one.
pub const DEFAULT_SEED: u64 = 17;

/// Top-level failure of an experiment run.  Replicate-level solver
/// failures are *not* errors: they are aggregated into the bundle and
/// reported through the process exit code instead.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, bad input files, or a violated precondition.
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    /// A failure outside the replicate loop (e.g. the exact reference
    /// solve), which leaves nothing meaningful to aggregate.
    #[error("{0}")]
    Run(String),
}

/// One step of the splitmix64 stream; the usual 64-bit finalizer.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut x = *state;
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Derives an independent 64-bit seed for (experiment stream, cell,
/// replicate) from a master seed.  Mixing through splitmix64 keeps the
/// streams decorrelated even for adjacent indices, and the scheme is
/// stable: changing the replicate count or the cell order never changes
/// the seed of an existing replicate.
pub fn derive_seed(master: u64, tag: u64, cell: u64, rep: u64) -> u64 {
    let mut s = master;
    let a = splitmix64(&mut s) ^ tag;
    let mut s2 = a;
    let b = splitmix64(&mut s2) ^ cell;
    let mut s3 = b;
    let c = splitmix64(&mut s3) ^ rep;
    let mut s4 = c;
    splitmix64(&mut s4)
}

/// A point drawn uniformly from the probability simplex (flat Dirichlet),
/// via normalized exponentials.  The uniform draw is floored at 1e-12 so
/// the logarithm stays finite, and the last coordinate is recomputed as
/// `1 − Σ others` so the result sums to one exactly.
pub fn flat_dirichlet<R: rand::Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    assert!(k >= 2, "a simplex draw needs at least two coordinates");
    let mut e: Vec<f64> = (0..k)
        .map(|_| -rng.random_range(1e-12..1.0f64).ln())
        .collect();
    let total: f64 = e.iter().sum();
    for v in e.iter_mut() {
        *v /= total;
    }
    let head: f64 = e[..k - 1].iter().sum();
    e[k - 1] = (1.0 - head).max(0.0);
    e
}

/// Inverse standard normal CDF (Acklam's rational approximation,
/// |relative error| < 1.15e-9).  Used for QQ-plot theoretical quantiles;
/// nothing downstream needs more accuracy than the plot itself.
pub fn inv_normal_cdf(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile function needs p in (0,1)");
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    let tail = |q: f64| -> f64 {
        let r = (-2.0 * q.ln()).sqrt();
        (((((C[0] * r + C[1]) * r + C[2]) * r + C[3]) * r + C[4]) * r + C[5])
            / ((((D[0] * r + D[1]) * r + D[2]) * r + D[3]) * r + 1.0)
    };
    if p < P_LOW {
        tail(p)
    } else if p > 1.0 - P_LOW {
        -tail(1.0 - p)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

/// Least-squares slope of `ys` against `xs`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    assert!(xs.len() >= 2, "a slope needs at least two points");
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Shortest-roundtrip decimal formatting; the single float→text path for
/// every CSV cell, so identical runs produce identical bytes.
pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

/// Sample mean.
pub fn mean(xs: &[f64]) -> f64 {
    assert!(!xs.is_empty());
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn sample_variance(xs: &[f64]) -> f64 {
    assert!(xs.len() >= 2, "variance needs at least two observations");
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn derived_seeds_do_not_collide_across_nearby_indices() {
        let mut seen = std::collections::HashSet::new();
        for tag in 0..4u64 {
            for cell in 0..8u64 {
                for rep in 0..64u64 {
                    assert!(seen.insert(derive_seed(7, tag, cell, rep)));
                }
            }
        }
    }

    #[test]
    fn dirichlet_draws_live_on_the_simplex() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for k in [2usize, 5, 16] {
            let w = flat_dirichlet(&mut rng, k);
            assert_eq!(w.len(), k);
            assert!(w.iter().all(|&v| v >= 0.0));
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn normal_quantiles_invert_the_cdf() {
        for &p in &[0.001, 0.01, 0.1, 0.25, 0.5, 0.75, 0.9, 0.99, 0.999] {
            let z = inv_normal_cdf(p);
            let back = lp_debias_core::normal_cdf(z);
            assert!((back - p).abs() < 1e-8, "p={p}: round trip gave {back}");
        }
        assert!((inv_normal_cdf(0.975) - 1.959964).abs() < 1e-5);
    }

    #[test]
    fn slope_recovers_an_exact_line() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 - 2.0 * x).collect();
        assert!((fit_slope(&xs, &ys) + 2.0).abs() < 1e-12);
    }
}
