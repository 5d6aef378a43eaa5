//! The six experiments behind the binary's subcommands.

pub mod coloc;
pub mod entropic;
pub mod rebalance;
pub mod sim2x2;
pub mod simdegenerate;
pub mod simgrid;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::Serialize;

use lp_debias_core::{ot_to_lp, OtProblem, PenaltyKind, StandardFormLP};

use crate::CliError;

// Stream tags keeping the experiments' RNG streams disjoint even under a
// shared master seed.
pub(crate) const TAG_SIM2X2: u64 = 1;
pub(crate) const TAG_GRID_INSTANCE: u64 = 2;
pub(crate) const TAG_GRID_SAMPLE: u64 = 3;
pub(crate) const TAG_DEGENERATE: u64 = 4;
pub(crate) const TAG_ENTROPIC: u64 = 5;
pub(crate) const TAG_COLOC_SAMPLE: u64 = 6;
pub(crate) const TAG_COLOC_BOOT: u64 = 7;
pub(crate) const TAG_REBALANCE_DATA: u64 = 8;
pub(crate) const TAG_REBALANCE_BOOT: u64 = 9;

/// Penalty selection as it appears on the command line and in manifests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyName {
    Log,
    Exp,
}

impl PenaltyName {
    pub fn kind(self) -> PenaltyKind {
        match self {
            PenaltyName::Log => PenaltyKind::LogBarrier,
            PenaltyName::Exp => PenaltyKind::Exponential,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PenaltyName::Log => "log",
            PenaltyName::Exp => "exp",
        }
    }
}

impl std::str::FromStr for PenaltyName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "log" => Ok(PenaltyName::Log),
            "exp" => Ok(PenaltyName::Exp),
            other => Err(format!("unknown penalty {other:?}; expected log or exp")),
        }
    }
}

/// The 2×2 transport instance with uniform marginals used by the small
/// simulations; `cost` is row-major.
pub(crate) fn two_by_two(cost: [f64; 4]) -> (OtProblem, StandardFormLP) {
    let prob = OtProblem::new(
        vec![0.5, 0.5],
        vec![0.5, 0.5],
        DMatrix::from_row_slice(2, 2, &cost),
    )
    .expect("fixed 2x2 instance is valid");
    let lp = ot_to_lp(&prob);
    (prob, lp)
}

pub(crate) fn dot(c: &DVector<f64>, x: &[f64]) -> f64 {
    assert_eq!(c.len(), x.len());
    c.iter().zip(x).map(|(a, b)| a * b).sum()
}

/// Multinomial frequencies `Mult(n, probs)/n` by conditional binomial
/// splits — O(len) per draw, independent of `n`.
pub(crate) fn multinomial_frequencies<R: Rng>(rng: &mut R, n: u64, probs: &[f64]) -> Vec<f64> {
    let mut left = n;
    let mut rest: f64 = probs.iter().sum();
    let mut out = vec![0.0; probs.len()];
    for (i, &p) in probs.iter().enumerate() {
        if left == 0 || rest <= 0.0 {
            break;
        }
        if i == probs.len() - 1 {
            out[i] = left as f64 / n as f64;
            break;
        }
        let frac = (p / rest).clamp(0.0, 1.0);
        let draw = Binomial::new(left, frac)
            .expect("conditional probability is in [0,1]")
            .sample(rng);
        out[i] = draw as f64 / n as f64;
        left -= draw;
        rest -= p;
    }
    out
}

pub(crate) fn require(cond: bool, msg: &str) -> Result<(), CliError> {
    if cond {
        Ok(())
    } else {
        Err(CliError::Config(msg.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use lp_debias_core::solve_lp;
    use rand::SeedableRng;

    #[test]
    fn the_shared_2x2_instance_has_the_diagonal_optimum() {
        let (_, lp) = two_by_two([0.0, 1.0, 2.0, 0.0]);
        let sol = solve_lp(&lp).unwrap();
        assert!((sol.objective - 0.0).abs() < 1e-12);
        let want = [0.5, 0.0, 0.0, 0.5];
        for (i, &w) in want.iter().enumerate() {
            assert!((sol.x[i] - w).abs() < 1e-12);
        }
    }

    #[test]
    fn multinomial_frequencies_form_an_exact_histogram() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let probs = [0.2, 0.5, 0.05, 0.25];
        let f = multinomial_frequencies(&mut rng, 10_000, &probs);
        assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (fi, pi) in f.iter().zip(&probs) {
            assert!((fi - pi).abs() < 0.03, "frequency {fi} far from {pi}");
        }
    }
}
