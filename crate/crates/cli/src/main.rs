//! `lp-debias` — experiment driver for debiased linear-program and
//! optimal-transport estimation.
//!
//! Exit codes: 0 on success, 2 when some Monte-Carlo replicates failed
//! and were aggregated out, 1 on any error.  `LP_DEBIAS_THREADS` caps the
//! worker pool.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lp_debias::experiments::{
    coloc::{self, ColocConfig},
    entropic::{self, EntropicConfig},
    rebalance::{self, RebalanceConfig, SyntheticMode},
    sim2x2::{self, Sim2x2Config},
    simdegenerate::{self, SimDegenerateConfig},
    simgrid::{self, SimGridConfig},
    PenaltyName,
};
use lp_debias::manifest::ResultBundle;
use lp_debias::CliError;

#[derive(Parser)]
#[command(
    name = "lp-debias",
    version,
    about = "Debiased estimation of linear-program and optimal-transport solutions from noisy data"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Monte-Carlo study of the debiased cost on the fixed 2×2 instance.
    #[command(name = "sim2x2")]
    Sim2x2(Sim2x2Args),
    /// Monte-Carlo study on an L×L jittered grid with random marginals.
    #[command(name = "simgrid")]
    SimGrid(SimGridArgs),
    /// Convergence-rate study in the degenerate (equal-marginals) case.
    #[command(name = "simdegenerate")]
    SimDegenerate(SimDegenerateArgs),
    /// Entropic smoothing bias versus the debiased estimator.
    #[command(name = "entropic_compare")]
    EntropicCompare(EntropicArgs),
    /// Colocalization curves of two images with bootstrap bands.
    #[command(name = "coloc")]
    Coloc(ColocArgs),
    /// Rebalancing flows from daily net-demand data with bootstrap CIs.
    #[command(name = "rebalance")]
    Rebalance(RebalanceArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Output directory for manifest.json, summary.json, and CSV tables.
    #[arg(long)]
    out: PathBuf,
    /// Master seed; every replicate derives its own stream from it.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct Sim2x2Args {
    #[command(flatten)]
    common: CommonArgs,
    /// Sample sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<u64>>,
    /// Penalty scales r0, comma separated.
    #[arg(long, value_delimiter = ',')]
    r0: Option<Vec<f64>>,
    /// Restrict to one penalty family (default: both).
    #[arg(long)]
    penalty: Option<PenaltyName>,
    /// Monte-Carlo replicates per cell.
    #[arg(long)]
    reps: Option<usize>,
}

#[derive(Args)]
struct SimGridArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Grid side L; marginals live on L² points.
    #[arg(long)]
    l: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<u64>>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    r0: Option<f64>,
    /// Allow grid sides beyond the built-in memory guardrail.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct SimDegenerateArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<u64>>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    r0: Option<f64>,
    /// exp (default) has the fast rate; log is the contrast arm.
    #[arg(long)]
    penalty: Option<PenaltyName>,
}

#[derive(Args)]
struct EntropicArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Profile smoothing strengths, comma separated.
    #[arg(long, value_delimiter = ',')]
    lambda: Option<Vec<f64>>,
    /// Fixed smoothing strength of the Monte-Carlo contrast block.
    #[arg(long)]
    contrast_lambda: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<u64>>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    r0: Option<f64>,
}

#[derive(Args)]
struct ColocArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// First image (PGM, P2 or P5); omit both for the synthetic pair.
    #[arg(long)]
    image_a: Option<PathBuf>,
    /// Second image (PGM, P2 or P5).
    #[arg(long)]
    image_b: Option<PathBuf>,
    /// Subsample size.
    #[arg(long)]
    n: Option<u64>,
    /// Bootstrap replicates for the uniform band.
    #[arg(long)]
    b: Option<usize>,
    /// Entropic smoothing strength of the comparison estimate.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Penalty family of the debiased estimate (default log).
    #[arg(long)]
    penalty: Option<PenaltyName>,
    #[arg(long)]
    r0: Option<f64>,
    #[arg(long)]
    xi_max: Option<f64>,
    #[arg(long)]
    xi_step: Option<f64>,
}

#[derive(Args)]
struct RebalanceArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Daily net-flow CSV (rows = days, header = station names).
    #[arg(long, conflicts_with_all = ["planted", "null"])]
    data: Option<PathBuf>,
    /// Station coordinates CSV (station,x,y); without it arcs cost 1.
    #[arg(long, requires = "data")]
    coords: Option<PathBuf>,
    /// Synthetic generator with a planted 0→3 transfer (default).
    #[arg(long, conflicts_with = "null")]
    planted: bool,
    /// Synthetic generator with zero-mean noise only.
    #[arg(long)]
    null: bool,
    /// Number of synthetic days.
    #[arg(long)]
    days: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    b: Option<usize>,
    #[arg(long)]
    r0: Option<f64>,
}

fn dispatch(cmd: Cmd) -> (PathBuf, Result<ResultBundle, CliError>) {
    match cmd {
        Cmd::Sim2x2(a) => {
            let mut cfg = Sim2x2Config::default();
            if let Some(v) = a.n {
                cfg.ns = v;
            }
            if let Some(v) = a.r0 {
                cfg.r0s = v;
            }
            if let Some(p) = a.penalty {
                cfg.penalties = vec![p];
            }
            if let Some(v) = a.reps {
                cfg.reps = v;
            }
            if let Some(v) = a.common.seed {
                cfg.seed = v;
            }
            (a.common.out, sim2x2::run(&cfg))
        }
        Cmd::SimGrid(a) => {
            let mut cfg = SimGridConfig::default();
            if let Some(v) = a.l {
                cfg.l = v;
            }
            if let Some(v) = a.n {
                cfg.ns = v;
            }
            if let Some(v) = a.reps {
                cfg.reps = v;
            }
            if let Some(v) = a.r0 {
                cfg.r0 = v;
            }
            if let Some(v) = a.common.seed {
                cfg.seed = v;
            }
            cfg.force = a.force;
            (a.common.out, simgrid::run(&cfg))
        }
        Cmd::SimDegenerate(a) => {
            let mut cfg = SimDegenerateConfig::default();
            if let Some(v) = a.n {
                cfg.ns = v;
            }
            if let Some(v) = a.reps {
                cfg.reps = v;
            }
            if let Some(v) = a.r0 {
                cfg.r0 = v;
            }
            if let Some(p) = a.penalty {
                cfg.penalty = p;
            }
            if let Some(v) = a.common.seed {
                cfg.seed = v;
            }
            (a.common.out, simdegenerate::run(&cfg))
        }
        Cmd::EntropicCompare(a) => {
            let mut cfg = EntropicConfig::default();
            if let Some(v) = a.lambda {
                cfg.lambdas = v;
            }
            if let Some(v) = a.contrast_lambda {
                cfg.contrast_lambda = v;
            }
            if let Some(v) = a.n {
                cfg.ns = v;
            }
            if let Some(v) = a.reps {
                cfg.reps = v;
            }
            if let Some(v) = a.r0 {
                cfg.r0 = v;
            }
            if let Some(v) = a.common.seed {
                cfg.seed = v;
            }
            (a.common.out, entropic::run(&cfg))
        }
        Cmd::Coloc(a) => {
            let mut cfg = ColocConfig::default();
            cfg.image_a = a.image_a;
            cfg.image_b = a.image_b;
            if let Some(v) = a.n {
                cfg.n = v;
            }
            if let Some(v) = a.b {
                cfg.b = v;
            }
            if let Some(v) = a.lambda {
                cfg.lambda = v;
            }
            if let Some(v) = a.alpha {
                cfg.alpha = v;
            }
            if let Some(p) = a.penalty {
                cfg.penalty = p;
            }
            if let Some(v) = a.r0 {
                cfg.r0 = v;
            }
            if let Some(v) = a.xi_max {
                cfg.xi_max = v;
            }
            if let Some(v) = a.xi_step {
                cfg.xi_step = v;
            }
            if let Some(v) = a.common.seed {
                cfg.seed = v;
            }
            (a.common.out, coloc::run(&cfg))
        }
        Cmd::Rebalance(a) => {
            let mut cfg = RebalanceConfig::default();
            cfg.data = a.data;
            cfg.coords = a.coords;
            if a.null {
                cfg.mode = SyntheticMode::Null;
            } else if a.planted {
                cfg.mode = SyntheticMode::Planted;
            }
            if let Some(v) = a.days {
                cfg.n_days = v;
            }
            if let Some(v) = a.alpha {
                cfg.alpha = v;
            }
            if let Some(v) = a.b {
                cfg.b = v;
            }
            if let Some(v) = a.r0 {
                cfg.r0 = v;
            }
            if let Some(v) = a.common.seed {
                cfg.seed = v;
            }
            (a.common.out, rebalance::run(&cfg))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0u8,
                _ => 1u8,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (out, result) = dispatch(cli.cmd);
    match result {
        Ok(bundle) => {
            if let Err(e) = bundle.write_all(&out) {
                eprintln!("error: {e}");
                return ExitCode::from(1);
            }
            println!("wrote {}", out.display());
            if bundle.replicate_failures > 0 {
                eprintln!(
                    "warning: {} replicate(s) failed and were aggregated out",
                    bundle.replicate_failures
                );
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
