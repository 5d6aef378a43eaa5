//! Monte-Carlo replicate execution: a bounded worker pool and a
//! deterministic map over replicate indices.

use rayon::prelude::*;

use crate::CliError;

/// Builds the worker pool for one experiment run.  `LP_DEBIAS_THREADS`
/// caps the number of workers; unset means rayon's default (one per
/// core).  Parallelism never affects results: replicates are seeded by
/// index and reduced in index order.
pub fn thread_pool() -> Result<rayon::ThreadPool, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(raw) = std::env::var("LP_DEBIAS_THREADS") {
        let k: usize = raw
            .trim()
            .parse()
            .ok()
            .filter(|&k| k >= 1)
            .ok_or_else(|| {
                CliError::Config(format!(
                    "LP_DEBIAS_THREADS must be a positive integer, got {raw:?}"
                ))
            })?;
        builder = builder.num_threads(k);
    }
    builder
        .build()
        .map_err(|e| CliError::Run(format!("failed to build worker pool: {e}")))
}

/// A replicate that did not produce a result, with the reason.
#[derive(Debug, Clone)]
pub struct ReplicateFailure {
    pub index: usize,
    pub message: String,
}

/// Runs `f` for each replicate index on the pool and splits the outcomes
/// into survivors (in index order) and failures.  `f` reports failures as
/// strings: every error type upstream implements `Display` and the
/// replicate loop only aggregates, never matches on the kind.
pub fn run_replicates<T, F>(
    pool: &rayon::ThreadPool,
    count: usize,
    f: F,
) -> (Vec<(usize, T)>, Vec<ReplicateFailure>)
where
    T: Send,
    F: Fn(usize) -> Result<T, String> + Sync,
{
    let outcomes: Vec<(usize, Result<T, String>)> =
        pool.install(|| (0..count).into_par_iter().map(|i| (i, f(i))).collect());
    let mut ok = Vec::with_capacity(count);
    let mut failed = Vec::new();
    for (i, r) in outcomes {
        match r {
            Ok(v) => ok.push((i, v)),
            Err(message) => failed.push(ReplicateFailure { index: i, message }),
        }
    }
    (ok, failed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replicates_come_back_in_index_order() {
        let pool = thread_pool().unwrap();
        let (ok, failed) = run_replicates(&pool, 100, |i| {
            if i % 7 == 3 {
                Err(format!("replicate {i} declined"))
            } else {
                Ok(i * i)
            }
        });
        assert_eq!(failed.len(), 14);
        assert!(ok.windows(2).all(|w| w[0].0 < w[1].0));
        assert!(ok.iter().all(|&(i, v)| v == i * i));
        assert!(failed.iter().all(|f| f.index % 7 == 3));
    }
}
