//! Parallel replication engine.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::simlab::seed::derive_seed;

/// Environment variable that overrides the configured worker count.
pub const WORKERS_ENV: &str = "MEDBIAS_WORKERS";

/// A fixed-size worker pool. Results are always returned in replication
/// order, so the worker count never changes an output.
pub struct Engine {
    pool: rayon::ThreadPool,
    workers: usize,
}

impl Engine {
    pub fn new(workers: usize) -> Result<Self> {
        if workers == 0 {
            return Err(Error::Config("worker count must be positive".into()));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
        Ok(Self { pool, workers })
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    /// Evaluates `f(i)` for i in 0..reps and returns the results in index
    /// order. On failure, the error of the lowest failing index is returned.
    pub fn map<T, F>(&self, reps: usize, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize) -> Result<T> + Sync + Send,
    {
        let results: Vec<Result<T>> = self.pool.install(|| (0..reps).into_par_iter().map(&f).collect());
        results.into_iter().collect()
    }

    /// Like [`Engine::map`], handing each replication its own generator
    /// seeded from `derive_seed(point_seed, i, label)`.
    pub fn replicate<T, F>(&self, reps: usize, point_seed: u64, label: &str, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(usize, &mut ChaCha8Rng) -> Result<T> + Sync + Send,
    {
        self.map(reps, |i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(point_seed, i as u64, label));
            f(i, &mut rng)
        })
    }
}

/// Worker count from (in order of precedence) an explicit override, the
/// environment, the config, and the machine's parallelism.
pub fn resolve_workers(explicit: Option<usize>, configured: Option<usize>) -> Result<usize> {
    if let Some(w) = explicit {
        return Ok(w);
    }
    if let Ok(raw) = std::env::var(WORKERS_ENV) {
        return raw
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&w| w > 0)
            .ok_or_else(|| Error::Config(format!("{WORKERS_ENV} must be a positive integer, got {raw:?}")));
    }
    Ok(configured.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn results_do_not_depend_on_workers() {
        let run = |w| {
            Engine::new(w)
                .unwrap()
                .replicate(500, 42, "t", |i, rng| Ok((i, rng.random::<u64>())))
                .unwrap()
        };
        let a = run(1);
        assert_eq!(a, run(4));
        assert!(a.iter().enumerate().all(|(i, &(j, _))| i == j));
    }

    #[test]
    fn lowest_index_error_wins() {
        let engine = Engine::new(3).unwrap();
        let err = engine
            .map(100, |i| if i % 7 == 3 { Err(Error::Degenerate(format!("{i}"))) } else { Ok(i) })
            .unwrap_err();
        assert_eq!(err.to_string(), "degenerate design: 3");
    }

    #[test]
    fn zero_workers_rejected() {
        assert!(Engine::new(0).is_err());
        assert_eq!(resolve_workers(Some(3), Some(5)).unwrap(), 3);
    }
}
