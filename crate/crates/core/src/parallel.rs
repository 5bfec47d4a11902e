//! Replication-level parallelism.
//!
//! Each replication owns its state, so results only depend on the
//! replication index and never on scheduling. Without the `parallel`
//! feature everything runs on the calling thread.

/// How a batch of independent replications is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Sequential,
    /// Rayon worker pool; `jobs = None` uses the global pool.
    #[cfg(feature = "parallel")]
    Parallel { jobs: Option<usize> },
}

impl Execution {
    /// Parallel when the feature is enabled and more than one job is requested.
    pub fn from_jobs(jobs: Option<usize>) -> Self {
        match jobs {
            Some(1) => Execution::Sequential,
            #[cfg(feature = "parallel")]
            _ => Execution::Parallel { jobs },
            #[cfg(not(feature = "parallel"))]
            _ => Execution::Sequential,
        }
    }
}

/// Evaluates `f(0..n)` and returns the results in index order.
pub fn map_indexed<T, F>(n: usize, exec: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        Execution::Sequential => (0..n).map(f).collect(),
        #[cfg(feature = "parallel")]
        Execution::Parallel { jobs } => {
            use rayon::prelude::*;
            let run = || (0..n).into_par_iter().map(&f).collect();
            match jobs {
                Some(j) => match rayon::ThreadPoolBuilder::new().num_threads(j).build() {
                    Ok(pool) => pool.install(run),
                    Err(_) => run(),
                },
                None => run(),
            }
        }
    }
}
