//! Worker pool sizing. Library code uses rayon's current pool; callers pick
//! the pool with [`rayon::ThreadPool::install`].

use crate::error::{Error, Result};

pub const THREADS_ENV: &str = "GRAYBOX_THREADS";

/// Thread count from `GRAYBOX_THREADS`, or `None` when unset.
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(Error::Config(format!(
                "{THREADS_ENV} must be a positive integer, got `{v}`"
            ))),
        },
        Err(_) => Ok(None),
    }
}

pub fn pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

pub fn pool_from_env() -> Result<rayon::ThreadPool> {
    pool(threads_from_env()?)
}
