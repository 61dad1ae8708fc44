//! Order-preserving parallel map over independent work items.
//!
//! With the `parallel` feature the work runs on a dedicated rayon pool sized
//! by `jobs`; without it (or with `jobs <= 1`) it runs sequentially. Output
//! order always matches input order, so results do not depend on the degree
//! of parallelism.

/// Resolve a requested worker count; `0` means "all available cores".
pub fn resolve_jobs(jobs: usize) -> usize {
    if jobs > 0 {
        return jobs;
    }
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

pub fn map<T, R, F>(items: &[T], jobs: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    let jobs = resolve_jobs(jobs);
    if jobs <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    map_parallel(items, jobs, f)
}

#[cfg(feature = "parallel")]
fn map_parallel<T, R, F>(items: &[T], jobs: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        Err(_) => items.iter().map(f).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
fn map_parallel<T, R, F>(items: &[T], _jobs: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.iter().map(f).collect()
}
