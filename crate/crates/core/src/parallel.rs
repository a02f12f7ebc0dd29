//! Bounded worker-pool map that preserves input order, so results (and any
//! floating-point reductions over them) are identical for every worker
//! count.

use rayon::prelude::*;

pub fn run_ordered<T: Sync, R: Send>(
    items: &[T],
    workers: usize,
    f: impl Fn(&T) -> R + Sync,
) -> Vec<R> {
    if workers <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("worker pool");
    pool.install(|| items.par_iter().map(|t| f(t)).collect())
}
