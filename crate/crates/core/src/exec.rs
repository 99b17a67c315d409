//! Thread-count handling shared by the parallel entry points.
//!
//! `threads == 1` is the deterministic reference path: work runs on the
//! calling thread in input order. Any other value fans out over rayon but
//! results are always collected in input order.

use rayon::prelude::*;

/// Map `f` over `items`, returning results in input order.
pub fn map_ordered<T, R, F>(items: &[T], threads: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    if threads == 1 || items.len() < 2 {
        return items.iter().map(f).collect();
    }
    if threads == 0 {
        return items.par_iter().map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        Err(_) => items.iter().map(f).collect(),
    }
}
