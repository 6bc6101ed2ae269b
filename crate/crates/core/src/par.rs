//! Data-parallel trial execution.
//!
//! With the `parallel` feature (default) these helpers fan work out over the
//! rayon global pool; without it they run the same closures in order. Output
//! order is the index order in both cases.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// True when trials run on the rayon pool.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Sequential reference path, always available so the two schedules can be
/// compared directly.
pub fn map_indexed_serial<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

pub fn try_map_indexed<T, E, F>(n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    map_indexed(n, f).into_iter().collect()
}
