//! Index-parallel map used by every data-parallel loop in the crate.
//!
//! With the `parallel` feature the work is spread over the rayon pool; without
//! it (or inside [`sequential`]) the same closure runs in index order. Callers
//! derive all randomness from the index, so both paths return identical output.

use std::cell::Cell;

thread_local! {
    static FORCE_SEQUENTIAL: Cell<bool> = const { Cell::new(false) };
}

/// Execution strategy for [`map_indexed`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Sequential,
    Parallel,
}

/// Mode that [`map_indexed`] will use on the calling thread.
pub fn current_mode() -> Mode {
    if cfg!(feature = "parallel") && !FORCE_SEQUENTIAL.with(Cell::get) {
        Mode::Parallel
    } else {
        Mode::Sequential
    }
}

/// Run `f` with every [`map_indexed`] call on this thread forced sequential.
pub fn sequential<R>(f: impl FnOnce() -> R) -> R {
    let prev = FORCE_SEQUENTIAL.with(|c| c.replace(true));
    let out = f();
    FORCE_SEQUENTIAL.with(|c| c.set(prev));
    out
}

/// `(0..n).map(f).collect()`, possibly in parallel. Output order is index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match current_mode() {
        #[cfg(feature = "parallel")]
        Mode::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

/// Run `f` inside a pool capped at `threads` workers (0 = rayon default).
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        if threads > 0 {
            if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
                return pool.install(f);
            }
        }
        f()
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        f()
    }
}
