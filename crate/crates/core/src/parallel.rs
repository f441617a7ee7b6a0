//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature the work runs on a dedicated rayon pool whose
//! size is taken from `SWINGPINN_THREADS` (falling back to rayon's default).
//! Without it everything runs on the calling thread. Results are always
//! returned in input order, so output never depends on the thread count.

/// Environment variable capping the worker pool size.
pub const THREADS_ENV: &str = "SWINGPINN_THREADS";

/// Requested thread count from the environment, if set to a positive integer.
pub fn requested_threads() -> Option<usize> {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

#[cfg(feature = "parallel")]
mod imp {
    use std::sync::OnceLock;

    use rayon::prelude::*;

    fn pool() -> &'static rayon::ThreadPool {
        static POOL: OnceLock<rayon::ThreadPool> = OnceLock::new();
        POOL.get_or_init(|| {
            let mut b = rayon::ThreadPoolBuilder::new();
            if let Some(n) = super::requested_threads() {
                b = b.num_threads(n);
            }
            b.build().expect("failed to build worker pool")
        })
    }

    pub fn threads() -> usize {
        pool().current_num_threads()
    }

    pub fn map<T, U, F>(items: &[T], f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> U + Sync + Send,
    {
        pool().install(|| items.par_iter().map(f).collect())
    }

    pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, f: F)
    where
        T: Send,
        F: Fn(usize, &mut [T]) + Sync + Send,
    {
        pool().install(|| {
            data.par_chunks_mut(chunk)
                .enumerate()
                .for_each(|(i, c)| f(i, c))
        })
    }
}

#[cfg(not(feature = "parallel"))]
mod imp {
    pub fn threads() -> usize {
        1
    }

    pub fn map<T, U, F>(items: &[T], f: F) -> Vec<U>
    where
        F: Fn(&T) -> U,
    {
        items.iter().map(f).collect()
    }

    pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, f: F)
    where
        F: Fn(usize, &mut [T]),
    {
        data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c))
    }
}

/// Number of workers used by [`par_map`].
pub fn threads() -> usize {
    imp::threads()
}

/// Order-preserving map over a slice.
pub fn par_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    imp::map(items, f)
}

/// Applies `f(chunk_index, chunk)` to consecutive chunks of `data`.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    imp::for_each_chunk_mut(data, chunk.max(1), f)
}
