//! Data-parallel helpers. With the `parallel` feature these dispatch to
//! rayon; without it they are plain sequential loops.

#[cfg(feature = "parallel")]
mod imp {
    use rayon::prelude::*;

    /// Items whose estimated cost (in multiply-adds) falls below this run
    /// sequentially.
    const MIN_PARALLEL_WORK: usize = 1 << 15;

    pub(crate) fn map<T, R, F>(items: &[T], work_per_item: usize, f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        if items.len() > 1 && items.len() * work_per_item >= MIN_PARALLEL_WORK {
            items.par_iter().map(f).collect()
        } else {
            items.iter().map(f).collect()
        }
    }

    pub(crate) fn try_for_each_mut<T, A, E, F>(items: &mut [T], args: &[A], work_per_item: usize, f: F) -> Result<(), E>
    where
        T: Send,
        A: Sync,
        E: Send,
        F: Fn(usize, &mut T, &A) -> Result<(), E> + Sync + Send,
    {
        if items.len() > 1 && items.len() * work_per_item >= MIN_PARALLEL_WORK {
            items
                .par_iter_mut()
                .zip(args.par_iter())
                .enumerate()
                .try_for_each(|(i, (t, a))| f(i, t, a))
        } else {
            items
                .iter_mut()
                .zip(args)
                .enumerate()
                .try_for_each(|(i, (t, a))| f(i, t, a))
        }
    }

    /// Maps over an index range, always in parallel (coarse-grained work).
    pub(crate) fn map_range<R, F>(n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        (0..n).into_par_iter().map(f).collect()
    }

    /// Runs `f` on a single-threaded pool so timings are not disturbed by
    /// work stealing.
    pub(crate) fn sequential<R: Send>(f: impl FnOnce() -> R + Send) -> R {
        match rayon::ThreadPoolBuilder::new().num_threads(1).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        }
    }
}

#[cfg(not(feature = "parallel"))]
mod imp {
    pub(crate) fn map<T, R, F>(items: &[T], _work_per_item: usize, f: F) -> Vec<R>
    where
        F: Fn(&T) -> R,
    {
        items.iter().map(f).collect()
    }

    pub(crate) fn try_for_each_mut<T, A, E, F>(items: &mut [T], args: &[A], _work_per_item: usize, f: F) -> Result<(), E>
    where
        F: Fn(usize, &mut T, &A) -> Result<(), E>,
    {
        items
            .iter_mut()
            .zip(args)
            .enumerate()
            .try_for_each(|(i, (t, a))| f(i, t, a))
    }

    pub(crate) fn map_range<R, F>(n: usize, f: F) -> Vec<R>
    where
        F: Fn(usize) -> R,
    {
        (0..n).map(f).collect()
    }

    pub(crate) fn sequential<R>(f: impl FnOnce() -> R) -> R {
        f()
    }
}

pub(crate) use imp::*;

/// Whether the crate was built with rayon support.
pub const fn parallel_enabled() -> bool {
    cfg!(feature = "parallel")
}
