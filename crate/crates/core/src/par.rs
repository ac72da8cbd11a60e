//! Switch between rayon and sequential iteration.
//!
//! With the `parallel` feature the helpers fan out over rayon's global pool
//! once the input is large enough to amortise the split; otherwise they run
//! on the calling thread. Results are identical either way: reductions use
//! total orders and collections keep input order.

/// Inputs shorter than this are always processed sequentially.
pub const PAR_MIN_LEN: usize = 2048;

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

/// Order-preserving map over a slice.
pub fn map<'a, T, U, F>(items: &'a [T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&'a T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Order-preserving `filter_map` that only goes parallel for long inputs.
pub fn filter_map<'a, T, U, F>(items: &'a [T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&'a T) -> Option<U> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if items.len() >= PAR_MIN_LEN {
        use rayon::prelude::*;
        return items.par_iter().filter_map(f).collect();
    }
    items.iter().filter_map(f).collect()
}

/// Minimum under a total order, for long inputs in parallel.
pub fn min_by<'a, T, U, F, C>(items: &'a [T], f: F, cmp: C) -> Option<U>
where
    T: Sync,
    U: Send,
    F: Fn(&'a T) -> Option<U> + Sync + Send,
    C: Fn(&U, &U) -> std::cmp::Ordering + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if items.len() >= PAR_MIN_LEN {
        use rayon::prelude::*;
        return items.par_iter().filter_map(f).min_by(|a, b| cmp(a, b));
    }
    items.iter().filter_map(f).min_by(|a, b| cmp(a, b))
}
