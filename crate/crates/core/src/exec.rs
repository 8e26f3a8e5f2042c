//! Execution mode switch for data-parallel loops.
//!
//! Every call site picks an [`ExecMode`]; `Parallel` uses rayon when the crate is built
//! with the `parallel` feature and silently degrades to sequential iteration otherwise.
//! Result order is always the input order, so both modes produce identical output.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecMode {
    Sequential,
    #[default]
    Parallel,
}

impl ExecMode {
    /// True when this mode will actually fan out across threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == ExecMode::Parallel
    }
}

/// Maps `f` over `items`, preserving order.
pub fn map<T, R, F>(mode: ExecMode, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = mode;
    items.iter().map(f).collect()
}

/// Maps `f` over a range of indices, preserving order.
pub fn map_range<R, F>(mode: ExecMode, len: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        use rayon::prelude::*;
        return (0..len).into_par_iter().map(f).collect();
    }
    let _ = mode;
    (0..len).map(f).collect()
}

/// Applies `f` to the elements of `items` whose index satisfies `select`, returning
/// `(index, result)` pairs in ascending index order.
pub fn map_selected_mut<T, R, S, F>(mode: ExecMode, items: &mut [T], select: S, f: F) -> Vec<(usize, R)>
where
    T: Send,
    R: Send,
    S: Fn(usize) -> bool + Sync + Send,
    F: Fn(usize, &mut T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel() {
        use rayon::prelude::*;
        return items
            .par_iter_mut()
            .enumerate()
            .filter(|(i, _)| select(*i))
            .map(|(i, item)| (i, f(i, item)))
            .collect();
    }
    let _ = mode;
    items
        .iter_mut()
        .enumerate()
        .filter(|(i, _)| select(*i))
        .map(|(i, item)| (i, f(i, item)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let xs: Vec<u64> = (0..1000).collect();
        let a = map(ExecMode::Sequential, &xs, |x| x * x);
        let b = map(ExecMode::Parallel, &xs, |x| x * x);
        assert_eq!(a, b);
        let mut v1 = xs.clone();
        let mut v2 = xs.clone();
        let r1 = map_selected_mut(ExecMode::Sequential, &mut v1, |i| i % 3 == 0, |i, x| {
            *x += 1;
            i
        });
        let r2 = map_selected_mut(ExecMode::Parallel, &mut v2, |i| i % 3 == 0, |i, x| {
            *x += 1;
            i
        });
        assert_eq!(r1, r2);
        assert_eq!(v1, v2);
    }
}
