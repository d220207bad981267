//! Order-preserving data-parallel maps.
//!
//! With the `parallel` feature off, `ExecPolicy::Parallel` runs sequentially.
//! Results are always returned in input order, so any reduction the caller
//! performs over them has a fixed order regardless of thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecPolicy {
    Sequential,
    #[default]
    Parallel,
}

impl ExecPolicy {
    /// True when work will actually fan out across threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == ExecPolicy::Parallel
    }
}

/// Applies `f` to every item, returning results in item order.
pub fn map_indexed<T, R, F>(policy: ExecPolicy, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn((usize, &T)) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if policy.is_parallel() && items.len() > 1 {
        return items.par_iter().enumerate().map(f).collect();
    }
    let _ = policy;
    items.iter().enumerate().map(f).collect()
}

/// Applies `f` to `0..n`, returning results in index order.
pub fn map_range<R, F>(policy: ExecPolicy, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if policy.is_parallel() && n > 1 {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = policy;
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_preserved() {
        let items: Vec<u64> = (0..1000).collect();
        for policy in [ExecPolicy::Sequential, ExecPolicy::Parallel] {
            let out = map_indexed(policy, &items, |(i, &v)| (i as u64) * 10 + v);
            assert_eq!(out, (0..1000).map(|v| v * 11).collect::<Vec<_>>());
            assert_eq!(map_range(policy, 5, |i| i * 2), vec![0, 2, 4, 6, 8]);
        }
    }
}
