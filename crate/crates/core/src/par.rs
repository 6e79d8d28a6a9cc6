//! Data-parallel helpers with a sequential fallback.
//!
//! Sweeps in this crate are expressed as indexed maps whose results are
//! collected in index order, so output is identical whichever executor runs
//! them. Without the `parallel` feature every executor degrades to a plain
//! loop.

/// Which executor a sweep runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    /// Rayon's global pool; same as `Sequential` when the `parallel`
    /// feature is off.
    #[default]
    Parallel,
}

impl Exec {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

/// `(0..n).map(f).collect()`, possibly in parallel, always in index order.
pub fn map_indexed<T, F>(exec: Exec, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Parallel map over a slice, preserving order.
pub fn map_slice<I, T, F>(exec: Exec, items: &[I], f: F) -> Vec<T>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> T + Sync + Send,
{
    map_indexed(exec, items.len(), |i| f(&items[i]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_executors_agree() {
        let a = map_indexed(Exec::Sequential, 100, |i| i * i);
        let b = map_indexed(Exec::Parallel, 100, |i| i * i);
        assert_eq!(a, b);
    }
}
