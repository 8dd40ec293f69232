//! Data-parallel map with a sequential fallback.
//!
//! Hot loops (per-feature sampling, batch loss accumulation, instance
//! scoring) map independent work items and reduce in input order, so the
//! parallel and sequential paths produce identical output. The `parallel`
//! feature (default on) routes [`map_ordered`] through rayon;
//! [`map_ordered_seq`] is always available for benchmarking the fallback.

pub fn map_ordered_seq<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    items.iter().map(f).collect()
}

#[cfg(feature = "parallel")]
pub fn map_ordered<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_ordered<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    map_ordered_seq(items, f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_matches_sequential_order() {
        let items: Vec<u64> = (0..10_000).collect();
        let a = map_ordered(&items, |x| x * x);
        let b = map_ordered_seq(&items, |x| x * x);
        assert_eq!(a, b);
    }
}
