//! Data-parallel helpers.
//!
//! With the `parallel` feature these fan out over rayon's pool; without it
//! they run sequentially. Results are always collected in index order so any
//! reduction performed afterwards is bit-identical between the two builds.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..n`, returning results in index order.
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
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

/// Maps `f` over a slice, returning results in slice order.
pub fn map_slice<A, T, F>(items: &[A], f: F) -> Vec<T>
where
    A: Sync,
    T: Send,
    F: Fn(&A) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Fallible variant of [`map_range`]; returns the lowest-index error.
pub fn try_map_range<T, E, F>(n: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync + Send,
{
    map_range(n, f).into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_order() {
        let v = map_range(1000, |i| i * 2);
        assert!(v.iter().enumerate().all(|(i, &x)| x == 2 * i));
        let s = map_slice(&v, |x| x + 1);
        assert_eq!(s[999], 1999);
    }

    #[test]
    fn first_error_wins() {
        let r: Result<Vec<usize>, usize> = try_map_range(100, |i| if i % 30 == 29 { Err(i) } else { Ok(i) });
        assert_eq!(r, Err(29));
    }
}
