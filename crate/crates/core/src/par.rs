//! Node-parallel kernels. With the `parallel` feature these run on rayon;
//! without it they run sequentially. Reductions always split the index
//! range into the same fixed chunks and add the partial sums in order, so
//! both builds (and every thread count) produce bitwise-identical results.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Fixed reduction chunk. Part of the numerical contract: changing it
/// changes the last bits of every quadrature.
pub const CHUNK: usize = 2048;

/// `out[i] = f(i)` for every index.
pub fn fill<F>(out: &mut [f64], f: F)
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    out.par_chunks_mut(CHUNK)
        .enumerate()
        .for_each(|(c, chunk)| {
            let base = c * CHUNK;
            for (k, o) in chunk.iter_mut().enumerate() {
                *o = f(base + k);
            }
        });
    #[cfg(not(feature = "parallel"))]
    for (i, o) in out.iter_mut().enumerate() {
        *o = f(i);
    }
}

/// Builds a vector of length `n` with `f(i)` at index `i`.
pub fn collect<F>(n: usize, f: F) -> Vec<f64>
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let mut out = vec![0.0; n];
    fill(&mut out, f);
    out
}

/// Deterministic `sum_i f(i)` over `0..n`.
pub fn sum<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let chunks = n.div_ceil(CHUNK);
    let partial = |c: usize| {
        let lo = c * CHUNK;
        let hi = (lo + CHUNK).min(n);
        let mut acc = 0.0;
        for i in lo..hi {
            acc += f(i);
        }
        acc
    };
    #[cfg(feature = "parallel")]
    let partials: Vec<f64> = (0..chunks).into_par_iter().map(partial).collect();
    #[cfg(not(feature = "parallel"))]
    let partials: Vec<f64> = (0..chunks).map(partial).collect();
    partials.into_iter().fold(0.0, |a, b| a + b)
}

/// Deterministic maximum of `f(i)` over `0..n` (0 for an empty range).
pub fn max<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    return (0..n).into_par_iter().map(f).reduce(|| 0.0, f64::max);
    #[cfg(not(feature = "parallel"))]
    (0..n).map(f).fold(0.0, f64::max)
}

/// Runs independent jobs, in parallel when the feature is on. Output order
/// matches input order.
pub fn map_jobs<T, R, F>(items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    return items.into_par_iter().map(f).collect();
    #[cfg(not(feature = "parallel"))]
    items.into_iter().map(f).collect()
}
