//! Data-parallel helpers. With the `parallel` feature the `Parallel`
//! executor runs on the rayon pool; without it both executors run in order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exec {
    #[default]
    Parallel,
    Sequential,
}

impl Exec {
    /// Maps `f` over `items`, preserving order.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => items.par_iter().map(f).collect(),
            _ => items.iter().map(f).collect(),
        }
    }

    /// Maps `f` over `0..n`, preserving order.
    pub fn map_range<R, F>(self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => (0..n).into_par_iter().map(f).collect(),
            _ => (0..n).map(f).collect(),
        }
    }

    /// Like `map_range` but evaluates in contiguous chunks, which keeps
    /// per-task overhead low for very cheap bodies.
    pub fn map_chunked<R, F>(self, n: usize, chunk: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        let chunk = chunk.max(1);
        let blocks = n.div_ceil(chunk);
        let parts: Vec<Vec<R>> = self.map_range(blocks, |b| {
            let lo = b * chunk;
            let hi = (lo + chunk).min(n);
            (lo..hi).map(&f).collect()
        });
        parts.into_iter().flatten().collect()
    }
}
