//! Execution policy for the data-parallel kernels.
//!
//! Only element-wise maps are parallelized: every output element is computed
//! by exactly one task in a fixed order, so results are bit-identical between
//! [`Execution::Sequential`] and [`Execution::Parallel`].

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How data-parallel kernels are run.
///
/// `Parallel` falls back to sequential execution when the crate is built
/// without the `parallel` feature.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

// below this many elements the rayon split overhead dominates
#[cfg(feature = "parallel")]
const MIN_PAR_LEN: usize = 4096;

pub(crate) fn for_each_indexed<T, F>(exec: Execution, data: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() && data.len() >= MIN_PAR_LEN {
        data.par_iter_mut()
            .enumerate()
            .with_min_len(MIN_PAR_LEN / 4)
            .for_each(|(i, x)| f(i, x));
        return;
    }
    let _ = exec;
    data.iter_mut().enumerate().for_each(|(i, x)| f(i, x));
}

/// Visits two equally long slices element-wise, e.g. the horizontal and
/// vertical halves of a gradient field.
pub(crate) fn for_each_pair<F>(exec: Execution, first: &mut [f64], second: &mut [f64], f: F)
where
    F: Fn(usize, &mut f64, &mut f64) + Sync + Send,
{
    debug_assert_eq!(first.len(), second.len());
    #[cfg(feature = "parallel")]
    if exec.is_parallel() && first.len() >= MIN_PAR_LEN {
        first
            .par_iter_mut()
            .zip(second.par_iter_mut())
            .enumerate()
            .with_min_len(MIN_PAR_LEN / 4)
            .for_each(|(i, (a, b))| f(i, a, b));
        return;
    }
    let _ = exec;
    first
        .iter_mut()
        .zip(second.iter_mut())
        .enumerate()
        .for_each(|(i, (a, b))| f(i, a, b));
}

/// Runs `f` on consecutive chunks of `chunk` elements (the last may be shorter).
pub(crate) fn for_each_chunk<T, F>(exec: Execution, data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() && data.len() > chunk {
        data.par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
        return;
    }
    let _ = exec;
    data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
}

/// Maps `f` over `0..count` and collects the results in index order.
pub fn map_range<R, F>(exec: Execution, count: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return (0..count).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..count).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequential_and_parallel_agree() {
        let mut a = vec![0.0f64; 10_000];
        let mut b = a.clone();
        for_each_indexed(Execution::Sequential, &mut a, |i, x| *x = (i as f64).sqrt());
        for_each_indexed(Execution::Parallel, &mut b, |i, x| *x = (i as f64).sqrt());
        assert_eq!(a, b);

        let s = map_range(Execution::Sequential, 100, |i| i * i);
        let p = map_range(Execution::Parallel, 100, |i| i * i);
        assert_eq!(s, p);
    }

    #[test]
    fn chunks_cover_everything() {
        let mut v = vec![0usize; 1003];
        for_each_chunk(Execution::Parallel, &mut v, 100, |c, chunk| {
            for (j, x) in chunk.iter_mut().enumerate() {
                *x = c * 100 + j;
            }
        });
        assert!(v.iter().enumerate().all(|(i, &x)| i == x));
    }
}
