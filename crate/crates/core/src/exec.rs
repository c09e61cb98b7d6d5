//! Data-parallel execution with a sequential fallback.
//!
//! With the `parallel` feature (default) [`ExecMode::Parallel`] fans work out
//! over rayon; without it, both modes run sequentially. Results are always
//! returned in input order, so the choice never changes observable output.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ExecMode {
    Sequential,
    #[default]
    Parallel,
}

impl ExecMode {
    /// Whether this build can actually run work in parallel.
    pub fn parallel_available() -> bool {
        cfg!(feature = "parallel")
    }
}

/// Apply `f` to every element mutably, collecting results in order.
pub fn map_mut<T, R, F>(mode: ExecMode, items: &mut [T], f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(&mut T) -> R + Sync + Send,
{
    match mode {
        #[cfg(feature = "parallel")]
        ExecMode::Parallel => items.par_iter_mut().map(f).collect(),
        _ => items.iter_mut().map(f).collect(),
    }
}

/// Apply `f` to every element, collecting results in order.
pub fn map<T, R, F>(mode: ExecMode, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match mode {
        #[cfg(feature = "parallel")]
        ExecMode::Parallel => items.par_iter().map(f).collect(),
        _ => items.iter().map(f).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_modes_preserve_order() {
        let input: Vec<u64> = (0..1000).collect();
        let seq = map(ExecMode::Sequential, &input, |x| x * 3);
        let par = map(ExecMode::Parallel, &input, |x| x * 3);
        assert_eq!(seq, par);

        let mut a = input.clone();
        let mut b = input;
        let ra = map_mut(ExecMode::Sequential, &mut a, |x| {
            *x += 1;
            *x
        });
        let rb = map_mut(ExecMode::Parallel, &mut b, |x| {
            *x += 1;
            *x
        });
        assert_eq!(ra, rb);
        assert_eq!(a, b);
    }
}
