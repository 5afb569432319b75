//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (on by default) ordered maps are dispatched to
//! rayon; without it every helper runs on the calling thread. Either way the
//! output order is the input order and reductions are folded left-to-right over
//! per-item partials, so results are bit-identical across modes and thread
//! counts.
//!
//! [`scoped`] forces a mode for the duration of a closure on the current
//! thread, which is how the benches compare the two paths in one binary.

use std::cell::Cell;

/// Execution mode for the data-parallel loops.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

thread_local! {
    static MODE: Cell<Option<Exec>> = const { Cell::new(None) };
}

/// Mode in effect on this thread.
pub fn current() -> Exec {
    MODE.with(|m| m.get()).unwrap_or_default()
}

/// Run `f` with `exec` forced on the current thread.
pub fn scoped<R>(exec: Exec, f: impl FnOnce() -> R) -> R {
    let prev = MODE.with(|m| m.replace(Some(exec)));
    struct Restore(Option<Exec>);
    impl Drop for Restore {
        fn drop(&mut self) {
            MODE.with(|m| m.set(self.0));
        }
    }
    let _restore = Restore(prev);
    f()
}

/// Grids smaller than this many pixels are processed on the calling thread
/// even in parallel mode; below it rayon dispatch costs more than the work.
pub const MIN_PARALLEL_PIXELS: usize = 4096;

fn worth_splitting(width: usize, height: usize) -> bool {
    width.saturating_mul(height) >= MIN_PARALLEL_PIXELS
}

/// Ordered map over `0..n`.
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match current() {
        #[cfg(feature = "parallel")]
        Exec::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

/// Ordered map over a slice.
pub fn map_slice<S, T, F>(items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    match current() {
        #[cfg(feature = "parallel")]
        Exec::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}

/// Ordered map over the rows `0..height` of a `width`-wide grid.
pub fn map_rows<T, F>(width: usize, height: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if worth_splitting(width, height) {
        map_range(height, f)
    } else {
        (0..height).map(f).collect()
    }
}

/// Build a row-major `width * height` buffer row by row.
pub fn fill_rows<F>(width: usize, height: usize, f: F) -> Vec<f64>
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    let mut out = vec![0.0; width * height];
    if width == 0 {
        return out;
    }
    match current() {
        #[cfg(feature = "parallel")]
        Exec::Parallel if worth_splitting(width, height) => {
            use rayon::prelude::*;
            out.par_chunks_mut(width)
                .enumerate()
                .for_each(|(y, row)| f(y, row));
        }
        _ => out
            .chunks_mut(width)
            .enumerate()
            .for_each(|(y, row)| f(y, row)),
    }
    out
}

/// Sum of per-row partials, folded in row order.
pub fn sum_rows<F>(width: usize, height: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    map_rows(width, height, f).into_iter().fold(0.0, |acc, v| acc + v)
}

/// Run `f` with at most `threads` workers. `threads == 1` runs sequentially.
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    if threads <= 1 {
        return scoped(Exec::Sequential, f);
    }
    #[cfg(feature = "parallel")]
    {
        match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
            Ok(pool) => pool.install(|| scoped(Exec::Parallel, f)),
            Err(_) => scoped(Exec::Sequential, f),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        scoped(Exec::Sequential, f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scoped_restores_previous_mode() {
        let before = current();
        scoped(Exec::Sequential, || {
            assert_eq!(current(), Exec::Sequential);
            scoped(Exec::Parallel, || assert_eq!(current(), Exec::Parallel));
            assert_eq!(current(), Exec::Sequential);
        });
        assert_eq!(current(), before);
    }

    #[test]
    fn modes_agree_bitwise() {
        let f = |y: usize| (0..97).map(|x| ((x * 31 + y * 7) as f64).sin() * 1e-3).sum::<f64>();
        let a = scoped(Exec::Sequential, || sum_rows(97, 513, f));
        let b = scoped(Exec::Parallel, || sum_rows(97, 513, f));
        assert_eq!(a.to_bits(), b.to_bits());
        let fill = |y: usize, row: &mut [f64]| {
            for (x, v) in row.iter_mut().enumerate() {
                *v = (x * y) as f64;
            }
        };
        assert_eq!(
            scoped(Exec::Sequential, || fill_rows(70, 90, fill)),
            scoped(Exec::Parallel, || fill_rows(70, 90, fill))
        );
    }

    #[test]
    fn with_threads_preserves_order() {
        let v = with_threads(4, || map_range(100, |i| i * 2));
        assert_eq!(v, (0..100).map(|i| i * 2).collect::<Vec<_>>());
    }
}
