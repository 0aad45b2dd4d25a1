//! Reproducible summation.
//!
//! Parallel sums split their index range into chunks of a fixed size, sum each
//! chunk sequentially and combine the partials in index order, so the result
//! does not depend on the number of worker threads.

use rayon::prelude::*;

use crate::Real;

/// Chunk length used by every parallel reduction.
pub const CHUNK: usize = 1 << 14;

/// Neumaier compensated accumulator.
#[derive(Clone, Copy, Debug, Default)]
pub struct Compensated<T> {
    sum: T,
    carry: T,
}

impl<T: Real> Compensated<T> {
    pub fn new() -> Self {
        Self { sum: T::zero(), carry: T::zero() }
    }

    pub fn add(&mut self, x: T) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> T {
        self.sum + self.carry
    }
}

pub fn compensated_sum<T: Real>(values: impl IntoIterator<Item = T>) -> T {
    let mut acc = Compensated::new();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// Sums `term(i)` for `i` in `0..n`, in parallel, deterministically.
pub fn chunked_sum<T, F>(n: usize, term: F) -> T
where
    T: Real,
    F: Fn(usize) -> T + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    let partials: Vec<T> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let end = ((c + 1) * CHUNK).min(n);
            compensated_sum((c * CHUNK..end).map(&term))
        })
        .collect();
    compensated_sum(partials)
}

/// Like [`chunked_sum`], but each chunk receives its whole index range, for
/// terms that are cheaper to produce by walking forward.
pub fn chunked_range_sum<T, F>(n: usize, chunk_sum: F) -> T
where
    T: Real,
    F: Fn(std::ops::Range<usize>) -> T + Sync,
{
    let chunks = n.div_ceil(CHUNK);
    let partials: Vec<T> =
        (0..chunks).into_par_iter().map(|c| chunk_sum(c * CHUNK..((c + 1) * CHUNK).min(n))).collect();
    compensated_sum(partials)
}
