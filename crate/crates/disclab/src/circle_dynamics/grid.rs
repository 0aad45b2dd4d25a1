use rayon::prelude::*;

use super::ExpandingMap;
use crate::error::{invalid, Result};
use crate::measures::AtomicMeasure;
use crate::Real;

/// Step KS distance above which a discretization is flagged as resonant.
pub const RESONANCE_KS: f64 = 0.1;

/// Distance to a rounding tie below which a grid evaluation is counted as a near tie.
pub const TIE_WINDOW: f64 = 1e-9;

/// The grid `E_N = {i/N}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridSpec {
    pub n: usize,
}

impl GridSpec {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("grid order N must be at least 1"));
        }
        Ok(Self { n })
    }

    pub fn point<T: Real>(&self, i: usize) -> T {
        T::from_usize_exact(i) / T::from_usize_exact(self.n)
    }
}

/// `N·F(i/N)`, evaluated as `d·i + N·P(i/N)` so the linear part stays exact.
fn scaled_lift<T: Real>(f: &ExpandingMap<T>, n: usize, i: usize) -> T {
    let nt = T::from_usize_exact(n);
    T::from_usize_exact(f.degree() as usize * i) + nt * f.perturbation(T::from_usize_exact(i) / nt)
}

fn round_half_up<T: Real>(v: T) -> i64 {
    let fl = v.floor();
    let r = if v - fl >= T::half() { fl + T::one() } else { fl };
    r.to_i64().expect("grid value within the integer budget")
}

/// Index `j` of `f_N(i/N) = j/N`, with the same tie rule as the integer chains.
pub fn discretize_point<T: Real>(f: &ExpandingMap<T>, n: usize, i: usize) -> usize {
    round_half_up(scaled_lift(f, n, i)).rem_euclid(n as i64) as usize
}

/// The discretized map `f_N` tabulated on the whole grid.
#[derive(Clone, Debug)]
pub struct GridMap<T> {
    n: usize,
    next: Vec<u32>,
    errors: Vec<T>,
    near_ties: usize,
}

impl<T: Real> GridMap<T> {
    pub fn new(f: &ExpandingMap<T>, grid: GridSpec) -> Result<Self> {
        let n = grid.n;
        if n > u32::MAX as usize {
            return Err(invalid("grid order exceeds 2^32"));
        }
        let reach = (f.degree() as f64 + f.sup_derivative().to_f64_lossy()) * n as f64;
        if reach >= T::EXACT_INT {
            return Err(invalid("grid order too large for the scalar type"));
        }
        let table: Vec<(u32, T, bool)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let v = scaled_lift(f, n, i);
                let j = round_half_up(v);
                let e = T::from_i64_exact(j) - v;
                let tie = (e.abs() - T::half()).abs() < T::lit(TIE_WINDOW);
                (j.rem_euclid(n as i64) as u32, e, tie)
            })
            .collect();
        let near_ties = table.iter().filter(|t| t.2).count();
        let (next, errors) = table.into_iter().map(|(j, e, _)| (j, e)).unzip();
        Ok(Self { n, next, errors, near_ties })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn image(&self, i: usize) -> usize {
        self.next[i] as usize
    }

    /// Rounding error `j − N·F(i/N)` of one step from `i`, in grid units.
    pub fn step_error(&self, i: usize) -> T {
        self.errors[i]
    }

    /// Grid evaluations that fell within [`TIE_WINDOW`] of a rounding tie.
    pub fn near_ties(&self) -> usize {
        self.near_ties
    }

    /// Multiplicities of `(f_N^k)_* Leb_N`, counted in points.
    pub fn pushforward_counts(&self, k: usize) -> Vec<u32> {
        let mut counts = vec![1u32; self.n];
        for _ in 0..k {
            counts = self.push_counts(&counts);
        }
        counts
    }

    fn push_counts(&self, counts: &[u32]) -> Vec<u32> {
        let mut out = vec![0u32; self.n];
        for (i, &c) in counts.iter().enumerate() {
            if c > 0 {
                out[self.next[i] as usize] += c;
            }
        }
        out
    }

    pub fn counts_to_measure(&self, counts: &[u32]) -> AtomicMeasure<T> {
        let nt = T::from_usize_exact(self.n);
        AtomicMeasure::from_sorted_unchecked(
            counts
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(j, &c)| (T::from_usize_exact(j) / nt, T::from_u64(c as u64).unwrap_or(T::zero()) / nt))
                .collect(),
        )
    }

    /// KS distance to `U(−1/2, 1/2]` of the rounding errors made at steps `1..=k`,
    /// over all starting points.
    pub fn step_error_ks(&self, k: usize) -> Vec<T> {
        let mut order: Vec<u32> = (0..self.n as u32).collect();
        order.par_sort_unstable_by(|&a, &b| {
            self.errors[a as usize].partial_cmp(&self.errors[b as usize]).expect("finite errors")
        });
        let mut counts = vec![1u32; self.n];
        let mut out = Vec::with_capacity(k);
        let nt = T::from_usize_exact(self.n);
        for _ in 0..k {
            let mut seen = 0u64;
            let mut ks = T::zero();
            let mut idx = 0;
            while idx < order.len() {
                // Points with equal errors enter the empirical CDF together.
                let e = self.errors[order[idx] as usize];
                let before = T::from_u64(seen).unwrap_or(T::zero()) / nt;
                while idx < order.len() && self.errors[order[idx] as usize] == e {
                    seen += counts[order[idx] as usize] as u64;
                    idx += 1;
                }
                let after = T::from_u64(seen).unwrap_or(T::zero()) / nt;
                let u = e + T::half();
                ks = ks.max((after - u).abs()).max((u - before).abs());
            }
            out.push(ks);
            counts = self.push_counts(&counts);
        }
        out
    }
}

/// `(f_N^k)_* Leb_N` as an atomic measure on `E_N`.
pub fn pushforward_grid<T: Real>(f: &ExpandingMap<T>, n: usize, k: usize) -> Result<AtomicMeasure<T>> {
    let g = GridMap::new(f, GridSpec::new(n)?)?;
    Ok(g.counts_to_measure(&g.pushforward_counts(k)))
}

/// Largest per-step KS distance of the rounding errors over the first `k` steps.
pub fn roundoff_ks<T: Real>(f: &ExpandingMap<T>, n: usize, k: usize) -> Result<T> {
    let g = GridMap::new(f, GridSpec::new(n)?)?;
    Ok(g.step_error_ks(k.max(1)).into_iter().fold(T::zero(), T::max))
}
