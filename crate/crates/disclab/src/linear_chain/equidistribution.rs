use rand::Rng;
use rayon::prelude::*;

use super::HomothetyChain;
use crate::error::{invalid, Result};
use crate::Real;

/// Residual below which a family is treated as resonant.
pub const QFREE_THRESHOLD: f64 = 1e-3;

const MAX_QFREE_VALUES: usize = 6;
const MAX_QFREE_BOUND: u32 = 10;

/// Kolmogorov–Smirnov distance between `samples` and the uniform law on
/// `(−1/2, 1/2]`. Sorts `samples` in place.
pub fn ks_uniform_statistic<T: Real>(samples: &mut [T]) -> T {
    samples.par_sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    let n = T::from_usize_exact(samples.len());
    samples
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let u = (s + T::half()).max(T::zero()).min(T::one());
            let above = T::from_usize_exact(i + 1) / n - u;
            let below = u - T::from_usize_exact(i) / n;
            above.max(below)
        })
        .fold(T::zero(), T::max)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EquidistributionReport<T> {
    pub per_coordinate_ks: Vec<T>,
    /// Largest |correlation| between two error coordinates.
    pub max_pair_correlation: T,
    /// Star discrepancy over anchored boxes with corners on a regular grid.
    pub star_discrepancy: T,
}

impl<T: Real> EquidistributionReport<T> {
    pub fn max_ks(&self) -> T {
        self.per_coordinate_ks.iter().copied().fold(T::zero(), T::max)
    }
}

fn grid_side(k: usize) -> usize {
    let mut g = 2usize;
    while g < 256 && (g + 1).checked_pow(k as u32).is_some_and(|c| c <= 1 << 18) {
        g += 1;
    }
    g
}

fn star_discrepancy<T: Real>(columns: &[Vec<T>]) -> T {
    let k = columns.len();
    let x = columns[0].len();
    let g = grid_side(k);
    let gt = T::from_usize_exact(g);
    let mut counts = vec![0u64; g.pow(k as u32)];
    for i in 0..x {
        let mut cell = 0usize;
        for col in columns {
            let c = ((col[i] + T::half()) * gt).ceil().to_usize().unwrap_or(0);
            cell = cell * g + c.clamp(1, g) - 1;
        }
        counts[cell] += 1;
    }
    // Prefix sums along every axis turn cell counts into anchored-box counts.
    for axis in 0..k {
        let stride = g.pow((k - 1 - axis) as u32);
        for idx in 0..counts.len() {
            if !(idx / stride).is_multiple_of(g) {
                counts[idx] += counts[idx - stride];
            }
        }
    }
    let xt = T::from_usize_exact(x);
    counts
        .iter()
        .enumerate()
        .map(|(idx, &c)| {
            let mut vol = T::one();
            let mut rest = idx;
            for _ in 0..k {
                vol *= T::from_usize_exact(rest % g + 1) / gt;
                rest /= g;
            }
            (T::from_u64(c).unwrap_or(T::zero()) / xt - vol).abs()
        })
        .fold(T::zero(), T::max)
}

/// Uniformity diagnostics of the error vectors `ε_x^k` for `0 ≤ x < X`.
pub fn equidistribution_discrepancy<T: Real>(
    chain: &HomothetyChain<T>,
    x_count: usize,
) -> Result<EquidistributionReport<T>> {
    if x_count < 1000 {
        return Err(invalid("need at least 1000 orbits"));
    }
    chain.check_start(x_count as i64)?;
    let k = chain.k();
    let mut flat = vec![T::zero(); x_count * k];
    flat.par_chunks_mut(k).enumerate().for_each(|(x, out)| chain.errors_into(x as i64, out));
    let columns: Vec<Vec<T>> = (0..k).map(|m| flat.iter().skip(m).step_by(k).copied().collect()).collect();
    drop(flat);

    let xt = T::from_usize_exact(x_count);
    let twelve = T::lit(12.0);
    let mut max_pair_correlation = T::zero();
    for a in 0..k {
        for b in a + 1..k {
            let dot = columns[a].iter().zip(&columns[b]).fold(T::zero(), |s, (&p, &q)| s + p * q);
            max_pair_correlation = max_pair_correlation.max((dot / xt * twelve).abs());
        }
    }
    let star = star_discrepancy(&columns);
    let per_coordinate_ks = columns.into_par_iter().map(|mut c| ks_uniform_statistic(&mut c)).collect();
    Ok(EquidistributionReport { per_coordinate_ks, max_pair_correlation, star_discrepancy: star })
}

#[derive(Clone, Debug, PartialEq)]
pub struct QFreeDiagnostic<T> {
    pub residual: T,
    pub witness: Vec<i64>,
}

/// Smallest distance to ℤ of `Σ m_i v_i` over nonzero `m` with `|m_i| ≤ bound`.
pub fn qfree_diagnostic<T: Real>(values: &[T], bound: u32) -> Result<QFreeDiagnostic<T>> {
    if values.is_empty() || values.len() > MAX_QFREE_VALUES {
        return Err(invalid("qfree_diagnostic takes 1 to 6 values"));
    }
    if bound == 0 || bound > MAX_QFREE_BOUND {
        return Err(invalid("coefficient bound must be in 1..=10"));
    }
    let b = bound as i64;
    let n = values.len();
    let mut m = vec![-b; n];
    let mut best = QFreeDiagnostic { residual: T::infinity(), witness: vec![0; n] };
    loop {
        // m and −m give the same residual; keep the one whose first nonzero entry is positive.
        if let Some(&first) = m.iter().find(|&&c| c != 0) {
            if first > 0 {
                let s = m.iter().zip(values).fold(T::zero(), |s, (&c, &v)| s + T::from_i64_exact(c) * v);
                let r = (s - s.round()).abs();
                if r < best.residual {
                    best = QFreeDiagnostic { residual: r, witness: m.clone() };
                }
            }
        }
        let mut i = n;
        loop {
            if i == 0 {
                return Ok(best);
            }
            i -= 1;
            if m[i] < b {
                m[i] += 1;
                break;
            }
            m[i] = -b;
        }
    }
}

/// Coefficient bound used when screening `n` values: the largest `B ≤ 10`
/// with `(2B + 1)^n ≤ 100`, and at least 1.
pub fn screen_bound(n: usize) -> u32 {
    (1..=MAX_QFREE_BOUND)
        .rev()
        .find(|&b| (2 * b as u64 + 1).checked_pow(n as u32).is_some_and(|c| c <= 100))
        .unwrap_or(1)
}

/// Smallest residual over the two families that govern a chain: the inverse
/// tails `(λ̃_m⁻¹)_{m<k}` and the prefix products `(λ_1⋯λ_m)_{m≤k}`.
pub fn screen_chain<T: Real>(chain: &HomothetyChain<T>) -> Result<T> {
    let k = chain.k().min(MAX_QFREE_VALUES);
    let inverse_tails: Vec<T> = (0..k).map(|m| T::one() / chain.tilde(m)).collect();
    let mut prefix = Vec::with_capacity(k);
    let mut p = T::one();
    for &l in chain.lambdas().iter().take(k) {
        p *= l;
        prefix.push(p);
    }
    let bound = screen_bound(k);
    let a = qfree_diagnostic(&inverse_tails, bound)?.residual;
    let b = qfree_diagnostic(&prefix, bound)?.residual;
    Ok(a.min(b))
}

/// Draws multipliers uniformly in `[lo, hi)` until the chain passes [`screen_chain`].
pub fn sample_generic_chain<T: Real, R: Rng>(rng: &mut R, k: usize, lo: f64, hi: f64) -> Result<HomothetyChain<T>> {
    if !(lo > 1.0 && hi > lo) {
        return Err(invalid("sampling range must satisfy 1 < lo < hi"));
    }
    for _ in 0..1000 {
        let lambdas = (0..k).map(|_| T::lit(rng.gen_range(lo..hi))).collect();
        let chain = HomothetyChain::new(lambdas)?;
        if screen_chain(&chain)? >= T::lit(QFREE_THRESHOLD) {
            return Ok(chain);
        }
    }
    Err(invalid("no generic chain found in 1000 draws"))
}
