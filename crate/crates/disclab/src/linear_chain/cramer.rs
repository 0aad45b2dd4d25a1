use super::HomothetyChain;
use crate::error::{invalid, Result};
use crate::sum::{chunked_range_sum, chunked_sum, compensated_sum};
use crate::Real;

/// `Card{x ≥ 0 : ℓ̂^k(x) ≤ y}` for `y ≥ 0`.
pub(crate) fn count_leq<T: Real>(chain: &HomothetyChain<T>, y: T) -> i64 {
    // ℓ̂^k is strictly increasing on ℕ and stays within a bounded distance of λ̃_0 x.
    let mut x = (y / chain.tilde(0)).floor().to_i64().unwrap_or(0).max(0);
    while chain.image_unchecked(x + 1) <= floor_i64(y) {
        x += 1;
    }
    while x >= 0 && chain.image_unchecked(x) > floor_i64(y) {
        x -= 1;
    }
    x + 1
}

/// Calls `f(n, cδ(n + 1/2))` for `n` in `start..start + len`, walking the image set.
pub(crate) fn walk_half_integers<T: Real>(
    chain: &HomothetyChain<T>,
    start: usize,
    len: usize,
    mut f: impl FnMut(usize, T),
) {
    let t0 = chain.tilde(0);
    let mut next = count_leq(chain, T::from_usize_exact(start));
    let mut next_image = chain.image_unchecked(next);
    for n in start..start + len {
        while next_image <= n as i64 {
            next += 1;
            next_image = chain.image_unchecked(next);
        }
        let y = T::from_usize_exact(n) + T::half();
        f(n, y / t0 - T::from_i64_exact(next) + T::half());
    }
}

fn floor_i64<T: Real>(y: T) -> i64 {
    y.floor().to_i64().expect("value within the integer budget")
}

fn check_y<T: Real>(chain: &HomothetyChain<T>, y: T) -> Result<()> {
    if !(y >= T::zero()) {
        return Err(invalid("cumulated difference needs y ≥ 0"));
    }
    chain.check_start(floor_i64(y) + 1)
}

/// `cδ(y) = y/λ̃_0 − Card{x ∈ ℕ : ℓ̂^k(x) ≤ y} + 1/2`.
pub fn cumulated_difference_direct<T: Real>(chain: &HomothetyChain<T>, y: T) -> Result<T> {
    check_y(chain, y)?;
    Ok(y / chain.tilde(0) - T::from_i64_exact(count_leq(chain, y)) + T::half())
}

pub(crate) fn check_r<T: Real>(chain: &HomothetyChain<T>, r: u64) -> Result<()> {
    if T::from_u64(r).unwrap_or(T::zero()) < chain.tilde(0) {
        return Err(invalid("R must be at least λ̃_0"));
    }
    chain.check_start(r as i64 + 1)
}

/// Sums `term(c)` over the integer points `n` in `0..r`, where `c = cδ(n)`.
fn sum_over_integers<T, F>(chain: &HomothetyChain<T>, r: u64, term: F) -> T
where
    T: Real,
    F: Fn(T) -> T + Sync,
{
    let t0 = chain.tilde(0);
    chunked_range_sum(r as usize, |range| {
        let mut next = count_leq(chain, T::from_usize_exact(range.start));
        let mut next_image = chain.image_unchecked(next);
        let mut acc = crate::sum::Compensated::new();
        for n in range {
            while next_image <= n as i64 {
                next += 1;
                next_image = chain.image_unchecked(next);
            }
            let c = T::from_usize_exact(n) / t0 - T::from_i64_exact(next) + T::half();
            acc.add(term(c));
        }
        acc.value()
    })
}

/// `d_C,R² = (1/R) ∫_0^R cδ²`, integrated exactly over each unit interval.
pub fn empirical_cramer<T: Real>(chain: &HomothetyChain<T>, r: u64) -> Result<T> {
    check_r(chain, r)?;
    let inv = T::one() / chain.tilde(0);
    let third = inv * inv / T::lit(3.0);
    let s = sum_over_integers(chain, r, |c| c * c + c * inv + third);
    Ok(s / T::from_u64(r).expect("R fits the scalar type"))
}

/// `(1/R) ∫_0^R cδ`.
pub fn mean_cumulated_difference<T: Real>(chain: &HomothetyChain<T>, r: u64) -> Result<T> {
    check_r(chain, r)?;
    let half_slope = T::half() / chain.tilde(0);
    let s = sum_over_integers(chain, r, |c| c + half_slope);
    Ok(s / T::from_u64(r).expect("R fits the scalar type"))
}

/// Variance of `cδ(n + 1/2)` over `n` in `0..R`, each value from a direct count.
pub fn half_integer_variance<T: Real>(chain: &HomothetyChain<T>, r: u64) -> Result<T> {
    check_r(chain, r)?;
    let t0 = chain.tilde(0);
    let value = |n: usize| {
        let y = T::from_usize_exact(n) + T::half();
        y / t0 - T::from_i64_exact(count_leq(chain, y)) + T::half()
    };
    let rt = T::from_u64(r).expect("R fits the scalar type");
    let mean = chunked_sum(r as usize, value) / rt;
    Ok(chunked_sum(r as usize, |n| {
        let d = value(n) - mean;
        d * d
    }) / rt)
}

/// `(1/(12 λ̃_0²)) Σ_{m=0}^k λ̃_m²`, the squared Cramér distance of a ℚ-free chain.
pub fn closed_form_cramer<T: Real>(chain: &HomothetyChain<T>) -> T {
    let t0 = chain.tilde(0);
    compensated_sum(chain.tildes().iter().map(|&t| t * t)) / (T::lit(12.0) * t0 * t0)
}

/// `Var ℰ^k = (1/12) Σ_{m=1}^k λ̃_m²`.
pub fn global_error_variance<T: Real>(chain: &HomothetyChain<T>) -> T {
    compensated_sum(chain.tildes()[1..].iter().map(|&t| t * t)) / T::lit(12.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    const PHI: f64 = 1.618_033_988_749_895;

    #[test]
    fn origin_value() {
        let c = HomothetyChain::new(vec![1.41, 2.2]).unwrap();
        assert_eq!(cumulated_difference_direct(&c, 0.0).unwrap(), -0.5);
    }

    #[test]
    fn golden_value_below_first_image() {
        let c = HomothetyChain::new(vec![PHI]).unwrap();
        let v = cumulated_difference_direct(&c, 1.9).unwrap();
        assert!((v - (1.9 / PHI - 0.5)).abs() < 1e-15);
    }

    #[test]
    fn count_matches_enumeration() {
        let c = HomothetyChain::new(vec![1.37, 2.81]).unwrap();
        let images: Vec<i64> = (0..2000).map(|x| c.image_unchecked(x)).collect();
        for y in 0..3000 {
            let brute = images.iter().filter(|&&v| v <= y).count() as i64;
            assert_eq!(count_leq(&c, y as f64), brute);
        }
    }

    #[test]
    fn golden_closed_form() {
        let c = HomothetyChain::new(vec![PHI]).unwrap();
        let want = (PHI * PHI + 1.0) / (12.0 * PHI * PHI);
        assert!((closed_form_cramer(&c) - want).abs() < 1e-15);
    }

    #[test]
    fn uniform_geometric_sum() {
        let l: f64 = 1.7;
        let k = 4;
        let c = HomothetyChain::new(vec![l; k]).unwrap();
        let want = (1.0 - l.powi(-2 * (k as i32 + 1))) / (12.0 * (1.0 - l.powi(-2)));
        assert!((closed_form_cramer(&c) - want).abs() < 1e-14);
    }

    #[test]
    fn closed_form_splits_into_slope_and_error_variance() {
        let c = HomothetyChain::new(vec![1.3_f64, 3.1, 2.2]).unwrap();
        let t0 = c.tilde(0);
        let want = 1.0 / 12.0 + global_error_variance(&c) / (t0 * t0);
        assert!((closed_form_cramer(&c) - want).abs() < 1e-15);
    }

    #[test]
    fn r_below_expansion_is_rejected() {
        let c = HomothetyChain::new(vec![3.0, 3.0]).unwrap();
        assert!(empirical_cramer(&c, 5).is_err());
    }
}
