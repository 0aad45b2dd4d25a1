//! Chains of discretized homotheties `x ↦ round(λ x)` on the integers.

mod cramer;
mod equidistribution;
mod lattice;

use std::io::Write;

use crate::error::{invalid, Error, Result};
use crate::Real;

pub(crate) use cramer::{check_r, walk_half_integers};
pub use cramer::{
    closed_form_cramer, cumulated_difference_direct, empirical_cramer, global_error_variance, half_integer_variance,
    mean_cumulated_difference,
};
pub use equidistribution::{
    equidistribution_discrepancy, ks_uniform_statistic, qfree_diagnostic, sample_generic_chain, screen_bound,
    screen_chain, EquidistributionReport, QFreeDiagnostic, QFREE_THRESHOLD,
};
pub use lattice::{
    affine_value, cumulated_difference_affine, error_vector_via_lattice, image_membership, reduce_mod_m_tilde,
    reduce_mod_n, ChainLattice, Preimage,
};

/// Multipliers `λ_1..λ_k`, applied in that order.
#[derive(Clone, Debug, PartialEq)]
pub struct HomothetyChain<T> {
    lambdas: Vec<T>,
    tilde: Vec<T>,
}

impl<T: Real> HomothetyChain<T> {
    pub fn new(lambdas: Vec<T>) -> Result<Self> {
        if lambdas.is_empty() {
            return Err(invalid("a chain needs at least one multiplier"));
        }
        if lambdas.iter().any(|&l| !(l.is_finite() && l > T::one())) {
            return Err(invalid("every multiplier must be finite and > 1"));
        }
        let k = lambdas.len();
        let mut tilde = vec![T::one(); k + 1];
        for m in (0..k).rev() {
            tilde[m] = lambdas[m] * tilde[m + 1];
        }
        Ok(Self { lambdas, tilde })
    }

    pub fn k(&self) -> usize {
        self.lambdas.len()
    }

    pub fn lambdas(&self) -> &[T] {
        &self.lambdas
    }

    /// `λ_m` with the 1-based index used throughout.
    pub fn lambda(&self, m: usize) -> T {
        self.lambdas[m - 1]
    }

    /// `λ̃_m = Π_{i>m} λ_i` for `m` in `0..=k`.
    pub fn tilde(&self, m: usize) -> T {
        self.tilde[m]
    }

    pub fn tildes(&self) -> &[T] {
        &self.tilde
    }

    pub(crate) fn check_start(&self, x: i64) -> Result<()> {
        let reach = T::from_i64_exact(x).abs() * self.tilde[0] + T::lit(self.k() as f64);
        if !(reach.to_f64_lossy() < T::EXACT_INT) {
            return Err(Error::Overflow { value: reach.to_f64_lossy(), budget: T::EXACT_INT });
        }
        Ok(())
    }

    /// `ℓ̂^k(x)` without budget checks.
    pub(crate) fn image_unchecked(&self, x: i64) -> i64 {
        self.lambdas.iter().fold(x, |y, &l| round_half_up(l * T::from_i64_exact(y)))
    }

    pub fn image(&self, x: i64) -> Result<i64> {
        self.check_start(x)?;
        Ok(self.image_unchecked(x))
    }

    /// Roundoff errors `e^1..e^k` of the orbit of `x`, written into `out`.
    pub(crate) fn errors_into(&self, x: i64, out: &mut [T]) {
        let mut y = x;
        for (e, &l) in out.iter_mut().zip(&self.lambdas) {
            let v = l * T::from_i64_exact(y);
            let n = round_half_up(v);
            *e = T::from_i64_exact(n) - v;
            y = n;
        }
    }
}

fn round_half_up<T: Real>(v: T) -> i64 {
    let f = v.floor();
    let n = if v - f >= T::half() { f + T::one() } else { f };
    n.to_i64().expect("value within the integer budget")
}

/// The integer `n` with `n − v ∈ (−1/2, 1/2]`.
pub fn discretize_value<T: Real>(v: T) -> Result<i64> {
    if !(v.abs().to_f64_lossy() < T::EXACT_INT) {
        return Err(Error::Overflow { value: v.to_f64_lossy(), budget: T::EXACT_INT });
    }
    Ok(round_half_up(v))
}

/// The orbit of one integer under a chain together with its roundoff errors.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundoffTrace<T> {
    pub x: i64,
    pub trajectory: Vec<i64>,
    pub errors: Vec<T>,
    pub global_error: T,
}

pub fn iterate_chain<T: Real>(chain: &HomothetyChain<T>, x: i64) -> Result<RoundoffTrace<T>> {
    chain.check_start(x)?;
    let mut trajectory = Vec::with_capacity(chain.k());
    let mut errors = Vec::with_capacity(chain.k());
    let mut y = x;
    for &l in chain.lambdas() {
        let v = l * T::from_i64_exact(y);
        let n = round_half_up(v);
        errors.push(T::from_i64_exact(n) - v);
        trajectory.push(n);
        y = n;
    }
    let global_error = T::from_i64_exact(y) - chain.tilde(0) * T::from_i64_exact(x);
    Ok(RoundoffTrace { x, trajectory, errors, global_error })
}

/// Writes traces with columns `x, l_1..l_k, e_1..e_k, E`.
pub fn write_traces_csv<T: Real, W: Write>(
    chain: &HomothetyChain<T>,
    xs: impl IntoIterator<Item = i64>,
    w: W,
) -> Result<()> {
    let k = chain.k();
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["x".to_string()];
    header.extend((1..=k).map(|m| format!("l_{m}")));
    header.extend((1..=k).map(|m| format!("e_{m}")));
    header.push("E".to_string());
    out.write_record(&header)?;
    for x in xs {
        let t = iterate_chain(chain, x)?;
        let mut row = vec![x.to_string()];
        row.extend(t.trajectory.iter().map(|v| v.to_string()));
        row.extend(t.errors.iter().map(|v| v.to_string()));
        row.push(t.global_error.to_string());
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const PHI: f64 = 1.618_033_988_749_895;

    #[test]
    fn half_integers_round_up() {
        assert_eq!(discretize_value(2.5).unwrap(), 3);
        assert_eq!(discretize_value(2.49).unwrap(), 2);
        assert_eq!(discretize_value(2.51).unwrap(), 3);
        assert_eq!(discretize_value(-0.5).unwrap(), 0);
        assert_eq!(discretize_value(-1.5).unwrap(), -1);
        assert_eq!(discretize_value(0.499_999_999_999_999_94).unwrap(), 0);
    }

    #[test]
    fn budget_is_enforced() {
        assert!(discretize_value(1e17).is_err());
        assert!(discretize_value(1e9_f32).is_err());
        let c = HomothetyChain::new(vec![3.0, 3.0]).unwrap();
        assert!(iterate_chain(&c, 1 << 50).is_err());
    }

    #[test]
    fn tails() {
        let c = HomothetyChain::new(vec![2.0, 3.0, 5.0]).unwrap();
        assert_eq!(c.tildes(), &[30.0, 15.0, 5.0, 1.0]);
        assert_eq!(c.lambda(2), 3.0);
    }

    #[test]
    fn rejects_contractions() {
        assert!(HomothetyChain::new(vec![1.0]).is_err());
        assert!(HomothetyChain::<f64>::new(vec![]).is_err());
    }

    #[test]
    fn golden_step() {
        let c = HomothetyChain::new(vec![PHI]).unwrap();
        let t = iterate_chain(&c, 1).unwrap();
        assert_eq!(t.trajectory, vec![2]);
        assert!((t.errors[0] - (2.0 - PHI)).abs() < 1e-15);
        let z = iterate_chain(&c, 0).unwrap();
        assert_eq!(z.trajectory, vec![0]);
        assert_eq!(z.errors, vec![0.0]);
        assert_eq!(z.global_error, 0.0);
    }

    #[test]
    fn trace_csv_columns() {
        let c = HomothetyChain::new(vec![1.5, 2.5]).unwrap();
        let mut buf = Vec::new();
        write_traces_csv(&c, 0..3, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "x,l_1,l_2,e_1,e_2,E");
        assert_eq!(text.lines().count(), 4);
    }
}
