//! Torus picture of a chain: errors and cumulated differences as projections
//! onto fundamental domains, reduced row by row through the bidiagonal matrices.

use super::{round_half_up, HomothetyChain};
use crate::error::{invalid, Result};
use crate::Real;

/// The matrices `N`, `M` and `M̃` attached to a chain.
#[derive(Clone, Debug)]
pub struct ChainLattice<T> {
    pub n: Vec<Vec<T>>,
    pub m: Vec<Vec<T>>,
    pub m_tilde: Vec<Vec<T>>,
}

impl<T: Real> ChainLattice<T> {
    pub fn new(chain: &HomothetyChain<T>) -> Self {
        let k = chain.k();
        let mut n = vec![vec![T::zero(); k]; k];
        let mut m = vec![vec![T::zero(); k + 1]; k + 1];
        let mut m_tilde = vec![vec![T::zero(); k]; k];
        for r in 0..k {
            n[r][r] = -T::one();
            if r > 0 {
                n[r][r - 1] = chain.lambdas()[r];
            }
            m[r][r] = chain.lambdas()[r];
            m[r][r + 1] = -T::one();
            m_tilde[r][r] = chain.lambdas()[r];
            if r + 1 < k {
                m_tilde[r][r + 1] = -T::one();
            }
        }
        m[k][k] = T::one();
        Self { n, m, m_tilde }
    }

    /// `det M̃`, the product of its diagonal.
    pub fn det_m_tilde(&self) -> T {
        (0..self.m_tilde.len()).map(|i| self.m_tilde[i][i]).fold(T::one(), |a, b| a * b)
    }

    /// Solves `M̃ z = b` by back substitution.
    pub fn solve_m_tilde(&self, b: &[T]) -> Vec<T> {
        let k = self.m_tilde.len();
        let mut z = vec![T::zero(); k];
        for r in (0..k).rev() {
            let rhs = if r + 1 < k { b[r] - self.m_tilde[r][r + 1] * z[r + 1] } else { b[r] };
            z[r] = rhs / self.m_tilde[r][r];
        }
        z
    }

    /// `M̃⁻¹ (0, …, 0, 1)`.
    pub fn inverse_last_column(&self) -> Vec<T> {
        let k = self.m_tilde.len();
        let mut e = vec![T::zero(); k];
        e[k - 1] = T::one();
        self.solve_m_tilde(&e)
    }

    pub fn mul_n(&self, v: &[i64]) -> Vec<T> {
        mat_vec(&self.n, v)
    }

    pub fn mul_m_tilde(&self, v: &[i64]) -> Vec<T> {
        mat_vec(&self.m_tilde, v)
    }
}

fn mat_vec<T: Real>(a: &[Vec<T>], v: &[i64]) -> Vec<T> {
    a.iter().map(|row| row.iter().zip(v).fold(T::zero(), |s, (&x, &y)| s + x * T::from_i64_exact(y))).collect()
}

/// Representative of `v` in `W^k = (−1/2, 1/2]^k` modulo `N ℤ^k`, with the
/// lattice coordinates used.
pub fn reduce_mod_n<T: Real>(chain: &HomothetyChain<T>, v: &[T]) -> (Vec<i64>, Vec<T>) {
    let mut coords = Vec::with_capacity(v.len());
    let mut eps = Vec::with_capacity(v.len());
    let mut prev = 0i64;
    for (r, &vr) in v.iter().enumerate() {
        let shift = if r == 0 { T::zero() } else { chain.lambdas()[r] * T::from_i64_exact(prev) };
        let n = round_half_up(shift - vr);
        eps.push(vr - shift + T::from_i64_exact(n));
        coords.push(n);
        prev = n;
    }
    (coords, eps)
}

/// Roundoff errors of the orbit of `x`, read off the lattice decomposition of
/// `(λ_1 x, 0, …, 0)`.
pub fn error_vector_via_lattice<T: Real>(chain: &HomothetyChain<T>, x: i64) -> Result<Vec<T>> {
    chain.check_start(x)?;
    let mut u = vec![T::zero(); chain.k()];
    u[0] = -(chain.lambdas()[0] * T::from_i64_exact(x));
    Ok(reduce_mod_n(chain, &u).1)
}

/// A preimage found by [`image_membership`].
#[derive(Clone, Debug, PartialEq)]
pub struct Preimage<T> {
    pub x: i64,
    pub trajectory: Vec<i64>,
    pub errors: Vec<T>,
}

/// Finds `x` with `ℓ̂^k(x) = y`, if any, by reducing `(0, …, 0, y)` modulo
/// `M̃ ℤ^k` into `W^k` from the last row upwards.
pub fn image_membership<T: Real>(chain: &HomothetyChain<T>, y: i64) -> Result<Option<Preimage<T>>> {
    chain.check_start(y)?;
    let k = chain.k();
    let mut trajectory = vec![0i64; k];
    let mut errors = vec![T::zero(); k];
    let mut target = y;
    for r in (0..k).rev() {
        let l = chain.lambdas()[r];
        let t = T::from_i64_exact(target);
        let guess = ((t - T::half()) / l).ceil().to_i64().unwrap_or(0);
        let hit =
            [guess, guess - 1, guess + 1].into_iter().find(|&c| round_half_up(l * T::from_i64_exact(c)) == target);
        let Some(c) = hit else { return Ok(None) };
        trajectory[r] = target;
        errors[r] = t - l * T::from_i64_exact(c);
        target = c;
    }
    Ok(Some(Preimage { x: target, trajectory, errors }))
}

/// Representative of `v` in `𝒟 = Π [1/2 − λ_m, 1/2)` modulo `M̃ ℤ^k`.
pub fn reduce_mod_m_tilde<T: Real>(chain: &HomothetyChain<T>, v: &[T]) -> (Vec<i64>, Vec<T>) {
    let k = chain.k();
    let mut coords = vec![0i64; k];
    let mut z = vec![T::zero(); k];
    let mut carry = 0i64;
    for r in (0..k).rev() {
        let l = chain.lambdas()[r];
        let t = v[r] + T::from_i64_exact(carry);
        // z_r ∈ [1/2 − λ, 1/2); the closed side matches the direct count on ties.
        let j = ((t - T::half()) / l).floor().to_i64().unwrap_or(0) + 1;
        coords[r] = j;
        z[r] = t - l * T::from_i64_exact(j);
        carry = j;
    }
    (coords, z)
}

/// The affine expression of the cumulated difference on `𝒟`.
pub fn affine_value<T: Real>(chain: &HomothetyChain<T>, z: &[T]) -> Result<T> {
    if z.len() != chain.k() {
        return Err(invalid("point of 𝒟 must have k coordinates"));
    }
    let t0 = chain.tilde(0);
    let s = z.iter().enumerate().fold(T::zero(), |s, (r, &zr)| s + zr * chain.tilde(r + 1) / t0);
    Ok(-T::half() - s)
}

/// `cδ(n)` from the projection of `(0, …, 0, −n)` onto `𝒟`.
pub fn cumulated_difference_affine<T: Real>(chain: &HomothetyChain<T>, n: i64) -> Result<T> {
    if n < 0 {
        return Err(invalid("n must be nonnegative"));
    }
    chain.check_start(n)?;
    let mut v = vec![T::zero(); chain.k()];
    v[chain.k() - 1] = -T::from_i64_exact(n);
    let (_, z) = reduce_mod_m_tilde(chain, &v);
    affine_value(chain, &z)
}
