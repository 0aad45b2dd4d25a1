//! Expanding maps of the circle, their grid discretizations and their
//! transfer operator.

mod grid;
mod preimage;
mod transfer;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::Real;

pub use grid::{discretize_point, pushforward_grid, roundoff_ks, GridMap, GridSpec, RESONANCE_KS};
pub use preimage::{branch_inverses, build_preimage_tree, PreimageNode, PreimageTree};
pub use transfer::{srb_density, transfer_apply, transfer_power_one, TransferOperator, DEFAULT_MESH, MIN_MESH};

/// Points of the derivative audit mesh.
pub const AUDIT_POINTS: usize = 1 << 16;
const MAX_HARMONICS: usize = 16;

/// One term `a·sin(2π j x + φ)` of the perturbation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Harmonic<T> {
    pub j: u32,
    pub amplitude: T,
    pub phase: T,
}

/// `f(x) = d·x + Σ a_j sin(2π j x + φ_j) mod 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpandingMap<T> {
    degree: u32,
    harmonics: Vec<Harmonic<T>>,
    cuts: Vec<T>,
    derivative_bounds: (T, T),
}

impl<T: Real> ExpandingMap<T> {
    pub fn new(degree: u32, harmonics: Vec<Harmonic<T>>) -> Result<Self> {
        if degree < 2 {
            return Err(invalid("degree must be at least 2"));
        }
        if harmonics.len() > MAX_HARMONICS {
            return Err(invalid(format!("at most {MAX_HARMONICS} harmonics")));
        }
        if harmonics.iter().any(|h| h.j == 0 || !h.amplitude.is_finite() || !h.phase.is_finite()) {
            return Err(invalid("harmonic frequencies must be ≥ 1 with finite coefficients"));
        }
        let mut map = Self { degree, harmonics, cuts: Vec::new(), derivative_bounds: (T::zero(), T::zero()) };
        map.derivative_bounds = map.audit();
        if map.derivative_bounds.0 <= T::one() {
            return Err(Error::NotExpanding { bound: map.derivative_bounds.0.to_f64_lossy() });
        }
        map.cuts = map.compute_cuts()?;
        Ok(map)
    }

    /// `x ↦ 2x`.
    pub fn doubling() -> Self {
        Self::new(2, Vec::new()).expect("doubling is expanding")
    }

    /// Degree-`d` map with `harmonics` random terms, `a_j = jitter·U(−1, 1)/j`
    /// and `φ_j = 2π·U(0, 1)`.
    pub fn perturbed(degree: u32, jitter: f64, harmonics: u32, seed: u64) -> Result<Self> {
        if !(jitter >= 0.0) {
            return Err(invalid("jitter must be nonnegative"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let terms = (1..=harmonics)
            .map(|j| {
                let a = jitter * rng.gen_range(-1.0..1.0) / j as f64;
                let phi = std::f64::consts::TAU * rng.gen::<f64>();
                Harmonic { j, amplitude: T::lit(a), phase: T::lit(phi) }
            })
            .collect();
        Self::new(degree, terms)
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn harmonics(&self) -> &[Harmonic<T>] {
        &self.harmonics
    }

    pub fn is_linear(&self) -> bool {
        self.harmonics.iter().all(|h| h.amplitude == T::zero())
    }

    /// Certified `(inf f′, sup f′)` from the audit mesh and the bound on `f″`.
    pub fn derivative_bounds(&self) -> (T, T) {
        self.derivative_bounds
    }

    /// `‖f′‖_∞`, certified from above.
    pub fn sup_derivative(&self) -> T {
        self.derivative_bounds.1
    }

    /// Branch cut points `c_0 = 0 < c_1 < … < c_d = 1` with `F(c_b) = F(0) + b`.
    pub fn cuts(&self) -> &[T] {
        &self.cuts
    }

    /// `Σ a_j sin(2π j x + φ_j)`.
    pub fn perturbation(&self, x: T) -> T {
        let tau = T::TAU();
        self.harmonics.iter().fold(T::zero(), |s, h| s + h.amplitude * (tau * T::lit(h.j as f64) * x + h.phase).sin())
    }

    /// The lift `F` with `F(x + 1) = F(x) + d`.
    pub fn lift(&self, x: T) -> T {
        T::lit(self.degree as f64) * x + self.perturbation(x)
    }

    pub fn eval(&self, x: T) -> T {
        wrap(self.lift(x))
    }

    pub fn derivative(&self, x: T) -> T {
        let tau = T::TAU();
        self.harmonics.iter().fold(T::lit(self.degree as f64), |s, h| {
            let w = tau * T::lit(h.j as f64);
            s + h.amplitude * w * (w * x + h.phase).cos()
        })
    }

    /// `(f^m(x) mod 1, Df^m(x))`.
    pub fn iterate(&self, x: T, m: usize) -> (T, T) {
        let mut y = wrap(x);
        let mut d = T::one();
        for _ in 0..m {
            d *= self.derivative(y);
            y = self.eval(y);
        }
        (y, d)
    }

    /// `F^m(x)` without reduction modulo 1.
    pub fn lift_iterate(&self, x: T, m: usize) -> T {
        (0..m).fold(x, |y, _| self.lift(y))
    }

    fn second_derivative_bound(&self) -> T {
        let tau = T::TAU();
        self.harmonics.iter().fold(T::zero(), |s, h| {
            let w = tau * T::lit(h.j as f64);
            s + w * w * h.amplitude.abs()
        })
    }

    fn audit(&self) -> (T, T) {
        let n = T::from_usize_exact(AUDIT_POINTS);
        let (lo, hi) = (0..AUDIT_POINTS)
            .map(|i| self.derivative(T::from_usize_exact(i) / n))
            .fold((T::infinity(), T::neg_infinity()), |(lo, hi), v| (lo.min(v), hi.max(v)));
        let margin = self.second_derivative_bound() / (T::lit(2.0) * n);
        (lo - margin, hi + margin)
    }

    /// Solves `F(x) = target` on `[lo, hi]`, where `F(lo) ≤ target ≤ F(hi)`.
    pub(crate) fn solve_lift(&self, target: T, lo: T, hi: T) -> Option<T> {
        let tol = T::lit(1e-13).max(T::epsilon() * T::lit(4.0));
        let (mut a, mut b) = (lo, hi);
        let mut steps = 0;
        while b - a > tol {
            if steps == 200 {
                return None;
            }
            let mid = a + (b - a) * T::half();
            if mid <= a || mid >= b {
                break;
            }
            if self.lift(mid) < target {
                a = mid;
            } else {
                b = mid;
            }
            steps += 1;
        }
        let mut x = a + (b - a) * T::half();
        for _ in 0..2 {
            x = (x - (self.lift(x) - target) / self.derivative(x)).max(lo).min(hi);
        }
        Some(x)
    }

    fn compute_cuts(&self) -> Result<Vec<T>> {
        let f0 = self.lift(T::zero());
        let mut cuts = vec![T::zero()];
        for b in 1..self.degree {
            let target = f0 + T::lit(b as f64);
            let c = self
                .solve_lift(target, T::zero(), T::one())
                .ok_or(Error::BranchInversion { y: 0.0, branch: b as usize })?;
            cuts.push(c);
        }
        cuts.push(T::one());
        Ok(cuts)
    }
}

/// Reduces into `[0, 1)`.
pub(crate) fn wrap<T: Real>(x: T) -> T {
    let r = x - x.floor();
    if r >= T::one() {
        T::zero()
    } else {
        r
    }
}

/// Distance on the circle `ℝ/ℤ`.
pub fn circle_distance<T: Real>(x: T, y: T) -> T {
    let r = wrap(x - y);
    r.min(T::one() - r)
}

/// A single explicit term in a [`MapSpec`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermSpec {
    pub j: u32,
    pub a: f64,
    pub phi: f64,
}

fn default_harmonics() -> u32 {
    3
}

/// Structured-text description of an expanding map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MapSpec {
    Doubling,
    PerturbedDoubling {
        jitter: f64,
        #[serde(default = "default_harmonics")]
        harmonics: u32,
        seed: u64,
    },
    Perturbed {
        degree: u32,
        jitter: f64,
        #[serde(default = "default_harmonics")]
        harmonics: u32,
        seed: u64,
    },
    Explicit {
        degree: u32,
        #[serde(default)]
        terms: Vec<TermSpec>,
    },
}

impl MapSpec {
    pub fn build<T: Real>(&self) -> Result<ExpandingMap<T>> {
        match *self {
            MapSpec::Doubling => Ok(ExpandingMap::doubling()),
            MapSpec::PerturbedDoubling { jitter, harmonics, seed } => {
                ExpandingMap::perturbed(2, jitter, harmonics, seed)
            }
            MapSpec::Perturbed { degree, jitter, harmonics, seed } => {
                ExpandingMap::perturbed(degree, jitter, harmonics, seed)
            }
            MapSpec::Explicit { degree, ref terms } => ExpandingMap::new(
                degree,
                terms.iter().map(|t| Harmonic { j: t.j, amplitude: T::lit(t.a), phase: T::lit(t.phi) }).collect(),
            ),
        }
    }
}
