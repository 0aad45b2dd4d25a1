use rayon::prelude::*;

use super::{branch_inverses, ExpandingMap};
use crate::error::{invalid, Error, Result};
use crate::measures::MeshDensity;
use crate::Real;

pub const DEFAULT_MESH: usize = 1 << 14;
pub const MIN_MESH: usize = 1 << 10;
const MAX_SRB_ITERATIONS: usize = 10_000;

#[derive(Clone, Copy, Debug)]
struct Entry<T> {
    cell: u32,
    frac: T,
    inv_slope: T,
}

/// `L_f φ(y) = Σ_{f(x)=y} φ(x)/f′(x)` collocated at the midpoints of a uniform mesh.
///
/// Branch inverses are solved once per mesh point; applying the operator is a
/// gather over `d` interpolation stencils per cell.
#[derive(Clone, Debug)]
pub struct TransferOperator<T> {
    mesh: usize,
    degree: usize,
    entries: Vec<Entry<T>>,
}

impl<T: Real> TransferOperator<T> {
    pub fn new(f: &ExpandingMap<T>, mesh: usize) -> Result<Self> {
        if mesh < MIN_MESH {
            return Err(invalid(format!("mesh size must be at least {MIN_MESH}")));
        }
        if mesh > u32::MAX as usize {
            return Err(invalid("mesh size exceeds 2^32"));
        }
        let mt = T::from_usize_exact(mesh);
        let d = f.degree() as usize;
        let rows: Vec<Vec<Entry<T>>> = (0..mesh)
            .into_par_iter()
            .map(|i| {
                let y = (T::from_usize_exact(i) + T::half()) / mt;
                let xs = branch_inverses(f, y)?;
                Ok(xs
                    .into_iter()
                    .map(|x| {
                        let t = x * mt - T::half();
                        let base = t.floor();
                        let cell = base.to_i64().unwrap_or(0).rem_euclid(mesh as i64) as u32;
                        Entry { cell, frac: t - base, inv_slope: T::one() / f.derivative(x) }
                    })
                    .collect())
            })
            .collect::<Result<_>>()?;
        Ok(Self { mesh, degree: d, entries: rows.into_iter().flatten().collect() })
    }

    pub fn mesh_size(&self) -> usize {
        self.mesh
    }

    pub fn apply(&self, phi: &MeshDensity<T>) -> Result<MeshDensity<T>> {
        if phi.mesh_size() != self.mesh {
            return Err(invalid(format!("density has {} cells, operator has {}", phi.mesh_size(), self.mesh)));
        }
        Ok(MeshDensity::from_values_unchecked(self.apply_values(phi.values())))
    }

    fn apply_values(&self, v: &[T]) -> Vec<T> {
        let m = self.mesh;
        self.entries
            .par_chunks(self.degree)
            .map(|row| {
                row.iter().fold(T::zero(), |s, e| {
                    let i0 = e.cell as usize;
                    let i1 = if i0 + 1 == m { 0 } else { i0 + 1 };
                    s + (v[i0] * (T::one() - e.frac) + v[i1] * e.frac) * e.inv_slope
                })
            })
            .collect()
    }

    /// `L_f^m 1`.
    pub fn power_one(&self, m: usize) -> MeshDensity<T> {
        let mut v = vec![T::one(); self.mesh];
        for _ in 0..m {
            v = self.apply_values(&v);
        }
        MeshDensity::from_values_unchecked(v)
    }

    /// `L_f^0 1, …, L_f^k 1`.
    pub fn powers_one(&self, k: usize) -> Vec<MeshDensity<T>> {
        let mut out = Vec::with_capacity(k + 1);
        let mut v = vec![T::one(); self.mesh];
        for _ in 0..k {
            let next = self.apply_values(&v);
            out.push(MeshDensity::from_values_unchecked(v));
            v = next;
        }
        out.push(MeshDensity::from_values_unchecked(v));
        out
    }

    /// Iterates from the constant density until the sup-change drops below `tol`.
    pub fn srb(&self, tol: T) -> Result<MeshDensity<T>> {
        if !(tol > T::zero()) {
            return Err(invalid("tolerance must be positive"));
        }
        let mut v = vec![T::one(); self.mesh];
        let mut change = T::infinity();
        for _ in 0..MAX_SRB_ITERATIONS {
            let next = self.apply_values(&v);
            change = next.iter().zip(&v).map(|(a, b)| (*a - *b).abs()).fold(T::zero(), T::max);
            v = next;
            if change < tol {
                return MeshDensity::from_values_unchecked(v).normalized();
            }
        }
        Err(Error::NoConvergence { iterations: MAX_SRB_ITERATIONS, change: change.to_f64_lossy() })
    }
}

/// One application of the transfer operator on the mesh of `phi`.
pub fn transfer_apply<T: Real>(f: &ExpandingMap<T>, phi: &MeshDensity<T>) -> Result<MeshDensity<T>> {
    TransferOperator::new(f, phi.mesh_size())?.apply(phi)
}

pub fn transfer_power_one<T: Real>(f: &ExpandingMap<T>, m: usize, mesh: usize) -> Result<MeshDensity<T>> {
    Ok(TransferOperator::new(f, mesh)?.power_one(m))
}

/// Invariant density on the default mesh.
pub fn srb_density<T: Real>(f: &ExpandingMap<T>, tol: T) -> Result<MeshDensity<T>> {
    TransferOperator::new(f, DEFAULT_MESH)?.srb(tol)
}
