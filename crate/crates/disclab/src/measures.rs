//! Measures on the circle, their CDF differences, and the Cramér and
//! Wasserstein-1 distances built from them.
//!
//! The circle is identified with `[0, 1)`. A CDF difference is taken from a
//! basepoint `a` and lives on `[a, a + 1]`.

use std::io::{Read, Write};

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::sum::{chunked_sum, compensated_sum, Compensated};
use crate::Real;

/// Mass mismatch tolerated by [`cdf_difference`].
pub const MASS_TOLERANCE: f64 = 1e-6;

/// Finitely many weighted points, sorted by position with duplicates merged.
#[derive(Clone, Debug, PartialEq)]
pub struct AtomicMeasure<T> {
    atoms: Vec<(T, T)>,
    total_mass: T,
}

impl<T: Real> AtomicMeasure<T> {
    /// Builds a measure from `(position, weight)` pairs in any order.
    ///
    /// Atoms at identical positions are merged and zero weights dropped.
    pub fn from_atoms(atoms: impl IntoIterator<Item = (T, T)>) -> Result<Self> {
        let mut raw: Vec<(T, T)> = atoms.into_iter().collect();
        for &(p, w) in &raw {
            if !p.is_finite() || !w.is_finite() {
                return Err(invalid("atom position and weight must be finite"));
            }
            if w < T::zero() {
                return Err(invalid("atom weights must be nonnegative"));
            }
        }
        raw.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite positions"));
        let mut atoms: Vec<(T, T)> = Vec::with_capacity(raw.len());
        for (p, w) in raw {
            if w == T::zero() {
                continue;
            }
            match atoms.last_mut() {
                Some(last) if last.0 == p => last.1 += w,
                _ => atoms.push((p, w)),
            }
        }
        let total_mass = compensated_sum(atoms.iter().map(|a| a.1));
        Ok(Self { atoms, total_mass })
    }

    /// Positions already sorted, strictly increasing, with positive weights.
    pub(crate) fn from_sorted_unchecked(atoms: Vec<(T, T)>) -> Self {
        let total_mass = compensated_sum(atoms.iter().map(|a| a.1));
        Self { atoms, total_mass }
    }

    /// The uniform measure on `E_N = {i/N}`.
    pub fn uniform_grid(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(invalid("grid order must be positive"));
        }
        let w = T::one() / T::from_usize_exact(n);
        let nt = T::from_usize_exact(n);
        Ok(Self::from_sorted_unchecked((0..n).map(|i| (T::from_usize_exact(i) / nt, w)).collect()))
    }

    pub fn dirac(position: T) -> Result<Self> {
        Self::from_atoms([(position, T::one())])
    }

    pub fn atoms(&self) -> &[(T, T)] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> T {
        self.total_mass
    }

    fn check_on_circle(&self) -> Result<()> {
        match (self.atoms.first(), self.atoms.last()) {
            (Some(&(lo, _)), Some(&(hi, _))) if lo < T::zero() || hi >= T::one() => {
                Err(invalid("atom positions must lie in [0, 1)"))
            }
            _ => Ok(()),
        }
    }

    /// Writes one `position,weight` row per atom.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["position", "weight"])?;
        for (p, m) in &self.atoms {
            out.write_record([p.to_string(), m.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let rows = read_pairs(r)?;
        Self::from_atoms(rows.into_iter().map(|(p, w)| (T::lit(p), T::lit(w))))
    }
}

/// Piecewise-constant density on the circle, sampled at cell midpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct MeshDensity<T> {
    values: Vec<T>,
}

impl<T: Real> MeshDensity<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("mesh must have at least one cell"));
        }
        if values.iter().any(|v| !v.is_finite() || *v < T::zero()) {
            return Err(invalid("density values must be finite and nonnegative"));
        }
        Ok(Self { values })
    }

    pub(crate) fn from_values_unchecked(values: Vec<T>) -> Self {
        Self { values }
    }

    pub fn constant(mesh_size: usize, value: T) -> Result<Self> {
        Self::new(vec![value; mesh_size])
    }

    pub fn mesh_size(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Midpoint of cell `j`.
    pub fn midpoint(&self, j: usize) -> T {
        (T::from_usize_exact(j) + T::half()) / T::from_usize_exact(self.values.len())
    }

    /// Quadrature mass `(1/M)·Σ values`.
    pub fn mass(&self) -> T {
        compensated_sum(self.values.iter().copied()) / T::from_usize_exact(self.values.len())
    }

    /// Rescales to unit mass.
    pub fn normalized(&self) -> Result<Self> {
        let m = self.mass();
        if m <= T::zero() {
            return Err(invalid("cannot normalize a density of zero mass"));
        }
        Ok(Self { values: self.values.iter().map(|&v| v / m).collect() })
    }

    /// Periodic linear interpolation between cell midpoints.
    pub fn interpolate(&self, x: T) -> T {
        let m = self.values.len();
        let t = x * T::from_usize_exact(m) - T::half();
        let base = t.floor();
        let frac = t - base;
        let i0 = base.to_i64().unwrap_or(0).rem_euclid(m as i64) as usize;
        let i1 = (i0 + 1) % m;
        self.values[i0] * (T::one() - frac) + self.values[i1] * frac
    }

    pub fn sup_distance(&self, other: &Self) -> Result<T> {
        if self.values.len() != other.values.len() {
            return Err(invalid("densities live on different meshes"));
        }
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| (*a - *b).abs()).fold(T::zero(), T::max))
    }

    /// Writes one `midpoint,value` row per cell.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["midpoint", "value"])?;
        for (j, v) in self.values.iter().enumerate() {
            out.write_record([self.midpoint(j).to_string(), v.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads rows written by [`MeshDensity::write_csv`]; row order is the cell order.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let rows = read_pairs(r)?;
        Self::new(rows.into_iter().map(|(_, v)| T::lit(v)).collect())
    }
}

fn read_pairs<R: Read>(r: R) -> Result<Vec<(f64, f64)>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != 2 {
            return Err(invalid(format!("expected 2 columns, found {}", rec.len())));
        }
        let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| invalid(format!("bad number {s:?}: {e}")));
        rows.push((parse(&rec[0])?, parse(&rec[1])?));
    }
    Ok(rows)
}

/// One affine piece of `H`: `H(x) = intercept + slope·(x − left)` on `[left, right)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Piece<T> {
    pub slope: T,
    pub intercept: T,
}

/// `H = F − G` on `[a, a + 1]`, affine between consecutive breakpoints.
///
/// `intercept` is the right limit of `H` at the left end of its piece, so
/// atoms located exactly at `a` are already subtracted there. `H(a)` itself is
/// `0` by convention.
#[derive(Clone, Debug)]
pub struct SignedCdfDiff<T> {
    basepoint: T,
    breakpoints: Vec<T>,
    pieces: Vec<Piece<T>>,
}

struct Source<'a, T> {
    atoms: &'a [(T, T)],
    sign: T,
}

impl<T: Real> SignedCdfDiff<T> {
    pub fn basepoint(&self) -> T {
        self.basepoint
    }

    pub fn breakpoints(&self) -> &[T] {
        &self.breakpoints
    }

    pub fn pieces(&self) -> &[Piece<T>] {
        &self.pieces
    }

    /// `H = F_μ − F_ν` for two atomic measures.
    pub fn from_atomic_pair(first: &AtomicMeasure<T>, second: &AtomicMeasure<T>, basepoint: T) -> Result<Self> {
        check_basepoint(basepoint)?;
        first.check_on_circle()?;
        second.check_on_circle()?;
        check_masses(first.total_mass(), second.total_mass())?;
        Ok(build(
            basepoint,
            None,
            &[Source { atoms: first.atoms(), sign: T::one() }, Source { atoms: second.atoms(), sign: -T::one() }],
        ))
    }

    /// Evaluates `H` (right-continuous, `H(a) = 0`). `x` is reduced into `[a, a + 1)`.
    pub fn eval(&self, x: T) -> T {
        let a = self.basepoint;
        let mut y = x - (x - a).floor();
        if y < a {
            y = a;
        }
        if y == a {
            return T::zero();
        }
        let idx = self.breakpoints.partition_point(|&b| b <= y).saturating_sub(1);
        let idx = idx.min(self.pieces.len() - 1);
        let p = self.pieces[idx];
        p.intercept + p.slope * (y - self.breakpoints[idx])
    }

    fn len_of(&self, i: usize) -> T {
        self.breakpoints[i + 1] - self.breakpoints[i]
    }

    /// `∫ H` over one period.
    pub fn mean(&self) -> T {
        chunked_sum(self.pieces.len(), |i| {
            let p = self.pieces[i];
            let l = self.len_of(i);
            p.intercept * l + p.slope * l * l * T::half()
        })
    }

    fn centered_square_integral(&self, c: T) -> T {
        let third = T::one() / T::lit(3.0);
        chunked_sum(self.pieces.len(), |i| {
            let p = self.pieces[i];
            let l = self.len_of(i);
            let h = p.intercept - c;
            h * h * l + h * p.slope * l * l + p.slope * p.slope * l * l * l * third
        })
    }

    /// Lebesgue measure of `{H ≤ c}`.
    fn sublevel_measure(&self, c: T) -> T {
        chunked_sum(self.pieces.len(), |i| {
            let p = self.pieces[i];
            let l = self.len_of(i);
            let u0 = p.intercept;
            let u1 = p.intercept + p.slope * l;
            let (lo, hi) = if u0 <= u1 { (u0, u1) } else { (u1, u0) };
            if c >= hi {
                l
            } else if c < lo {
                T::zero()
            } else {
                l * (c - lo) / (hi - lo)
            }
        })
    }

    fn abs_integral(&self, c: T) -> T {
        chunked_sum(self.pieces.len(), |i| {
            let p = self.pieces[i];
            let l = self.len_of(i);
            let u0 = p.intercept - c;
            let u1 = u0 + p.slope * l;
            if (u0 >= T::zero()) == (u1 >= T::zero()) {
                l * (u0 + u1).abs() * T::half()
            } else {
                l * (u0 * u0 + u1 * u1) / ((u1 - u0).abs() * T::lit(2.0))
            }
        })
    }

    /// A median of `H` under Lebesgue measure on the period.
    pub fn median(&self) -> T {
        let (mut lo, mut hi) =
            self.pieces.iter().enumerate().fold((T::infinity(), T::neg_infinity()), |(lo, hi), (i, p)| {
                let u1 = p.intercept + p.slope * self.len_of(i);
                (lo.min(p.intercept).min(u1), hi.max(p.intercept).max(u1))
            });
        let total = self.breakpoints[self.breakpoints.len() - 1] - self.breakpoints[0];
        let target = total * T::half();
        for _ in 0..200 {
            let mid = lo + (hi - lo) * T::half();
            if mid <= lo || mid >= hi {
                break;
            }
            if self.sublevel_measure(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }
}

fn check_basepoint<T: Real>(a: T) -> Result<()> {
    if !(a >= T::zero() && a < T::one()) {
        return Err(invalid("basepoint must lie in [0, 1)"));
    }
    Ok(())
}

fn check_masses<T: Real>(first: T, second: T) -> Result<()> {
    if (first - second).abs() > T::lit(MASS_TOLERANCE) {
        return Err(Error::UnequalMass { first: first.to_f64_lossy(), second: second.to_f64_lossy() });
    }
    Ok(())
}

/// Atoms rotated to start at `a`, with positions shifted into `[a, a + 1)`.
fn rotated<T: Real>(atoms: &[(T, T)], a: T) -> impl Iterator<Item = (T, T)> + '_ {
    let start = atoms.partition_point(|&(p, _)| p < a);
    atoms[start..].iter().copied().chain(atoms[..start].iter().map(|&(p, w)| (p + T::one(), w)))
}

fn build<T: Real>(a: T, density: Option<&MeshDensity<T>>, sources: &[Source<'_, T>]) -> SignedCdfDiff<T> {
    let end = a + T::one();
    // Every event is (position, jump, new slope if a mesh cell starts here).
    let mut events: Vec<(T, T, Option<T>)> = Vec::new();
    for s in sources {
        events.extend(rotated(s.atoms, a).map(|(p, w)| (p, s.sign * w, None)));
    }
    let mut slope = T::zero();
    if let Some(d) = density {
        let m = d.mesh_size();
        let mt = T::from_usize_exact(m);
        let cell = |x: T| ((x * mt).floor().to_usize().unwrap_or(0)).min(m - 1);
        slope = d.values()[cell(a)];
        let first = (0..m).position(|j| T::from_usize_exact(j) / mt >= a).unwrap_or(m);
        for j in (first..m).chain(0..first) {
            let mut x = T::from_usize_exact(j) / mt;
            if j < first {
                x += T::one();
            }
            events.push((x, T::zero(), Some(d.values()[j])));
        }
    }
    events.par_sort_by(|x, y| x.0.partial_cmp(&y.0).expect("finite positions"));

    let mut breakpoints = Vec::with_capacity(events.len() + 2);
    let mut pieces = Vec::with_capacity(events.len() + 1);
    let mut h = Compensated::new();
    let mut pos = a;
    let mut i = 0;
    while i < events.len() {
        let p = events[i].0;
        if p > pos {
            breakpoints.push(pos);
            pieces.push(Piece { slope, intercept: h.value() });
            h.add(slope * (p - pos));
            pos = p;
        }
        while i < events.len() && events[i].0 == p {
            h.add(events[i].1);
            if let Some(s) = events[i].2 {
                slope = s;
            }
            i += 1;
        }
    }
    breakpoints.push(pos);
    pieces.push(Piece { slope, intercept: h.value() });
    breakpoints.push(end);
    SignedCdfDiff { basepoint: a, breakpoints, pieces }
}

/// `H_a = F_a − G_a` for an absolutely continuous part `density` and an atomic part.
pub fn cdf_difference<T: Real>(
    density: &MeshDensity<T>,
    atomic: &AtomicMeasure<T>,
    basepoint: T,
) -> Result<SignedCdfDiff<T>> {
    check_basepoint(basepoint)?;
    atomic.check_on_circle()?;
    check_masses(density.mass(), atomic.total_mass())?;
    Ok(build(basepoint, Some(density), &[Source { atoms: atomic.atoms(), sign: -T::one() }]))
}

/// `(∫ (H − ∫H)²)^{1/2}`, integrated exactly piece by piece.
pub fn cramer_distance<T: Real>(h: &SignedCdfDiff<T>) -> T {
    h.centered_square_integral(h.mean()).max(T::zero()).sqrt()
}

/// `min_c ∫ |H − c|`, attained at the median of `H`.
pub fn wasserstein_1<T: Real>(h: &SignedCdfDiff<T>) -> T {
    h.abs_integral(h.median())
}

/// Largest difference between Cramér distances computed from `samples`
/// equally spaced basepoints.
pub fn translation_invariance_check<T: Real>(
    density: &MeshDensity<T>,
    atomic: &AtomicMeasure<T>,
    samples: usize,
) -> Result<T> {
    if samples < 2 {
        return Err(invalid("need at least two basepoints"));
    }
    let values = (0..samples)
        .map(|s| {
            let a = T::from_usize_exact(s) / T::from_usize_exact(samples);
            cdf_difference(density, atomic, a).map(|h| cramer_distance(&h))
        })
        .collect::<Result<Vec<T>>>()?;
    Ok(spread(&values))
}

/// Same as [`translation_invariance_check`] for two atomic measures.
pub fn translation_invariance_check_atomic<T: Real>(
    first: &AtomicMeasure<T>,
    second: &AtomicMeasure<T>,
    samples: usize,
) -> Result<T> {
    if samples < 2 {
        return Err(invalid("need at least two basepoints"));
    }
    let values = (0..samples)
        .map(|s| {
            let a = T::from_usize_exact(s) / T::from_usize_exact(samples);
            SignedCdfDiff::from_atomic_pair(first, second, a).map(|h| cramer_distance(&h))
        })
        .collect::<Result<Vec<T>>>()?;
    Ok(spread(&values))
}

fn spread<T: Real>(values: &[T]) -> T {
    let lo = values.iter().copied().fold(T::infinity(), T::min);
    let hi = values.iter().copied().fold(T::neg_infinity(), T::max);
    hi - lo
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merging_and_dropping() {
        let m = AtomicMeasure::from_atoms([(0.5, 0.25), (0.1, 0.5), (0.5, 0.25), (0.3, 0.0)]).unwrap();
        assert_eq!(m.atoms(), &[(0.1, 0.5), (0.5, 0.5)]);
        assert_eq!(m.total_mass(), 1.0);
    }

    #[test]
    fn negative_weight_rejected() {
        assert!(AtomicMeasure::from_atoms([(0.5, -1.0)]).is_err());
    }

    #[test]
    fn dirac_against_lebesgue() {
        let leb = MeshDensity::constant(16, 1.0_f64).unwrap();
        let dirac = AtomicMeasure::dirac(0.0).unwrap();
        let h = cdf_difference(&leb, &dirac, 0.0).unwrap();
        assert_eq!(h.eval(0.0), 0.0);
        for x in [0.1, 0.5, 0.75, 0.999] {
            assert!((h.eval(x) - (x - 1.0)).abs() < 1e-15);
        }
        assert!((cramer_distance(&h) - 1.0 / 12f64.sqrt()).abs() < 1e-15);
        assert!((wasserstein_1(&h) - 0.25).abs() < 1e-12);
    }

    #[test]
    fn identical_measures_are_at_distance_zero() {
        let m = AtomicMeasure::from_atoms([(0.2, 0.3), (0.7, 0.7)]).unwrap();
        let h = SignedCdfDiff::from_atomic_pair(&m, &m, 0.4).unwrap();
        assert_eq!(cramer_distance(&h), 0.0);
        assert_eq!(wasserstein_1(&h), 0.0);
    }

    #[test]
    fn mass_mismatch_is_an_error() {
        let leb = MeshDensity::constant(8, 1.0).unwrap();
        let half = AtomicMeasure::from_atoms([(0.5, 0.5)]).unwrap();
        assert!(matches!(cdf_difference(&leb, &half, 0.0), Err(Error::UnequalMass { .. })));
    }

    #[test]
    fn interpolation_is_periodic() {
        let d = MeshDensity::new(vec![1.0, 3.0]).unwrap();
        assert_eq!(d.interpolate(0.25), 1.0);
        assert_eq!(d.interpolate(0.75), 3.0);
        assert_eq!(d.interpolate(0.5), 2.0);
        assert_eq!(d.interpolate(0.0), 2.0);
        assert_eq!(d.interpolate(1.0), 2.0);
    }

    #[test]
    fn csv_round_trip() {
        let m = AtomicMeasure::from_atoms([(0.125, 0.25), (0.6, 0.75)]).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        assert_eq!(AtomicMeasure::<f64>::read_csv(&buf[..]).unwrap(), m);

        let d = MeshDensity::new(vec![0.5, 1.5, 1.0]).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        assert_eq!(MeshDensity::<f64>::read_csv(&buf[..]).unwrap(), d);
    }

    #[test]
    fn single_precision_sawtooth() {
        let leb = MeshDensity::<f32>::constant(64, 1.0).unwrap();
        let grid = AtomicMeasure::<f32>::uniform_grid(100).unwrap();
        let d = cramer_distance(&cdf_difference(&leb, &grid, 0.0).unwrap());
        assert!((d * 100.0 * 12f32.sqrt() - 1.0).abs() < 1e-3);
    }
}
