//! Both sides of the asymptotic Cramér-distance formula for circle maps, and
//! convergence studies in the grid order `N`.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circle_dynamics::{build_preimage_tree, ExpandingMap, GridMap, GridSpec, TransferOperator, RESONANCE_KS};
use crate::error::{invalid, Error, Result};
use crate::measures::{cdf_difference, cramer_distance, MeshDensity};
use crate::sum::{chunked_sum, compensated_sum};
use crate::Real;

/// Smallest grid order accepted by [`lhs_empirical`].
pub const MIN_GRID: usize = 1000;
/// Default number of midpoints for the preimage-tree quadrature.
pub const DEFAULT_QUADRATURE: usize = 1 << 12;
pub const MIN_QUADRATURE: usize = 1 << 10;
/// Largest `K` for [`exponential_growth_check`].
pub const MAX_GROWTH_K: usize = 8;

fn twelfth<T: Real>() -> T {
    T::one() / T::lit(12.0)
}

/// A right-hand side value together with its pieces.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RhsValue<T> {
    /// `Σ_m ⟨Df^{k−m}, (L^m 1)²⟩` over `m < k`.
    pub integral: T,
    /// `∫ (L^k 1)²`.
    pub density_term: T,
}

impl<T: Real> RhsValue<T> {
    /// `1/12 + integral/12`.
    pub fn value(&self) -> T {
        twelfth::<T>() + self.integral * twelfth::<T>()
    }

    /// `(density_term + integral)/12`, the limit the empirical side tracks
    /// when `L^k 1` is not constant.
    pub fn value_with_density_term(&self) -> T {
        (self.density_term + self.integral) * twelfth::<T>()
    }

    /// Limit of `N·d_C`.
    pub fn distance(&self) -> T {
        self.value().sqrt()
    }
}

/// One evaluation of the empirical side.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LhsSample<T> {
    /// `N²·d_C²`.
    pub value: T,
    pub atoms: usize,
    pub near_ties: usize,
    /// Largest per-step KS distance of the rounding errors.
    pub roundoff_ks: T,
    pub resonant: bool,
}

/// A map with its transfer operator and the densities `L^m 1` for `m ≤ k_max`.
pub struct TheoremContext<T> {
    map: ExpandingMap<T>,
    op: TransferOperator<T>,
    powers: Vec<MeshDensity<T>>,
}

impl<T: Real> TheoremContext<T> {
    pub fn new(f: &ExpandingMap<T>, k_max: usize, mesh: usize) -> Result<Self> {
        let op = TransferOperator::new(f, mesh)?;
        let powers = op.powers_one(k_max);
        Ok(Self { map: f.clone(), op, powers })
    }

    pub fn map(&self) -> &ExpandingMap<T> {
        &self.map
    }

    pub fn operator(&self) -> &TransferOperator<T> {
        &self.op
    }

    pub fn mesh_size(&self) -> usize {
        self.op.mesh_size()
    }

    pub fn k_max(&self) -> usize {
        self.powers.len() - 1
    }

    /// `L^m 1` on the mesh.
    pub fn power_one(&self, m: usize) -> Result<&MeshDensity<T>> {
        self.powers.get(m).ok_or_else(|| invalid(format!("context holds powers up to {}", self.k_max())))
    }

    pub fn lhs(&self, k: usize, n: usize) -> Result<LhsSample<T>> {
        if n < MIN_GRID {
            return Err(invalid(format!("grid order must be at least {MIN_GRID}")));
        }
        let density = self.power_one(k)?.normalized()?;
        let grid = GridMap::new(&self.map, GridSpec::new(n)?)?;
        let atomic = grid.counts_to_measure(&grid.pushforward_counts(k));
        let h = cdf_difference(&density, &atomic, T::zero())?;
        let d = cramer_distance(&h);
        let nt = T::from_usize_exact(n);
        let roundoff_ks = grid.step_error_ks(k.max(1)).into_iter().fold(T::zero(), T::max);
        Ok(LhsSample {
            value: nt * nt * d * d,
            atoms: atomic.len(),
            near_ties: grid.near_ties(),
            roundoff_ks,
            resonant: roundoff_ks.to_f64_lossy() > RESONANCE_KS,
        })
    }

    pub fn rhs_transfer(&self, k: usize) -> Result<RhsValue<T>> {
        let top = self.power_one(k)?;
        let m_size = self.mesh_size();
        let mt = T::from_usize_exact(m_size);
        let mut integral = T::zero();
        for m in 0..k {
            let p = self.powers[m].values();
            integral += chunked_sum(m_size, |i| {
                let w = (T::from_usize_exact(i) + T::half()) / mt;
                let (_, slope) = self.map.iterate(w, k - m);
                slope * p[i] * p[i]
            }) / mt;
        }
        let density_term = chunked_sum(m_size, |i| top.values()[i] * top.values()[i]) / mt;
        Ok(RhsValue { integral, density_term })
    }
}

/// `N²·d_C((f_N^k)_* Leb_N, f^k_* Leb)²`, with the density of `f^k_* Leb`
/// given by `L^k 1` on a mesh of `mesh` cells.
pub fn lhs_empirical<T: Real>(f: &ExpandingMap<T>, k: usize, n: usize, mesh: usize) -> Result<LhsSample<T>> {
    TheoremContext::new(f, k, mesh)?.lhs(k, n)
}

/// `1/12 + (1/12) Σ_{m<k} ⟨Df^{k−m}, (L^m 1)²⟩` by midpoint quadrature on the mesh.
pub fn rhs_transfer_formula<T: Real>(f: &ExpandingMap<T>, k: usize, mesh: usize) -> Result<RhsValue<T>> {
    TheoremContext::new(f, k, mesh)?.rhs_transfer(k)
}

fn check_quadrature(q: usize) -> Result<()> {
    if q < MIN_QUADRATURE {
        return Err(invalid(format!("quadrature needs at least {MIN_QUADRATURE} points")));
    }
    Ok(())
}

/// Per-node quantities `(integrand, density integrand)` of the tree formula at `y`.
fn tree_integrand<T: Real>(f: &ExpandingMap<T>, y: T, k: usize) -> Result<(T, T)> {
    if k == 0 {
        return Ok((T::zero(), T::one()));
    }
    let tree = build_preimage_tree(f, y, k)?;
    let d = tree.degree;
    let inv: Vec<T> = tree.leaves().iter().map(|n| T::one() / n.path_product).collect();
    let mut terms = Vec::with_capacity(tree.leaves().len() * 2);
    // Leaf pairs with merge depth at most m share their ancestor at depth k − m.
    for m in 0..k {
        let depth = k - m;
        let group = d.pow(m as u32);
        for a in 0..inv.len() / group {
            let pa = tree.path_product(depth, a);
            let s = compensated_sum(inv[a * group..(a + 1) * group].iter().copied());
            terms.push(pa * pa * s * s);
        }
    }
    let total = compensated_sum(inv.iter().copied());
    Ok((compensated_sum(terms), total * total))
}

/// `1/12 + (1/12) ∫ Σ_{x,x′ ∈ f^{−k}(y)} Σ_{m=k₀(x,x′)}^{k−1} 1/(Df^m(x) Df^m(x′)) dy`,
/// with `k₀` read off the ancestry of the preimage tree.
pub fn rhs_tree_integral<T: Real>(f: &ExpandingMap<T>, k: usize, q: usize) -> Result<RhsValue<T>> {
    check_quadrature(q)?;
    let qt = T::from_usize_exact(q);
    let nodes: Vec<(T, T)> = (0..q)
        .into_par_iter()
        .map(|i| tree_integrand(f, (T::from_usize_exact(i) + T::half()) / qt, k))
        .collect::<Result<_>>()?;
    Ok(RhsValue {
        integral: compensated_sum(nodes.iter().map(|p| p.0)) / qt,
        density_term: compensated_sum(nodes.iter().map(|p| p.1)) / qt,
    })
}

fn check_diagonal(k: usize, m: usize) -> Result<()> {
    if m >= k {
        return Err(invalid("diagonal term needs 0 ≤ m ≤ k − 1"));
    }
    Ok(())
}

/// `∫ Df^k(x)/Df^m(x)² dx` by midpoint quadrature.
pub fn diagonal_term<T: Real>(f: &ExpandingMap<T>, k: usize, m: usize, q: usize) -> Result<T> {
    check_diagonal(k, m)?;
    check_quadrature(q)?;
    let qt = T::from_usize_exact(q);
    Ok(chunked_sum(q, |i| {
        let x = (T::from_usize_exact(i) + T::half()) / qt;
        let (y, dm) = f.iterate(x, m);
        let (_, rest) = f.iterate(y, k - m);
        rest / dm
    }) / qt)
}

/// The `x = x′` part of the level-`m` tree sum, `∫ Σ_{x ∈ f^{−k}(y)} Df^m(x)^{−2} dy`.
pub fn diagonal_tree_sum<T: Real>(f: &ExpandingMap<T>, k: usize, m: usize, q: usize) -> Result<T> {
    check_diagonal(k, m)?;
    check_quadrature(q)?;
    let qt = T::from_usize_exact(q);
    let d = f.degree() as usize;
    let group = d.pow(m as u32);
    let values: Vec<T> = (0..q)
        .into_par_iter()
        .map(|i| {
            let tree = build_preimage_tree(f, (T::from_usize_exact(i) + T::half()) / qt, k)?;
            Ok(compensated_sum(tree.leaves().iter().enumerate().map(|(j, leaf)| {
                let r = tree.path_product(k - m, j / group) / leaf.path_product;
                r * r
            })))
        })
        .collect::<Result<_>>()?;
    Ok(compensated_sum(values) / qt)
}

/// One cell of a convergence study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub k: usize,
    pub lhs: f64,
    pub rhs_transfer: f64,
    pub rhs_tree: f64,
    pub rel_err: f64,
    pub runtime_ms: f64,
    pub resonant: bool,
}

/// A cell that could not be computed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    #[serde(rename = "N")]
    pub n: usize,
    pub k: usize,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConvergenceStudy {
    pub rows: Vec<ConvergenceRow>,
    pub failures: Vec<CellFailure>,
}

impl ConvergenceStudy {
    /// Rows for one `k`, in the order of the `N` list.
    pub fn column(&self, k: usize) -> Vec<&ConvergenceRow> {
        self.rows.iter().filter(|r| r.k == k).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyOptions {
    pub mesh: usize,
    pub quadrature: usize,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self { mesh: crate::circle_dynamics::DEFAULT_MESH, quadrature: DEFAULT_QUADRATURE }
    }
}

/// One row per `(k, N)`, ordered by `k` then by position in `ns`.
pub fn convergence_study<T: Real>(
    f: &ExpandingMap<T>,
    ks: &[usize],
    ns: &[usize],
    opts: StudyOptions,
) -> Result<ConvergenceStudy> {
    if ks.is_empty() || ns.is_empty() {
        return Err(invalid("k and N lists must be nonempty"));
    }
    let k_max = ks.iter().copied().max().unwrap_or(0);
    let ctx = TheoremContext::new(f, k_max, opts.mesh)?;
    let rhs: Vec<Result<(f64, f64)>> = ks
        .par_iter()
        .map(|&k| {
            let t = ctx.rhs_transfer(k)?.value().to_f64_lossy();
            let r = rhs_tree_integral(f, k, opts.quadrature)?.value().to_f64_lossy();
            Ok((t, r))
        })
        .collect();
    let cells: Vec<(usize, usize, usize)> =
        (0..ks.len()).flat_map(|a| ns.iter().map(move |&n| (a, ks[a], n))).collect();
    let outcomes: Vec<std::result::Result<ConvergenceRow, CellFailure>> = cells
        .par_iter()
        .map(|&(a, k, n)| {
            let fail = |e: Error| CellFailure { n, k, message: e.to_string() };
            let (rhs_transfer, rhs_tree) = match &rhs[a] {
                Ok(v) => *v,
                Err(e) => return Err(CellFailure { n, k, message: e.to_string() }),
            };
            let start = Instant::now();
            let lhs = ctx.lhs(k, n).map_err(fail)?;
            let lhs_value = lhs.value.to_f64_lossy();
            Ok(ConvergenceRow {
                n,
                k,
                lhs: lhs_value,
                rhs_transfer,
                rhs_tree,
                rel_err: (lhs_value - rhs_transfer).abs() / rhs_transfer,
                runtime_ms: start.elapsed().as_secs_f64() * 1e3,
                resonant: lhs.resonant,
            })
        })
        .collect();
    let mut study = ConvergenceStudy::default();
    for o in outcomes {
        match o {
            Ok(r) => study.rows.push(r),
            Err(e) => study.failures.push(e),
        }
    }
    Ok(study)
}

/// Writes rows with header `N,k,lhs,rhs_transfer,rhs_tree,rel_err,runtime_ms,resonant`.
pub fn write_convergence_csv<W: Write>(rows: &[ConvergenceRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    if rows.is_empty() {
        out.write_record(["N", "k", "lhs", "rhs_transfer", "rhs_tree", "rel_err", "runtime_ms", "resonant"])?;
    }
    out.flush()?;
    Ok(())
}

/// `exp` of the least-squares slope of `ln v` against `k`.
pub fn fit_growth_base(points: &[(usize, f64)]) -> Result<f64> {
    if points.len() < 3 {
        return Err(Error::TooFewPoints { needed: 3, got: points.len() });
    }
    if points.iter().any(|p| !(p.1 > 0.0)) {
        return Err(invalid("growth fit needs positive values"));
    }
    let n = points.len() as f64;
    let mk = points.iter().map(|p| p.0 as f64).sum::<f64>() / n;
    let ml = points.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 as f64 - mk).powi(2)).sum();
    if sxx == 0.0 {
        return Err(invalid("growth fit needs distinct k values"));
    }
    let sxy: f64 = points.iter().map(|p| (p.0 as f64 - mk) * (p.1.ln() - ml)).sum();
    Ok((sxy / sxx).exp())
}

/// Which quantity to fit in [`exponential_growth_check`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GrowthSource {
    RhsTransfer { mesh: usize },
    Lhs { n: usize, mesh: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct GrowthCheck {
    pub values: Vec<(usize, f64)>,
    pub base: f64,
    /// `‖f′‖_∞²`.
    pub upper: f64,
    pub in_range: bool,
}

/// Fits the growth base over `k = 1..=K` and checks it lies in `(1, ‖f′‖_∞²]`.
pub fn exponential_growth_check<T: Real>(
    f: &ExpandingMap<T>,
    k_top: usize,
    source: GrowthSource,
) -> Result<GrowthCheck> {
    if k_top > MAX_GROWTH_K {
        return Err(invalid(format!("K must be at most {MAX_GROWTH_K}")));
    }
    if k_top < 3 {
        return Err(Error::TooFewPoints { needed: 3, got: k_top });
    }
    let mesh = match source {
        GrowthSource::RhsTransfer { mesh } | GrowthSource::Lhs { mesh, .. } => mesh,
    };
    let ctx = TheoremContext::new(f, k_top, mesh)?;
    let values = (1..=k_top)
        .map(|k| {
            let v = match source {
                GrowthSource::RhsTransfer { .. } => ctx.rhs_transfer(k)?.value(),
                GrowthSource::Lhs { n, .. } => ctx.lhs(k, n)?.value,
            };
            Ok((k, v.to_f64_lossy()))
        })
        .collect::<Result<Vec<_>>>()?;
    let base = fit_growth_base(&values)?;
    let s = f.sup_derivative().to_f64_lossy();
    let upper = s * s;
    Ok(GrowthCheck { values, base, upper, in_range: base > 1.0 && base <= upper })
}

/// `d_C` between the pushforward after `k` grid steps and the invariant density.
pub fn srb_pushforward_distance<T: Real>(f: &ExpandingMap<T>, n: usize, k: usize, mesh: usize, tol: T) -> Result<T> {
    let h = TransferOperator::new(f, mesh)?.srb(tol)?;
    let grid = GridMap::new(f, GridSpec::new(n)?)?;
    let atomic = grid.counts_to_measure(&grid.pushforward_counts(k));
    Ok(cramer_distance(&cdf_difference(&h, &atomic, T::zero())?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circle_dynamics::MIN_MESH;

    #[test]
    fn doubling_rhs_closed_form() {
        let f = ExpandingMap::<f64>::doubling();
        for k in 0..5 {
            let want = (2f64.powi(k as i32 + 1) - 1.0) / 12.0;
            let t = rhs_transfer_formula(&f, k, MIN_MESH).unwrap();
            assert!((t.value() - want).abs() < 1e-12, "k = {k}");
            let r = rhs_tree_integral(&f, k, MIN_QUADRATURE).unwrap();
            assert!((r.value() - want).abs() < 1e-12, "k = {k}");
        }
    }

    #[test]
    fn sawtooth_at_k_zero() {
        let f = ExpandingMap::<f64>::perturbed(2, 0.02, 3, 11).unwrap();
        let s = lhs_empirical(&f, 0, 1000, MIN_MESH).unwrap();
        assert!((s.value * 12.0 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn small_grid_rejected() {
        let f = ExpandingMap::<f64>::doubling();
        assert!(lhs_empirical(&f, 1, 999, MIN_MESH).is_err());
    }

    #[test]
    fn growth_fit_needs_three_points() {
        let e = fit_growth_base(&[(1, 0.25)]).unwrap_err();
        assert!(e.to_string().contains("need ≥ 3 points"));
        let b = fit_growth_base(&[(1, 2.0), (2, 4.0), (3, 8.0)]).unwrap();
        assert!((b - 2.0).abs() < 1e-12);
    }

    #[test]
    fn diagonal_of_doubling() {
        let f = ExpandingMap::<f64>::doubling();
        let v = diagonal_term(&f, 3, 1, MIN_QUADRATURE).unwrap();
        assert!((v - 2.0).abs() < 1e-12);
        let t = diagonal_tree_sum(&f, 3, 1, MIN_QUADRATURE).unwrap();
        assert!((t - 2.0).abs() < 1e-12);
        assert!(diagonal_term(&f, 2, 2, MIN_QUADRATURE).is_err());
    }
}
