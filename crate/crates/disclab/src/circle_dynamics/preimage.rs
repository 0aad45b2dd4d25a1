use super::{wrap, ExpandingMap};
use crate::error::{Error, Result};
use crate::Real;

/// The `d` solutions of `f(x) = y`, one per monotone branch, sorted.
pub fn branch_inverses<T: Real>(f: &ExpandingMap<T>, y: T) -> Result<Vec<T>> {
    let f0 = f.lift(T::zero());
    let offset = wrap(y - f0);
    let cuts = f.cuts();
    let mut out = Vec::with_capacity(f.degree() as usize);
    for b in 0..f.degree() as usize {
        let target = f0 + T::lit(b as f64) + offset;
        let x = f
            .solve_lift(target, cuts[b], cuts[b + 1])
            .ok_or(Error::BranchInversion { y: y.to_f64_lossy(), branch: b })?;
        out.push(wrap(x));
    }
    out.sort_by(|a, b| a.partial_cmp(b).expect("finite preimages"));
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PreimageNode<T> {
    pub x: T,
    /// `f′(x)`.
    pub derivative: T,
    /// `Df^l(x)` for a node at depth `l`.
    pub path_product: T,
}

/// Iterated preimages of a point, level by level. The children of node `j` at
/// depth `l` are nodes `d·j..d·j + d` at depth `l + 1`.
#[derive(Clone, Debug)]
pub struct PreimageTree<T> {
    pub root: T,
    pub degree: usize,
    levels: Vec<Vec<PreimageNode<T>>>,
}

impl<T: Real> PreimageTree<T> {
    pub fn depth(&self) -> usize {
        self.levels.len()
    }

    /// Nodes at depth `l` in `1..=k`.
    pub fn level(&self, l: usize) -> &[PreimageNode<T>] {
        &self.levels[l - 1]
    }

    pub fn leaves(&self) -> &[PreimageNode<T>] {
        self.levels.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// `Df^{depth}` of the node `j` at depth `depth`; the root has `1`.
    pub fn path_product(&self, depth: usize, j: usize) -> T {
        if depth == 0 {
            T::one()
        } else {
            self.levels[depth - 1][j].path_product
        }
    }

    /// `Σ_leaves 1/Df^k(leaf)`, which equals `(L_f^k 1)(root)`.
    pub fn inverse_product_sum(&self) -> T {
        if self.levels.is_empty() {
            return T::one();
        }
        crate::sum::compensated_sum(self.leaves().iter().map(|n| T::one() / n.path_product))
    }
}

pub fn build_preimage_tree<T: Real>(f: &ExpandingMap<T>, y: T, k: usize) -> Result<PreimageTree<T>> {
    let d = f.degree() as usize;
    let mut levels: Vec<Vec<PreimageNode<T>>> = Vec::with_capacity(k);
    let mut parents = vec![(wrap(y), T::one())];
    for _ in 0..k {
        let mut level = Vec::with_capacity(parents.len() * d);
        for &(p, product) in &parents {
            for x in branch_inverses(f, p)? {
                let derivative = f.derivative(x);
                level.push(PreimageNode { x, derivative, path_product: derivative * product });
            }
        }
        parents = level.iter().map(|n| (n.x, n.path_product)).collect();
        levels.push(level);
    }
    Ok(PreimageTree { root: wrap(y), degree: d, levels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circle_dynamics::circle_distance;

    #[test]
    fn doubling_preimages() {
        let f = ExpandingMap::<f64>::doubling();
        assert_eq!(branch_inverses(&f, 0.5).unwrap(), vec![0.25, 0.75]);
        assert_eq!(branch_inverses(&f, 0.0).unwrap(), vec![0.0, 0.5]);
    }

    #[test]
    fn doubling_tree() {
        let f = ExpandingMap::<f64>::doubling();
        let t = build_preimage_tree(&f, 0.0, 2).unwrap();
        let mut xs: Vec<f64> = t.leaves().iter().map(|n| n.x).collect();
        xs.sort_by(f64::total_cmp);
        assert_eq!(xs, vec![0.0, 0.25, 0.5, 0.75]);
        assert!(t.leaves().iter().all(|n| n.path_product == 4.0));
    }

    #[test]
    fn children_map_to_parents() {
        let f = ExpandingMap::<f64>::perturbed(3, 0.05, 4, 2).unwrap();
        let t = build_preimage_tree(&f, 0.3, 3).unwrap();
        assert_eq!(t.leaves().len(), 27);
        for l in 1..=3 {
            for (j, n) in t.level(l).iter().enumerate() {
                let parent = if l == 1 { t.root } else { t.level(l - 1)[j / 3].x };
                assert!(circle_distance(f.eval(n.x), parent) < 1e-10);
                assert!(n.path_product > 1.0);
            }
        }
    }
}
