//! Complete d-ary trees decorated with multipliers: the branching version of
//! a homothety chain.
//!
//! Indices at depth `l` are stored flat in lexicographic order, so the parent
//! of flat index `j` is `j / d`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linear_chain::{self, HomothetyChain};
use crate::sum::{chunked_range_sum, chunked_sum, compensated_sum, Compensated, CHUNK};
use crate::Real;

const MAX_LEAVES: usize = 1 << 22;

/// A path `(i_1, …, i_m)` from the root, entries in `1..=d`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TreeIndex(pub Vec<u32>);

impl TreeIndex {
    pub fn new(path: Vec<u32>, d: usize) -> Result<Self> {
        if path.is_empty() {
            return Err(invalid("tree index must have length ≥ 1"));
        }
        if path.iter().any(|&i| i == 0 || i as usize > d) {
            return Err(invalid(format!("tree index entries must lie in 1..={d}")));
        }
        Ok(Self(path))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `℘(i)`; `None` stands for the root.
    pub fn parent(&self) -> Option<TreeIndex> {
        (self.0.len() > 1).then(|| TreeIndex(self.0[..self.0.len() - 1].to_vec()))
    }

    fn flat(&self, d: usize) -> usize {
        self.0.iter().fold(0, |acc, &i| acc * d + (i as usize - 1))
    }

    fn from_flat(mut j: usize, depth: usize, d: usize) -> Self {
        let mut path = vec![0u32; depth];
        for slot in path.iter_mut().rev() {
            *slot = (j % d) as u32 + 1;
            j /= d;
        }
        TreeIndex(path)
    }
}

impl std::fmt::Display for TreeIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|i| i.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// `k₀(i, i′)`: the smallest `m` with `℘^m(i) = ℘^m(i′)`.
pub fn merge_depth(i: &TreeIndex, j: &TreeIndex) -> Result<usize> {
    if i.len() != j.len() {
        return Err(Error::LengthMismatch(i.len(), j.len()));
    }
    let common = i.0.iter().zip(&j.0).take_while(|(a, b)| a == b).count();
    Ok(i.len() - common)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecoratedTree<T> {
    d: usize,
    k: usize,
    lambdas: Vec<Vec<T>>,
    tildes: Vec<Vec<T>>,
    tilde_tot: T,
}

impl<T: Real> DecoratedTree<T> {
    /// `levels[l - 1]` holds the `d^l` multipliers of depth `l`.
    pub fn new(d: usize, k: usize, levels: Vec<Vec<T>>) -> Result<Self> {
        check_shape(d, k)?;
        if levels.len() != k {
            return Err(invalid(format!("expected {k} levels of multipliers")));
        }
        let mut width = 1;
        for level in &levels {
            width *= d;
            if level.len() != width {
                return Err(invalid("level sizes must be d, d², …, d^k"));
            }
            if level.iter().any(|&l| !(l.is_finite() && l > T::one())) {
                return Err(invalid("every multiplier must be finite and > 1"));
            }
        }
        let mut tildes: Vec<Vec<T>> = Vec::with_capacity(k);
        for (l, level) in levels.iter().enumerate() {
            let row = level
                .iter()
                .enumerate()
                .map(|(j, &lam)| if l == 0 { lam } else { lam * tildes[l - 1][j / d] })
                .collect();
            tildes.push(row);
        }
        let inv = compensated_sum(tildes[k - 1].iter().map(|&t| T::one() / t));
        Ok(Self { d, k, lambdas: levels, tildes, tilde_tot: T::one() / inv })
    }

    pub fn from_fn(d: usize, k: usize, mut f: impl FnMut(&TreeIndex) -> T) -> Result<Self> {
        check_shape(d, k)?;
        let levels =
            (1..=k).map(|l| (0..d.pow(l as u32)).map(|j| f(&TreeIndex::from_flat(j, l, d))).collect()).collect();
        Self::new(d, k, levels)
    }

    pub fn uniform(d: usize, k: usize, lambda: T) -> Result<Self> {
        Self::from_fn(d, k, |_| lambda)
    }

    /// `λ_i = base + U(0, jitter)`, drawn level by level in index order.
    pub fn perturbed(d: usize, k: usize, base: f64, jitter: f64, seed: u64) -> Result<Self> {
        if !(jitter >= 0.0) {
            return Err(invalid("jitter must be nonnegative"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::from_fn(d, k, |_| T::lit(base + jitter * rng.gen::<f64>()))
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn leaf_count(&self) -> usize {
        self.d.pow(self.k as u32)
    }

    /// `Card I_k`, the number of non-root vertices.
    pub fn index_count(&self) -> usize {
        (1..=self.k).map(|l| self.d.pow(l as u32)).sum()
    }

    pub fn leaves(&self) -> impl Iterator<Item = TreeIndex> + '_ {
        (0..self.leaf_count()).map(|j| TreeIndex::from_flat(j, self.k, self.d))
    }

    fn locate(&self, i: &TreeIndex) -> Result<(usize, usize)> {
        if i.is_empty() || i.len() > self.k || i.0.iter().any(|&e| e == 0 || e as usize > self.d) {
            return Err(invalid(format!("{i} is not an index of this tree")));
        }
        Ok((i.len() - 1, i.flat(self.d)))
    }

    pub fn lambda(&self, i: &TreeIndex) -> Result<T> {
        let (l, j) = self.locate(i)?;
        Ok(self.lambdas[l][j])
    }

    /// `λ̃_i = λ_i λ_{℘(i)} ⋯`; the root has `λ̃ = 1`.
    pub fn tilde(&self, i: &TreeIndex) -> Result<T> {
        let (l, j) = self.locate(i)?;
        Ok(self.tildes[l][j])
    }

    /// `λ̃` of the ancestor `℘^m` of the leaf with flat index `leaf`.
    fn ancestor_tilde(&self, leaf: usize, m: usize) -> T {
        if m >= self.k {
            T::one()
        } else {
            self.tildes[self.k - 1 - m][leaf / self.d.pow(m as u32)]
        }
    }

    /// `λ̃_tot`, with `λ̃_tot⁻¹ = Σ_leaves λ̃_i⁻¹`.
    pub fn tilde_tot(&self) -> T {
        self.tilde_tot
    }

    /// The chain followed from a leaf up to the root: `λ_i, λ_{℘(i)}, …`.
    pub fn leaf_chain(&self, leaf: &TreeIndex) -> Result<HomothetyChain<T>> {
        let (l, j) = self.locate(leaf)?;
        if l + 1 != self.k {
            return Err(invalid(format!("{leaf} is not a leaf")));
        }
        Ok(self.leaf_chain_flat(j))
    }

    fn leaf_chain_flat(&self, leaf: usize) -> HomothetyChain<T> {
        let lambdas = (0..self.k).map(|m| self.lambdas[self.k - 1 - m][leaf / self.d.pow(m as u32)]).collect();
        HomothetyChain::new(lambdas).expect("tree multipliers are valid")
    }

    fn leaf_flat(&self, leaf: &TreeIndex) -> Result<usize> {
        let (l, j) = self.locate(leaf)?;
        if l + 1 != self.k {
            return Err(invalid(format!("{leaf} is not a leaf")));
        }
        Ok(j)
    }

    fn check_r(&self, r: u64) -> Result<()> {
        let biggest = self.tildes[self.k - 1].iter().copied().fold(T::zero(), T::max);
        if T::from_u64(r).unwrap_or(T::zero()) < biggest {
            return Err(invalid("R must be at least max λ̃_i"));
        }
        Ok(())
    }
}

fn check_shape(d: usize, k: usize) -> Result<()> {
    if d < 2 {
        return Err(invalid("tree arity d must be at least 2"));
    }
    if k < 1 {
        return Err(invalid("tree depth k must be at least 1"));
    }
    match d.checked_pow(k as u32) {
        Some(n) if n <= MAX_LEAVES => Ok(()),
        _ => Err(invalid(format!("d^k exceeds {MAX_LEAVES} leaves"))),
    }
}

/// `1/(12 λ̃_tot²) + (1/12) Σ_{i,i′} Σ_{m=k₀}^{k−1} λ̃_{℘^m(i)} λ̃_{℘^m(i′)} / (λ̃_i λ̃_{i′})`,
/// over ordered pairs of leaves including `i = i′`.
pub fn tree_closed_form<T: Real>(tree: &DecoratedTree<T>) -> T {
    // Pairs with k₀ ≤ m are exactly the pairs sharing the ancestor at depth k − m.
    let leaves = &tree.tildes[tree.k - 1];
    let mut acc = Compensated::new();
    for m in 0..tree.k {
        let group = tree.d.pow(m as u32);
        let level = &tree.tildes[tree.k - 1 - m];
        for (a, &ta) in level.iter().enumerate() {
            let s = compensated_sum(leaves[a * group..(a + 1) * group].iter().map(|&t| T::one() / t));
            acc.add(ta * ta * s * s);
        }
    }
    let tt = tree.tilde_tot;
    T::one() / (T::lit(12.0) * tt * tt) + acc.value() / T::lit(12.0)
}

/// Sum over leaves of the single-chain closed forms, i.e. the value the tree
/// would have if distinct branches were uncorrelated.
pub fn no_correlation_value<T: Real>(tree: &DecoratedTree<T>) -> T {
    compensated_sum((0..tree.leaf_count()).map(|j| linear_chain::closed_form_cramer(&tree.leaf_chain_flat(j))))
}

/// `E[cδ_i(y + 1/2) cδ_{i′}(y + 1/2)]` for distinct leaves.
pub fn correlation_expectation<T: Real>(tree: &DecoratedTree<T>, i: &TreeIndex, j: &TreeIndex) -> Result<T> {
    let k0 = merge_depth(i, j)?;
    if k0 == 0 {
        return Err(invalid("correlation of a leaf with itself; use the single-chain variance"));
    }
    let (a, b) = (tree.leaf_flat(i)?, tree.leaf_flat(j)?);
    let s = compensated_sum((k0..tree.k).map(|m| {
        let t = tree.ancestor_tilde(a, m);
        t * t
    }));
    Ok(s / (T::lit(12.0) * tree.tildes[tree.k - 1][a] * tree.tildes[tree.k - 1][b]))
}

/// `(1/R) ∫_0^R (Σ_i cδ_i)²`, from the values at half-integers plus the exact
/// contribution of the common slope `1/λ̃_tot`.
pub fn tree_empirical<T: Real>(tree: &DecoratedTree<T>, r: u64) -> Result<T> {
    tree.check_r(r)?;
    let chains: Vec<HomothetyChain<T>> = (0..tree.leaf_count()).map(|j| tree.leaf_chain_flat(j)).collect();
    for c in &chains {
        linear_chain::check_r(c, r)?;
    }
    let n = r as usize;
    let mut total = vec![T::zero(); n];
    for c in &chains {
        total.par_chunks_mut(CHUNK).enumerate().for_each(|(ci, out)| {
            linear_chain::walk_half_integers(c, ci * CHUNK, out.len(), |y, v| {
                out[y - ci * CHUNK] += v;
            });
        });
    }
    let rt = T::from_u64(r).expect("R fits the scalar type");
    let tt = tree.tilde_tot;
    Ok(chunked_sum(n, |y| total[y] * total[y]) / rt + T::one() / (T::lit(12.0) * tt * tt))
}

/// `(1/R) Σ_{y<R} cδ_i(y + 1/2) cδ_{i′}(y + 1/2)`.
pub fn correlation_empirical<T: Real>(tree: &DecoratedTree<T>, i: &TreeIndex, j: &TreeIndex, r: u64) -> Result<T> {
    tree.check_r(r)?;
    let a = tree.leaf_chain_flat(tree.leaf_flat(i)?);
    let b = tree.leaf_chain_flat(tree.leaf_flat(j)?);
    linear_chain::check_r(&a, r)?;
    linear_chain::check_r(&b, r)?;
    let s = chunked_range_sum(r as usize, |range| {
        let mut va = Vec::with_capacity(range.len());
        linear_chain::walk_half_integers(&a, range.start, range.len(), |_, v| va.push(v));
        let mut acc = Compensated::new();
        let mut idx = 0;
        linear_chain::walk_half_integers(&b, range.start, range.len(), |_, v| {
            acc.add(va[idx] * v);
            idx += 1;
        });
        acc.value()
    });
    Ok(s / T::from_u64(r).expect("R fits the scalar type"))
}

/// Smallest ℚ-freeness screen residual over the leaf-to-root chains.
pub fn tree_resonance<T: Real>(tree: &DecoratedTree<T>) -> Result<T> {
    (0..tree.leaf_count())
        .map(|j| linear_chain::screen_chain(&tree.leaf_chain_flat(j)))
        .try_fold(T::infinity(), |acc, r| r.map(|r| acc.min(r)))
}

/// How multipliers are assigned in a [`TreeSpec`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum MultiplierSpec {
    Uniform {
        lambda: f64,
    },
    Perturbed {
        base: f64,
        jitter: f64,
        seed: u64,
    },
    /// Keys are comma-separated paths such as `"1"` or `"2,1"`.
    Explicit {
        values: BTreeMap<String, f64>,
    },
}

/// Structured-text description of a decorated tree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeSpec {
    pub d: usize,
    pub k: usize,
    pub multipliers: MultiplierSpec,
}

impl TreeSpec {
    pub fn build<T: Real>(&self) -> Result<DecoratedTree<T>> {
        match &self.multipliers {
            MultiplierSpec::Uniform { lambda } => DecoratedTree::uniform(self.d, self.k, T::lit(*lambda)),
            MultiplierSpec::Perturbed { base, jitter, seed } => {
                DecoratedTree::perturbed(self.d, self.k, *base, *jitter, *seed)
            }
            MultiplierSpec::Explicit { values } => {
                let mut parsed = BTreeMap::new();
                for (key, &v) in values {
                    let path = key
                        .split(',')
                        .map(|s| s.trim().parse::<u32>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|e| invalid(format!("bad tree index {key:?}: {e}")))?;
                    parsed.insert(TreeIndex::new(path, self.d)?, v);
                }
                check_shape(self.d, self.k)?;
                let mut missing = None;
                let tree = DecoratedTree::from_fn(self.d, self.k, |i| match parsed.get(i) {
                    Some(&v) => T::lit(v),
                    None => {
                        missing.get_or_insert_with(|| i.clone());
                        T::lit(2.0)
                    }
                });
                if let Some(i) = missing {
                    return Err(invalid(format!("no multiplier given for index {i}")));
                }
                if parsed.len() != tree.as_ref().map(|t| t.index_count()).unwrap_or(0) {
                    return Err(invalid("explicit multipliers name indices outside the tree"));
                }
                tree
            }
        }
    }
}
