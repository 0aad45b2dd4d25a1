use std::collections::BTreeMap;

use anyhow::{bail, Result};
use clap::Args;
use disclab::tree_chain::{
    correlation_empirical, correlation_expectation, tree_closed_form, tree_empirical, tree_resonance, MultiplierSpec,
    TreeIndex, TreeSpec,
};
use disclab::DecoratedTree;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{overlay, parse_count, Common};
use crate::output::{csv_body, Check, Emitter, Status};

/// Per-pair correlations are only simulated up to this many leaves.
const MAX_PAIR_LEAVES: usize = 32;
const RESONANCE_THRESHOLD: f64 = 1e-3;

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct TreeArgs {
    /// Branching factor.
    #[arg(long)]
    pub d: Option<usize>,
    /// Depth.
    #[arg(long)]
    pub k: Option<usize>,
    /// Same multiplier at every node.
    #[arg(long, value_name = "LAMBDA", conflicts_with = "perturb")]
    pub uniform: Option<f64>,
    /// Multipliers `BASE + U(0, JITTER)` drawn from the seed.
    #[arg(long, num_args = 2, value_names = ["BASE", "JITTER"])]
    pub perturb: Option<Vec<f64>>,
    /// Explicit multipliers keyed by path, e.g. `"2,1" = 1.7` (config file only).
    #[arg(skip)]
    pub values: Option<BTreeMap<String, f64>>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Averaging horizon [default: 1e6].
    #[arg(long = "R", value_parser = parse_count)]
    #[serde(rename = "R")]
    pub r: Option<u64>,
    /// Relative tolerance for the total [default: 0.02].
    #[arg(long)]
    pub rel_tol: Option<f64>,
    /// Tolerance for each pair correlation [default: 0.05].
    #[arg(long)]
    pub pair_tol: Option<f64>,
}

#[derive(Debug, Serialize)]
struct TreeRun {
    tree: TreeSpec,
    #[serde(rename = "R")]
    r: u64,
    rel_tol: f64,
    pair_tol: f64,
}

/// `kind` is `total`, `pair`, or `null-pair` for pairs whose expected
/// correlation is zero; for those `rel_err` holds `|empirical|` over the
/// geometric mean of the two second moments.
#[derive(Debug, Serialize)]
struct TreeRow {
    kind: &'static str,
    i: String,
    j: String,
    expected: f64,
    empirical: f64,
    rel_err: f64,
}

fn resolve(a: &TreeArgs) -> Result<TreeRun> {
    let (Some(d), Some(k)) = (a.d, a.k) else { bail!("--d and --k are required") };
    let seed = a.seed.unwrap_or(0);
    let multipliers = match (a.uniform, &a.perturb, &a.values) {
        (Some(lambda), None, None) => MultiplierSpec::Uniform { lambda },
        (None, Some(p), None) => match p[..] {
            [base, jitter] => MultiplierSpec::Perturbed { base, jitter, seed },
            _ => bail!("--perturb takes BASE and JITTER"),
        },
        (None, None, Some(v)) => MultiplierSpec::Explicit { values: v.clone() },
        (None, None, None) => bail!("multipliers are required: --uniform, --perturb or a `values` table"),
        _ => bail!("give exactly one of --uniform, --perturb or `values`"),
    };
    let tree = TreeSpec { d, k, multipliers };
    tree.build::<f64>()?;
    Ok(TreeRun {
        tree,
        r: a.r.unwrap_or(1_000_000),
        rel_tol: a.rel_tol.unwrap_or(0.02),
        pair_tol: a.pair_tol.unwrap_or(0.05),
    })
}

fn label(i: &TreeIndex) -> String {
    i.0.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(".")
}

pub fn run(args: &TreeArgs, common: &Common) -> Result<Status> {
    let cfg = resolve(&overlay(args, common.config.as_deref())?)?;
    let em = Emitter::new("tree", &cfg, common)?;
    let tree: DecoratedTree = cfg.tree.build()?;
    let with_pairs = tree.leaf_count() <= MAX_PAIR_LEAVES;
    if common.dry_run {
        let mut steps = vec![format!("closed form and empirical over R = {} for {} leaves", cfg.r, tree.leaf_count())];
        if with_pairs {
            let n = tree.leaf_count();
            steps.push(format!("{} pair correlations", n * (n - 1) / 2));
        }
        em.plan(&steps);
        return Ok(Status::Pass);
    }
    let resonance = tree_resonance(&tree)?;
    let resonant = resonance < RESONANCE_THRESHOLD;
    let expected = tree_closed_form(&tree);
    let empirical = tree_empirical(&tree, cfg.r)?;
    let mut rows = vec![TreeRow {
        kind: "total",
        i: String::new(),
        j: String::new(),
        expected,
        empirical,
        rel_err: (empirical - expected).abs() / expected,
    }];
    let mut worst_pair = 0.0f64;
    let mut nonnegative = true;
    if with_pairs {
        let leaves: Vec<TreeIndex> = tree.leaves().collect();
        let second =
            leaves.iter().map(|i| correlation_empirical(&tree, i, i, cfg.r)).collect::<disclab::Result<Vec<f64>>>()?;
        for a in 0..leaves.len() {
            for b in a + 1..leaves.len() {
                let want = correlation_expectation(&tree, &leaves[a], &leaves[b])?;
                let got = correlation_empirical(&tree, &leaves[a], &leaves[b], cfg.r)?;
                nonnegative &= want >= 0.0;
                let (kind, dev) = if want == 0.0 {
                    ("null-pair", got.abs() / (second[a] * second[b]).sqrt())
                } else {
                    ("pair", (got / want - 1.0).abs())
                };
                worst_pair = worst_pair.max(dev);
                rows.push(TreeRow {
                    kind,
                    i: label(&leaves[a]),
                    j: label(&leaves[b]),
                    expected: want,
                    empirical: got,
                    rel_err: dev,
                });
            }
        }
    } else {
        eprintln!("note: pair correlations skipped above {MAX_PAIR_LEAVES} leaves");
    }
    em.write_csv(&csv_body(&rows)?)?;

    if resonant {
        eprintln!("note: tree fails the Q-freeness screen (residual {resonance:.2e}); expect disagreement");
    }
    let mut checks = vec![Check::below("rel_err", rows[0].rel_err, cfg.rel_tol)];
    if with_pairs {
        checks.push(Check::below("worst_pair", worst_pair, cfg.pair_tol));
        if !nonnegative {
            bail!("negative expected pair correlation; the tree is malformed");
        }
    }
    em.finish(&checks, json!({ "resonance_residual": resonance, "resonant": resonant, "total": rows[0] }))
}
