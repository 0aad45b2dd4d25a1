use anyhow::{bail, Result};
use clap::{Args, ValueEnum};
use disclab::circle_dynamics::{MapSpec, TermSpec, DEFAULT_MESH, MIN_MESH};
use disclab::theorem_harness::{
    convergence_study, write_convergence_csv, ConvergenceStudy, StudyOptions, DEFAULT_QUADRATURE, MIN_GRID,
    MIN_QUADRATURE,
};
use disclab::ExpandingMap;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{overlay, parse_size, Common};
use crate::output::{Check, Emitter, Status};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapKind {
    Doubling,
    PerturbedDoubling,
    Perturbed,
    /// Harmonic terms come from the config file's `terms` array.
    Explicit,
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct CircleArgs {
    /// Map family [default: perturbed-doubling].
    #[arg(long, value_enum)]
    pub map: Option<MapKind>,
    /// Degree for `perturbed` and `explicit`.
    #[arg(long)]
    pub degree: Option<u32>,
    /// Perturbation size [default: 0.02].
    #[arg(long)]
    pub jitter: Option<f64>,
    /// Number of random harmonics [default: 3].
    #[arg(long)]
    pub harmonics: Option<u32>,
    /// `{ j, a, phi }` entries for `explicit` (config file only).
    #[arg(skip)]
    pub terms: Option<Vec<TermSpec>>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Iteration counts [default: 1,2,3].
    #[arg(long = "k", value_delimiter = ',')]
    #[serde(rename = "k")]
    pub k: Option<Vec<usize>>,
    /// Grid orders [default: 10007,100003,1000003].
    #[arg(long = "N", value_delimiter = ',', value_parser = parse_size)]
    #[serde(rename = "N")]
    pub n: Option<Vec<usize>>,
    /// Transfer-operator mesh [default: 16384].
    #[arg(long, value_parser = parse_size)]
    pub mesh: Option<usize>,
    /// Preimage-tree quadrature points [default: 4096].
    #[arg(long, value_parser = parse_size)]
    pub quadrature: Option<usize>,
    /// `verify`: final rel_err bound [default: 0.05].
    #[arg(long)]
    pub rel_tol: Option<f64>,
    /// `verify`: tree-vs-transfer bound [default: 1e-4].
    #[arg(long)]
    pub equivalence_tol: Option<f64>,
    /// `verify`: bound on |N²d_C² − 1/12| at k = 0 [default: 1e-6].
    #[arg(long)]
    pub k0_tol: Option<f64>,
}

#[derive(Debug, Serialize)]
struct Tolerances {
    rel_tol: f64,
    equivalence_tol: f64,
    k0_tol: f64,
}

#[derive(Debug, Serialize)]
struct CircleRun {
    map: MapSpec,
    k: Vec<usize>,
    #[serde(rename = "N")]
    n: Vec<usize>,
    mesh: usize,
    quadrature: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    tolerances: Option<Tolerances>,
}

fn resolve(a: &CircleArgs, verify: bool) -> Result<CircleRun> {
    let seed = a.seed.unwrap_or(0);
    let jitter = a.jitter.unwrap_or(0.02);
    let harmonics = a.harmonics.unwrap_or(3);
    let map = match a.map.unwrap_or(MapKind::PerturbedDoubling) {
        MapKind::Doubling => MapSpec::Doubling,
        MapKind::PerturbedDoubling => MapSpec::PerturbedDoubling { jitter, harmonics, seed },
        MapKind::Perturbed => {
            let Some(degree) = a.degree else { bail!("--degree is required for perturbed maps") };
            MapSpec::Perturbed { degree, jitter, harmonics, seed }
        }
        MapKind::Explicit => {
            let Some(degree) = a.degree else { bail!("`degree` is required for explicit maps") };
            MapSpec::Explicit { degree, terms: a.terms.clone().unwrap_or_default() }
        }
    };
    map.build::<f64>()?;
    let k = a.k.clone().unwrap_or_else(|| vec![1, 2, 3]);
    let n = a.n.clone().unwrap_or_else(|| vec![10_007, 100_003, 1_000_003]);
    if k.is_empty() || n.is_empty() {
        bail!("k and N lists must be nonempty");
    }
    if let Some(&bad) = n.iter().find(|&&v| v < MIN_GRID) {
        bail!("grid order {bad} is below {MIN_GRID}");
    }
    let mesh = a.mesh.unwrap_or(DEFAULT_MESH);
    let quadrature = a.quadrature.unwrap_or(DEFAULT_QUADRATURE);
    if mesh < MIN_MESH || quadrature < MIN_QUADRATURE {
        bail!("mesh must be at least {MIN_MESH} and quadrature at least {MIN_QUADRATURE}");
    }
    let tolerances = verify.then(|| Tolerances {
        rel_tol: a.rel_tol.unwrap_or(0.05),
        equivalence_tol: a.equivalence_tol.unwrap_or(1e-4),
        k0_tol: a.k0_tol.unwrap_or(1e-6),
    });
    Ok(CircleRun { map, k, n, mesh, quadrature, tolerances })
}

fn study(cfg: &CircleRun) -> Result<ConvergenceStudy> {
    let f: ExpandingMap = cfg.map.build()?;
    let s = convergence_study(&f, &cfg.k, &cfg.n, StudyOptions { mesh: cfg.mesh, quadrature: cfg.quadrature })?;
    if let Some(e) = s.failures.first() {
        bail!("cell N = {}, k = {} failed: {}", e.n, e.k, e.message);
    }
    Ok(s)
}

fn emit(em: &Emitter, s: &ConvergenceStudy) -> Result<()> {
    let mut body = Vec::new();
    write_convergence_csv(&s.rows, &mut body)?;
    em.write_csv(&body)
}

fn plan(cfg: &CircleRun) -> Vec<String> {
    vec![
        format!("L^m 1 for m ≤ {} on a mesh of {}", cfg.k.iter().max().unwrap_or(&0), cfg.mesh),
        format!("tree integral with {} quadrature points per k", cfg.quadrature),
        format!("{} cells: k in {:?} × N in {:?}", cfg.k.len() * cfg.n.len(), cfg.k, cfg.n),
    ]
}

pub fn run_circle(args: &CircleArgs, common: &Common) -> Result<Status> {
    let cfg = resolve(&overlay(args, common.config.as_deref())?, false)?;
    let em = Emitter::new("circle", &cfg, common)?;
    if common.dry_run {
        em.plan(&plan(&cfg));
        return Ok(Status::Pass);
    }
    let s = study(&cfg)?;
    emit(&em, &s)?;
    for r in &s.rows {
        eprintln!(
            "k = {}, N = {}: N²d_C² = {:.6}, rhs = {:.6}, rel_err = {:.3e}{}",
            r.k,
            r.n,
            r.lhs,
            r.rhs_transfer,
            r.rel_err,
            if r.resonant { " [resonant]" } else { "" }
        );
    }
    em.finish(&[], json!({ "resonant_cells": s.rows.iter().filter(|r| r.resonant).count() }))
}

pub fn run_verify(args: &CircleArgs, common: &Common) -> Result<Status> {
    let cfg = resolve(&overlay(args, common.config.as_deref())?, true)?;
    let em = Emitter::new("verify", &cfg, common)?;
    if common.dry_run {
        em.plan(&plan(&cfg));
        return Ok(Status::Pass);
    }
    let tol = cfg.tolerances.as_ref().expect("verify resolves tolerances");
    let s = study(&cfg)?;
    emit(&em, &s)?;
    let mut checks = Vec::new();
    let mut ks = cfg.k.clone();
    ks.sort_unstable();
    ks.dedup();
    for k in ks {
        let mut col = s.column(k);
        col.sort_by_key(|r| r.n);
        let first = col[0];
        checks.push(Check::below(
            format!("k={k} tree vs transfer"),
            (first.rhs_tree - first.rhs_transfer).abs() / first.rhs_transfer,
            tol.equivalence_tol,
        ));
        if k == 0 {
            let worst = col.iter().map(|r| (r.lhs - 1.0 / 12.0).abs()).fold(0.0, f64::max);
            checks.push(Check::below("k=0 sawtooth", worst, tol.k0_tol));
            continue;
        }
        let rises = col.windows(2).filter(|w| w[1].rel_err >= w[0].rel_err).count();
        checks.push(Check::below(format!("k={k} rel_err increases along N"), rises as f64, 0.5));
        checks.push(Check::below(format!("k={k} final rel_err"), col[col.len() - 1].rel_err, tol.rel_tol));
    }
    em.finish(&checks, json!({ "rows": s.rows }))
}
