use anyhow::{bail, Result};
use clap::Args;
use disclab::linear_chain::{
    closed_form_cramer, cumulated_difference_affine, cumulated_difference_direct, empirical_cramer,
    equidistribution_discrepancy, sample_generic_chain, screen_chain, QFREE_THRESHOLD,
};
use disclab::HomothetyChain;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{overlay, parse_count, Common};
use crate::output::{csv_body, Check, Emitter, Status};

const ORACLE_INPUTS: u64 = 10_000;
const MAX_ORBITS: u64 = 1_000_000;

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct LinearArgs {
    /// Multipliers λ_1,…,λ_k.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub lambdas: Option<Vec<f64>>,
    /// Draw a screened chain of length K from the seed instead.
    #[arg(long, value_name = "K", conflicts_with = "lambdas")]
    pub random: Option<usize>,
    /// Sampling range for `--random` [default: 1.1 4.0].
    #[arg(long)]
    pub lo: Option<f64>,
    #[arg(long)]
    pub hi: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Averaging horizon [default: 1e6].
    #[arg(long = "R", value_parser = parse_count)]
    #[serde(rename = "R")]
    pub r: Option<u64>,
    /// Orbits for the error-vector discrepancy [default: min(R, 1e6)].
    #[arg(long, value_parser = parse_count)]
    pub orbits: Option<u64>,
    /// Relative tolerance between empirical and closed form [default: 0.01].
    #[arg(long)]
    pub rel_tol: Option<f64>,
    /// Optional bound on the per-coordinate KS statistic.
    #[arg(long)]
    pub ks_tol: Option<f64>,
}

#[derive(Debug, Serialize)]
struct Sampled {
    k: usize,
    lo: f64,
    hi: f64,
}

#[derive(Debug, Serialize)]
struct LinearRun {
    lambdas: Vec<f64>,
    sampled: Option<Sampled>,
    seed: u64,
    #[serde(rename = "R")]
    r: u64,
    orbits: u64,
    oracle_inputs: u64,
    rel_tol: f64,
    ks_tol: Option<f64>,
}

#[derive(Debug, Serialize)]
struct LinearRow {
    k: usize,
    lambdas: String,
    #[serde(rename = "R")]
    r: u64,
    closed_form: f64,
    empirical: f64,
    rel_err: f64,
    qfree_residual: f64,
    resonant: bool,
    max_ks: f64,
    star_discrepancy: f64,
    affine_max_dev: f64,
}

fn resolve(a: &LinearArgs) -> Result<LinearRun> {
    let seed = a.seed.unwrap_or(0);
    let r = a.r.unwrap_or(1_000_000);
    let (lambdas, sampled) = match (&a.lambdas, a.random) {
        (Some(_), Some(_)) => bail!("give either lambdas or random, not both"),
        (Some(l), None) => (l.clone(), None),
        (None, Some(k)) => {
            let (lo, hi) = (a.lo.unwrap_or(1.1), a.hi.unwrap_or(4.0));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let chain: HomothetyChain = sample_generic_chain(&mut rng, k, lo, hi)?;
            (chain.lambdas().to_vec(), Some(Sampled { k, lo, hi }))
        }
        (None, None) => bail!("a chain is required: pass --lambdas or --random K"),
    };
    HomothetyChain::new(lambdas.clone())?;
    let orbits = a.orbits.unwrap_or(r.min(MAX_ORBITS));
    if orbits < 1000 {
        bail!("the discrepancy needs at least 1000 orbits (got {orbits})");
    }
    Ok(LinearRun {
        lambdas,
        sampled,
        seed,
        r,
        orbits,
        oracle_inputs: r.min(ORACLE_INPUTS),
        rel_tol: a.rel_tol.unwrap_or(0.01),
        ks_tol: a.ks_tol,
    })
}

pub fn run(args: &LinearArgs, common: &Common) -> Result<Status> {
    let cfg = resolve(&overlay(args, common.config.as_deref())?)?;
    let em = Emitter::new("linear", &cfg, common)?;
    if common.dry_run {
        em.plan(&[
            format!("closed form and empirical d_C² over R = {} for k = {}", cfg.r, cfg.lambdas.len()),
            format!("error-vector discrepancy over {} orbits", cfg.orbits),
            format!("affine vs direct cumulated difference at {} integers", cfg.oracle_inputs),
        ]);
        return Ok(Status::Pass);
    }
    let chain = HomothetyChain::new(cfg.lambdas.clone())?;
    let closed_form = closed_form_cramer(&chain);
    let empirical = empirical_cramer(&chain, cfg.r)?;
    let qfree_residual = screen_chain(&chain)?;
    let resonant = qfree_residual < QFREE_THRESHOLD;
    let rep = equidistribution_discrepancy(&chain, cfg.orbits as usize)?;
    let mut affine_max_dev = 0.0f64;
    for n in 0..cfg.oracle_inputs as i64 {
        let a = cumulated_difference_affine(&chain, n)?;
        let d = cumulated_difference_direct(&chain, n as f64)?;
        affine_max_dev = affine_max_dev.max((a - d).abs());
    }
    let row = LinearRow {
        k: chain.k(),
        lambdas: cfg.lambdas.iter().map(|l| l.to_string()).collect::<Vec<_>>().join(";"),
        r: cfg.r,
        closed_form,
        empirical,
        rel_err: (empirical - closed_form).abs() / closed_form,
        qfree_residual,
        resonant,
        max_ks: rep.max_ks(),
        star_discrepancy: rep.star_discrepancy,
        affine_max_dev,
    };
    em.write_csv(&csv_body(std::slice::from_ref(&row))?)?;

    if resonant {
        eprintln!("note: chain fails the Q-freeness screen (residual {qfree_residual:.2e}); expect disagreement");
    }
    let mut checks = vec![Check::below("rel_err", row.rel_err, cfg.rel_tol)];
    if let Some(tol) = cfg.ks_tol {
        checks.push(Check::below("max_ks", row.max_ks, tol));
    }
    checks.push(Check::below("affine_max_dev", affine_max_dev, 1e-8));
    em.finish(&checks, json!({ "row": row, "resonant": resonant }))
}
