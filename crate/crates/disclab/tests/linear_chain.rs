use std::collections::HashMap;

use disclab::linear_chain::{
    self, affine_value, closed_form_cramer, cumulated_difference_affine, cumulated_difference_direct, discretize_value,
    empirical_cramer, equidistribution_discrepancy, error_vector_via_lattice, global_error_variance,
    half_integer_variance, image_membership, iterate_chain, mean_cumulated_difference, qfree_diagnostic,
    sample_generic_chain, screen_chain, QFREE_THRESHOLD,
};
use disclab::{ChainLattice, HomothetyChain};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const PHI: f64 = 1.618_033_988_749_895;

fn seeded_chain(seed: u64, k: usize) -> HomothetyChain {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_generic_chain(&mut rng, k, 1.1, 4.0).unwrap()
}

#[test]
fn golden_closed_form() {
    let c = HomothetyChain::new(vec![PHI]).unwrap();
    let want = (PHI * PHI + 1.0) / (12.0 * PHI * PHI);
    assert!((closed_form_cramer(&c) - want).abs() < 1e-15);
    let emp = empirical_cramer(&c, 1_000_000).unwrap();
    assert!((emp / want - 1.0).abs() < 0.01);
}

#[test]
fn closed_form_is_slope_plus_error_variance() {
    for seed in 0..5 {
        let c = seeded_chain(seed, 4);
        let t0 = c.tilde(0);
        let want = 1.0 / 12.0 + global_error_variance(&c) / (t0 * t0);
        assert!((closed_form_cramer(&c) - want).abs() < 1e-15);
    }
}

#[test]
fn seeded_k3_chain_matches_closed_form() {
    let c = seeded_chain(17, 3);
    let emp = empirical_cramer(&c, 1_000_000).unwrap();
    assert!((emp / closed_form_cramer(&c) - 1.0).abs() < 0.01);
}

#[test]
fn discrete_variance_identity() {
    let c = seeded_chain(4, 3);
    let r = 100_000;
    let t0 = c.tilde(0);
    let lhs = empirical_cramer(&c, r).unwrap() - 1.0 / (12.0 * t0 * t0);
    let mean = mean_cumulated_difference(&c, r).unwrap();
    let var = half_integer_variance(&c, r).unwrap();
    assert!((lhs - var - mean * mean).abs() < 1e-10);
}

#[test]
fn global_error_law() {
    let c = HomothetyChain::new(vec![1.5 + std::f64::consts::PI / 100.0, 2.0 + std::f64::consts::E / 100.0]).unwrap();
    let es: Vec<f64> = (0..10_000).map(|x| iterate_chain(&c, x).unwrap().global_error).collect();
    let mean = es.iter().sum::<f64>() / es.len() as f64;
    let var = es.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / es.len() as f64;
    assert!((var / global_error_variance(&c) - 1.0).abs() < 0.02);
}

#[test]
fn cumulated_difference_examples() {
    let c = HomothetyChain::new(vec![PHI]).unwrap();
    assert_eq!(cumulated_difference_direct(&c, 0.0).unwrap(), -0.5);
    let v = cumulated_difference_direct(&c, 1.9).unwrap();
    assert!((v - (1.9 / PHI - 0.5)).abs() < 1e-15);
    assert!((v - 0.674).abs() < 1e-3);
    assert_eq!(cumulated_difference_affine(&c, 0).unwrap(), -0.5);
}

#[test]
fn affine_matches_direct_count() {
    for (seed, k) in [(1, 1), (2, 2), (3, 3), (5, 4)] {
        let c = seeded_chain(seed, k);
        for n in 0..=10_000i64 {
            let a = cumulated_difference_affine(&c, n).unwrap();
            let d = cumulated_difference_direct(&c, n as f64).unwrap();
            assert!((a - d).abs() < 1e-8, "k = {k}, n = {n}");
        }
    }
}

#[test]
fn affine_matches_direct_count_on_ties() {
    for lambdas in [vec![1.5], vec![2.5], vec![1.5, 2.5], vec![1.25, 3.0], vec![2.0, 2.0, 2.0]] {
        let c = HomothetyChain::new(lambdas).unwrap();
        for n in 0..=2000i64 {
            let a = cumulated_difference_affine(&c, n).unwrap();
            let d = cumulated_difference_direct(&c, n as f64).unwrap();
            assert!((a - d).abs() < 1e-9, "{:?}, n = {n}", c.lambdas());
        }
    }
}

#[test]
fn center_of_fundamental_domain() {
    let c = seeded_chain(9, 3);
    let center: Vec<f64> = c.lambdas().iter().map(|l| 0.5 - l / 2.0).collect();
    let v = affine_value(&c, &center).unwrap();
    assert!((v + 1.0 / (2.0 * c.tilde(0))).abs() < 1e-12);
}

#[test]
fn lattice_errors_match_iteration() {
    for seed in 0..4 {
        let c = seeded_chain(seed, 1 + seed as usize);
        for x in 0..1000 {
            let via = error_vector_via_lattice(&c, x).unwrap();
            let direct = iterate_chain(&c, x).unwrap().errors;
            for (a, b) in via.iter().zip(&direct) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }
    let g = HomothetyChain::new(vec![PHI]).unwrap();
    assert!((error_vector_via_lattice(&g, 1).unwrap()[0] - (2.0 - PHI)).abs() < 1e-12);
}

#[test]
fn membership_matches_forward_enumeration() {
    for (seed, k) in [(11, 1), (12, 2), (13, 3)] {
        let c = seeded_chain(seed, k);
        let top = (10_000.0 / c.tilde(0)) as i64 + 2;
        let images: HashMap<i64, i64> = (-1..=top).map(|x| (c.image(x).unwrap(), x)).collect();
        for y in 0..=10_000 {
            let found = image_membership(&c, y).unwrap();
            assert_eq!(found.as_ref().map(|p| p.x), images.get(&y).copied(), "y = {y}");
            if let Some(p) = found {
                let t = iterate_chain(&c, p.x).unwrap();
                assert_eq!(p.trajectory, t.trajectory);
                for (a, b) in p.errors.iter().zip(&t.errors) {
                    assert!((a - b).abs() < 1e-9);
                }
            }
        }
    }
    let g = HomothetyChain::new(vec![PHI]).unwrap();
    assert_eq!(image_membership(&g, 2).unwrap().unwrap().x, 1);
    assert_eq!(image_membership(&g, 0).unwrap().unwrap().x, 0);
}

#[test]
fn lattice_matrices() {
    let c = seeded_chain(6, 4);
    let l = ChainLattice::new(&c);
    assert!((l.det_m_tilde() / c.tilde(0) - 1.0).abs() < 1e-9);
    for (m, v) in l.inverse_last_column().iter().enumerate() {
        assert!((v * c.tilde(m) - 1.0).abs() < 1e-9);
    }
}

#[test]
fn mean_zero() {
    for seed in 20..23 {
        let c = seeded_chain(seed, 3);
        let r = 100_000;
        let m = mean_cumulated_difference(&c, r).unwrap();
        assert!(m.abs() < 0.01);
        assert!(m.abs() < 10.0 / (r as f64).sqrt());
    }
}

#[test]
fn equidistribution() {
    let g = HomothetyChain::new(vec![PHI]).unwrap();
    let rep = equidistribution_discrepancy(&g, 1_000_000).unwrap();
    assert!(rep.max_ks() < 0.005);
    let c = seeded_chain(31, 3);
    let rep = equidistribution_discrepancy(&c, 1_000_000).unwrap();
    assert!(rep.star_discrepancy < 0.01);
    let resonant = HomothetyChain::new(vec![2.0; 3]).unwrap();
    let rep = equidistribution_discrepancy(&resonant, 1000).unwrap();
    assert!(rep.star_discrepancy > 0.5);
    assert!(equidistribution_discrepancy(&resonant, 999).is_err());
}

#[test]
fn qfree_examples() {
    let d = qfree_diagnostic(&[2f64.sqrt(), 3f64.sqrt()], 3).unwrap();
    assert!(d.residual > 0.01);
    assert!(qfree_diagnostic(&[0.5; 7], 3).is_err());
    assert!(qfree_diagnostic(&[0.5], 11).is_err());
    let resonant = HomothetyChain::new(vec![2.0, 2.0]).unwrap();
    assert!(screen_chain(&resonant).unwrap() < QFREE_THRESHOLD);
}

#[test]
fn ties_round_up() {
    assert_eq!(discretize_value(2.5).unwrap(), 3);
    assert_eq!(discretize_value(-0.5).unwrap(), 0);
    let c = HomothetyChain::new(vec![1.5]).unwrap();
    let t = iterate_chain(&c, 1).unwrap();
    assert_eq!(t.trajectory, vec![2]);
    assert_eq!(t.errors, vec![0.5]);
}

#[test]
fn f32_smoke() {
    let c = linear_chain::HomothetyChain::<f32>::new(vec![1.618_034, 2.3]).unwrap();
    let t = iterate_chain(&c, 100).unwrap();
    assert!(t.errors.iter().all(|e| *e > -0.5 && *e <= 0.5));
    let v = closed_form_cramer(&c);
    assert!(v > 1.0 / 12.0 && v < 0.2);
}

fn chain_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1.05f64..5.0, 1..6)
}

proptest! {
    #[test]
    fn errors_in_half_open_bracket(lambdas in chain_strategy(), x in -100_000i64..100_000) {
        let c = HomothetyChain::new(lambdas).unwrap();
        let t = iterate_chain(&c, x).unwrap();
        for e in &t.errors {
            prop_assert!(*e > -0.5 && *e <= 0.5);
        }
    }

    #[test]
    fn global_error_decomposes(lambdas in chain_strategy(), x in -100_000i64..100_000) {
        let c = HomothetyChain::new(lambdas).unwrap();
        let t = iterate_chain(&c, x).unwrap();
        let s: f64 = t.errors.iter().enumerate().map(|(m, e)| c.tilde(m + 1) * e).sum();
        prop_assert!((t.global_error - s).abs() < 1e-9 * (1.0 + c.tilde(0)));
        // Recurrence over prefixes.
        let mut big_e = 0.0;
        for (m, e) in t.errors.iter().enumerate() {
            big_e = e + c.lambda(m + 1) * big_e;
        }
        prop_assert!((t.global_error - big_e).abs() < 1e-9 * (1.0 + c.tilde(0)));
    }

    #[test]
    fn lattice_identity(lambdas in chain_strategy(), x in 0i64..100_000) {
        let c = HomothetyChain::new(lambdas).unwrap();
        let via = error_vector_via_lattice(&c, x).unwrap();
        let direct = iterate_chain(&c, x).unwrap().errors;
        for (a, b) in via.iter().zip(&direct) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn normalized_orbit_is_increasing(lambdas in chain_strategy(), x in -10_000i64..10_000) {
        let c = HomothetyChain::new(lambdas).unwrap();
        let t0 = c.tilde(0);
        let a = iterate_chain(&c, x).unwrap();
        let b = iterate_chain(&c, x + 1).unwrap();
        prop_assert!(x as f64 + a.global_error / t0 < (x + 1) as f64 + b.global_error / t0);
    }
}
