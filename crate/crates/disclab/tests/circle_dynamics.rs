use disclab::circle_dynamics::{
    self, branch_inverses, build_preimage_tree, circle_distance, discretize_point, pushforward_grid, roundoff_ks,
    srb_density, transfer_apply, transfer_power_one, GridMap, GridSpec, MapSpec, DEFAULT_MESH, MIN_MESH, RESONANCE_KS,
};
use disclab::{Error, ExpandingMap, MeshDensity, TransferOperator};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn perturbed(seed: u64) -> ExpandingMap {
    ExpandingMap::perturbed(2, 0.02, 3, seed).unwrap()
}

fn smooth_density(rng: &mut impl Rng, m: usize) -> MeshDensity {
    let terms: Vec<(f64, f64, f64)> = (1..=3)
        .map(|j| (j as f64, rng.gen_range(-0.3..0.3) / j as f64, rng.gen_range(0.0..std::f64::consts::TAU)))
        .collect();
    MeshDensity::new(
        (0..m)
            .map(|i| {
                let x = (i as f64 + 0.5) / m as f64;
                1.0 + terms.iter().map(|&(j, a, p)| a * (std::f64::consts::TAU * j * x + p).cos()).sum::<f64>()
            })
            .collect(),
    )
    .unwrap()
}

#[test]
fn doubling_iterates() {
    let f = ExpandingMap::doubling();
    let (y, d) = f.iterate(0.3, 2);
    assert!((y - 0.2).abs() < 1e-15);
    assert_eq!(d, 4.0);
    assert_eq!(f.iterate(0.3, 0), (0.3, 1.0));
}

#[test]
fn chain_rule_matches_finite_difference() {
    let f = ExpandingMap::perturbed(3, 0.05, 4, 9).unwrap();
    let h = 1e-6;
    for x in [0.05, 0.31, 0.77] {
        let (_, d3) = f.iterate(x, 3);
        let fd = (f.lift_iterate(x + h, 3) - f.lift_iterate(x - h, 3)) / (2.0 * h);
        assert!((fd / d3 - 1.0).abs() < 1e-4);
    }
}

#[test]
fn grid_examples() {
    let f = ExpandingMap::doubling();
    assert_eq!(discretize_point(&f, 10, 3), 6);
    assert_eq!(discretize_point(&f, 4, 1), 2);
}

#[test]
fn grid_rounding_is_nearest_point() {
    let f = perturbed(11);
    for n in [1009usize, 4096, 10_007] {
        for i in 0..n {
            let j = discretize_point(&f, n, i);
            let err = circle_distance(j as f64 / n as f64, f.eval(i as f64 / n as f64));
            assert!(err <= 0.5 / n as f64 + 1e-15);
        }
    }
}

#[test]
fn pushforward_mass_and_support() {
    let f = perturbed(11);
    let n = 10_007;
    let uniform = pushforward_grid(&f, n, 0).unwrap();
    assert_eq!(uniform.len(), n);
    let mut last = n;
    for k in 0..6 {
        let m = pushforward_grid(&f, n, k).unwrap();
        assert!((m.total_mass() - 1.0).abs() < 1e-12);
        assert!(m.len() <= last);
        last = m.len();
    }
    let g = GridMap::new(&f, GridSpec::new(n).unwrap()).unwrap();
    assert_eq!(g.pushforward_counts(4).iter().map(|&c| c as usize).sum::<usize>(), n);
    let odd = pushforward_grid(&ExpandingMap::doubling(), 1001, 1).unwrap();
    assert!((odd.total_mass() - 1.0).abs() < 1e-12);
}

#[test]
fn branch_residuals() {
    let f = ExpandingMap::perturbed(3, 0.05, 4, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let y: f64 = rng.gen();
        let xs = branch_inverses(&f, y).unwrap();
        assert_eq!(xs.len(), 3);
        assert!(xs.windows(2).all(|w| w[0] < w[1]));
        for x in xs {
            assert!(circle_distance(f.eval(x), y) < 1e-12);
        }
    }
    let d = ExpandingMap::doubling();
    assert_eq!(branch_inverses(&d, 0.5).unwrap(), vec![0.25, 0.75]);
    assert_eq!(branch_inverses(&d, 0.0).unwrap(), vec![0.0, 0.5]);
}

#[test]
fn preimage_tree_structure() {
    let d = ExpandingMap::doubling();
    let t = build_preimage_tree(&d, 0.0, 2).unwrap();
    let mut xs: Vec<f64> = t.leaves().iter().map(|n| n.x).collect();
    xs.sort_by(f64::total_cmp);
    assert_eq!(xs, vec![0.0, 0.25, 0.5, 0.75]);
    assert!(t.leaves().iter().all(|n| n.path_product == 4.0));
    let f = perturbed(4);
    let t = build_preimage_tree(&f, 0.42, 5).unwrap();
    assert_eq!(t.leaves().len(), 32);
    assert!(t.leaves().iter().all(|n| n.path_product > 1.0));
}

#[test]
fn tree_sums_match_transfer_powers() {
    let f = perturbed(11);
    let op = TransferOperator::new(&f, DEFAULT_MESH).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for m in 1..=4 {
        let p = op.power_one(m);
        for _ in 0..100 {
            let j = rng.gen_range(0..DEFAULT_MESH);
            let t = build_preimage_tree(&f, p.midpoint(j), m).unwrap();
            let tol = if m == 1 { 1e-12 } else { 1e-6 };
            assert!((t.inverse_product_sum() - p.values()[j]).abs() < tol, "m = {m}");
        }
    }
}

#[test]
fn transfer_of_constants() {
    let d = ExpandingMap::doubling();
    let one = MeshDensity::constant(MIN_MESH, 1.0).unwrap();
    assert!(transfer_apply(&d, &one).unwrap().values().iter().all(|&v| (v - 1.0).abs() < 1e-15));
    for m in [0, 1, 5] {
        let p = transfer_power_one(&d, m, MIN_MESH).unwrap();
        assert!(p.values().iter().all(|&v| (v - 1.0).abs() < 1e-14));
    }
    let f = perturbed(3);
    assert_eq!(transfer_power_one(&f, 0, MIN_MESH).unwrap(), one);
    assert!(transfer_apply(&f, &MeshDensity::constant(512, 1.0).unwrap()).is_err());
}

#[test]
fn transfer_preserves_mass() {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    for s in 0..50 {
        let f = perturbed(100 + s % 5);
        let op = TransferOperator::new(&f, DEFAULT_MESH).unwrap();
        let phi = smooth_density(&mut rng, DEFAULT_MESH);
        let out = op.apply(&phi).unwrap();
        assert!((out.mass() - phi.mass()).abs() < 1e-8);
    }
}

#[test]
fn iterates_settle() {
    let f = perturbed(11);
    let op = TransferOperator::new(&f, DEFAULT_MESH).unwrap();
    let a = op.power_one(29);
    let b = op.power_one(30);
    assert!(a.sup_distance(&b).unwrap() < 1e-8);
}

#[test]
fn invariant_density() {
    let d = srb_density(&ExpandingMap::doubling(), 1e-10).unwrap();
    assert!(d.values().iter().all(|&v| (v - 1.0).abs() < 1e-12));
    let f = perturbed(11);
    let tol = 1e-9;
    let op = TransferOperator::new(&f, DEFAULT_MESH).unwrap();
    let h = op.srb(tol).unwrap();
    assert!((h.mass() - 1.0).abs() < 1e-8);
    assert!(op.apply(&h).unwrap().sup_distance(&h).unwrap() < tol);
    let fine = TransferOperator::new(&f, 2 * DEFAULT_MESH).unwrap().srb(tol).unwrap();
    let gap =
        (0..fine.mesh_size()).map(|i| (fine.values()[i] - h.interpolate(fine.midpoint(i))).abs()).fold(0.0, f64::max);
    assert!(gap < 10.0 * tol);
}

#[test]
fn grid_orbits_stay_within_roundoff_bound() {
    let f = perturbed(11);
    let s = f.sup_derivative();
    for n in [1009usize, 100_003] {
        let g = GridMap::new(&f, GridSpec::new(n).unwrap()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
        for k in 1..=6 {
            let a = s.powi(k as i32) / (2.0 * (s - 1.0));
            for _ in 0..200 {
                let i0 = rng.gen_range(0..n);
                let mut i = i0;
                for _ in 0..k {
                    i = g.image(i);
                }
                let (y, _) = f.iterate(i0 as f64 / n as f64, k);
                assert!(circle_distance(i as f64 / n as f64, y) <= a / n as f64);
            }
        }
    }
}

#[test]
fn resonance_diagnostic() {
    let d = ExpandingMap::doubling();
    assert_eq!(roundoff_ks(&d, 1024, 3).unwrap(), 0.5);
    assert!(roundoff_ks(&perturbed(11), 10_007, 3).unwrap() < RESONANCE_KS);
}

#[test]
fn expansivity_is_certified() {
    let h = circle_dynamics::Harmonic { j: 1, amplitude: 0.2, phase: 0.0 };
    assert!(matches!(ExpandingMap::new(2, vec![h]), Err(Error::NotExpanding { .. })));
    let f = perturbed(11);
    let (lo, hi) = f.derivative_bounds();
    for i in 0..10_000 {
        let v = f.derivative(i as f64 / 10_000.0);
        assert!(lo <= v && v <= hi);
    }
    assert!(lo > 1.0);
}

#[test]
fn map_specs() {
    let s: MapSpec = toml::from_str("kind = \"perturbed-doubling\"\njitter = 0.02\nseed = 11\n").unwrap();
    assert_eq!(s.build::<f64>().unwrap(), perturbed(11));
    let e: MapSpec =
        toml::from_str("kind = \"explicit\"\ndegree = 3\n[[terms]]\nj = 2\na = 0.01\nphi = 0.5\n").unwrap();
    let f = e.build::<f64>().unwrap();
    assert_eq!(f.degree(), 3);
    assert!((f.lift(0.25) - (0.75 + 0.01 * (std::f64::consts::PI + 0.5).sin())).abs() < 1e-15);
}

#[test]
fn f32_smoke() {
    let f = circle_dynamics::ExpandingMap::<f32>::perturbed(2, 0.02, 3, 11).unwrap();
    let m = pushforward_grid(&f, 1009, 2).unwrap();
    assert!((m.total_mass() - 1.0).abs() < 1e-4);
    let xs = branch_inverses(&f, 0.3f32).unwrap();
    assert!(xs.iter().all(|&x| circle_distance(f.eval(x), 0.3) < 1e-5));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn inverses_are_preimages(seed in 0u64..1000, degree in 2u32..5, y in 0.0f64..1.0) {
        let f = ExpandingMap::perturbed(degree, 0.03, 3, seed).unwrap();
        let xs = branch_inverses(&f, y).unwrap();
        prop_assert_eq!(xs.len(), degree as usize);
        for x in xs {
            prop_assert!(circle_distance(f.eval(x), y) < 1e-12);
        }
    }

    #[test]
    fn tree_children_map_to_parents(seed in 0u64..1000, y in 0.0f64..1.0) {
        let f = ExpandingMap::perturbed(2, 0.02, 3, seed).unwrap();
        let t = build_preimage_tree(&f, y, 4).unwrap();
        for l in 1..=4 {
            for (j, node) in t.level(l).iter().enumerate() {
                let parent = if l == 1 { t.root } else { t.level(l - 1)[j / 2].x };
                prop_assert!(circle_distance(f.eval(node.x), parent) < 1e-10);
            }
        }
    }

    #[test]
    fn pushforward_mass_is_one(seed in 0u64..1000, n in 1usize..5000, k in 0usize..5) {
        let f = ExpandingMap::perturbed(2, 0.02, 3, seed).unwrap();
        let m = pushforward_grid(&f, n, k).unwrap();
        prop_assert!((m.total_mass() - 1.0).abs() < 1e-12);
    }
}
