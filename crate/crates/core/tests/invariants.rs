//! Property tests for structural invariants.

use nalgebra::DMatrix;
use proptest::prelude::*;

use interlace2d::config::{format_points, parse_points};
use interlace2d::dirichlet::{capacity, equilibrium_measure, green_dirichlet, hitting_distribution, rho_measure};
use interlace2d::gaussian::PivotedCholesky;
use interlace2d::lattice::{Domain, LatticePoint, PointSet, ORIGIN};
use interlace2d::massive::{massive_hit_probability, MassivePotential};
use interlace2d::potential::{potential_kernel, PotentialTable};
use interlace2d::solver::DirichletSolver;
use interlace2d::stats::Moments;

fn small_point(r: i32) -> impl Strategy<Value = LatticePoint> {
    (-r..=r, -r..=r).prop_map(|(a, b)| LatticePoint::new(a, b))
}

fn small_set(r: i32, max: usize) -> impl Strategy<Value = PointSet> {
    prop::collection::btree_set(small_point(r), 1..=max)
}

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(config(48))]

    #[test]
    fn potential_is_harmonic_off_the_origin(x in small_point(120)) {
        let a = |p| potential_kernel(p, 1e-12).unwrap().value;
        let mean = x.neighbors().iter().map(|q| a(*q)).sum::<f64>() / 4.0;
        let delta = if x.is_origin() { 1.0 } else { 0.0 };
        prop_assert!((mean - a(x) - delta).abs() < 1e-8);
    }

    #[test]
    fn potential_has_lattice_symmetries(x in small_point(40)) {
        let a = |p| potential_kernel(p, 1e-12).unwrap().value;
        let v = a(x);
        for p in [LatticePoint::new(-x.x1, x.x2), LatticePoint::new(x.x2, x.x1), -x] {
            prop_assert!((a(p) - v).abs() <= 1e-12 * v.max(1.0));
        }
    }

    #[test]
    fn dirichlet_green_is_symmetric(x in small_point(4), y in small_point(4)) {
        let solver = DirichletSolver::new(Domain::ball(6));
        let gxy = green_dirichlet(&solver, x, y).unwrap();
        let gyx = green_dirichlet(&solver, y, x).unwrap();
        prop_assert!((gxy - gyx).abs() < 1e-10 * gxy.max(1.0));
    }

    #[test]
    fn equilibrium_is_nonnegative_and_hitting_is_substochastic(a in small_set(3, 5)) {
        let solver = DirichletSolver::new(Domain::ball(6));
        let e = equilibrium_measure(&solver, &a).unwrap();
        prop_assert!(e.iter().all(|(_, w)| w >= -1e-12));
        let hd = hitting_distribution(&solver, &a).unwrap();
        let d = solver.domain();
        for i in 0..d.len() {
            let s: f64 = hd.values().map(|v| v[i]).sum();
            prop_assert!((-1e-12..=1.0 + 1e-10).contains(&s));
        }
    }

    #[test]
    fn rho_mass_is_monotone_in_a(a in small_set(3, 4), extra in small_point(3)) {
        let solver = DirichletSolver::new(Domain::ball(6));
        let k = PointSet::from([ORIGIN]);
        let mut a = a;
        a.insert(ORIGIN);
        let mut b = a.clone();
        b.insert(extra);
        let ra = rho_measure(&k, &solver, &a).unwrap().total();
        let rb = rho_measure(&k, &solver, &b).unwrap().total();
        prop_assert!(rb >= ra - 1e-12);
    }

    #[test]
    fn capacity_is_translation_invariant_and_monotone(a in small_set(3, 4), v in small_point(10), extra in small_point(4)) {
        let c = capacity(&a).unwrap().value;
        let shifted: PointSet = a.iter().map(|p| *p + v).collect();
        prop_assert!((capacity(&shifted).unwrap().value - c).abs() < 1e-8);
        let mut b = a.clone();
        b.insert(extra);
        prop_assert!(capacity(&b).unwrap().value >= c - 1e-8);
    }

    #[test]
    fn pivoted_cholesky_reproduces_psd_matrices(n in 1usize..7, rank in 1usize..7, seed in any::<u64>()) {
        let rank = rank.min(n);
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let b = DMatrix::from_fn(n, rank, |_, _| next());
        let cov = &b * b.transpose();
        let ch = PivotedCholesky::new(&cov).unwrap();
        let back = &ch.factor * ch.factor.transpose();
        prop_assert!((back - &cov).abs().max() < 1e-9);
        prop_assert!(ch.rank <= rank);
    }

    #[test]
    fn points_round_trip_through_text(pts in prop::collection::vec(small_point(1000), 1..8)) {
        prop_assert_eq!(parse_points(&format_points(&pts)).unwrap(), pts);
    }

    #[test]
    fn moments_merge_matches_sequential(xs in prop::collection::vec(-1e3f64..1e3, 2..60), cut in 0usize..60) {
        let cut = cut.min(xs.len());
        let all: Moments = xs.iter().copied().collect();
        let mut left: Moments = xs[..cut].iter().copied().collect();
        left.merge(&xs[cut..].iter().copied().collect());
        prop_assert_eq!(left.n, all.n);
        prop_assert!((left.mean() - all.mean()).abs() < 1e-9);
        prop_assert!((left.variance() - all.variance()).abs() < 1e-6 * all.variance().max(1.0));
    }
}

proptest! {
    #![proptest_config(config(12))]

    #[test]
    fn massive_equilibrium_sweeps(a in small_set(2, 3), extra in prop::collection::btree_set(small_point(3), 1..3), k in 1u32..4) {
        let eps = 0.05 * k as f64;
        let pot = MassivePotential::new(eps).unwrap();
        let mut b = a.clone();
        b.extend(extra);
        let ea = pot.equilibrium(&a).unwrap();
        let eb = pot.equilibrium(&b).unwrap();
        for x in &a {
            let swept: f64 = eb
                .iter()
                .map(|(y, w)| w * pot.hitting_distribution(&a, y).unwrap().get(*x))
                .sum();
            prop_assert!((swept - ea.get(*x)).abs() < 1e-9, "at {}: swept {} vs {}", x, swept, ea.get(*x));
        }
    }

    #[test]
    fn massive_equilibrium_increases_with_eps(a in small_set(3, 4)) {
        let es: Vec<_> = [0.001, 0.01, 0.1, 1.0]
            .iter()
            .map(|&eps| MassivePotential::new(eps).unwrap().equilibrium(&a).unwrap())
            .collect();
        for w in es.windows(2) {
            for x in &a {
                prop_assert!(w[1].get(*x) >= w[0].get(*x) - 1e-12, "at {}", x);
            }
        }
    }

    #[test]
    fn massive_last_exit_identity(a in small_set(2, 3), x in small_point(5)) {
        let eps = 0.05;
        let pot = MassivePotential::new(eps).unwrap();
        let by_kernel = pot.hit_probability(&a, x).unwrap();
        let by_solve = massive_hit_probability(eps, &a, x, None).unwrap();
        let mid = by_solve.value + by_solve.bound / 2.0;
        prop_assert!((by_kernel - mid).abs() <= 1e-5 * mid.max(1e-12) + by_solve.bound);
    }
}

#[test]
fn single_point_massive_equilibrium_is_inverse_green() {
    for eps in [0.001, 0.1, 2.0] {
        let pot = MassivePotential::new(eps).unwrap();
        let e = pot.equilibrium(&PointSet::from([ORIGIN])).unwrap().get(ORIGIN);
        assert!((e - 1.0 / pot.g0().unwrap()).abs() < 1e-12);
    }
}

#[test]
fn pinned_box_covariance_converges_to_the_infinite_volume_limit() {
    use interlace2d::gaussian::{build_spec, FieldKind};
    let window: Vec<LatticePoint> = [(1, 0), (1, 1), (-2, 1), (0, 3)]
        .into_iter()
        .map(LatticePoint::from)
        .collect();
    let table = PotentialTable::build(8, 1e-12).unwrap();
    let limit = DMatrix::from_fn(window.len(), window.len(), |i, j| {
        let (x, y) = (window[i], window[j]);
        table.value(x) + table.value(y) - table.value(x - y)
    });
    let errs: Vec<f64> = [8u32, 16, 32, 64]
        .iter()
        .map(|&n| {
            let spec = build_spec(FieldKind::PinnedBox(n), &window).unwrap();
            (&spec.covariance - &limit).abs().max()
        })
        .collect();
    assert!(errs.windows(2).all(|w| w[1] < w[0]), "errors {errs:?}");
}
