//! Sampler laws against independent rejection and exact-solve oracles.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;

use interlace2d::dirichlet::avoid_function;
use interlace2d::lattice::{point_set, Domain, LatticePoint, PointSet, ORIGIN};
use interlace2d::massive::{massive_hit_probability, MassivePotential};
use interlace2d::rng::{replicas, stream, tags};
use interlace2d::soup::dirichlet::DirichletSoup;
use interlace2d::soup::massive::MassiveSoup;
use interlace2d::soup::tilted::{TiltedSoup, TiltedWalkKernel};
use interlace2d::solver::DirichletSolver;
use interlace2d::stats::{chi_square_gof, chi_square_two_sample, two_sample_z, Moments};

const LEVEL: f64 = 0.01;

fn uniform_neighbor<R: Rng + ?Sized>(rng: &mut R, x: LatticePoint) -> LatticePoint {
    x.neighbors()[rng.random_range(0..4)]
}

/// Histogram over keys present in either sample, as aligned count vectors.
fn aligned<K: Ord + Clone>(a: &[K], b: &[K]) -> (Vec<u64>, Vec<u64>) {
    let mut m: BTreeMap<K, (u64, u64)> = BTreeMap::new();
    for k in a {
        m.entry(k.clone()).or_default().0 += 1;
    }
    for k in b {
        m.entry(k.clone()).or_default().1 += 1;
    }
    m.values().map(|&(x, y)| (x, y)).unzip()
}

/// First `k` sites after the start, padded with a sentinel after death.
fn prefix(sites: &[LatticePoint], k: usize) -> Vec<LatticePoint> {
    (1..=k)
        .map(|i| sites.get(i).copied().unwrap_or(LatticePoint::new(i32::MAX, i32::MAX)))
        .collect()
}

#[test]
fn dirichlet_backward_matches_rejection_oracle() {
    let solver = DirichletSolver::new(Domain::ball(3));
    let a = point_set([(0, 0), (1, 0)]);
    let soup = DirichletSoup::new(&solver, &PointSet::new(), &a).unwrap();
    let d = solver.domain().clone();
    let x = LatticePoint::new(0, 0);
    let n = 40_000;
    let h: Vec<_> = replicas(1, tags::TEST, n, |rng, _| {
        let t = soup.sample_backward(rng, x).unwrap();
        (prefix(&t.sites, 2), t.sites.len().min(12))
    });
    let r: Vec<_> = replicas(1, tags::AUX, n, |rng, _| loop {
        let mut path = vec![x];
        let mut y = uniform_neighbor(rng, x);
        let ok = loop {
            if !d.contains(y) {
                break true;
            }
            if a.contains(&y) {
                break false;
            }
            path.push(y);
            y = uniform_neighbor(rng, y);
        };
        if ok {
            break (prefix(&path, 2), path.len().min(12));
        }
    });
    let (pa, pb) = aligned(
        &h.iter().map(|v| v.0.clone()).collect::<Vec<_>>(),
        &r.iter().map(|v| v.0.clone()).collect::<Vec<_>>(),
    );
    let c = chi_square_two_sample(&pa, &pb).unwrap();
    assert!(c.passes(LEVEL), "two-step patterns: {c:?}");
    let (la, lb) = aligned(
        &h.iter().map(|v| v.1).collect::<Vec<_>>(),
        &r.iter().map(|v| v.1).collect::<Vec<_>>(),
    );
    let c = chi_square_two_sample(&la, &lb).unwrap();
    assert!(c.passes(LEVEL), "path lengths: {c:?}");
}

#[test]
fn dirichlet_forward_first_two_steps_match_enumeration() {
    let solver = DirichletSolver::new(Domain::ball(2));
    let k = point_set([(0, 0)]);
    let soup = DirichletSoup::new(&solver, &k, &point_set([(0, 0), (1, 0)])).unwrap();
    let h = avoid_function(&solver, &k).unwrap();
    let hv = |p: LatticePoint| if solver.domain().contains(p) { h.at(p) } else { 1.0 };
    let x = LatticePoint::new(1, 0);
    let dead = LatticePoint::new(i32::MAX, i32::MAX);
    let inside = |p: LatticePoint| solver.domain().contains(p);
    // Exact law of (X_1, X_2) under the h-transform, by enumeration; steps
    // after leaving K' are the sentinel.
    let mut probs: BTreeMap<Vec<LatticePoint>, f64> = BTreeMap::new();
    for y in x.neighbors() {
        let p1 = hv(y) / (4.0 * hv(x));
        if p1 == 0.0 {
            continue;
        }
        if !inside(y) {
            *probs.entry(vec![dead, dead]).or_default() += p1;
            continue;
        }
        for z in y.neighbors() {
            let p2 = hv(z) / (4.0 * hv(y));
            if p2 > 0.0 {
                let z = if inside(z) { z } else { dead };
                *probs.entry(vec![y, z]).or_default() += p1 * p2;
            }
        }
    }
    let total: f64 = probs.values().sum();
    assert!((total - 1.0).abs() < 1e-12, "enumerated mass {total}");
    let keys: Vec<_> = probs.keys().cloned().collect();
    let mut counts = vec![0u64; keys.len()];
    for d in replicas(2, tags::TEST, 50_000, |rng, _| {
        let t = soup.sample_forward(rng, x).unwrap();
        assert_eq!(t.sites[0], x);
        prefix(&t.sites, 2)
    }) {
        let i = keys.binary_search(&d).expect("sampled pattern has positive exact probability");
        counts[i] += 1;
    }
    let c = chi_square_gof(&counts, &probs.values().copied().collect::<Vec<_>>()).unwrap();
    assert!(c.passes(LEVEL), "{c:?}");
}

#[test]
fn massive_backward_matches_rejection_oracle() {
    let eps = 0.2;
    let pot = MassivePotential::shared(eps).unwrap();
    let a = point_set([(0, 0), (1, 0)]);
    let x = ORIGIN;
    let n = 40_000;
    // Margin 1 sends most paths through the rejection branch; margin 16
    // keeps them inside the h-transform region.
    for margin in [1, 16] {
        let soup = MassiveSoup::with_margin(pot.clone(), &a, margin).unwrap();
        let h: Vec<_> = replicas(3, tags::TEST, n, |rng, _| {
            let t = soup.sample_backward(rng, x).unwrap();
            (prefix(&t.sites, 3), t.sites.len().min(15))
        });
        let r: Vec<_> = replicas(3, tags::AUX, n, |rng, _| loop {
            let mut path = vec![x];
            let mut y = x;
            let ok = loop {
                if rng.random::<f64>() < eps / (1.0 + eps) {
                    break true;
                }
                let z = uniform_neighbor(rng, y);
                if a.contains(&z) {
                    break false;
                }
                path.push(z);
                y = z;
            };
            if ok {
                break (prefix(&path, 3), path.len().min(15));
            }
        });
        let (pa, pb) = aligned(
            &h.iter().map(|v| v.0.clone()).collect::<Vec<_>>(),
            &r.iter().map(|v| v.0.clone()).collect::<Vec<_>>(),
        );
        let c = chi_square_two_sample(&pa, &pb).unwrap();
        assert!(c.passes(LEVEL), "margin {margin}, three-step patterns: {c:?}");
        let (la, lb) = aligned(
            &h.iter().map(|v| v.1).collect::<Vec<_>>(),
            &r.iter().map(|v| v.1).collect::<Vec<_>>(),
        );
        let c = chi_square_two_sample(&la, &lb).unwrap();
        assert!(c.passes(LEVEL), "margin {margin}, path lengths: {c:?}");
    }
}

#[test]
fn massive_hit_probability_matches_monte_carlo() {
    let eps = 0.01;
    let a = point_set([(0, 0)]);
    let x = LatticePoint::new(1, 0);
    let exact = massive_hit_probability(eps, &a, x, None).unwrap();
    let kernel = MassivePotential::new(eps).unwrap().hit_probability(&a, x).unwrap();
    assert!(exact.value <= kernel && kernel <= exact.value + exact.bound + 1e-9);
    let exact = exact.value;
    let n = 1_000_000;
    let hits: Moments = replicas(4, tags::TEST, n, |rng, _| {
        let mut y = x;
        loop {
            if a.contains(&y) {
                return 1.0;
            }
            if rng.random::<f64>() < eps / (1.0 + eps) {
                return 0.0;
            }
            y = uniform_neighbor(rng, y);
        }
    })
    .into_iter()
    .collect();
    let z = (hits.mean() - exact) / hits.stderr();
    assert!(z.abs() < 3.0, "MC {} vs exact {exact}: z = {z}", hits.mean());
}

#[test]
fn tilted_local_times_are_stable_under_guard_doubling() {
    let a = point_set([(0, 0), (1, 0), (2, 0)]);
    let window = point_set([(1, 0), (2, 0)]);
    let level = 3.0;
    let means: Vec<Vec<Moments>> = [8u32, 16]
        .iter()
        .map(|&g| {
            let kernel = Arc::new(TiltedWalkKernel::with_radius(g, 3).unwrap());
            let soup = TiltedSoup::new(kernel, &a, &window, "exact-return").unwrap();
            let occ = replicas(5, tags::TEST | (g as u64) << 8, 20_000, |rng, _| {
                soup.sample_occupation(rng, level, 1e-4).unwrap().1
            });
            (0..2).map(|j| occ.iter().map(|o| o[j]).collect()).collect()
        })
        .collect();
    for (j, (m8, m16)) in means[0].iter().zip(&means[1]).enumerate() {
        let z = two_sample_z(m8.mean(), m8.stderr(), m16.mean(), m16.stderr());
        assert!(z.abs() < 3.5, "window point {j}: z = {z}");
    }
}

#[test]
fn conditioned_box_walk_step_converges_to_tilted_row() {
    let kernel = TiltedWalkKernel::with_radius(4, 0).unwrap();
    let x = LatticePoint::new(1, 1);
    let target = kernel.row(x).unwrap();
    let k = point_set([(0, 0)]);
    let errs: Vec<f64> = [8u32, 16, 32, 64]
        .iter()
        .map(|&n| {
            let solver = DirichletSolver::new(Domain::ball(n));
            let h = avoid_function(&solver, &k).unwrap();
            x.neighbors()
                .iter()
                .zip(target)
                .map(|(y, t)| (h.at(*y) / (4.0 * h.at(x)) - t).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    assert!(errs.windows(2).all(|w| w[1] < w[0]), "errors {errs:?}");
    assert!(errs[3] < 0.02, "errors {errs:?}");
}

#[test]
fn stream_draws_do_not_depend_on_evaluation_order() {
    let fwd: Vec<u64> = (0..50).map(|i| stream(11, tags::TEST, i).random()).collect();
    let rev: Vec<u64> = (0..50).rev().map(|i| stream(11, tags::TEST, i).random()).collect();
    assert!(fwd.iter().eq(rev.iter().rev()));
}
