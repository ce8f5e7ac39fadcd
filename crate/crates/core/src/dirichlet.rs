//! Finite-domain potential theory for the walk killed on exiting a domain.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{Domain, DomainFunction, LatticePoint, PointSet, ORIGIN};
use crate::potential::PotentialTable;
use crate::registry::{Named, Registry};
use crate::solver::DirichletSolver;

/// Nonnegative weights on a finite set of points.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct MeasureOnSet {
    pub weights: BTreeMap<LatticePoint, f64>,
}

impl MeasureOnSet {
    pub fn from_pairs<I: IntoIterator<Item = (LatticePoint, f64)>>(it: I) -> Self {
        MeasureOnSet {
            weights: it.into_iter().collect(),
        }
    }

    pub fn total(&self) -> f64 {
        self.weights.values().sum()
    }

    pub fn get(&self, p: LatticePoint) -> f64 {
        self.weights.get(&p).copied().unwrap_or(0.0)
    }

    pub fn support(&self) -> PointSet {
        self.weights
            .iter()
            .filter(|(_, w)| **w > 0.0)
            .map(|(p, _)| *p)
            .collect()
    }

    /// Probability measure proportional to the weights.
    pub fn normalized(&self) -> Result<MeasureOnSet> {
        let t = self.total();
        if !(t > 0.0) {
            return Err(Error::domain("cannot normalize a measure of zero mass"));
        }
        Ok(MeasureOnSet::from_pairs(
            self.weights.iter().map(|(p, w)| (*p, w / t)),
        ))
    }

    pub fn iter(&self) -> impl Iterator<Item = (LatticePoint, f64)> + '_ {
        self.weights.iter().map(|(p, w)| (*p, *w))
    }
}

fn unit_rhs(d: &Domain, y: usize) -> Vec<f64> {
    let mut b = vec![0.0; d.len()];
    b[y] = 1.0;
    b
}

/// g_{D}(x,y): expected time at y before exiting the domain, from x.
pub fn green_dirichlet(solver: &DirichletSolver, x: LatticePoint, y: LatticePoint) -> Result<f64> {
    let d = solver.domain();
    match (d.index_of(x), d.index_of(y)) {
        (Some(i), Some(j)) => Ok(solver.solve(&PointSet::new(), &unit_rhs(d, j))?[i]),
        _ => Ok(0.0),
    }
}

/// x -> g_{D \ K}(x, y) as a function on the domain (zero outside and on K).
pub fn green_column(solver: &DirichletSolver, killed: &PointSet, y: LatticePoint) -> Result<DomainFunction> {
    let d = solver.domain().clone();
    let values = match d.index_of(y) {
        Some(j) if !killed.contains(&y) => solver.solve(killed, &unit_rhs(&d, j))?,
        _ => vec![0.0; d.len()],
    };
    Ok(DomainFunction {
        domain: d,
        values,
        exterior: 0.0,
    })
}

/// Green matrix g_{D \ K}(x, y) over a window (rows and columns in window order).
pub fn green_matrix(solver: &DirichletSolver, killed: &PointSet, window: &[LatticePoint]) -> Result<DMatrix<f64>> {
    let d = solver.domain();
    let cols: Vec<(usize, usize)> = window
        .iter()
        .enumerate()
        .filter(|(_, p)| !killed.contains(p))
        .filter_map(|(c, p)| d.index_of(*p).map(|j| (c, j)))
        .collect();
    let rhss: Vec<Vec<f64>> = cols.iter().map(|&(_, j)| unit_rhs(d, j)).collect();
    let sols = solver.solve_many(killed, &rhss)?;
    let mut g = DMatrix::<f64>::zeros(window.len(), window.len());
    for ((c, _), u) in cols.iter().zip(&sols) {
        for (r, p) in window.iter().enumerate() {
            if let Some(i) = d.index_of(*p) {
                g[(r, *c)] = u[i];
            }
        }
    }
    // the operator is symmetric; average away solver round-off
    let gt = g.transpose();
    Ok((g + gt) * 0.5)
}

/// h_K(x) = P_x[H_K > T_D]: 0 on K, 1 outside the domain, harmonic elsewhere.
pub fn avoid_function(solver: &DirichletSolver, k: &PointSet) -> Result<DomainFunction> {
    let d = solver.domain().clone();
    let b: Vec<f64> = (0..d.len()).map(|i| d.exterior_degree(i) as f64 / 4.0).collect();
    let values = solver.solve(k, &b)?;
    Ok(DomainFunction {
        domain: d,
        values,
        exterior: 1.0,
    })
}

/// P_x[H_K > T_D].
pub fn avoid_probability(solver: &DirichletSolver, k: &PointSet, x: LatticePoint) -> Result<f64> {
    if !solver.domain().contains_all(k) {
        return Err(Error::domain("K must lie inside the domain"));
    }
    Ok(avoid_function(solver, k)?.at(x))
}

/// x -> E_x[f(X_{T_D})] on the domain.
pub fn exit_expectation<F: Fn(LatticePoint) -> f64>(solver: &DirichletSolver, f: F) -> Result<Vec<f64>> {
    let d = solver.domain();
    let b: Vec<f64> = (0..d.len())
        .map(|i| {
            let p = d.point(i);
            p.neighbors()
                .iter()
                .zip(d.neighbor_indices(i))
                .filter(|(_, j)| j.is_none())
                .map(|(q, _)| f(*q))
                .sum::<f64>()
                / 4.0
        })
        .collect();
    solver.solve(&PointSet::new(), &b)
}

/// For each y in A, z -> P_z[H_A < T_D, X_{H_A} = y] on the domain.
pub fn hitting_distribution(solver: &DirichletSolver, a: &PointSet) -> Result<BTreeMap<LatticePoint, Vec<f64>>> {
    let d = solver.domain();
    let idx = d.indices_of(a)?;
    let rhss: Vec<Vec<f64>> = idx
        .iter()
        .map(|&j| {
            (0..d.len())
                .map(|i| {
                    d.neighbor_indices(i)
                        .iter()
                        .filter(|n| **n == Some(j))
                        .count() as f64
                        / 4.0
                })
                .collect()
        })
        .collect();
    let sols = solver.solve_many(a, &rhss)?;
    Ok(a.iter()
        .zip(idx)
        .zip(sols)
        .map(|((p, j), mut u)| {
            u[j] = 1.0;
            (*p, u)
        })
        .collect())
}

/// e_{A,D}(x) = P_x[H~_A > T_D] for x in A.
pub fn equilibrium_measure(solver: &DirichletSolver, a: &PointSet) -> Result<MeasureOnSet> {
    if a.is_empty() {
        return Err(Error::domain("A must be nonempty"));
    }
    let d = solver.domain();
    let idx = d.indices_of(a)?;
    let h = avoid_function(solver, a)?;
    Ok(MeasureOnSet::from_pairs(
        a.iter().zip(idx).map(|(p, i)| (*p, h.neighbor_mean(i))),
    ))
}

/// rho(x) = e_{A,K'}(x) P_x[H_K > T_{K'}], x in A.
pub fn rho_measure(k: &PointSet, solver: &DirichletSolver, a: &PointSet) -> Result<MeasureOnSet> {
    if !k.is_subset(a) {
        return Err(Error::domain("K must be a subset of A"));
    }
    if !solver.domain().contains_all(a) {
        return Err(Error::domain("A must lie inside K'"));
    }
    let e = equilibrium_measure(solver, a)?;
    let h = avoid_function(solver, k)?;
    Ok(MeasureOnSet::from_pairs(
        e.iter().map(|(p, w)| (p, w * h.at(p))),
    ))
}

/// Harmonic measure together with its error estimate.
#[derive(Clone, Debug, Serialize)]
pub struct HarmonicMeasureEstimate {
    pub measure: MeasureOnSet,
    pub error: f64,
    pub warning: Option<String>,
}

/// A method for computing hm_A.
pub trait HarmonicMeasureMethod: Named + Send + Sync {
    fn compute(&self, a: &PointSet) -> Result<HarmonicMeasureEstimate>;
}

/// Two-point Richardson extrapolation in 1/log N of (2/pi) log N e_{A,B_N}.
#[derive(Clone, Debug)]
pub struct RichardsonHarmonic {
    pub radii: Vec<u32>,
}

impl Named for RichardsonHarmonic {
    fn name(&self) -> &'static str {
        "richardson"
    }
    fn describe(&self) -> &'static str {
        "escape probabilities on growing balls, extrapolated in 1/log N"
    }
}

impl HarmonicMeasureMethod for RichardsonHarmonic {
    fn compute(&self, a: &PointSet) -> Result<HarmonicMeasureEstimate> {
        harmonic_measure(a, &self.radii)
    }
}

/// Solves sum_x hm(x) a(x - y) = cap (y in A), sum hm = 1.
#[derive(Clone, Copy, Debug, Default)]
pub struct KernelHarmonic;

impl Named for KernelHarmonic {
    fn name(&self) -> &'static str {
        "kernel"
    }
    fn describe(&self) -> &'static str {
        "bordered linear system in the potential kernel"
    }
}

impl HarmonicMeasureMethod for KernelHarmonic {
    fn compute(&self, a: &PointSet) -> Result<HarmonicMeasureEstimate> {
        let (hm, _) = harmonic_measure_kernel(a, None)?;
        Ok(HarmonicMeasureEstimate {
            measure: hm,
            error: 1e-10,
            warning: None,
        })
    }
}

pub fn harmonic_methods() -> Registry<dyn HarmonicMeasureMethod> {
    Registry::<dyn HarmonicMeasureMethod>::new().with(Box::new(KernelHarmonic)).with(Box::new(RichardsonHarmonic {
        radii: vec![64, 128, 256],
    }))
}

/// hm_A extrapolated from (2/pi) log N e_{A,B_N} over the given radii.
pub fn harmonic_measure(a: &PointSet, radii: &[u32]) -> Result<HarmonicMeasureEstimate> {
    if a.is_empty() {
        return Err(Error::domain("A must be nonempty"));
    }
    if radii.len() < 2 {
        return Err(Error::domain("need at least two radii"));
    }
    if a.len() == 1 {
        return Ok(HarmonicMeasureEstimate {
            measure: MeasureOnSet::from_pairs([(*a.iter().next().unwrap(), 1.0)]),
            error: 0.0,
            warning: None,
        });
    }
    let mut rs = radii.to_vec();
    rs.sort_unstable();
    let mut scaled = Vec::new();
    for &n in &rs {
        let dom = Domain::ball(n);
        if !dom.contains_all(a) {
            return Err(Error::domain(format!("A is not contained in B_{n}")));
        }
        let e = equilibrium_measure(&DirichletSolver::new(dom), a)?;
        let l = 2.0 / PI * (n as f64).ln();
        scaled.push((1.0 / l, e.iter().map(|(p, w)| (p, l * w)).collect::<Vec<_>>()));
    }
    let extrap = |i: usize| -> Vec<f64> {
        let (t1, v1) = &scaled[i - 1];
        let (t2, v2) = &scaled[i];
        v1.iter()
            .zip(v2)
            .map(|((_, a1), (_, a2))| (a2 * t1 - a1 * t2) / (t1 - t2))
            .collect()
    };
    let m = scaled.len() - 1;
    let best = extrap(m);
    let mut warning = None;
    let error = if m >= 2 {
        let prev = extrap(m - 1);
        let d_last: f64 = best.iter().zip(&prev).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let raw: Vec<f64> = (0..=m)
            .map(|i| {
                scaled[i]
                    .1
                    .iter()
                    .zip(&best)
                    .map(|((_, v), b)| (v - b).abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        if raw.windows(2).any(|w| w[1] > w[0]) {
            warning = Some("non-monotone residuals in extrapolation".into());
        }
        d_last
    } else {
        best.iter()
            .zip(&scaled[m].1)
            .map(|(b, (_, v))| (b - v).abs())
            .fold(0.0, f64::max)
    };
    let total: f64 = best.iter().sum();
    let measure = MeasureOnSet::from_pairs(
        scaled[m].1.iter().zip(&best).map(|((p, _), b)| (*p, b / total)),
    );
    Ok(HarmonicMeasureEstimate {
        measure,
        error: error / total,
        warning,
    })
}

/// Exact hm_A and cap(A) from the potential kernel restricted to A.
pub fn harmonic_measure_kernel(a: &PointSet, table: Option<&PotentialTable>) -> Result<(MeasureOnSet, f64)> {
    if a.is_empty() {
        return Err(Error::domain("A must be nonempty"));
    }
    let pts: Vec<LatticePoint> = a.iter().copied().collect();
    let n = pts.len();
    if n == 1 {
        return Ok((MeasureOnSet::from_pairs([(pts[0], 1.0)]), 0.0));
    }
    let kernel = |p: LatticePoint| -> Result<f64> {
        match table.and_then(|t| t.lookup(p)) {
            Some(v) => Ok(v),
            None => crate::potential::potential_kernel(p, 1e-13).map(|e| e.value),
        }
    };
    let mut m = DMatrix::<f64>::zeros(n + 1, n + 1);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = kernel(pts[i] - pts[j])?;
        }
        m[(i, n)] = -1.0;
        m[(n, i)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(n + 1);
    rhs[n] = 1.0;
    let sol = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Solver("singular potential-kernel system".into()))?;
    let hm = MeasureOnSet::from_pairs(pts.iter().enumerate().map(|(i, p)| (*p, sol[i].max(0.0))));
    Ok((hm, sol[n]))
}

/// Anchor convention: the origin when it belongs to A, else the smallest point.
pub fn default_anchor(a: &PointSet) -> Option<LatticePoint> {
    if a.contains(&ORIGIN) {
        Some(ORIGIN)
    } else {
        a.iter().next().copied()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CapacityEstimate {
    pub value: f64,
    pub error: f64,
    pub anchor: LatticePoint,
    pub harmonic_measure: MeasureOnSet,
    pub warning: Option<String>,
}

/// cap(A) = sum_x a(x - y) hm_A(x) with the default anchor y.
pub fn capacity(a: &PointSet) -> Result<CapacityEstimate> {
    capacity_with(a, &KernelHarmonic)
}

/// cap(A) with an explicit harmonic-measure method.
pub fn capacity_with(a: &PointSet, method: &dyn HarmonicMeasureMethod) -> Result<CapacityEstimate> {
    let anchor = default_anchor(a).ok_or_else(|| Error::domain("A must be nonempty"))?;
    capacity_anchored(a, anchor, method)
}

pub fn capacity_anchored(
    a: &PointSet,
    anchor: LatticePoint,
    method: &dyn HarmonicMeasureMethod,
) -> Result<CapacityEstimate> {
    if !a.contains(&anchor) {
        return Err(Error::domain("anchor must belong to A"));
    }
    let hm = method.compute(a)?;
    let mut value = 0.0;
    let mut amax = 0.0f64;
    for (x, w) in hm.measure.iter() {
        let ax = crate::potential::potential_kernel(x - anchor, 1e-13)?.value;
        amax = amax.max(ax);
        value += ax * w;
    }
    Ok(CapacityEstimate {
        value,
        error: hm.error * amax * a.len() as f64 + 1e-12,
        anchor,
        harmonic_measure: hm.measure,
        warning: hm.warning,
    })
}

/// The finite-N capacity (4/pi^2) log^2 N sum_x e_{A,B_N}(x) P_x[H_0 > T_{B_N}].
#[derive(Clone, Debug, Serialize)]
pub struct FiniteCapacity {
    pub n: u32,
    pub value: f64,
    pub prefactor: f64,
    pub sum: f64,
    pub equilibrium: MeasureOnSet,
    pub escape: MeasureOnSet,
}

pub fn capacity_finite_n(a: &PointSet, n: u32) -> Result<FiniteCapacity> {
    capacity_finite_with(a, &DirichletSolver::new(Domain::ball(n)))
}

/// As [`capacity_finite_n`] with a prepared solver on B_N.
pub fn capacity_finite_with(a: &PointSet, solver: &DirichletSolver) -> Result<FiniteCapacity> {
    let n = match solver.domain().kind() {
        crate::lattice::DomainKind::EuclideanBall { radius } => radius,
        _ => return Err(Error::domain("finite-N capacity needs a ball domain")),
    };
    if !a.contains(&ORIGIN) {
        return Err(Error::domain("A must contain the origin"));
    }
    if !solver.domain().contains_all(a) {
        return Err(Error::domain(format!("A is not contained in B_{n}")));
    }
    let e = equilibrium_measure(solver, a)?;
    let h0 = avoid_function(solver, &PointSet::from([ORIGIN]))?;
    let escape = MeasureOnSet::from_pairs(a.iter().map(|p| (*p, h0.at(*p))));
    let sum: f64 = e.iter().map(|(p, w)| w * escape.get(p)).sum();
    let l = (n as f64).ln();
    let prefactor = 4.0 / (PI * PI) * l * l;
    Ok(FiniteCapacity {
        n,
        value: prefactor * sum,
        prefactor,
        sum,
        equilibrium: e,
        escape,
    })
}

/// Error proxy for a sequence converging like c / log N:
/// the remaining gap extrapolated from the last increment.
pub fn log_richardson_error(v_prev: f64, n_prev: u32, v: f64, n: u32) -> f64 {
    let (l1, l2) = ((n_prev as f64).ln(), (n as f64).ln());
    ((v - v_prev) * l1 / (l2 - l1)).abs()
}

/// Rows (N, value, error estimate) of a finite-N capacity scan.
pub fn capacity_scan(a: &PointSet, radii: &[u32]) -> Result<Vec<(u32, f64, f64)>> {
    let mut out = Vec::new();
    let mut prev: Option<(u32, f64)> = None;
    for &n in radii {
        let v = capacity_finite_n(a, n)?.value;
        let (pn, pv) = match prev {
            Some(p) => p,
            None => {
                let half = (n / 2).max(1);
                (half, capacity_finite_n(a, half)?.value)
            }
        };
        out.push((n, v, log_richardson_error(pv, pn, v, n)));
        prev = Some((n, v));
    }
    Ok(out)
}

/// Convenience for building a solver over B_N.
pub fn ball_solver(n: u32) -> DirichletSolver {
    DirichletSolver::new(Domain::ball(n))
}

pub fn shared_ball(n: u32) -> Arc<Domain> {
    Domain::ball(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::point_set;

    fn p(a: i32, b: i32) -> LatticePoint {
        LatticePoint::new(a, b)
    }

    #[test]
    fn b1_examples() {
        let s = ball_solver(1);
        assert!((green_dirichlet(&s, ORIGIN, ORIGIN).unwrap() - 4.0 / 3.0).abs() < 1e-14);
        assert_eq!(green_dirichlet(&s, p(2, 0), ORIGIN).unwrap(), 0.0);
        let k = point_set([(0, 0)]);
        assert!((avoid_probability(&s, &k, p(1, 0)).unwrap() - 0.75).abs() < 1e-14);
        assert_eq!(avoid_probability(&s, &k, ORIGIN).unwrap(), 0.0);
        let e = equilibrium_measure(&s, &k).unwrap();
        assert!((e.get(ORIGIN) - 0.75).abs() < 1e-14);
        let a = point_set([(0, 0), (1, 0)]);
        let rho = rho_measure(&k, &s, &a).unwrap();
        assert!((rho.get(p(1, 0)) - 9.0 / 16.0).abs() < 1e-14);
        assert!((rho.total() - 9.0 / 16.0).abs() < 1e-14);
        assert!(rho_measure(&a, &s, &k).is_err());
    }

    #[test]
    fn boundary_ring_equilibrium() {
        let s = ball_solver(3);
        let ring = s.domain().interior_boundary();
        let e = equilibrium_measure(&s, &ring).unwrap();
        for (x, w) in e.iter() {
            let i = s.domain().index_of(x).unwrap();
            let expect = s.domain().exterior_degree(i) as f64 / 4.0;
            assert!((w - expect).abs() < 1e-13);
        }
    }

    #[test]
    fn kernel_capacities() {
        let (hm, cap) = harmonic_measure_kernel(&point_set([(0, 0), (1, 0)]), None).unwrap();
        assert!((cap - 0.5).abs() < 1e-12);
        assert!((hm.get(ORIGIN) - 0.5).abs() < 1e-12);
        let sq = point_set([(0, 0), (1, 0), (0, 1), (1, 1)]);
        let (_, cap) = harmonic_measure_kernel(&sq, None).unwrap();
        assert!((cap - (0.5 + 1.0 / PI)).abs() < 1e-12);
        assert_eq!(capacity(&point_set([(0, 0)])).unwrap().value, 0.0);
    }

    #[test]
    fn finite_capacity_singleton_is_zero() {
        let f = capacity_finite_n(&point_set([(0, 0)]), 16).unwrap();
        assert_eq!(f.value, 0.0);
        assert!(capacity_finite_n(&point_set([(1, 0)]), 16).is_err());
    }
}
