//! Potential theory of the walk killed at rate eps.
//!
//! The walk holds an Exp(1+eps) time at each visit, then jumps to a uniform
//! neighbour with probability 1/(1+eps) or dies. With g_eps as in
//! [`massive_green`](crate::potential::massive_green) (expected time at y)
//! the equilibrium measure e_{eps,A}(x) = (1+eps) P_x[H~_A = inf] satisfies
//! G_AA e = 1, and the last-exit identity P_x[H_A < xi] = sum_y g(x,y) e(y)
//! holds exactly.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::dirichlet::MeasureOnSet;
use crate::error::{Error, Result};
use crate::lattice::{max_norm, Domain, LatticePoint, PointSet, ORIGIN};
use crate::potential::MassiveGreenTable;
use crate::solver::DirichletSolver;

/// Largest truncation ball accepted by the certified solves.
pub const MAX_TRUNC_RADIUS: u32 = 600;
/// Truncation bound above which the certified solves fail.
pub const TRUNC_BOUND_LIMIT: f64 = 1e-6;

/// t_N = (2/pi) N^2 log^2 N.
pub fn cover_time_scale(n: u32) -> f64 {
    let (nf, l) = (n as f64, (n as f64).ln());
    2.0 / PI * nf * nf * l * l
}

/// The killing rate attached to a box size N.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MassiveRegime {
    pub n: u32,
    pub eps: f64,
    pub t_n: f64,
}

impl MassiveRegime {
    /// eps_N = 1 / t_N exactly.
    pub fn canonical(n: u32) -> Result<Self> {
        if n < 2 {
            return Err(Error::domain("N must be at least 2"));
        }
        let t_n = cover_time_scale(n);
        Ok(MassiveRegime { n, eps: 1.0 / t_n, t_n })
    }

    /// u_N = (2/pi) alpha log^2 N.
    pub fn level(&self, alpha: f64) -> f64 {
        let l = (self.n as f64).ln();
        2.0 / PI * alpha * l * l
    }

    /// (2 log N / pi).
    pub fn log_scale(&self) -> f64 {
        2.0 * (self.n as f64).ln() / PI
    }
}

/// Exact infinite-volume quantities from the massive Green function.
#[derive(Debug)]
pub struct MassivePotential {
    green: MassiveGreenTable,
}

impl MassivePotential {
    pub fn new(eps: f64) -> Result<Self> {
        Ok(MassivePotential {
            green: MassiveGreenTable::new(eps, 1e-13)?,
        })
    }

    pub fn shared(eps: f64) -> Result<Arc<Self>> {
        Self::new(eps).map(Arc::new)
    }

    pub fn eps(&self) -> f64 {
        self.green.eps()
    }

    pub fn g(&self, x: LatticePoint, y: LatticePoint) -> Result<f64> {
        self.green.g(x, y)
    }

    pub fn g0(&self) -> Result<f64> {
        self.green.g(ORIGIN, ORIGIN)
    }

    fn gram(&self, pts: &[LatticePoint]) -> Result<DMatrix<f64>> {
        let n = pts.len();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = self.g(pts[i], pts[j])?;
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Ok(m)
    }

    /// e_{eps,A} = G_AA^{-1} 1.
    pub fn equilibrium(&self, a: &PointSet) -> Result<MeasureOnSet> {
        if a.is_empty() {
            return Err(Error::domain("A must be nonempty"));
        }
        let pts: Vec<LatticePoint> = a.iter().copied().collect();
        let chol = self
            .gram(&pts)?
            .cholesky()
            .ok_or_else(|| Error::Solver("massive Green matrix not positive definite".into()))?;
        let e = chol.solve(&DVector::from_element(pts.len(), 1.0));
        Ok(MeasureOnSet::from_pairs(pts.iter().zip(e.iter()).map(|(p, v)| (*p, *v))))
    }

    /// P_x[H_A < xi] by last exit.
    pub fn hit_probability(&self, a: &PointSet, x: LatticePoint) -> Result<f64> {
        if a.contains(&x) {
            return Ok(1.0);
        }
        let e = self.equilibrium(a)?;
        self.hit_with(&e, x)
    }

    /// sum_y g(x,y) e(y) for a precomputed equilibrium measure.
    pub fn hit_with(&self, e: &MeasureOnSet, x: LatticePoint) -> Result<f64> {
        let mut s = 0.0;
        for (y, w) in e.iter() {
            s += self.g(x, y)? * w;
        }
        Ok(s.clamp(0.0, 1.0))
    }

    /// P_x[H_y = inf] = 1 - g(x,y)/g(y,y).
    pub fn avoid_point(&self, x: LatticePoint, y: LatticePoint) -> Result<f64> {
        Ok(1.0 - self.g(x, y)? / self.g0()?)
    }

    /// Hitting distribution of A from x: P_x[H_A < xi, X_{H_A} = y].
    pub fn hitting_distribution(&self, a: &PointSet, x: LatticePoint) -> Result<MeasureOnSet> {
        let pts: Vec<LatticePoint> = a.iter().copied().collect();
        if let Some(i) = pts.iter().position(|p| *p == x) {
            return Ok(MeasureOnSet::from_pairs(pts.iter().enumerate().map(|(j, p)| (*p, if i == j { 1.0 } else { 0.0 }))));
        }
        let chol = self
            .gram(&pts)?
            .cholesky()
            .ok_or_else(|| Error::Solver("massive Green matrix not positive definite".into()))?;
        let mut b = DVector::zeros(pts.len());
        for (i, p) in pts.iter().enumerate() {
            b[i] = self.g(x, *p)?;
        }
        let h = chol.solve(&b);
        Ok(MeasureOnSet::from_pairs(pts.iter().zip(h.iter()).map(|(p, v)| (*p, *v))))
    }

    /// sum_x e_A(x) - e_{0}(0), the pinned vacancy exponent per unit level.
    pub fn pinned_exponent(&self, a: &PointSet) -> Result<f64> {
        if !a.contains(&ORIGIN) {
            return Err(Error::domain("A must contain the origin"));
        }
        Ok(self.equilibrium(a)?.total() - 1.0 / self.g0()?)
    }

    /// The same exponent as (1/g(0,0)) sum_y (g(0,0) - g(0,y)) e_A(y).
    pub fn pinned_exponent_rewritten(&self, a: &PointSet) -> Result<f64> {
        if !a.contains(&ORIGIN) {
            return Err(Error::domain("A must contain the origin"));
        }
        let e = self.equilibrium(a)?;
        let g00 = self.g0()?;
        let mut s = 0.0;
        for (y, w) in e.iter() {
            s += (g00 - self.g(ORIGIN, y)?) * w;
        }
        Ok(s / g00)
    }
}

/// A value with a one-sided truncation bound: the truth lies in
/// [value, value + bound] (or the mirror interval, as documented).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Truncated {
    pub value: f64,
    pub bound: f64,
    pub radius: u32,
}

/// Radius ceil(8/sqrt(eps)) + |A|_max + 2.
pub fn default_trunc_radius(eps: f64, a: &PointSet) -> u32 {
    ((8.0 / eps.sqrt()).ceil() + max_norm(a).ceil() + 2.0).min(u32::MAX as f64) as u32
}

/// Certified truncated solver on the ball B_R with killing rate eps.
pub struct TruncatedMassive {
    eps: f64,
    solver: DirichletSolver,
}

impl TruncatedMassive {
    pub fn new(eps: f64, radius: u32) -> Result<Self> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::domain("eps must be positive and finite"));
        }
        if radius > MAX_TRUNC_RADIUS {
            return Err(Error::accuracy(
                "truncation radius (use the exact kernel route)",
                radius as f64,
                MAX_TRUNC_RADIUS as f64,
            ));
        }
        Ok(TruncatedMassive {
            eps,
            solver: DirichletSolver::new(Domain::ball(radius)),
        })
    }

    pub fn radius(&self) -> u32 {
        match self.solver.domain().kind() {
            crate::lattice::DomainKind::EuclideanBall { radius } => radius,
            _ => unreachable!(),
        }
    }

    fn check(&self, a: &PointSet) -> Result<()> {
        if a.is_empty() || !self.solver.domain().contains_all(a) {
            return Err(Error::domain("A must be nonempty and inside the truncation ball"));
        }
        Ok(())
    }

    /// u = P_x[H_A < xi, H_A < T_B] (u = 1 on A) and s = P_x[T_B < xi, T_B < H_A].
    fn solves(&self, a: &PointSet) -> Result<(Vec<f64>, Vec<f64>)> {
        let d = self.solver.domain();
        let diag = vec![1.0 + self.eps; d.len()];
        let mut r_hit = vec![0.0; d.len()];
        let mut r_out = vec![0.0; d.len()];
        for i in 0..d.len() {
            for (k, j) in d.neighbor_indices(i).iter().enumerate() {
                match j {
                    None => r_out[i] += 0.25,
                    Some(_) => {
                        if a.contains(&d.point(i).neighbors()[k]) {
                            r_hit[i] += 0.25;
                        }
                    }
                }
            }
        }
        let mut u = self.solver.solve_with_diag(a, &diag, &r_hit)?;
        for p in a {
            u[d.index_of(*p).unwrap()] = 1.0;
        }
        let s = self.solver.solve_with_diag(a, &diag, &r_out)?;
        Ok((u, s))
    }

    /// P_x[H_A < xi]; the truth lies in [value, value + bound].
    pub fn hit_probability(&self, a: &PointSet, x: LatticePoint) -> Result<Truncated> {
        self.check(a)?;
        let d = self.solver.domain();
        let i = d
            .index_of(x)
            .ok_or_else(|| Error::domain("x outside the truncation ball"))?;
        let (u, s) = self.solves(a)?;
        self.certify(Truncated {
            value: u[i],
            bound: s[i],
            radius: self.radius(),
        })
    }

    /// e_{eps,A}; the truth lies in [value - bound, value] pointwise.
    pub fn equilibrium(&self, a: &PointSet) -> Result<(MeasureOnSet, f64)> {
        self.check(a)?;
        let d = self.solver.domain();
        let (u, s) = self.solves(a)?;
        let mut worst = 0.0f64;
        let mut pairs = Vec::new();
        for p in a {
            let mut ret = 0.0;
            let mut b = 0.0;
            for y in p.neighbors() {
                match d.index_of(y) {
                    Some(j) => {
                        ret += 0.25 * u[j];
                        if !a.contains(&y) {
                            b += 0.25 * s[j];
                        }
                    }
                    None => b += 0.25,
                }
            }
            worst = worst.max(b);
            pairs.push((*p, 1.0 + self.eps - ret));
        }
        self.certify(Truncated {
            value: 0.0,
            bound: worst,
            radius: self.radius(),
        })?;
        Ok((MeasureOnSet::from_pairs(pairs), worst))
    }

    fn certify(&self, t: Truncated) -> Result<Truncated> {
        if t.bound > TRUNC_BOUND_LIMIT {
            return Err(Error::accuracy("massive truncation bound", t.bound, TRUNC_BOUND_LIMIT));
        }
        Ok(t)
    }
}

/// P_{eps,x}[H_A < inf] by the certified truncated solve.
pub fn massive_hit_probability(eps: f64, a: &PointSet, x: LatticePoint, trunc_radius: Option<u32>) -> Result<Truncated> {
    let r = trunc_radius.unwrap_or_else(|| default_trunc_radius(eps, a).max(x.norm().ceil() as u32 + 2));
    TruncatedMassive::new(eps, r)?.hit_probability(a, x)
}

/// e_{eps,A} by the certified truncated solve, with its bound.
pub fn massive_equilibrium(eps: f64, a: &PointSet, trunc_radius: Option<u32>) -> Result<(MeasureOnSet, f64)> {
    let r = trunc_radius.unwrap_or_else(|| default_trunc_radius(eps, a));
    TruncatedMassive::new(eps, r)?.equilibrium(a)
}

/// (2 log N / pi)^2 sum_x e_{eps_N,A}(x) P_x[H_0 = inf] on the canonical schedule.
#[derive(Clone, Debug, Serialize)]
pub struct MassiveCapacity {
    pub n: u32,
    pub eps: f64,
    pub value: f64,
    /// (2 log N / pi) sum_x (g(0,0) - g(0,x)) e(x).
    pub exponent_form: f64,
}

pub fn capacity_massive(a: &PointSet, n: u32) -> Result<MassiveCapacity> {
    if !a.contains(&ORIGIN) {
        return Err(Error::domain("A must contain the origin"));
    }
    let reg = MassiveRegime::canonical(n)?;
    let pot = MassivePotential::new(reg.eps)?;
    let e = pot.equilibrium(a)?;
    let g00 = pot.g0()?;
    let mut sum = 0.0;
    let mut diff = 0.0;
    for (x, w) in e.iter() {
        let gx = pot.g(ORIGIN, x)?;
        sum += w * (1.0 - gx / g00);
        diff += w * (g00 - gx);
    }
    let s = reg.log_scale();
    Ok(MassiveCapacity {
        n,
        eps: reg.eps,
        value: s * s * sum,
        exponent_form: s * diff,
    })
}

/// Rows (N, eps, value, error estimate) of a massive capacity scan.
pub fn massive_capacity_scan(a: &PointSet, radii: &[u32]) -> Result<Vec<(u32, f64, f64, f64)>> {
    let mut out = Vec::new();
    let mut prev: Option<(u32, f64)> = None;
    for &n in radii {
        let c = capacity_massive(a, n)?;
        let (pn, pv) = match prev {
            Some(p) => p,
            None => {
                let half = (n / 2).max(2);
                (half, capacity_massive(a, half)?.value)
            }
        };
        out.push((n, c.eps, c.value, crate::dirichlet::log_richardson_error(pv, pn, c.value, n)));
        prev = Some((n, c.value));
    }
    Ok(out)
}

/// exp(-u (sum e_{eps,A} - e_{eps,{0}}(0))).
pub fn pinned_vacancy_exact(eps: f64, a: &PointSet, u: f64) -> Result<f64> {
    if !(u >= 0.0) {
        return Err(Error::domain("u must be nonnegative"));
    }
    Ok((-u * MassivePotential::new(eps)?.pinned_exponent(a)?).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::point_set;

    #[test]
    fn single_point_equilibrium_is_inverse_green() {
        let p = MassivePotential::new(0.01).unwrap();
        let e = p.equilibrium(&point_set([(0, 0)])).unwrap();
        assert!((e.total() * p.g0().unwrap() - 1.0).abs() < 1e-12);
        let (t, bound) = massive_equilibrium(0.01, &point_set([(0, 0)]), None).unwrap();
        assert!(bound < 1e-6);
        assert!((t.total() / e.total() - 1.0).abs() < 1e-5, "{} {}", t.total(), e.total());
    }

    #[test]
    fn hit_probability_routes_agree() {
        let a = point_set([(0, 0), (1, 0), (0, 2)]);
        let p = MassivePotential::new(0.05).unwrap();
        let tr = TruncatedMassive::new(0.05, 60).unwrap();
        for x in [(3, 1), (-2, 4), (5, 0), (1, 1)] {
            let x = LatticePoint::from(x);
            let exact = p.hit_probability(&a, x).unwrap();
            let t = tr.hit_probability(&a, x).unwrap();
            assert!(((t.value - exact) / exact).abs() < 1e-5, "{x}: {} vs {exact}", t.value);
        }
    }

    #[test]
    fn pinned_forms_agree() {
        let a = point_set([(0, 0), (1, 0), (1, 1)]);
        let p = MassivePotential::new(1e-4).unwrap();
        let e1 = p.pinned_exponent(&a).unwrap();
        let e2 = p.pinned_exponent_rewritten(&a).unwrap();
        assert!(((e1 - e2) / e1).abs() < 1e-6);
        assert!((pinned_vacancy_exact(1e-4, &point_set([(0, 0)]), 3.0).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn escape_probability_tends_to_one_under_heavy_killing() {
        let eps = 1e4;
        let e = MassivePotential::new(eps).unwrap().equilibrium(&point_set([(0, 0)])).unwrap();
        assert!((e.total() / (1.0 + eps) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn single_point_equilibrium_has_the_log_scaling() {
        let errs: Vec<f64> = [64u32, 128, 256]
            .iter()
            .map(|&n| {
                let reg = MassiveRegime::canonical(n).unwrap();
                let e = MassivePotential::new(reg.eps).unwrap().equilibrium(&point_set([(0, 0)])).unwrap();
                (reg.log_scale() * e.total() - 1.0).abs()
            })
            .collect();
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
    }

    #[test]
    fn huge_radius_is_an_accuracy_error() {
        assert!(matches!(TruncatedMassive::new(1e-6, 10_000), Err(Error::Accuracy { .. })));
    }
}
