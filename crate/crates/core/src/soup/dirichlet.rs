//! The soup avoiding K and killed on exiting K', restricted to trajectories
//! entering A.

use std::sync::Arc;

use rand::Rng;

use super::EntryLaw;
use crate::dirichlet::{avoid_function, equilibrium_measure, rho_measure, MeasureOnSet};
use crate::error::{Error, Result};
use crate::lattice::{Domain, DomainFunction, LatticePoint, PointSet};
use crate::rng::{exp1, poisson};
use crate::solver::DirichletSolver;
use crate::trajectory::{BidirectionalTrajectory, KilledTrajectory, SoupParams, SoupSample};
use crate::walk::JumpTable;

/// Precomputed transforms for repeated soup sampling with fixed (K, K', A).
#[derive(Clone, Debug)]
pub struct DirichletSoup {
    k: PointSet,
    a: PointSet,
    domain: Arc<Domain>,
    rho: MeasureOnSet,
    equilibrium: MeasureOnSet,
    entry: EntryLaw,
    h_k: DomainFunction,
    h_a: DomainFunction,
    forward: JumpTable,
    backward: JumpTable,
}

impl DirichletSoup {
    pub fn new(solver: &DirichletSolver, k: &PointSet, a: &PointSet) -> Result<Self> {
        let rho = rho_measure(k, solver, a)?;
        let equilibrium = equilibrium_measure(solver, a)?;
        let h_k = avoid_function(solver, k)?;
        let h_a = avoid_function(solver, a)?;
        Ok(DirichletSoup {
            k: k.clone(),
            a: a.clone(),
            domain: solver.domain().clone(),
            entry: EntryLaw::new(&rho)?,
            forward: JumpTable::h_transform(&h_k),
            backward: JumpTable::h_transform(&h_a),
            rho,
            equilibrium,
            h_k,
            h_a,
        })
    }

    pub fn domain(&self) -> &Arc<Domain> {
        &self.domain
    }

    pub fn rho(&self) -> &MeasureOnSet {
        &self.rho
    }

    pub fn equilibrium(&self) -> &MeasureOnSet {
        &self.equilibrium
    }

    /// h_K(x) = P_x[H_K > T_{K'}].
    pub fn avoid_k(&self) -> &DomainFunction {
        &self.h_k
    }

    pub fn avoid_a(&self) -> &DomainFunction {
        &self.h_a
    }

    pub fn forward_table(&self) -> &JumpTable {
        &self.forward
    }

    /// exp(-u rho(Z^2)).
    pub fn vacancy_probability(&self, u: f64) -> f64 {
        (-u * self.rho.total()).exp()
    }

    fn index(&self, x: LatticePoint) -> Result<usize> {
        self.domain
            .index_of(x)
            .ok_or_else(|| Error::domain(format!("{x} lies outside K'")))
    }

    /// Walk from `x` conditioned to exit K' before hitting K.
    pub fn sample_forward<R: Rng + ?Sized>(&self, rng: &mut R, x: LatticePoint) -> Result<KilledTrajectory> {
        let i = self.index(x)?;
        if !(self.h_k.at_index(i) > 0.0) {
            return Err(Error::domain(format!("P_x[H_K > T] = 0 at {x}")));
        }
        let mut t = KilledTrajectory {
            killed: true,
            ..Default::default()
        };
        let d = &self.domain;
        self.forward.run(rng, i, |j, h| {
            t.sites.push(d.point(j));
            t.holds.push(h);
        })?;
        Ok(t)
    }

    /// Walk from `x` in A conditioned to exit K' before returning to A.
    /// The hold at `x` is recorded as 0; it belongs to the forward part.
    pub fn sample_backward<R: Rng + ?Sized>(&self, rng: &mut R, x: LatticePoint) -> Result<KilledTrajectory> {
        let i = self.index(x)?;
        let mut t = KilledTrajectory {
            sites: vec![x],
            holds: vec![0.0],
            killed: true,
        };
        let w: Vec<f64> = (0..4).map(|k| self.h_a.neighbor_value(i, k)).collect();
        let s: f64 = w.iter().sum();
        if !(s > 0.0) {
            return Err(Error::domain(format!("no escape from A at {x}")));
        }
        let mut r = rng.random::<f64>() * s;
        let mut k = 3;
        for (j, wj) in w.iter().enumerate() {
            if r < *wj {
                k = j;
                break;
            }
            r -= wj;
        }
        if let Some(j) = self.domain.neighbor_indices(i)[k] {
            let d = &self.domain;
            self.backward.run(rng, j, |m, h| {
                t.sites.push(d.point(m));
                t.holds.push(h);
            })?;
        }
        Ok(t)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, u: f64) -> Result<SoupSample> {
        if !(u >= 0.0) {
            return Err(Error::domain("u must be nonnegative"));
        }
        let n = poisson(rng, u * self.rho.total());
        let mut trajectories = Vec::with_capacity(n as usize);
        for _ in 0..n {
            let x = self.entry.sample(rng).expect("positive rate");
            let label = u * rng.random::<f64>();
            let backward = self.sample_backward(rng, x)?;
            let forward = self.sample_forward(rng, x)?;
            trajectories.push((
                BidirectionalTrajectory {
                    backward,
                    entry: x,
                    forward,
                },
                label,
            ));
        }
        Ok(SoupSample {
            trajectories,
            params: SoupParams {
                k: self.k.clone(),
                a: self.a.clone(),
                u,
                description: "dirichlet".into(),
            },
        })
    }

    /// Trajectory count and occupation times at `probes` (forward and
    /// backward parts) without storing paths.
    pub fn sample_occupation<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        u: f64,
        probes: &[LatticePoint],
    ) -> Result<(usize, Vec<f64>)> {
        let slot: Vec<Option<usize>> = probes.iter().map(|p| self.domain.index_of(*p)).collect();
        let mut lookup = vec![usize::MAX; self.domain.len()];
        for (k, s) in slot.iter().enumerate() {
            if let Some(i) = s {
                lookup[*i] = k;
            }
        }
        let mut occ = vec![0.0; probes.len()];
        let n = poisson(rng, u * self.rho.total()) as usize;
        for _ in 0..n {
            let x = self.entry.sample(rng).expect("positive rate");
            let _label = rng.random::<f64>();
            let i = self.index(x)?;
            // backward part: same law as sample_backward, streamed
            let w: Vec<f64> = (0..4).map(|k| self.h_a.neighbor_value(i, k)).collect();
            let s: f64 = w.iter().sum();
            let mut r = rng.random::<f64>() * s;
            let mut k = 3;
            for (j, wj) in w.iter().enumerate() {
                if r < *wj {
                    k = j;
                    break;
                }
                r -= wj;
            }
            if let Some(j) = self.domain.neighbor_indices(i)[k] {
                self.backward.run(rng, j, |m, h| {
                    if lookup[m] != usize::MAX {
                        occ[lookup[m]] += h;
                    }
                })?;
            }
            self.forward.run(rng, i, |m, h| {
                if lookup[m] != usize::MAX {
                    occ[lookup[m]] += h;
                }
            })?;
        }
        Ok((n, occ))
    }
}

pub fn sample_conditioned_forward<R: Rng + ?Sized>(
    rng: &mut R,
    solver: &DirichletSolver,
    k: &PointSet,
    x: LatticePoint,
) -> Result<KilledTrajectory> {
    let h = avoid_function(solver, k)?;
    let i = solver
        .domain()
        .index_of(x)
        .ok_or_else(|| Error::domain(format!("{x} lies outside K'")))?;
    if !(h.at_index(i) > 0.0) {
        return Err(Error::domain(format!("P_x[H_K > T] = 0 at {x}")));
    }
    let table = JumpTable::h_transform(&h);
    let d = solver.domain();
    let mut t = KilledTrajectory {
        killed: true,
        ..Default::default()
    };
    table.run(rng, i, |j, hold| {
        t.sites.push(d.point(j));
        t.holds.push(hold);
    })?;
    Ok(t)
}

pub fn sample_conditioned_backward<R: Rng + ?Sized>(
    rng: &mut R,
    solver: &DirichletSolver,
    a: &PointSet,
    x: LatticePoint,
) -> Result<KilledTrajectory> {
    if !a.contains(&x) {
        return Err(Error::domain("backward part must start in A"));
    }
    DirichletSoup::new(solver, &PointSet::new(), a)?.sample_backward(rng, x)
}

pub fn sample_soup<R: Rng + ?Sized>(
    rng: &mut R,
    k: &PointSet,
    solver: &DirichletSolver,
    a: &PointSet,
    u: f64,
) -> Result<SoupSample> {
    DirichletSoup::new(solver, k, a)?.sample(rng, u)
}

/// exp(-u sum_x rho_A^{K,K'}(x)).
pub fn vacancy_probability(k: &PointSet, solver: &DirichletSolver, a: &PointSet, u: f64) -> Result<f64> {
    Ok((-u * rho_measure(k, solver, a)?.total()).exp())
}

/// Output of the single-chain excursion sampler.
#[derive(Clone, Debug)]
pub struct ExcursionRun {
    /// Post-entrance parts of the accepted run's excursions that enter A.
    pub forward: Vec<KilledTrajectory>,
    /// Number of runs attempted including the accepted one.
    pub attempts: usize,
    /// Excursion counts of every attempted run (Poisson(u lambda/4) each).
    pub excursion_counts: Vec<u64>,
}

/// The chain on K' with the exterior collapsed to one state x*.
#[derive(Clone, Debug)]
pub struct ExcursionChain {
    domain: Arc<Domain>,
    k: PointSet,
    a: PointSet,
    start: EntryLaw,
    lambda_star: f64,
    walk: JumpTable,
}

impl ExcursionChain {
    pub fn new(domain: Arc<Domain>, k: &PointSet, a: &PointSet) -> Result<Self> {
        if !k.is_subset(a) || k == a {
            return Err(Error::domain("need K strictly contained in A"));
        }
        if !domain.contains_all(a) {
            return Err(Error::domain("A must lie inside K'"));
        }
        let lam = MeasureOnSet::from_pairs(
            (0..domain.len())
                .filter(|&i| domain.exterior_degree(i) > 0)
                .map(|i| (domain.point(i), domain.exterior_degree(i) as f64)),
        );
        Ok(ExcursionChain {
            start: EntryLaw::new(&lam)?,
            lambda_star: lam.total(),
            walk: JumpTable::simple(domain.clone()),
            domain,
            k: k.clone(),
            a: a.clone(),
        })
    }

    /// lambda_{x*}: total conductance between K' and x*.
    pub fn lambda_star(&self) -> f64 {
        self.lambda_star
    }

    /// Runs until the local time at x* exceeds lambda_{x*} u / 4, rejecting
    /// whole runs that visit K.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, u: f64, max_attempts: usize) -> Result<ExcursionRun> {
        let threshold = self.lambda_star * u / 4.0;
        let mut counts = Vec::new();
        for attempt in 1..=max_attempts {
            let mut local = exp1(rng);
            let mut n = 0u64;
            let mut forward = Vec::new();
            let mut hit_k = false;
            while local < threshold {
                n += 1;
                let x = self.start.sample(rng).expect("nonempty boundary");
                let mut path = KilledTrajectory {
                    killed: true,
                    ..Default::default()
                };
                let d = &self.domain;
                self.walk
                    .run(rng, d.index_of(x).unwrap(), |j, h| {
                        path.sites.push(d.point(j));
                        path.holds.push(h);
                    })?;
                if path.visits_any(&self.k) {
                    hit_k = true;
                }
                if let Some(pos) = path.sites.iter().position(|p| self.a.contains(p)) {
                    forward.push(KilledTrajectory {
                        sites: path.sites[pos..].to_vec(),
                        holds: path.holds[pos..].to_vec(),
                        killed: true,
                    });
                }
                local += exp1(rng);
            }
            counts.push(n);
            if !hit_k {
                return Ok(ExcursionRun {
                    forward,
                    attempts: attempt,
                    excursion_counts: counts,
                });
            }
        }
        Err(Error::Budget {
            what: "excursion sampler".into(),
            acceptance: 0.0,
        })
    }
}

/// Forward parts of mu_A^u via excursions of the chain on K' and x*.
pub fn sample_soup_via_excursions<R: Rng + ?Sized>(
    rng: &mut R,
    k: &PointSet,
    domain: Arc<Domain>,
    a: &PointSet,
    u: f64,
) -> Result<ExcursionRun> {
    ExcursionChain::new(domain, k, a)?.sample(rng, u, 10_000)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{point_set, ORIGIN};
    use crate::rng::{stream, tags};

    #[test]
    fn b1_forward_single_exterior_jump() {
        let s = DirichletSolver::new(Domain::ball(1));
        let soup = DirichletSoup::new(&s, &point_set([(0, 0)]), &point_set([(0, 0), (1, 0)])).unwrap();
        let mut rng = stream(1, tags::TEST, 0);
        for _ in 0..200 {
            let t = soup.sample_forward(&mut rng, LatticePoint::new(1, 0)).unwrap();
            assert_eq!(t.len(), 1);
            t.validate(false).unwrap();
        }
        assert!(soup.sample_forward(&mut rng, ORIGIN).is_err());
        assert!((soup.vacancy_probability(1.0) - (-9.0f64 / 16.0).exp()).abs() < 1e-14);
    }

    #[test]
    fn backward_never_revisits_a() {
        let s = DirichletSolver::new(Domain::ball(4));
        let a = point_set([(0, 0), (1, 0), (1, 1)]);
        let soup = DirichletSoup::new(&s, &point_set([(0, 0)]), &a).unwrap();
        let mut rng = stream(2, tags::TEST, 0);
        for _ in 0..2000 {
            let t = soup.sample_backward(&mut rng, LatticePoint::new(1, 1)).unwrap();
            t.validate(true).unwrap();
            assert!(t.sites[1..].iter().all(|p| !a.contains(p)));
        }
    }

    #[test]
    fn zero_intensity_is_empty() {
        let s = DirichletSolver::new(Domain::ball(3));
        let mut rng = stream(3, tags::TEST, 0);
        let soup = sample_soup(&mut rng, &point_set([(0, 0)]), &s, &point_set([(0, 0), (1, 0)]), 0.0).unwrap();
        assert!(soup.is_empty());
        let run = sample_soup_via_excursions(&mut rng, &point_set([(0, 0)]), s.domain().clone(), &point_set([(0, 0), (1, 0)]), 0.0).unwrap();
        assert!(run.forward.is_empty());
    }
}
