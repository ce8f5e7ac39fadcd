//! The soup of eps-killed walks entering A, and its conditioning on
//! leaving the origin vacant.

use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use super::EntryLaw;
use crate::dirichlet::MeasureOnSet;
use crate::error::{Error, Result};
use crate::lattice::{max_norm, LatticePoint, PointSet, ORIGIN};
use crate::massive::MassivePotential;
use crate::rng::{exp1, poisson};
use crate::trajectory::{BidirectionalTrajectory, KilledTrajectory, SoupParams, SoupSample};

/// Half-width beyond A of the square on which the backward transform is tabulated.
pub const DEFAULT_TRANSFORM_MARGIN: i32 = 16;
/// Rejection attempts allowed per trajectory before a budget error.
pub const REJECTION_BUDGET: usize = 1_000_000;

/// Runs the unconditioned killed walk from `x`, feeding (site, hold) to
/// `visit` until death or until `stop` returns true on arrival at a site.
/// Returns true iff the walk died.
fn run_killed<R: Rng + ?Sized>(
    rng: &mut R,
    eps: f64,
    x: LatticePoint,
    mut stop: impl FnMut(LatticePoint) -> bool,
    mut visit: impl FnMut(LatticePoint, f64),
) -> bool {
    let rate = 1.0 + eps;
    let p_die = eps / rate;
    let mut y = x;
    loop {
        visit(y, exp1(rng) / rate);
        if rng.random::<f64>() < p_die {
            return true;
        }
        y = y.neighbors()[rng.random_range(0..4)];
        if stop(y) {
            return false;
        }
    }
}

/// Occupation and count summary of one soup realization.
#[derive(Clone, Debug, Default, Serialize)]
pub struct MassiveOccupation {
    pub count: usize,
    pub occupation: Vec<f64>,
    /// Trajectories discarded for visiting the origin (pinned soups only).
    pub rejected: usize,
    pub vacant: bool,
}

/// Precomputed laws for repeated sampling with fixed (eps, A).
pub struct MassiveSoup {
    pot: Arc<MassivePotential>,
    a: PointSet,
    e: MeasureOnSet,
    entry: EntryLaw,
    margin: i32,
    /// P_y[H_A = inf] on the square |y|_inf <= |A|_inf + margin + 1.
    h: HashMap<LatticePoint, f64>,
}

impl MassiveSoup {
    pub fn new(pot: Arc<MassivePotential>, a: &PointSet) -> Result<Self> {
        Self::with_margin(pot, a, DEFAULT_TRANSFORM_MARGIN)
    }

    pub fn with_margin(pot: Arc<MassivePotential>, a: &PointSet, margin: i32) -> Result<Self> {
        if a.is_empty() {
            return Err(Error::domain("A must be nonempty"));
        }
        let e = pot.equilibrium(a)?;
        let r = max_norm(a).ceil() as i32 + margin + 1;
        let mut h = HashMap::new();
        for x1 in -r..=r {
            for x2 in -r..=r {
                let y = LatticePoint::new(x1, x2);
                let v = if a.contains(&y) { 0.0 } else { 1.0 - pot.hit_with(&e, y)? };
                h.insert(y, v);
            }
        }
        Ok(MassiveSoup {
            entry: EntryLaw::new(&e)?,
            pot,
            a: a.clone(),
            e,
            margin: r - 1,
            h,
        })
    }

    pub fn eps(&self) -> f64 {
        self.pot.eps()
    }

    pub fn equilibrium(&self) -> &MeasureOnSet {
        &self.e
    }

    /// nu(W_A) = sum_x e_{eps,A}(x).
    pub fn rate(&self) -> f64 {
        self.e.total()
    }

    /// nu(W_A) - nu(W_0), the rate of trajectories entering A but avoiding 0.
    pub fn pinned_rate(&self) -> Result<f64> {
        if !self.a.contains(&ORIGIN) {
            return Err(Error::domain("A must contain the origin"));
        }
        Ok(self.rate() - 1.0 / self.pot.g0()?)
    }

    pub fn vacancy_probability(&self, u: f64) -> f64 {
        (-u * self.rate()).exp()
    }

    pub fn pinned_vacancy_probability(&self, u: f64) -> Result<f64> {
        Ok((-u * self.pinned_rate()?).exp())
    }

    fn inside(&self, y: LatticePoint) -> bool {
        y.x1.abs().max(y.x2.abs()) <= self.margin
    }

    /// Unconditioned killed walk from `x`.
    pub fn sample_forward<R: Rng + ?Sized>(&self, rng: &mut R, x: LatticePoint) -> KilledTrajectory {
        let mut t = KilledTrajectory {
            killed: true,
            ..Default::default()
        };
        run_killed(rng, self.eps(), x, |_| false, |y, h| {
            t.sites.push(y);
            t.holds.push(h);
        });
        t
    }

    /// Killed walk from `x` in A conditioned on never returning to A; the
    /// hold at `x` is recorded as 0.
    pub fn sample_backward<R: Rng + ?Sized>(&self, rng: &mut R, x: LatticePoint) -> Result<KilledTrajectory> {
        let mut t = KilledTrajectory {
            sites: vec![x],
            holds: vec![0.0],
            killed: true,
        };
        self.run_backward(rng, x, |y, h| {
            t.sites.push(y);
            t.holds.push(h);
        })?;
        Ok(t)
    }

    /// Streams the backward part after the entry point.
    fn run_backward<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        x: LatticePoint,
        mut visit: impl FnMut(LatticePoint, f64),
    ) -> Result<()> {
        let eps = self.eps();
        let rate = 1.0 + eps;
        let mut y = x;
        let mut first = true;
        loop {
            if !first {
                visit(y, exp1(rng) / rate);
            }
            first = false;
            // kill with weight eps, jump to z with weight h(z)/4
            let nb = y.neighbors();
            let w = nb.map(|z| 0.25 * self.h[&z]);
            let total = eps + w.iter().sum::<f64>();
            let mut r = rng.random::<f64>() * total;
            if r < eps {
                return Ok(());
            }
            r -= eps;
            let mut k = 3;
            for (j, wj) in w.iter().enumerate() {
                if r < *wj {
                    k = j;
                    break;
                }
                r -= wj;
            }
            y = nb[k];
            if !self.inside(y) {
                break;
            }
        }
        // exact rejection: unconditioned paths from y resampled until they avoid A
        let mut buf: Vec<(LatticePoint, f64)> = Vec::new();
        for _ in 0..REJECTION_BUDGET {
            buf.clear();
            let died = run_killed(rng, eps, y, |z| self.a.contains(&z), |z, h| buf.push((z, h)));
            if died {
                for (z, h) in buf.drain(..) {
                    visit(z, h);
                }
                return Ok(());
            }
        }
        Err(Error::Budget {
            what: "massive backward rejection".into(),
            acceptance: 0.0,
        })
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<BidirectionalTrajectory> {
        let x = self.entry.sample(rng).expect("positive rate");
        let backward = self.sample_backward(rng, x)?;
        let forward = self.sample_forward(rng, x);
        Ok(BidirectionalTrajectory {
            backward,
            entry: x,
            forward,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, u: f64) -> Result<SoupSample> {
        self.sample_inner(rng, u, false).map(|(s, _)| s)
    }

    /// The soup conditioned on 0 being vacant, with the number of rejected draws.
    pub fn sample_pinned<R: Rng + ?Sized>(&self, rng: &mut R, u: f64) -> Result<(SoupSample, usize)> {
        self.sample_inner(rng, u, true)
    }

    fn sample_inner<R: Rng + ?Sized>(&self, rng: &mut R, u: f64, pinned: bool) -> Result<(SoupSample, usize)> {
        if !(u >= 0.0) {
            return Err(Error::domain("u must be nonnegative"));
        }
        let rate = if pinned { self.pinned_rate()? } else { self.rate() };
        let n = poisson(rng, u * rate);
        let mut trajectories = Vec::with_capacity(n as usize);
        let mut rejected = 0;
        for _ in 0..n {
            let label = u * rng.random::<f64>();
            let t = loop {
                let t = self.draw(rng)?;
                if pinned && t.visits(ORIGIN) {
                    rejected += 1;
                    if rejected > REJECTION_BUDGET {
                        return Err(Error::Budget {
                            what: "pinned massive rejection".into(),
                            acceptance: 0.0,
                        });
                    }
                    continue;
                }
                break t;
            };
            trajectories.push((t, label));
        }
        let sample = SoupSample {
            trajectories,
            params: SoupParams {
                k: if pinned { PointSet::from([ORIGIN]) } else { PointSet::new() },
                a: self.a.clone(),
                u,
                description: format!("massive eps={}", self.eps()),
            },
        };
        Ok((sample, rejected))
    }

    /// Count, probe occupations and vacancy of A without storing paths.
    pub fn sample_occupation<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        u: f64,
        probes: &[LatticePoint],
        pinned: bool,
    ) -> Result<MassiveOccupation> {
        if !(u >= 0.0) {
            return Err(Error::domain("u must be nonnegative"));
        }
        let rate = if pinned { self.pinned_rate()? } else { self.rate() };
        let n = poisson(rng, u * rate) as usize;
        let slot: HashMap<LatticePoint, usize> = probes.iter().enumerate().map(|(i, p)| (*p, i)).collect();
        let mut out = MassiveOccupation {
            count: n,
            occupation: vec![0.0; probes.len()],
            rejected: 0,
            vacant: n == 0,
        };
        let mut local = vec![0.0; probes.len()];
        for _ in 0..n {
            loop {
                local.iter_mut().for_each(|v| *v = 0.0);
                let mut hit0 = false;
                let x = self.entry.sample(rng).expect("positive rate");
                hit0 |= x.is_origin();
                let mut rec = |y: LatticePoint, h: f64| {
                    hit0 |= y.is_origin();
                    if let Some(&k) = slot.get(&y) {
                        local[k] += h;
                    }
                };
                self.run_backward(rng, x, &mut rec)?;
                run_killed(rng, self.eps(), x, |_| false, &mut rec);
                if pinned && hit0 {
                    out.rejected += 1;
                    if out.rejected > REJECTION_BUDGET {
                        return Err(Error::Budget {
                            what: "pinned massive rejection".into(),
                            acceptance: 0.0,
                        });
                    }
                    continue;
                }
                break;
            }
            for (o, l) in out.occupation.iter_mut().zip(&local) {
                *o += l;
            }
        }
        Ok(out)
    }
}

pub fn sample_massive_soup<R: Rng + ?Sized>(rng: &mut R, eps: f64, a: &PointSet, u: f64) -> Result<SoupSample> {
    MassiveSoup::new(MassivePotential::shared(eps)?, a)?.sample(rng, u)
}

pub fn sample_massive_soup_pinned<R: Rng + ?Sized>(rng: &mut R, eps: f64, a: &PointSet, u: f64) -> Result<SoupSample> {
    if !a.contains(&ORIGIN) {
        return Err(Error::domain("A must contain the origin"));
    }
    MassiveSoup::new(MassivePotential::shared(eps)?, a)?
        .sample_pinned(rng, u)
        .map(|(s, _)| s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::point_set;
    use crate::rng::{stream, tags};

    #[test]
    fn backward_never_returns_and_pinned_avoids_origin() {
        let a = point_set([(0, 0), (1, 0)]);
        let soup = MassiveSoup::new(MassivePotential::shared(0.05).unwrap(), &a).unwrap();
        let mut rng = stream(1, tags::TEST, 0);
        for _ in 0..500 {
            let b = soup.sample_backward(&mut rng, ORIGIN).unwrap();
            assert!(b.sites[1..].iter().all(|s| !a.contains(s)));
        }
        for _ in 0..50 {
            let (s, _) = soup.sample_pinned(&mut rng, 3.0).unwrap();
            assert!(!s.trajectories.iter().any(|(t, _)| t.visits(ORIGIN)));
        }
        assert!(soup.sample(&mut rng, 0.0).unwrap().is_empty());
    }

    #[test]
    fn mean_occupation_on_a_equals_level() {
        // E[L_x] = u for x in A
        let a = point_set([(0, 0), (1, 0)]);
        let soup = MassiveSoup::new(MassivePotential::shared(0.2).unwrap(), &a).unwrap();
        let mut rng = stream(2, tags::TEST, 0);
        let (n, u) = (20_000, 1.5);
        let mut s = [0.0; 2];
        let mut s2 = [0.0; 2];
        let probes = [ORIGIN, LatticePoint::new(1, 0)];
        for _ in 0..n {
            let o = soup.sample_occupation(&mut rng, u, &probes, false).unwrap();
            for k in 0..2 {
                s[k] += o.occupation[k];
                s2[k] += o.occupation[k] * o.occupation[k];
            }
        }
        for k in 0..2 {
            let m = s[k] / n as f64;
            let se = ((s2[k] / n as f64 - m * m) / n as f64).sqrt();
            assert!((m - u).abs() < 4.0 * se, "{k}: {m} ± {se}");
        }
    }
}
