use super::rayknight::{compare_sides, duals, Sides};
use super::soups::CHI_SQUARE_LEVEL;
use super::{Experiment, ExperimentReport, ReportBuilder, DEFAULT_THRESHOLD};
use crate::config::Params;
use crate::error::{Error, Result};
use crate::gaussian::{build_spec, shift_function, FieldKind, ShiftKind};
use crate::lattice::{PointSet, ORIGIN};
use crate::massive::MassivePotential;
use crate::registry::Named;
use crate::rng::{replicas, stream, tags};
use crate::soup::massive::MassiveSoup;
use crate::stats::{chi_square_poisson, ks_test, proportion, Moments};

/// Vacancy, thinning and count laws of the massive soup.
pub struct MassiveVacancy;

impl Named for MassiveVacancy {
    fn name(&self) -> &'static str {
        "massive-vacancy"
    }
    fn describe(&self) -> &'static str {
        "massive soup: vacancy, pinned vacancy, thinning rate, count and lifetime laws"
    }
}

impl Experiment for MassiveVacancy {
    fn parameters(&self) -> Vec<(&'static str, &'static str, &'static str)> {
        vec![
            ("eps", "0.01", "killing rate"),
            ("a", "0,0;1,0", "defining set A (contains 0)"),
            ("u", "2", "level"),
            ("replicas", "20000", "soups of each kind"),
        ]
    }

    fn run(&self, p: &Params, seed: u64) -> Result<ExperimentReport> {
        let n = p.usize("replicas")?;
        let eps = p.f64("eps")?;
        let u = p.f64("u")?;
        let a = p.set("a")?;
        if !a.contains(&ORIGIN) {
            return Err(Error::domain("A must contain the origin"));
        }
        let pot = MassivePotential::shared(eps)?;
        let soup = MassiveSoup::new(pot.clone(), &a)?;
        let mut rb = ReportBuilder::new(self.name(), seed, n, DEFAULT_THRESHOLD);

        let e1 = pot.pinned_exponent(&a)?;
        let e2 = pot.pinned_exponent_rewritten(&a)?;
        rb.check(
            "pinned exponent: direct and rewritten forms",
            ((e1 - e2) / e1).abs() < 1e-6,
            format!("{e1:.12} vs {e2:.12}"),
        );

        let free = replicas(seed, tags::MASSIVE, n, |rng, _| soup.sample(rng, u))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let vac = free.iter().filter(|s| s.is_vacant(&a)).count() as u64;
        let (pv, se) = proportion(vac, n as u64);
        rb.stat("vacancy", pv, se, soup.vacancy_probability(u));
        let counts: Vec<u64> = free.iter().map(|s| s.len() as u64).collect();
        let c = chi_square_poisson(&counts, u * soup.rate())?;
        rb.check(
            "count ~ Poisson(u sum e)",
            c.passes(CHI_SQUARE_LEVEL),
            format!("chi2={:.2}; dof={}; p={:.4}", c.statistic, c.dof, c.p_value),
        );
        let lifetimes: Vec<f64> = free
            .iter()
            .flat_map(|s| s.trajectories.iter().map(|(t, _)| t.forward.lifetime()))
            .collect();
        let ks = ks_test(&lifetimes, |t| 1.0 - (-eps * t.max(0.0)).exp());
        rb.check(
            "forward lifetime ~ Exp(eps)",
            ks.p_value >= CHI_SQUARE_LEVEL,
            format!("n={}; D={:.4}; p={:.4}", lifetimes.len(), ks.statistic, ks.p_value),
        );

        let pinned = replicas(seed, tags::MASSIVE | 0x100, n, |rng, _| soup.sample_pinned(rng, u))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let hits0 = pinned
            .iter()
            .any(|(s, _)| s.trajectories.iter().any(|(t, _)| t.visits(ORIGIN)));
        rb.check("pinned trajectories avoid the origin", !hits0, format!("violations: {hits0}"));
        let vac = pinned.iter().filter(|(s, _)| s.is_vacant(&a)).count() as u64;
        let (pv, se) = proportion(vac, n as u64);
        rb.stat("pinned vacancy", pv, se, soup.pinned_vacancy_probability(u)?);
        let accepted: u64 = pinned.iter().map(|(s, _)| s.len() as u64).sum();
        let rejected: u64 = pinned.iter().map(|(_, r)| *r as u64).sum();
        let (rr, se) = proportion(rejected, accepted + rejected);
        rb.stat("pinned rejection rate", rr, se, 1.0 - soup.pinned_rate()? / soup.rate());
        Ok(rb.finish())
    }
}

/// Moment and Laplace checks of the massive isomorphisms, unpinned and pinned.
pub struct MassiveRayKnight;

impl Named for MassiveRayKnight {
    fn name(&self) -> &'static str {
        "massive-rayknight"
    }
    fn describe(&self) -> &'static str {
        "massive isomorphisms: L + phi^2/2 against (phi + shift)^2/2, unpinned and pinned"
    }
}

impl Experiment for MassiveRayKnight {
    fn parameters(&self) -> Vec<(&'static str, &'static str, &'static str)> {
        vec![
            ("eps", "0.05", "killing rate"),
            ("u", "1", "level"),
            ("probes", "1,0;1,1;-2,1", "probe points (A = {0} + probes)"),
            ("duals", "0.3,0.3,0.3|1.0,0.5,0.2", "Laplace dual points, `|`-separated"),
            ("replicas", "50000", "samples per side and variant"),
        ]
    }

    fn run(&self, p: &Params, seed: u64) -> Result<ExperimentReport> {
        let n = p.usize("replicas")?;
        let eps = p.f64("eps")?;
        let u = p.f64("u")?;
        let probes = p.points("probes")?;
        if probes.iter().any(|x| x.is_origin()) {
            return Err(Error::domain("probes must avoid the origin"));
        }
        let mut a: PointSet = probes.iter().copied().collect();
        a.insert(ORIGIN);
        let pot = MassivePotential::shared(eps)?;
        let soup = MassiveSoup::new(pot.clone(), &a)?;
        let duals = duals(p, probes.len())?;
        let mut rb = ReportBuilder::new(self.name(), seed, n, DEFAULT_THRESHOLD);
        for pinned in [false, true] {
            let tag = if pinned { "pinned" } else { "unpinned" };
            let kind = if pinned { FieldKind::MassivePinned(eps) } else { FieldKind::Massive(eps) };
            let spec = build_spec(kind, &probes)?;
            let shift: Vec<f64> = if pinned {
                shift_function(&ShiftKind::Massive(eps), u, &probes)?.values
            } else {
                vec![(2.0 * u).sqrt(); probes.len()]
            };
            let base = if pinned { 0x200 } else { 0 };
            let left = replicas(seed, tags::MASSIVE | base, n, |rng, i| -> Result<(Vec<f64>, Vec<f64>)> {
                let o = soup.sample_occupation(rng, u, &probes, pinned)?;
                let mut f = vec![0.0; probes.len()];
                spec.sample_into(&mut stream(seed, tags::FIELD | base, i as u64), &mut f);
                let side = o.occupation.iter().zip(&f).map(|(l, x)| l + 0.5 * x * x).collect();
                Ok((side, o.occupation))
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
            let right = replicas(seed, tags::FIELD_RIGHT | base, n, |rng, _| {
                let mut f = vec![0.0; probes.len()];
                spec.sample_into(rng, &mut f);
                f.iter().zip(&shift).map(|(x, h)| 0.5 * (x + h).powi(2)).collect::<Vec<_>>()
            });
            for (i, x) in probes.iter().enumerate() {
                let m: Moments = left.iter().map(|(_, o)| o[i]).collect();
                let target = shift[i] * shift[i] / 2.0;
                rb.stat(format!("{tag} E[L_x] x={x}"), m.mean(), m.stderr(), target);
            }
            let sides = Sides {
                left: left.into_iter().map(|(s, _)| s).collect(),
                right,
            };
            compare_sides(&mut rb, &format!("{tag} "), &probes, &sides, &duals);
        }
        Ok(rb.finish())
    }
}
