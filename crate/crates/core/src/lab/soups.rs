use std::collections::BTreeMap;

use super::{laplace_exact, Experiment, ExperimentReport, ReportBuilder, DEFAULT_THRESHOLD};
use crate::config::{format_points, parse_points, Params};
use crate::dirichlet::{rho_measure, MeasureOnSet};
use crate::error::{Error, Result};
use crate::lattice::{Domain, LatticePoint, PointSet};
use crate::registry::Named;
use crate::rng::{replicas, tags};
use crate::solver::DirichletSolver;
use crate::soup::dirichlet::{DirichletSoup, ExcursionChain};
use crate::stats::{chi_square_gof, chi_square_poisson, chi_square_two_sample, proportion, Moments};

/// Level of the chi-square checks.
pub const CHI_SQUARE_LEVEL: f64 = 0.01;

fn point_set(s: &str) -> Result<PointSet> {
    Ok(parse_points(s)?.into_iter().collect())
}

/// Empirical vacancy against exp(-u rho(Z^2)).
pub struct VacancyExperiment;

impl Named for VacancyExperiment {
    fn name(&self) -> &'static str {
        "vacancy"
    }
    fn describe(&self) -> &'static str {
        "empirical vacancy of sampled Dirichlet soups against the exact formula"
    }
}

impl Experiment for VacancyExperiment {
    fn parameters(&self) -> Vec<(&'static str, &'static str, &'static str)> {
        vec![
            (
                "configs",
                "0,0/ball:1/0,0;1,0/1|0,0/ball:4/0,0;1,0;1,1/2|/ball:8/0,0;0,1/0.5",
                "K/K'/A/u tuples separated by `|`",
            ),
            ("replicas", "100000", "soups per configuration"),
        ]
    }

    fn run(&self, p: &Params, seed: u64) -> Result<ExperimentReport> {
        let n = p.usize("replicas")?;
        let mut rb = ReportBuilder::new(self.name(), seed, n, DEFAULT_THRESHOLD);
        for (ci, cfg) in p.raw("configs")?.split('|').enumerate() {
            let parts: Vec<&str> = cfg.split('/').collect();
            if parts.len() != 4 {
                return Err(Error::domain(format!("config `{cfg}` must be K/K'/A/u")));
            }
            let k = point_set(parts[0])?;
            let solver = DirichletSolver::new(Domain::parse(parts[1])?);
            let a = point_set(parts[2])?;
            let u: f64 = parts[3].parse().map_err(|_| Error::domain("invalid u"))?;
            let soup = DirichletSoup::new(&solver, &k, &a)?;
            let vac = replicas(seed, (tags::SOUP << 8) | ci as u64, n, |rng, _| {
                soup.sample(rng, u).map(|s| s.is_vacant(&a))
            })
            .into_iter()
            .collect::<Result<Vec<bool>>>()?;
            let (est, se) = proportion(vac.iter().filter(|v| **v).count() as u64, n as u64);
            rb.stat(
                format!("vacancy[K={};K'={};A={};u={u}]", format_points(&k), parts[1], format_points(&a)),
                est,
                se,
                soup.vacancy_probability(u),
            );
        }
        Ok(rb.finish())
    }
}

/// Excursion-chain sampler against the direct Poisson sampler.
pub struct ExcursionEquivalence;

impl Named for ExcursionEquivalence {
    fn name(&self) -> &'static str {
        "excursion-equivalence"
    }
    fn describe(&self) -> &'static str {
        "single-chain excursion sampler reproduces the soup's count and entry laws"
    }
}

impl Experiment for ExcursionEquivalence {
    fn parameters(&self) -> Vec<(&'static str, &'static str, &'static str)> {
        vec![
            ("n", "8", "box radius of K'"),
            ("k", "0,0", "avoided set K"),
            ("a", "0,0;1,0;0,2;-1,-1", "defining set A"),
            ("u", "1", "level"),
            ("replicas", "100000", "runs of each sampler"),
        ]
    }

    fn run(&self, p: &Params, seed: u64) -> Result<ExperimentReport> {
        let n = p.usize("replicas")?;
        let domain = Domain::ball(p.u32("n")?);
        let k = p.set("k")?;
        let a = p.set("a")?;
        let u = p.f64("u")?;
        let solver = DirichletSolver::new(domain.clone());
        let chain = ExcursionChain::new(domain, &k, &a)?;
        let soup = DirichletSoup::new(&solver, &k, &a)?;
        let mut rb = ReportBuilder::new(self.name(), seed, n, DEFAULT_THRESHOLD);

        let runs = replicas(seed, tags::EXCURSION, n, |rng, _| chain.sample(rng, u, 10_000))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let direct = replicas(seed, tags::SOUP, n, |rng, _| soup.sample(rng, u))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;

        // excursions from x*: the first attempt of every run is one Poisson draw
        let counts: Vec<u64> = runs.iter().map(|r| r.excursion_counts[0]).collect();
        let lam = u * chain.lambda_star() / 4.0;
        let c = chi_square_poisson(&counts, lam)?;
        rb.check(
            "excursion count ~ Poisson(u lambda*/4)",
            c.passes(CHI_SQUARE_LEVEL),
            format!("lambda={lam:.4}; chi2={:.2}; dof={}; p={:.4}", c.statistic, c.dof, c.p_value),
        );
        let attempts: usize = runs.iter().map(|r| r.attempts).sum();
        rb.note(format!("whole-run acceptance {:.4}", n as f64 / attempts as f64));

        // number of trajectories entering A per run
        let ce: Vec<u64> = runs.iter().map(|r| r.forward.len() as u64).collect();
        let cd: Vec<u64> = direct.iter().map(|s| s.len() as u64).collect();
        let max = ce.iter().chain(&cd).copied().max().unwrap_or(0) as usize;
        let hist = |v: &[u64]| {
            let mut h = vec![0u64; max + 1];
            v.iter().for_each(|x| h[*x as usize] += 1);
            h
        };
        let rho = rho_measure(&k, &solver, &a)?;
        let cc = chi_square_two_sample(&hist(&ce), &hist(&cd))?;
        rb.check(
            "entering count: excursion vs direct",
            cc.passes(CHI_SQUARE_LEVEL),
            format!("chi2={:.2}; dof={}; p={:.4}", cc.statistic, cc.dof, cc.p_value),
        );
        let cp = chi_square_poisson(&ce, u * rho.total())?;
        rb.check(
            "entering count (excursion) ~ Poisson(u rho total)",
            cp.passes(CHI_SQUARE_LEVEL),
            format!("chi2={:.2}; dof={}; p={:.4}", cp.statistic, cp.dof, cp.p_value),
        );

        // entry points
        let support: Vec<LatticePoint> = rho.iter().filter(|(_, w)| *w > 0.0).map(|(x, _)| x).collect();
        let entries = |it: &mut dyn Iterator<Item = LatticePoint>| -> Result<Vec<u64>> {
            let mut m: BTreeMap<LatticePoint, u64> = support.iter().map(|x| (*x, 0)).collect();
            for x in it {
                *m.get_mut(&x)
                    .ok_or_else(|| Error::domain(format!("entry {x} outside supp rho")))? += 1;
            }
            Ok(m.into_values().collect())
        };
        let he = entries(&mut runs.iter().flat_map(|r| r.forward.iter().map(|t| t.sites[0])))?;
        let hd = entries(&mut direct.iter().flat_map(|s| s.trajectories.iter().map(|(t, _)| t.entry)))?;
        let probs: Vec<f64> = support.iter().map(|x| rho.get(*x)).collect();
        if support.len() > 1 {
            let c2 = chi_square_two_sample(&he, &hd)?;
            rb.check(
                "entry points: excursion vs direct",
                c2.passes(CHI_SQUARE_LEVEL),
                format!("chi2={:.2}; dof={}; p={:.4}", c2.statistic, c2.dof, c2.p_value),
            );
            let g = chi_square_gof(&he, &probs)?;
            rb.check(
                "entry points (excursion) ~ normalized rho",
                g.passes(CHI_SQUARE_LEVEL),
                format!("chi2={:.2}; dof={}; p={:.4}", g.statistic, g.dof, g.p_value),
            );
        }
        let (total_e, total_d) = (he.iter().sum::<u64>() as f64, hd.iter().sum::<u64>() as f64);
        for (i, x) in support.iter().enumerate() {
            rb.value(
                format!("entry frequency {x} excursion / direct"),
                he[i] as f64 / total_e,
                hd[i] as f64 / total_d,
            );
        }
        Ok(rb.finish())
    }
}

/// Monte Carlo Laplace functional of occupation times against the exact value.
pub struct LaplaceExperiment;

impl Named for LaplaceExperiment {
    fn name(&self) -> &'static str {
        "laplace"
    }
    fn describe(&self) -> &'static str {
        "E[exp(-sum V L)] of the Dirichlet soup against the Feynman-Kac oracle"
    }
}

impl Experiment for LaplaceExperiment {
    fn parameters(&self) -> Vec<(&'static str, &'static str, &'static str)> {
        vec![
            ("n", "64", "box radius"),
            ("u", "5", "level"),
            ("k", "0,0", "avoided set K"),
            ("v_points", "1,0;0,1;-1,-1;2,0;1,2", "support of V (at most 5 points)"),
            ("v_values", "0.5,0.3,1.0,0.2,0.7", "values of V"),
            ("replicas", "100000", "soups"),
        ]
    }

    fn run(&self, p: &Params, seed: u64) -> Result<ExperimentReport> {
        let n = p.usize("replicas")?;
        let u = p.f64("u")?;
        let k = p.set("k")?;
        let pts = p.points("v_points")?;
        let vals: Vec<f64> = p.list("v_values")?;
        if pts.len() != vals.len() || pts.is_empty() || pts.len() > 5 {
            return Err(Error::domain("V needs 1 to 5 points with one value each"));
        }
        let v = MeasureOnSet::from_pairs(pts.iter().copied().zip(vals.iter().copied()));
        let mut a = k.clone();
        a.extend(pts.iter().copied());
        let solver = DirichletSolver::new(Domain::ball(p.u32("n")?));
        let soup = DirichletSoup::new(&solver, &k, &a)?;
        let exact = laplace_exact(&v, &k, &solver, &a, u)?;
        let mut rb = ReportBuilder::new(self.name(), seed, n, DEFAULT_THRESHOLD);

        let big = MeasureOnSet::from_pairs(a.iter().map(|x| (*x, 1e6)));
        let limit = laplace_exact(&big, &k, &solver, &a, u)?;
        let vac = soup.vacancy_probability(u);
        rb.check(
            "V -> infinity recovers the vacancy probability",
            ((limit - vac) / vac).abs() < 1e-5,
            format!("laplace(1e6 1_A)={limit:.8}; vacancy={vac:.8}"),
        );
        let zero = MeasureOnSet::from_pairs(a.iter().map(|x| (*x, 0.0)));
        let one = laplace_exact(&zero, &k, &solver, &a, u)?;
        rb.check("V = 0 gives 1", (one - 1.0).abs() < 1e-12, format!("{one}"));

        let samples = replicas(seed, tags::SOUP, n, |rng, _| {
            soup.sample_occupation(rng, u, &pts)
                .map(|(_, occ)| (-occ.iter().zip(&vals).map(|(l, w)| l * w).sum::<f64>()).exp())
        })
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
        let m: Moments = samples.into_iter().collect();
        rb.stat("E[exp(-sum V L)]", m.mean(), m.stderr(), exact);
        Ok(rb.finish())
    }
}
