use std::sync::Arc;

use super::{Experiment, ExperimentReport, ReportBuilder, DEFAULT_THRESHOLD};
use crate::config::Params;
use crate::dirichlet::{avoid_function, MeasureOnSet};
use crate::error::{Error, Result};
use crate::gaussian::{build_spec, shift_function, FieldKind, ShiftKind};
use crate::lattice::{max_norm, Domain, LatticePoint, PointSet, ORIGIN};
use crate::registry::Named;
use crate::rng::{replicas, stream, tags};
use crate::solver::DirichletSolver;
use crate::soup::dirichlet::DirichletSoup;
use crate::soup::tilted::{level_for_local_times, tilted_laplace_exact, TiltedSoup, TiltedWalkKernel};
use crate::stats::{Moments, VarianceMoments};

/// Per-replica values of both sides of an isomorphism at the probes.
pub(crate) struct Sides {
    pub left: Vec<Vec<f64>>,
    pub right: Vec<Vec<f64>>,
}

/// Second moments, cross moments and Laplace transforms of both sides.
pub(crate) fn compare_sides(rb: &mut ReportBuilder, prefix: &str, probes: &[LatticePoint], s: &Sides, duals: &[Vec<f64>]) {
    let m = probes.len();
    let col = |rows: &[Vec<f64>], f: &dyn Fn(&[f64]) -> f64| -> Moments { rows.iter().map(|r| f(r)).collect() };
    for i in 0..m {
        for j in i..m {
            let f = move |r: &[f64]| r[i] * r[j];
            let (l, r) = (col(&s.left, &f), col(&s.right, &f));
            rb.compare(
                format!("{prefix}E[side_x side_y] x={} y={} left vs right", probes[i], probes[j]),
                l.mean(),
                l.stderr(),
                r.mean(),
                r.stderr(),
            );
        }
    }
    for (d, theta) in duals.iter().enumerate() {
        let f = move |r: &[f64]| (-r.iter().zip(theta).map(|(x, t)| x * t).sum::<f64>()).exp();
        let (l, r) = (col(&s.left, &f), col(&s.right, &f));
        rb.compare(format!("{prefix}Laplace dual point {d} left vs right"), l.mean(), l.stderr(), r.mean(), r.stderr());
    }
}

pub(crate) fn duals(p: &Params, m: usize) -> Result<Vec<Vec<f64>>> {
    p.raw("duals")?
        .split('|')
        .map(|s| {
            let v: Vec<f64> = s
                .split(',')
                .map(|t| t.trim().parse().map_err(|_| Error::domain(format!("invalid dual `{s}`"))))
                .collect::<Result<_>>()?;
            if v.len() != m {
                return Err(Error::domain("each dual point needs one value per probe"));
            }
            Ok(v)
        })
        .collect()
}

/// Left: L + phi~^2/2 from a soup and an independent pinned field.
/// Right: (phi~ + h)^2/2 from another independent pinned field.
pub struct RayKnightFinite;

impl Named for RayKnightFinite {
    fn name(&self) -> &'static str {
        "rayknight-finite"
    }
    fn describe(&self) -> &'static str {
        "pinned isomorphism in a box: L + phi^2/2 against (phi + h)^2/2"
    }
}

impl Experiment for RayKnightFinite {
    fn parameters(&self) -> Vec<(&'static str, &'static str, &'static str)> {
        vec![
            ("n", "8", "box radius"),
            ("u", "1", "level"),
            ("k", "0,0", "pinning set K"),
            ("probes", "1,0;2,1;-3,2", "probe points outside K"),
            ("duals", "0.3,0.3,0.3|1.0,0.5,0.2", "Laplace dual points, `|`-separated"),
            ("replicas", "100000", "samples per side"),
        ]
    }

    fn run(&self, p: &Params, seed: u64) -> Result<ExperimentReport> {
        let n = p.usize("replicas")?;
        let u = p.f64("u")?;
        let k = p.set("k")?;
        let probes = p.points("probes")?;
        if probes.iter().any(|x| k.contains(x)) {
            return Err(Error::domain("probes must lie outside K"));
        }
        let domain = Domain::ball(p.u32("n")?);
        let solver = DirichletSolver::new(domain.clone());
        let mut a = k.clone();
        a.extend(probes.iter().copied());
        let soup = DirichletSoup::new(&solver, &k, &a)?;
        let hk = avoid_function(&solver, &k)?;
        // window: probes followed by the points of K
        let mut window = probes.clone();
        window.extend(k.iter().copied());
        let kind = if k == PointSet::from([ORIGIN]) {
            FieldKind::PinnedBox(p.u32("n")?)
        } else {
            FieldKind::General {
                k: k.clone(),
                kp: domain.clone(),
            }
        };
        let spec = build_spec(kind, &window)?;
        let shift = shift_function(
            &ShiftKind::General {
                k: k.clone(),
                kp: domain.clone(),
            },
            u,
            &window,
        )?;
        let m = probes.len();
        let duals = duals(p, m)?;
        let mut rb = ReportBuilder::new(self.name(), seed, n, DEFAULT_THRESHOLD);

        let left = replicas(seed, tags::SOUP, n, |rng, i| -> Result<Vec<f64>> {
            let (_, occ) = soup.sample_occupation(rng, u, &window)?;
            let mut f = vec![0.0; window.len()];
            spec.sample_into(&mut stream(seed, tags::FIELD, i as u64), &mut f);
            Ok(occ.iter().zip(&f).map(|(l, x)| l + 0.5 * x * x).chain(occ.iter().copied()).collect())
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        let right = replicas(seed, tags::FIELD_RIGHT, n, |rng, _| {
            let mut f = vec![0.0; window.len()];
            spec.sample_into(rng, &mut f);
            f.iter().zip(&shift.values).map(|(x, h)| 0.5 * (x + h).powi(2)).collect::<Vec<_>>()
        });
        let w = window.len();
        for (i, x) in probes.iter().enumerate() {
            let l: Moments = left.iter().map(|r| r[w + i]).collect();
            let target = u * hk.at(*x).powi(2);
            rb.stat(format!("E[L_x] x={x}"), l.mean(), l.stderr(), target);
        }
        // points of K: both sides vanish identically
        let zero_left = left.iter().all(|r| r[m..w].iter().all(|v| *v == 0.0) && r[w + m..].iter().all(|v| *v == 0.0));
        let zero_right = right.iter().all(|r| r[m..].iter().all(|v| *v == 0.0));
        rb.check(
            "both sides vanish on K",
            zero_left && zero_right,
            format!("left {zero_left}; right {zero_right}"),
        );
        let sides = Sides {
            left: left.iter().map(|r| r[..m].to_vec()).collect(),
            right: right.iter().map(|r| r[..m].to_vec()).collect(),
        };
        compare_sides(&mut rb, "", &probes, &sides, &duals);
        Ok(rb.finish())
    }
}

/// Tilted-soup local times against the infinite-volume pinned isomorphism.
pub struct RayKnightInfinite;

impl Named for RayKnightInfinite {
    fn name(&self) -> &'static str {
        "rayknight-infinite"
    }
    fn describe(&self) -> &'static str {
        "tilted soup local times: means alpha a^2, fluctuation variance 2a, Laplace oracle"
    }
}

impl Experiment for RayKnightInfinite {
    fn parameters(&self) -> Vec<(&'static str, &'static str, &'static str)> {
        vec![
            ("probes", "1,0;2,0", "window points (A = {0} + window)"),
            ("alpha_mean", "4", "alpha for the mean and Laplace checks"),
            ("alpha_var", "64", "alpha for the fluctuation variance check"),
            ("replicas_mean", "20000", "soups at alpha_mean"),
            ("replicas_var", "4000", "soups at alpha_var"),
            ("guard", "16", "guard ball radius"),
            ("strategy", "exact-return", "continuation outside the guard: exact-return or truncate"),
            ("max_bound", "1e-4", "largest acceptable truncation bound"),
            ("mean_tol", "0.05", "relative tolerance on E[L]/alpha against a^2"),
            ("var_tol", "0.10", "relative tolerance on the fluctuation variance against 2a"),
            ("v_values", "0.3,0.2", "V on the probes for the Laplace check"),
        ]
    }

    fn run(&self, p: &Params, seed: u64) -> Result<ExperimentReport> {
        let probes = p.points("probes")?;
        if probes.iter().any(|x| x.is_origin()) {
            return Err(Error::domain("probes must avoid the origin"));
        }
        let window: PointSet = probes.iter().copied().collect();
        let mut a = window.clone();
        a.insert(ORIGIN);
        let guard = p.u32("guard")?;
        let max_bound = p.f64("max_bound")?;
        let kernel = Arc::new(TiltedWalkKernel::with_radius(guard, max_norm(&a).ceil() as u32 + 1)?);
        let soup = TiltedSoup::new(kernel.clone(), &a, &window, &p.str("strategy")?)?;
        let probes: Vec<LatticePoint> = soup.window().to_vec();
        let av: Vec<f64> = probes.iter().map(|x| kernel.a(*x)).collect();
        let (n1, n2) = (p.usize("replicas_mean")?, p.usize("replicas_var")?);
        let mut rb = ReportBuilder::new(self.name(), seed, n1 + n2, DEFAULT_THRESHOLD);
        rb.check(
            "guard truncation bound",
            soup.truncation_bound() <= max_bound,
            format!("{} with bound {:.3e} (limit {max_bound:.1e})", p.str("strategy")?, soup.truncation_bound()),
        );
        let (mean_tol, var_tol) = (p.f64("mean_tol")?, p.f64("var_tol")?);
        let vals: Vec<f64> = p.list("v_values")?;
        if vals.len() != probes.len() {
            return Err(Error::domain("v_values needs one value per probe"));
        }

        let alpha = p.f64("alpha_mean")?;
        let level = level_for_local_times(alpha);
        let occ = replicas(seed, tags::TILTED, n1, |rng, _| soup.sample_occupation(rng, level, max_bound).map(|(_, o)| o))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        for (i, x) in probes.iter().enumerate() {
            let m: Moments = occ.iter().map(|o| o[i] / alpha).collect();
            let target = av[i] * av[i];
            rb.stat(format!("E[L_x]/alpha x={x} alpha={alpha}"), m.mean(), m.stderr(), target);
            let rel = (m.mean() / target - 1.0).abs();
            rb.check(
                format!("E[L_x]/alpha within {mean_tol} of a(x)^2 at x={x}"),
                rel <= mean_tol,
                format!("relative deviation {rel:.4}"),
            );
        }
        let v = MeasureOnSet::from_pairs(probes.iter().copied().zip(vals.iter().copied()));
        let exact = tilted_laplace_exact(&v, &a, level, kernel.potential())?;
        let lap: Moments = occ
            .iter()
            .map(|o| (-o.iter().zip(&vals).map(|(l, w)| l * w).sum::<f64>()).exp())
            .collect();
        rb.stat(format!("E[exp(-sum V L)] alpha={alpha}"), lap.mean(), lap.stderr(), exact);

        let alpha = p.f64("alpha_var")?;
        let level = level_for_local_times(alpha);
        let occ = replicas(seed, tags::TILTED | 0x100, n2, |rng, _| {
            soup.sample_occupation(rng, level, max_bound).map(|(_, o)| o)
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
        for (i, x) in probes.iter().enumerate() {
            let mut vm = VarianceMoments::default();
            let s = (2.0 * alpha).sqrt() * av[i];
            occ.iter().for_each(|o| vm.push((o[i] - alpha * av[i] * av[i]) / s));
            let target = 2.0 * av[i];
            rb.stat(
                format!("Var[(L_x - alpha a^2)/(sqrt(2 alpha) a)] x={x} alpha={alpha}"),
                vm.variance(),
                vm.variance_stderr(),
                target,
            );
            let rel = (vm.variance() / target - 1.0).abs();
            rb.check(
                format!("fluctuation variance within {var_tol} of 2a(x) at x={x}"),
                rel <= var_tol,
                format!("relative deviation {rel:.4}"),
            );
        }
        Ok(rb.finish())
    }
}
