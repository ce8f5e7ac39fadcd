use super::{Experiment, ExperimentReport, ReportBuilder, DEFAULT_THRESHOLD};
use crate::config::{format_points, parse_points, Params};
use crate::dirichlet::{capacity, capacity_finite_n, log_richardson_error};
use crate::error::{Error, Result};
use crate::lattice::PointSet;
use crate::massive::capacity_massive;
use crate::registry::Named;

/// Finite-N and massive capacity approximations against the exact capacity.
pub struct CapacityConvergence;

impl Named for CapacityConvergence {
    fn name(&self) -> &'static str {
        "capacity-convergence"
    }
    fn describe(&self) -> &'static str {
        "finite-N and massive capacity formulas converge to cap(A) with decreasing error"
    }
}

/// Strictly decreasing absolute errors, or all numerically zero.
pub(crate) fn decreasing(errs: &[f64]) -> bool {
    errs.iter().all(|e| e.abs() < 1e-12) || errs.windows(2).all(|w| w[1].abs() < w[0].abs())
}

fn sets(p: &Params) -> Result<Vec<PointSet>> {
    p.raw("sets")?
        .split('|')
        .map(|s| {
            let set: PointSet = parse_points(s)?.into_iter().collect();
            if set.is_empty() {
                Err(Error::domain("empty set in `sets`"))
            } else {
                Ok(set)
            }
        })
        .collect()
}

impl Experiment for CapacityConvergence {
    fn parameters(&self) -> Vec<(&'static str, &'static str, &'static str)> {
        vec![
            ("sets", "0,0;1,0|0,0|0,0;1,0;0,1;1,1", "sets separated by `|`, points `x,y;x,y`"),
            ("n_grid", "64,128,256", "box radii N"),
            ("massive", "true", "also tabulate the massive formula on the canonical schedule"),
            ("max_error", "none", "optional bound on |finite-N error| at the largest N"),
        ]
    }

    fn run(&self, p: &Params, seed: u64) -> Result<ExperimentReport> {
        let grid: Vec<u32> = p.list("n_grid")?;
        if grid.is_empty() || grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::domain("n_grid must be increasing and nonempty"));
        }
        let massive = p.raw("massive")? == "true";
        let max_error = match p.raw("max_error")? {
            "none" => None,
            s => Some(s.parse::<f64>().map_err(|_| Error::domain("invalid max_error"))?),
        };
        let mut rb = ReportBuilder::new(self.name(), seed, 0, DEFAULT_THRESHOLD);
        for set in sets(p)? {
            let label = format_points(&set);
            let target = capacity(&set)?.value;
            rb.value(format!("cap[{label}]"), target, target);
            let mut fin = Vec::new();
            let mut mas = Vec::new();
            for &n in &grid {
                let f = capacity_finite_n(&set, n)?.value;
                rb.value(format!("finite[{label}] N={n}"), f, target);
                fin.push((n, f));
                if massive {
                    let m = capacity_massive(&set, n)?.value;
                    rb.value(format!("massive[{label}] N={n}"), m, target);
                    mas.push((n, m));
                }
            }
            let errs = |v: &[(u32, f64)]| v.iter().map(|(_, x)| x - target).collect::<Vec<_>>();
            let fe = errs(&fin);
            rb.check(
                format!("finite[{label}] decreasing error"),
                decreasing(&fe),
                format!("errors {fe:.4?}"),
            );
            if let Some(m) = max_error {
                let last = fe.last().unwrap().abs();
                rb.check(
                    format!("finite[{label}] error at N={} below {m}", grid.last().unwrap()),
                    last < m,
                    format!("|error| = {last:.4}"),
                );
            }
            if massive {
                let me = errs(&mas);
                rb.check(
                    format!("massive[{label}] decreasing error"),
                    decreasing(&me),
                    format!("errors {me:.4?}"),
                );
                // error estimates from the last increment, first one from N/2
                let proxy = |v: &[(u32, f64)], f: &dyn Fn(u32) -> Result<f64>| -> Result<Vec<f64>> {
                    let mut out = Vec::new();
                    for (i, (n, x)) in v.iter().enumerate() {
                        let (pn, px) = if i == 0 { (n / 2, f(n / 2)?) } else { v[i - 1] };
                        out.push(log_richardson_error(px, pn, *x, *n));
                    }
                    Ok(out)
                };
                let pf = proxy(&fin, &|n| capacity_finite_n(&set, n).map(|c| c.value))?;
                let pm = proxy(&mas, &|n| capacity_massive(&set, n).map(|c| c.value))?;
                let agree = fin
                    .iter()
                    .zip(&mas)
                    .zip(pf.iter().zip(&pm))
                    .all(|(((_, f), (_, m)), (ef, em))| (f - m).abs() <= ef + em + 1e-12);
                let detail = fin
                    .iter()
                    .zip(&mas)
                    .zip(pf.iter().zip(&pm))
                    .map(|(((n, f), (_, m)), (ef, em))| format!("N={n}: |diff|={:.4} allowance={:.4}", (f - m).abs(), ef + em))
                    .collect::<Vec<_>>()
                    .join("; ");
                rb.check(format!("finite vs massive[{label}] agreement"), agree, detail);
            }
        }
        Ok(rb.finish())
    }
}
