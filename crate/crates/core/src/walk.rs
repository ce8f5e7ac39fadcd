//! Nearest-neighbour chains on a domain given by per-site jump tables.

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::lattice::{Domain, DomainFunction};
use crate::rng::exp1;

/// Cumulative jump probabilities per site, in neighbour order; jumps to an
/// exterior neighbour end the path.
#[derive(Clone, Debug)]
pub struct JumpTable {
    domain: Arc<Domain>,
    cum: Vec<[f64; 4]>,
}

impl JumpTable {
    /// The simple random walk killed on exiting the domain.
    pub fn simple(domain: Arc<Domain>) -> Self {
        let cum = vec![[0.25, 0.5, 0.75, 1.0]; domain.len()];
        JumpTable { domain, cum }
    }

    /// Doob transform p(y,z) = h(z) / (4 h(y)); sites with h = 0 get no row.
    pub fn h_transform(h: &DomainFunction) -> Self {
        let d = h.domain.clone();
        let cum = (0..d.len())
            .map(|i| {
                let hi = h.at_index(i);
                let mut row = [f64::NAN; 4];
                if hi > 0.0 {
                    let w: Vec<f64> = (0..4).map(|k| h.neighbor_value(i, k).max(0.0)).collect();
                    let s: f64 = w.iter().sum();
                    let mut acc = 0.0;
                    for k in 0..4 {
                        acc += w[k] / s;
                        row[k] = acc;
                    }
                    row[3] = 1.0;
                }
                row
            })
            .collect();
        JumpTable { domain: d, cum }
    }

    pub fn domain(&self) -> &Arc<Domain> {
        &self.domain
    }

    /// Transition probabilities out of site `i`.
    pub fn row(&self, i: usize) -> [f64; 4] {
        let c = self.cum[i];
        [c[0], c[1] - c[0], c[2] - c[1], c[3] - c[2]]
    }

    pub fn has_row(&self, i: usize) -> bool {
        !self.cum[i][0].is_nan()
    }

    /// Rows given directly as probabilities; `None` marks absorbing sites.
    pub fn from_rows(domain: Arc<Domain>, rows: Vec<Option<[f64; 4]>>) -> Self {
        let cum = rows
            .into_iter()
            .map(|r| match r {
                None => [f64::NAN; 4],
                Some(p) => {
                    let s: f64 = p.iter().sum();
                    let mut acc = 0.0;
                    let mut row = [0.0; 4];
                    for k in 0..4 {
                        acc += p[k] / s;
                        row[k] = acc;
                    }
                    row[3] = 1.0;
                    row
                }
            })
            .collect();
        JumpTable { domain, cum }
    }

    /// One jump from site `i`: the new index, or `None` on exit.
    pub fn step<R: Rng + ?Sized>(&self, rng: &mut R, i: usize) -> Result<Option<usize>> {
        let k = self.slot(rng, i)?;
        Ok(self.domain.neighbor_indices(i)[k])
    }

    /// Neighbour slot chosen for one jump from site `i`.
    pub fn slot<R: Rng + ?Sized>(&self, rng: &mut R, i: usize) -> Result<usize> {
        let c = &self.cum[i];
        if c[0].is_nan() {
            return Err(Error::domain(format!(
                "no transition row at {} (conditioning on a null event)",
                self.domain.point(i)
            )));
        }
        let u: f64 = rng.random();
        Ok(if u < c[0] {
            0
        } else if u < c[1] {
            1
        } else if u < c[2] {
            2
        } else {
            3
        })
    }

    /// Runs from `start` until exit with unit-rate holds, reporting each
    /// (site, hold). Returns the number of sites visited.
    pub fn run<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        start: usize,
        mut visit: impl FnMut(usize, f64),
    ) -> Result<usize> {
        let mut i = start;
        let mut n = 0;
        loop {
            visit(i, exp1(rng));
            n += 1;
            match self.step(rng, i)? {
                Some(j) => i = j,
                None => return Ok(n),
            }
        }
    }
}
