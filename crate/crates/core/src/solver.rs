//! Linear solves for (D - P) on a finite domain with absorbing exterior.
//!
//! P is the simple-walk transition operator, D a diagonal (identity unless
//! a potential or a mass is present). Vertices in a killed set are held at 0.

use std::sync::{Arc, OnceLock};

use nalgebra::{linalg::Cholesky, DMatrix, Dyn};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::{Domain, PointSet};

/// Below this many unknowns the dense Cholesky path is used.
pub const DENSE_LIMIT: usize = 2000;
/// Killed sets up to this size reuse the cached full-domain factor.
const WOODBURY_LIMIT: usize = 48;
const CHUNK: usize = 4096;
const NONE: u32 = u32::MAX;

/// Solver for Dirichlet problems on one domain.
///
/// Immutable after construction apart from a lazily built dense factor;
/// concurrent solves are safe.
#[derive(Debug)]
pub struct DirichletSolver {
    domain: Arc<Domain>,
    cg_tol: f64,
    dense: OnceLock<Option<Arc<Cholesky<f64, Dyn>>>>,
}

impl DirichletSolver {
    pub fn new(domain: Arc<Domain>) -> Self {
        Self::with_tolerance(domain, 1e-12)
    }

    /// `cg_tol` is the relative residual target of the iterative path.
    pub fn with_tolerance(domain: Arc<Domain>, cg_tol: f64) -> Self {
        DirichletSolver {
            domain,
            cg_tol,
            dense: OnceLock::new(),
        }
    }

    pub fn domain(&self) -> &Arc<Domain> {
        &self.domain
    }

    pub fn is_dense(&self) -> bool {
        self.domain.len() < DENSE_LIMIT
    }

    fn active_mask(&self, killed: &PointSet) -> Vec<bool> {
        let mut active = vec![true; self.domain.len()];
        for p in killed {
            if let Some(i) = self.domain.index_of(*p) {
                active[i] = false;
            }
        }
        active
    }

    fn full_factor(&self) -> Result<Arc<Cholesky<f64, Dyn>>> {
        self.dense
            .get_or_init(|| {
                let all: Vec<usize> = (0..self.domain.len()).collect();
                dense_factor(&self.domain, &all, None).map(Arc::new)
            })
            .clone()
            .ok_or_else(|| Error::Solver("dense factorization failed".into()))
    }

    /// Solves (I - P) u = rhs off `killed`, u = 0 on `killed`.
    pub fn solve(&self, killed: &PointSet, rhs: &[f64]) -> Result<Vec<f64>> {
        Ok(self
            .solve_many(killed, std::slice::from_ref(&rhs.to_vec()))?
            .pop()
            .unwrap())
    }

    /// Several right-hand sides against the same killed set.
    pub fn solve_many(&self, killed: &PointSet, rhss: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let n = self.domain.len();
        for b in rhss {
            if b.len() != n {
                return Err(Error::domain("right-hand side length differs from domain size"));
            }
        }
        let active = self.active_mask(killed);
        let kill_idx: Vec<usize> = (0..n).filter(|&i| !active[i]).collect();
        if !self.is_dense() {
            return rhss
                .iter()
                .map(|b| cg(&self.domain, &active, None, b, self.cg_tol))
                .collect();
        }
        if kill_idx.len() <= WOODBURY_LIMIT {
            let chol = self.full_factor()?;
            return woodbury(&chol, n, &kill_idx, rhss);
        }
        let keep: Vec<usize> = (0..n).filter(|&i| active[i]).collect();
        dense_sub_solve(&self.domain, &keep, None, rhss)
    }

    /// Solves (diag - P) u = rhs off `killed`, u = 0 on `killed`.
    pub fn solve_with_diag(&self, killed: &PointSet, diag: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.domain.len();
        if diag.len() != n || rhs.len() != n {
            return Err(Error::domain("vector length differs from domain size"));
        }
        if diag.iter().any(|d| !(*d >= 1.0)) {
            return Err(Error::domain("diagonal entries must be >= 1"));
        }
        let active = self.active_mask(killed);
        if self.is_dense() {
            let keep: Vec<usize> = (0..n).filter(|&i| active[i]).collect();
            let mut v = dense_sub_solve(&self.domain, &keep, Some(diag), &[rhs.to_vec()])?;
            return Ok(v.pop().unwrap());
        }
        cg(&self.domain, &active, Some(diag), rhs, self.cg_tol)
    }
}

fn assemble(domain: &Domain, keep: &[usize], diag: Option<&[f64]>) -> DMatrix<f64> {
    let mut pos = vec![usize::MAX; domain.len()];
    for (k, &i) in keep.iter().enumerate() {
        pos[i] = k;
    }
    let m = keep.len();
    let nbr = domain.raw_neighbors();
    let mut a = DMatrix::<f64>::zeros(m, m);
    for (k, &i) in keep.iter().enumerate() {
        a[(k, k)] = diag.map_or(1.0, |d| d[i]);
        for &j in &nbr[i] {
            if j != NONE && pos[j as usize] != usize::MAX {
                a[(k, pos[j as usize])] = -0.25;
            }
        }
    }
    a
}

fn dense_factor(domain: &Domain, keep: &[usize], diag: Option<&[f64]>) -> Option<Cholesky<f64, Dyn>> {
    Cholesky::new(assemble(domain, keep, diag))
}

fn dense_sub_solve(
    domain: &Domain,
    keep: &[usize],
    diag: Option<&[f64]>,
    rhss: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    let n = domain.len();
    if keep.is_empty() {
        return Ok(rhss.iter().map(|_| vec![0.0; n]).collect());
    }
    let chol = dense_factor(domain, keep, diag)
        .ok_or_else(|| Error::Solver("dense factorization failed".into()))?;
    let mut b = DMatrix::<f64>::zeros(keep.len(), rhss.len());
    for (c, r) in rhss.iter().enumerate() {
        for (k, &i) in keep.iter().enumerate() {
            b[(k, c)] = r[i];
        }
    }
    let x = chol.solve(&b);
    Ok((0..rhss.len())
        .map(|c| {
            let mut u = vec![0.0; n];
            for (k, &i) in keep.iter().enumerate() {
                u[i] = x[(k, c)];
            }
            u
        })
        .collect())
}

/// Killed rows via the capacitance matrix of the cached full factor G:
/// u = G b - G[:,K] G[K,K]^{-1} (G b)[K].
fn woodbury(
    chol: &Cholesky<f64, Dyn>,
    n: usize,
    kill: &[usize],
    rhss: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    let mut b = DMatrix::<f64>::zeros(n, rhss.len());
    for (c, r) in rhss.iter().enumerate() {
        for i in 0..n {
            b[(i, c)] = r[i];
        }
        for &i in kill {
            b[(i, c)] = 0.0;
        }
    }
    let mut gb = chol.solve(&b);
    if !kill.is_empty() {
        let mut e = DMatrix::<f64>::zeros(n, kill.len());
        for (k, &i) in kill.iter().enumerate() {
            e[(i, k)] = 1.0;
        }
        let gk = chol.solve(&e);
        let gkk = DMatrix::from_fn(kill.len(), kill.len(), |r, c| gk[(kill[r], c)]);
        let rhs = DMatrix::from_fn(kill.len(), rhss.len(), |r, c| gb[(kill[r], c)]);
        let lam = Cholesky::new(gkk)
            .ok_or_else(|| Error::Solver("capacitance matrix not positive definite".into()))?
            .solve(&rhs);
        gb -= &gk * lam;
        for &i in kill {
            for c in 0..rhss.len() {
                gb[(i, c)] = 0.0;
            }
        }
    }
    Ok((0..rhss.len())
        .map(|c| gb.column(c).iter().copied().collect())
        .collect())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    // fixed chunking keeps the summation order independent of thread count
    let parts: Vec<f64> = a
        .par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(u, v)| u * v).sum::<f64>())
        .collect();
    parts.iter().sum()
}

fn apply(domain: &Domain, active: &[bool], diag: Option<&[f64]>, x: &[f64], y: &mut [f64]) {
    let nbr = domain.raw_neighbors();
    y.par_chunks_mut(CHUNK).enumerate().for_each(|(c, ys)| {
        let base = c * CHUNK;
        for (k, yi) in ys.iter_mut().enumerate() {
            let i = base + k;
            if !active[i] {
                *yi = 0.0;
                continue;
            }
            let mut s = 0.0;
            for &j in &nbr[i] {
                if j != NONE {
                    s += x[j as usize];
                }
            }
            *yi = diag.map_or(1.0, |d| d[i]) * x[i] - 0.25 * s;
        }
    });
}

/// Jacobi-preconditioned conjugate gradients.
fn cg(domain: &Domain, active: &[bool], diag: Option<&[f64]>, b: &[f64], tol: f64) -> Result<Vec<f64>> {
    let n = domain.len();
    let mut x = vec![0.0; n];
    let mut r: Vec<f64> = (0..n).map(|i| if active[i] { b[i] } else { 0.0 }).collect();
    let bnorm = dot(&r, &r).sqrt();
    if bnorm == 0.0 {
        return Ok(x);
    }
    let minv: Vec<f64> = (0..n).map(|i| 1.0 / diag.map_or(1.0, |d| d[i])).collect();
    let mut z: Vec<f64> = r.iter().zip(&minv).map(|(a, m)| a * m).collect();
    let mut p = z.clone();
    let mut q = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let max_iter = 20 * n + 1000;
    for _ in 0..max_iter {
        apply(domain, active, diag, &p, &mut q);
        let alpha = rz / dot(&p, &q);
        x.par_iter_mut().zip(&p).for_each(|(xi, pi)| *xi += alpha * pi);
        r.par_iter_mut().zip(&q).for_each(|(ri, qi)| *ri -= alpha * qi);
        if dot(&r, &r).sqrt() <= tol * bnorm {
            return Ok(x);
        }
        z.par_iter_mut()
            .zip(&r)
            .zip(&minv)
            .for_each(|((zi, ri), mi)| *zi = ri * mi);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.par_iter_mut().zip(&z).for_each(|(pi, zi)| *pi = zi + beta * *pi);
    }
    Err(Error::Solver(format!(
        "conjugate gradients did not reach relative residual {tol:e} in {max_iter} iterations"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{point_set, LatticePoint, ORIGIN};

    #[test]
    fn b1_green_at_origin() {
        let s = DirichletSolver::new(Domain::ball(1));
        let d = s.domain().clone();
        let mut b = vec![0.0; d.len()];
        let o = d.index_of(ORIGIN).unwrap();
        b[o] = 1.0;
        let u = s.solve(&PointSet::new(), &b).unwrap();
        assert!((u[o] - 4.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn dense_and_cg_agree() {
        let d = Domain::ball(12);
        let dense = DirichletSolver::new(d.clone());
        let k = point_set([(0, 0), (1, 0), (3, -2)]);
        let b: Vec<f64> = (0..d.len()).map(|i| d.exterior_degree(i) as f64 / 4.0).collect();
        let u1 = dense.solve(&k, &b).unwrap();
        let active = dense.active_mask(&k);
        let u2 = cg(&d, &active, None, &b, 1e-13).unwrap();
        let keep: Vec<usize> = (0..d.len()).filter(|&i| active[i]).collect();
        let u3 = dense_sub_solve(&d, &keep, None, std::slice::from_ref(&b)).unwrap().pop().unwrap();
        for i in 0..d.len() {
            assert!((u1[i] - u2[i]).abs() < 1e-11);
            assert!((u1[i] - u3[i]).abs() < 1e-12);
        }
        assert_eq!(u1[d.index_of(LatticePoint::new(1, 0)).unwrap()], 0.0);
    }

    #[test]
    fn diag_solve_matches_cg() {
        let d = Domain::ball(6);
        let s = DirichletSolver::new(d.clone());
        let diag: Vec<f64> = (0..d.len()).map(|i| 1.0 + 0.1 * (i % 3) as f64).collect();
        let b = vec![1.0; d.len()];
        let k = point_set([(0, 0)]);
        let u1 = s.solve_with_diag(&k, &diag, &b).unwrap();
        let u2 = cg(&d, &s.active_mask(&k), Some(&diag), &b, 1e-14).unwrap();
        for i in 0..d.len() {
            assert!((u1[i] - u2[i]).abs() < 1e-12);
        }
    }
}
