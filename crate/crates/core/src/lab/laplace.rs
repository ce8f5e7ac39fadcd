use crate::dirichlet::{avoid_function, equilibrium_measure, MeasureOnSet};
use crate::error::{Error, Result};
use crate::lattice::PointSet;
use crate::solver::DirichletSolver;

/// w(x) = E_x[exp(-int_0^T V(X_s) ds); H_K > T] with unit-rate holds:
/// (1 + V(x)) w(x) = (1/4) sum_y w(y) off K, w = 0 on K, w = 1 outside K'.
pub fn feynman_kac(solver: &DirichletSolver, k: &PointSet, v: &MeasureOnSet) -> Result<Vec<f64>> {
    let d = solver.domain();
    if v.iter().any(|(_, w)| !(w >= 0.0)) {
        return Err(Error::domain("V must be nonnegative"));
    }
    let mut diag = vec![1.0; d.len()];
    for (p, w) in v.iter() {
        let i = d
            .index_of(p)
            .ok_or_else(|| Error::domain(format!("supp V point {p} lies outside K'")))?;
        diag[i] += w;
    }
    let rhs: Vec<f64> = (0..d.len()).map(|i| d.exterior_degree(i) as f64 / 4.0).collect();
    solver.solve_with_diag(k, &diag, &rhs)
}

/// E[exp(-sum_x V(x) L_{x,u})] for the soup avoiding K, killed outside K',
/// with defining set A: exp(-u sum_x e_{A,K'}(x) (h_K(x) - w(x))).
pub fn laplace_exact(v: &MeasureOnSet, k: &PointSet, solver: &DirichletSolver, a: &PointSet, u: f64) -> Result<f64> {
    if !k.is_subset(a) || !solver.domain().contains_all(a) {
        return Err(Error::domain("need K within A within K'"));
    }
    if !v.support().is_subset(a) {
        return Err(Error::domain("supp V must lie inside A"));
    }
    if !(u >= 0.0) {
        return Err(Error::domain("u must be nonnegative"));
    }
    let d = solver.domain();
    let e = equilibrium_measure(solver, a)?;
    let h = avoid_function(solver, k)?;
    let w = feynman_kac(solver, k, v)?;
    let mut exponent = 0.0;
    for (x, ex) in e.iter() {
        let i = d.index_of(x).unwrap();
        exponent += ex * (h.values[i] - w[i]);
    }
    Ok((-u * exponent).exp())
}
