//! Exact samplers for the lattice Gaussian fields and their conditional
//! decompositions and deterministic shifts.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::dirichlet::{avoid_function, green_matrix, hitting_distribution};
use crate::error::{Error, Result};
use crate::lattice::{Domain, LatticePoint, PointSet, ORIGIN};
use crate::massive::MassivePotential;
use crate::potential::{potential_kernel, PotentialTable};
use crate::solver::DirichletSolver;

/// Relative eigenvalue tolerance for accepting a covariance as semidefinite.
pub const PSD_TOL: f64 = 1e-10;

/// Which field a covariance describes.
#[derive(Clone, Debug)]
pub enum FieldKind {
    /// g_{B_N}.
    Box(u32),
    /// g_{B_N \ {0}}.
    PinnedBox(u32),
    /// a(x) + a(y) - a(y - x).
    PinnedInfinite,
    /// g_eps.
    Massive(f64),
    /// g_eps conditioned on the value 0 at the origin.
    MassivePinned(f64),
    /// g_{K' \ K}.
    General { k: PointSet, kp: Arc<Domain> },
}

impl fmt::Display for FieldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldKind::Box(n) => write!(f, "box:{n}"),
            FieldKind::PinnedBox(n) => write!(f, "pinned_box:{n}"),
            FieldKind::PinnedInfinite => write!(f, "pinned_infinite"),
            FieldKind::Massive(e) => write!(f, "massive:{e}"),
            FieldKind::MassivePinned(e) => write!(f, "massive_pinned:{e}"),
            FieldKind::General { k, kp } => write!(f, "general(|K|={}, |K'|={})", k.len(), kp.len()),
        }
    }
}

impl FieldKind {
    /// Parses `box:N`, `pinned_box:N`, `pinned_infinite`, `massive:EPS`, `massive_pinned:EPS`.
    pub fn parse(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let int = |a: Option<&str>| -> Result<u32> {
            a.and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::domain(format!("`{s}` needs a positive integer argument")))
        };
        let real = |a: Option<&str>| -> Result<f64> {
            a.and_then(|v| v.parse().ok())
                .filter(|v: &f64| *v > 0.0)
                .ok_or_else(|| Error::domain(format!("`{s}` needs a positive real argument")))
        };
        match name {
            "box" => Ok(FieldKind::Box(int(arg)?)),
            "pinned_box" => Ok(FieldKind::PinnedBox(int(arg)?)),
            "pinned_infinite" => Ok(FieldKind::PinnedInfinite),
            "massive" => Ok(FieldKind::Massive(real(arg)?)),
            "massive_pinned" => Ok(FieldKind::MassivePinned(real(arg)?)),
            _ => Err(Error::domain(format!(
                "unknown field kind `{s}`; expected box:N, pinned_box:N, pinned_infinite, massive:EPS, massive_pinned:EPS"
            ))),
        }
    }

    fn is_pinned_at_origin(&self) -> bool {
        matches!(
            self,
            FieldKind::PinnedBox(_) | FieldKind::PinnedInfinite | FieldKind::MassivePinned(_)
        )
    }
}

/// Lower-triangular factor with symmetric pivoting: cov = L L^T.
#[derive(Clone, Debug)]
pub struct PivotedCholesky {
    /// n x rank, rows in window order.
    pub factor: DMatrix<f64>,
    pub rank: usize,
}

impl PivotedCholesky {
    /// Stops when the largest remaining pivot is below `PSD_TOL` times the
    /// largest diagonal entry; fails if a remaining pivot is clearly negative.
    pub fn new(cov: &DMatrix<f64>) -> Result<Self> {
        let n = cov.nrows();
        let scale = (0..n).map(|i| cov[(i, i)]).fold(0.0f64, f64::max);
        let tol = PSD_TOL * scale.max(f64::MIN_POSITIVE);
        let mut d: Vec<f64> = (0..n).map(|i| cov[(i, i)]).collect();
        let mut done = vec![false; n];
        let mut l = DMatrix::<f64>::zeros(n, n);
        let mut rank = 0;
        while rank < n {
            let (p, dmax) = (0..n)
                .filter(|&i| !done[i])
                .map(|i| (i, d[i]))
                .fold((usize::MAX, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
            if dmax <= tol {
                break;
            }
            done[p] = true;
            let piv = dmax.sqrt();
            for i in 0..n {
                if done[i] && i != p {
                    continue;
                }
                let mut s = cov[(i, p)];
                for k in 0..rank {
                    s -= l[(i, k)] * l[(p, k)];
                }
                l[(i, rank)] = if i == p { piv } else { s / piv };
            }
            for i in 0..n {
                if !done[i] {
                    d[i] -= l[(i, rank)] * l[(i, rank)];
                }
            }
            rank += 1;
        }
        if let Some(bad) = (0..n).filter(|&i| !done[i]).find(|&i| d[i] < -tol) {
            return Err(Error::Numeric(format!(
                "covariance is indefinite: residual pivot {} at row {bad}",
                d[bad]
            )));
        }
        Ok(PivotedCholesky {
            factor: l.columns(0, rank).into_owned(),
            rank,
        })
    }
}

/// Covariance over a window plus its factor.
#[derive(Clone, Debug)]
pub struct GaussianSpec {
    pub kind: FieldKind,
    pub window: Vec<LatticePoint>,
    pub covariance: DMatrix<f64>,
    chol: PivotedCholesky,
}

/// Field values over a window.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Field {
    pub window: Vec<LatticePoint>,
    pub values: Vec<f64>,
}

impl Field {
    pub fn get(&self, p: LatticePoint) -> Option<f64> {
        self.window.iter().position(|q| *q == p).map(|i| self.values[i])
    }
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

/// Covariance a(x) + a(y) - a(y - x) over the window.
pub fn pinned_infinite_covariance(window: &[LatticePoint], table: Option<&PotentialTable>) -> Result<DMatrix<f64>> {
    let a = |p: LatticePoint| -> Result<f64> {
        match table.and_then(|t| t.lookup(p)) {
            Some(v) => Ok(v),
            None => potential_kernel(p, 1e-10).map(|e| e.value),
        }
    };
    let n = window.len();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = a(window[i])? + a(window[j])? - a(window[j] - window[i])?;
        }
    }
    Ok(symmetrize(m))
}

fn massive_covariance(pot: &MassivePotential, window: &[LatticePoint], pinned: bool) -> Result<DMatrix<f64>> {
    let n = window.len();
    let g00 = pot.g0()?;
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut v = pot.g(window[i], window[j])?;
            if pinned {
                v -= pot.g(window[i], ORIGIN)? * pot.g(ORIGIN, window[j])? / g00;
                if window[i].is_origin() || window[j].is_origin() {
                    v = 0.0;
                }
            }
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(m)
}

/// Assembles the covariance of `kind` over `window` and factors it.
pub fn build_spec(kind: FieldKind, window: &[LatticePoint]) -> Result<GaussianSpec> {
    if window.is_empty() {
        return Err(Error::domain("window must be nonempty"));
    }
    let covariance = match &kind {
        FieldKind::Box(n) => green_matrix(&DirichletSolver::new(Domain::ball(*n)), &PointSet::new(), window)?,
        FieldKind::PinnedBox(n) => {
            green_matrix(&DirichletSolver::new(Domain::ball(*n)), &PointSet::from([ORIGIN]), window)?
        }
        FieldKind::General { k, kp } => {
            if !kp.contains_all(k) {
                return Err(Error::domain("K must lie inside K'"));
            }
            green_matrix(&DirichletSolver::new(kp.clone()), k, window)?
        }
        FieldKind::PinnedInfinite => pinned_infinite_covariance(window, None)?,
        FieldKind::Massive(eps) => massive_covariance(&MassivePotential::new(*eps)?, window, false)?,
        FieldKind::MassivePinned(eps) => massive_covariance(&MassivePotential::new(*eps)?, window, true)?,
    };
    GaussianSpec::from_covariance(kind, window.to_vec(), covariance)
}

impl GaussianSpec {
    /// Wraps a precomputed covariance; pinned kinds get exact zeros at the origin.
    pub fn from_covariance(kind: FieldKind, window: Vec<LatticePoint>, mut covariance: DMatrix<f64>) -> Result<Self> {
        if covariance.nrows() != window.len() || covariance.ncols() != window.len() {
            return Err(Error::domain("covariance size differs from the window"));
        }
        covariance = symmetrize(covariance);
        let mut zero: Vec<usize> = Vec::new();
        if kind.is_pinned_at_origin() {
            zero.extend(window.iter().position(|p| p.is_origin()));
        }
        if let FieldKind::General { k, .. } = &kind {
            zero.extend(window.iter().enumerate().filter(|(_, p)| k.contains(p)).map(|(i, _)| i));
        }
        for &i in &zero {
            covariance.row_mut(i).fill(0.0);
            covariance.column_mut(i).fill(0.0);
        }
        let chol = PivotedCholesky::new(&covariance)?;
        Ok(GaussianSpec {
            kind,
            window,
            covariance,
            chol,
        })
    }

    pub fn rank(&self) -> usize {
        self.chol.rank
    }

    pub fn index_of(&self, p: LatticePoint) -> Option<usize> {
        self.window.iter().position(|q| *q == p)
    }

    /// Writes one sample into `out` (window order).
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let l = &self.chol.factor;
        let z: Vec<f64> = (0..self.chol.rank).map(|_| rng.sample(StandardNormal)).collect();
        for (i, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for (k, zk) in z.iter().enumerate() {
                s += l[(i, k)] * zk;
            }
            *o = s;
        }
    }
}

pub fn sample_field<R: Rng + ?Sized>(rng: &mut R, spec: &GaussianSpec) -> Field {
    let mut values = vec![0.0; spec.window.len()];
    spec.sample_into(rng, &mut values);
    Field {
        window: spec.window.clone(),
        values,
    }
}

/// Phi_x(h) = phi_x + P_x[H_0 < T_{B_N}] (h - phi_0) for a box field.
#[derive(Clone, Debug)]
pub struct ConditionalShift {
    window: Vec<LatticePoint>,
    /// Rows: window points; columns: points of K.
    weights: Vec<Vec<f64>>,
    k_index: Vec<usize>,
}

impl ConditionalShift {
    /// Box field on B_N pinned through its value at the origin.
    pub fn for_box(n: u32, window: &[LatticePoint]) -> Result<Self> {
        Self::general(&DirichletSolver::new(Domain::ball(n)), &PointSet::from([ORIGIN]), window)
    }

    /// Phi^K_x = phi_x + sum_{y in K} P_x[H_K < T, X_{H_K} = y] (b_y - phi_y).
    pub fn general(solver: &DirichletSolver, k: &PointSet, window: &[LatticePoint]) -> Result<Self> {
        let d = solver.domain();
        let k_index = k
            .iter()
            .map(|p| {
                window
                    .iter()
                    .position(|q| q == p)
                    .ok_or_else(|| Error::domain(format!("window must contain every point of K ({p})")))
            })
            .collect::<Result<Vec<_>>>()?;
        let hit = hitting_distribution(solver, k)?;
        let weights = window
            .iter()
            .map(|x| {
                k.iter()
                    .map(|y| d.index_of(*x).map_or(0.0, |i| hit[y][i]))
                    .collect()
            })
            .collect();
        Ok(ConditionalShift {
            window: window.to_vec(),
            weights,
            k_index,
        })
    }

    /// The affine map applied to a field sample with boundary values `b`.
    pub fn apply(&self, field: &[f64], b: &[f64]) -> Result<Vec<f64>> {
        if field.len() != self.window.len() || b.len() != self.k_index.len() {
            return Err(Error::domain("field or boundary values have the wrong length"));
        }
        Ok((0..field.len())
            .map(|i| {
                field[i]
                    + self.weights[i]
                        .iter()
                        .zip(&self.k_index)
                        .zip(b)
                        .map(|((w, &j), bj)| w * (bj - field[j]))
                        .sum::<f64>()
            })
            .collect())
    }

    /// Hitting weights P_x[H_K < T, X_{H_K} = y] per window point.
    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }
}

/// The deterministic shift fields of the pinned isomorphisms.
#[derive(Clone, Debug)]
pub enum ShiftKind {
    /// P_x[H_0 > T_{B_N}] sqrt(2u).
    Dirichlet(u32),
    /// P_x[H_K > T_{K'}] sqrt(2u).
    General { k: PointSet, kp: Arc<Domain> },
    /// P_x[H_0 > xi] sqrt(2u).
    Massive(f64),
    /// sqrt(2 alpha) a(x).
    Infinite,
}

/// Evaluates the shift at level `u_or_alpha` over the window.
pub fn shift_function(kind: &ShiftKind, u_or_alpha: f64, window: &[LatticePoint]) -> Result<Field> {
    if !(u_or_alpha >= 0.0) {
        return Err(Error::domain("level must be nonnegative"));
    }
    let s = (2.0 * u_or_alpha).sqrt();
    let values = match kind {
        ShiftKind::Dirichlet(n) => {
            let h = avoid_function(&DirichletSolver::new(Domain::ball(*n)), &PointSet::from([ORIGIN]))?;
            window.iter().map(|x| s * h.at(*x)).collect()
        }
        ShiftKind::General { k, kp } => {
            let h = avoid_function(&DirichletSolver::new(kp.clone()), k)?;
            window.iter().map(|x| s * h.at(*x)).collect()
        }
        ShiftKind::Massive(eps) => {
            let p = MassivePotential::new(*eps)?;
            window
                .iter()
                .map(|x| p.avoid_point(*x, ORIGIN).map(|v| s * v))
                .collect::<Result<Vec<_>>>()?
        }
        ShiftKind::Infinite => window
            .iter()
            .map(|x| potential_kernel(*x, 1e-12).map(|e| s * e.value))
            .collect::<Result<Vec<_>>>()?,
    };
    Ok(Field {
        window: window.to_vec(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, tags};

    fn p(a: i32, b: i32) -> LatticePoint {
        LatticePoint::new(a, b)
    }

    #[test]
    fn spec_examples() {
        let s = build_spec(FieldKind::PinnedInfinite, &[ORIGIN, p(1, 0)]).unwrap();
        assert!((s.covariance[(1, 1)] - 2.0).abs() < 1e-9);
        assert_eq!(s.covariance[(0, 0)], 0.0);
        let b = build_spec(FieldKind::Box(1), &[ORIGIN]).unwrap();
        assert!((b.covariance[(0, 0)] - 4.0 / 3.0).abs() < 1e-12);
        let pb = build_spec(FieldKind::PinnedBox(3), &[ORIGIN, p(1, 0), p(0, 2)]).unwrap();
        assert_eq!(pb.covariance[(0, 0)], 0.0);
        assert_eq!(pb.rank(), 2);
    }

    #[test]
    fn pivoted_cholesky_reproduces_covariance() {
        let w: Vec<LatticePoint> = (-2..=2).flat_map(|i| (-2..=2).map(move |j| p(i, j))).collect();
        let s = build_spec(FieldKind::PinnedBox(4), &w).unwrap();
        let l = &s.chol.factor;
        let diff = (l * l.transpose() - &s.covariance).abs().max();
        assert!(diff < 1e-12, "{diff}");
        let mut rng = stream(0, tags::TEST, 0);
        let f = sample_field(&mut rng, &s);
        assert_eq!(f.get(ORIGIN), Some(0.0));
    }

    #[test]
    fn indefinite_is_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(PivotedCholesky::new(&m), Err(Error::Numeric(_))));
    }

    #[test]
    fn shift_is_deterministic_and_affine() {
        let w = [ORIGIN, p(1, 0), p(2, 1)];
        let c = ConditionalShift::for_box(4, &w).unwrap();
        let f = [0.3, -1.0, 2.0];
        let a = c.apply(&f, &[0.0]).unwrap();
        let b = c.apply(&f, &[1.5]).unwrap();
        assert_eq!(a[0], 0.0);
        let h = avoid_function(&DirichletSolver::new(Domain::ball(4)), &PointSet::from([ORIGIN])).unwrap();
        for i in 0..3 {
            assert!((b[i] - a[i] - (1.0 - h.at(w[i])) * 1.5).abs() < 1e-12);
        }
        let s = shift_function(&ShiftKind::Dirichlet(4), 2.0, &[ORIGIN, p(9, 0)]).unwrap();
        assert_eq!(s.values[0], 0.0);
        assert_eq!(s.values[1], 2.0);
    }
}
