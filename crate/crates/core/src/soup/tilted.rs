//! The infinite-volume soup of walks tilted by the potential kernel:
//! jumps x -> y with probability a(y) / (4 a(x)), never entering 0.
//!
//! Paths are simulated inside a guard ball; what happens after leaving it
//! is handled by a [`Continuation`] strategy.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::Serialize;

use super::EntryLaw;
use crate::dirichlet::{harmonic_measure_kernel, MeasureOnSet};
use crate::error::{Error, Result};
use crate::lattice::{max_norm, Domain, LatticePoint, PointSet, ORIGIN};
use crate::potential::PotentialTable;
use crate::registry::{Named, Registry};
use crate::rng::{exp1, poisson};
use crate::trajectory::KilledTrajectory;
use crate::walk::JumpTable;

/// Vacancy of A at level (pi/2) alpha is exp(-(pi/2) alpha cap(A)).
pub fn level_for_vacancy(alpha: f64) -> f64 {
    PI / 2.0 * alpha
}

/// Local times with E[L_x] = alpha a(x)^2 arise at level alpha.
pub fn level_for_local_times(alpha: f64) -> f64 {
    alpha
}

/// Tilted one-step law on the guard ball B_R.
#[derive(Debug)]
pub struct TiltedWalkKernel {
    potential: Arc<PotentialTable>,
    guard: Arc<Domain>,
    guard_radius: u32,
    jumps: JumpTable,
}

impl TiltedWalkKernel {
    /// `potential` must cover radius `guard_radius + 1`.
    pub fn new(potential: Arc<PotentialTable>, guard_radius: u32) -> Result<Self> {
        if potential.radius() < guard_radius + 1 {
            return Err(Error::domain("potential table smaller than the guard ball"));
        }
        let guard = Domain::ball(guard_radius);
        let rows = guard
            .points()
            .iter()
            .map(|x| {
                if x.is_origin() {
                    None
                } else {
                    Some(x.neighbors().map(|y| potential.value(y)))
                }
            })
            .collect();
        Ok(TiltedWalkKernel {
            jumps: JumpTable::from_rows(guard.clone(), rows),
            potential,
            guard,
            guard_radius,
        })
    }

    /// Builds the potential table as well.
    pub fn with_radius(guard_radius: u32, extra: u32) -> Result<Self> {
        let table = PotentialTable::build(guard_radius + 2 + extra, 1e-13)?;
        Self::new(Arc::new(table), guard_radius)
    }

    pub fn potential(&self) -> &Arc<PotentialTable> {
        &self.potential
    }

    pub fn guard_radius(&self) -> u32 {
        self.guard_radius
    }

    pub fn guard(&self) -> &Arc<Domain> {
        &self.guard
    }

    pub fn a(&self, x: LatticePoint) -> f64 {
        self.potential.value(x)
    }

    /// Transition probabilities from `x` in neighbour order.
    pub fn row(&self, x: LatticePoint) -> Result<[f64; 4]> {
        if x.is_origin() {
            return Err(Error::domain("the tilted walk is not defined at the origin"));
        }
        let ax = self.a(x);
        Ok(x.neighbors().map(|y| self.a(y) / (4.0 * ax)))
    }
}

/// One tilted jump from `x`.
pub fn tilted_step<R: Rng + ?Sized>(rng: &mut R, kernel: &TiltedWalkKernel, x: LatticePoint) -> Result<LatticePoint> {
    let row = kernel.row(x)?;
    let total: f64 = row.iter().sum();
    let mut r = rng.random::<f64>() * total;
    let nb = x.neighbors();
    for k in 0..4 {
        if r < row[k] {
            return Ok(nb[k]);
        }
        r -= row[k];
    }
    Ok(nb[3])
}

/// What to do when a path leaves the guard ball at `z`.
pub trait Continuation: Named + Send + Sync {
    /// The next window point visited, or `None` if the window is never
    /// visited again.
    fn resume(&self, rng: &mut dyn rand::RngCore, z: LatticePoint) -> Result<Option<LatticePoint>>;
    /// Upper bound on the error in window occupation laws.
    fn bound(&self) -> f64;
}

/// Exact return law to the window from the potential kernel.
///
/// For the simple walk from z the hitting distribution f of W' = W + {0}
/// solves sum_y f_y a(y - x) + F = a(z - x) (x in W'), sum_y f_y = 1; the
/// tilted walk then returns to w in W with probability f_w a(w) / a(z).
#[derive(Debug)]
pub struct ExactReturn {
    potential: Arc<PotentialTable>,
    targets: Vec<LatticePoint>,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl ExactReturn {
    pub fn new(potential: Arc<PotentialTable>, window: &PointSet) -> Result<Self> {
        let mut targets: Vec<LatticePoint> = window.iter().copied().filter(|p| !p.is_origin()).collect();
        targets.push(ORIGIN);
        let n = targets.len();
        let mut m = DMatrix::<f64>::zeros(n + 1, n + 1);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = potential.value(targets[j] - targets[i]);
            }
            m[(i, n)] = 1.0;
            m[(n, i)] = 1.0;
        }
        Ok(ExactReturn {
            potential,
            targets,
            lu: m.lu(),
        })
    }

    /// (w, probability of next visiting the window at w) for a tilted walk at z.
    pub fn return_law(&self, z: LatticePoint) -> Result<Vec<(LatticePoint, f64)>> {
        let n = self.targets.len();
        let mut rhs = DVector::<f64>::zeros(n + 1);
        for i in 0..n {
            rhs[i] = self.potential.value(z - self.targets[i]);
        }
        rhs[n] = 1.0;
        let f = self
            .lu
            .solve(&rhs)
            .ok_or_else(|| Error::Solver("singular return system".into()))?;
        let az = self.potential.value(z);
        Ok(self.targets[..n - 1]
            .iter()
            .enumerate()
            .map(|(i, w)| (*w, (f[i] * self.potential.value(*w) / az).max(0.0)))
            .collect())
    }
}

impl Named for ExactReturn {
    fn name(&self) -> &'static str {
        "exact-return"
    }
    fn describe(&self) -> &'static str {
        "sample the next window visit after the guard from the exact return law"
    }
}

impl Continuation for ExactReturn {
    fn resume(&self, rng: &mut dyn rand::RngCore, z: LatticePoint) -> Result<Option<LatticePoint>> {
        let law = self.return_law(z)?;
        let mut r: f64 = rng.random();
        for (w, p) in law {
            if r < p {
                return Ok(Some(w));
            }
            r -= p;
        }
        Ok(None)
    }

    fn bound(&self) -> f64 {
        0.0
    }
}

/// Stops at the guard and reports the worst-case return probability.
#[derive(Debug)]
pub struct Truncate {
    bound: f64,
}

impl Truncate {
    /// Maximum return probability to the window over the guard's exterior boundary.
    pub fn new(kernel: &TiltedWalkKernel, window: &PointSet) -> Result<Self> {
        let exact = ExactReturn::new(kernel.potential.clone(), window)?;
        let g = &kernel.guard;
        let mut bound = 0.0f64;
        for i in 0..g.len() {
            if g.exterior_degree(i) == 0 {
                continue;
            }
            for z in g.point(i).neighbors() {
                if !g.contains(z) {
                    let p: f64 = exact.return_law(z)?.iter().map(|(_, p)| p).sum();
                    bound = bound.max(p);
                }
            }
        }
        Ok(Truncate { bound })
    }
}

impl Named for Truncate {
    fn name(&self) -> &'static str {
        "truncate"
    }
    fn describe(&self) -> &'static str {
        "stop at the guard; the bound is the largest return probability"
    }
}

impl Continuation for Truncate {
    fn resume(&self, _rng: &mut dyn rand::RngCore, _z: LatticePoint) -> Result<Option<LatticePoint>> {
        Ok(None)
    }

    fn bound(&self) -> f64 {
        self.bound
    }
}

/// Continuation strategies for a kernel and window.
pub fn continuations(kernel: &TiltedWalkKernel, window: &PointSet) -> Result<Registry<dyn Continuation>> {
    let mut r: Registry<dyn Continuation> = Registry::new();
    r.register(Box::new(ExactReturn::new(kernel.potential.clone(), window)?))?;
    r.register(Box::new(Truncate::new(kernel, window)?))?;
    Ok(r)
}

/// A tilted path: neighbour-step segments inside the guard, joined by
/// unobserved stretches outside it that avoid the window.
#[derive(Clone, Debug, Default, Serialize)]
pub struct TiltedPath {
    pub segments: Vec<KilledTrajectory>,
    pub truncation_bound: f64,
}

impl TiltedPath {
    pub fn time_at(&self, p: LatticePoint) -> f64 {
        self.segments.iter().map(|s| s.time_at(p)).sum()
    }

    pub fn visits(&self, p: LatticePoint) -> bool {
        self.segments.iter().any(|s| s.visits(p))
    }
}

/// Runs the tilted walk from `x`; `visit` sees every (site, hold) inside the guard.
fn run_tilted<R: Rng>(
    rng: &mut R,
    kernel: &TiltedWalkKernel,
    cont: &dyn Continuation,
    x: LatticePoint,
    mut visit: impl FnMut(LatticePoint, f64, bool),
) -> Result<()> {
    if x.is_origin() {
        return Err(Error::domain("the tilted walk cannot start at the origin"));
    }
    let g = &kernel.guard;
    let mut i = g
        .index_of(x)
        .ok_or_else(|| Error::domain(format!("start {x} outside the guard ball")))?;
    let mut fresh = true;
    loop {
        visit(g.point(i), exp1(rng), fresh);
        fresh = false;
        let k = kernel.jumps.slot(rng, i)?;
        match g.neighbor_indices(i)[k] {
            Some(j) => i = j,
            None => {
                let z = g.point(i).neighbors()[k];
                match cont.resume(rng, z)? {
                    Some(w) => {
                        i = g.index_of(w).expect("window inside guard");
                        fresh = true;
                    }
                    None => return Ok(()),
                }
            }
        }
    }
}

/// Samples one forward tilted path from `x`.
pub fn sample_tilted_forward<R: Rng>(
    rng: &mut R,
    kernel: &TiltedWalkKernel,
    cont: &dyn Continuation,
    x: LatticePoint,
    max_bound: f64,
) -> Result<TiltedPath> {
    if cont.bound() > max_bound {
        return Err(Error::accuracy("tilted guard truncation", cont.bound(), max_bound));
    }
    let mut path = TiltedPath {
        segments: Vec::new(),
        truncation_bound: cont.bound(),
    };
    run_tilted(rng, kernel, cont, x, |p, h, fresh| {
        if fresh {
            path.segments.push(KilledTrajectory {
                killed: true,
                ..Default::default()
            });
        }
        let s = path.segments.last_mut().unwrap();
        s.sites.push(p);
        s.holds.push(h);
    })?;
    Ok(path)
}

/// Tilted soup restricted to trajectories entering A, observed on a window
/// inside A.
pub struct TiltedSoup {
    kernel: Arc<TiltedWalkKernel>,
    continuation: Box<dyn Continuation>,
    a: PointSet,
    window: Vec<LatticePoint>,
    hm: MeasureOnSet,
    cap: f64,
    entry: EntryLaw,
}

impl TiltedSoup {
    /// `strategy` names a continuation from [`continuations`].
    pub fn new(kernel: Arc<TiltedWalkKernel>, a: &PointSet, window: &PointSet, strategy: &str) -> Result<Self> {
        if !a.contains(&ORIGIN) {
            return Err(Error::domain("A must contain the origin"));
        }
        if !window.is_subset(a) {
            return Err(Error::domain("the observation window must lie inside A"));
        }
        if max_norm(a) + 1.0 > kernel.guard_radius as f64 {
            return Err(Error::domain("A does not fit inside the guard ball"));
        }
        let (hm, cap) = harmonic_measure_kernel(a, Some(kernel.potential()))?;
        let entry_measure = MeasureOnSet::from_pairs(hm.iter().map(|(x, w)| (x, kernel.a(x) * w)));
        let continuation = continuations(&kernel, window)?.take(strategy)?;
        Ok(TiltedSoup {
            entry: EntryLaw::new(&entry_measure)?,
            kernel,
            continuation,
            a: a.clone(),
            window: window.iter().copied().collect(),
            hm,
            cap,
        })
    }

    pub fn capacity(&self) -> f64 {
        self.cap
    }

    pub fn harmonic_measure(&self) -> &MeasureOnSet {
        &self.hm
    }

    pub fn window(&self) -> &[LatticePoint] {
        &self.window
    }

    pub fn truncation_bound(&self) -> f64 {
        self.continuation.bound()
    }

    pub fn kernel(&self) -> &TiltedWalkKernel {
        &self.kernel
    }

    pub fn defining_set(&self) -> &PointSet {
        &self.a
    }

    /// exp(-level cap(A)).
    pub fn vacancy_probability(&self, level: f64) -> f64 {
        (-level * self.cap).exp()
    }

    /// Trajectory count and window occupation at the given level.
    pub fn sample_occupation<R: Rng>(&self, rng: &mut R, level: f64, max_bound: f64) -> Result<(usize, Vec<f64>)> {
        if !(level >= 0.0) {
            return Err(Error::domain("level must be nonnegative"));
        }
        if self.truncation_bound() > max_bound {
            return Err(Error::accuracy("tilted guard truncation", self.truncation_bound(), max_bound));
        }
        let n = poisson(rng, level * self.cap) as usize;
        let mut occ = vec![0.0; self.window.len()];
        for _ in 0..n {
            let x = self.entry.sample(rng).expect("positive capacity");
            run_tilted(rng, &self.kernel, self.continuation.as_ref(), x, |p, h, _| {
                if let Ok(k) = self.window.binary_search(&p) {
                    occ[k] += h;
                }
            })?;
        }
        Ok((n, occ))
    }

    /// Forward paths of one soup realization.
    pub fn sample_paths<R: Rng>(&self, rng: &mut R, level: f64, max_bound: f64) -> Result<Vec<TiltedPath>> {
        let n = poisson(rng, level * self.cap) as usize;
        (0..n)
            .map(|_| {
                let x = self.entry.sample(rng).expect("positive capacity");
                sample_tilted_forward(rng, &self.kernel, self.continuation.as_ref(), x, max_bound)
            })
            .collect()
    }
}

/// Exact Laplace functional E[exp(-sum_x V(x) L_x)] of the tilted soup at `level`.
///
/// With f = a * E^_x[exp(-int V)], f solves f + G0 (V f) = a on supp V where
/// G0(x,y) = a(x) + a(y) - a(x - y) is the Green function of the walk killed
/// at 0; the exponent is level * sum_x hm_A(x) (a(x) - f(x)).
pub fn tilted_laplace_exact(v: &MeasureOnSet, a: &PointSet, level: f64, table: &PotentialTable) -> Result<f64> {
    let supp: Vec<LatticePoint> = v.support().into_iter().filter(|p| !p.is_origin()).collect();
    if !v.support().is_subset(a) {
        return Err(Error::domain("supp V must lie inside A"));
    }
    let (hm, _) = harmonic_measure_kernel(a, Some(table))?;
    let g0 = |x: LatticePoint, y: LatticePoint| table.value(x) + table.value(y) - table.value(x - y);
    let n = supp.len();
    let fv = if n > 0 {
        let m = DMatrix::from_fn(n, n, |i, j| {
            (if i == j { 1.0 } else { 0.0 }) + g0(supp[i], supp[j]) * v.get(supp[j])
        });
        let rhs = DVector::from_fn(n, |i, _| table.value(supp[i]));
        m.lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Solver("singular Feynman-Kac system".into()))?
    } else {
        DVector::zeros(0)
    };
    let mut exponent = 0.0;
    for (x, w) in hm.iter() {
        if x.is_origin() {
            continue;
        }
        let mut corr = 0.0;
        for j in 0..n {
            corr += g0(x, supp[j]) * v.get(supp[j]) * fv[j];
        }
        exponent += w * corr;
    }
    Ok((-level * exponent).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::point_set;
    use crate::rng::{stream, tags};

    #[test]
    fn rows_stochastic_and_avoid_origin() {
        let k = TiltedWalkKernel::with_radius(10, 0).unwrap();
        for x in k.guard().points() {
            if x.is_origin() {
                assert!(k.row(*x).is_err());
                continue;
            }
            let r = k.row(*x).unwrap();
            let s: f64 = r.iter().sum();
            assert!((s - 1.0).abs() < 1e-12, "{x}: {s}");
        }
        let r = k.row(LatticePoint::new(1, 0)).unwrap();
        assert_eq!(r[1], 0.0);
        assert!((r[0] - (4.0 - 8.0 / PI) / 4.0).abs() < 1e-12);
        let mut rng = stream(4, tags::TEST, 0);
        for _ in 0..1000 {
            assert_ne!(tilted_step(&mut rng, &k, LatticePoint::new(1, 0)).unwrap(), ORIGIN);
        }
    }

    #[test]
    fn laplace_at_zero_potential_is_one() {
        let t = PotentialTable::build(8, 1e-13).unwrap();
        let a = point_set([(0, 0), (1, 0)]);
        let v = MeasureOnSet::from_pairs([(LatticePoint::new(1, 0), 0.0)]);
        assert_eq!(tilted_laplace_exact(&v, &a, 3.0, &t).unwrap(), 1.0);
        // infinite potential recovers the vacancy probability
        let v = MeasureOnSet::from_pairs([(LatticePoint::new(1, 0), 1e12)]);
        let l = tilted_laplace_exact(&v, &a, 3.0, &t).unwrap();
        assert!((l - (-3.0f64 * 0.5).exp()).abs() < 1e-9, "{l}");
    }

    #[test]
    fn truncation_bound_is_large_for_small_guard() {
        let k = TiltedWalkKernel::with_radius(12, 0).unwrap();
        let w = point_set([(1, 0)]);
        let t = Truncate::new(&k, &w).unwrap();
        assert!(t.bound() > 1e-4);
        let mut rng = stream(5, tags::TEST, 0);
        assert!(matches!(
            sample_tilted_forward(&mut rng, &k, &t, LatticePoint::new(1, 0), 1e-4),
            Err(Error::Accuracy { .. })
        ));
    }
}
