//! Potential kernel a(x) and massive Green function g_eps(0,x) of the planar
//! simple random walk.
//!
//! Both are reduced to one-dimensional integrals by performing the inner
//! Fourier integral in closed form:
//! for c > 1, (1/2pi) int cos(n t)/(c - cos t) dt = z^n / sqrt(c^2 - 1),
//! z = c - sqrt(c^2 - 1).

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{OnceLock, RwLock};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{LatticePoint, ORIGIN};
use crate::quadrature::integrate;

const MAX_PANELS: usize = 20_000;

/// A computed value with an error estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

fn breakpoints(scale: f64) -> Vec<f64> {
    // geometric panels from the small scale up to pi resolve the peak at 0
    let mut b = vec![0.0];
    let mut t = scale.clamp(1e-12, PI / 4.0);
    while t < PI / 2.0 {
        b.push(t);
        t *= 4.0;
    }
    b.push(PI);
    b
}

/// a(x) to absolute accuracy `tol`.
pub fn potential_kernel(x: LatticePoint, tol: f64) -> Result<Estimate> {
    if !(tol > 0.0) {
        return Err(Error::domain("tol must be positive"));
    }
    if x == ORIGIN {
        return Ok(Estimate {
            value: 0.0,
            error: 0.0,
        });
    }
    let o = x.octant();
    let (n, m) = (o.x1 as f64, o.x2 as f64);
    // numerator 1 - cos(m t) z^n written without cancellation
    let f = move |t: f64| {
        let sh = (0.5 * t).sin();
        let s = 2.0 * sh * sh;
        let r = (s * (2.0 + s)).sqrt();
        if r == 0.0 {
            return 2.0 / PI * n;
        }
        let lz = (s - r).ln_1p();
        let zn = (n * lz).exp();
        let sm = (0.5 * m * t).sin();
        let num = -(n * lz).exp_m1() + zn * 2.0 * sm * sm;
        2.0 / PI * num / r
    };
    let q = integrate(f, &breakpoints(0.5 / (n + 1.0)), 0.1 * tol, MAX_PANELS);
    if !q.converged {
        return Err(Error::accuracy("potential_kernel", q.error, tol));
    }
    Ok(Estimate {
        value: q.value,
        error: q.error,
    })
}

/// g_eps(0,x) = expected time at x before an independent Exp(eps) clock rings.
pub fn massive_green(eps: f64, x: LatticePoint, tol: f64) -> Result<Estimate> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::domain("eps must be positive and finite"));
    }
    if !(tol > 0.0) {
        return Err(Error::domain("tol must be positive"));
    }
    let o = x.octant();
    let (n, m) = (o.x1 as f64, o.x2 as f64);
    let f = move |t: f64| {
        let sh = (0.5 * t).sin();
        let s = 2.0 * sh * sh;
        let cm1 = 2.0 * eps + s;
        let r = (cm1 * (cm1 + 2.0)).sqrt();
        let zn = (n * (cm1 - r).ln_1p()).exp();
        2.0 / PI * (m * t).cos() * zn / r
    };
    let scale = eps.sqrt().min(0.5 / (n + 1.0));
    let q = integrate(f, &breakpoints(scale), 0.1 * tol, MAX_PANELS);
    if !q.converged {
        return Err(Error::accuracy("massive_green", q.error, tol));
    }
    Ok(Estimate {
        value: q.value,
        error: q.error,
    })
}

/// Least-squares fit of a(x) - (2/pi) log|x| on a ring.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct AsymptoticFit {
    /// The additive constant k.
    pub k: f64,
    /// Spread of k between the one-term and three-term fits plus standard error.
    pub band: f64,
    pub points: usize,
}

/// Fits k over the octant of the ring `r_min <= |x| <= r_max`.
///
/// The model is k + b/|x|^2 + c cos(4 phi)/|x|^2, which absorbs the leading
/// correction so that k is not biased by the ring's finite radius.
pub fn fit_asymptotic_constant(r_min: u32, r_max: u32, tol: f64) -> Result<AsymptoticFit> {
    let (lo, hi) = ((r_min as i64).pow(2), (r_max as i64).pow(2));
    let pts: Vec<LatticePoint> = (0..=r_max as i32)
        .flat_map(|i| (0..=i).map(move |j| LatticePoint::new(i, j)))
        .filter(|p| p.norm2() >= lo && p.norm2() <= hi)
        .collect();
    let vals: Vec<f64> = pts
        .par_iter()
        .map(|p| potential_kernel(*p, tol).map(|e| e.value))
        .collect::<Result<_>>()?;
    let n = pts.len();
    let mut design = nalgebra::DMatrix::<f64>::zeros(n, 3);
    let mut rhs = nalgebra::DVector::<f64>::zeros(n);
    let mut plain = 0.0;
    for (i, (p, v)) in pts.iter().zip(&vals).enumerate() {
        let r = p.norm();
        let phi = (p.x2 as f64).atan2(p.x1 as f64);
        let y = v - 2.0 / PI * r.ln();
        design[(i, 0)] = 1.0;
        design[(i, 1)] = 1.0 / (r * r);
        design[(i, 2)] = (4.0 * phi).cos() / (r * r);
        rhs[i] = y;
        plain += y;
    }
    plain /= n as f64;
    let svd = design.clone().svd(true, true);
    let coef = svd
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::Numeric(e.to_string()))?;
    let resid = &design * &coef - &rhs;
    let sigma2 = resid.norm_squared() / (n as f64 - 3.0).max(1.0);
    let stderr = (sigma2 / n as f64).sqrt();
    Ok(AsymptoticFit {
        k: coef[0],
        band: (coef[0] - plain).abs() + 3.0 * stderr + 10.0 * tol,
        points: n,
    })
}

/// Cached octant of a(x) over the ball |x| <= radius.
#[derive(Debug)]
pub struct PotentialTable {
    radius: u32,
    tol: f64,
    values: Vec<f64>,
    fit: OnceLock<AsymptoticFit>,
}

fn tri(i: usize, j: usize) -> usize {
    i * (i + 1) / 2 + j
}

impl PotentialTable {
    /// Computes a(x) for every octant point with |x| <= radius.
    pub fn build(radius: u32, tol: f64) -> Result<PotentialTable> {
        let r = radius as usize;
        let keys: Vec<(usize, usize)> = (0..=r)
            .flat_map(|i| (0..=i).map(move |j| (i, j)))
            .collect();
        let r2 = (radius as i64).pow(2);
        let values: Vec<f64> = keys
            .par_iter()
            .map(|&(i, j)| {
                let p = LatticePoint::new(i as i32, j as i32);
                if p.norm2() > r2 {
                    Ok(f64::NAN)
                } else {
                    potential_kernel(p, tol).map(|e| e.value)
                }
            })
            .collect::<Result<_>>()?;
        Ok(PotentialTable {
            radius,
            tol,
            values,
            fit: OnceLock::new(),
        })
    }

    pub fn radius(&self) -> u32 {
        self.radius
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// Cached value, `None` beyond the table radius.
    pub fn lookup(&self, x: LatticePoint) -> Option<f64> {
        let o = x.octant();
        if o.x1 as u32 > self.radius {
            return None;
        }
        let v = self.values[tri(o.x1 as usize, o.x2 as usize)];
        (!v.is_nan()).then_some(v)
    }

    /// a(x), computed directly when outside the table.
    pub fn value(&self, x: LatticePoint) -> f64 {
        match self.lookup(x) {
            Some(v) => v,
            None => potential_kernel(x, self.tol)
                .map(|e| e.value)
                .unwrap_or_else(|_| self.asymptotic_unchecked(x)),
        }
    }

    /// The fitted constant k (computed on first use over 64 <= |x| <= 128).
    pub fn asymptotic_fit(&self) -> Result<AsymptoticFit> {
        if let Some(f) = self.fit.get() {
            return Ok(*f);
        }
        let f = fit_asymptotic_constant(64, 128, self.tol.max(1e-12))?;
        Ok(*self.fit.get_or_init(|| f))
    }

    pub fn asymptotic_constant(&self) -> Result<f64> {
        Ok(self.asymptotic_fit()?.k)
    }

    fn asymptotic_unchecked(&self, x: LatticePoint) -> f64 {
        let k = self.asymptotic_constant().unwrap_or(1.0294);
        2.0 / PI * x.norm().ln() + k
    }
}

/// (2/pi) log|x| + k with the table's fitted k.
pub fn potential_asymptotic(x: LatticePoint, table: &PotentialTable) -> Result<f64> {
    if x == ORIGIN {
        return Err(Error::domain("asymptotic expansion undefined at the origin"));
    }
    Ok(2.0 / PI * x.norm().ln() + table.asymptotic_constant()?)
}

/// Lazily memoized g_eps(0, ·) keyed by dihedral orbit.
#[derive(Debug)]
pub struct MassiveGreenTable {
    eps: f64,
    tol: f64,
    cache: RwLock<HashMap<LatticePoint, f64>>,
}

impl MassiveGreenTable {
    pub fn new(eps: f64, tol: f64) -> Result<Self> {
        massive_green(eps, ORIGIN, tol)?;
        Ok(MassiveGreenTable {
            eps,
            tol,
            cache: RwLock::new(HashMap::new()),
        })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    /// g_eps(x, y).
    pub fn g(&self, x: LatticePoint, y: LatticePoint) -> Result<f64> {
        let key = (x - y).octant();
        if let Some(v) = self.cache.read().unwrap().get(&key) {
            return Ok(*v);
        }
        let v = massive_green(self.eps, key, self.tol)?.value;
        self.cache.write().unwrap().insert(key, v);
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(a: i32, b: i32) -> LatticePoint {
        LatticePoint::new(a, b)
    }

    #[test]
    fn small_values() {
        let a = |x| potential_kernel(x, 1e-12).unwrap().value;
        assert_eq!(a(ORIGIN), 0.0);
        assert!((a(p(1, 0)) - 1.0).abs() < 1e-10);
        assert!((a(p(1, 1)) - 4.0 / PI).abs() < 1e-10);
        assert!((a(p(2, 0)) - (4.0 - 8.0 / PI)).abs() < 1e-10);
    }

    #[test]
    fn rejects_bad_tol() {
        assert!(potential_kernel(p(1, 0), 0.0).is_err());
        assert!(massive_green(0.0, ORIGIN, 1e-8).is_err());
    }

    #[test]
    fn table_symmetry() {
        let t = PotentialTable::build(6, 1e-12).unwrap();
        assert_eq!(t.lookup(ORIGIN), Some(0.0));
        assert_eq!(t.lookup(p(-3, 2)), t.lookup(p(2, 3)));
        assert_eq!(t.lookup(p(5, 5)), None);
        assert!((t.value(p(5, 5)) - potential_kernel(p(5, 5), 1e-12).unwrap().value).abs() < 1e-12);
    }

    #[test]
    fn massive_series_at_one() {
        // sum_m (C(2m,m)/4^m)^2 2^{-(2m+1)}
        let mut term = 1.0f64;
        let mut s = 0.0;
        for m in 0..200 {
            if m > 0 {
                let r = (2 * m - 1) as f64 / (2 * m) as f64;
                term *= r * r;
            }
            s += term * 0.5f64.powi(2 * m + 1);
        }
        let g = massive_green(1.0, ORIGIN, 1e-13).unwrap().value;
        assert!((g - s).abs() < 1e-12, "{g} {s}");
    }
}
