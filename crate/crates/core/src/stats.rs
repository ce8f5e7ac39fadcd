//! Streaming moments and the hypothesis tests used by the experiments.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, Poisson};

use crate::error::{Error, Result};

/// Running sums for a mean and its standard error.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Moments {
    pub n: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn merge(&mut self, o: &Moments) {
        self.n += o.n;
        self.sum += o.sum;
        self.sum_sq += o.sum_sq;
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.n as f64
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        let n = self.n as f64;
        ((self.sum_sq - self.sum * self.sum / n) / (n - 1.0)).max(0.0)
    }

    pub fn stderr(&self) -> f64 {
        (self.variance() / self.n as f64).sqrt()
    }
}

impl FromIterator<f64> for Moments {
    fn from_iter<I: IntoIterator<Item = f64>>(it: I) -> Self {
        let mut m = Moments::default();
        it.into_iter().for_each(|x| m.push(x));
        m
    }
}

/// Running sums for a sample variance and its standard error (fourth moments).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct VarianceMoments {
    pub n: u64,
    pub s1: f64,
    pub s2: f64,
    pub s3: f64,
    pub s4: f64,
}

impl VarianceMoments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.s1 += x;
        self.s2 += x * x;
        self.s3 += x * x * x;
        self.s4 += x * x * x * x;
    }

    pub fn variance(&self) -> f64 {
        let n = self.n as f64;
        let m = self.s1 / n;
        (self.s2 / n - m * m) * n / (n - 1.0)
    }

    /// Delta-method standard error of the sample variance.
    pub fn variance_stderr(&self) -> f64 {
        let n = self.n as f64;
        let m = self.s1 / n;
        let c2 = self.s2 / n - m * m;
        let c4 = self.s4 / n - 4.0 * m * self.s3 / n + 6.0 * m * m * self.s2 / n - 3.0 * m.powi(4);
        ((c4 - c2 * c2).max(0.0) / n).sqrt()
    }
}

/// (estimate - target) / stderr, with 0/0 read as agreement.
pub fn z_score(estimate: f64, stderr: f64, target: f64) -> f64 {
    let d = estimate - target;
    if d == 0.0 {
        0.0
    } else if stderr > 0.0 {
        d / stderr
    } else {
        f64::INFINITY * d.signum()
    }
}

/// z for the difference of two independent estimates.
pub fn two_sample_z(m1: f64, se1: f64, m2: f64, se2: f64) -> f64 {
    z_score(m1 - m2, (se1 * se1 + se2 * se2).sqrt(), 0.0)
}

/// Binomial proportion with its standard error.
pub fn proportion(successes: u64, n: u64) -> (f64, f64) {
    let p = successes as f64 / n as f64;
    (p, (p * (1.0 - p) / n as f64).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

impl ChiSquare {
    fn from_stat(statistic: f64, dof: usize) -> Result<Self> {
        if dof == 0 {
            return Err(Error::Numeric("chi-square test needs at least two cells".into()));
        }
        let d = ChiSquared::new(dof as f64).map_err(|e| Error::Numeric(e.to_string()))?;
        Ok(ChiSquare {
            statistic,
            dof,
            p_value: 1.0 - d.cdf(statistic),
        })
    }

    pub fn passes(&self, level: f64) -> bool {
        self.p_value >= level
    }
}

/// Merges adjacent cells until every expected count reaches `min_expected`.
fn pool(observed: &[f64], expected: &[f64], min_expected: f64) -> Vec<(f64, f64)> {
    let mut cells = Vec::new();
    let (mut o, mut e) = (0.0, 0.0);
    for (oi, ei) in observed.iter().zip(expected) {
        o += oi;
        e += ei;
        if e >= min_expected {
            cells.push((o, e));
            o = 0.0;
            e = 0.0;
        }
    }
    if e > 0.0 || o > 0.0 {
        match cells.last_mut() {
            Some(last) => {
                last.0 += o;
                last.1 += e;
            }
            None => cells.push((o, e)),
        }
    }
    cells
}

/// Goodness of fit of counts to probabilities (cells pooled to expected >= 5).
pub fn chi_square_gof(observed: &[u64], probs: &[f64]) -> Result<ChiSquare> {
    if observed.len() != probs.len() {
        return Err(Error::domain("observed and expected lengths differ"));
    }
    let n: u64 = observed.iter().sum();
    let total_p: f64 = probs.iter().sum();
    let exp: Vec<f64> = probs.iter().map(|p| p / total_p * n as f64).collect();
    let obs: Vec<f64> = observed.iter().map(|&o| o as f64).collect();
    let cells = pool(&obs, &exp, 5.0);
    let stat = cells.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    ChiSquare::from_stat(stat, cells.len().saturating_sub(1))
}

/// Homogeneity of two count vectors over the same cells.
pub fn chi_square_two_sample(a: &[u64], b: &[u64]) -> Result<ChiSquare> {
    if a.len() != b.len() {
        return Err(Error::domain("count vectors differ in length"));
    }
    let (na, nb) = (a.iter().sum::<u64>() as f64, b.iter().sum::<u64>() as f64);
    let n = na + nb;
    let mut stat = 0.0;
    let mut cells: usize = 0;
    let (mut ca, mut cb) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        ca += *x as f64;
        cb += *y as f64;
        let t = ca + cb;
        if t * na.min(nb) / n >= 5.0 {
            let (ea, eb) = (t * na / n, t * nb / n);
            stat += (ca - ea).powi(2) / ea + (cb - eb).powi(2) / eb;
            cells += 1;
            ca = 0.0;
            cb = 0.0;
        }
    }
    if ca + cb > 0.0 && cells > 0 {
        // fold the remainder into the statistic as one more cell
        let t = ca + cb;
        let (ea, eb) = (t * na / n, t * nb / n);
        stat += (ca - ea).powi(2) / ea + (cb - eb).powi(2) / eb;
        cells += 1;
    }
    ChiSquare::from_stat(stat, cells.saturating_sub(1))
}

/// Goodness of fit of nonnegative integer samples to Poisson(mean).
pub fn chi_square_poisson(samples: &[u64], mean: f64) -> Result<ChiSquare> {
    let max = samples.iter().copied().max().unwrap_or(0) as usize;
    let mut obs = vec![0u64; max + 2];
    for &s in samples {
        obs[s as usize] += 1;
    }
    let mut probs: Vec<f64> = if mean > 0.0 {
        let d = Poisson::new(mean).map_err(|e| Error::Numeric(e.to_string()))?;
        (0..=max).map(|k| d.pmf(k as u64)).collect()
    } else {
        let mut v = vec![0.0; max + 1];
        v[0] = 1.0;
        v
    };
    let tail = (1.0 - probs.iter().sum::<f64>()).max(0.0);
    probs.push(tail);
    chi_square_gof(&obs, &probs)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KolmogorovSmirnov {
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sample Kolmogorov-Smirnov test against a continuous CDF.
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> KolmogorovSmirnov {
    let mut x = samples.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let mut d = 0.0f64;
    for (i, xi) in x.iter().enumerate() {
        let f = cdf(*xi);
        d = d.max(f - i as f64 / n).max((i + 1) as f64 / n - f);
    }
    let sn = n.sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    KolmogorovSmirnov {
        statistic: d,
        p_value: kolmogorov_q(lambda),
    }
}

/// Q(lambda) = 2 sum_k (-1)^{k-1} exp(-2 k^2 lambda^2).
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..200 {
        let kf = k as f64;
        let t = (-2.0 * kf * kf * lambda * lambda).exp();
        s += if k % 2 == 1 { t } else { -t };
        if t < 1e-16 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, tags};
    use rand::Rng;

    #[test]
    fn moments() {
        let m: Moments = [1.0, 2.0, 3.0, 4.0].into_iter().collect();
        assert_eq!(m.mean(), 2.5);
        assert!((m.variance() - 5.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_passes_ks_and_chi_square() {
        let mut rng = stream(3, tags::TEST, 0);
        let x: Vec<f64> = (0..5000).map(|_| rng.random()).collect();
        assert!(ks_test(&x, |t| t.clamp(0.0, 1.0)).p_value > 0.01);
        assert!(ks_test(&x, |t| (t * 1.1).clamp(0.0, 1.0)).p_value < 0.01);
        let mut c = vec![0u64; 10];
        x.iter().for_each(|v| c[(v * 10.0) as usize] += 1);
        assert!(chi_square_gof(&c, &[0.1; 10]).unwrap().passes(0.01));
        let counts: Vec<u64> = (0..5000).map(|_| crate::rng::poisson(&mut rng, 2.5)).collect();
        assert!(chi_square_poisson(&counts, 2.5).unwrap().passes(0.01));
        assert!(!chi_square_poisson(&counts, 2.8).unwrap().passes(0.01));
    }
}
