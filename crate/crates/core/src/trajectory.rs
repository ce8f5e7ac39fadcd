//! Trajectories with holding times, soups and occupation fields.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{LatticePoint, PointSet};

/// A finite path with holding times, optionally ending in the cemetery.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct KilledTrajectory {
    pub sites: Vec<LatticePoint>,
    pub holds: Vec<f64>,
    pub killed: bool,
}

impl KilledTrajectory {
    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn lifetime(&self) -> f64 {
        self.holds.iter().sum()
    }

    pub fn visits(&self, p: LatticePoint) -> bool {
        self.sites.contains(&p)
    }

    pub fn visits_any(&self, a: &PointSet) -> bool {
        self.sites.iter().any(|p| a.contains(p))
    }

    /// Total holding time at `p`.
    pub fn time_at(&self, p: LatticePoint) -> f64 {
        self.sites
            .iter()
            .zip(&self.holds)
            .filter(|(s, _)| **s == p)
            .map(|(_, h)| *h)
            .sum()
    }

    /// Checks nearest-neighbour steps and holding times; a zero first hold
    /// is allowed when `zero_first` is set (backward parts).
    pub fn validate(&self, zero_first: bool) -> Result<()> {
        if self.sites.len() != self.holds.len() {
            return Err(Error::domain("sites and holds differ in length"));
        }
        for w in self.sites.windows(2) {
            if !w[0].is_neighbor(w[1]) {
                return Err(Error::domain(format!("non-neighbour step {} -> {}", w[0], w[1])));
            }
        }
        for (i, h) in self.holds.iter().enumerate() {
            let ok = *h > 0.0 || (i == 0 && zero_first && *h == 0.0);
            if !ok || !h.is_finite() {
                return Err(Error::domain(format!("bad holding time {h} at position {i}")));
            }
        }
        Ok(())
    }
}

/// Backward and forward parts glued at the entrance point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BidirectionalTrajectory {
    pub backward: KilledTrajectory,
    pub entry: LatticePoint,
    pub forward: KilledTrajectory,
}

impl BidirectionalTrajectory {
    pub fn visits(&self, p: LatticePoint) -> bool {
        self.forward.visits(p) || self.backward.visits(p)
    }

    pub fn visits_any(&self, a: &PointSet) -> bool {
        self.forward.visits_any(a) || self.backward.visits_any(a)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SoupParams {
    pub k: PointSet,
    pub a: PointSet,
    pub u: f64,
    pub description: String,
}

/// A realization of a Poisson soup restricted to trajectories entering A.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SoupSample {
    /// Trajectories with their intensity labels in [0, u].
    pub trajectories: Vec<(BidirectionalTrajectory, f64)>,
    pub params: SoupParams,
}

impl SoupSample {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// Whether `a` is untouched by every trajectory.
    pub fn is_vacant(&self, a: &PointSet) -> bool {
        !self.trajectories.iter().any(|(t, _)| t.visits_any(a))
    }
}

/// Accumulated holding time over a finite window.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OccupationField {
    pub times: BTreeMap<LatticePoint, f64>,
}

impl OccupationField {
    pub fn zero(window: &PointSet) -> Self {
        OccupationField {
            times: window.iter().map(|p| (*p, 0.0)).collect(),
        }
    }

    pub fn get(&self, p: LatticePoint) -> f64 {
        self.times.get(&p).copied().unwrap_or(0.0)
    }

    pub fn add_path(&mut self, t: &KilledTrajectory) {
        for (s, h) in t.sites.iter().zip(&t.holds) {
            if let Some(v) = self.times.get_mut(s) {
                *v += h;
            }
        }
    }

    /// Points with positive occupation.
    pub fn support(&self) -> PointSet {
        self.times
            .iter()
            .filter(|(_, t)| **t > 0.0)
            .map(|(p, _)| *p)
            .collect()
    }
}

/// Sums holding times of both parts of every trajectory over the window.
pub fn occupation_field(s: &SoupSample, window: &PointSet) -> OccupationField {
    let mut f = OccupationField::zero(window);
    for (t, _) in &s.trajectories {
        f.add_path(&t.backward);
        f.add_path(&t.forward);
    }
    f
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(a: i32, b: i32) -> LatticePoint {
        LatticePoint::new(a, b)
    }

    #[test]
    fn validation() {
        let t = KilledTrajectory {
            sites: vec![p(0, 0), p(1, 0), p(1, 1)],
            holds: vec![0.0, 1.0, 2.0],
            killed: true,
        };
        assert!(t.validate(true).is_ok());
        assert!(t.validate(false).is_err());
        let bad = KilledTrajectory {
            sites: vec![p(0, 0), p(2, 0)],
            holds: vec![1.0, 1.0],
            killed: true,
        };
        assert!(bad.validate(false).is_err());
        assert_eq!(t.time_at(p(1, 1)), 2.0);
    }

    #[test]
    fn empty_soup_has_zero_field() {
        let s = SoupSample {
            trajectories: vec![],
            params: SoupParams {
                k: PointSet::new(),
                a: PointSet::from([p(0, 0)]),
                u: 0.0,
                description: String::new(),
            },
        };
        let w = PointSet::from([p(0, 0), p(1, 0)]);
        let f = occupation_field(&s, &w);
        assert!(f.times.values().all(|v| *v == 0.0));
        assert!(s.is_vacant(&w));
    }
}
