//! Poisson soups of trajectories: Dirichlet-killed, tilted and massive.

pub mod dirichlet;
pub mod massive;
pub mod tilted;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::dirichlet::MeasureOnSet;
use crate::error::{Error, Result};
use crate::lattice::LatticePoint;

/// Sampling from a finite measure normalized to a probability.
#[derive(Clone, Debug)]
pub struct EntryLaw {
    points: Vec<LatticePoint>,
    total: f64,
    index: Option<WeightedIndex<f64>>,
}

impl EntryLaw {
    pub fn new(m: &MeasureOnSet) -> Result<Self> {
        let points: Vec<LatticePoint> = m.weights.keys().copied().collect();
        let w: Vec<f64> = m.weights.values().copied().collect();
        let total: f64 = w.iter().sum();
        let index = if total > 0.0 {
            Some(WeightedIndex::new(&w).map_err(|e| Error::Numeric(e.to_string()))?)
        } else {
            None
        };
        Ok(EntryLaw {
            points,
            total,
            index,
        })
    }

    /// Mass of the underlying measure.
    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<LatticePoint> {
        self.index.as_ref().map(|ix| self.points[ix.sample(rng)])
    }
}
