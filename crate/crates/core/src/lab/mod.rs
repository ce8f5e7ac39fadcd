//! Verification experiments: exact oracles, Monte Carlo drivers and reports.

mod capacity;
mod laplace;
mod massive;
mod rayknight;
mod report;
mod soups;
mod torus;

pub use capacity::CapacityConvergence;
pub use laplace::{feynman_kac, laplace_exact};
pub use massive::{MassiveRayKnight, MassiveVacancy};
pub use rayknight::{RayKnightFinite, RayKnightInfinite};
pub use report::{Check, ExperimentReport, ReportBuilder, Statistic, Verdict};
pub use soups::{ExcursionEquivalence, LaplaceExperiment, VacancyExperiment};
pub use torus::{simulate_torus_vacancy, torus_steps, TorusOutcome, TorusVacancy};

use crate::config::Params;
use crate::error::Result;
use crate::registry::{Named, Registry};

/// Default |z| threshold for verdicts.
pub const DEFAULT_THRESHOLD: f64 = 3.0;

/// A named verification driver with declared parameters.
pub trait Experiment: Named + Send + Sync {
    /// (key, default, help) for every accepted parameter.
    fn parameters(&self) -> Vec<(&'static str, &'static str, &'static str)>;

    fn run(&self, params: &Params, seed: u64) -> Result<ExperimentReport>;

    /// Defaults overlaid with `overrides`.
    fn params_with(&self, overrides: &[(&str, &str)]) -> Params {
        let mut p = Params::from_pairs(self.parameters().into_iter().map(|(k, v, _)| (k, v)));
        for (k, v) in overrides {
            p = p.with(k, v);
        }
        p
    }
}

/// All shipped experiments.
pub fn experiments() -> Registry<dyn Experiment> {
    Registry::<dyn Experiment>::new()
        .with(Box::new(CapacityConvergence))
        .with(Box::new(VacancyExperiment))
        .with(Box::new(ExcursionEquivalence))
        .with(Box::new(LaplaceExperiment))
        .with(Box::new(RayKnightFinite))
        .with(Box::new(RayKnightInfinite))
        .with(Box::new(MassiveVacancy))
        .with(Box::new(MassiveRayKnight))
        .with(Box::new(TorusVacancy))
}
