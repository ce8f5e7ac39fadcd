use std::time::Instant;

use serde::Serialize;

use crate::stats::z_score;

/// One estimate against its target.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Statistic {
    pub probe: String,
    pub estimate: f64,
    /// Absent for deterministic quantities.
    pub stderr: Option<f64>,
    pub target: f64,
    /// Only statistics with a z-score enter the verdict threshold.
    pub z: Option<f64>,
}

/// A pass/fail condition that is not a z-test.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub name: String,
    pub seed: u64,
    pub replicas: usize,
    pub threshold: f64,
    pub statistics: Vec<Statistic>,
    pub checks: Vec<Check>,
    pub verdict: Verdict,
    pub runtime_seconds: f64,
    pub notes: Vec<String>,
}

impl ExperimentReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn statistic(&self, probe: &str) -> Option<&Statistic> {
        self.statistics.iter().find(|s| s.probe == probe)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Column header and rows; free of timing so reruns compare byte for byte.
    pub fn csv_body(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        let mut s = String::from("kind,name,estimate,stderr,target,z,passed,detail\n");
        for st in &self.statistics {
            let ok = st.z.is_none_or(|z| z.abs() <= self.threshold);
            s.push_str(&format!(
                "stat,{},{},{},{},{},{},\n",
                st.probe,
                st.estimate,
                opt(st.stderr),
                st.target,
                opt(st.z),
                ok
            ));
        }
        for c in &self.checks {
            s.push_str(&format!("check,{},,,,,{},{}\n", c.name, c.passed, c.detail.replace(',', ";")));
        }
        s.push_str(&format!(
            "verdict,{},,,,,{},\n",
            self.name,
            self.verdict == Verdict::Pass
        ));
        s
    }

    /// Human-readable summary.
    pub fn text(&self) -> String {
        let mut s = format!(
            "{}: {} (seed {}, replicas {}, |z| <= {}, {:.1} s)\n",
            self.name,
            if self.passed() { "PASS" } else { "FAIL" },
            self.seed,
            self.replicas,
            self.threshold,
            self.runtime_seconds
        );
        for st in &self.statistics {
            s.push_str(&format!("  {:<40} {:>14.6} ", st.probe, st.estimate));
            match (st.stderr, st.z) {
                (Some(se), Some(z)) => s.push_str(&format!("± {se:<12.4e} target {:.6}  z={z:+.2}\n", st.target)),
                _ => s.push_str(&format!("target {:.6}\n", st.target)),
            }
        }
        for c in &self.checks {
            s.push_str(&format!("  [{}] {}: {}\n", if c.passed { "ok" } else { "FAIL" }, c.name, c.detail));
        }
        for n in &self.notes {
            s.push_str(&format!("  note: {n}\n"));
        }
        s
    }
}

/// Accumulates statistics and checks, then fixes the verdict.
pub struct ReportBuilder {
    report: ExperimentReport,
    start: Instant,
}

impl ReportBuilder {
    pub fn new(name: &str, seed: u64, replicas: usize, threshold: f64) -> Self {
        ReportBuilder {
            report: ExperimentReport {
                name: name.to_string(),
                seed,
                replicas,
                threshold,
                statistics: Vec::new(),
                checks: Vec::new(),
                verdict: Verdict::Fail,
                runtime_seconds: 0.0,
                notes: Vec::new(),
            },
            start: Instant::now(),
        }
    }

    /// Monte Carlo estimate against an exact target.
    pub fn stat(&mut self, probe: impl Into<String>, estimate: f64, stderr: f64, target: f64) -> f64 {
        let z = z_score(estimate, stderr, target);
        self.report.statistics.push(Statistic {
            probe: probe.into(),
            estimate,
            stderr: Some(stderr),
            target,
            z: Some(z),
        });
        z
    }

    /// Two independent estimates compared; `target` records the second.
    pub fn compare(&mut self, probe: impl Into<String>, m1: f64, se1: f64, m2: f64, se2: f64) -> f64 {
        let z = crate::stats::two_sample_z(m1, se1, m2, se2);
        self.report.statistics.push(Statistic {
            probe: probe.into(),
            estimate: m1,
            stderr: Some((se1 * se1 + se2 * se2).sqrt()),
            target: m2,
            z: Some(z),
        });
        z
    }

    /// Deterministic value recorded for the table only.
    pub fn value(&mut self, probe: impl Into<String>, estimate: f64, target: f64) {
        self.report.statistics.push(Statistic {
            probe: probe.into(),
            estimate,
            stderr: None,
            target,
            z: None,
        });
    }

    pub fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) -> bool {
        self.report.checks.push(Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
        passed
    }

    pub fn note(&mut self, n: impl Into<String>) {
        self.report.notes.push(n.into());
    }

    pub fn finish(mut self) -> ExperimentReport {
        let r = &mut self.report;
        let z_ok = r
            .statistics
            .iter()
            .all(|s| s.z.is_none_or(|z| z.abs() <= r.threshold));
        let c_ok = r.checks.iter().all(|c| c.passed);
        r.verdict = if z_ok && c_ok { Verdict::Pass } else { Verdict::Fail };
        r.runtime_seconds = self.start.elapsed().as_secs_f64();
        self.report
    }
}
