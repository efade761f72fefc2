// SPDX-License-Identifier: Apache-2.0

//! Many seeded runs of one scenario, checked and measured in parallel.

use std::ops::Range;

use rayon::prelude::*;

use crate::checker::{check, CheckError, Report, ViolationKind};
use crate::metrics::{measure, MetricsReport};
use crate::scenario::Scenario;
use crate::sim::run;

#[derive(Clone, Debug)]
pub struct SeedOutcome {
    pub seed: u64,
    pub quiescent: bool,
    pub report: Result<Report, CheckError>,
    pub metrics: MetricsReport,
}

impl SeedOutcome {
    pub fn clean(&self) -> bool {
        self.quiescent && self.report.as_ref().is_ok_and(Report::is_clean)
    }

    pub fn has(&self, kind: ViolationKind) -> bool {
        self.report.as_ref().is_ok_and(|r| r.count(kind) > 0)
    }
}

/// Simulates, checks and measures one seed.
pub fn run_seed(scenario: &Scenario, seed: u64) -> SeedOutcome {
    let out = run(scenario, seed);
    let report = check(scenario, &out.trace);
    let mut metrics = measure(scenario, &out.trace);
    if let Ok(r) = &report {
        metrics.violations = r.counts().into_iter().map(|(k, n)| (k.as_str().to_string(), n)).collect();
    }
    SeedOutcome { seed, quiescent: out.quiescent, report, metrics }
}

/// Runs every seed in `seeds`, in parallel; results are in seed order.
pub fn run_seeds(scenario: &Scenario, seeds: Range<u64>) -> Vec<SeedOutcome> {
    seeds.into_par_iter().map(|seed| run_seed(scenario, seed)).collect()
}

#[derive(Clone, Debug, Default)]
pub struct Summary {
    pub runs: u64,
    pub clean: u64,
    pub not_quiescent: u64,
    pub check_errors: u64,
    /// Violations summed over runs.
    pub total: Report,
    /// Lowest seed with a violation or error.
    pub first_bad: Option<u64>,
}

impl Summary {
    pub fn of(outcomes: &[SeedOutcome]) -> Summary {
        let mut s = Summary::default();
        for o in outcomes {
            s.runs += 1;
            if o.clean() {
                s.clean += 1;
            } else if s.first_bad.is_none() {
                s.first_bad = Some(o.seed);
            }
            if !o.quiescent {
                s.not_quiescent += 1;
            }
            match &o.report {
                Ok(r) => s.total.merge(r.clone()),
                Err(_) => s.check_errors += 1,
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::bundled;

    #[test]
    fn parallel_runs_match_sequential_ones() {
        let s = bundled::load("tiny").unwrap();
        let par = run_seeds(&s, 0..8);
        for o in &par {
            let one = run_seed(&s, o.seed);
            assert_eq!(one.metrics, o.metrics);
        }
        let sum = Summary::of(&par);
        assert_eq!(sum.runs, 8);
        assert_eq!(sum.clean, 8);
        assert_eq!(sum.first_bad, None);
    }
}
