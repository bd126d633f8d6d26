//! Independent checks of the analytic model and the bounds: a photon-level
//! Monte-Carlo of the station, empirical coverage of the concentration
//! bounds, and a photon-number-tagged soundness check of the estimators.

pub mod coverage;
pub mod photon_mc;
pub mod tagged;

use serde::Serialize;

use crate::stat_bounds::{chernoff_observed_bounds, gamma_sampling, variant_expected_bounds};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

pub const SUITES: [&str; 3] = ["channel", "coverage", "soundness"];

/// How much work each suite does.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Effort {
    Full,
    Quick,
}

/// Runs one named suite; `None` for an unknown name.
pub fn run_suite(name: &str, effort: Effort, seed: u64) -> Option<SuiteReport> {
    let full = effort == Effort::Full;
    let report = match name {
        "channel" => {
            let (configs, trials) = if full { (20, 2_000_000) } else { (3, 200_000) };
            photon_mc::channel_suite(configs, trials, 5.0, seed)
        }
        "coverage" => {
            let trials = if full { 100_000 } else { 5_000 };
            let mut checks = Vec::new();
            for eps in [1e-2, 1e-3] {
                checks.extend(coverage::observed_coverage(chernoff_observed_bounds, eps, trials, seed));
                checks.extend(coverage::expected_coverage(variant_expected_bounds, eps, trials, seed));
                checks.extend(coverage::sampling_coverage(gamma_sampling, eps, trials, seed));
            }
            SuiteReport {
                suite: "coverage".into(),
                checks,
            }
        }
        "soundness" => {
            let (asym, configs, runs) = if full { (100, 100, 100) } else { (20, 10, 20) };
            let mut report = tagged::asymptotic_suite(asym, seed);
            report.checks.extend(tagged::finite_suite(configs, runs, 1e-2, seed ^ 0x5eed).checks);
            report
        }
        _ => return None,
    };
    Some(report)
}
