//! The `rate`, `scan`, `simulate` and `validate` commands.
//!
//! Each command returns the text it produced; the caller decides where it
//! goes. Side files (the counts dump of `simulate`) are written here.

use std::path::Path;

use serde::Serialize;

use qcka_core::channel::ObservedCounts;
use qcka_core::optimizer::{monotonicity_violations, scan, Objective, Protocol};
use qcka_core::validation::{run_suite, Effort, SuiteReport, SUITES};
use qcka_core::{
    asymptotic_rate, expected_counts, finite_key, sample_counts, AsymptoticResult, ChannelParams, FiniteKeyResult,
    SecurityParams, SourceParams,
};

use crate::config::{RunConfig, SourceConfig};
use crate::output::{counts_path, csv_string, json_string, write_file, ScanRow};
use crate::CliError;

/// Command-line overrides of configuration fields.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub protocol: Option<Protocol>,
    pub regime: Option<Objective>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(p) = self.protocol {
            cfg.protocol = Some(p);
        }
        if let Some(r) = self.regime {
            cfg.regime = r;
        }
    }
}

fn regime_name(r: Objective) -> &'static str {
    match r {
        Objective::Asymptotic => "asymptotic",
        Objective::Finite => "finite",
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateReport {
    pub protocol: Protocol,
    pub regime: Objective,
    /// Key bits per round.
    pub rate: f64,
    pub source: Option<SourceParams>,
    pub channel: ChannelParams,
    pub security: Option<SecurityParams>,
    pub asymptotic: Option<AsymptoticResult>,
    pub finite: Option<FiniteKeyResult>,
    pub note: Option<String>,
}

fn symmetric_settings(s: &SourceConfig) -> bool {
    s.mu_a == s.mu_b
        && s.nu_a == s.nu_b
        && s.p_za == s.p_zb
        && s.p_0a == s.p_0b
        && s.p_nua == s.p_nub
        && s.t_b.is_none_or(|t| t == s.t_a)
}

pub fn rate_report(cfg: &RunConfig) -> Result<RateReport, CliError> {
    let protocol = cfg.protocol.unwrap_or(Protocol::Asymmetric);
    let source = cfg.source()?;
    if protocol == Protocol::Symmetric && !symmetric_settings(&source) {
        return Err(CliError::Config(
            "symmetric protocol needs identical settings on both sides".into(),
        ));
    }
    let security = match cfg.regime {
        Objective::Finite => Some(cfg.security()?),
        Objective::Asymptotic => None,
    };
    let channel = cfg.channel.params();
    channel.validate()?;
    let mut report = RateReport {
        protocol,
        regime: cfg.regime,
        rate: 0.0,
        source: None,
        channel,
        security,
        asymptotic: None,
        finite: None,
        note: None,
    };
    if source.is_vacuum() {
        report.note = Some("all intensities are zero: no light is sent and no key can be made".into());
        return Ok(report);
    }
    let src = source.resolve()?;
    report.source = Some(src);
    match security {
        None => {
            let r = asymptotic_rate(&src, &channel)?;
            report.rate = r.rate;
            report.asymptotic = Some(r);
        }
        Some(sec) => {
            sec.validate()?;
            let counts = expected_counts(&src, &channel, &sec);
            let r = finite_key(&counts, &src, &channel, &sec)?;
            report.rate = r.rate;
            report.finite = Some(r);
        }
    }
    Ok(report)
}

pub fn cmd_rate(cfg: &RunConfig) -> Result<String, CliError> {
    json_string(&rate_report(cfg)?)
}

/// Rows of a distance scan, in grid order with the symmetric protocol
/// first at each point. Also returns human-readable diagnostics.
pub fn scan_rows(cfg: &RunConfig) -> Result<(Vec<ScanRow>, Vec<String>), CliError> {
    let protocols = match cfg.protocol {
        Some(p) => vec![p],
        None => vec![Protocol::Asymmetric, Protocol::Symmetric],
    };
    let grid = cfg.grid()?;
    let sec = match cfg.regime {
        Objective::Finite => cfg.security()?,
        // unused by the asymptotic objective
        Objective::Asymptotic => SecurityParams::new(1.0, 0.5, 0.5),
    };
    let spec = cfg.optimization_spec(Protocol::Asymmetric);
    let points = scan(&spec, &grid, &cfg.channel.params(), &sec, &protocols)?;

    let mut diagnostics = Vec::new();
    for p in &protocols {
        let mine: Vec<_> = points.iter().filter(|x| x.protocol == *p).cloned().collect();
        for i in monotonicity_violations(&mine) {
            diagnostics.push(format!(
                "{}: rate rises from {} at {} km to {} at {} km",
                p.name(),
                mine[i].result.rate,
                mine[i].l_total,
                mine[i + 1].result.rate,
                mine[i + 1].l_total
            ));
        }
    }

    let mut rows = Vec::with_capacity(points.len());
    for p in &points {
        let ch = cfg.channel.params().with_split(p.l_total, grid.delta_l);
        let src = p.result.source;
        let mut row = ScanRow {
            l_total_km: p.l_total,
            l_a_km: p.l_a,
            l_b_km: p.l_b,
            protocol: p.protocol.name().into(),
            regime: regime_name(cfg.regime).into(),
            rate: p.result.rate,
            key_length: None,
            e1ph: 0.5,
            s1z: None,
            s0z: None,
        };
        match cfg.regime {
            Objective::Asymptotic => {
                let r = asymptotic_rate(&src, &ch)?;
                row.e1ph = r.e1ph;
            }
            Objective::Finite => {
                let counts = expected_counts(&src, &ch, &sec);
                let r = finite_key(&counts, &src, &ch, &sec)?;
                row.key_length = Some(r.l);
                row.e1ph = r.e1ph_up;
                row.s1z = Some(r.s1z_low);
                row.s0z = Some(r.s0z_low);
            }
        }
        rows.push(row);
    }
    Ok((rows, diagnostics))
}

pub fn cmd_scan(cfg: &RunConfig) -> Result<(String, Vec<String>), CliError> {
    let (rows, diagnostics) = scan_rows(cfg)?;
    Ok((csv_string(&rows)?, diagnostics))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulateReport {
    pub seed: u64,
    pub source: SourceParams,
    pub channel: ChannelParams,
    pub security: SecurityParams,
    /// Key length from the sampled counts.
    pub l: f64,
    pub finite: Option<FiniteKeyResult>,
    /// Key length the same configuration yields on expected counts.
    pub l_expected: Option<f64>,
    pub counts_file: Option<String>,
    pub counts: Option<ObservedCounts>,
}

/// Samples one run's counts and computes its key length. With `out`, the
/// counts go to `<stem>.counts.json` beside it instead of into the report.
pub fn cmd_simulate(cfg: &RunConfig, out: Option<&Path>) -> Result<String, CliError> {
    let src = cfg.source()?.resolve()?;
    let sec = cfg.security()?;
    let ch = cfg.channel.params();
    ch.validate()?;
    let (counts, finite, l_expected) = if sec.n_rounds == 0.0 {
        let counts = ObservedCounts::default();
        (counts, None, None)
    } else {
        sec.validate()?;
        let counts = sample_counts(&src, &ch, &sec, cfg.seed)?;
        let r = finite_key(&counts, &src, &ch, &sec)?;
        let expected = finite_key(&expected_counts(&src, &ch, &sec), &src, &ch, &sec)?;
        (counts, Some(r), Some(expected.l))
    };
    let mut report = SimulateReport {
        seed: cfg.seed,
        source: src,
        channel: ch,
        security: sec,
        l: finite.as_ref().map_or(0.0, |r| r.l),
        finite,
        l_expected,
        counts_file: None,
        counts: None,
    };
    match out {
        Some(path) => {
            let cp = counts_path(path);
            write_file(&cp, &json_string(&counts)?)?;
            report.counts_file = cp.file_name().map(|n| n.to_string_lossy().into_owned());
        }
        None => report.counts = Some(counts),
    }
    json_string(&report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidateReport {
    pub seed: u64,
    pub passed: bool,
    pub suites: Vec<SuiteReport>,
}

/// Runs the named suites. Returns the report and a per-suite summary.
pub fn cmd_validate(suites: &[String], effort: Effort, seed: u64) -> Result<(ValidateReport, Vec<String>), CliError> {
    for s in suites {
        if !SUITES.contains(&s.as_str()) {
            return Err(CliError::Config(format!(
                "unknown suite `{s}` (known: {})",
                SUITES.join(", ")
            )));
        }
    }
    let mut reports = Vec::new();
    let mut summary = Vec::new();
    for s in suites {
        let r = run_suite(s, effort, seed).expect("known suite");
        let failed: Vec<_> = r.checks.iter().filter(|c| !c.passed).collect();
        summary.push(format!(
            "[{}] {s}: {} of {} checks passed",
            if failed.is_empty() { "PASS" } else { "FAIL" },
            r.checks.len() - failed.len(),
            r.checks.len()
        ));
        for c in failed {
            summary.push(format!("    {}: {}", c.name, c.detail));
        }
        reports.push(r);
    }
    let report = ValidateReport {
        seed,
        passed: reports.iter().all(SuiteReport::passed),
        suites: reports,
    };
    Ok((report, summary))
}

/// Names of every failed check, prefixed with its suite.
pub fn failed_checks(report: &ValidateReport) -> Vec<String> {
    report
        .suites
        .iter()
        .flat_map(|s| s.checks.iter().filter(|c| !c.passed).map(move |c| format!("{}/{}", s.suite, c.name)))
        .collect()
}
