//! End-to-end acceptance checks, one line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so that every criterion is
//! reported even when an earlier one fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qcka_cli::commands::scan_rows;
use qcka_cli::config::{GridConfig, RunConfig};
use qcka_cli::output::ScanRow;
use qcka_core::finite_key::{key_length, BoundAudit, FiniteKeyEstimator};
use qcka_core::params::single_excitation_states;
use qcka_core::validation::{photon_mc, run_suite, tagged, Effort, SuiteReport};
use qcka_core::{asymptotic_rate, expected_counts, finite_key, ChannelParams, Error, SecurityParams, SourceParams};

const REFERENCE: &str = include_str!("../configs/reference.json");

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn suite_outcome(r: &SuiteReport) -> Outcome {
    let failed: Vec<String> = r
        .checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| format!("{}: {}", c.name, c.detail))
        .collect();
    if failed.is_empty() {
        outcome(true, format!("{} checks passed", r.checks.len()))
    } else {
        outcome(false, failed.join("; "))
    }
}

fn constraint_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    let mut closed = 0;
    let mut draws = 0;
    while closed < 1000 {
        draws += 1;
        let mu_a = rng.random_range(1e-3..1.0);
        let mu_b = rng.random_range(1e-3..1.0);
        let src = SourceParams {
            mu_a,
            mu_b,
            nu_a: mu_a * rng.random_range(0.01..0.99),
            nu_b: mu_b * rng.random_range(0.01..0.99),
            t_a: rng.random_range(1e-3..0.999),
            t_b: 0.5,
            p_za: rng.random_range(0.01..0.99),
            p_zb: rng.random_range(0.01..0.99),
            p_0a: 0.3,
            p_0b: 0.3,
            p_nua: 0.3,
            p_nub: 0.3,
            delta: rng.random_range(0.01..1.5),
            q_z: rng.random_range(0.01..0.99),
        };
        let Ok(src) = src.with_constraint() else { continue };
        if src.validate_ranges().is_err() {
            continue;
        }
        let (z, x) = single_excitation_states(&src).expect("valid ranges");
        worst = worst.max(z.max_abs_diff(&x));
        closed += 1;
    }
    outcome(
        worst <= 1e-12,
        format!("{closed} parameter sets ({draws} drawn), largest state difference {worst:.3e}"),
    )
}

fn channel_agreement() -> Outcome {
    suite_outcome(&photon_mc::channel_suite(20, 10_000_000, 4.0, 2024))
}

fn bound_coverage() -> Outcome {
    suite_outcome(&run_suite("coverage", Effort::Full, 3).expect("known suite"))
}

fn decoy_soundness() -> Outcome {
    let mut r = tagged::asymptotic_suite(100, 4);
    r.checks.extend(tagged::finite_suite(100, 100, 1e-2, 5).checks);
    suite_outcome(&r)
}

fn finite_converges() -> Outcome {
    let src = SourceParams {
        mu_a: 0.12,
        mu_b: 0.45,
        nu_a: 0.004,
        nu_b: 0.03,
        t_a: 0.02,
        t_b: 0.5,
        p_za: 0.995,
        p_zb: 0.995,
        p_0a: 0.3,
        p_0b: 0.3,
        p_nua: 0.5,
        p_nub: 0.5,
        delta: 0.2,
        q_z: 0.9,
    }
    .with_constraint()
    .expect("constraint solvable");
    let ch = ChannelParams::reference(5.0, 25.0);
    let sec = SecurityParams::new(1e18, 1e-10, 1e-10);
    let r = asymptotic_rate(&src, &ch).expect("asymptotic rate").rate;
    let f = finite_key(&expected_counts(&src, &ch, &sec), &src, &ch, &sec)
        .expect("finite key")
        .rate;
    let close = (f - r).abs() <= 0.05 * r;

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = f64::NEG_INFINITY;
    let mut evaluated = 0;
    for _ in 0..200 {
        let (src, ch) = tagged::random_configuration(&mut rng);
        let Ok(a) = asymptotic_rate(&src, &ch) else { continue };
        for e in [8, 10, 12, 14, 16, 18] {
            let sec = SecurityParams::new(10f64.powi(e), 1e-10, 1e-10);
            if let Ok(fr) = finite_key(&expected_counts(&src, &ch, &sec), &src, &ch, &sec) {
                evaluated += 1;
                worst = worst.max(fr.rate - a.rate * (1.0 + 1e-6));
            }
        }
    }
    outcome(
        close && worst <= 0.0,
        format!(
            "l/N = {f:.6e} vs R = {r:.6e} (ratio {:.4}); {evaluated} finite points, max(l/N - R) = {worst:.3e}",
            f / r
        ),
    )
}

fn reference_config(delta_l: f64, start: f64, stop: f64, count: usize) -> RunConfig {
    let mut cfg = RunConfig::parse(REFERENCE).expect("shipped config parses");
    cfg.grid = Some(GridConfig {
        delta_l_km: delta_l,
        totals_km: None,
        start_km: Some(start),
        stop_km: Some(stop),
        count: Some(count),
    });
    cfg.optimizer.multistart = 8;
    cfg.optimizer.max_evals = 2000;
    cfg
}

/// `(total, asymmetric rate, symmetric rate)` per grid point.
fn paired(rows: &[ScanRow]) -> Vec<(f64, f64, f64)> {
    let mut out: Vec<(f64, f64, f64)> = Vec::new();
    for r in rows {
        let i = match out.iter().position(|p| p.0 == r.l_total_km) {
            Some(i) => i,
            None => {
                out.push((r.l_total_km, 0.0, 0.0));
                out.len() - 1
            }
        };
        match r.protocol.as_str() {
            "asymmetric" => out[i].1 = r.rate,
            _ => out[i].2 = r.rate,
        }
    }
    out
}

fn ordering_at_50_km() -> Outcome {
    let start = Instant::now();
    let cfg = reference_config(50.0, 50.0, 620.0, 20);
    let rows = match scan_rows(&cfg) {
        Ok((rows, _)) => rows,
        Err(e) => return outcome(false, format!("scan failed: {e}")),
    };
    let elapsed = start.elapsed();
    let pairs = paired(&rows);
    let bad: Vec<String> = pairs
        .iter()
        .filter(|(_, a, s)| (*a > 0.0 || *s > 0.0) && a < s)
        .map(|(l, a, s)| format!("{l} km: {a:e} < {s:e}"))
        .collect();
    let positive = pairs.iter().filter(|(_, a, s)| *a > 0.0 || *s > 0.0).count();
    outcome(
        bad.is_empty() && pairs.len() == 20 && elapsed < Duration::from_secs(1800),
        format!(
            "{} grid points, {positive} with a positive rate, {} orderings violated, {:.1} s{}",
            pairs.len(),
            bad.len(),
            elapsed.as_secs_f64(),
            if bad.is_empty() { String::new() } else { format!(": {}", bad.join("; ")) }
        ),
    )
}

fn ratio_and_distance() -> Outcome {
    let cfg = reference_config(100.0, 100.0, 800.0, 71);
    let rows = match scan_rows(&cfg) {
        Ok((rows, _)) => rows,
        Err(e) => return outcome(false, format!("scan failed: {e}")),
    };
    let pairs = paired(&rows);
    // longest run of consecutive points where the symmetric rate is
    // positive and the asymmetric one is ten times larger
    let (mut run, mut best, mut best_range) = (Vec::new(), 0, (0.0, 0.0));
    for &(l, a, s) in &pairs {
        if s > 0.0 && a >= 10.0 * s {
            run.push(l);
            if run.len() > best {
                best = run.len();
                best_range = (run[0], l);
            }
        } else {
            run.clear();
        }
    }
    let reach = |pick: fn(&(f64, f64, f64)) -> f64| {
        pairs.iter().filter(|p| pick(p) > 0.0).map(|p| p.0).fold(f64::NEG_INFINITY, f64::max)
    };
    let (asym, sym) = (reach(|p| p.1), reach(|p| p.2));
    let gap = asym - sym;
    outcome(
        best >= 3 && gap >= 150.0,
        format!(
            "ratio >= 10 on {best} consecutive points ({} to {} km); last positive rate at {asym} km (asymmetric) vs {sym} km (symmetric), gap {gap} km",
            best_range.0, best_range.1
        ),
    )
}

fn budget_audit() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut checked = 0;
    let mut problems = Vec::new();
    for _ in 0..50 {
        let (src, ch) = tagged::random_configuration(&mut rng);
        let sec = SecurityParams::new(1e12, 1e-10, 1e-10);
        let counts = expected_counts(&src, &ch, &sec);
        let Ok(r) = finite_key(&counts, &src, &ch, &sec) else { continue };
        checked += 1;
        if (r.audit.variant, r.audit.chernoff, r.audit.sampling) != (12, 4, 1) {
            problems.push(format!("audit {:?}", r.audit));
        }
        let mut est = FiniteKeyEstimator::new(&counts, &src, &sec).expect("estimator");
        let bounds = est.estimate_all().expect("bounds");
        let mut short = est.audit();
        short.chernoff -= 1;
        if !matches!(key_length(&bounds, &counts, &src, &ch, &sec, short), Err(Error::BudgetViolation { .. })) {
            problems.push("short audit accepted".into());
        }
        let extra = BoundAudit {
            sampling: 2,
            ..est.audit()
        };
        if key_length(&bounds, &counts, &src, &ch, &sec, extra).is_ok() {
            problems.push("oversized audit accepted".into());
        }
    }
    outcome(
        problems.is_empty() && checked > 0,
        format!("{checked} pipelines with 12/4/1 uses; tampered audits rejected{}", if problems.is_empty() { String::new() } else { format!("; {}", problems.join("; ")) }),
    )
}

fn run_twice(dir: &Path, name: &str, args: &[&str], files: &[&str]) -> Result<(), String> {
    let mut outputs = Vec::new();
    for round in 0..2 {
        let sub = dir.join(format!("{name}-{round}"));
        std::fs::create_dir_all(&sub).map_err(|e| e.to_string())?;
        let out = sub.join(files[0]);
        let status = Command::new(env!("CARGO_BIN_EXE_qcka"))
            .args(args)
            .arg("--out")
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(format!("{name}: {}", String::from_utf8_lossy(&status.stderr)));
        }
        let mut bytes = Vec::new();
        for f in files {
            bytes.push(std::fs::read(sub.join(f)).map_err(|e| format!("{name}: {f}: {e}"))?);
        }
        outputs.push(bytes);
    }
    if outputs[0] == outputs[1] {
        Ok(())
    } else {
        Err(format!("{name}: outputs differ"))
    }
}

fn reproducibility() -> Outcome {
    let dir = tempfile::tempdir().expect("temp dir");
    let mut cfg = reference_config(50.0, 60.0, 300.0, 3);
    cfg.optimizer.max_evals = 300;
    cfg.optimizer.multistart = 3;
    let cfg_path = dir.path().join("small.json");
    std::fs::write(&cfg_path, serde_json::to_string(&cfg).expect("serializable")).expect("write config");
    let c = cfg_path.to_str().expect("utf-8 path");
    let runs: [(&str, Vec<&str>, Vec<&str>); 5] = [
        ("rate", vec!["rate", "--config", c], vec!["rate.json"]),
        ("scan", vec!["scan", "--config", c, "--seed", "99"], vec!["scan.csv"]),
        (
            "scan-asymptotic",
            vec!["scan", "--config", c, "--regime", "asymptotic"],
            vec!["scan.csv"],
        ),
        (
            "simulate",
            vec!["simulate", "--config", c, "--seed", "17"],
            vec!["sim.json", "sim.counts.json"],
        ),
        ("validate", vec!["validate", "--quick", "--seed", "5"], vec!["validate.json"]),
    ];
    let mut problems = Vec::new();
    for (name, args, files) in &runs {
        if let Err(e) = run_twice(dir.path(), name, args, files) {
            problems.push(e);
        }
    }
    outcome(
        problems.is_empty(),
        if problems.is_empty() {
            format!("{} seeded commands reproduced byte for byte", runs.len())
        } else {
            problems.join("; ")
        },
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("constraint identity", constraint_identity),
        ("channel agrees with photon-level Monte-Carlo", channel_agreement),
        ("bound coverage", bound_coverage),
        ("decoy soundness", decoy_soundness),
        ("finite key converges to asymptotic rate", finite_converges),
        ("asymmetric >= symmetric at 50 km difference", ordering_at_50_km),
        ("tenfold rate and longer reach at 100 km difference", ratio_and_distance),
        ("failure-budget audit", budget_audit),
        ("seeded runs reproduce", reproducibility),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let o = f();
        println!(
            "[{}] {} {name}: {} ({:.1} s)",
            if o.passed { "PASS" } else { "FAIL" },
            i + 1,
            o.detail,
            t.elapsed().as_secs_f64()
        );
        failed += usize::from(!o.passed);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
