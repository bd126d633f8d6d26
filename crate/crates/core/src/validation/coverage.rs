//! Empirical coverage of the concentration bounds.
//!
//! Each suite takes the bound under test as a function argument so that a
//! deliberately broken bound can be fed through the same harness.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Hypergeometric};

use crate::error::Result;

use super::Check;

/// Allowed violations: `eps + 3 sigma` of a binomial frequency.
pub fn tolerance(eps: f64, trials: u64) -> f64 {
    eps + 3.0 * (eps * (1.0 - eps) / trials as f64).sqrt()
}

fn binomial(rng: &mut ChaCha8Rng, n: u64, p: f64) -> u64 {
    Binomial::new(n, p).expect("valid binomial").sample(rng)
}

fn check(name: String, violations: u64, trials: u64, eps: f64) -> Check {
    let freq = violations as f64 / trials as f64;
    let limit = tolerance(eps, trials);
    Check {
        passed: freq <= limit,
        detail: format!("violation frequency {freq:.5} (limit {limit:.5})"),
        name,
    }
}

/// `(trials n, success probability p)` cases for the count bounds.
pub const COUNT_CASES: [(u64, f64); 5] = [
    (1_000, 0.005),
    (2_000, 0.05),
    (100_000, 0.01),
    (10_000_000, 0.001),
    (100_000_000, 0.01),
];

/// Bound on the observed count given its expectation, `(lower, upper)`.
pub type ObservedBound = fn(f64, f64) -> Result<(f64, f64)>;
/// Bound on the expectation given an observed count, `(lower, upper)`.
pub type ExpectedBound = fn(f64, f64) -> Result<(f64, f64)>;
/// Sampling deviation `gamma(n, k, lambda, eps)`.
pub type SamplingBound = fn(f64, f64, f64, f64) -> Result<f64>;

/// Checks each side of an expectation-to-observation bound separately.
pub fn observed_coverage(bound: ObservedBound, eps: f64, trials: u64, seed: u64) -> Vec<Check> {
    let mut out = Vec::new();
    for (case, &(n, p)) in COUNT_CASES.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(case as u64);
        let mean = n as f64 * p;
        let (lo, hi) = bound(mean, eps).expect("valid arguments");
        let (mut below, mut above) = (0, 0);
        for _ in 0..trials {
            let x = binomial(&mut rng, n, p) as f64;
            below += (x < lo) as u64;
            above += (x > hi) as u64;
        }
        out.push(check(format!("observed lower, n={n} p={p} eps={eps}"), below, trials, eps));
        out.push(check(format!("observed upper, n={n} p={p} eps={eps}"), above, trials, eps));
    }
    out
}

/// Checks each side of an observation-to-expectation bound separately.
pub fn expected_coverage(bound: ExpectedBound, eps: f64, trials: u64, seed: u64) -> Vec<Check> {
    let mut out = Vec::new();
    for (case, &(n, p)) in COUNT_CASES.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(100 + case as u64);
        let mean = n as f64 * p;
        let (mut below, mut above) = (0, 0);
        for _ in 0..trials {
            let x = binomial(&mut rng, n, p) as f64;
            let (lo, hi) = bound(x, eps).expect("valid arguments");
            below += (mean < lo) as u64;
            above += (mean > hi) as u64;
        }
        out.push(check(format!("expected lower, n={n} p={p} eps={eps}"), below, trials, eps));
        out.push(check(format!("expected upper, n={n} p={p} eps={eps}"), above, trials, eps));
    }
    out
}

/// `(remainder n, sample k, population error rate)` cases.
pub const SAMPLING_CASES: [(u64, u64, f64); 4] = [(1_000, 1_000, 0.05), (5_000, 500, 0.1), (300, 3_000, 0.2), (20_000, 20_000, 0.02)];

/// Splits a population with a fixed number of errors uniformly at random
/// and checks that the remainder's error rate stays below the sample's rate
/// plus the deviation.
///
/// A sample without errors is evaluated at one error's worth of rate, as the
/// key-length pipeline does.
pub fn sampling_coverage(bound: SamplingBound, eps: f64, trials: u64, seed: u64) -> Vec<Check> {
    let mut out = Vec::new();
    for (case, &(n, k, rate)) in SAMPLING_CASES.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(200 + case as u64);
        let errors = ((n + k) as f64 * rate).round() as u64;
        let draw = Hypergeometric::new(n + k, errors, k).expect("valid hypergeometric");
        let mut violations = 0;
        for _ in 0..trials {
            let in_sample = draw.sample(&mut rng);
            let lambda = in_sample as f64 / k as f64;
            let remainder = (errors - in_sample) as f64 / n as f64;
            let eval = lambda.max(1.0 / k as f64).min(0.5);
            let g = bound(n as f64, k as f64, eval, eps).expect("valid arguments");
            violations += (remainder > lambda + g) as u64;
        }
        out.push(check(
            format!("sampling, n={n} k={k} rate={rate} eps={eps}"),
            violations,
            trials,
            eps,
        ));
    }
    out
}
