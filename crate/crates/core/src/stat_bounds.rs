//! Concentration bounds with explicit failure probabilities.
//!
//! Three tools convert between observed and expected counts:
//!
//! * [`chernoff_observed_bounds`]: from a known expectation to an interval
//!   that contains the observed sum of independent Bernoulli trials;
//! * [`variant_expected_bounds`]: the inverse direction, from an observed
//!   count to an interval on its expectation;
//! * [`gamma_sampling`]: the deviation term for random sampling without
//!   replacement, bounding the error rate of an unseen population by the
//!   rate seen in a sample.
//!
//! Each returned side fails with probability at most `eps`.


use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the security parameter is split among the estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundBudget {
    /// Failure probability given to each individual term.
    pub eps_term: f64,
    pub uses_variant: u32,
    pub uses_chernoff: u32,
    pub uses_sampling: u32,
    /// Smooth min-entropy error terms.
    pub entropy_terms: u32,
}

impl BoundBudget {
    pub const VARIANT_USES: u32 = 12;
    pub const CHERNOFF_USES: u32 = 4;
    pub const SAMPLING_USES: u32 = 1;
    pub const ENTROPY_TERMS: u32 = 9;

    pub fn new(eps_sec: f64) -> Self {
        let total = Self::VARIANT_USES + Self::CHERNOFF_USES + Self::SAMPLING_USES + Self::ENTROPY_TERMS;
        BoundBudget {
            eps_term: eps_sec / total as f64,
            uses_variant: Self::VARIANT_USES,
            uses_chernoff: Self::CHERNOFF_USES,
            uses_sampling: Self::SAMPLING_USES,
            entropy_terms: Self::ENTROPY_TERMS,
        }
    }

    pub fn total_terms(&self) -> u32 {
        self.uses_variant + self.uses_chernoff + self.uses_sampling + self.entropy_terms
    }
}

fn beta(eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::domain("eps", eps, "0 < eps < 1"));
    }
    Ok((1.0 / eps).ln())
}

fn check_count(x: f64) -> Result<()> {
    if !(x >= 0.0 && x.is_finite()) {
        return Err(Error::domain("count", x, "finite and >= 0"));
    }
    Ok(())
}

/// `(lower, upper)` bounds on the expectation behind an observed count `x`.
pub fn variant_expected_bounds(x: f64, eps: f64) -> Result<(f64, f64)> {
    check_count(x)?;
    let b = beta(eps)?;
    let upper = x + b + (2.0 * b * x + b * b).sqrt();
    let lower = (x - b / 2.0 - (2.0 * b * x + b * b / 4.0).sqrt()).max(0.0);
    Ok((lower, upper))
}

/// `(lower, upper)` bounds on the observed count given its expectation.
pub fn chernoff_observed_bounds(x_star: f64, eps: f64) -> Result<(f64, f64)> {
    check_count(x_star)?;
    let b = beta(eps)?;
    let upper = x_star + b / 2.0 + (2.0 * b * x_star + b * b / 4.0).sqrt();
    let lower = (x_star - (2.0 * b * x_star).sqrt()).max(0.0);
    Ok((lower, upper))
}

/// Deviation term for sampling without replacement.
///
/// A population of `n + k` items is split uniformly at random into a sample
/// of `k` and a remainder of `n`. If the sample shows error rate `lambda`,
/// the remainder's error rate exceeds `lambda + gamma` with probability at
/// most `eps`.
///
/// The sample count obeys the binomial Chernoff bound of the population
/// rate `p` (Hoeffding's comparison of sampling with and without
/// replacement). The remainder exceeds the sample by `gamma` exactly when
/// `p - lambda = u = gamma n / (n + k)`, and bounding the divergence
/// `D(lambda || p) >= u^2 / (2 (lambda + u)(1 - lambda))` turns
/// `k D = ln(1/eps)` into a quadratic in `u`.
pub fn gamma_sampling(n: f64, k: f64, lambda: f64, eps: f64) -> Result<f64> {
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::domain("n", n, "n > 0"));
    }
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::domain("k", k, "k > 0"));
    }
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::domain("lambda", lambda, "0 < lambda < 1"));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::domain("eps", eps, "0 < eps < 1"));
    }
    let l = -eps.ln();
    let q = 1.0 - lambda;
    let u = (l * q + (l * l * q * q + 2.0 * k * l * lambda * q).sqrt()) / k;
    Ok(u * (n + k) / n)
}
