use thiserror::Error;

use crate::params::Side;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A parameter left its admissible range.
    #[error("{name} = {value} violates {constraint}")]
    Domain {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },

    /// The source intensities violate the cross-side constraint linking
    /// the decoy ratio to the single-photon weights.
    #[error("source constraint violated: nu_a/nu_b = {decoy_ratio}, single-photon weight ratio = {weight_ratio}")]
    ConstraintViolated { decoy_ratio: f64, weight_ratio: f64 },

    #[error("degenerate decoy intensities on side {side}: mu*nu - nu^2 = {gap}")]
    DegenerateDecoy { side: Side, gap: f64 },

    #[error("zero denominator in {0}")]
    ZeroDenominator(&'static str),

    /// A bound has no finite value for the supplied statistics. Callers
    /// report a zero rate instead of aborting.
    #[error("undefined bound: {0}")]
    UndefinedBound(&'static str),

    #[error("failure budget violated: {variant} variant, {chernoff} Chernoff, {sampling} sampling uses (expected 12/4/1)")]
    BudgetViolation {
        variant: u32,
        chernoff: u32,
        sampling: u32,
    },

    #[error("no feasible starting point found in the parameter box")]
    NoFeasiblePoint,
}

impl Error {
    pub(crate) fn domain(name: &'static str, value: f64, constraint: &'static str) -> Self {
        Error::Domain {
            name,
            value,
            constraint,
        }
    }
}
