//! Key rates for tripartite sending-or-not-sending conference key agreement
//! over channels of unequal length.
//!
//! Alice and Bob each send weak coherent pulses to Charlie, who performs the
//! measurement. The crate models the source and channel, computes
//! asymptotic and composable finite-key rates, and optimizes source
//! parameters against a channel.

pub mod asymptotic;
pub mod channel;
pub mod entropy;
pub mod error;
pub mod finite_key;
pub mod optimizer;
pub mod params;
pub mod stat_bounds;
pub mod validation;

pub use asymptotic::{asymptotic_rate, AsymptoticResult};
pub use channel::{expected_counts, sample_counts, ExpectedYields, ObservedCounts};
pub use error::{Error, Result};
pub use finite_key::{finite_key, FiniteKeyResult};
pub use params::{solve_tb, ChannelParams, Intensity, PairTable, SecurityParams, Side, SourceParams};
