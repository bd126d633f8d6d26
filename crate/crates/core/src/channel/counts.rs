//! Announced-event bookkeeping and finite-size count generation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use super::ExpectedYields;
use crate::error::{Error, Result};
use crate::params::{ChannelParams, Intensity, PairTable, SecurityParams, Side, SourceParams};

/// Statistics revealed after a run, or their expectations.
///
/// Counts are stored as `f64` so that the same type carries both sampled
/// integers and the fractional expected values used for optimization.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservedCounts {
    pub n_rounds: f64,
    /// `N_{k_a k_b}`: announced rounds per intensity pair.
    pub announced: PairTable<f64>,
    /// `n^z_{k_a k_b}`: effective Z-detector events per pair.
    pub z_events: PairTable<f64>,
    /// `n^x_{k_a k_b}`: effective X-detector events per pair.
    pub x_events: PairTable<f64>,
    /// `n^z`: effective events of all-Z rounds (the raw key).
    pub sifted: f64,
    pub sifted_errors: f64,
    /// Post-selected effective events and errors of the decoy pair.
    pub pm_events: f64,
    pub pm_errors: f64,
}

impl ObservedCounts {
    /// Observed error rate of the raw key.
    pub fn e_z(&self) -> f64 {
        if self.sifted > 0.0 {
            self.sifted_errors / self.sifted
        } else {
            0.0
        }
    }

    pub fn check(&self) -> Result<()> {
        for (a, b, n) in self.announced.iter() {
            let z = self.z_events.get(a, b);
            let x = self.x_events.get(a, b);
            if n < 0.0 || z < 0.0 || x < 0.0 || z > n || x > n {
                return Err(Error::domain("event count", z.max(x), "0 <= n <= N"));
            }
        }
        if self.pm_errors > self.pm_events || self.pm_errors < 0.0 {
            return Err(Error::domain("pm_errors", self.pm_errors, "0 <= m <= n_pm"));
        }
        if self.sifted_errors > self.sifted || self.sifted_errors < 0.0 {
            return Err(Error::domain("sifted_errors", self.sifted_errors, "0 <= m <= n_z"));
        }
        Ok(())
    }
}

/// Probability that a sender announces intensity `k` (any basis), and the
/// part of it that comes from the Z basis.
fn announce_prob(src: &SourceParams, side: Side, k: Intensity) -> (f64, f64) {
    let pz = src.p_z(side);
    let t = src.t(side);
    let from_z = match k {
        Intensity::Signal => pz * t,
        Intensity::Vacuum => pz * (1.0 - t),
        Intensity::Decoy => 0.0,
    };
    (from_z + (1.0 - pz) * src.x_setting_prob(side, k), from_z)
}

/// Probability that a round is announced with intensities `(k_a, k_b)`.
///
/// A Z-basis sender announces `mu` if it sent and `0` if it did not. Rounds
/// where both senders chose Z are never announced.
pub fn announced_probabilities(src: &SourceParams) -> PairTable<f64> {
    PairTable::from_fn(|a, b| {
        let (pa, za) = announce_prob(src, Side::A, a);
        let (pb, zb) = announce_prob(src, Side::B, b);
        pa * pb - za * zb
    })
}

pub fn announced_totals(src: &SourceParams, sec: &SecurityParams) -> PairTable<f64> {
    let p = announced_probabilities(src);
    PairTable::from_fn(|a, b| p.get(a, b) * sec.n_rounds)
}

pub fn all_z_probability(src: &SourceParams) -> f64 {
    src.p_za * src.p_zb
}

/// Expected values of every count, used for deterministic rate evaluation.
pub fn expected_counts(
    src: &SourceParams,
    ch: &ChannelParams,
    sec: &SecurityParams,
) -> ObservedCounts {
    let y = ExpectedYields::compute(src, ch);
    expected_counts_from(src, sec, &y)
}

pub(crate) fn expected_counts_from(
    src: &SourceParams,
    sec: &SecurityParams,
    y: &ExpectedYields,
) -> ObservedCounts {
    let announced = announced_totals(src, sec);
    let n_dd = announced.get(Intensity::Decoy, Intensity::Decoy);
    let sifted = sec.n_rounds * all_z_probability(src) * y.sifted_gain;
    let pm_events = n_dd * y.pm_gain;
    ObservedCounts {
        n_rounds: sec.n_rounds,
        announced,
        z_events: PairTable::from_fn(|a, b| announced.get(a, b) * y.z_gain.get(a, b)),
        x_events: PairTable::from_fn(|a, b| announced.get(a, b) * y.x_gain.get(a, b)),
        sifted,
        sifted_errors: sifted * y.sifted_error,
        pm_events,
        pm_errors: pm_events * y.pm_error,
    }
}

fn binomial(rng: &mut ChaCha8Rng, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("p checked").sample(rng)
}

/// Draws one finite-size data set.
///
/// Round allocation across the nine announced pairs and the all-Z class is
/// multinomial. Z and X detector events are independent binomials given the
/// allocation (the two detector paths see independent coherent states);
/// post-selected events are thinned from the decoy-pair X events and errors
/// are drawn conditionally on events. Deterministic for a given seed.
pub fn sample_counts(
    src: &SourceParams,
    ch: &ChannelParams,
    sec: &SecurityParams,
    seed: u64,
) -> Result<ObservedCounts> {
    let n = sec.n_rounds;
    if !(n >= 0.0 && n.fract() == 0.0 && n <= u64::MAX as f64) {
        return Err(Error::domain("n_rounds", n, "non-negative integer count"));
    }
    let n = n as u64;
    let y = ExpectedYields::compute(src, ch);
    let probs = announced_probabilities(src);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Sequential binomials give the multinomial allocation.
    let mut remaining = n;
    let mut mass = 1.0;
    let mut announced = PairTable::<f64>::default();
    for (a, b, p) in probs.iter() {
        let k = binomial(&mut rng, remaining, (p / mass).min(1.0));
        announced.set(a, b, k as f64);
        remaining -= k;
        mass -= p;
    }
    let all_z = remaining;

    let mut z_events = PairTable::<f64>::default();
    let mut x_events = PairTable::<f64>::default();
    let mut pm_events = 0;
    for (a, b, k) in announced.iter() {
        let k = k as u64;
        z_events.set(a, b, binomial(&mut rng, k, y.z_gain.get(a, b)) as f64);
        let nx = binomial(&mut rng, k, y.x_gain.get(a, b));
        x_events.set(a, b, nx as f64);
        if (a, b) == (Intensity::Decoy, Intensity::Decoy) {
            let qx = y.x_gain.get(a, b);
            let frac = if qx > 0.0 { y.pm_gain / qx } else { 0.0 };
            pm_events = binomial(&mut rng, nx, frac);
        }
    }
    let pm_errors = binomial(&mut rng, pm_events, y.pm_error);
    let sifted = binomial(&mut rng, all_z, y.sifted_gain);
    let sifted_errors = binomial(&mut rng, sifted, y.sifted_error);

    Ok(ObservedCounts {
        n_rounds: n as f64,
        announced,
        z_events,
        x_events,
        sifted: sifted as f64,
        sifted_errors: sifted_errors as f64,
        pm_events: pm_events as f64,
        pm_errors: pm_errors as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::tests_support::reference_source;

    #[test]
    fn vacuum_pair_total_matches_closed_form() {
        let src = reference_source();
        let sec = SecurityParams::new(1e10, 1e-10, 1e-10);
        let n00 = announced_totals(&src, &sec).get(Intensity::Vacuum, Intensity::Vacuum);
        let s = &src;
        let expected = ((1.0 - s.p_za) * (1.0 - s.p_zb) * s.p_0a * s.p_0b
            + (1.0 - s.p_za) * s.p_zb * s.p_0a * (1.0 - s.t_b)
            + s.p_za * (1.0 - s.p_zb) * (1.0 - s.t_a) * s.p_0b)
            * sec.n_rounds;
        assert!(((n00 - expected) / expected).abs() < 1e-14);
    }

    #[test]
    fn bookkeeping_adds_up() {
        let src = reference_source();
        let total: f64 = announced_probabilities(&src).iter().map(|(_, _, p)| p).sum();
        assert!((total + all_z_probability(&src) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn all_z_sources_announce_nothing() {
        let mut src = reference_source();
        src.p_za = 1.0;
        src.p_zb = 1.0;
        assert!(announced_probabilities(&src).iter().all(|(_, _, p)| p == 0.0));
    }

    #[test]
    fn zero_rounds_zero_counts() {
        let src = reference_source();
        let ch = ChannelParams::reference(10.0, 60.0);
        let c = sample_counts(&src, &ch, &SecurityParams::new(0.0, 1e-10, 1e-10), 1).unwrap();
        assert_eq!(c.sifted, 0.0);
        assert_eq!(c.pm_events, 0.0);
        assert!(c.announced.iter().all(|(_, _, n)| n == 0.0));
        assert!(c.z_events.iter().chain(c.x_events.iter()).all(|(_, _, n)| n == 0.0));
    }

    #[test]
    fn same_seed_same_counts() {
        let src = reference_source();
        let ch = ChannelParams::reference(10.0, 60.0);
        let sec = SecurityParams::new(1e9, 1e-10, 1e-10);
        let a = sample_counts(&src, &ch, &sec, 42).unwrap();
        let b = sample_counts(&src, &ch, &sec, 42).unwrap();
        assert_eq!(a, b);
        let c = sample_counts(&src, &ch, &sec, 43).unwrap();
        assert_ne!(a, c);
        a.check().unwrap();
    }

    #[test]
    fn rejects_fractional_round_count() {
        let src = reference_source();
        let ch = ChannelParams::reference(10.0, 60.0);
        assert!(sample_counts(&src, &ch, &SecurityParams::new(10.5, 1e-10, 1e-10), 1).is_err());
    }

    #[test]
    fn sampled_rates_concentrate() {
        let src = reference_source();
        let ch = ChannelParams {
            p_d: 1e-6,
            ..ChannelParams::reference(10.0, 60.0)
        };
        let sec = SecurityParams::new(1e10, 1e-10, 1e-10);
        let obs = sample_counts(&src, &ch, &sec, 9).unwrap();
        let exp = expected_counts(&src, &ch, &sec);
        let within = |o: f64, trials: f64, p: f64| {
            let sd = (trials * p * (1.0 - p)).sqrt().max(1.0);
            (o - trials * p).abs() <= 5.0 * sd
        };
        let probs = announced_probabilities(&src);
        for (a, b, p) in probs.iter() {
            assert!(within(obs.announced.get(a, b), 1e10, p));
        }
        let y = ExpectedYields::compute(&src, &ch);
        for (a, b, n) in obs.announced.iter() {
            assert!(within(obs.z_events.get(a, b), n, y.z_gain.get(a, b)), "z {a:?}{b:?}");
            assert!(within(obs.x_events.get(a, b), n, y.x_gain.get(a, b)), "x {a:?}{b:?}");
        }
        assert!(within(obs.sifted, 1e10 * all_z_probability(&src), y.sifted_gain));
        let sd = exp.sifted.sqrt();
        assert!((obs.sifted - exp.sifted).abs() < 6.0 * sd);
    }
}
