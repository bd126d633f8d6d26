//! Composable finite-key length.
//!
//! The estimator turns announced statistics into bounds on the vacuum and
//! joint single-photon events of the raw key and on the phase error of the
//! latter. Each bound application spends `eps_sec / 26` of the failure
//! budget; the pipeline keeps an audit of how many it used and
//! [`key_length`] refuses to produce a key unless the audit matches the
//! allocation exactly:
//!
//! | tool                        | uses | where                                     |
//! |-----------------------------|------|-------------------------------------------|
//! | observed -> expected        | 12   | six Z-detector and six X-detector counts  |
//! | expected -> observed        | 4    | `s0z`, `s1z`, `s1pm`, `t0pm`              |
//! | sampling without replacement| 1    | phase error                               |

use serde::{Deserialize, Serialize};

use crate::asymptotic::{decoy_bracket, decoy_gap};
use crate::channel::ObservedCounts;
use crate::entropy::h;
use crate::error::{Error, Result};
use crate::params::{ChannelParams, Intensity, SecurityParams, Side, SourceParams};
use crate::stat_bounds::{chernoff_observed_bounds, gamma_sampling, variant_expected_bounds, BoundBudget};

use Intensity::{Decoy, Signal, Vacuum};

/// Number of bound applications performed so far.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BoundAudit {
    pub variant: u32,
    pub chernoff: u32,
    pub sampling: u32,
}

impl BoundAudit {
    pub fn matches(&self, budget: &BoundBudget) -> bool {
        self.variant == budget.uses_variant
            && self.chernoff == budget.uses_chernoff
            && self.sampling == budget.uses_sampling
    }
}

/// Lower bounds on joint single-photon events, split by which sender
/// contributed the photon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingleBounds {
    /// Observed-count lower bound on the joint events.
    pub total: f64,
    /// Expected-count lower bounds (before the expected -> observed step).
    pub from_a: f64,
    pub from_b: f64,
}

/// Every bounded quantity feeding the key length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatedBounds {
    pub s0z: f64,
    pub single_z: SingleBounds,
    pub single_pm: SingleBounds,
    pub t1pm_up: f64,
    pub t0pm_low: f64,
    /// `None` when no post-selected single-photon events could be certified.
    pub e1ph_up: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteKeyResult {
    /// Final key length in bits, floored at zero. Fractional when computed
    /// from expected counts.
    pub l: f64,
    pub l_raw: f64,
    /// `l / N`.
    pub rate: f64,
    pub s0z_low: f64,
    pub s1z_low: f64,
    pub s10z_low: f64,
    pub s01z_low: f64,
    pub s1pm_low: f64,
    pub s10pm_low: f64,
    pub s01pm_low: f64,
    pub t1pm_up: f64,
    pub t0pm_low: f64,
    pub e1ph_up: f64,
    pub phase_error_defined: bool,
    pub lambda_ec: f64,
    pub n_z: f64,
    pub e_z: f64,
    pub p_pm: f64,
    pub audit: BoundAudit,
}

pub struct FiniteKeyEstimator<'a> {
    counts: &'a ObservedCounts,
    src: &'a SourceParams,
    eps: f64,
    audit: BoundAudit,
}

impl<'a> FiniteKeyEstimator<'a> {
    pub fn new(counts: &'a ObservedCounts, src: &'a SourceParams, sec: &'a SecurityParams) -> Result<Self> {
        sec.validate()?;
        let eps = BoundBudget::new(sec.eps_sec).eps_term;
        Self::with_term_eps(counts, src, eps)
    }

    /// Uses `eps` for every bound instead of `eps_sec / 26`.
    pub fn with_term_eps(counts: &'a ObservedCounts, src: &'a SourceParams, eps: f64) -> Result<Self> {
        src.validate_ranges()?;
        counts.check()?;
        Ok(FiniteKeyEstimator {
            counts,
            src,
            eps,
            audit: BoundAudit::default(),
        })
    }

    pub fn audit(&self) -> BoundAudit {
        self.audit
    }

    fn variant_lower(&mut self, x: f64) -> Result<f64> {
        self.audit.variant += 1;
        Ok(variant_expected_bounds(x, self.eps)?.0)
    }

    fn variant_upper(&mut self, x: f64) -> Result<f64> {
        self.audit.variant += 1;
        Ok(variant_expected_bounds(x, self.eps)?.1)
    }

    fn chernoff_lower(&mut self, x_star: f64) -> Result<f64> {
        self.audit.chernoff += 1;
        Ok(chernoff_observed_bounds(x_star.max(0.0), self.eps)?.0)
    }

    fn announced(&self, a: Intensity, b: Intensity, what: &'static str) -> Result<f64> {
        let n = self.counts.announced.get(a, b);
        if !(n > 0.0) {
            return Err(Error::ZeroDenominator(what));
        }
        Ok(n)
    }

    /// Lower bound on the vacuum events of the raw key (observed).
    pub fn estimate_vacuum_z(&mut self) -> Result<f64> {
        let n00 = self.announced(Vacuum, Vacuum, "N_00")?;
        let lower = self.variant_lower(self.counts.z_events.get(Vacuum, Vacuum))?;
        let s = self.src;
        let weight = s.t_a * (1.0 - s.t_b) * (-s.mu_a).exp() + s.t_b * (1.0 - s.t_a) * (-s.mu_b).exp();
        let expected = s.p_za * s.p_zb * weight * self.counts.n_rounds * lower / n00;
        self.chernoff_lower(expected)
    }

    /// Expected-level decoy bounds for both senders from one detector basis.
    ///
    /// Returns the two bracketed combinations; callers apply the prefactors.
    fn decoy_brackets(&mut self, x_basis: bool) -> Result<(f64, f64)> {
        let table = if x_basis {
            self.counts.x_events
        } else {
            self.counts.z_events
        };
        let n_d0 = self.announced(Decoy, Vacuum, "N_nu0")?;
        let n_s0 = self.announced(Signal, Vacuum, "N_mu0")?;
        let n_0d = self.announced(Vacuum, Decoy, "N_0nu")?;
        let n_0s = self.announced(Vacuum, Signal, "N_0mu")?;
        let n_00 = self.announced(Vacuum, Vacuum, "N_00")?;
        let r_d0 = self.variant_lower(table.get(Decoy, Vacuum))? / n_d0;
        let r_s0 = self.variant_upper(table.get(Signal, Vacuum))? / n_s0;
        let r_0d = self.variant_lower(table.get(Vacuum, Decoy))? / n_0d;
        let r_0s = self.variant_upper(table.get(Vacuum, Signal))? / n_0s;
        let r_00 = self.variant_upper(table.get(Vacuum, Vacuum))? / n_00;
        let s = self.src;
        Ok((
            decoy_bracket(s.mu_a, s.nu_a, r_d0, r_s0, r_00),
            decoy_bracket(s.mu_b, s.nu_b, r_0d, r_0s, r_00),
        ))
    }

    /// Lower bounds on joint single-photon events of the raw key.
    pub fn estimate_single_z(&mut self) -> Result<SingleBounds> {
        let s = self.src;
        let (gap_a, gap_b) = (decoy_gap(s, Side::A)?, decoy_gap(s, Side::B)?);
        let (br_a, br_b) = self.decoy_brackets(false)?;
        let n = self.counts.n_rounds;
        let pz = s.p_za * s.p_zb;
        let from_a = (s.t_a * (1.0 - s.t_b) * s.mu_a * s.mu_a * (-s.mu_a).exp() * pz * n / gap_a * br_a).max(0.0);
        let from_b = (s.t_b * (1.0 - s.t_a) * s.mu_b * s.mu_b * (-s.mu_b).exp() * pz * n / gap_b * br_b).max(0.0);
        let total = self.chernoff_lower(from_a + from_b)?;
        Ok(SingleBounds { total, from_a, from_b })
    }

    /// Number of announced decoy-pair rounds, `(1-p_za)(1-p_zb) p_nua p_nub N`.
    fn decoy_pair_rounds(&self) -> f64 {
        let s = self.src;
        (1.0 - s.p_za) * (1.0 - s.p_zb) * s.p_nua * s.p_nub * self.counts.n_rounds
    }

    /// Lower bounds on joint single-photon events that pass post-selection.
    pub fn estimate_single_pm(&mut self) -> Result<SingleBounds> {
        let s = self.src;
        let (gap_a, gap_b) = (decoy_gap(s, Side::A)?, decoy_gap(s, Side::B)?);
        let (br_a, br_b) = self.decoy_brackets(true)?;
        let pre = self.decoy_pair_rounds() * s.p_pm() * (-(s.nu_a + s.nu_b)).exp();
        let from_a = (pre * s.mu_a * s.nu_a / gap_a * br_a).max(0.0);
        let from_b = (pre * s.mu_b * s.nu_b / gap_b * br_b).max(0.0);
        let total = self.chernoff_lower(from_a + from_b)?;
        Ok(SingleBounds { total, from_a, from_b })
    }

    /// `(t1pm_up, t0pm_low)`: bit errors of post-selected single photons,
    /// from the observed errors minus the certified vacuum errors.
    pub fn estimate_t1pm(&mut self) -> Result<(f64, f64)> {
        let n00 = self.announced(Vacuum, Vacuum, "N_00")?;
        let lower = self.variant_lower(self.counts.x_events.get(Vacuum, Vacuum))?;
        let s = self.src;
        let expected = self.decoy_pair_rounds() * s.p_pm() * (-(s.nu_a + s.nu_b)).exp() * lower / (2.0 * n00);
        let t0 = self.chernoff_lower(expected)?;
        Ok(((self.counts.pm_errors - t0).max(0.0), t0))
    }

    /// Upper bound on the phase error rate of the raw key's single photons,
    /// clamped to `[0, 1/2]`.
    pub fn phase_error_rate(&mut self, s1z: f64, s1pm: f64, t1pm: f64) -> Result<f64> {
        self.audit.sampling += 1;
        if !(s1pm > 0.0) {
            return Err(Error::UndefinedBound("no certified post-selected single-photon events"));
        }
        let lambda = t1pm / s1pm;
        if lambda >= 0.5 || !(s1z > 0.0) {
            return Ok(0.5);
        }
        // A sample without errors still carries a deviation; evaluate the
        // sampling term at one error's worth of rate.
        let lambda_eval = lambda.max(1.0 / s1pm).min(0.5);
        let gamma = gamma_sampling(s1z, s1pm, lambda_eval, self.eps)?;
        Ok((lambda + gamma).clamp(0.0, 0.5))
    }

    /// Runs every estimator once, in the order the allocation expects.
    pub fn estimate_all(&mut self) -> Result<EstimatedBounds> {
        let s0z = self.estimate_vacuum_z()?;
        let single_z = self.estimate_single_z()?;
        let single_pm = self.estimate_single_pm()?;
        let (t1pm_up, t0pm_low) = self.estimate_t1pm()?;
        let e1ph_up = match self.phase_error_rate(single_z.total, single_pm.total, t1pm_up) {
            Ok(e) => Some(e),
            Err(Error::UndefinedBound(_)) => None,
            Err(e) => return Err(e),
        };
        Ok(EstimatedBounds {
            s0z,
            single_z,
            single_pm,
            t1pm_up,
            t0pm_low,
            e1ph_up,
        })
    }
}

/// Final key length from estimated bounds.
///
/// Fails with [`Error::BudgetViolation`] unless `audit` shows exactly the
/// allocated number of bound applications.
pub fn key_length(
    bounds: &EstimatedBounds,
    counts: &ObservedCounts,
    src: &SourceParams,
    ch: &ChannelParams,
    sec: &SecurityParams,
    audit: BoundAudit,
) -> Result<FiniteKeyResult> {
    let budget = BoundBudget::new(sec.eps_sec);
    if !audit.matches(&budget) {
        return Err(Error::BudgetViolation {
            variant: audit.variant,
            chernoff: audit.chernoff,
            sampling: audit.sampling,
        });
    }
    let e_z = counts.e_z();
    let lambda_ec = counts.sifted * ch.f * h(e_z);
    let (e1ph_up, l_raw) = match bounds.e1ph_up {
        Some(e) => {
            let l = bounds.s0z + bounds.single_z.total * (1.0 - h(e))
                - lambda_ec
                - (4.0 / sec.eps_cor).log2()
                - 6.0 * (budget.total_terms() as f64 / sec.eps_sec).log2();
            (e, l)
        }
        // no certified phase error: no key
        None => (0.5, 0.0),
    };
    let l = l_raw.max(0.0);
    Ok(FiniteKeyResult {
        l,
        l_raw,
        rate: l / counts.n_rounds,
        s0z_low: bounds.s0z,
        s1z_low: bounds.single_z.total,
        s10z_low: bounds.single_z.from_a,
        s01z_low: bounds.single_z.from_b,
        s1pm_low: bounds.single_pm.total,
        s10pm_low: bounds.single_pm.from_a,
        s01pm_low: bounds.single_pm.from_b,
        t1pm_up: bounds.t1pm_up,
        t0pm_low: bounds.t0pm_low,
        e1ph_up,
        phase_error_defined: bounds.e1ph_up.is_some(),
        lambda_ec,
        n_z: counts.sifted,
        e_z,
        p_pm: src.p_pm(),
        audit,
    })
}

/// Full pipeline: every estimator followed by the audited key length.
pub fn finite_key(
    counts: &ObservedCounts,
    src: &SourceParams,
    ch: &ChannelParams,
    sec: &SecurityParams,
) -> Result<FiniteKeyResult> {
    let mut est = FiniteKeyEstimator::new(counts, src, sec)?;
    let bounds = est.estimate_all()?;
    key_length(&bounds, counts, src, ch, sec, est.audit())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asymptotic::{asymptotic_rate, yield_bounds, Basis};
    use crate::channel::{expected_counts, ExpectedYields};
    use crate::params::tests_support::reference_source;
    use crate::params::PairTable;

    fn setup(n: f64) -> (SourceParams, ChannelParams, SecurityParams, ObservedCounts) {
        let src = reference_source();
        let ch = ChannelParams::reference(10.0, 60.0);
        let sec = SecurityParams::new(n, 1e-10, 1e-10);
        let counts = expected_counts(&src, &ch, &sec);
        (src, ch, sec, counts)
    }

    #[test]
    fn audit_matches_allocation() {
        let (src, ch, sec, counts) = setup(1e12);
        let r = finite_key(&counts, &src, &ch, &sec).unwrap();
        assert_eq!(
            r.audit,
            BoundAudit {
                variant: 12,
                chernoff: 4,
                sampling: 1
            }
        );
        assert!(r.l > 0.0);
        assert!((0.0..=0.5).contains(&r.e1ph_up));
    }

    #[test]
    fn tampered_audit_is_rejected() {
        let (src, ch, sec, counts) = setup(1e12);
        let mut est = FiniteKeyEstimator::new(&counts, &src, &sec).unwrap();
        let bounds = est.estimate_all().unwrap();
        let mut audit = est.audit();
        audit.chernoff += 1;
        assert!(matches!(
            key_length(&bounds, &counts, &src, &ch, &sec, audit),
            Err(Error::BudgetViolation { chernoff: 5, .. })
        ));
    }

    #[test]
    fn zero_vacuum_announcements_is_an_error() {
        let (src, _, sec, mut counts) = setup(1e12);
        counts.announced.set(Vacuum, Vacuum, 0.0);
        counts.z_events.set(Vacuum, Vacuum, 0.0);
        counts.x_events.set(Vacuum, Vacuum, 0.0);
        let mut est = FiniteKeyEstimator::new(&counts, &src, &sec).unwrap();
        assert_eq!(est.estimate_vacuum_z(), Err(Error::ZeroDenominator("N_00")));
    }

    #[test]
    fn empty_detections_give_no_key() {
        let (src, ch, sec, mut counts) = setup(1e12);
        counts.z_events = PairTable::default();
        counts.x_events = PairTable::default();
        counts.sifted = 0.0;
        counts.sifted_errors = 0.0;
        counts.pm_events = 0.0;
        counts.pm_errors = 0.0;
        let mut est = FiniteKeyEstimator::new(&counts, &src, &sec).unwrap();
        assert_eq!(est.estimate_vacuum_z().unwrap(), 0.0);
        assert_eq!(est.estimate_single_z().unwrap().total, 0.0);
        let r = finite_key(&counts, &src, &ch, &sec).unwrap();
        assert_eq!(r.l, 0.0);
        assert!(!r.phase_error_defined);
        assert_eq!(r.t1pm_up, 0.0);
    }

    #[test]
    fn vanishing_confidence_penalty_recovers_plug_in_estimates() {
        let (src, ch, sec, counts) = setup(1e12);
        let eps = 1.0 - 1e-15;
        let mut est = FiniteKeyEstimator::with_term_eps(&counts, &src, eps).unwrap();
        let s0 = est.estimate_vacuum_z().unwrap();
        let s = &src;
        let plug_in = s.p_za
            * s.p_zb
            * (s.t_a * (1.0 - s.t_b) * (-s.mu_a).exp() + s.t_b * (1.0 - s.t_a) * (-s.mu_b).exp())
            * sec.n_rounds
            * counts.z_events.get(Vacuum, Vacuum)
            / counts.announced.get(Vacuum, Vacuum);
        assert!(((s0 - plug_in) / plug_in).abs() < 1e-6);

        // The Z single-photon bound collapses onto the asymptotic decoy
        // formula applied to the empirical gains.
        let single = est.estimate_single_z().unwrap();
        let y = ExpectedYields::compute(&src, &ch);
        let d = yield_bounds(&y, &src, Basis::Z).unwrap();
        let n = sec.n_rounds * s.p_za * s.p_zb;
        let want_a = s.t_a * (1.0 - s.t_b) * s.mu_a * (-s.mu_a).exp() * n * d.y10;
        let want_b = s.t_b * (1.0 - s.t_a) * s.mu_b * (-s.mu_b).exp() * n * d.y01;
        assert!(((single.from_a - want_a) / want_a).abs() < 1e-6);
        assert!(((single.from_b - want_b) / want_b).abs() < 1e-6);
    }

    #[test]
    fn narrow_window_certifies_nothing() {
        let (mut src, ch, sec, _) = setup(1e12);
        src.delta = 1e-300;
        let counts = expected_counts(&src, &ch, &sec);
        let mut est = FiniteKeyEstimator::new(&counts, &src, &sec).unwrap();
        est.estimate_vacuum_z().unwrap();
        est.estimate_single_z().unwrap();
        assert_eq!(est.estimate_single_pm().unwrap().total, 0.0);
    }

    #[test]
    fn acceptance_probability_of_pi_over_16() {
        let mut src = reference_source();
        src.delta = std::f64::consts::PI / 16.0;
        assert!((src.p_pm() - 0.125).abs() < 1e-16);
    }

    #[test]
    fn zero_errors_means_zero_single_photon_errors() {
        let (src, _, sec, mut counts) = setup(1e12);
        counts.pm_errors = 0.0;
        let mut est = FiniteKeyEstimator::new(&counts, &src, &sec).unwrap();
        assert_eq!(est.estimate_t1pm().unwrap().0, 0.0);
    }

    #[test]
    fn dark_count_only_errors_are_explained_by_vacuum() {
        // With vanishing intensities every post-selected error is a vacuum
        // error, so t1pm shrinks to fluctuation terms only.
        let mut src = reference_source();
        src.mu_a = 2e-9;
        src.nu_a = 1e-9;
        src.mu_b = 2e-9;
        src.nu_b = 1e-9;
        let src = src.with_constraint().unwrap();
        let ch = ChannelParams {
            p_d: 1e-3,
            ..ChannelParams::reference(10.0, 60.0)
        };
        let sec = SecurityParams::new(1e14, 1e-10, 1e-10);
        let counts = expected_counts(&src, &ch, &sec);
        let mut est = FiniteKeyEstimator::new(&counts, &src, &sec).unwrap();
        let (t1, t0) = est.estimate_t1pm().unwrap();
        let m = counts.pm_errors;
        assert!(t0 <= m);
        // relative fluctuation ~ sqrt(beta / m)
        assert!(t1 / m < 0.01, "t1={t1} m={m}");
    }

    #[test]
    fn zero_error_sample_is_dominated_by_deviation_term() {
        let (src, _, sec, counts) = setup(1e12);
        let mut est = FiniteKeyEstimator::new(&counts, &src, &sec).unwrap();
        let e = est.phase_error_rate(1e12, 1e11, 0.0).unwrap();
        assert!(e > 0.0 && e < 1e-3, "{e}");
        let e = est.phase_error_rate(1e12, 1e11, 0.5e11).unwrap();
        assert_eq!(e, 0.5);
    }

    #[test]
    fn key_rate_stays_below_asymptote() {
        let src = reference_source();
        for l in [0.0, 40.0, 100.0, 200.0] {
            let ch = ChannelParams::reference(l, l + 50.0);
            let r = asymptotic_rate(&src, &ch).unwrap().rate;
            for n in [1e10, 1e12, 1e14, 1e16] {
                let sec = SecurityParams::new(n, 1e-10, 1e-10);
                let f = finite_key(&expected_counts(&src, &ch, &sec), &src, &ch, &sec).unwrap();
                assert!(f.rate <= r + 1e-6, "L={l} N={n}: {} > {r}", f.rate);
            }
        }
    }

    #[test]
    fn key_length_grows_with_rounds_and_budget() {
        let src = reference_source();
        let ch = ChannelParams::reference(20.0, 70.0);
        let mut last = 0.0;
        for n in [1e9, 1e10, 1e11, 1e12, 1e13, 1e14] {
            let sec = SecurityParams::new(n, 1e-10, 1e-10);
            let l = finite_key(&expected_counts(&src, &ch, &sec), &src, &ch, &sec).unwrap().l;
            assert!(l >= last);
            last = l;
        }
        let sec_for = |e: f64| SecurityParams::new(1e12, e, 1e-10);
        let mut last = 0.0;
        for e in [1e-15, 1e-12, 1e-9, 1e-6, 1e-3] {
            let sec = sec_for(e);
            let l = finite_key(&expected_counts(&src, &ch, &sec), &src, &ch, &sec).unwrap().l;
            assert!(l >= last);
            last = l;
        }
    }
}
