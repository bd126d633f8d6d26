//! Analytic model of Charlie's measurement station.
//!
//! Each arm is split by a beam splitter: a fraction `q_z` goes to that
//! arm's Z detector (D1 for Alice, D2 for Bob), the rest meets the other arm
//! at a 50:50 beam splitter watched by D3 and D4. Detectors are threshold
//! detectors with independent dark counts. Pulses are phase-randomized
//! coherent states, so every output port carries Poissonian light.
//!
//! An effective event is exactly one click within a detector pair. All gains
//! are per announced round of the relevant intensity pair.

mod counts;
mod quadrature;

pub use counts::{
    all_z_probability, announced_probabilities, announced_totals, expected_counts, sample_counts,
    ObservedCounts,
};
pub(crate) use quadrature::mean_over;
pub(crate) use counts::expected_counts_from;

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::params::{ChannelParams, Intensity, PairTable, Side, SourceParams};

/// Transmittance of one arm including detector efficiency.
pub fn arm_transmittance(ch: &ChannelParams, side: Side) -> f64 {
    ch.eta_d * 10f64.powf(-ch.alpha * ch.length(side) / 10.0)
}

/// Click probability of a threshold detector fed Poissonian light.
#[inline]
pub(crate) fn click(mean: f64, p_d: f64) -> f64 {
    let e = (-mean).exp();
    -(-mean).exp_m1() + p_d * e
}

/// `(only first clicks, only second clicks)` for two independent detectors.
#[inline]
fn exclusive(p1: f64, p2: f64) -> (f64, f64) {
    (p1 * (1.0 - p2), p2 * (1.0 - p1))
}

/// Z-basis gain for an announced pair: exactly one of D1 and D2 clicks.
pub fn z_pair_gain(src: &SourceParams, ch: &ChannelParams, k_a: Intensity, k_b: Intensity) -> f64 {
    let m1 = src.intensity(Side::A, k_a) * arm_transmittance(ch, Side::A) * src.q_z;
    let m2 = src.intensity(Side::B, k_b) * arm_transmittance(ch, Side::B) * src.q_z;
    let (o1, o2) = exclusive(click(m1, ch.p_d), click(m2, ch.p_d));
    o1 + o2
}

/// Gain and three-party error rate of rounds where everyone is in Z.
///
/// Bit conventions: Alice sending is 1, Bob sending is 0, D1 alone is 1 and
/// D2 alone is 0. An event is an error unless all three bits agree.
pub fn expected_z_gain_error(src: &SourceParams, ch: &ChannelParams) -> (f64, f64) {
    let eta_a = arm_transmittance(ch, Side::A) * src.q_z;
    let eta_b = arm_transmittance(ch, Side::B) * src.q_z;
    let mut gain = 0.0;
    let mut errors = 0.0;
    for alice_sends in [false, true] {
        for bob_sends in [false, true] {
            let w = if alice_sends { src.t_a } else { 1.0 - src.t_a }
                * if bob_sends { src.t_b } else { 1.0 - src.t_b };
            let m1 = if alice_sends { src.mu_a * eta_a } else { 0.0 };
            let m2 = if bob_sends { src.mu_b * eta_b } else { 0.0 };
            let (d1, d2) = exclusive(click(m1, ch.p_d), click(m2, ch.p_d));
            gain += w * (d1 + d2);
            let alice_bit = alice_sends;
            let bob_bit = !bob_sends;
            let wrong = match (alice_bit, bob_bit) {
                (true, true) => d2,
                (false, false) => d1,
                _ => d1 + d2,
            };
            errors += w * wrong;
        }
    }
    let err = if gain > 0.0 { errors / gain } else { 0.0 };
    (gain, err)
}

/// Gain and error of the interference measurement at relative phase `theta`.
///
/// `a` and `b` are the mean photon numbers arriving at the interfering beam
/// splitter. `d3_correct` names the detector expected for the slice.
pub(crate) fn x_at_phase(
    a: f64,
    b: f64,
    theta: f64,
    ch: &ChannelParams,
    d3_correct: bool,
) -> (f64, f64) {
    let s = 0.5 * (a + b);
    let c = (a * b).sqrt() * (theta + ch.phi_ab).cos();
    let (o3, o4) = exclusive(click((s + c).max(0.0), ch.p_d), click((s - c).max(0.0), ch.p_d));
    let gain = o3 + o4;
    let wrong = if d3_correct { o4 } else { o3 };
    let err = (1.0 - ch.e_dx) * wrong + ch.e_dx * (gain - wrong);
    (gain, err)
}

/// Phase-averaged `(gain, error probability)` over the slices around 0 and pi.
///
/// `half_width` is `pi/2` for the unselected average (each half-circle keeps
/// its nearest-slice convention) or `delta` for post-selected events. The
/// result is conditional on the phase falling inside the slices.
fn x_slices(a: f64, b: f64, half_width: f64, ch: &ChannelParams) -> (f64, f64) {
    let [g0, e0] = mean_over(-half_width, half_width, |t| {
        let (g, e) = x_at_phase(a, b, t, ch, true);
        [g, e]
    });
    let [g1, e1] = mean_over(PI - half_width, PI + half_width, |t| {
        let (g, e) = x_at_phase(a, b, t, ch, false);
        [g, e]
    });
    (0.5 * (g0 + g1), 0.5 * (e0 + e1))
}

/// X-basis gain and error rate for an announced intensity pair.
///
/// Without phase matching the relative phase is uniform on the circle. With
/// it, the returned gain counts only events that pass post-selection
/// (so it includes the acceptance factor `2 delta / pi`) and the error rate
/// is among those events; the slice around pi has its bit mapping inverted.
pub fn expected_x_gain_error(
    src: &SourceParams,
    ch: &ChannelParams,
    k_a: Intensity,
    k_b: Intensity,
    phase_matched: bool,
) -> (f64, f64) {
    let a = src.intensity(Side::A, k_a) * arm_transmittance(ch, Side::A) * (1.0 - src.q_z);
    let b = src.intensity(Side::B, k_b) * arm_transmittance(ch, Side::B) * (1.0 - src.q_z);
    let (gain, err_prob, scale) = if phase_matched {
        let (g, e) = x_slices(a, b, src.delta, ch);
        (g, e, src.p_pm())
    } else {
        let (g, e) = x_slices(a, b, FRAC_PI_2, ch);
        (g, e, 1.0)
    };
    let rate = if gain > 0.0 { err_prob / gain } else { 0.0 };
    (scale * gain, rate)
}

/// Expected gains and error rates for every quantity the estimators use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectedYields {
    pub z_gain: PairTable<f64>,
    pub x_gain: PairTable<f64>,
    /// Post-selected decoy-pair gain, per announced `(nu_a, nu_b)` round.
    pub pm_gain: f64,
    pub pm_error: f64,
    /// All-Z gain and error rate, per all-Z round.
    pub sifted_gain: f64,
    pub sifted_error: f64,
}

impl ExpectedYields {
    pub fn compute(src: &SourceParams, ch: &ChannelParams) -> Self {
        let z_gain = PairTable::from_fn(|a, b| z_pair_gain(src, ch, a, b));
        let x_gain = PairTable::from_fn(|a, b| expected_x_gain_error(src, ch, a, b, false).0);
        let (pm_gain, pm_error) =
            expected_x_gain_error(src, ch, Intensity::Decoy, Intensity::Decoy, true);
        let (sifted_gain, sifted_error) = expected_z_gain_error(src, ch);
        ExpectedYields {
            z_gain,
            x_gain,
            pm_gain,
            pm_error,
            sifted_gain,
            sifted_error,
        }
    }
}
