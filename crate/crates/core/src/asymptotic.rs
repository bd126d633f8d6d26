//! Infinite-key conference key rate.
//!
//! In the asymptotic limit almost every round is an all-Z round, so the
//! rate per round is the vacuum contribution plus the joint single-photon
//! contribution (after privacy amplification at the phase-error rate)
//! minus the error-correction leakage. Single-photon yields come from the
//! three-intensity decoy bound; the phase error comes from the
//! post-selected decoy-pair statistics.

use serde::{Deserialize, Serialize};

use crate::channel::ExpectedYields;
use crate::entropy::h;
use crate::error::{Error, Result};
use crate::params::{ChannelParams, Intensity, PairTable, Side, SourceParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Basis {
    Z,
    X,
}

/// `mu nu - nu^2`, which must be positive for the decoy bound.
pub(crate) fn decoy_gap(src: &SourceParams, side: Side) -> Result<f64> {
    let (mu, nu) = (src.mu(side), src.nu(side));
    let gap = mu * nu - nu * nu;
    if !(gap > 0.0) {
        return Err(Error::DegenerateDecoy { side, gap });
    }
    Ok(gap)
}

/// Bracketed decoy combination shared by the asymptotic and finite bounds:
/// `e^nu r_nu - (nu/mu)^2 e^mu r_mu - (mu^2 - nu^2)/mu^2 r_0`.
pub(crate) fn decoy_bracket(mu: f64, nu: f64, r_nu: f64, r_mu: f64, r_0: f64) -> f64 {
    let ratio = nu * nu / (mu * mu);
    nu.exp() * r_nu - ratio * mu.exp() * r_mu - (1.0 - ratio) * r_0
}

/// Vacuum yield and lower bounds on the single-photon yields of one basis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoyYields {
    pub y0: f64,
    /// Alice single photon, Bob vacuum.
    pub y10: f64,
    /// Alice vacuum, Bob single photon.
    pub y01: f64,
    /// Joint single-photon yield, weighted by the decoy intensities.
    pub y1: f64,
    /// Unfloored values of `y10` and `y01`.
    pub y10_raw: f64,
    pub y01_raw: f64,
}

pub fn yield_bounds(yields: &ExpectedYields, src: &SourceParams, basis: Basis) -> Result<DecoyYields> {
    let gains: &PairTable<f64> = match basis {
        Basis::Z => &yields.z_gain,
        Basis::X => &yields.x_gain,
    };
    use Intensity::{Decoy, Signal, Vacuum};
    let y0 = gains.get(Vacuum, Vacuum);
    let y10_raw = src.mu_a / decoy_gap(src, Side::A)?
        * decoy_bracket(
            src.mu_a,
            src.nu_a,
            gains.get(Decoy, Vacuum),
            gains.get(Signal, Vacuum),
            y0,
        );
    let y01_raw = src.mu_b / decoy_gap(src, Side::B)?
        * decoy_bracket(
            src.mu_b,
            src.nu_b,
            gains.get(Vacuum, Decoy),
            gains.get(Vacuum, Signal),
            y0,
        );
    let (y10, y01) = (y10_raw.max(0.0), y01_raw.max(0.0));
    let y1 = (src.nu_a * y10 + src.nu_b * y01) / (src.nu_a + src.nu_b);
    Ok(DecoyYields {
        y0,
        y10,
        y01,
        y1,
        y10_raw,
        y01_raw,
    })
}

/// `(clamped, raw)` upper bound on the single-photon phase error rate.
///
/// The post-selected gain in [`ExpectedYields`] is per announced decoy-pair
/// round; it is divided by the acceptance probability here so that the
/// photon-number decomposition refers to post-selected rounds.
pub fn phase_error_bound(yields: &ExpectedYields, src: &SourceParams) -> Result<(f64, f64)> {
    let x = yield_bounds(yields, src, Basis::X)?;
    if !(x.y1 > 0.0) {
        return Err(Error::UndefinedBound("single-photon X yield is zero"));
    }
    let s = src.nu_a + src.nu_b;
    let q_pm = yields.pm_gain / src.p_pm();
    let raw = (s.exp() * yields.pm_error * q_pm - 0.5 * x.y0) / (s * x.y1);
    Ok((raw.clamp(0.0, 0.5), raw))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticResult {
    /// Key bits per round, floored at zero.
    pub rate: f64,
    pub rate_raw: f64,
    pub y0z: f64,
    pub y1z: f64,
    pub z: DecoyYields,
    pub x: DecoyYields,
    pub e1ph: f64,
    /// `None` when the X single-photon yield vanished and the phase error
    /// was taken as 1/2.
    pub e1ph_raw: Option<f64>,
    pub xi_ec: f64,
    pub q_z: f64,
    pub e_z: f64,
    /// Per-round weights multiplying the vacuum and single-photon yields.
    pub vacuum_weight: f64,
    pub single_weight: f64,
}

pub fn asymptotic_rate(src: &SourceParams, ch: &ChannelParams) -> Result<AsymptoticResult> {
    src.validate()?;
    ch.validate()?;
    let yields = ExpectedYields::compute(src, ch);
    asymptotic_rate_from(src, ch, &yields)
}

pub(crate) fn asymptotic_rate_from(
    src: &SourceParams,
    ch: &ChannelParams,
    yields: &ExpectedYields,
) -> Result<AsymptoticResult> {
    let z = yield_bounds(yields, src, Basis::Z)?;
    let x = yield_bounds(yields, src, Basis::X)?;
    let (e1ph, e1ph_raw) = match phase_error_bound(yields, src) {
        Ok((e, raw)) => (e, Some(raw)),
        Err(Error::UndefinedBound(_)) => (0.5, None),
        Err(e) => return Err(e),
    };
    let (ta, tb) = (src.t_a, src.t_b);
    let ea = (-src.mu_a).exp();
    let eb = (-src.mu_b).exp();
    let vacuum_weight = ta * (1.0 - tb) * ea + tb * (1.0 - ta) * eb;
    let single_weight = ta * (1.0 - tb) * src.mu_a * ea + tb * (1.0 - ta) * src.mu_b * eb;
    let xi_ec = yields.sifted_gain * ch.f * h(yields.sifted_error);
    let rate_raw = vacuum_weight * z.y0 + single_weight * z.y1 * (1.0 - h(e1ph)) - xi_ec;
    Ok(AsymptoticResult {
        rate: rate_raw.max(0.0),
        rate_raw,
        y0z: z.y0,
        y1z: z.y1,
        z,
        x,
        e1ph,
        e1ph_raw,
        xi_ec,
        q_z: yields.sifted_gain,
        e_z: yields.sifted_error,
        vacuum_weight,
        single_weight,
    })
}
