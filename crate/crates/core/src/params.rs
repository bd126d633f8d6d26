//! Protocol parameters and the source constraint.
//!
//! Alice and Bob each pick a basis per round. In Z a sender emits a
//! phase-randomized pulse of intensity `mu` with probability `t` and nothing
//! otherwise; in X it emits one of `{mu, nu, 0}`. The joint single-photon
//! states kept for key generation must look the same in both bases, which
//! pins `t_b` once the other source parameters are chosen (see [`solve_tb`]).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the single-excitation state components for the source
/// constraint.
pub const CONSTRAINT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::A => f.write_str("A"),
            Side::B => f.write_str("B"),
        }
    }
}

/// One of the three intensity settings a sender can announce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Intensity {
    Signal,
    Decoy,
    Vacuum,
}

impl Intensity {
    pub const ALL: [Intensity; 3] = [Intensity::Signal, Intensity::Decoy, Intensity::Vacuum];

    pub fn index(self) -> usize {
        match self {
            Intensity::Signal => 0,
            Intensity::Decoy => 1,
            Intensity::Vacuum => 2,
        }
    }
}

/// A value per announced intensity pair `(k_a, k_b)`.
///
/// Serialized as a 3x3 row-major array; rows are Alice's setting and columns
/// Bob's, both in the order signal, decoy, vacuum.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PairTable<T>(pub [[T; 3]; 3]);

impl<T: Copy> PairTable<T> {
    pub fn from_fn(mut f: impl FnMut(Intensity, Intensity) -> T) -> Self {
        let row = |a: Intensity, f: &mut dyn FnMut(Intensity, Intensity) -> T| {
            [
                f(a, Intensity::Signal),
                f(a, Intensity::Decoy),
                f(a, Intensity::Vacuum),
            ]
        };
        PairTable([
            row(Intensity::Signal, &mut f),
            row(Intensity::Decoy, &mut f),
            row(Intensity::Vacuum, &mut f),
        ])
    }

    pub fn get(&self, a: Intensity, b: Intensity) -> T {
        self.0[a.index()][b.index()]
    }

    pub fn set(&mut self, a: Intensity, b: Intensity, value: T) {
        self.0[a.index()][b.index()] = value;
    }

    pub fn iter(&self) -> impl Iterator<Item = (Intensity, Intensity, T)> + '_ {
        Intensity::ALL
            .into_iter()
            .flat_map(move |a| Intensity::ALL.into_iter().map(move |b| (a, b, self.get(a, b))))
    }
}

/// Sender-side settings for both Alice (`_a`) and Bob (`_b`).
///
/// The signal-intensity probability in X is implicit: `1 - p_0 - p_nu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceParams {
    pub mu_a: f64,
    pub mu_b: f64,
    pub nu_a: f64,
    pub nu_b: f64,
    /// Probability of sending in the Z basis.
    pub t_a: f64,
    pub t_b: f64,
    /// Probability of choosing the Z basis.
    pub p_za: f64,
    pub p_zb: f64,
    /// Vacuum and decoy probabilities given the X basis.
    pub p_0a: f64,
    pub p_0b: f64,
    pub p_nua: f64,
    pub p_nub: f64,
    /// Half-width of each accepted phase slice, radians.
    pub delta: f64,
    /// Fraction of each arm routed to Charlie's Z detectors.
    pub q_z: f64,
}

impl SourceParams {
    pub fn mu(&self, side: Side) -> f64 {
        match side {
            Side::A => self.mu_a,
            Side::B => self.mu_b,
        }
    }

    pub fn nu(&self, side: Side) -> f64 {
        match side {
            Side::A => self.nu_a,
            Side::B => self.nu_b,
        }
    }

    pub fn t(&self, side: Side) -> f64 {
        match side {
            Side::A => self.t_a,
            Side::B => self.t_b,
        }
    }

    pub fn p_z(&self, side: Side) -> f64 {
        match side {
            Side::A => self.p_za,
            Side::B => self.p_zb,
        }
    }

    pub fn p_vacuum(&self, side: Side) -> f64 {
        match side {
            Side::A => self.p_0a,
            Side::B => self.p_0b,
        }
    }

    pub fn p_decoy(&self, side: Side) -> f64 {
        match side {
            Side::A => self.p_nua,
            Side::B => self.p_nub,
        }
    }

    pub fn p_signal(&self, side: Side) -> f64 {
        1.0 - self.p_vacuum(side) - self.p_decoy(side)
    }

    /// Mean photon number of an intensity setting.
    pub fn intensity(&self, side: Side, k: Intensity) -> f64 {
        match k {
            Intensity::Signal => self.mu(side),
            Intensity::Decoy => self.nu(side),
            Intensity::Vacuum => 0.0,
        }
    }

    /// Probability of picking intensity `k` given the X basis.
    pub fn x_setting_prob(&self, side: Side, k: Intensity) -> f64 {
        match k {
            Intensity::Signal => self.p_signal(side),
            Intensity::Decoy => self.p_decoy(side),
            Intensity::Vacuum => self.p_vacuum(side),
        }
    }

    /// Acceptance probability of phase post-selection, `2 delta / pi`.
    pub fn p_pm(&self) -> f64 {
        2.0 * self.delta / std::f64::consts::PI
    }

    /// Replaces `t_b` with the value forced by the source constraint.
    pub fn with_constraint(mut self) -> Result<Self> {
        self.t_b = solve_tb(self.mu_a, self.mu_b, self.t_a, self.nu_a, self.nu_b)?;
        Ok(self)
    }

    /// Checks every range invariant except the cross-side constraint.
    pub fn validate_ranges(&self) -> Result<()> {
        for side in [Side::A, Side::B] {
            let (mu, nu) = (self.mu(side), self.nu(side));
            let (mu_name, nu_name) = match side {
                Side::A => ("mu_a", "nu_a"),
                Side::B => ("mu_b", "nu_b"),
            };
            if !(nu > 0.0 && nu.is_finite()) {
                return Err(Error::domain(nu_name, nu, "0 < nu"));
            }
            if !(mu > nu && mu.is_finite()) {
                return Err(Error::domain(mu_name, mu, "nu < mu"));
            }
        }
        let probs = [
            ("t_a", self.t_a),
            ("t_b", self.t_b),
            ("p_za", self.p_za),
            ("p_zb", self.p_zb),
            ("p_0a", self.p_0a),
            ("p_0b", self.p_0b),
            ("p_nua", self.p_nua),
            ("p_nub", self.p_nub),
            ("q_z", self.q_z),
        ];
        for (name, p) in probs {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::domain(name, p, "0 < p < 1"));
            }
        }
        if self.p_0a + self.p_nua > 1.0 {
            return Err(Error::domain("p_0a + p_nua", self.p_0a + self.p_nua, "<= 1"));
        }
        if self.p_0b + self.p_nub > 1.0 {
            return Err(Error::domain("p_0b + p_nub", self.p_0b + self.p_nub, "<= 1"));
        }
        if !(self.delta > 0.0 && self.delta <= std::f64::consts::FRAC_PI_2) {
            return Err(Error::domain("delta", self.delta, "0 < delta <= pi/2"));
        }
        Ok(())
    }

    /// Checks the source constraint to within [`CONSTRAINT_TOL`].
    ///
    /// The normalized states are compared rather than the two ratios, which
    /// lose precision when `t_b` is stored close to 0 or 1.
    pub fn check_constraint(&self) -> Result<()> {
        let decoy_ratio = self.nu_a / self.nu_b;
        let (wa, wb) = single_photon_weights(self);
        let weight_ratio = wa / wb;
        let x10 = self.nu_a / (self.nu_a + self.nu_b);
        let z10 = wa / (wa + wb);
        if !((x10 - z10).abs() <= CONSTRAINT_TOL) {
            return Err(Error::ConstraintViolated {
                decoy_ratio,
                weight_ratio,
            });
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_ranges()?;
        self.check_constraint()
    }
}

/// Unnormalized weights of `|10>` and `|01>` among the Z-basis states.
fn single_photon_weights(src: &SourceParams) -> (f64, f64) {
    (
        src.t_a * (1.0 - src.t_b) * src.mu_a * (-src.mu_a).exp(),
        src.t_b * (1.0 - src.t_a) * src.mu_b * (-src.mu_b).exp(),
    )
}

/// Channel and detector description. Lengths in km, attenuation in dB/km.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelParams {
    pub l_a: f64,
    pub l_b: f64,
    pub alpha: f64,
    pub eta_d: f64,
    /// Dark-count probability per detector gate.
    pub p_d: f64,
    /// X-basis misalignment (outcome flip probability).
    pub e_dx: f64,
    /// Error-correction efficiency.
    pub f: f64,
    /// Residual reference-frame phase left after compensation, radians.
    #[serde(default)]
    pub phi_ab: f64,
}

impl ChannelParams {
    /// Ultralow-loss fiber with the reference detector set: 56 % efficiency,
    /// 1e-8 dark counts, 3.5 % misalignment, f = 1.1.
    pub fn reference(l_a: f64, l_b: f64) -> Self {
        ChannelParams {
            l_a,
            l_b,
            alpha: 0.167,
            eta_d: 0.56,
            p_d: 1e-8,
            e_dx: 0.035,
            f: 1.1,
            phi_ab: 0.0,
        }
    }

    /// Splits a total distance `l_total` so that `l_b - l_a = delta_l`.
    pub fn reference_split(l_total: f64, delta_l: f64) -> Self {
        Self::reference(0.0, 0.0).with_split(l_total, delta_l)
    }

    /// Same devices with the lengths replaced by a split of `l_total`.
    pub fn with_split(&self, l_total: f64, delta_l: f64) -> Self {
        ChannelParams {
            l_a: (l_total - delta_l) / 2.0,
            l_b: (l_total + delta_l) / 2.0,
            ..*self
        }
    }

    pub fn length(&self, side: Side) -> f64 {
        match side {
            Side::A => self.l_a,
            Side::B => self.l_b,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.l_a >= 0.0 && self.l_a.is_finite()) {
            return Err(Error::domain("l_a", self.l_a, "L >= 0"));
        }
        if !(self.l_b >= 0.0 && self.l_b.is_finite()) {
            return Err(Error::domain("l_b", self.l_b, "L >= 0"));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::domain("alpha", self.alpha, "alpha >= 0"));
        }
        if !(self.eta_d > 0.0 && self.eta_d <= 1.0) {
            return Err(Error::domain("eta_d", self.eta_d, "0 < eta_d <= 1"));
        }
        if !(self.p_d >= 0.0 && self.p_d < 1.0) {
            return Err(Error::domain("p_d", self.p_d, "0 <= p_d < 1"));
        }
        if !(self.e_dx >= 0.0 && self.e_dx < 0.5) {
            return Err(Error::domain("e_dx", self.e_dx, "0 <= e_dx < 0.5"));
        }
        if !(self.f >= 1.0 && self.f.is_finite()) {
            return Err(Error::domain("f", self.f, "f >= 1"));
        }
        if !self.phi_ab.is_finite() {
            return Err(Error::domain("phi_ab", self.phi_ab, "finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SecurityParams {
    /// Total number of rounds.
    pub n_rounds: f64,
    pub eps_sec: f64,
    pub eps_cor: f64,
}

impl SecurityParams {
    pub fn new(n_rounds: f64, eps_sec: f64, eps_cor: f64) -> Self {
        SecurityParams {
            n_rounds,
            eps_sec,
            eps_cor,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.n_rounds >= 1.0 && self.n_rounds.is_finite()) {
            return Err(Error::domain("n_rounds", self.n_rounds, "N >= 1"));
        }
        if !(self.eps_sec > 0.0 && self.eps_sec < 1.0) {
            return Err(Error::domain("eps_sec", self.eps_sec, "0 < eps < 1"));
        }
        if !(self.eps_cor > 0.0 && self.eps_cor < 1.0) {
            return Err(Error::domain("eps_cor", self.eps_cor, "0 < eps < 1"));
        }
        Ok(())
    }
}

/// Solves the source constraint for Bob's sending probability.
///
/// With `A = t_a mu_a e^{-mu_a}`, `B = (1 - t_a) mu_b e^{-mu_b}` and
/// `K = nu_a / nu_b`, the unique solution is `t_b = A / (A + K B)`.
pub fn solve_tb(mu_a: f64, mu_b: f64, t_a: f64, nu_a: f64, nu_b: f64) -> Result<f64> {
    for (name, v) in [("mu_a", mu_a), ("mu_b", mu_b), ("nu_a", nu_a), ("nu_b", nu_b)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::domain(name, v, "intensity > 0"));
        }
    }
    if !(t_a > 0.0 && t_a < 1.0) {
        return Err(Error::domain("t_a", t_a, "0 < t_a < 1"));
    }
    let a = t_a * mu_a * (-mu_a).exp();
    let b = (1.0 - t_a) * mu_b * (-mu_b).exp();
    let k = nu_a / nu_b;
    Ok(a / (a + k * b))
}

/// Diagonal of a joint single-photon density matrix in the `{|10>, |01>}` basis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingleExcitationState {
    pub w10: f64,
    pub w01: f64,
}

impl SingleExcitationState {
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        (self.w10 - other.w10).abs().max((self.w01 - other.w01).abs())
    }
}

/// Single-photon states prepared in the Z basis and in the X basis.
///
/// They coincide exactly when the source constraint holds. The source
/// constraint is not enforced here so that a violation stays observable.
pub fn single_excitation_states(
    src: &SourceParams,
) -> Result<(SingleExcitationState, SingleExcitationState)> {
    src.validate_ranges()?;
    let (wa, wb) = single_photon_weights(src);
    let c = wa + wb;
    let z = SingleExcitationState {
        w10: wa / c,
        w01: wb / c,
    };
    let s = src.nu_a + src.nu_b;
    let x = SingleExcitationState {
        w10: src.nu_a / s,
        w01: src.nu_b / s,
    };
    Ok((z, x))
}


#[cfg(test)]
mod tests {
    use super::tests_support::symmetric_source;
    use super::*;
    use proptest::prelude::*;

    /// Independent route to t_b: bisection on the residual of the
    /// constraint written as a function of t_b.
    fn tb_by_bisection(mu_a: f64, mu_b: f64, t_a: f64, nu_a: f64, nu_b: f64) -> f64 {
        let target = nu_a / nu_b;
        let ratio = |tb: f64| {
            t_a * (1.0 - tb) * mu_a * (-mu_a).exp() / (tb * (1.0 - t_a) * mu_b * (-mu_b).exp())
        };
        let (mut lo, mut hi) = (1e-300_f64, 1.0 - 1e-16);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            // ratio is decreasing in t_b
            if ratio(mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn solve_tb_symmetric_collapses() {
        let tb = solve_tb(0.5, 0.5, 0.3, 0.1, 0.1).unwrap();
        assert!((tb - 0.3).abs() < 1e-15);
    }

    #[test]
    fn solve_tb_boundary_limit() {
        let tb = solve_tb(0.5, 0.4, 1.0 - 1e-12, 0.1, 0.05).unwrap();
        assert!(tb > 1.0 - 1e-10);
    }

    #[test]
    fn solve_tb_asymmetric_matches_bisection_and_back_substitutes() {
        let (mu_a, mu_b, nu_a, nu_b, t_a) = (0.5, 0.4, 0.1, 0.05, 0.3);
        let tb = solve_tb(mu_a, mu_b, t_a, nu_a, nu_b).unwrap();
        let oracle = tb_by_bisection(mu_a, mu_b, t_a, nu_a, nu_b);
        assert!((tb - oracle).abs() < 1e-13, "{tb} vs {oracle}");
        // frozen from the bisection oracle
        assert!((tb - 0.195_084_973_482_020_06).abs() < 1e-14, "{tb}");
        let back = t_a * (1.0 - tb) * mu_a * (-mu_a).exp() / (tb * (1.0 - t_a) * mu_b * (-mu_b).exp());
        assert!(((back - nu_a / nu_b) / (nu_a / nu_b)).abs() < 1e-12);
    }

    #[test]
    fn solve_tb_rejects_bad_domain() {
        assert!(solve_tb(0.0, 0.5, 0.3, 0.1, 0.1).is_err());
        assert!(solve_tb(0.5, 0.5, 0.3, -0.1, 0.1).is_err());
        assert!(solve_tb(0.5, 0.5, 0.0, 0.1, 0.1).is_err());
        assert!(solve_tb(0.5, 0.5, 1.0, 0.1, 0.1).is_err());
    }

    #[test]
    fn symmetric_states_are_balanced() {
        let (z, x) = single_excitation_states(&symmetric_source()).unwrap();
        assert!((z.w10 - 0.5).abs() < 1e-15 && (z.w01 - 0.5).abs() < 1e-15);
        assert!((x.w10 - 0.5).abs() < 1e-15 && (x.w01 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn perturbed_decoy_breaks_state_equality() {
        let mut src = SourceParams {
            mu_b: 0.4,
            nu_b: 0.05,
            ..symmetric_source()
        }
        .with_constraint()
        .unwrap();
        src.nu_a *= 1.1;
        let (z, x) = single_excitation_states(&src).unwrap();
        // Direct evaluation: x.w10 = 0.11/0.16 = 0.6875, z.w10 = 0.1/0.15 = 0.6667.
        assert!(z.max_abs_diff(&x) > 1e-3);
        assert!((x.w10 - 0.6875).abs() < 1e-12);
        assert!((z.w10 - 2.0 / 3.0).abs() < 1e-12);
        assert!(src.check_constraint().is_err());
    }

    #[test]
    fn range_validation_names_the_field() {
        let mut src = symmetric_source();
        src.nu_a = 0.6;
        match src.validate_ranges() {
            Err(Error::Domain { name, .. }) => assert_eq!(name, "mu_a"),
            other => panic!("unexpected {other:?}"),
        }
        let mut src = symmetric_source();
        src.p_0b = 0.7;
        assert!(src.validate_ranges().is_err());
        let mut src = symmetric_source();
        src.delta = 2.0;
        assert!(src.validate_ranges().is_err());
    }

    #[test]
    fn channel_validation() {
        assert!(ChannelParams::reference(10.0, 60.0).validate().is_ok());
        let mut ch = ChannelParams::reference(10.0, 60.0);
        ch.e_dx = 0.5;
        assert!(ch.validate().is_err());
        ch = ChannelParams::reference(-1.0, 60.0);
        assert!(ch.validate().is_err());
    }

    #[test]
    fn pair_table_layout() {
        let t = PairTable::from_fn(|a, b| (a.index() * 3 + b.index()) as f64);
        assert_eq!(t.get(Intensity::Decoy, Intensity::Vacuum), 5.0);
        assert_eq!(t.iter().count(), 9);
    }

    proptest! {
        #[test]
        fn solve_tb_monotone_in_ta(
            mu_a in 0.01f64..1.0, mu_b in 0.01f64..1.0,
            ra in 0.01f64..0.99, rb in 0.01f64..0.99,
            t1 in 0.001f64..0.998, dt in 1e-4f64..0.5,
        ) {
            let t2 = (t1 + dt).min(0.999);
            let (nu_a, nu_b) = (ra * mu_a, rb * mu_b);
            let a = solve_tb(mu_a, mu_b, t1, nu_a, nu_b).unwrap();
            let b = solve_tb(mu_a, mu_b, t2, nu_a, nu_b).unwrap();
            prop_assert!(b >= a);
        }

        #[test]
        fn constrained_sources_have_equal_states(
            mu_a in 0.01f64..1.0, mu_b in 0.01f64..1.0,
            ra in 0.01f64..0.99, rb in 0.01f64..0.99,
            t_a in 0.01f64..0.99,
        ) {
            let src = SourceParams {
                mu_a, mu_b, nu_a: ra * mu_a, nu_b: rb * mu_b, t_a,
                ..symmetric_source()
            }.with_constraint().unwrap();
            let (z, x) = single_excitation_states(&src).unwrap();
            prop_assert!(z.max_abs_diff(&x) <= 1e-12);
            prop_assert!(((z.w10 + z.w01) - 1.0).abs() <= 1e-12);
        }
    }
}
