//! Photon-number-tagged simulation for checking the decoy and finite-key
//! estimators against the quantities they bound.
//!
//! Single-photon yields and the single-photon phase error are computed here
//! from the physics of one photon (or a fixed photon number) travelling
//! through the station, not from the coherent-state gains the estimators
//! see.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use crate::asymptotic::{phase_error_bound, yield_bounds, Basis};
use crate::channel::{announced_probabilities, mean_over, ExpectedYields, ObservedCounts};
use crate::error::Error;
use crate::finite_key::FiniteKeyEstimator;
use crate::params::{ChannelParams, Intensity, PairTable, SecurityParams, Side, SourceParams};

use super::coverage::tolerance;
use super::{Check, SuiteReport};

use Intensity::{Decoy, Vacuum};

/// Photon classes beyond this number are merged into the last one; their
/// Poisson mass is below 1e-30 for every intensity the suites draw.
const MAX_PHOTONS: usize = 30;

/// Relative slack for comparing an asymptotic bound with its true value.
const FLOAT_SLACK: f64 = 1e-12;

struct Paths {
    z: [f64; 2],
    x: [f64; 2],
    p_d: f64,
    e_dx: f64,
    phi_ab: f64,
}

impl Paths {
    fn new(src: &SourceParams, ch: &ChannelParams) -> Self {
        let eta = |l: f64| ch.eta_d * 10f64.powf(-ch.alpha * l / 10.0);
        let (ea, eb) = (eta(ch.l_a), eta(ch.l_b));
        Paths {
            z: [ea * src.q_z, eb * src.q_z],
            x: [ea * (1.0 - src.q_z), eb * (1.0 - src.q_z)],
            p_d: ch.p_d,
            e_dx: ch.e_dx,
            phi_ab: ch.phi_ab,
        }
    }

    fn side(side: Side) -> usize {
        match side {
            Side::A => 0,
            Side::B => 1,
        }
    }

    /// Click probability of a Z detector receiving `n` photons from `side`.
    fn z_click(&self, side: Side, n: usize) -> f64 {
        1.0 - (1.0 - self.z[Self::side(side)]).powi(n as i32) * (1.0 - self.p_d)
    }

    /// `(own detector only, other detector only)` when only `side` emits `n`.
    fn z_one_sided(&self, side: Side, n: usize) -> (f64, f64) {
        let c = self.z_click(side, n);
        (c * (1.0 - self.p_d), self.p_d * (1.0 - c))
    }

    /// Effective interference events when only `side` emits `n` photons;
    /// each photon picks D3 or D4 with equal probability.
    fn x_one_sided(&self, side: Side, n: usize) -> f64 {
        let eta = self.x[Self::side(side)];
        let p = self.p_d;
        let single = (1.0 - p) * ((1.0 - eta / 2.0).powi(n as i32) - (1.0 - eta).powi(n as i32) * (1.0 - p));
        2.0 * single
    }

    /// `(effective, error)` probabilities for `n` photons in the joint mode
    /// of the decoy pair, averaged over the accepted phase slices.
    fn pm_class(&self, src: &SourceParams, n: usize) -> (f64, f64) {
        let s = src.nu_a + src.nu_b;
        let ua = src.nu_a * self.x[0] / s;
        let ub = src.nu_b * self.x[1] / s;
        let p = self.p_d;
        let at = |theta: f64, d3_correct: bool| {
            let cross = (ua * ub).sqrt() * (theta + self.phi_ab).cos();
            let p3 = 0.5 * (ua + ub) + cross;
            let p4 = 0.5 * (ua + ub) - cross;
            let none = (1.0 - p3 - p4).powi(n as i32) * (1.0 - p);
            let only3 = (1.0 - p) * ((1.0 - p4).powi(n as i32) - none);
            let only4 = (1.0 - p) * ((1.0 - p3).powi(n as i32) - none);
            let (right, wrong) = if d3_correct { (only3, only4) } else { (only4, only3) };
            [right + wrong, (1.0 - self.e_dx) * wrong + self.e_dx * right]
        };
        let d = src.delta;
        let [e0, r0] = mean_over(-d, d, |t| at(t, true));
        let [e1, r1] = mean_over(PI - d, PI + d, |t| at(t, false));
        (0.5 * (e0 + e1), 0.5 * (r0 + r1))
    }
}

/// True single-photon quantities of a configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinglePhotonTruth {
    pub y10z: f64,
    pub y01z: f64,
    pub y10x: f64,
    pub y01x: f64,
    /// Post-selected single-photon effective probability.
    pub y1pm: f64,
    /// Phase error rate of the single-photon component.
    pub e1: f64,
}

pub fn single_photon_truth(src: &SourceParams, ch: &ChannelParams) -> SinglePhotonTruth {
    let paths = Paths::new(src, ch);
    let z = |side| {
        let (a, b) = paths.z_one_sided(side, 1);
        a + b
    };
    let (eff, err) = paths.pm_class(src, 1);
    SinglePhotonTruth {
        y10z: z(Side::A),
        y01z: z(Side::B),
        y10x: paths.x_one_sided(Side::A, 1),
        y01x: paths.x_one_sided(Side::B, 1),
        y1pm: eff,
        e1: if eff > 0.0 { err / eff } else { 0.0 },
    }
}

/// Asymptotic soundness of one configuration; returns the violated bounds.
pub fn asymptotic_violations(src: &SourceParams, ch: &ChannelParams) -> Vec<String> {
    let truth = single_photon_truth(src, ch);
    let y = ExpectedYields::compute(src, ch);
    let mut bad = Vec::new();
    let mut below = |name: &str, bound: f64, truth: f64| {
        if bound > truth * (1.0 + FLOAT_SLACK) {
            bad.push(format!("{name}: bound {bound:.6e} > true {truth:.6e}"));
        }
    };
    match (yield_bounds(&y, src, Basis::Z), yield_bounds(&y, src, Basis::X)) {
        (Ok(z), Ok(x)) => {
            below("Y10 (Z)", z.y10, truth.y10z);
            below("Y01 (Z)", z.y01, truth.y01z);
            below("Y10 (X)", x.y10, truth.y10x);
            below("Y01 (X)", x.y01, truth.y01x);
            let s = src.nu_a + src.nu_b;
            below("Y1 (X)", x.y1, (src.nu_a * truth.y10x + src.nu_b * truth.y01x) / s);
        }
        (Err(e), _) | (_, Err(e)) => bad.push(format!("decoy bound failed: {e}")),
    }
    let e1 = match phase_error_bound(&y, src) {
        Ok((e, _)) => e,
        Err(Error::UndefinedBound(_)) => 0.5,
        Err(e) => {
            bad.push(format!("phase error bound failed: {e}"));
            return bad;
        }
    };
    if e1 < truth.e1.min(0.5) * (1.0 - FLOAT_SLACK) {
        bad.push(format!("e1ph: bound {e1:.6e} < true {:.6e}", truth.e1));
    }
    bad
}

fn binomial(rng: &mut ChaCha8Rng, n: f64, p: f64) -> f64 {
    if n <= 0.0 || p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n as u64, p).expect("valid binomial").sample(rng) as f64
}

fn poisson_pmf(mean: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(MAX_PHOTONS + 1);
    let mut term = (-mean).exp();
    for n in 0..=MAX_PHOTONS {
        out.push(term);
        term *= mean / (n + 1) as f64;
    }
    out
}

/// Splits `total` rounds over photon-number classes of a Poisson source.
fn split_by_photons(rng: &mut ChaCha8Rng, total: f64, mean: f64) -> Vec<f64> {
    let pmf = poisson_pmf(mean);
    let mut left = total;
    let mut mass = 1.0;
    let mut out = Vec::with_capacity(pmf.len());
    for (n, p) in pmf.iter().enumerate() {
        if n == MAX_PHOTONS || left == 0.0 {
            out.push(left);
            left = 0.0;
            continue;
        }
        let k = binomial(rng, left, (p / mass).min(1.0));
        out.push(k);
        left -= k;
        mass -= p;
    }
    out
}

/// Counts of one tagged run together with the true values of every bounded
/// quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggedRun {
    pub counts: ObservedCounts,
    pub s0z: f64,
    pub s1z: f64,
    pub s1pm: f64,
    pub t1pm: f64,
    /// Phase errors among the single-photon raw-key events.
    pub phase_errors: f64,
}

/// One finite run, drawn class by class.
///
/// Event counts that the estimators use are decomposed by photon number of
/// the emitting sender; the rest are drawn from their gains directly.
pub fn tagged_run(src: &SourceParams, ch: &ChannelParams, sec: &SecurityParams, rng: &mut ChaCha8Rng) -> TaggedRun {
    let paths = Paths::new(src, ch);
    let y = ExpectedYields::compute(src, ch);
    let n = sec.n_rounds;

    let probs = announced_probabilities(src);
    let mut announced = PairTable::<f64>::default();
    let mut left = n;
    let mut mass = 1.0;
    for (a, b, p) in probs.iter() {
        let k = binomial(rng, left, (p / mass).min(1.0));
        announced.set(a, b, k);
        left -= k;
        mass -= p;
    }
    let all_z = left;

    let mut z_events = PairTable::<f64>::default();
    let mut x_events = PairTable::<f64>::default();
    for (a, b, rounds) in announced.iter() {
        let sender = match (a, b) {
            (Vacuum, Vacuum) => None,
            (k, Vacuum) => Some((Side::A, src.intensity(Side::A, k))),
            (Vacuum, k) => Some((Side::B, src.intensity(Side::B, k))),
            _ => {
                z_events.set(a, b, binomial(rng, rounds, y.z_gain.get(a, b)));
                x_events.set(a, b, binomial(rng, rounds, y.x_gain.get(a, b)));
                continue;
            }
        };
        let (side, mean) = sender.unwrap_or((Side::A, 0.0));
        let classes = split_by_photons(rng, rounds, mean);
        let (mut z, mut x) = (0.0, 0.0);
        for (k, &r) in classes.iter().enumerate() {
            let (own, other) = paths.z_one_sided(side, k);
            z += binomial(rng, r, own + other);
            x += binomial(rng, r, paths.x_one_sided(side, k));
        }
        z_events.set(a, b, z);
        x_events.set(a, b, x);
    }

    // post-selected decoy-pair events, tagged by total photon number
    let selected = binomial(rng, announced.get(Decoy, Decoy), src.p_pm());
    let classes = split_by_photons(rng, selected, src.nu_a + src.nu_b);
    let (mut pm_events, mut pm_errors, mut s1pm, mut t1pm) = (0.0, 0.0, 0.0, 0.0);
    let mut e1_true = 0.0;
    for (k, &r) in classes.iter().enumerate() {
        let (eff, err) = paths.pm_class(src, k);
        let events = binomial(rng, r, eff);
        let rate = if eff > 0.0 { err / eff } else { 0.0 };
        let errors = binomial(rng, events, rate);
        pm_events += events;
        pm_errors += errors;
        if k == 1 {
            s1pm = events;
            t1pm = errors;
            e1_true = rate;
        }
    }

    // raw key: sending decisions, then photon number of the lone sender
    let (ta, tb) = (src.t_a, src.t_b);
    let only_a = binomial(rng, all_z, ta * (1.0 - tb));
    let only_b = binomial(rng, all_z - only_a, (1.0 - ta) * tb / (1.0 - ta * (1.0 - tb)));
    let both = binomial(rng, all_z - only_a - only_b, ta * tb / (ta * tb + (1.0 - ta) * (1.0 - tb)));
    let neither = all_z - only_a - only_b - both;
    let (mut sifted, mut sifted_errors, mut s0z, mut s1z) = (0.0, 0.0, 0.0, 0.0);
    for (side, rounds) in [(Side::A, only_a), (Side::B, only_b)] {
        let classes = split_by_photons(rng, rounds, src.mu(side));
        for (k, &r) in classes.iter().enumerate() {
            // the lone sender's bit matches both the other sender's and
            // the own-detector outcome
            let (own, other) = paths.z_one_sided(side, k);
            let events = binomial(rng, r, own + other);
            let errors = binomial(rng, events, if own + other > 0.0 { other / (own + other) } else { 0.0 });
            sifted += events;
            sifted_errors += errors;
            match k {
                0 => s0z += events,
                1 => s1z += events,
                _ => {}
            }
        }
    }
    // Both or neither sending: the senders' bits disagree, so every event
    // is an error.
    let p = ch.p_d;
    let c = |side: Side| 1.0 - (-src.mu(side) * paths.z[Paths::side(side)]).exp() * (1.0 - p);
    let (ca, cb) = (c(Side::A), c(Side::B));
    for events in [binomial(rng, both, ca * (1.0 - cb) + cb * (1.0 - ca)), binomial(rng, neither, 2.0 * p * (1.0 - p))] {
        sifted += events;
        sifted_errors += events;
    }
    let phase_errors = binomial(rng, s1z, e1_true);

    TaggedRun {
        counts: ObservedCounts {
            n_rounds: n,
            announced,
            z_events,
            x_events,
            sifted,
            sifted_errors,
            pm_events,
            pm_errors,
        },
        s0z,
        s1z,
        s1pm,
        t1pm,
        phase_errors,
    }
}

/// Which estimated quantities fell on the wrong side of the truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FiniteFailures {
    pub s0z: bool,
    pub s1z: bool,
    pub s1pm: bool,
    pub t1pm: bool,
    pub e1ph: bool,
}

impl FiniteFailures {
    pub fn any(&self) -> bool {
        self.s0z || self.s1z || self.s1pm || self.t1pm || self.e1ph
    }
}

/// Runs the estimators at per-term failure probability `eps` on a tagged
/// run and compares with the truth.
pub fn finite_failures(src: &SourceParams, run: &TaggedRun, eps: f64) -> crate::Result<FiniteFailures> {
    let mut est = FiniteKeyEstimator::with_term_eps(&run.counts, src, eps)?;
    let b = est.estimate_all()?;
    let e1 = b.e1ph_up.unwrap_or(0.5);
    Ok(FiniteFailures {
        s0z: b.s0z > run.s0z,
        s1z: b.single_z.total > run.s1z,
        s1pm: b.single_pm.total > run.s1pm,
        t1pm: b.t1pm_up < run.t1pm,
        e1ph: run.s1z > 0.0 && e1 < run.phase_errors / run.s1z,
    })
}

/// A random configuration for the soundness suites.
pub fn random_configuration(rng: &mut ChaCha8Rng) -> (SourceParams, ChannelParams) {
    loop {
        let mu_a = rng.random_range(0.05..0.9);
        let mu_b = rng.random_range(0.05..0.9);
        let p_0a = rng.random_range(0.1..0.5);
        let p_0b = rng.random_range(0.1..0.5);
        let src = SourceParams {
            mu_a,
            mu_b,
            nu_a: mu_a * rng.random_range(0.02..0.9),
            nu_b: mu_b * rng.random_range(0.02..0.9),
            t_a: rng.random_range(0.01..0.5),
            t_b: 0.5,
            p_za: rng.random_range(0.3..0.9),
            p_zb: rng.random_range(0.3..0.9),
            p_0a,
            p_0b,
            p_nua: (1.0 - p_0a) * rng.random_range(0.2..0.9),
            p_nub: (1.0 - p_0b) * rng.random_range(0.2..0.9),
            delta: rng.random_range(0.02..1.5),
            q_z: rng.random_range(0.1..0.9),
        };
        let Ok(src) = src.with_constraint() else { continue };
        if src.validate().is_err() {
            continue;
        }
        let ch = ChannelParams {
            l_a: rng.random_range(0.0..150.0),
            l_b: rng.random_range(0.0..150.0),
            p_d: 10f64.powf(rng.random_range(-9.0..-4.0)),
            e_dx: rng.random_range(0.0..0.1),
            phi_ab: rng.random_range(-0.2..0.2),
            ..ChannelParams::reference(0.0, 0.0)
        };
        return (src, ch);
    }
}

/// Asymptotic soundness on `configs` random configurations: no violation
/// allowed.
pub fn asymptotic_suite(configs: usize, seed: u64) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = Vec::new();
    for c in 0..configs {
        let (src, ch) = random_configuration(&mut rng);
        for v in asymptotic_violations(&src, &ch) {
            violations.push(format!("config {c}: {v}"));
        }
    }
    SuiteReport {
        suite: "soundness".into(),
        checks: vec![super::Check {
            name: format!("asymptotic bounds on {configs} configurations"),
            passed: violations.is_empty(),
            detail: if violations.is_empty() {
                "no violations".into()
            } else {
                violations.join("; ")
            },
        }],
    }
}

/// Finite soundness: `runs` tagged runs on each of `configs` random
/// configurations with `N` log-uniform in `[1e8, 1e11]`. Each estimated
/// quantity may fail in at most a fraction `eps` of runs (plus three
/// standard deviations).
pub fn finite_suite(configs: usize, runs: usize, eps: f64, seed: u64) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = [0u64; 5];
    let mut any = 0u64;
    let mut errors = Vec::new();
    let mut total = 0u64;
    for c in 0..configs {
        let (src, ch) = random_configuration(&mut rng);
        let n = 10f64.powf(rng.random_range(8.0..11.0)).round();
        let sec = SecurityParams::new(n, 0.5, 0.5);
        for _ in 0..runs {
            let run = tagged_run(&src, &ch, &sec, &mut rng);
            match finite_failures(&src, &run, eps) {
                Ok(f) => {
                    total += 1;
                    for (slot, failed) in counts.iter_mut().zip([f.s0z, f.s1z, f.s1pm, f.t1pm, f.e1ph]) {
                        *slot += failed as u64;
                    }
                    any += f.any() as u64;
                }
                Err(e) => errors.push(format!("config {c}: {e}")),
            }
        }
    }
    let limit = tolerance(eps, total.max(1));
    let mut checks: Vec<Check> = ["s0z lower", "s1z lower", "s1pm lower", "t1pm upper", "e1ph upper"]
        .iter()
        .zip(counts)
        .map(|(name, k)| {
            let freq = k as f64 / total.max(1) as f64;
            Check {
                name: format!("finite {name}"),
                passed: freq <= limit,
                detail: format!("failed in {k} of {total} runs ({freq:.5}, limit {limit:.5})"),
            }
        })
        .collect();
    checks.push(Check {
        name: "finite runs completed".into(),
        passed: errors.is_empty(),
        detail: format!(
            "{total} runs, {any} with any failure{}",
            if errors.is_empty() { String::new() } else { format!("; errors: {}", errors.join("; ")) }
        ),
    });
    SuiteReport {
        suite: "soundness".into(),
        checks,
    }
}
