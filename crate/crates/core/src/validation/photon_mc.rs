//! Round-by-round photon-level simulation of the measurement station.
//!
//! Shares nothing with the analytic model except the parameter structs:
//! Z-path photons are drawn at the source and thinned one by one, the
//! interfering light is propagated as complex amplitudes with sampled
//! phases and counted with Poisson draws, dark counts and misalignment are
//! Bernoulli trials, and post-selection tests the sampled phases.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::channel::ExpectedYields;
use crate::params::{ChannelParams, Intensity, Side, SourceParams};

use super::{Check, SuiteReport};

/// One analytic value against its Monte-Carlo estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub name: String,
    pub analytic: f64,
    pub simulated: f64,
    /// Standard error of `simulated` under the analytic value.
    pub std_err: f64,
}

impl Comparison {
    /// Distance in standard errors; zero when both sides are exactly zero.
    pub fn z_score(&self) -> f64 {
        let diff = (self.simulated - self.analytic).abs();
        if diff == 0.0 {
            0.0
        } else if self.std_err == 0.0 {
            f64::INFINITY
        } else {
            diff / self.std_err
        }
    }
}

fn poisson(rng: &mut ChaCha8Rng, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive mean").sample(rng) as u64
}

fn bernoulli(rng: &mut ChaCha8Rng, p: f64) -> bool {
    rng.random::<f64>() < p
}

/// Number of `n` photons that survive independent loss with probability `keep`.
fn thin(rng: &mut ChaCha8Rng, n: u64, keep: f64) -> u64 {
    (0..n).filter(|_| bernoulli(rng, keep)).count() as u64
}

struct Station<'a> {
    ch: &'a ChannelParams,
    /// Per-arm transmittance to the Z detector and to the interfering splitter.
    to_z: [f64; 2],
    to_x: [f64; 2],
}

impl<'a> Station<'a> {
    fn new(src: &SourceParams, ch: &'a ChannelParams) -> Self {
        let eta = |side: Side| {
            let l = match side {
                Side::A => ch.l_a,
                Side::B => ch.l_b,
            };
            ch.eta_d * 10f64.powf(-ch.alpha * l / 10.0)
        };
        let (ea, eb) = (eta(Side::A), eta(Side::B));
        Station {
            ch,
            to_z: [ea * src.q_z, eb * src.q_z],
            to_x: [ea * (1.0 - src.q_z), eb * (1.0 - src.q_z)],
        }
    }

    fn detector(&self, rng: &mut ChaCha8Rng, photons: u64) -> bool {
        let dark = bernoulli(rng, self.ch.p_d);
        photons > 0 || dark
    }

    /// `(d1, d2)` clicks for `n_a`, `n_b` photons emitted towards the Z path
    /// and X path alike; only the Z share is thinned here.
    fn z_clicks(&self, rng: &mut ChaCha8Rng, n_a: u64, n_b: u64) -> (bool, bool) {
        let a = thin(rng, n_a, self.to_z[0]);
        let b = thin(rng, n_b, self.to_z[1]);
        (self.detector(rng, a), self.detector(rng, b))
    }

    /// `(d3, d4)` clicks for coherent amplitudes `sqrt(m_a) e^{i phi_a}`,
    /// `sqrt(m_b) e^{i phi_b}` at the source, after misalignment.
    fn x_clicks(&self, rng: &mut ChaCha8Rng, m_a: f64, m_b: f64, phi_a: f64, phi_b: f64) -> (bool, bool) {
        let ra = (m_a * self.to_x[0]).sqrt();
        let rb = (m_b * self.to_x[1]).sqrt();
        let phi_b = phi_b - self.ch.phi_ab;
        let (ax, ay) = (ra * phi_a.cos(), ra * phi_a.sin());
        let (bx, by) = (rb * phi_b.cos(), rb * phi_b.sin());
        let plus = 0.5 * ((ax + bx).powi(2) + (ay + by).powi(2));
        let minus = 0.5 * ((ax - bx).powi(2) + (ay - by).powi(2));
        let n3 = poisson(rng, plus);
        let n4 = poisson(rng, minus);
        let d3 = self.detector(rng, n3);
        let d4 = self.detector(rng, n4);
        if d3 != d4 && bernoulli(rng, self.ch.e_dx) {
            (d4, d3)
        } else {
            (d3, d4)
        }
    }
}

#[derive(Default)]
struct Tally {
    z: [[u64; 3]; 3],
    x: [[u64; 3]; 3],
    pm: u64,
    pm_err: u64,
    sifted: u64,
    sifted_err: u64,
}

/// Whether an announced phase difference passes post-selection, and if so
/// whether D3 is the expected detector.
fn phase_slice(theta: f64, delta: f64) -> Option<bool> {
    let t = theta.rem_euclid(TAU);
    if t <= delta || t >= TAU - delta {
        Some(true)
    } else if (t - PI).abs() <= delta {
        Some(false)
    } else {
        None
    }
}

fn simulate(src: &SourceParams, ch: &ChannelParams, trials: u64, seed: u64) -> Tally {
    let st = Station::new(src, ch);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Tally::default();
    for _ in 0..trials {
        // one round of every announced intensity pair
        for a in Intensity::ALL {
            for b in Intensity::ALL {
                let m_a = src.intensity(Side::A, a);
                let m_b = src.intensity(Side::B, b);
                // The two paths split a coherent state into independent
                // coherent states, so they are simulated separately.
                let n_a = poisson(&mut rng, m_a);
                let n_b = poisson(&mut rng, m_b);
                let (d1, d2) = st.z_clicks(&mut rng, n_a, n_b);
                if d1 != d2 {
                    t.z[a.index()][b.index()] += 1;
                }
                let (pa, pb) = (rng.random::<f64>() * TAU, rng.random::<f64>() * TAU);
                let (d3, d4) = st.x_clicks(&mut rng, m_a, m_b, pa, pb);
                if d3 != d4 {
                    t.x[a.index()][b.index()] += 1;
                }
            }
        }

        // decoy pair with post-selection on the announced phases
        let (pa, pb) = (rng.random::<f64>() * TAU, rng.random::<f64>() * TAU);
        let (d3, d4) = st.x_clicks(&mut rng, src.nu_a, src.nu_b, pa, pb);
        if let Some(d3_expected) = phase_slice(pa - pb, src.delta) {
            if d3 != d4 {
                t.pm += 1;
                if d3 != d3_expected {
                    t.pm_err += 1;
                }
            }
        }

        // raw-key round
        let alice_sends = bernoulli(&mut rng, src.t_a);
        let bob_sends = bernoulli(&mut rng, src.t_b);
        let n_a = if alice_sends { poisson(&mut rng, src.mu_a) } else { 0 };
        let n_b = if bob_sends { poisson(&mut rng, src.mu_b) } else { 0 };
        let (d1, d2) = st.z_clicks(&mut rng, n_a, n_b);
        if d1 != d2 {
            t.sifted += 1;
            let charlie_bit = d1;
            let bob_bit = !bob_sends;
            if !(alice_sends == bob_bit && bob_bit == charlie_bit) {
                t.sifted_err += 1;
            }
        }
    }
    t
}

fn gain(name: String, analytic: f64, hits: u64, trials: u64) -> Comparison {
    let n = trials as f64;
    Comparison {
        name,
        analytic,
        simulated: hits as f64 / n,
        std_err: (analytic * (1.0 - analytic) / n).sqrt(),
    }
}

fn rate(name: String, analytic: f64, hits: u64, events: u64) -> Option<Comparison> {
    if events == 0 {
        return None;
    }
    let n = events as f64;
    Some(Comparison {
        name,
        analytic,
        simulated: hits as f64 / n,
        std_err: (analytic * (1.0 - analytic) / n).sqrt(),
    })
}

/// Every analytic gain and error rate against `trials` simulated rounds.
///
/// Error rates with no simulated events carry no information and are left
/// out.
pub fn compare_channel(src: &SourceParams, ch: &ChannelParams, trials: u64, seed: u64) -> Vec<Comparison> {
    let y = ExpectedYields::compute(src, ch);
    let t = simulate(src, ch, trials, seed);
    let mut out = Vec::new();
    for a in Intensity::ALL {
        for b in Intensity::ALL {
            let (i, j) = (a.index(), b.index());
            out.push(gain(format!("z_gain[{a:?},{b:?}]"), y.z_gain.get(a, b), t.z[i][j], trials));
            out.push(gain(format!("x_gain[{a:?},{b:?}]"), y.x_gain.get(a, b), t.x[i][j], trials));
        }
    }
    out.push(gain("pm_gain".into(), y.pm_gain, t.pm, trials));
    out.extend(rate("pm_error".into(), y.pm_error, t.pm_err, t.pm));
    out.push(gain("sifted_gain".into(), y.sifted_gain, t.sifted, trials));
    out.extend(rate("sifted_error".into(), y.sifted_error, t.sifted_err, t.sifted));
    out
}

/// A random but well-formed configuration for the channel suite.
pub fn random_configuration(rng: &mut ChaCha8Rng) -> (SourceParams, ChannelParams) {
    loop {
        let mu_a = rng.random_range(0.05..1.0);
        let mu_b = rng.random_range(0.05..1.0);
        let src = SourceParams {
            mu_a,
            mu_b,
            nu_a: mu_a * rng.random_range(0.05..0.9),
            nu_b: mu_b * rng.random_range(0.05..0.9),
            t_a: rng.random_range(0.02..0.5),
            t_b: 0.5,
            p_za: 0.5,
            p_zb: 0.5,
            p_0a: 0.3,
            p_0b: 0.3,
            p_nua: 0.3,
            p_nub: 0.3,
            delta: rng.random_range(0.05..1.5),
            q_z: rng.random_range(0.1..0.9),
        };
        let Ok(src) = src.with_constraint() else { continue };
        if src.validate().is_err() {
            continue;
        }
        let ch = ChannelParams {
            l_a: rng.random_range(0.0..100.0),
            l_b: rng.random_range(0.0..100.0),
            p_d: 10f64.powf(rng.random_range(-8.0..-3.0)),
            e_dx: rng.random_range(0.0..0.1),
            phi_ab: rng.random_range(-0.3..0.3),
            ..ChannelParams::reference(0.0, 0.0)
        };
        return (src, ch);
    }
}

/// Channel suite: `configs` random configurations, `trials` rounds each,
/// every comparison within `max_z` standard errors.
pub fn channel_suite(configs: usize, trials: u64, max_z: f64, seed: u64) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();
    for c in 0..configs {
        let (src, ch) = random_configuration(&mut rng);
        let run_seed = rng.random::<u64>();
        let comps = compare_channel(&src, &ch, trials, run_seed);
        let worst = comps
            .iter()
            .max_by(|a, b| a.z_score().total_cmp(&b.z_score()))
            .expect("comparisons");
        checks.push(Check {
            name: format!("config {c}"),
            passed: comps.iter().all(|x| x.z_score() <= max_z),
            detail: format!(
                "{} values, worst {} at {:.2} SE (analytic {:.6e}, simulated {:.6e})",
                comps.len(),
                worst.name,
                worst.z_score(),
                worst.analytic,
                worst.simulated
            ),
        });
    }
    SuiteReport {
        suite: "channel".into(),
        checks,
    }
}
