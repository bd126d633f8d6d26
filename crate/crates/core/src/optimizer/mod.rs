//! Source-parameter optimization and distance scans.
//!
//! The search runs in a normalized unit cube. Intensities and the window
//! half-width map logarithmically onto their boxes, probabilities through
//! the logit. Two coordinates are reparametrized so that every point of the
//! cube is a valid source: the decoy intensity is a fraction of the signal
//! intensity, and the decoy probability is a fraction of what the vacuum
//! probability leaves over. `t_b` is always derived from the constraint.

mod nelder_mead;

pub use nelder_mead::{minimize, Minimum};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotic::asymptotic_rate_from;
use crate::channel::{expected_counts_from, ExpectedYields};
use crate::error::{Error, Result};
use crate::finite_key::finite_key;
use crate::params::{ChannelParams, SecurityParams, Side, SourceParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Asymptotic,
    Finite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    /// Independent parameters on each side.
    Asymmetric,
    /// Both senders share every setting.
    Symmetric,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Asymmetric => "asymmetric",
            Protocol::Symmetric => "symmetric",
        }
    }
}

/// Open boxes for each parameter family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamBox {
    pub intensity: (f64, f64),
    pub probability: (f64, f64),
    pub delta: (f64, f64),
}

impl Default for ParamBox {
    fn default() -> Self {
        ParamBox {
            intensity: (1e-4, 1.0),
            probability: (1e-4, 1.0 - 1e-4),
            delta: (1e-3, std::f64::consts::FRAC_PI_2),
        }
    }
}

impl ParamBox {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.intensity;
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return Err(Error::domain("intensity box", lo, "0 < lo < hi"));
        }
        let (lo, hi) = self.probability;
        if !(lo > 0.0 && lo < hi && hi < 1.0) {
            return Err(Error::domain("probability box", lo, "0 < lo < hi < 1"));
        }
        let (lo, hi) = self.delta;
        if !(lo > 0.0 && lo < hi && hi <= std::f64::consts::FRAC_PI_2) {
            return Err(Error::domain("delta box", lo, "0 < lo < hi <= pi/2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizationSpec {
    pub objective: Objective,
    pub protocol: Protocol,
    pub multistart: usize,
    /// Objective evaluations per start.
    pub max_evals: usize,
    pub seed: u64,
    #[serde(default)]
    pub bounds: ParamBox,
}

impl OptimizationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.multistart == 0 {
            return Err(Error::domain("multistart", 0.0, ">= 1"));
        }
        if self.max_evals == 0 {
            return Err(Error::domain("max_evals", 0.0, ">= 1"));
        }
        self.bounds.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    PZ,
    Mu,
    NuFraction,
    T,
    PVacuum,
    PDecoyFraction,
    QZ,
    Delta,
}

/// One search coordinate; `side == None` drives both senders.
#[derive(Debug, Clone, Copy)]
struct Axis {
    kind: Kind,
    side: Option<Side>,
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Maps between the unit cube and source parameters.
#[derive(Debug, Clone)]
struct Space {
    axes: Vec<Axis>,
    bounds: ParamBox,
    /// Values of parameters that are not searched.
    template: SourceParams,
}

impl Space {
    fn new(objective: Objective, protocol: Protocol, bounds: ParamBox, template: SourceParams) -> Self {
        let sides: &[Option<Side>] = match protocol {
            Protocol::Asymmetric => &[Some(Side::A), Some(Side::B)],
            Protocol::Symmetric => &[None],
        };
        let mut axes = Vec::new();
        let mut push = |kind, per_side: bool| {
            if per_side {
                for &side in sides {
                    axes.push(Axis { kind, side });
                }
            } else {
                axes.push(Axis { kind, side: None });
            }
        };
        push(Kind::Mu, true);
        push(Kind::NuFraction, true);
        // t_b follows from the constraint, so only one sending probability
        // is free in either protocol.
        push(Kind::T, false);
        push(Kind::QZ, false);
        push(Kind::Delta, false);
        if objective == Objective::Finite {
            push(Kind::PZ, true);
            push(Kind::PVacuum, true);
            push(Kind::PDecoyFraction, true);
        }
        Space {
            axes,
            bounds,
            template,
        }
    }

    fn dim(&self) -> usize {
        self.axes.len()
    }

    fn log_map(&self, (lo, hi): (f64, f64), x: f64) -> f64 {
        lo * (hi / lo).powf(x)
    }

    fn log_unmap(&self, (lo, hi): (f64, f64), v: f64) -> f64 {
        ((v / lo).ln() / (hi / lo).ln()).clamp(0.0, 1.0)
    }

    fn prob_map(&self, x: f64) -> f64 {
        let (lo, hi) = self.bounds.probability;
        sigmoid(logit(lo) + x * (logit(hi) - logit(lo)))
    }

    fn prob_unmap(&self, p: f64) -> f64 {
        let (lo, hi) = self.bounds.probability;
        let p = p.clamp(lo, hi);
        ((logit(p) - logit(lo)) / (logit(hi) - logit(lo))).clamp(0.0, 1.0)
    }

    fn decode(&self, x: &[f64]) -> Result<SourceParams> {
        let mut s = self.template;
        // intensities first: the decoy fraction refers to the signal value
        let mut fractions = Vec::new();
        let mut decoy_probs = Vec::new();
        for (axis, &v) in self.axes.iter().zip(x) {
            let sides = match axis.side {
                Some(side) => vec![side],
                None => vec![Side::A, Side::B],
            };
            for side in sides {
                match axis.kind {
                    Kind::Mu => *mu_mut(&mut s, side) = self.log_map(self.bounds.intensity, v),
                    Kind::NuFraction => fractions.push((side, self.prob_map(v))),
                    Kind::T => s.t_a = self.prob_map(v),
                    Kind::PZ => *pz_mut(&mut s, side) = self.prob_map(v),
                    Kind::PVacuum => *p0_mut(&mut s, side) = self.prob_map(v),
                    Kind::PDecoyFraction => decoy_probs.push((side, self.prob_map(v))),
                    Kind::QZ => s.q_z = self.prob_map(v),
                    Kind::Delta => s.delta = self.log_map(self.bounds.delta, v),
                }
            }
        }
        for (side, f) in fractions {
            *nu_mut(&mut s, side) = f * s.mu(side);
        }
        for (side, f) in decoy_probs {
            let rest = 1.0 - s.p_vacuum(side);
            *pnu_mut(&mut s, side) = f * rest;
        }
        let s = s.with_constraint()?;
        let (lo, hi) = self.bounds.probability;
        if !(s.t_b >= lo && s.t_b <= hi) {
            return Err(Error::domain("t_b", s.t_b, "inside the probability box"));
        }
        s.validate()?;
        Ok(s)
    }

    /// Cube coordinates of `src`, clamped onto the cube. For the symmetric
    /// space the two sides are averaged.
    fn encode(&self, src: &SourceParams) -> Vec<f64> {
        self.axes
            .iter()
            .map(|axis| {
                let sides = match axis.side {
                    Some(side) => vec![side],
                    None => vec![Side::A, Side::B],
                };
                let vals: Vec<f64> = sides
                    .iter()
                    .map(|&side| match axis.kind {
                        Kind::Mu => self.log_unmap(self.bounds.intensity, src.mu(side)),
                        Kind::NuFraction => self.prob_unmap(src.nu(side) / src.mu(side)),
                        Kind::T => self.prob_unmap(src.t_a),
                        Kind::PZ => self.prob_unmap(src.p_z(side)),
                        Kind::PVacuum => self.prob_unmap(src.p_vacuum(side)),
                        Kind::PDecoyFraction => {
                            self.prob_unmap(src.p_decoy(side) / (1.0 - src.p_vacuum(side)))
                        }
                        Kind::QZ => self.prob_unmap(src.q_z),
                        Kind::Delta => self.log_unmap(self.bounds.delta, src.delta),
                    })
                    .collect();
                vals.iter().sum::<f64>() / vals.len() as f64
            })
            .collect()
    }
}

fn mu_mut(s: &mut SourceParams, side: Side) -> &mut f64 {
    match side {
        Side::A => &mut s.mu_a,
        Side::B => &mut s.mu_b,
    }
}

fn nu_mut(s: &mut SourceParams, side: Side) -> &mut f64 {
    match side {
        Side::A => &mut s.nu_a,
        Side::B => &mut s.nu_b,
    }
}

fn pz_mut(s: &mut SourceParams, side: Side) -> &mut f64 {
    match side {
        Side::A => &mut s.p_za,
        Side::B => &mut s.p_zb,
    }
}

fn p0_mut(s: &mut SourceParams, side: Side) -> &mut f64 {
    match side {
        Side::A => &mut s.p_0a,
        Side::B => &mut s.p_0b,
    }
}

fn pnu_mut(s: &mut SourceParams, side: Side) -> &mut f64 {
    match side {
        Side::A => &mut s.p_nua,
        Side::B => &mut s.p_nub,
    }
}

/// A moderate starting point used as the template and as the first start.
pub fn default_source() -> SourceParams {
    SourceParams {
        mu_a: 0.4,
        mu_b: 0.4,
        nu_a: 0.1,
        nu_b: 0.1,
        t_a: 0.05,
        t_b: 0.05,
        p_za: 0.8,
        p_zb: 0.8,
        p_0a: 0.4,
        p_0b: 0.4,
        p_nua: 0.4,
        p_nub: 0.4,
        delta: std::f64::consts::PI / 16.0,
        q_z: 0.5,
    }
}

/// Value of the objective at `src`: `(rate floored at zero, raw rate)`.
pub fn evaluate(
    objective: Objective,
    src: &SourceParams,
    ch: &ChannelParams,
    sec: &SecurityParams,
) -> Result<(f64, f64)> {
    src.validate()?;
    let yields = ExpectedYields::compute(src, ch);
    match objective {
        Objective::Asymptotic => {
            let r = asymptotic_rate_from(src, ch, &yields)?;
            Ok((r.rate, r.rate_raw))
        }
        Objective::Finite => {
            let counts = expected_counts_from(src, sec, &yields);
            let r = finite_key(&counts, src, ch, sec)?;
            Ok((r.rate, r.l_raw / sec.n_rounds))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub start: usize,
    /// Evaluations spent by this start when the value was reached.
    pub evals: usize,
    /// Raw objective (may be negative below the key-rate threshold).
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub source: SourceParams,
    /// Objective at `source`, floored at zero.
    pub rate: f64,
    pub raw: f64,
    pub evaluations: usize,
    /// Every improvement of every start, ordered by start index.
    pub trace: Vec<TracePoint>,
}

struct StartOutcome {
    best: Option<(SourceParams, f64)>,
    evals: usize,
    trace: Vec<TracePoint>,
}

/// Maximizes the objective over the source parameters.
///
/// Starts are the warm starts (in order), then the default source, then
/// random points of the cube, `spec.multistart` of them in total (at least
/// every warm start is used). Each start gets `spec.max_evals` evaluations.
/// Runs are independent and merged by start index, so the result does not
/// depend on scheduling.
pub fn optimize(
    spec: &OptimizationSpec,
    ch: &ChannelParams,
    sec: &SecurityParams,
    warm: &[SourceParams],
) -> Result<OptimizationResult> {
    spec.validate()?;
    ch.validate()?;
    if spec.objective == Objective::Finite {
        sec.validate()?;
    }
    let template = warm.first().copied().unwrap_or_else(default_source);
    let space = Space::new(spec.objective, spec.protocol, spec.bounds, template);
    let n_starts = spec.multistart.max(warm.len());

    let mut starts: Vec<(Vec<f64>, f64)> = warm.iter().map(|w| (space.encode(w), 0.05)).collect();
    if starts.len() < n_starts {
        starts.push((space.encode(&default_source()), 0.15));
    }
    while starts.len() < n_starts {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(starts.len() as u64);
        let x: Vec<f64> = (0..space.dim()).map(|_| rng.random::<f64>()).collect();
        starts.push((x, 0.25));
    }

    let outcomes: Vec<StartOutcome> = starts
        .par_iter()
        .enumerate()
        .map(|(index, (x0, step))| {
            let score = |x: &[f64]| match space.decode(x).and_then(|s| evaluate(spec.objective, &s, ch, sec)) {
                Ok((_, raw)) => -raw,
                Err(_) => f64::INFINITY,
            };
            let m = minimize(score, x0, *step, spec.max_evals);
            let best = if m.value.is_finite() {
                space.decode(&m.x).ok().map(|s| (s, -m.value))
            } else {
                None
            };
            let trace = m
                .improvements
                .iter()
                .filter(|(_, v)| v.is_finite())
                .map(|&(evals, v)| TracePoint {
                    start: index,
                    evals,
                    value: -v,
                })
                .collect();
            StartOutcome {
                best,
                evals: m.evals,
                trace,
            }
        })
        .collect();

    let mut best: Option<(SourceParams, f64)> = None;
    let mut trace = Vec::new();
    let mut evaluations = 0;
    for o in outcomes {
        evaluations += o.evals;
        trace.extend(o.trace);
        if let Some((s, v)) = o.best {
            // strict comparison keeps the lowest start index on ties
            if best.as_ref().is_none_or(|(_, b)| v > *b) {
                best = Some((s, v));
            }
        }
    }
    let (source, _) = best.ok_or(Error::NoFeasiblePoint)?;
    // Re-evaluate so that the reported numbers come from one code path.
    let (rate, raw) = evaluate(spec.objective, &source, ch, sec)?;
    Ok(OptimizationResult {
        source,
        rate,
        raw,
        evaluations,
        trace,
    })
}

/// Total distances with a fixed difference `delta_l = L_b - L_a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistanceGrid {
    pub totals: Vec<f64>,
    pub delta_l: f64,
}

impl DistanceGrid {
    /// `count` evenly spaced totals from `start` to `stop` inclusive.
    pub fn linspace(start: f64, stop: f64, count: usize, delta_l: f64) -> Self {
        let totals = match count {
            0 => Vec::new(),
            1 => vec![start],
            _ => (0..count)
                .map(|i| start + (stop - start) * i as f64 / (count - 1) as f64)
                .collect(),
        };
        DistanceGrid { totals, delta_l }
    }

    pub fn validate(&self) -> Result<()> {
        for &l in &self.totals {
            if !(l >= self.delta_l.abs() && l.is_finite()) {
                return Err(Error::domain("L_total", l, "L_total >= |delta_l|"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub l_total: f64,
    pub l_a: f64,
    pub l_b: f64,
    pub protocol: Protocol,
    pub result: OptimizationResult,
}

/// Indices `i` where the rate at grid point `i + 1` exceeds that at `i`
/// (for increasing distances), which a converged scan should not show.
pub fn monotonicity_violations(points: &[ScanPoint]) -> Vec<usize> {
    points
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[1].l_total > w[0].l_total && w[1].result.rate > w[0].result.rate * (1.0 + 1e-6))
        .map(|(i, _)| i)
        .collect()
}

/// Optimizes each grid point in order for both protocols.
///
/// Each protocol warm-starts from its own optimum at the previous point.
/// The asymmetric search is also seeded with the symmetric optimum of the
/// same point, which the asymmetric protocol contains as a special case.
/// Returns `(symmetric, asymmetric)` rows.
pub fn scan(
    spec: &OptimizationSpec,
    grid: &DistanceGrid,
    ch: &ChannelParams,
    sec: &SecurityParams,
    protocols: &[Protocol],
) -> Result<Vec<ScanPoint>> {
    grid.validate()?;
    let mut prev_sym: Option<SourceParams> = None;
    let mut prev_asym: Option<SourceParams> = None;
    let mut rows = Vec::new();
    for &total in &grid.totals {
        let ch = ch.with_split(total, grid.delta_l);
        let mut sym_here = None;
        for protocol in [Protocol::Symmetric, Protocol::Asymmetric] {
            let wanted = protocols.contains(&protocol);
            if !wanted && !(protocol == Protocol::Symmetric && protocols.contains(&Protocol::Asymmetric)) {
                continue;
            }
            let mut warm = Vec::new();
            match protocol {
                Protocol::Symmetric => warm.extend(prev_sym),
                Protocol::Asymmetric => {
                    warm.extend(prev_asym);
                    warm.extend(sym_here);
                }
            }
            let spec = OptimizationSpec {
                protocol,
                ..spec.clone()
            };
            let result = optimize(&spec, &ch, sec, &warm)?;
            match protocol {
                Protocol::Symmetric => {
                    prev_sym = Some(result.source);
                    sym_here = Some(result.source);
                }
                Protocol::Asymmetric => prev_asym = Some(result.source),
            }
            if wanted {
                rows.push(ScanPoint {
                    l_total: total,
                    l_a: ch.l_a,
                    l_b: ch.l_b,
                    protocol,
                    result,
                });
            }
        }
    }
    Ok(rows)
}
