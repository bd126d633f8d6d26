//! Nelder–Mead simplex search on the unit cube.
//!
//! Points leaving the cube are clamped back onto it. Non-finite objective
//! values count as worse than any finite one.

/// Outcome of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    /// `(evaluations so far, value)` at every new best.
    pub improvements: Vec<(usize, f64)>,
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

fn clamp_unit(x: &mut [f64]) {
    for v in x {
        *v = v.clamp(0.0, 1.0);
    }
}

/// Builds a simplex around `x0` with edge `step`, stepping inward at walls.
fn initial_simplex(x0: &[f64], step: f64) -> Vec<Vec<f64>> {
    let mut simplex = vec![x0.to_vec()];
    for i in 0..x0.len() {
        let mut v = x0.to_vec();
        v[i] = if v[i] + step <= 1.0 { v[i] + step } else { v[i] - step };
        clamp_unit(&mut v);
        simplex.push(v);
    }
    simplex
}

struct Counter<F> {
    f: F,
    evals: usize,
    best: Option<(Vec<f64>, f64)>,
    improvements: Vec<(usize, f64)>,
}

impl<F: FnMut(&[f64]) -> f64> Counter<F> {
    fn call(&mut self, x: &[f64]) -> f64 {
        let v = sanitize((self.f)(x));
        self.evals += 1;
        if self.best.as_ref().is_none_or(|(_, b)| v < *b) {
            self.best = Some((x.to_vec(), v));
            self.improvements.push((self.evals, v));
        }
        v
    }
}

/// Minimizes `f` starting from `x0`, restarting around the incumbent each
/// time the simplex collapses, until `max_evals` evaluations are spent or a
/// restart brings no improvement.
pub fn minimize<F>(f: F, x0: &[f64], step: f64, max_evals: usize) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    let mut x0 = x0.to_vec();
    clamp_unit(&mut x0);
    let mut c = Counter {
        f,
        evals: 0,
        best: None,
        improvements: Vec::new(),
    };
    let mut step = step;
    let mut last_best = f64::INFINITY;
    while c.evals < max_evals {
        run(&mut c, &x0, step, max_evals);
        let (bx, bv) = c.best.clone().expect("at least one evaluation");
        if bv >= last_best {
            break;
        }
        last_best = bv;
        x0 = bx;
        step = (step * 0.5).max(1e-3);
    }
    let (x, value) = c.best.expect("at least one evaluation");
    Minimum {
        x,
        value,
        evals: c.evals,
        improvements: c.improvements,
    }
}

fn run<F: FnMut(&[f64]) -> f64>(c: &mut Counter<F>, x0: &[f64], step: f64, max_evals: usize) {
    let n = x0.len();
    if n == 0 {
        c.call(x0);
        return;
    }
    let mut simplex = initial_simplex(x0, step);
    let mut values = Vec::with_capacity(n + 1);
    for v in &simplex {
        if c.evals >= max_evals {
            return;
        }
        values.push(c.call(v));
    }

    while c.evals < max_evals {
        // order best-first; ties keep the earlier vertex
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let diameter = simplex[1..]
            .iter()
            .map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        let spread = values[n] - values[0];
        if diameter < 1e-9 || (spread.is_finite() && spread <= 1e-13 * values[0].abs() && diameter < 1e-4) {
            return;
        }

        let centroid: Vec<f64> = (0..n)
            .map(|k| simplex[..n].iter().map(|v| v[k]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            let mut p: Vec<f64> = centroid
                .iter()
                .zip(&simplex[n])
                .map(|(c, w)| c + t * (c - w))
                .collect();
            clamp_unit(&mut p);
            p
        };

        let xr = along(REFLECT);
        let fr = c.call(&xr);
        if fr < values[0] {
            if c.evals >= max_evals {
                simplex[n] = xr;
                values[n] = fr;
                return;
            }
            let xe = along(EXPAND);
            let fe = c.call(&xe);
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
            continue;
        }
        if c.evals >= max_evals {
            return;
        }
        // outside contraction if the reflection helped at all, else inside
        let xc = if fr < values[n] { along(CONTRACT) } else { along(-CONTRACT) };
        let fc = c.call(&xc);
        if fc < values[n].min(fr) {
            simplex[n] = xc;
            values[n] = fc;
            continue;
        }
        for i in 1..=n {
            if c.evals >= max_evals {
                return;
            }
            let p: Vec<f64> = simplex[i]
                .iter()
                .zip(&simplex[0])
                .map(|(v, b)| b + SHRINK * (v - b))
                .collect();
            values[i] = c.call(&p);
            simplex[i] = p;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_interior_quadratic_minimum() {
        let target = [0.3, 0.7, 0.55, 0.1];
        let f = |x: &[f64]| x.iter().zip(&target).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let m = minimize(f, &[0.5; 4], 0.2, 5000);
        for (a, b) in m.x.iter().zip(&target) {
            assert!((a - b).abs() < 1e-5, "{:?}", m.x);
        }
        assert!(m.evals <= 5000);
    }

    #[test]
    fn minimum_on_the_wall() {
        // Unconstrained minimum at x = -1; constrained one at x = 0.
        let f = |x: &[f64]| (x[0] + 1.0).powi(2) + (x[1] - 0.5).powi(2);
        let m = minimize(f, &[0.9, 0.9], 0.2, 3000);
        assert!(m.x[0] < 1e-8 && (m.x[1] - 0.5).abs() < 1e-5, "{:?}", m.x);
    }

    #[test]
    fn rosenbrock_in_scaled_coordinates() {
        let f = |x: &[f64]| {
            let (a, b) = (4.0 * x[0] - 2.0, 4.0 * x[1] - 2.0);
            (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2)
        };
        let m = minimize(f, &[0.1, 0.9], 0.2, 20_000);
        assert!(m.value < 1e-10, "{m:?}");
    }

    #[test]
    fn respects_evaluation_budget_and_skips_nan() {
        let mut calls = 0;
        let f = |x: &[f64]| {
            calls += 1;
            if x[0] > 0.8 {
                f64::NAN
            } else {
                -x[0]
            }
        };
        let m = minimize(f, &[0.1, 0.1, 0.1], 0.3, 37);
        assert_eq!(m.evals, 37);
        assert!(m.value.is_finite() && m.x[0] <= 0.8);
        assert_eq!(calls, 37);
    }

    #[test]
    fn improvements_are_monotone() {
        let f = |x: &[f64]| (x[0] - 0.2).powi(2) + (x[1] - 0.4).abs();
        let m = minimize(f, &[0.9, 0.9], 0.1, 2000);
        let log = &m.improvements;
        assert!(log.windows(2).all(|w| w[1].1 < w[0].1 && w[1].0 > w[0].0));
        assert_eq!(log.last().unwrap().1, m.value);
    }
}
