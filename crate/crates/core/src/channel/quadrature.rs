//! Gauss-Legendre quadrature for the phase averages of the interference model.

use std::sync::OnceLock;

const ORDER: usize = 48;

struct Rule {
    nodes: [f64; ORDER],
    weights: [f64; ORDER],
}

fn rule() -> &'static Rule {
    static RULE: OnceLock<Rule> = OnceLock::new();
    RULE.get_or_init(|| {
        let mut nodes = [0.0; ORDER];
        let mut weights = [0.0; ORDER];
        let n = ORDER;
        let m = n.div_ceil(2);
        for i in 0..m {
            // Newton iteration from the Chebyshev-like initial guess.
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp;
            loop {
                let (mut p1, mut p2) = (1.0, 0.0);
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j + 1) as f64;
                }
                dp = n as f64 * (z * p1 - p2) / (z * z - 1.0);
                let z1 = z;
                z = z1 - p1 / dp;
                if (z - z1).abs() < 1e-15 {
                    break;
                }
            }
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Rule { nodes, weights }
    })
}

/// Mean of `f` over `[lo, hi]`, i.e. the integral divided by the width.
pub(crate) fn mean_over<const K: usize>(lo: f64, hi: f64, f: impl Fn(f64) -> [f64; K]) -> [f64; K] {
    let r = rule();
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    let mut acc = [0.0; K];
    for (x, w) in r.nodes.iter().zip(r.weights.iter()) {
        let v = f(mid + half * x);
        for k in 0..K {
            acc[k] += w * v[k];
        }
    }
    for a in acc.iter_mut() {
        *a *= 0.5;
    }
    acc
}
