//! Gauss–Legendre rules and the composite/radial/spherical quadratures built
//! on top of them.

use std::f64::consts::PI;

/// Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Nodes are the roots of `P_n`, found by Newton iteration from the
    /// Chebyshev-like initial guesses.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped onto `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

/// Panel endpoints covering `[a, b]`: every breakpoint strictly inside is
/// honoured and no panel is wider than `max_width`.
pub fn panels(a: f64, b: f64, breakpoints: &[f64], max_width: f64) -> Vec<(f64, f64)> {
    if b <= a {
        return Vec::new();
    }
    let mut cuts = vec![a];
    let mut inner: Vec<f64> = breakpoints.iter().copied().filter(|&p| p > a && p < b).collect();
    inner.sort_by(f64::total_cmp);
    cuts.extend(inner);
    cuts.push(b);
    let mut out = Vec::new();
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let pieces = ((hi - lo) / max_width).ceil().max(1.0) as usize;
        let step = (hi - lo) / pieces as f64;
        for k in 0..pieces {
            let p_lo = lo + step * k as f64;
            let p_hi = if k + 1 == pieces { hi } else { lo + step * (k + 1) as f64 };
            out.push((p_lo, p_hi));
        }
    }
    out
}

/// Nodes and weights of a unit-sphere rule in dimension `d`.
///
/// d = 1 is the two-point set `{-1, 1}` with counting measure, d = 2 the
/// trapezoid rule on the circle, d = 3 Gauss–Legendre in `cos θ` times the
/// trapezoid rule in `φ`. Weights sum to `Vol S^{d-1}`.
pub fn sphere_rule(d: usize, angular_nodes: usize) -> Vec<(Vec<f64>, f64)> {
    match d {
        1 => vec![(vec![-1.0], 1.0), (vec![1.0], 1.0)],
        2 => {
            let n = angular_nodes.max(4);
            let w = 2.0 * PI / n as f64;
            (0..n)
                .map(|k| {
                    let th = 2.0 * PI * k as f64 / n as f64;
                    (vec![th.cos(), th.sin()], w)
                })
                .collect()
        }
        3 => {
            let n_phi = angular_nodes.max(4);
            let gl = GaussLegendre::new((angular_nodes / 2).max(4));
            let mut out = Vec::with_capacity(n_phi * gl.len());
            for (ct, wt) in gl.mapped(-1.0, 1.0) {
                let st = (1.0 - ct * ct).max(0.0).sqrt();
                for k in 0..n_phi {
                    let ph = 2.0 * PI * k as f64 / n_phi as f64;
                    out.push((vec![st * ph.cos(), st * ph.sin(), ct], wt * 2.0 * PI / n_phi as f64));
                }
            }
            out
        }
        _ => panic!("sphere_rule supports d in 1..=3"),
    }
}

/// Surface measure of the unit sphere `S^{d-1}` (counting measure for d = 1).
pub fn sphere_volume(d: usize) -> f64 {
    match d {
        1 => 2.0,
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        _ => {
            // 2 π^{d/2} / Γ(d/2) by recursion Vol S^{d+1} = 2π/d · Vol S^{d-1}
            let mut v = if d % 2 == 0 { 2.0 * PI } else { 2.0 };
            let mut k = if d % 2 == 0 { 2 } else { 1 };
            while k < d {
                v *= 2.0 * PI / k as f64;
                k += 2;
            }
            v
        }
    }
}

/// Tensor Gauss–Legendre nodes over an axis-aligned box.
pub fn box_rule(lo: &[f64], hi: &[f64], nodes_per_axis: usize) -> Vec<(Vec<f64>, f64)> {
    let gl = GaussLegendre::new(nodes_per_axis);
    let axes: Vec<Vec<(f64, f64)>> = lo.iter().zip(hi).map(|(&a, &b)| gl.mapped(a, b).collect()).collect();
    let mut out: Vec<(Vec<f64>, f64)> = vec![(Vec::with_capacity(lo.len()), 1.0)];
    for axis in &axes {
        let mut next = Vec::with_capacity(out.len() * axis.len());
        for (pt, w) in &out {
            for &(x, wx) in axis {
                let mut p = pt.clone();
                p.push(x);
                next.push((p, w * wx));
            }
        }
        out = next;
    }
    out
}

/// Quintic smoothstep `6t^5 - 15t^4 + 10t^3`, clamped to `[0, 1]`.
pub fn smoothstep(t: f64) -> f64 {
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        t * t * t * (t * (6.0 * t - 15.0) + 10.0)
    }
}
