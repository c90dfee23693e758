//! Chebyshev-Lobatto interpolation and Gauss-Legendre / Clenshaw-Curtis rules.

use std::f64::consts::PI;
use std::sync::OnceLock;

#[derive(Debug)]
pub struct Chebyshev {
    /// Nodes on [-1, 1], descending from 1 to -1.
    pub x: Vec<f64>,
    pub bary: Vec<f64>,
    /// Clenshaw-Curtis weights on [-1, 1].
    pub cc: Vec<f64>,
}

impl Chebyshev {
    pub fn new(n: usize) -> Self {
        assert!(n >= 2);
        let deg = n - 1;
        let x: Vec<f64> = (0..n).map(|k| (PI * k as f64 / deg as f64).cos()).collect();
        let bary = (0..n)
            .map(|k| {
                let s = if k % 2 == 0 { 1.0 } else { -1.0 };
                if k == 0 || k == deg {
                    0.5 * s
                } else {
                    s
                }
            })
            .collect();
        let cc = (0..n)
            .map(|k| {
                let theta = PI * k as f64 / deg as f64;
                let c = if k == 0 || k == deg { 1.0 } else { 2.0 };
                let mut v = 1.0;
                for j in 1..=deg / 2 {
                    let b = if 2 * j == deg { 1.0 } else { 2.0 };
                    v -= b / (4.0 * (j * j) as f64 - 1.0) * (2.0 * j as f64 * theta).cos();
                }
                c * v / deg as f64
            })
            .collect();
        Chebyshev { x, bary, cc }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Node k mapped to [a, b].
    pub fn node(&self, k: usize, a: f64, b: f64) -> f64 {
        let t = self.x[k];
        0.5 * (a + b) + 0.5 * (b - a) * t
    }

    /// Barycentric interpolation of `values` (given at the nodes of [a, b]) at x.
    pub fn eval(&self, values: &[f64], a: f64, b: f64, x: f64) -> f64 {
        let t = (2.0 * x - a - b) / (b - a);
        let mut num = 0.0;
        let mut den = 0.0;
        for k in 0..self.x.len() {
            let d = t - self.x[k];
            if d == 0.0 {
                return values[k];
            }
            let w = self.bary[k] / d;
            num += w * values[k];
            den += w;
        }
        num / den
    }

    /// Clenshaw-Curtis integral over [a, b] of the function with node values `values`.
    pub fn integrate(&self, values: &[f64], a: f64, b: f64) -> f64 {
        0.5 * (b - a) * self.cc.iter().zip(values).map(|(w, v)| w * v).sum::<f64>()
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out
}

pub fn gl16() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(16))
}

/// 16-point Gauss-Legendre integral of f over [a, b].
pub fn integrate(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let (m, h) = (0.5 * (a + b), 0.5 * (b - a));
    h * gl16().iter().map(|&(t, w)| w * f(m + h * t)).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rules_integrate_polynomials() {
        let c = Chebyshev::new(24);
        let vals: Vec<f64> = (0..24).map(|k| c.node(k, 0.0, 2.0).powi(5)).collect();
        assert!((c.integrate(&vals, 0.0, 2.0) - 64.0 / 6.0).abs() < 1e-12);
        assert!((c.eval(&vals, 0.0, 2.0, 1.3) - 1.3f64.powi(5)).abs() < 1e-12);
        assert!((integrate(0.0, 2.0, |x| x.powi(7)) - 32.0).abs() < 1e-12);
        let s: f64 = gl16().iter().map(|p| p.1).sum();
        assert!((s - 2.0).abs() < 1e-14);
    }

    #[test]
    fn smooth_functions_are_resolved() {
        let c = Chebyshev::new(24);
        let (a, b) = (0.3, 0.35);
        let vals: Vec<f64> = (0..24).map(|k| c.node(k, a, b).exp()).collect();
        for x in [0.3, 0.31, 0.333, 0.35] {
            assert!((c.eval(&vals, a, b, x) - x.exp()).abs() < 1e-14);
        }
    }
}
