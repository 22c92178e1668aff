//! Gauss–Legendre rules and the composite-panel policy used for the
//! semi-infinite, oscillatory Bessel integrals.

use std::f64::consts::PI;
use std::sync::Arc;

/// Gauss–Legendre nodes and weights on [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Newton iteration on P_n from the Tricomi initial guesses.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre order must be positive");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..(n + 1) / 2 {
            let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() <= 1e-16 * x.abs().max(1.0) {
                    dp = legendre_with_derivative(n, x).1;
                    break;
                }
            }
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

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Nodes and weights mapped to [a, b].
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let h = 0.5 * (b - a);
        let c = 0.5 * (b + a);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (c + h * x, h * w))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }

    /// Composite rule with `panels` equal panels on [a, b].
    pub fn composite<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, panels: usize, mut f: F) -> f64 {
        let panels = panels.max(1);
        let h = (b - a) / panels as f64;
        let mut total = 0.0;
        for p in 0..panels {
            let lo = a + h * p as f64;
            let hi = if p + 1 == panels { b } else { lo + h };
            total += self.integrate(lo, hi, &mut f);
        }
        total
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
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Result of a truncated quadrature, with a flag raised when the neglected
/// tail or the last panel was not negligible.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub tail_warning: bool,
}

impl Integral {
    pub fn ok(value: f64) -> Self {
        Self { value, tail_warning: false }
    }
}

/// Panel composition and tail-truncation policy for integrals over [0, ∞)
/// whose integrand decays like `exp(-rate * u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    gl: Arc<GaussLegendre>,
    /// Target size of the neglected tail.
    pub eps: f64,
    /// Multiplier on the truncation point.
    pub safety: f64,
    pub max_panels: usize,
}

impl Default for QuadratureRule {
    fn default() -> Self {
        Self::new(24)
    }
}

impl QuadratureRule {
    pub fn new(order: usize) -> Self {
        Self {
            gl: Arc::new(GaussLegendre::new(order)),
            eps: 1e-14,
            safety: 2.0,
            max_panels: 200_000,
        }
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    pub fn gauss_legendre(&self) -> &GaussLegendre {
        &self.gl
    }

    pub fn order(&self) -> usize {
        self.gl.order()
    }

    /// U = safety · max(1, −ln ε / rate).
    pub fn truncation(&self, rate: f64) -> f64 {
        self.safety * (-self.eps.ln() / rate).max(1.0)
    }

    /// Number of panels of width at most `width` covering [a, b].
    pub fn panel_count(&self, a: f64, b: f64, width: f64) -> usize {
        let n = ((b - a) / width).ceil();
        if n.is_finite() {
            (n as usize).clamp(1, self.max_panels)
        } else {
            self.max_panels
        }
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, width: f64, f: F) -> f64 {
        let panels = self.panel_count(a, b, width);
        self.gl.composite(a, b, panels, f)
    }
}
