//! Finite-N Eynard–Mehta kernels, their hard-edge gauged rescaling and the
//! Bessel limit kernels, along time-like or space-like paths.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::path::{Ordering, PathPoint};
use crate::quadrature::{Integral, QuadratureRule};
use crate::special_functions::{laguerre_fill, ln_factorial, BesselProduct};
use crate::transition_kernels::{q_bar_integral, q_mixed, t_unchecked, w_bar_unchecked, w_unchecked};

const EDGE_OFFSET: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    FiniteRaw,
    FiniteGauged,
    BesselLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccuracyFlag {
    Ok,
    TailWarning,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelValue {
    pub value: f64,
    pub flag: AccuracyFlag,
}

impl KernelValue {
    fn from_integral(i: Integral) -> Self {
        let flag = if i.tail_warning { AccuracyFlag::TailWarning } else { AccuracyFlag::Ok };
        Self { value: i.value, flag }
    }
}

/// A correlation kernel on a path. For `FiniteRaw` the path times are
/// absolute times; for `FiniteGauged` and `BesselLimit` they are hard-edge
/// times, mapped to 1 + t/4N where a finite-N kernel needs them.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub ordering: Ordering,
    pub n: Option<usize>,
    pub path: Vec<PathPoint>,
    pub quadrature: QuadratureRule,
}

impl KernelSpec {
    pub fn finite_raw(ordering: Ordering, n: usize, path: Vec<PathPoint>) -> Result<Self> {
        Self::new(KernelKind::FiniteRaw, ordering, Some(n), path)
    }

    pub fn finite_gauged(ordering: Ordering, n: usize, path: Vec<PathPoint>) -> Result<Self> {
        Self::new(KernelKind::FiniteGauged, ordering, Some(n), path)
    }

    pub fn bessel(ordering: Ordering, path: Vec<PathPoint>) -> Result<Self> {
        Self::new(KernelKind::BesselLimit, ordering, None, path)
    }

    pub fn new(kind: KernelKind, ordering: Ordering, n: Option<usize>, path: Vec<PathPoint>) -> Result<Self> {
        let spec = Self { kind, ordering, n, path, quadrature: QuadratureRule::default() };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_quadrature(mut self, rule: QuadratureRule) -> Self {
        self.quadrature = rule;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.path.is_empty() {
            return Err(Error::InvalidArgument("kernel path is empty".into()));
        }
        if !self.path.iter().all(|p| p.t.is_finite()) {
            return Err(Error::InvalidArgument("path times must be finite".into()));
        }
        if !self.ordering.is_strictly_ordered(&self.path) {
            return Err(Error::Ordering(format!(
                "path {:?} is not strictly {:?}-ordered",
                self.path, self.ordering
            )));
        }
        match (self.kind, self.n) {
            (KernelKind::BesselLimit, None) => Ok(()),
            (KernelKind::BesselLimit, Some(_)) => {
                Err(Error::InvalidArgument("the Bessel limit kernel takes no N".into()))
            }
            (_, None) | (_, Some(0)) => Err(Error::InvalidArgument("finite kernels need N >= 1".into())),
            (KernelKind::FiniteRaw, Some(_)) => {
                if self.path.iter().all(|p| p.t > 0.0) {
                    Ok(())
                } else {
                    Err(Error::InvalidArgument("raw kernel times must be positive".into()))
                }
            }
            (KernelKind::FiniteGauged, Some(n)) => {
                if self.path.iter().all(|p| p.t > -4.0 * n as f64) {
                    Ok(())
                } else {
                    Err(Error::InvalidArgument("hard-edge times need 1 + t/4N > 0".into()))
                }
            }
        }
    }

    pub fn len(&self) -> usize {
        self.path.len()
    }

    pub fn is_empty(&self) -> bool {
        self.path.is_empty()
    }

    pub fn eval(&self, i: usize, x: f64, j: usize, y: f64) -> Result<KernelValue> {
        match self.kind {
            KernelKind::FiniteRaw => kernel_finite(self, i, x, j, y),
            KernelKind::FiniteGauged => kernel_gauged(self, i, x, j, y),
            KernelKind::BesselLimit => kernel_bessel(self, i, x, j, y),
        }
    }

    /// Equal-time blocks i < j have the form smooth(x,y) − 𝟙(x ≤ y) F(x,y)
    /// (time-like; 𝟙(y ≤ x) space-like). Returns the subtracted term,
    /// F(x,y) on the indicator side and 0 off it, or None for blocks without
    /// such a step.
    pub fn equal_time_step(&self, i: usize, x: f64, j: usize, y: f64) -> Result<Option<f64>> {
        let (p, q) = self.points(i, j)?;
        if i >= j || p.t != q.t {
            return Ok(None);
        }
        check_position("x", x)?;
        check_position("y", y)?;
        let value = match self.kind {
            KernelKind::BesselLimit => match self.ordering {
                Ordering::TimeLike => full_integral_time_like(p.alpha, q.alpha, x, y),
                Ordering::SpaceLike => full_integral_space_like(p.alpha, q.alpha, x, y),
            },
            KernelKind::FiniteRaw => raw_q(self.ordering, &self.quadrature, p, x, q, y).value,
            KernelKind::FiniteGauged => {
                let n = self.n.ok_or_else(|| Error::InvalidArgument("finite kernel needs N".into()))?;
                let (pa, xa, qa, ya, ln_g) = gauged_frame(self.ordering, n, p, x, q, y);
                ln_g.exp() * raw_q(self.ordering, &self.quadrature, pa, xa, qa, ya).value
            }
        };
        Ok(Some(value))
    }

    /// Functions in the range of K at path index i behave like x^c·(smooth)
    /// near the hard edge, through the x^{α/2} of J_α(2√(xu)) or the gauge.
    /// Returns c modulo 1.
    pub fn edge_power(&self, i: usize) -> f64 {
        match self.kind {
            KernelKind::FiniteRaw => 0.0,
            _ => 0.5 * (self.path[i].alpha % 2) as f64,
        }
    }

    fn points(&self, i: usize, j: usize) -> Result<(PathPoint, PathPoint)> {
        let len = self.path.len();
        for index in [i, j] {
            if index >= len {
                return Err(Error::Index { index, len });
            }
        }
        Ok((self.path[i], self.path[j]))
    }
}

fn check_position(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} = {v} must be finite and non-negative")))
    }
}

/// ln of (Y/S)^β e^{-Y/S} / T times the sum Σ_{k=1}^N c_k r^k L^α_{k−1}(X/T) L^β_{k−1}(Y/S),
/// with c_k = Γ(k)/Γ(γ+k); returned as (ln prefactor, sum).
fn biorthogonal_sum(n: usize, gamma: u32, p: PathPoint, x: f64, q: PathPoint, y: f64) -> (f64, f64) {
    let (a, b) = (x / p.t, y / q.t);
    let ln_r = p.t.ln() - q.t.ln();
    let mut la = Vec::with_capacity(n);
    let mut lb = Vec::with_capacity(n);
    laguerre_fill(p.alpha, a, n, &mut la);
    laguerre_fill(q.alpha, b, n, &mut lb);
    let mut ln_c = -ln_factorial(gamma as u64);
    let mut sum = 0.0;
    for k in 1..=n {
        sum += (ln_c + k as f64 * ln_r).exp() * la[k - 1] * lb[k - 1];
        ln_c += (k as f64).ln() - (gamma as f64 + k as f64).ln();
    }
    let ln_weight = if q.alpha == 0 { -b } else { q.alpha as f64 * b.ln() - b };
    (ln_weight - p.t.ln(), sum)
}

/// −Q(p,x; q,y) 𝟙(p ≺ q) + Σ ψ_k(p,x) φ_k(q,y) (time-like) or the barred version.
fn finite_raw_value(
    ordering: Ordering,
    n: usize,
    rule: &QuadratureRule,
    i: usize,
    p: PathPoint,
    x: f64,
    j: usize,
    q: PathPoint,
    y: f64,
) -> KernelValue {
    let gamma = match ordering {
        Ordering::TimeLike => q.alpha,
        Ordering::SpaceLike => p.alpha,
    };
    let (ln_pre, sum) = biorthogonal_sum(n, gamma, p, x, q, y);
    let mut value = ln_pre.exp() * sum;
    let mut flag = AccuracyFlag::Ok;
    if i < j {
        let qv = raw_q(ordering, rule, p, x, q, y);
        value -= qv.value;
        if qv.tail_warning {
            flag = AccuracyFlag::TailWarning;
        }
    }
    KernelValue { value, flag }
}

fn raw_q(ordering: Ordering, rule: &QuadratureRule, p: PathPoint, x: f64, q: PathPoint, y: f64) -> Integral {
    // T and the Bessel integrals have finite limits at the hard edge but their
    // log prefactors do not; a tiny offset keeps the error far below 1e-12.
    let x = x.max(EDGE_OFFSET);
    let y = y.max(EDGE_OFFSET);
    match ordering {
        Ordering::TimeLike => {
            if p.alpha == q.alpha {
                Integral::ok(t_unchecked(p.alpha, q.t - p.t, x, y))
            } else if p.t == q.t {
                Integral::ok(w_unchecked(q.alpha - p.alpha, p.t, x, y))
            } else {
                q_mixed(p.alpha, p.t, x, q.alpha, q.t, y, rule)
            }
        }
        Ordering::SpaceLike => {
            if p.alpha == q.alpha {
                Integral::ok(t_unchecked(p.alpha, q.t - p.t, x, y))
            } else if p.t == q.t {
                Integral::ok(w_bar_unchecked(p.alpha, q.alpha, x, y))
            } else {
                q_bar_integral(p.alpha, p.t, x, q.alpha, q.t, y, rule)
            }
        }
    }
}

/// K^N((α,t,x);(β,s,y)) at path indices i, j; path times are absolute.
pub fn kernel_finite(spec: &KernelSpec, i: usize, x: f64, j: usize, y: f64) -> Result<KernelValue> {
    let n = spec.n.ok_or_else(|| Error::InvalidArgument("finite kernel needs N".into()))?;
    let (p, q) = spec.points(i, j)?;
    check_position("x", x)?;
    check_position("y", y)?;
    Ok(finite_raw_value(spec.ordering, n, &spec.quadrature, i, p, x, j, q, y))
}

/// ln f(α,t,x) for the gauge K_gauge = f(α,t,x)/f(β,s,y) · K^N(scaled)/(4N).
pub fn ln_gauge_factor(ordering: Ordering, n: usize, p: PathPoint, x: f64) -> f64 {
    let m = 4.0 * n as f64;
    let half = 0.5 * p.alpha as f64;
    let ln_pow = |v: f64| if p.alpha == 0 { 0.0 } else { half * v.ln() };
    match ordering {
        Ordering::TimeLike => -half * m.ln() + ln_pow(x / (m + p.t)) - x / (2.0 * m + 2.0 * p.t),
        Ordering::SpaceLike => ln_pow(x) - x / (2.0 * m + 2.0 * p.t),
    }
}

/// Absolute-time points and positions for a gauged evaluation, with the ln of
/// the gauge ratio including the 1/4N Jacobian.
fn gauged_frame(
    ordering: Ordering,
    n: usize,
    p: PathPoint,
    x: f64,
    q: PathPoint,
    y: f64,
) -> (PathPoint, f64, PathPoint, f64, f64) {
    let m = 4.0 * n as f64;
    let pa = PathPoint::new(p.alpha, 1.0 + p.t / m);
    let qa = PathPoint::new(q.alpha, 1.0 + q.t / m);
    let ln_g = ln_gauge_factor(ordering, n, p, x) - ln_gauge_factor(ordering, n, q, y) - m.ln();
    (pa, x / m, qa, y / m, ln_g)
}

/// Gauged hard-edge kernel; path times are hard-edge times t ↦ 1 + t/4N.
pub fn kernel_gauged(spec: &KernelSpec, i: usize, x: f64, j: usize, y: f64) -> Result<KernelValue> {
    let n = spec.n.ok_or_else(|| Error::InvalidArgument("finite kernel needs N".into()))?;
    let (p, q) = spec.points(i, j)?;
    check_position("x", x)?;
    check_position("y", y)?;
    let (pa, xa, qa, ya, ln_g) = gauged_frame(spec.ordering, n, p, x, q, y);
    let gamma = match spec.ordering {
        Ordering::TimeLike => q.alpha,
        Ordering::SpaceLike => p.alpha,
    };
    let (ln_pre, sum) = biorthogonal_sum(n, gamma, pa, xa, qa, ya);
    let mut value = (ln_pre + ln_g).exp() * sum;
    let mut flag = AccuracyFlag::Ok;
    if i < j {
        let qv = raw_q(spec.ordering, &spec.quadrature, pa, xa, qa, ya);
        value -= ln_g.exp() * qv.value;
        if qv.tail_warning {
            flag = AccuracyFlag::TailWarning;
        }
    }
    Ok(KernelValue { value, flag })
}

/// Limit kernels: −∫_{1/4}^∞ for ordered pairs, ∫_0^{1/4} otherwise, of
/// u^{-p} e^{-(s−t)u} J_α(2√(xu)) J_β(2√(yu)) with p = (β−α)/2 time-like and
/// (α−β)/2 space-like.
pub fn kernel_bessel(spec: &KernelSpec, i: usize, x: f64, j: usize, y: f64) -> Result<KernelValue> {
    let (p, q) = spec.points(i, j)?;
    check_position("x", x)?;
    check_position("y", y)?;
    let d = match spec.ordering {
        Ordering::TimeLike => q.alpha as f64 - p.alpha as f64,
        Ordering::SpaceLike => p.alpha as f64 - q.alpha as f64,
    };
    let integrand = BesselProduct {
        alpha: p.alpha,
        beta: q.alpha,
        p: 0.5 * d,
        rate: q.t - p.t,
        a: x,
        b: y,
    };
    let rule = &spec.quadrature;
    if i >= j {
        return Ok(KernelValue::from_integral(integrand.integrate(0.0, Some(0.25), rule)));
    }
    if q.t > p.t {
        let tail = integrand.integrate(0.25, None, rule);
        return Ok(KernelValue::from_integral(Integral { value: -tail.value, ..tail }));
    }
    // Equal times: the tail has no exponential damping. Use the closed form
    // of the full integral and subtract the head.
    let head = integrand.integrate(0.0, Some(0.25), rule);
    let closed = match spec.ordering {
        Ordering::TimeLike => full_integral_time_like(p.alpha, q.alpha, x, y),
        Ordering::SpaceLike => full_integral_space_like(p.alpha, q.alpha, x, y),
    };
    Ok(KernelValue { value: head.value - closed, ..KernelValue::from_integral(head) })
}

/// ∫_0^∞ u^{-(β−α)/2} J_α(2√(xu)) J_β(2√(yu)) du = 𝟙(x ≤ y) x^{α/2} y^{-β/2} (y−x)^{β−α−1}/Γ(β−α).
pub fn full_integral_time_like(alpha: u32, beta: u32, x: f64, y: f64) -> f64 {
    debug_assert!(beta > alpha);
    if !(x <= y) {
        return 0.0;
    }
    let d = beta - alpha;
    x.powf(0.5 * alpha as f64) * y.powf(-0.5 * beta as f64) * (y - x).powi(d as i32 - 1)
        / ln_factorial(d as u64 - 1).exp()
}

/// ∫_0^∞ u^{-(α−β)/2} J_α(2√(xu)) J_β(2√(yu)) du = 𝟙(y ≤ x) x^{-α/2} y^{β/2} (x−y)^{α−β−1}/Γ(α−β).
pub fn full_integral_space_like(alpha: u32, beta: u32, x: f64, y: f64) -> f64 {
    debug_assert!(alpha > beta);
    if !(y <= x) {
        return 0.0;
    }
    let d = alpha - beta;
    x.powf(-0.5 * alpha as f64) * y.powf(0.5 * beta as f64) * (x - y).powi(d as i32 - 1)
        / ln_factorial(d as u64 - 1).exp()
}
