//! Integer-order Bessel functions J and I, the entire function g_α, Laguerre
//! polynomials, factorial log-sums and a quadrature Hankel transform.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{ensure_finite, Error, Result};
use crate::quadrature::{Integral, QuadratureRule};

/// Controls how J_α is evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesPolicy {
    /// Power series below this argument, asymptotics or recurrence above.
    pub series_cutoff: f64,
    pub target_rel_err: f64,
    pub max_terms: usize,
}

impl Default for SeriesPolicy {
    fn default() -> Self {
        Self { series_cutoff: 12.0, target_rel_err: 1e-15, max_terms: 500 }
    }
}

impl SeriesPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.series_cutoff > 0.0) {
            return Err(Error::InvalidArgument("series_cutoff must be positive".into()));
        }
        if !(self.target_rel_err > 0.0 && self.target_rel_err < 1e-6) {
            return Err(Error::InvalidArgument("target_rel_err must lie in (0, 1e-6)".into()));
        }
        if self.max_terms < 50 {
            return Err(Error::InvalidArgument("max_terms must be at least 50".into()));
        }
        Ok(())
    }
}

const LN_FACT_TABLE: usize = 4096;

fn ln_fact_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = Vec::with_capacity(LN_FACT_TABLE);
        let mut acc = 0.0;
        t.push(0.0);
        for k in 1..LN_FACT_TABLE {
            acc += (k as f64).ln();
            t.push(acc);
        }
        t
    })
}

/// ln(n!) = ln Γ(n+1).
pub fn ln_factorial(n: u64) -> f64 {
    if (n as usize) < LN_FACT_TABLE {
        return ln_fact_table()[n as usize];
    }
    let x = n as f64 + 1.0;
    let r = 1.0 / x;
    let r2 = r * r;
    (x - 0.5) * x.ln() - x + 0.5 * (2.0 * PI).ln()
        + r * (1.0 / 12.0 - r2 * (1.0 / 360.0 - r2 * (1.0 / 1260.0 - r2 / 1680.0)))
}

/// ln(Γ(j)/Γ(j+shift)) as the explicit sum −Σ_{i<shift} ln(j+i).
pub fn log_gamma_ratio(j: u64, shift: u64) -> f64 {
    assert!(j >= 1, "log_gamma_ratio needs j >= 1");
    -(0..shift).map(|i| ((j + i) as f64).ln()).sum::<f64>()
}

/// J_order(z) for z ≥ 0.
pub fn bessel_j(order: u32, z: f64) -> Result<f64> {
    bessel_j_with(&SeriesPolicy::default(), order, z)
}

pub fn bessel_j_with(policy: &SeriesPolicy, order: u32, z: f64) -> Result<f64> {
    ensure_finite("z", z)?;
    if z < 0.0 {
        return Err(Error::InvalidArgument(format!("bessel_j needs z >= 0, got {z}")));
    }
    Ok(jn_policy(policy, order, z))
}

/// Unchecked J_n(z), z ≥ 0, with the default policy.
#[inline]
pub(crate) fn jn(n: u32, z: f64) -> f64 {
    jn_policy(&SeriesPolicy::default(), n, z)
}

fn jn_policy(p: &SeriesPolicy, n: u32, z: f64) -> f64 {
    if z == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    if z <= p.series_cutoff {
        return j_series(n, z, p.max_terms);
    }
    match j_hankel(n, z, p.target_rel_err, p.max_terms) {
        Some(v) => v,
        None => j_miller(n, z),
    }
}

fn j_series(n: u32, z: f64, max_terms: usize) -> f64 {
    let h = 0.5 * z;
    let mut term = 1.0;
    for i in 1..=n {
        term *= h / i as f64;
    }
    if term == 0.0 {
        return 0.0;
    }
    let q = -h * h;
    let mut sum = term;
    let mut peak = term.abs();
    for k in 1..max_terms {
        term *= q / (k as f64 * (n as f64 + k as f64));
        sum += term;
        peak = peak.max(term.abs());
        if term.abs() <= 1e-17 * peak {
            break;
        }
    }
    sum
}

/// Hankel's expansion; `None` when the terms stop shrinking before the
/// target accuracy is reached.
fn j_hankel(n: u32, z: f64, tol: f64, max_terms: usize) -> Option<f64> {
    let mu = 4.0 * (n as f64) * (n as f64);
    let mut p = 1.0;
    let mut q = 0.0;
    let mut term = 1.0_f64;
    let mut last = f64::INFINITY;
    for k in 1..max_terms {
        let odd = (2 * k - 1) as f64;
        term *= (mu - odd * odd) / (k as f64 * 8.0 * z);
        if term == 0.0 {
            break;
        }
        let a = term.abs();
        if a > last {
            return None;
        }
        last = a;
        // signs: P = 1 - a2/z^2 + a4/z^4..., Q = a1/z - a3/z^3 + ...
        match k % 4 {
            1 => q += term,
            2 => p -= term,
            3 => q -= term,
            _ => p += term,
        }
        if a < tol * 0.1 {
            let chi = z - (0.5 * n as f64 + 0.25) * PI;
            return Some((2.0 / (PI * z)).sqrt() * (p * chi.cos() - q * chi.sin()));
        }
    }
    None
}

/// Miller's downward recurrence normalised by J_0 + 2 Σ J_{2k} = 1.
fn j_miller(n: u32, z: f64) -> f64 {
    let top = (n as f64).max(z);
    let mut m = (top + 30.0 + 3.0 * top.sqrt() * 4.0) as usize;
    m += m % 2;
    let mut jp1 = 0.0;
    let mut j = 1e-300;
    let mut norm = 0.0;
    let mut result = 0.0;
    for k in (1..=m).rev() {
        let jm1 = 2.0 * k as f64 / z * j - jp1;
        jp1 = j;
        j = jm1;
        if j.abs() > 1e250 {
            j *= 1e-250;
            jp1 *= 1e-250;
            norm *= 1e-250;
            result *= 1e-250;
        }
        // j now holds J_{k-1}
        if (k - 1) % 2 == 0 && k - 1 > 0 {
            norm += 2.0 * j;
        }
        if k - 1 == n as usize {
            result = j;
        }
    }
    norm += j;
    result / norm
}

/// I_order(z); overflows past z ≈ 700, use [`bessel_i_scaled`] there.
pub fn bessel_i(order: u32, z: f64) -> Result<f64> {
    ensure_finite("z", z)?;
    if z < 0.0 {
        return Err(Error::InvalidArgument(format!("bessel_i needs z >= 0, got {z}")));
    }
    let v = i_scaled(order, z) * z.exp();
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Range(format!("I_{order}({z}) overflows; use bessel_i_scaled")))
    }
}

/// e^{-z} I_order(z).
pub fn bessel_i_scaled(order: u32, z: f64) -> Result<f64> {
    ensure_finite("z", z)?;
    if z < 0.0 {
        return Err(Error::InvalidArgument(format!("bessel_i needs z >= 0, got {z}")));
    }
    Ok(i_scaled(order, z))
}

pub(crate) fn i_scaled(n: u32, z: f64) -> f64 {
    if z == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    if z > 30.0 {
        if let Some(v) = i_asymptotic(n, z) {
            return v;
        }
    }
    if z <= 500.0 {
        return i_series_plain(n, z) * (-z).exp();
    }
    i_series_scaled(n, z)
}

fn i_series_plain(n: u32, z: f64) -> f64 {
    let h = 0.5 * z;
    let mut term = 1.0;
    for i in 1..=n {
        term *= h / i as f64;
    }
    let q = h * h;
    let mut sum = term;
    let mut k = 0.0;
    while term > 1e-17 * sum {
        k += 1.0;
        term *= q / (k * (n as f64 + k));
        sum += term;
    }
    sum
}

fn i_asymptotic(n: u32, z: f64) -> Option<f64> {
    let mu = 4.0 * (n as f64) * (n as f64);
    let mut sum = 1.0;
    let mut term = 1.0_f64;
    let mut last = f64::INFINITY;
    for k in 1..500 {
        let odd = (2 * k - 1) as f64;
        term *= -(mu - odd * odd) / (k as f64 * 8.0 * z);
        let a = term.abs();
        if a > last {
            return None;
        }
        last = a;
        sum += term;
        if a < 1e-17 * sum.abs() {
            return Some(sum / (2.0 * PI * z).sqrt());
        }
    }
    None
}

/// Series summed outward from its largest term so neither e^z nor e^{-z}
/// is ever formed on its own.
fn i_series_scaled(n: u32, z: f64) -> f64 {
    let nf = n as f64;
    let h = 0.5 * z;
    let kstar = ((-nf + (nf * nf + z * z).sqrt()) / 2.0).floor().max(0.0) as u64;
    let ln_peak = (2 * kstar + n as u64) as f64 * h.ln()
        - ln_factorial(kstar)
        - ln_factorial(kstar + n as u64)
        - z;
    let peak = ln_peak.exp();
    if peak == 0.0 {
        return 0.0;
    }
    let q = h * h;
    let mut sum = peak;
    let mut t = peak;
    let mut k = kstar;
    loop {
        k += 1;
        t *= q / (k as f64 * (nf + k as f64));
        sum += t;
        if t <= 1e-17 * sum {
            break;
        }
    }
    let mut t = peak;
    let mut k = kstar;
    while k > 0 {
        t *= k as f64 * (nf + k as f64) / q;
        sum += t;
        k -= 1;
        if t <= 1e-17 * sum {
            break;
        }
    }
    sum
}

/// g_α(z) = Σ_k (−z)^k / (k! (α+k)!), equal to z^{−α/2} J_α(2√z) for z > 0.
pub fn g_alpha(order: u32, z: f64) -> Result<f64> {
    ensure_finite("z", z)?;
    Ok(g_alpha_unchecked(order, z))
}

pub(crate) fn g_alpha_unchecked(n: u32, z: f64) -> f64 {
    if z > 36.0 {
        return z.powf(-0.5 * n as f64) * jn(n, 2.0 * z.sqrt());
    }
    let mut term = (-ln_factorial(n as u64)).exp();
    let mut sum = term;
    let mut peak = term.abs();
    for k in 1..1000 {
        term *= -z / (k as f64 * (n as f64 + k as f64));
        sum += term;
        peak = peak.max(term.abs());
        if term.abs() <= 1e-17 * peak {
            break;
        }
    }
    sum
}

/// Generalised Laguerre polynomial L^α_j(x) by the three-term recurrence.
pub fn laguerre(alpha: u32, degree: u32, x: f64) -> f64 {
    let a = alpha as f64;
    if degree == 0 {
        return 1.0;
    }
    let mut l0 = 1.0;
    let mut l1 = 1.0 + a - x;
    for n in 1..degree {
        let nf = n as f64;
        let l2 = ((2.0 * nf + 1.0 + a - x) * l1 - (nf + a) * l0) / (nf + 1.0);
        l0 = l1;
        l1 = l2;
    }
    l1
}

/// L^α_0(x), …, L^α_{n−1}(x).
pub fn laguerre_sequence(alpha: u32, n: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    laguerre_fill(alpha, x, n, &mut out);
    out
}

pub(crate) fn laguerre_fill(alpha: u32, x: f64, n: usize, out: &mut Vec<f64>) {
    out.clear();
    if n == 0 {
        return;
    }
    let a = alpha as f64;
    out.push(1.0);
    if n == 1 {
        return;
    }
    out.push(1.0 + a - x);
    for k in 1..n - 1 {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 + a - x) * out[k] - (kf + a) * out[k - 1]) / (kf + 1.0);
        out.push(next);
    }
}

/// H_α[f](z) = ∫_0^∞ √(zu) J_α(zu) f(u) du truncated at `upper`.
///
/// Panels are a quarter of the oscillation period of J(zu) at most; the
/// tail flag is raised when the last panel still carries more than `rule.eps`
/// relative weight.
pub fn hankel_transform<F: Fn(f64) -> f64>(
    f: F,
    order: u32,
    z: f64,
    upper: f64,
    rule: &QuadratureRule,
) -> Result<Integral> {
    ensure_finite("z", z)?;
    ensure_finite("upper", upper)?;
    if !(z > 0.0) || !(upper > 0.0) {
        return Err(Error::InvalidArgument("hankel_transform needs z > 0 and upper > 0".into()));
    }
    let width = (0.5 * PI / z).min(0.25);
    let panels = rule.panel_count(0.0, upper, width);
    let h = upper / panels as f64;
    let gl = rule.gauss_legendre();
    let mut total = 0.0;
    let mut last = 0.0;
    for p in 0..panels {
        let lo = h * p as f64;
        last = gl.integrate(lo, lo + h, |u| (z * u).sqrt() * jn(order, z * u) * f(u));
        total += last;
    }
    let tail_warning = last.abs() > rule.eps * total.abs().max(1.0);
    Ok(Integral { value: total, tail_warning })
}

/// The integrand u^{-p} e^{-rate·u} J_α(2√(a u)) J_β(2√(b u)).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BesselProduct {
    pub alpha: u32,
    pub beta: u32,
    pub p: f64,
    pub rate: f64,
    pub a: f64,
    pub b: f64,
}

impl BesselProduct {
    pub fn eval(&self, u: f64) -> f64 {
        let s = u.sqrt();
        u.powf(-self.p)
            * (-self.rate * u).exp()
            * jn(self.alpha, 2.0 * (self.a.sqrt() * s))
            * jn(self.beta, 2.0 * (self.b.sqrt() * s))
    }

    /// ∫_lo^hi of the integrand; `hi = None` integrates to ∞ and needs
    /// rate > 0 and p ≥ 0.
    ///
    /// Works in v = √u where both Bessel factors oscillate with a fixed
    /// period; panels are at most one period of the faster factor long.
    pub fn integrate(&self, lo: f64, hi: Option<f64>, rule: &QuadratureRule) -> Integral {
        let (upper, tail) = match hi {
            Some(h) => (h, 0.0),
            None => {
                let u = rule.truncation(self.rate).max(lo * 2.0 + 1.0);
                // |J| ≤ 1, so the tail is below ∫_U^∞ u^{-p} e^{-rate u} du
                (u, u.powf(-self.p) * (-self.rate * u).exp() / self.rate)
            }
        };
        if upper <= lo {
            return Integral::ok(0.0);
        }
        let (v0, v1) = (lo.sqrt(), upper.sqrt());
        let m = self.a.max(self.b);
        let mut width = (0.5 * (v1 - v0)).max(1e-300);
        if m > 0.0 {
            width = width.min(PI / m.sqrt());
        }
        if self.rate.abs() > 0.0 {
            width = width.min(1.0 / self.rate.abs().sqrt());
        }
        let panels = rule.panel_count(v0, v1, width);
        let saturated = panels >= rule.max_panels;
        let two_p = 2.0 * self.p;
        let (sa, sb) = (self.a.sqrt(), self.b.sqrt());
        let value = rule.gauss_legendre().composite(v0, v1, panels, |v| {
            let u = v * v;
            2.0 * v.powf(1.0 - two_p)
                * (-self.rate * u).exp()
                * jn(self.alpha, 2.0 * sa * v)
                * jn(self.beta, 2.0 * sb * v)
        });
        let tail_warning = saturated || tail > rule.eps * value.abs().max(1.0) || !value.is_finite();
        Integral { value, tail_warning }
    }
}
