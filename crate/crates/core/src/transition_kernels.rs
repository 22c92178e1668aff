//! One-particle transition densities and the biorthogonal Laguerre families.
//!
//! Time-like: T_α (fixed α, t < s), W_t (fixed t, α < β) and their composite
//! Q. Space-like: W̄ (α > β, independent of t), T̄ = T and Q̄.

use crate::error::{Error, Result};
use crate::path::{precedes_space_like, precedes_time_like, PathPoint};
use crate::quadrature::{Integral, QuadratureRule};
use crate::special_functions::{i_scaled, laguerre, ln_factorial, log_gamma_ratio, BesselProduct};

/// (α,t) ≺_t (β,s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimelikePair {
    pub from: PathPoint,
    pub to: PathPoint,
}

impl TimelikePair {
    pub fn new(from: PathPoint, to: PathPoint) -> Result<Self> {
        if !precedes_time_like(from, to) {
            return Err(Error::Ordering(format!("{from:?} does not precede {to:?} time-like")));
        }
        Ok(Self { from, to })
    }
}

/// (α,t) ≺_s (β,s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpacelikePair {
    pub from: PathPoint,
    pub to: PathPoint,
}

impl SpacelikePair {
    pub fn new(from: PathPoint, to: PathPoint) -> Result<Self> {
        if !precedes_space_like(from, to) {
            return Err(Error::Ordering(format!("{from:?} does not precede {to:?} space-like")));
        }
        Ok(Self { from, to })
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} = {v} must be positive")))
    }
}

/// T_α((t,x);(s,y)) = (s−t)^{-1} (y/x)^{α/2} e^{-(x+y)/(s−t)} I_α(2√(xy)/(s−t)).
pub fn t_kernel(alpha: u32, t: f64, x: f64, s: f64, y: f64) -> Result<f64> {
    if !(t < s) {
        return Err(Error::Ordering(format!("T needs t < s, got t={t}, s={s}")));
    }
    positive("x", x)?;
    positive("y", y)?;
    Ok(t_unchecked(alpha, s - t, x, y))
}

pub(crate) fn t_unchecked(alpha: u32, dt: f64, x: f64, y: f64) -> f64 {
    let d = x.sqrt() - y.sqrt();
    let z = 2.0 * (x * y).sqrt() / dt;
    (0.5 * alpha as f64 * (y / x).ln() - d * d / dt).exp() * i_scaled(alpha, z) / dt
}

/// W_t((α,x);(β,y)) = (y−x)^{β−α−1} t^{-(β−α)} e^{-(y−x)/t} 𝟙(x ≤ y) / Γ(β−α).
pub fn w_kernel(alpha: u32, beta: u32, t: f64, x: f64, y: f64) -> Result<f64> {
    if beta <= alpha {
        return Err(Error::Ordering(format!("W needs alpha < beta, got {alpha}, {beta}")));
    }
    positive("t", t)?;
    Ok(w_unchecked(beta - alpha, t, x, y))
}

pub(crate) fn w_unchecked(d: u32, t: f64, x: f64, y: f64) -> f64 {
    if !(x <= y) {
        return 0.0;
    }
    let gap = y - x;
    if d == 1 {
        return (-gap / t).exp() / t;
    }
    if gap == 0.0 {
        return 0.0;
    }
    let df = d as f64;
    ((df - 1.0) * gap.ln() - df * t.ln() - gap / t - ln_factorial(d as u64 - 1)).exp()
}

/// W̄((α,x);(β,y)) = x^{-α} y^β (x−y)^{α−β−1} 𝟙(y ≤ x) / Γ(α−β).
pub fn w_bar_kernel(alpha: u32, beta: u32, x: f64, y: f64) -> Result<f64> {
    if alpha <= beta {
        return Err(Error::Ordering(format!("W-bar needs alpha > beta, got {alpha}, {beta}")));
    }
    positive("x", x)?;
    Ok(w_bar_unchecked(alpha, beta, x, y))
}

pub(crate) fn w_bar_unchecked(alpha: u32, beta: u32, x: f64, y: f64) -> f64 {
    if !(y <= x) || y < 0.0 {
        return 0.0;
    }
    let d = alpha - beta;
    let gap = x - y;
    let mut ln = -(alpha as f64) * x.ln() - ln_factorial(d as u64 - 1);
    if beta > 0 {
        if y == 0.0 {
            return 0.0;
        }
        ln += beta as f64 * y.ln();
    }
    if d > 1 {
        if gap == 0.0 {
            return 0.0;
        }
        ln += (d - 1) as f64 * gap.ln();
    }
    ln.exp()
}

/// Time-like Q: T when α = β, W when t = s, the Bessel integral otherwise.
pub fn q_kernel(pair: &TimelikePair, x: f64, y: f64, rule: &QuadratureRule) -> Result<Integral> {
    positive("x", x)?;
    positive("y", y)?;
    let (a, b) = (pair.from, pair.to);
    if a.alpha == b.alpha {
        return Ok(Integral::ok(t_unchecked(a.alpha, b.t - a.t, x, y)));
    }
    if a.t == b.t {
        return Ok(Integral::ok(w_unchecked(b.alpha - a.alpha, a.t, x, y)));
    }
    Ok(q_mixed(a.alpha, a.t, x, b.alpha, b.t, y, rule))
}

/// Mixed time-like branch (α < β, t < s): the Bessel integral, or the
/// convolution where the integral's prefactor would amplify rounding.
pub(crate) fn q_mixed(alpha: u32, t: f64, x: f64, beta: u32, s: f64, y: f64, rule: &QuadratureRule) -> Integral {
    if x / t - y / s > CANCELLATION_LIMIT {
        return Integral::ok(q_convolution(alpha, t, x, beta, s, y, rule));
    }
    q_integral(alpha, t, x, beta, s, y, rule)
}

/// Beyond this value of x/t − y/s the e^{x/t − y/s} prefactor of the Bessel
/// integral amplifies its rounding error past 1e-14 relative, while the true
/// Q is small; the convolution form is used there instead.
const CANCELLATION_LIMIT: f64 = 4.0;

/// ∫_0^y T_α((t,x);(s,z)) W_s((α,z);(β,y)) dz. Positive integrand, no
/// cancellation.
pub(crate) fn q_convolution(alpha: u32, t: f64, x: f64, beta: u32, s: f64, y: f64, rule: &QuadratureRule) -> f64 {
    let dt = s - t;
    let (sx, sy) = (x.sqrt(), y.sqrt());
    // T(x, ·) varies on the scale √(x·dt) near its peak and on
    // √z·dt / |√x − √z| in its flank.
    let mut scale = sx * dt.sqrt() + dt;
    if sx != sy {
        scale = scale.min(sy * dt / (sx - sy).abs());
    }
    let width = (0.25 * scale).max(1e-4 * y).min(y);
    rule.integrate(0.0, y, width, |z| {
        if z <= 0.0 {
            return 0.0;
        }
        t_unchecked(alpha, dt, x, z) * w_unchecked(beta - alpha, s, z, y)
    })
}

/// (st)^{-d/2} e^{-y/s+x/t} x^{-α/2} y^{β/2}
///   × ∫ e^{-(s−t)u} u^{-d/2} J_α(2√(s x u/t)) J_β(2√(t y u/s)) du, d = β − α.
pub(crate) fn q_integral(alpha: u32, t: f64, x: f64, beta: u32, s: f64, y: f64, rule: &QuadratureRule) -> Integral {
    let d = beta as f64 - alpha as f64;
    let integrand = BesselProduct {
        alpha,
        beta,
        p: 0.5 * d,
        rate: s - t,
        a: s * x / t,
        b: t * y / s,
    };
    let int = integrand.integrate(0.0, None, rule);
    let ln_pref = -0.5 * d * (s * t).ln() - y / s + x / t - 0.5 * alpha as f64 * x.ln()
        + 0.5 * beta as f64 * y.ln();
    Integral { value: ln_pref.exp() * int.value, tail_warning: int.tail_warning }
}

/// Space-like Q̄: T when α = β, W̄ when t = s, the Bessel integral otherwise.
pub fn q_bar_kernel(pair: &SpacelikePair, x: f64, y: f64, rule: &QuadratureRule) -> Result<Integral> {
    positive("x", x)?;
    positive("y", y)?;
    let (a, b) = (pair.from, pair.to);
    if a.alpha == b.alpha {
        return Ok(Integral::ok(t_unchecked(a.alpha, b.t - a.t, x, y)));
    }
    if a.t == b.t {
        return Ok(Integral::ok(w_bar_unchecked(a.alpha, b.alpha, x, y)));
    }
    Ok(q_bar_integral(a.alpha, a.t, x, b.alpha, b.t, y, rule))
}

/// x^{-α/2} y^{β/2} ∫ e^{-(s−t)u} u^{-(α−β)/2} J_α(2√(xu)) J_β(2√(yu)) du.
pub(crate) fn q_bar_integral(alpha: u32, t: f64, x: f64, beta: u32, s: f64, y: f64, rule: &QuadratureRule) -> Integral {
    let integrand = BesselProduct {
        alpha,
        beta,
        p: 0.5 * (alpha as f64 - beta as f64),
        rate: s - t,
        a: x,
        b: y,
    };
    let int = integrand.integrate(0.0, None, rule);
    let ln_pref = -0.5 * alpha as f64 * x.ln() + 0.5 * beta as f64 * y.ln();
    Integral { value: ln_pref.exp() * int.value, tail_warning: int.tail_warning }
}

/// (x/t)^α e^{-x/t} in log form, exact at x = 0.
fn ln_weight(alpha: u32, t: f64, x: f64) -> f64 {
    let r = x / t;
    if alpha == 0 {
        -r
    } else {
        alpha as f64 * r.ln() - r
    }
}

/// φ_j(α,t,x) = Γ(j)/Γ(α+j) t^{-j} (x/t)^α e^{-x/t} L^α_{j−1}(x/t).
pub fn phi(j: u32, alpha: u32, t: f64, x: f64) -> f64 {
    assert!(j >= 1, "phi is indexed from 1");
    let ln = log_gamma_ratio(j as u64, alpha as u64) - j as f64 * t.ln() + ln_weight(alpha, t, x);
    ln.exp() * laguerre(alpha, j - 1, x / t)
}

/// ψ_j(α,t,x) = t^{j−1} L^α_{j−1}(x/t).
pub fn psi(j: u32, alpha: u32, t: f64, x: f64) -> f64 {
    assert!(j >= 1, "psi is indexed from 1");
    t.powi(j as i32 - 1) * laguerre(alpha, j - 1, x / t)
}

/// φ̄_j = Γ(α+j) φ_j = Γ(j) t^{-j} (x/t)^α e^{-x/t} L^α_{j−1}(x/t).
pub fn phi_bar(j: u32, alpha: u32, t: f64, x: f64) -> f64 {
    assert!(j >= 1, "phi_bar is indexed from 1");
    let ln = ln_factorial(j as u64 - 1) - j as f64 * t.ln() + ln_weight(alpha, t, x);
    ln.exp() * laguerre(alpha, j - 1, x / t)
}

/// ψ̄_j = ψ_j / Γ(α+j).
pub fn psi_bar(j: u32, alpha: u32, t: f64, x: f64) -> f64 {
    assert!(j >= 1, "psi_bar is indexed from 1");
    let ln = (j as f64 - 1.0) * t.ln() - ln_factorial((alpha + j) as u64 - 1);
    ln.exp() * laguerre(alpha, j - 1, x / t)
}
