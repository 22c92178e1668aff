//! Independent quadrature oracles and identity sweeps shared by the
//! integration tests and the acceptance target.
#![allow(dead_code)]

use std::sync::OnceLock;

use bessel_field::quadrature::{GaussLegendre, QuadratureRule};
use bessel_field::special_functions::{bessel_j, hankel_transform, ln_factorial};
use bessel_field::transition_kernels::{
    phi, phi_bar, psi, psi_bar, q_bar_kernel, q_kernel, t_kernel, w_bar_kernel, w_kernel, SpacelikePair,
    TimelikePair,
};
use bessel_field::PathPoint;

pub fn gl32() -> &'static GaussLegendre {
    static G: OnceLock<GaussLegendre> = OnceLock::new();
    G.get_or_init(|| GaussLegendre::new(32))
}

pub fn j(n: u32, z: f64) -> f64 {
    bessel_j(n, z).unwrap()
}

/// Composite 32-point Gauss–Legendre on [a, b], panels no wider than `h`,
/// with extra breakpoints where the integrand has a kink or jump.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, h: f64, breaks: &[f64]) -> f64 {
    let mut pts = vec![a];
    pts.extend(breaks.iter().copied().filter(|&c| c > a && c < b));
    pts.push(b);
    pts.sort_by(f64::total_cmp);
    pts.windows(2)
        .map(|w| {
            let panels = ((w[1] - w[0]) / h).ceil().max(1.0) as usize;
            gl32().composite(w[0], w[1], panels, &f)
        })
        .sum()
}

/// Adaptive Simpson with Richardson correction.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn step<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// Abel-summed ∫_0^∞ u^{-p} J_α(2√(xu)) J_β(2√(yu)) du.
///
/// Damped by e^{-εu}, integrated in v = √u, and extrapolated to ε → 0 over
/// `levels` halvings. The damped value is smooth in ε up to terms of order
/// e^{-(√x−√y)²/ε}, which fixes the starting ε.
pub fn abel_bessel_integral(alpha: u32, beta: u32, p: f64, x: f64, y: f64, levels: usize) -> f64 {
    let sep = (x.sqrt() - y.sqrt()).powi(2);
    let eps0 = (sep / 40.0).min(0.05);
    let freq = 2.0 * (x.sqrt() + y.sqrt());
    let h = std::f64::consts::PI / freq;
    let (sx, sy) = (x.sqrt(), y.sqrt());
    let damped = |eps: f64| {
        let v_max = (40.0 / eps).sqrt();
        integrate(
            |v| 2.0 * v.powf(1.0 - 2.0 * p) * (-eps * v * v).exp() * j(alpha, 2.0 * sx * v) * j(beta, 2.0 * sy * v),
            0.0,
            v_max,
            h,
            &[],
        )
    };
    let mut table: Vec<Vec<f64>> = Vec::new();
    for k in 0..levels {
        let mut row = vec![damped(eps0 / 2f64.powi(k as i32))];
        for m in 1..=k {
            let f = 2f64.powi(m as i32);
            row.push((f * row[m - 1] - table[k - 1][m - 1]) / (f - 1.0));
        }
        table.push(row);
    }
    *table.last().unwrap().last().unwrap()
}

/// A named residual.
#[derive(Debug, Clone)]
pub struct Residual {
    pub label: String,
    pub value: f64,
}

pub fn worst(r: &[Residual]) -> &Residual {
    r.iter().max_by(|a, b| a.value.total_cmp(&b.value)).unwrap()
}

fn pp(a: u32, t: f64) -> PathPoint {
    PathPoint::new(a, t)
}

pub fn rule() -> QuadratureRule {
    QuadratureRule::default()
}

pub const J_MAX: u32 = 8;
pub const POINTS: [f64; 3] = [0.4, 1.7, 4.2];

pub fn time_like_pairs() -> Vec<(PathPoint, PathPoint)> {
    vec![
        (pp(1, 1.0), pp(1, 2.0)),
        (pp(0, 1.0), pp(2, 1.0)),
        (pp(3, 1.0), pp(4, 1.0)),
        (pp(0, 1.0), pp(1, 1.5)),
        (pp(2, 0.5), pp(4, 1.0)),
    ]
}

pub fn space_like_pairs() -> Vec<(PathPoint, PathPoint)> {
    vec![
        (pp(2, 1.0), pp(2, 2.0)),
        (pp(4, 1.0), pp(1, 1.0)),
        (pp(1, 1.0), pp(0, 1.0)),
        (pp(3, 1.0), pp(2, 1.5)),
        (pp(4, 0.5), pp(0, 1.0)),
    ]
}

fn q_time(a: PathPoint, b: PathPoint) -> impl Fn(f64, f64) -> f64 {
    let pair = TimelikePair::new(a, b).unwrap();
    let r = rule();
    move |x, y| q_kernel(&pair, x, y, &r).unwrap().value
}

fn q_space(a: PathPoint, b: PathPoint) -> impl Fn(f64, f64) -> f64 {
    let pair = SpacelikePair::new(a, b).unwrap();
    let r = rule();
    move |x, y| q_bar_kernel(&pair, x, y, &r).unwrap().value
}

/// ∫ φ_i ψ_j = δ_ij for both families, i, j ≤ 8, α ≤ 4.
pub fn delta_residuals() -> Vec<Residual> {
    let mut out = Vec::new();
    for alpha in 0..=4 {
        for t in [0.5, 1.0, 2.0] {
            for i in 1..=J_MAX {
                for jj in 1..=J_MAX {
                    let target = if i == jj { 1.0 } else { 0.0 };
                    let plain = integrate(|x| phi(i, alpha, t, x) * psi(jj, alpha, t, x), 0.0, 100.0 * t, t, &[]);
                    let barred =
                        integrate(|x| phi_bar(i, alpha, t, x) * psi_bar(jj, alpha, t, x), 0.0, 100.0 * t, t, &[]);
                    out.push(Residual { label: format!("delta a={alpha} t={t} i={i} j={jj}"), value: (plain - target).abs() });
                    out.push(Residual {
                        label: format!("delta-bar a={alpha} t={t} i={i} j={jj}"),
                        value: (barred - target).abs(),
                    });
                }
            }
        }
    }
    out
}

/// Support of x ↦ Q(x, y) (for φQ) and of y ↦ Q(x, y) (for Qψ) when the
/// pair is a pure α step, where Q has an indicator.
fn w_support(time_like: bool, a: PathPoint, b: PathPoint) -> Option<bool> {
    // Some(true): Q(x,y) vanishes unless x ≤ y.
    (a.t == b.t).then_some(time_like)
}

/// φQ and Qψ for the time-like and space-like families on the declared pairs.
pub fn intertwining_residuals() -> Vec<Residual> {
    let mut out = Vec::new();
    for (time_like, pairs) in [(true, time_like_pairs()), (false, space_like_pairs())] {
        for (a, b) in pairs {
            let q: Box<dyn Fn(f64, f64) -> f64> = if time_like { Box::new(q_time(a, b)) } else { Box::new(q_space(a, b)) };
            let (f_in, f_out): (fn(u32, u32, f64, f64) -> f64, fn(u32, u32, f64, f64) -> f64) =
                if time_like { (phi, psi) } else { (phi_bar, psi_bar) };
            let support = w_support(time_like, a, b);
            let tag = if time_like { "time" } else { "space" };
            for &y in &POINTS {
                // φQ: integrate over x with the source weight.
                let (lo, hi) = match support {
                    Some(true) => (0.0, y),
                    Some(false) => (y, y + 100.0 * a.t),
                    None => (0.0, 100.0 * a.t),
                };
                let h = if support == Some(true) { y / 4.0 } else { 0.5 * a.t };
                let nodes: Vec<(f64, f64)> = node_list(lo, hi, h);
                let qv: Vec<f64> = nodes.iter().map(|&(x, _)| q(x, y)).collect();
                for jj in 1..=J_MAX {
                    let lhs: f64 =
                        nodes.iter().zip(&qv).map(|(&(x, w), qx)| w * f_in(jj, a.alpha, a.t, x) * qx).sum();
                    let rhs = f_in(jj, b.alpha, b.t, y);
                    out.push(Residual {
                        label: format!("phiQ-{tag} {a:?}->{b:?} j={jj} y={y}"),
                        value: (lhs - rhs).abs(),
                    });
                }
            }
            for &x in &POINTS {
                let (lo, hi) = match support {
                    Some(true) => (x, x + 80.0 * b.t),
                    Some(false) => (0.0, x),
                    // time-like Q decays like e^{-y/s}; space-like Q̄ like a
                    // heat kernel of duration s − t started below x
                    None if time_like => (0.0, x + 80.0 * b.t),
                    None => (0.0, (x.sqrt() + 10.0 * (b.t - a.t).sqrt()).powi(2)),
                };
                let h = if support == Some(false) { x / 4.0 } else { 0.5 * b.t };
                let nodes = node_list(lo, hi, h);
                let qv: Vec<f64> = nodes.iter().map(|&(y, _)| q(x, y)).collect();
                for jj in 1..=J_MAX {
                    let lhs: f64 =
                        nodes.iter().zip(&qv).map(|(&(y, w), qy)| w * qy * f_out(jj, b.alpha, b.t, y)).sum();
                    let rhs = f_out(jj, a.alpha, a.t, x);
                    out.push(Residual {
                        label: format!("Qpsi-{tag} {a:?}->{b:?} j={jj} x={x}"),
                        value: (lhs - rhs).abs(),
                    });
                }
            }
        }
    }
    out
}

/// Gauss–Legendre nodes and weights of the composite rule on [a, b].
pub fn node_list(a: f64, b: f64, h: f64) -> Vec<(f64, f64)> {
    let panels = ((b - a) / h).ceil().max(1.0) as usize;
    let width = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(panels * 32);
    for p in 0..panels {
        let lo = a + width * p as f64;
        out.extend(gl32().mapped(lo, lo + width));
    }
    out
}

fn chain_integral(q1: &dyn Fn(f64, f64) -> f64, q2: &dyn Fn(f64, f64) -> f64, x: f64, z: f64, lo: f64, hi: f64) -> f64 {
    integrate(|y| q1(x, y) * q2(y, z), lo, hi, 0.5, &[x, z])
}

/// Chapman–Kolmogorov ∫ Q(a→b)(x,y) Q(b→c)(y,z) dy = Q(a→c)(x,z).
pub fn chapman_kolmogorov_residuals() -> Vec<Residual> {
    let time = vec![
        (pp(0, 1.0), pp(0, 1.5), pp(0, 2.5)),
        (pp(0, 1.0), pp(2, 1.0), pp(2, 2.0)),
        (pp(1, 1.0), pp(1, 1.5), pp(3, 1.5)),
        (pp(0, 0.5), pp(1, 1.0), pp(3, 2.0)),
        (pp(1, 1.0), pp(2, 1.0), pp(4, 1.0)),
    ];
    let space = vec![
        (pp(3, 1.0), pp(1, 1.0), pp(1, 2.0)),
        (pp(3, 1.0), pp(3, 1.5), pp(1, 1.5)),
        (pp(4, 0.5), pp(2, 1.0), pp(0, 2.0)),
        (pp(4, 1.0), pp(2, 1.0), pp(1, 1.0)),
    ];
    let points: [(f64, f64); 3] = [(0.7, 1.9), (2.0, 1.2), (1.5, 3.5)];
    let mut out = Vec::new();
    for (a, b, c) in time {
        let (q1, q2, q13) = (q_time(a, b), q_time(b, c), q_time(a, c));
        for &(x, z) in &points {
            let hi = 40.0 * c.t + 2.0 * x.max(z);
            let lhs = chain_integral(&q1, &q2, x, z, 0.0, hi);
            out.push(Residual { label: format!("QQ {a:?}->{b:?}->{c:?} x={x} z={z}"), value: (lhs - q13(x, z)).abs() });
        }
    }
    for (a, b, c) in space {
        let (q1, q2, q13) = (q_space(a, b), q_space(b, c), q_space(a, c));
        for &(x, z) in &points {
            let hi = 40.0 * c.t + 2.0 * x.max(z);
            let lhs = chain_integral(&q1, &q2, x, z, 0.0, hi);
            out.push(Residual {
                label: format!("QQ-s {a:?}->{b:?}->{c:?} x={x} z={z}"),
                value: (lhs - q13(x, z)).abs(),
            });
        }
    }
    out
}

/// ∫ T W dz = ∫ W T dz and the space-like analogue.
pub fn commutation_residuals() -> Vec<Residual> {
    let mut out = Vec::new();
    let points: [(f64, f64); 3] = [(0.7, 1.9), (2.0, 1.2), (1.5, 3.5)];
    for (alpha, beta) in [(0u32, 1u32), (1, 3), (2, 4)] {
        for (t, s) in [(1.0, 1.5), (0.5, 2.0)] {
            for &(x, y) in &points {
                let hi = 40.0 * s + 2.0 * x.max(y);
                let tw = integrate(
                    |z| t_kernel(alpha, t, x, s, z).unwrap() * w_kernel(alpha, beta, s, z, y).unwrap(),
                    0.0,
                    y,
                    0.25,
                    &[],
                );
                let wt = integrate(
                    |z| w_kernel(alpha, beta, t, x, z).unwrap() * t_kernel(beta, t, z, s, y).unwrap(),
                    x,
                    hi,
                    0.25,
                    &[],
                );
                out.push(Residual {
                    label: format!("comm a={alpha} b={beta} t={t} s={s} x={x} y={y}"),
                    value: (tw - wt).abs(),
                });
            }
        }
    }
    for (alpha, beta) in [(1u32, 0u32), (3, 1), (4, 2)] {
        for (t, s) in [(1.0, 1.5), (0.5, 2.0)] {
            for &(x, y) in &points {
                let hi = 40.0 * s + 2.0 * x.max(y);
                let tw = integrate(
                    |z| t_kernel(alpha, t, x, s, z).unwrap() * w_bar_kernel(alpha, beta, z, y).unwrap(),
                    y,
                    hi,
                    0.25,
                    &[],
                );
                let wt = integrate(
                    |z| w_bar_kernel(alpha, beta, x, z).unwrap() * t_kernel(beta, t, z, s, y).unwrap(),
                    0.0,
                    x,
                    0.25,
                    &[],
                );
                out.push(Residual {
                    label: format!("comm-s a={alpha} b={beta} t={t} s={s} x={x} y={y}"),
                    value: (tw - wt).abs(),
                });
            }
        }
    }
    out
}

fn damped_jj(alpha: u32, beta: u32, p: f64, rate: f64, a: f64, b: f64) -> f64 {
    // ∫_0^∞ e^{-rate u} u^{-p} J_α(2√(au)) J_β(2√(bu)) du in v = √u.
    let v_max = (40.0 / rate).sqrt();
    let h = std::f64::consts::PI / (2.0 * (a.sqrt() + b.sqrt())).max(1.0);
    let (sa, sb) = (a.sqrt(), b.sqrt());
    integrate(
        |v| 2.0 * v.powf(1.0 - 2.0 * p) * (-rate * v * v).exp() * j(alpha, 2.0 * sa * v) * j(beta, 2.0 * sb * v),
        0.0,
        v_max,
        h,
        &[],
    )
}

/// Both sides of the appendix identities for T, W, T̄, W̄, plus Parseval.
pub fn appendix_residuals() -> Vec<Residual> {
    let mut out = Vec::new();
    let points: [(f64, f64); 4] = [(0.5, 1.5), (1.0, 3.0), (2.5, 0.8), (3.0, 3.3)];
    // T as a damped Bessel product.
    for alpha in 0..=3u32 {
        for (t, s) in [(1.0, 2.0), (1.0, 1.5), (2.0, 3.0)] {
            for &(x, y) in &points {
                let rhs = (-y / s + x / t + 0.5 * alpha as f64 * (y / x).ln()).exp()
                    * damped_jj(alpha, alpha, 0.0, s - t, s * x / t, t * y / s);
                let lhs = t_kernel(alpha, t, x, s, y).unwrap();
                out.push(Residual { label: format!("TQ a={alpha} t={t} s={s} x={x} y={y}"), value: (lhs - rhs).abs() });
                let rhs_bar = (0.5 * alpha as f64 * (y / x).ln()).exp() * damped_jj(alpha, alpha, 0.0, s - t, x, y);
                out.push(Residual {
                    label: format!("TQ-s a={alpha} t={t} s={s} x={x} y={y}"),
                    value: (lhs - rhs_bar).abs(),
                });
            }
        }
    }
    // W as an Abel-summed Bessel product.
    let w_points: [(f64, f64); 4] = [(1.0, 3.0), (0.5, 2.5), (0.8, 4.0), (3.0, 1.0)];
    for (alpha, beta) in [(0u32, 1u32), (1, 2), (0, 2), (2, 4)] {
        let d = (beta - alpha) as f64;
        for &(x, y) in &w_points {
            let int = abel_bessel_integral(alpha, beta, 0.5 * d, x, y, 6);
            for t in [1.0f64, 0.7] {
                let rhs = (-d * t.ln() - (y - x) / t + 0.5 * beta as f64 * y.ln() - 0.5 * alpha as f64 * x.ln()).exp()
                    * int;
                let lhs = w_kernel(alpha, beta, t, x, y).unwrap();
                out.push(Residual {
                    label: format!("WQ a={alpha} b={beta} t={t} x={x} y={y}"),
                    value: (lhs - rhs).abs(),
                });
            }
        }
    }
    for (alpha, beta) in [(1u32, 0u32), (2, 1), (2, 0), (4, 2)] {
        let d = (alpha - beta) as f64;
        for &(y, x) in &w_points {
            let int = abel_bessel_integral(alpha, beta, 0.5 * d, x, y, 6);
            let rhs = (0.5 * beta as f64 * y.ln() - 0.5 * alpha as f64 * x.ln()).exp() * int;
            let lhs = w_bar_kernel(alpha, beta, x, y).unwrap();
            out.push(Residual {
                label: format!("WQ-s a={alpha} b={beta} x={x} y={y}"),
                value: (lhs - rhs).abs(),
            });
        }
    }
    out.extend(parseval_residuals());
    out
}

/// ∫ H[f] H[g] = ∫ f g for f = u^{α+1/2} e^{-u²/2}, g = u^{α+1/2} e^{-u²}.
pub fn parseval_residuals() -> Vec<Residual> {
    let rule = QuadratureRule::new(32);
    let mut out = Vec::new();
    for alpha in 0..=4u32 {
        let a = alpha as f64;
        let f = move |u: f64| u.powf(a + 0.5) * (-0.5 * u * u).exp();
        let g = move |u: f64| u.powf(a + 0.5) * (-u * u).exp();
        let hf = |z: f64| hankel_transform(f, alpha, z, 12.0, &rule).unwrap().value;
        let hg = |z: f64| hankel_transform(g, alpha, z, 12.0, &rule).unwrap().value;
        let lhs = integrate(|z| hf(z) * hg(z), 0.0, 12.0, 0.5, &[]);
        // ∫ u^{2α+1} e^{-3u²/2} du = Γ(α+1) / (2 (3/2)^{α+1})
        let exact = (ln_factorial(alpha as u64) - (a + 1.0) * 1.5f64.ln()).exp() / 2.0;
        let rhs = integrate(|u| f(u) * g(u), 0.0, 12.0, 0.5, &[]);
        out.push(Residual { label: format!("Parseval a={alpha}"), value: (lhs - rhs).abs().max((rhs - exact).abs()) });
    }
    out
}
