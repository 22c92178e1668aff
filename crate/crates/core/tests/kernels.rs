mod common;

use approx::assert_relative_eq;
use bessel_field::correlation_kernels::{ln_gauge_factor, AccuracyFlag, KernelSpec};
use bessel_field::special_functions::ln_factorial;
use bessel_field::{Ordering, PathPoint};
use common::{abel_bessel_integral, integrate, j};
use proptest::prelude::*;

fn pp(a: u32, t: f64) -> PathPoint {
    PathPoint::new(a, t)
}

#[test]
fn trace_counts_particles() {
    for (alpha, t) in [(0u32, 1.0), (2, 1.3), (5, 0.6)] {
        for n in 1..=10usize {
            let k = KernelSpec::finite_raw(Ordering::TimeLike, n, vec![pp(alpha, t)]).unwrap();
            let upper = t * (4.0 * n as f64 + alpha as f64 + 80.0);
            let tr = integrate(|x| k.eval(0, x, 0, x).unwrap().value, 0.0, upper, t, &[]);
            assert!((tr - n as f64).abs() < 1e-6, "alpha {alpha} t {t} N {n}: trace {tr}");
        }
    }
}

#[test]
fn reproducing_property() {
    for ordering in [Ordering::TimeLike, Ordering::SpaceLike] {
        let (n, alpha, t) = (6, 2, 1.3);
        let k = KernelSpec::finite_raw(ordering, n, vec![pp(alpha, t)]).unwrap();
        let kv = |x: f64, y: f64| k.eval(0, x, 0, y).unwrap().value;
        for (x, y) in [(0.5, 2.0), (3.0, 3.0), (7.5, 1.2)] {
            let conv = integrate(|z| kv(x, z) * kv(z, y), 0.0, 120.0, 1.0, &[]);
            assert!((conv - kv(x, y)).abs() < 1e-6, "{ordering:?} ({x},{y}): {conv} vs {}", kv(x, y));
        }
    }
}

#[test]
fn one_point_density_at_n1() {
    for alpha in 0..5u32 {
        for t in [0.5, 1.0, 2.5] {
            let k = KernelSpec::finite_raw(Ordering::SpaceLike, 1, vec![pp(alpha, t)]).unwrap();
            for x in [0.05, 0.7, 2.0, 6.0, 15.0] {
                let u: f64 = x / t;
                let rho = (alpha as f64 * u.ln() - u - ln_factorial(alpha as u64)).exp() / t;
                assert_relative_eq!(k.eval(0, x, 0, x).unwrap().value, rho, max_relative = 1e-10);
            }
        }
    }
}

#[test]
fn gauged_diagonal_blocks_are_symmetric() {
    let cases = [
        (Ordering::TimeLike, vec![pp(0, -2.0), pp(1, 0.0), pp(3, 1.5)]),
        (Ordering::SpaceLike, vec![pp(3, -2.0), pp(2, 0.0), pp(0, 1.5)]),
    ];
    for (ordering, path) in cases {
        for n in [10, 80] {
            let k = KernelSpec::finite_gauged(ordering, n, path.clone()).unwrap();
            for i in 0..path.len() {
                for (x, y) in [(0.3, 2.4), (1.0, 9.0), (5.5, 5.0)] {
                    let a = k.eval(i, x, i, y).unwrap().value;
                    let b = k.eval(i, y, i, x).unwrap().value;
                    assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{ordering:?} N {n} i {i}: {a} vs {b}");
                }
            }
        }
    }
}

#[test]
fn gauge_consistency() {
    let cases = [
        (Ordering::TimeLike, vec![pp(0, -3.0), pp(0, 0.0), pp(2, 0.0), pp(3, 2.0)]),
        (Ordering::SpaceLike, vec![pp(3, -3.0), pp(1, -3.0), pp(1, 0.5), pp(0, 2.0)]),
    ];
    for (ordering, path) in cases {
        let n = 25;
        let m = 4.0 * n as f64;
        let abs: Vec<_> = path.iter().map(|p| pp(p.alpha, 1.0 + p.t / m)).collect();
        let g = KernelSpec::finite_gauged(ordering, n, path.clone()).unwrap();
        let r = KernelSpec::finite_raw(ordering, n, abs).unwrap();
        for i in 0..path.len() {
            for jx in 0..path.len() {
                for (x, y) in [(0.4, 1.9), (6.0, 2.5)] {
                    let gauged = g.eval(i, x, jx, y).unwrap().value;
                    let raw = r.eval(i, x / m, jx, y / m).unwrap().value / m;
                    let f = (ln_gauge_factor(ordering, n, path[i], x) - ln_gauge_factor(ordering, n, path[jx], y)).exp();
                    assert_relative_eq!(gauged, f * raw, max_relative = 1e-10);
                }
            }
        }
    }
}

#[test]
fn gauged_kernel_approaches_bessel() {
    let grid: Vec<f64> = (0..6).map(|i| 0.5 + 1.9 * i as f64).collect();
    let bessel = KernelSpec::bessel(Ordering::TimeLike, vec![pp(0, 0.0)]).unwrap();
    let sup = |n: usize| {
        let g = KernelSpec::finite_gauged(Ordering::TimeLike, n, vec![pp(0, 0.0)]).unwrap();
        let mut worst = 0.0f64;
        for &x in &grid {
            for &y in &grid {
                let d = g.eval(0, x, 0, y).unwrap().value - bessel.eval(0, x, 0, y).unwrap().value;
                worst = worst.max(d.abs());
            }
        }
        worst
    };
    let (e25, e100) = (sup(25), sup(100));
    assert!(e100 < e25, "{e100} !< {e25}");
    assert!(e100 < 0.02, "{e100}");
}

#[test]
fn bessel_origin_value() {
    for t in [-1.0, 0.0, 2.0] {
        let k = KernelSpec::bessel(Ordering::TimeLike, vec![pp(0, t)]).unwrap();
        assert_eq!(k.eval(0, 0.0, 0, 0.0).unwrap().value, 0.25);
    }
}

#[test]
fn bessel_projection_closes_with_truncation() {
    for alpha in [0u32, 2] {
        let k = KernelSpec::bessel(Ordering::TimeLike, vec![pp(alpha, 0.0)]).unwrap();
        let kv = |x: f64, y: f64| k.eval(0, x, 0, y).unwrap().value;
        for (x, y) in [(1.0, 2.0), (0.5, 3.0)] {
            let target = kv(x, y);
            // z = v², so the oscillation in √z is resolved by a fixed step.
            let residual = |upper: f64| {
                let conv = integrate(|v| 2.0 * v * kv(x, v * v) * kv(v * v, y), 0.0, upper.sqrt(), 0.25, &[]);
                (conv - target).abs()
            };
            let r: Vec<f64> = [1e2, 1e3, 1e4].iter().map(|&u| residual(u)).collect();
            assert!(r[1] < r[0] && r[2] < r[1], "alpha {alpha} ({x},{y}): {r:?}");
            assert!(r[2] < 1e-3, "alpha {alpha} ({x},{y}): {r:?}");
        }
    }
}

fn head(alpha: u32, beta: u32, p: f64, x: f64, y: f64) -> f64 {
    let (sx, sy) = (x.sqrt(), y.sqrt());
    // u = v² removes the u^{-1/2} endpoint behaviour.
    integrate(
        |v| 2.0 * v.powf(1.0 - 2.0 * p) * j(alpha, 2.0 * sx * v) * j(beta, 2.0 * sy * v),
        0.0,
        0.5,
        0.05,
        &[],
    )
}

#[test]
fn equal_time_tail_matches_abel_summed_integral() {
    let tl = KernelSpec::bessel(Ordering::TimeLike, vec![pp(0, 0.0), pp(1, 0.0)]).unwrap();
    let sl = KernelSpec::bessel(Ordering::SpaceLike, vec![pp(1, 0.0), pp(0, 0.0)]).unwrap();
    for (x, y) in [(0.5, 2.0), (1.0, 3.0), (3.0, 1.0), (4.0, 6.5)] {
        let oracle = head(0, 1, 0.5, x, y) - abel_bessel_integral(0, 1, 0.5, x, y, 6);
        let v = tl.eval(0, x, 1, y).unwrap();
        assert_eq!(v.flag, AccuracyFlag::Ok);
        assert!((v.value - oracle).abs() < 1e-8, "time-like ({x},{y}): {} vs {oracle}", v.value);

        let oracle = head(1, 0, 0.5, x, y) - abel_bessel_integral(1, 0, 0.5, x, y, 6);
        let v = sl.eval(0, x, 1, y).unwrap().value;
        assert!((v - oracle).abs() < 1e-8, "space-like ({x},{y}): {v} vs {oracle}");
    }
    // At (0,0),(1,0) the closed part is x^0 y^{-1/2} for x ≤ y.
    let expected = head(0, 1, 0.5, 1.0, 4.0) - 0.5;
    assert!((tl.eval(0, 1.0, 1, 4.0).unwrap().value - expected).abs() < 1e-12);
}

#[test]
fn orderings_agree_at_fixed_alpha() {
    for alpha in [0u32, 1, 4] {
        let path = vec![pp(alpha, -1.0), pp(alpha, 0.0), pp(alpha, 0.7)];
        let tl = KernelSpec::bessel(Ordering::TimeLike, path.clone()).unwrap();
        let sl = KernelSpec::bessel(Ordering::SpaceLike, path).unwrap();
        for i in 0..3 {
            for jx in 0..3 {
                for (x, y) in [(0.2, 0.9), (4.0, 2.5)] {
                    let a = tl.eval(i, x, jx, y).unwrap().value;
                    let b = sl.eval(i, x, jx, y).unwrap().value;
                    assert!((a - b).abs() < 1e-14, "alpha {alpha} ({i},{jx}): {a} vs {b}");
                }
            }
        }
    }
}

#[test]
fn evaluation_is_deterministic_across_threads() {
    let k = KernelSpec::finite_gauged(Ordering::TimeLike, 60, vec![pp(0, -1.0), pp(2, 0.5)]).unwrap();
    let pts: Vec<(usize, f64, usize, f64)> =
        (0..40).map(|m| (m % 2, 0.3 + 0.2 * m as f64, (m / 2) % 2, 1.1 + 0.1 * m as f64)).collect();
    let serial: Vec<u64> = pts.iter().map(|&(i, x, jx, y)| k.eval(i, x, jx, y).unwrap().value.to_bits()).collect();
    let parallel: Vec<Vec<u64>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..4)
            .map(|_| s.spawn(|| pts.iter().map(|&(i, x, jx, y)| k.eval(i, x, jx, y).unwrap().value.to_bits()).collect()))
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    for p in parallel {
        assert_eq!(p, serial);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn diagonal_is_non_negative(alpha in 0u32..6, n in 1usize..40, t in -3.0f64..3.0, x in 0.0f64..30.0, space in any::<bool>()) {
        let ordering = if space { Ordering::SpaceLike } else { Ordering::TimeLike };
        let g = KernelSpec::finite_gauged(ordering, n, vec![pp(alpha, t)]).unwrap();
        prop_assert!(g.eval(0, x, 0, x).unwrap().value >= -1e-12);
        let b = KernelSpec::bessel(ordering, vec![pp(alpha, t)]).unwrap();
        prop_assert!(b.eval(0, x, 0, x).unwrap().value >= -1e-12);
    }
}
