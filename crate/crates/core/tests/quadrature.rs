mod common;

use std::f64::consts::PI;

use common::{adaptive_gk, loglog_slope};
use lapwg_core::quadrature::{apply_rule, integrate_segment, GradedMap, SegmentRule};
use lapwg_core::Complex64;
use proptest::prelude::*;

fn graded_error(f: &dyn Fn(f64) -> f64, a: f64, b: f64, n: usize, exact: f64) -> f64 {
    (integrate_segment(|x| Ok(f(x)), a, b, n, 6).unwrap() - exact).abs()
}

#[test]
fn oracle_reproduces_closed_form() {
    // int 1/(c - cos t) = 2/sqrt(c^2-1) atan(sqrt((c+1)/(c-1)) tan(t/2)).
    let c: f64 = 1.1;
    let closed = |t: f64| 2.0 / (c * c - 1.0).sqrt() * (((c + 1.0) / (c - 1.0)).sqrt() * (t / 2.0).tan()).atan();
    let exact = closed(PI / 2.0) - closed(0.0);
    let oracle = adaptive_gk(&|t| 1.0 / (c - t.cos()), 0.0, PI / 2.0, 1e-13);
    assert!((oracle - exact).abs() < 1e-12);
}

#[test]
fn graded_rule_order_on_peaked_integrand() {
    let f = |t: f64| 1.0 / (1.1 - t.cos());
    let exact = adaptive_gk(&f, 0.0, PI / 2.0, 1e-13);
    let ns = [16usize, 32, 64, 128];
    let errs: Vec<f64> = ns.iter().map(|&n| graded_error(&f, 0.0, PI / 2.0, n, exact)).collect();
    let order = (errs[0] / errs[3]).ln() / 8f64.ln();
    assert!(order >= 5.5, "errors {errs:?}, order {order}");
}

#[test]
fn graded_rule_order_by_regression() {
    let f = |t: f64| (1.3 * t).exp() * (2.0 * t).cos() / (2.0 + t);
    let exact = adaptive_gk(&f, -0.4, 1.9, 1e-14);
    let ns = [16usize, 32, 64];
    let errs: Vec<f64> = ns.iter().map(|&n| graded_error(&f, -0.4, 1.9, n, exact)).collect();
    let x: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
    assert!(-loglog_slope(&x, &errs) >= 5.5, "{errs:?}");
}

#[test]
fn periodic_rule_converges_geometrically() {
    let f = |t: f64| (t.cos()).exp();
    let exact = 2.0 * PI * 1.266_065_877_752_008_4;
    let e: Vec<f64> = [4usize, 8, 16]
        .iter()
        .map(|&n| (apply_rule(&SegmentRule::periodic(-PI, PI, n).unwrap(), |_, t| Ok(f(t))).unwrap() - exact).abs())
        .collect();
    assert!(e[1] < 1e-4 * e[0] && e[2] < 1e-12);
}

#[test]
fn derivatives_vanish_to_grading_order() {
    let m = GradedMap::new(0.0, 1.0, 6).unwrap();
    for s in [1e-2, 5e-3] {
        let (_, d_lo) = m.eval(-PI + s).unwrap();
        let (_, d_hi) = m.eval(PI - s).unwrap();
        // q' behaves like s^6 near the ends.
        assert!(d_lo < 1e-9 && d_hi < 1e-9);
        assert!((d_lo - d_hi).abs() < 1e-22);
    }
    // Central differences of order 1..6 of q at the ends, on the mirrored extension.
    let ext = |t: f64| {
        if t < -PI {
            2.0 * 0.0 - m.eval(-2.0 * PI - t).unwrap().0
        } else {
            m.eval(t).unwrap().0
        }
    };
    let step = 0.05;
    for order in 1..=6usize {
        let mut sum = 0.0;
        let mut binom = 1.0;
        for k in 0..=order {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            sum += sign * binom * ext(-PI + (order as f64 / 2.0 - k as f64) * step);
            binom = binom * (order - k) as f64 / (k + 1) as f64;
        }
        let d = sum / step.powi(order as i32);
        assert!(d.abs() <= 1e-6 * 10f64.powi(order as i32), "order {order}: {d}");
    }
}

proptest! {
    #[test]
    fn map_is_monotone_and_onto(a in -3.0f64..3.0, len in 0.01f64..5.0, n0 in 0usize..12) {
        let m = GradedMap::new(a, a + len, n0).unwrap();
        let mut prev = a;
        for k in 0..=64 {
            let (v, d) = m.eval(-PI + 2.0 * PI * k as f64 / 64.0).unwrap();
            prop_assert!(v >= prev - 1e-15 && d >= 0.0);
            prev = v;
        }
        prop_assert!((prev - (a + len)).abs() <= 1e-14 * (1.0 + a.abs() + len));
    }

    #[test]
    fn weights_sum_and_nodes_in_range(a in -3.0f64..3.0, len in 0.01f64..5.0, half_n in 2usize..40, n0 in 0usize..10) {
        let r = SegmentRule::graded(a, a + len, 2 * half_n, n0).unwrap();
        let s: f64 = r.weights.iter().sum();
        prop_assert!((s - len).abs() <= 1e-12 * len);
        prop_assert!(r.nodes.iter().all(|&x| x >= a - 1e-14 && x <= a + len + 1e-14));
    }

    #[test]
    fn rule_is_linear(c in -5.0f64..5.0, w in 0.1f64..3.0) {
        let g1 = |t: f64| Complex64::new(t.sin(), t * t);
        let g2 = |t: f64| Complex64::new((w * t).cos(), 1.0);
        let i1 = integrate_segment(|t| Ok(g1(t)), 0.0, 2.0, 32, 6).unwrap();
        let i2 = integrate_segment(|t| Ok(g2(t)), 0.0, 2.0, 32, 6).unwrap();
        let i12 = integrate_segment(|t| Ok(g1(t) * c + g2(t)), 0.0, 2.0, 32, 6).unwrap();
        prop_assert!((i12 - (i1 * c + i2)).norm() <= 1e-13 * (1.0 + i12.norm()));
    }
}
