mod common;

use std::f64::consts::PI;
use std::sync::Arc;

use common::{loglog_slope, ring_operator};
use lapwg_core::fullguide::{interpolate_to, l2_norm, relative_l2};
use lapwg_core::oracle::{bloch_transform_truncated, solve_absorbing, TruncatedStrip};
use lapwg_core::{CellOperator, CellProblem, Complex64, MediumSpec, SourceSpec, UnitCellMesh};
use proptest::prelude::*;

fn vertex_values(mesh: &UnitCellMesh, v: &[Complex64]) -> Vec<Complex64> {
    mesh.dof_map.iter().map(|&d| v[d]).collect()
}

fn unit(t: f64) -> Complex64 {
    Complex64::from_polar(1.0, t)
}

#[test]
fn indicator_dips_at_reported_multiplier() {
    let op = ring_operator(0.01, 17.0);
    let near = op.singularity_indicator(unit(0.9576)).unwrap();
    let far = op.singularity_indicator(unit(0.5)).unwrap();
    assert!(near * 100.0 <= far, "near {near:e}, far {far:e}");
}

#[test]
fn stop_band_has_indicator_floor_on_circle() {
    let op = ring_operator(0.05, 5.0);
    let min = (0..360)
        .map(|j| {
            op.singularity_indicator(unit(-PI + 2.0 * PI * j as f64 / 360.0))
                .unwrap()
        })
        .fold(f64::INFINITY, f64::min);
    assert!(min > 1e-3, "indicator floor {min:e}");
}

#[test]
fn mesh_refinement_order_in_stop_band() {
    let source = SourceSpec::ring();
    let z = unit(1.0);
    let hs = [0.04, 0.02, 0.01, 0.005];
    let fields: Vec<(Arc<UnitCellMesh>, Vec<Complex64>)> = hs
        .iter()
        .map(|&h| {
            let op = ring_operator(h, 5.0);
            let v = op.solve(&source, z).unwrap();
            let mesh = op.problem().mesh.clone();
            let values = vertex_values(&mesh, &v.coefficients);
            (mesh, values)
        })
        .collect();
    let (fine_mesh, fine) = fields.last().unwrap();
    let errors: Vec<f64> = fields[..3]
        .iter()
        .map(|(m, v)| {
            let on_fine = interpolate_to(m, v, fine_mesh).unwrap();
            relative_l2(fine_mesh, &on_fine, fine)
        })
        .collect();
    let order = loglog_slope(&hs[..3], &errors);
    assert!(order >= 1.9, "observed order {order}, errors {errors:?}");
}

#[test]
fn solution_is_smooth_along_an_arc() {
    let op = ring_operator(0.05, 5.0);
    let load = op.load(&SourceSpec::ring());
    let v = |t: f64| op.solve_log(&load, Complex64::new(0.0, t)).unwrap().coefficients;
    let mesh = op.mesh();
    let derivative = |t: f64, d: f64| -> Vec<Complex64> {
        v(t + d)
            .iter()
            .zip(v(t - d))
            .map(|(a, b)| (a - b) / (2.0 * d))
            .collect()
    };
    let mut bound: f64 = 0.0;
    for j in 0..9 {
        let t = -PI + 2.0 * PI * j as f64 / 9.0 + 0.1;
        let d1 = vertex_values(mesh, &derivative(t, 1e-3));
        let d2 = vertex_values(mesh, &derivative(t, 5e-4));
        let rel = relative_l2(mesh, &d1, &d2);
        assert!(rel < 1e-4, "difference quotients disagree at t = {t}: {rel:e}");
        bound = bound.max(l2_norm(mesh, &d2));
    }
    let scale = l2_norm(mesh, &vertex_values(mesh, &v(0.3)));
    assert!(bound < 100.0 * scale, "derivative bound {bound:e} vs field {scale:e}");
}

#[test]
fn matches_bloch_transform_of_absorbing_oracle() {
    let eps = 1e-3;
    let mesh = Arc::new(lapwg_core::build_structured_mesh(0.05).unwrap());
    let problem = CellProblem::with_absorption(mesh.clone(), MediumSpec::ring(), 5.0, eps).unwrap();
    let source = SourceSpec::ring();
    let strip = TruncatedStrip::new(mesh.clone(), 15).unwrap();
    let field = solve_absorbing(&problem, &source, &strip).unwrap();
    let op = CellOperator::new(problem).unwrap();
    for t in [0.0, 0.7, 2.0, -2.9] {
        let z = unit(t);
        let w = op.solve(&source, z).unwrap().w_at_vertices(&mesh);
        let transform = bloch_transform_truncated(&field, z, 15).unwrap();
        let rel = relative_l2(&mesh, &transform, &w);
        assert!(rel < 5e-2, "t = {t}: relative error {rel:e}");
    }
}

#[test]
fn reciprocal_multipliers_have_equal_indicators() {
    let op = ring_operator(0.1, 17.0);
    for (r, t) in [(0.9, 0.3), (1.2, 0.95), (0.5, -2.0), (1.0, 0.9576)] {
        let z = Complex64::from_polar(r, t);
        let a = op.singularity_indicator(z).unwrap();
        let b = op.singularity_indicator(z.inv()).unwrap();
        assert!((a / b - 1.0).abs() < 5e-2, "z = {z}: {a:e} vs {b:e}");
    }
}

fn medium(a: f64, b: f64) -> MediumSpec {
    MediumSpec::new("random", 1.0 - a.abs(), move |x| {
        1.0 + a * (2.0 * PI * x[0]).cos() * (PI * b * x[1]).sin()
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn hermitian_on_unit_circle(alpha in -PI..PI, k2 in 0.1f64..40.0, a in -0.5f64..0.5, b in 0.0f64..3.0) {
        let mesh = Arc::new(UnitCellMesh::structured(8, 8));
        let op = CellOperator::new(CellProblem::new(mesh, medium(a, b), k2).unwrap()).unwrap();
        let m = op.matrix(Complex64::new(0.0, alpha));
        prop_assert!(m.hermitian_defect() < 1e-12);
    }

    #[test]
    fn conjugate_parameter_gives_conjugate_solution(r in 0.6f64..1.6, t in 0.1f64..3.0) {
        let op = ring_operator(0.125, 5.0);
        let z = Complex64::from_polar(r, t);
        let v = op.solve(&SourceSpec::ring(), z).unwrap();
        let vc = op.solve(&SourceSpec::ring(), z.conj()).unwrap();
        let diff: f64 = v.coefficients.iter().zip(&vc.coefficients).map(|(a, b)| (a.conj() - b).norm()).fold(0.0, f64::max);
        let scale: f64 = v.coefficients.iter().map(|a| a.norm()).fold(0.0, f64::max);
        prop_assert!(diff <= 1e-10 * scale);
    }

    #[test]
    fn indicator_is_invariant_under_inversion(r in 0.5f64..2.0, t in -PI..PI) {
        let op = ring_operator(0.125, 17.0);
        let z = Complex64::from_polar(r, t);
        let a = op.singularity_indicator(z).unwrap();
        let b = op.singularity_indicator(z.inv()).unwrap();
        prop_assert!((a / b - 1.0).abs() < 5e-2);
    }
}
