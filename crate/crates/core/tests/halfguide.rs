mod common;

use common::ring_operator;
use lapwg_core::contour::{build_contour, Contour, DeltaPolicy};
use lapwg_core::fullguide::{solve_full_many, SolveConfig};
use lapwg_core::halfguide::{apply_a, build_operator_matrix, solve_half, tikhonov_sweep, SourceBasis, TraceVector};
use lapwg_core::{CellOperator, Complex64, SourceSpec};

fn setup() -> (CellOperator, Contour, SolveConfig, SourceBasis) {
    let op = ring_operator(0.05, 5.0);
    let contour = build_contour(&[], DeltaPolicy::default()).unwrap();
    (
        op,
        contour,
        SolveConfig::new(16, 6, (0, 0)),
        SourceBasis::new(3, 4).unwrap(),
    )
}

fn sweep() -> Vec<f64> {
    (0..13).map(|k| 10f64.powf(-8.0 + 0.5 * k as f64)).collect()
}

#[test]
fn apply_a_is_linear_and_matches_full_solve() {
    let (op, contour, config, basis) = setup();
    let f1 = basis.function(0);
    let f2 = SourceSpec::ring();
    let a = Complex64::new(-0.4, 2.0);
    let combo = SourceSpec::combination(vec![(a, f1.clone()), (Complex64::new(1.0, 0.0), f2.clone())]);
    let t1 = apply_a(&op, &f1, &contour, &config).unwrap();
    let t2 = apply_a(&op, &f2, &contour, &config).unwrap();
    let t3 = apply_a(&op, &combo, &contour, &config).unwrap();
    let scale = t3.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
    for i in 0..t3.len() {
        assert!((t3.values[i] - a * t1.values[i] - t2.values[i]).norm() <= 1e-10 * scale);
    }
    let full = solve_full_many(&op, &[f2], &contour, &SolveConfig::new(16, 6, (-1, 1)))
        .unwrap()
        .remove(0);
    let trace = TraceVector::from_field(op.mesh(), full.cell(0).unwrap());
    assert_eq!(trace, t2);
}

#[test]
fn operator_matrix_columns_are_basis_images() {
    let (op, contour, config, basis) = setup();
    let mat = build_operator_matrix(&op, &basis, &contour, &config).unwrap();
    assert_eq!(mat.columns.ncols(), basis.len());
    for l in [0, 5, basis.len() - 1] {
        let t = apply_a(&op, &basis.function(l), &contour, &config).unwrap();
        for i in 0..t.len() {
            assert_eq!(mat.columns[(i, l)], t.values[i], "column {l}, row {i}");
        }
    }
    let norms = mat.column_norms();
    assert!(norms.iter().all(|n| n.is_finite() && *n > 0.0), "{norms:?}");
    let s = mat.singular_values().unwrap();
    assert!(s.windows(2).all(|w| w[1] <= w[0]));
    assert!(s[s.len() - 1] < 1e-2 * s[0], "{s:?}");
}

#[test]
fn tikhonov_sweep_is_monotone_on_the_ring_problem() {
    let (op, contour, config, basis) = setup();
    let mat = build_operator_matrix(&op, &basis, &contour, &config).unwrap();
    let phi = apply_a(&op, &SourceSpec::ring(), &contour, &config).unwrap();
    let sols = tikhonov_sweep(&mat, &phi.values, &sweep()).unwrap();
    for w in sols.windows(2) {
        assert!(w[1].residual_norm >= w[0].residual_norm * (1.0 - 1e-12));
        assert!(w[1].solution_norm <= w[0].solution_norm * (1.0 + 1e-12));
    }
}

#[test]
fn zero_data_gives_zero_half_guide_field() {
    let (op, contour, config, basis) = setup();
    let phi = TraceVector::from_field(op.mesh(), &vec![Complex64::new(0.0, 0.0); op.mesh().vertices.len()]);
    let half = solve_half(&op, &phi, &basis, &sweep(), &contour, &config, 3).unwrap();
    let max = half
        .solution
        .cells
        .values()
        .flatten()
        .map(|u| u.norm())
        .fold(0.0, f64::max);
    assert!(max <= 1e-6, "{max:e}");
    assert_eq!(half.solution.cells.keys().cloned().collect::<Vec<_>>(), vec![1, 2, 3]);
}

#[test]
fn rejects_empty_sweep_and_foreign_traces() {
    let (op, contour, config, basis) = setup();
    let phi = TraceVector {
        x2: vec![0.0, 1.0],
        values: vec![Complex64::new(1.0, 0.0); 2],
    };
    assert!(solve_half(&op, &phi, &basis, &sweep(), &contour, &config, 3).is_err());
    let good = apply_a(&op, &SourceSpec::ring(), &contour, &config).unwrap();
    assert!(solve_half(&op, &good, &basis, &[], &contour, &config, 3).is_err());
}
