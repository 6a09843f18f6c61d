//! The LAP solution on the full waveguide,
//! `u(x1 + n, x2) = (1 / 2 pi i) oint w(z, x) z^{n - 1} dz`, evaluated by one
//! cell solve per quadrature node of the contour.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::cell::{CellOperator, CellProblem};
use crate::contour::{build_contour, check_detour_balls, validate_geometry, Contour, ContourPoint, DeltaPolicy};
use crate::dispersion::{compute_diagram_mirrored, find_crossings, Crossing};
use crate::error::{invalid, LapError, Result};
use crate::medium::SourceSpec;
use crate::mesh::UnitCellMesh;
use crate::quadrature::SegmentRule;

/// Default grid size of the dispersion diagram behind an automatic contour.
pub const AUTO_N_ALPHA: usize = 32;
const CONJUGATE_MATCH: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub enum ContourSource {
    /// Crossings located from a dispersion diagram of `n_alpha` points.
    Auto {
        policy: DeltaPolicy,
        n_alpha: usize,
    },
    Explicit(Contour),
}

/// Quadrature and output settings. The mesh size is a property of the cell
/// problem.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveConfig {
    /// Nodes per segment, even.
    pub n_nodes: usize,
    /// Grading order of the non-periodic segments.
    pub n0: usize,
    pub cells: (i64, i64),
    pub contour: ContourSource,
}

impl SolveConfig {
    pub fn new(n_nodes: usize, n0: usize, cells: (i64, i64)) -> Self {
        SolveConfig {
            n_nodes,
            n0,
            cells,
            contour: ContourSource::Auto {
                policy: DeltaPolicy::default(),
                n_alpha: AUTO_N_ALPHA,
            },
        }
    }

    pub fn with_contour(mut self, contour: Contour) -> Self {
        self.contour = ContourSource::Explicit(contour);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_nodes < 4 || self.n_nodes % 2 != 0 {
            return Err(invalid(format!("N must be even and at least 4, got {}", self.n_nodes)));
        }
        if self.n0 < 2 {
            return Err(invalid(format!("N0 must be at least 2, got {}", self.n0)));
        }
        if self.cells.0 > self.cells.1 {
            return Err(invalid(format!(
                "empty cell range [{}, {}]",
                self.cells.0, self.cells.1
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolutionMetadata {
    pub k2: f64,
    pub n_nodes: usize,
    pub n0: usize,
    pub h: f64,
    pub contour: String,
    /// Cell problems factorized.
    pub n_solves: usize,
    /// Nodes filled by conjugating another node's solution.
    pub n_conjugated: usize,
    pub max_residual: f64,
}

/// Nodal values of `u` on every requested cell, pulled back to the vertices
/// of the unit-cell mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct LapSolution {
    pub cells: BTreeMap<i64, Vec<Complex64>>,
    pub metadata: SolutionMetadata,
}

/// One node of the composite rule. `weight` includes the segment orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureNode {
    pub segment: usize,
    pub index: usize,
    pub point: ContourPoint,
    pub weight: f64,
}

impl QuadratureNode {
    /// Coefficient of `w(z, .)` in the sum for cell `n`:
    /// `weight z^{n-1} dz/dt / (2 pi i)`.
    pub fn coefficient(&self, n: i64) -> Complex64 {
        let power = ((n - 1) as f64 * self.point.log_z).exp();
        self.weight * power * self.point.dz / Complex64::new(0.0, 2.0 * PI)
    }
}

/// All nodes with nonzero weight, segment-major. The full circle uses the
/// plain trapezoid rule; other segments use the graded rule of order `n0`.
pub fn contour_nodes(contour: &Contour, n_nodes: usize, n0: usize) -> Result<Vec<QuadratureNode>> {
    let mut nodes = Vec::new();
    for (s, seg) in contour.segments.iter().enumerate() {
        let (a, b) = seg.parameter_range();
        let rule = if contour.is_full_circle() {
            SegmentRule::periodic(a, b, n_nodes)?
        } else {
            SegmentRule::graded(a, b, n_nodes, n0)?
        };
        for (i, (&t, &w)) in rule.nodes.iter().zip(&rule.weights).enumerate() {
            if w == 0.0 {
                continue;
            }
            nodes.push(QuadratureNode {
                segment: s,
                index: i,
                point: seg.point(t),
                weight: w * seg.orientation,
            });
        }
    }
    Ok(nodes)
}

/// Diagram, crossings and contour for the operator's `k^2`.
pub fn auto_contour(op: &CellOperator, policy: DeltaPolicy, n_alpha: usize) -> Result<(Contour, Vec<Crossing>)> {
    let k2 = op.problem().k2;
    let mut n_bands = 4;
    let crossings = loop {
        let diagram = compute_diagram_mirrored(op, n_alpha, n_bands)?;
        let nb = diagram.n_bands();
        let top = diagram.bands.iter().map(|b| b[nb - 1]).fold(f64::INFINITY, f64::min);
        if top > k2 {
            break find_crossings(&diagram, op, k2)?;
        }
        if 4 * (n_bands + 4) > op.n_dofs() {
            return Err(invalid(format!(
                "mesh too coarse to bracket k^2 = {k2} with {n_bands} bands"
            )));
        }
        n_bands += 4;
    };
    let contour = build_contour(&crossings, policy)?;
    let report = validate_geometry(&contour);
    if !report.passed() {
        return Err(LapError::ContourConstruction(format!(
            "generated contour failed validation:\n{}",
            report.to_text()
        )));
    }
    check_detour_balls(&contour, op)?;
    Ok((contour, crossings))
}

pub fn resolve_contour(op: &CellOperator, source: &ContourSource) -> Result<Contour> {
    match source {
        ContourSource::Auto { policy, n_alpha } => Ok(auto_contour(op, *policy, *n_alpha)?.0),
        ContourSource::Explicit(c) => Ok(c.clone()),
    }
}

pub fn solve_full(problem: &CellProblem, source: &SourceSpec, config: &SolveConfig) -> Result<LapSolution> {
    let op = CellOperator::new(problem.clone())?;
    let contour = resolve_contour(&op, &config.contour)?;
    Ok(solve_full_many(&op, std::slice::from_ref(source), &contour, config)?
        .pop()
        .expect("one source"))
}

/// LAP solutions for several sources sharing the node factorizations. Each
/// result is identical to a single-source run.
pub fn solve_full_many(
    op: &CellOperator,
    sources: &[SourceSpec],
    contour: &Contour,
    config: &SolveConfig,
) -> Result<Vec<LapSolution>> {
    config.validate()?;
    let nodes = contour_nodes(contour, config.n_nodes, config.n0)?;
    let loads: Vec<_> = sources.iter().map(|s| op.load(s)).collect();
    let load_refs: Vec<_> = loads.iter().collect();
    let real = op.problem().is_real() && sources.iter().all(|s| s.real_valued);

    // Nodes whose conjugate was already scheduled reuse that solution.
    let mut primary: Vec<usize> = Vec::new();
    let mut mirrors: Vec<Vec<usize>> = Vec::new();
    for (i, node) in nodes.iter().enumerate() {
        let partner = if real {
            primary
                .iter()
                .position(|&j| (nodes[j].point.z - node.point.z.conj()).norm() <= CONJUGATE_MATCH)
        } else {
            None
        };
        match partner {
            Some(p) => mirrors[p].push(i),
            None => {
                primary.push(i);
                mirrors.push(Vec::new());
            }
        }
    }

    let mesh = op.mesh();
    let n_vertices = mesh.vertices.len();
    let cell_ids: Vec<i64> = (config.cells.0..=config.cells.1).collect();
    let mut acc: Vec<Vec<Vec<Complex64>>> =
        vec![vec![vec![Complex64::new(0.0, 0.0); n_vertices]; cell_ids.len()]; sources.len()];
    let mut max_residual: f64 = 0.0;

    let chunk = 2 * rayon::current_num_threads().max(1);
    for block in primary.chunks(chunk).zip(mirrors.chunks(chunk)) {
        let (ids, mirror_ids) = block;
        let solved: Vec<Result<Vec<_>>> = ids
            .par_iter()
            .map(|&i| op.solve_log_many(&load_refs, nodes[i].point.log_z))
            .collect();
        for ((&i, mirror), sols) in ids.iter().zip(mirror_ids).zip(solved) {
            let sols = sols?;
            for (k, sol) in sols.iter().enumerate() {
                max_residual = max_residual.max(sol.residual);
                accumulate(&mut acc[k], &cell_ids, &nodes[i], &sol.w_at_vertices(mesh));
                for &m in mirror {
                    accumulate(&mut acc[k], &cell_ids, &nodes[m], &sol.conjugate().w_at_vertices(mesh));
                }
            }
        }
    }

    let (n1, _) = mesh.grid();
    let metadata = SolutionMetadata {
        k2: op.problem().k2,
        n_nodes: config.n_nodes,
        n0: config.n0,
        h: 1.0 / n1 as f64,
        contour: contour.describe(),
        n_solves: primary.len(),
        n_conjugated: nodes.len() - primary.len(),
        max_residual,
    };
    Ok(acc
        .into_iter()
        .map(|fields| LapSolution {
            cells: cell_ids.iter().cloned().zip(fields).collect(),
            metadata: metadata.clone(),
        })
        .collect())
}

fn accumulate(acc: &mut [Vec<Complex64>], cell_ids: &[i64], node: &QuadratureNode, w: &[Complex64]) {
    for (field, &n) in acc.iter_mut().zip(cell_ids) {
        let c = node.coefficient(n);
        field.iter_mut().zip(w).for_each(|(u, wi)| *u += c * wi);
    }
}

/// `L^2(Omega_0)` norm of a piecewise linear vertex field.
pub fn l2_norm(mesh: &UnitCellMesh, values: &[Complex64]) -> f64 {
    let mut total = 0.0;
    for (t, tri) in mesh.triangles.iter().enumerate() {
        let u = tri.map(|v| values[v]);
        let sum_sq: f64 = u.iter().map(|c| c.norm_sqr()).sum();
        let sq_sum = (u[0] + u[1] + u[2]).norm_sqr();
        total += mesh.area(t) / 12.0 * (sum_sq + sq_sum);
    }
    total.sqrt()
}

/// `|a - b| / |b|` in `L^2(Omega_0)`.
pub fn relative_l2(mesh: &UnitCellMesh, a: &[Complex64], b: &[Complex64]) -> f64 {
    let diff: Vec<Complex64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    l2_norm(mesh, &diff) / l2_norm(mesh, b)
}

/// Piecewise linear interpolant of a vertex field of `from`, evaluated at
/// the vertices of `to`.
pub fn interpolate_to(from: &UnitCellMesh, values: &[Complex64], to: &UnitCellMesh) -> Result<Vec<Complex64>> {
    to.vertices
        .iter()
        .map(|&x| {
            let (t, bary) = from.locate_point(x)?;
            let tri = from.triangles[t];
            Ok((0..3).map(|k| values[tri[k]] * bary[k]).sum())
        })
        .collect()
}

impl LapSolution {
    pub fn cell(&self, n: i64) -> Option<&[Complex64]> {
        self.cells.get(&n).map(|v| v.as_slice())
    }

    pub fn cell_norms(&self, mesh: &UnitCellMesh) -> Vec<(i64, f64)> {
        self.cells.iter().map(|(n, v)| (*n, l2_norm(mesh, v))).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.cells.values().all(|v| v.iter().all(|c| c.is_finite()))
    }

    /// `n, x1, x2, re_u, im_u` with `x1` in unit-cell coordinates.
    pub fn to_csv(&self, mesh: &UnitCellMesh) -> String {
        let mut out = String::from("n,x1,x2,re_u,im_u\n");
        for (n, field) in &self.cells {
            for (x, u) in mesh.vertices.iter().zip(field) {
                let _ = writeln!(out, "{n},{:.16e},{:.16e},{:.16e},{:.16e}", x[0], x[1], u.re, u.im);
            }
        }
        out
    }

    /// Plain `key = value` lines.
    pub fn summary(&self, mesh: &UnitCellMesh) -> String {
        let m = &self.metadata;
        let mut out = String::new();
        let _ = writeln!(out, "k2 = {:.16e}", m.k2);
        let _ = writeln!(out, "N = {}", m.n_nodes);
        let _ = writeln!(out, "N0 = {}", m.n0);
        let _ = writeln!(out, "h = {:.16e}", m.h);
        let _ = writeln!(out, "contour = {}", m.contour);
        let _ = writeln!(out, "cell_solves = {}", m.n_solves);
        let _ = writeln!(out, "conjugated_nodes = {}", m.n_conjugated);
        let _ = writeln!(out, "max_residual = {:.6e}", m.max_residual);
        for (n, norm) in self.cell_norms(mesh) {
            let _ = writeln!(out, "l2_norm[{n}] = {norm:.16e}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contour::build_contour;

    fn stop_band_config(n: usize) -> SolveConfig {
        SolveConfig::new(n, 6, (-1, 1)).with_contour(build_contour(&[], DeltaPolicy::default()).unwrap())
    }

    #[test]
    fn l2_norm_of_linear_function() {
        let mesh = UnitCellMesh::structured(8, 8);
        let u: Vec<Complex64> = mesh.vertices.iter().map(|x| Complex64::new(x[1], 0.0)).collect();
        // int_0^1 x2^2 = 1/3, exact for P1 fields.
        assert!((l2_norm(&mesh, &u) - (1.0f64 / 3.0).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn zero_source_gives_zero_field() {
        let p = CellProblem::ring(0.1, 5.0).unwrap();
        let sol = solve_full(&p, &SourceSpec::zero(), &stop_band_config(8)).unwrap();
        assert!(sol.cells.values().all(|v| v.iter().all(|c| c.norm() == 0.0)));
    }

    #[test]
    fn node_weights_cover_contour() {
        let c = build_contour(&[], DeltaPolicy::default()).unwrap();
        let nodes = contour_nodes(&c, 16, 6).unwrap();
        assert_eq!(nodes.len(), 16);
        // (1 / 2 pi i) oint z^{-1} dz = 1.
        let s: Complex64 = nodes.iter().map(|n| n.coefficient(0)).sum();
        assert!((s - 1.0).norm() < 1e-14);
    }

    #[test]
    fn conjugate_reuse_matches_direct() {
        let p = CellProblem::ring(0.1, 5.0).unwrap();
        let op = CellOperator::new(p).unwrap();
        let contour = build_contour(&[], DeltaPolicy::default()).unwrap();
        let cfg = stop_band_config(8);
        let f = SourceSpec::ring();
        let a = solve_full_many(&op, std::slice::from_ref(&f), &contour, &cfg)
            .unwrap()
            .pop()
            .unwrap();
        let mut g = SourceSpec::ring();
        g.real_valued = false;
        let b = solve_full_many(&op, &[g], &contour, &cfg).unwrap().pop().unwrap();
        assert!(a.metadata.n_conjugated > 0 && b.metadata.n_conjugated == 0);
        for n in -1..=1 {
            assert!(relative_l2(op.mesh(), a.cell(n).unwrap(), b.cell(n).unwrap()) < 1e-12);
        }
    }

    #[test]
    fn interpolation_reproduces_linear_fields() {
        let coarse = UnitCellMesh::structured(4, 3);
        let fine = UnitCellMesh::structured(10, 7);
        let f = |x: [f64; 2]| Complex64::new(2.0 * x[0] - x[1], 0.5 + x[1]);
        let u: Vec<Complex64> = coarse.vertices.iter().map(|&x| f(x)).collect();
        let v = interpolate_to(&coarse, &u, &fine).unwrap();
        for (x, val) in fine.vertices.iter().zip(&v) {
            assert!((val - f(*x)).norm() < 1e-13);
        }
    }
}
