//! Brute-force reference solutions: the absorbing problem on a long strip
//! truncated by Dirichlet walls, extrapolation of the absorption to zero, and
//! a truncated forward Floquet-Bloch transform.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;

use crate::cell::{solve_refined, CellProblem};
use crate::error::{invalid, LapError, Result};
use crate::fem::P1Space;
use crate::fullguide::l2_norm;
use crate::medium::SourceSpec;
use crate::mesh::UnitCellMesh;
use crate::quadrature::{apply_rule, SegmentRule};
use crate::sparse::Factorizer;

/// Smallest admissible half-length in cells.
pub const MIN_HALF_LENGTH: usize = 5;
/// Above this ratio of successive differences the extrapolation is flagged.
pub const EXTRAPOLATION_RATIO_LIMIT: f64 = 0.9;

/// `(-R - 1/2, R + 1/2) x (0, 1)` meshed by `2R + 1` copies of the unit-cell
/// mesh, with homogeneous Dirichlet conditions on both ends.
#[derive(Debug, Clone)]
pub struct TruncatedStrip {
    pub r: usize,
    pub mesh: Arc<UnitCellMesh>,
    /// Strip vertex `(column, row)` -> dof, `None` on the end walls.
    vertex_dof: Vec<Option<usize>>,
    n_columns: usize,
    n_dofs: usize,
}

impl TruncatedStrip {
    pub fn new(mesh: Arc<UnitCellMesh>, r: usize) -> Result<Self> {
        if r < MIN_HALF_LENGTH {
            return Err(invalid(format!(
                "strip half-length must be at least {MIN_HALF_LENGTH}, got {r}"
            )));
        }
        let (n1, n2) = mesh.grid();
        let n_columns = (2 * r + 1) * n1 + 1;
        let mut vertex_dof = Vec::with_capacity(n_columns * (n2 + 1));
        let mut next = 0;
        for _j in 0..=n2 {
            for g in 0..n_columns {
                if g == 0 || g + 1 == n_columns {
                    vertex_dof.push(None);
                } else {
                    vertex_dof.push(Some(next));
                    next += 1;
                }
            }
        }
        Ok(TruncatedStrip {
            r,
            mesh,
            vertex_dof,
            n_columns,
            n_dofs: next,
        })
    }

    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }

    pub fn cell_range(&self) -> (i64, i64) {
        (-(self.r as i64), self.r as i64)
    }

    /// Strip vertex under vertex `v` of the unit-cell mesh in cell `n`.
    fn strip_vertex(&self, v: usize, n: i64) -> usize {
        let (n1, _) = self.mesh.grid();
        let (i, j) = (v % (n1 + 1), v / (n1 + 1));
        let g = (n + self.r as i64) as usize * n1 + i;
        j * self.n_columns + g
    }

    /// Elements in local cell coordinates (the medium is periodic, the
    /// element matrices are translation invariant) and their strip dofs.
    fn space(&self, cells: impl Iterator<Item = i64>) -> P1Space {
        let mut coords = Vec::new();
        let mut dofs = Vec::new();
        let cells: Vec<i64> = cells.collect();
        for &n in &cells {
            for (t, tri) in self.mesh.triangles.iter().enumerate() {
                coords.push(self.mesh.triangle_coords(t));
                dofs.push(tri.map(|v| self.vertex_dof[self.strip_vertex(v, n)]));
            }
        }
        P1Space::new(self.n_dofs, coords, dofs)
    }

    /// Vertex field of cell `n` from strip dof values.
    pub fn cell_field(&self, values: &[Complex64], n: i64) -> Vec<Complex64> {
        (0..self.mesh.vertices.len())
            .map(|v| self.vertex_dof[self.strip_vertex(v, n)].map_or(Complex64::new(0.0, 0.0), |d| values[d]))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StripField {
    pub epsilon: f64,
    pub r: usize,
    pub residual: f64,
    /// Vertex fields of every strip cell, pulled back to the unit cell.
    pub cells: BTreeMap<i64, Vec<Complex64>>,
}

impl StripField {
    pub fn cell_norms(&self, mesh: &UnitCellMesh) -> Vec<(i64, f64)> {
        self.cells.iter().map(|(n, v)| (*n, l2_norm(mesh, v))).collect()
    }
}

/// Solves `Delta u + (k^2 + i eps) q u = f` on the strip with one sparse
/// direct factorization.
pub fn solve_absorbing(problem: &CellProblem, source: &SourceSpec, strip: &TruncatedStrip) -> Result<StripField> {
    let eps = problem.absorption;
    if !(eps > 0.0) {
        return Err(invalid(format!("the absorbing oracle needs eps > 0, got {eps}")));
    }
    if !Arc::ptr_eq(&problem.mesh, &strip.mesh) && *problem.mesh != *strip.mesh {
        return Err(invalid("strip and problem use different unit-cell meshes"));
    }
    let (lo, hi) = strip.cell_range();
    let space = strip.space(lo..=hi);
    let kq = Complex64::new(problem.k2, eps);
    let k = space.stiffness();
    let q = space.weighted_mass(&problem.medium)?;
    let mut a = k.to_complex(Complex64::new(1.0, 0.0));
    a.values.iter_mut().zip(&q.values).for_each(|(v, qv)| *v -= kq * qv);
    let load = strip.space(std::iter::once(0)).source_load(source, 0.0);
    let b = load.rhs(Complex64::new(0.0, 0.0));
    let values = if load.is_zero() {
        (vec![Complex64::new(0.0, 0.0); strip.n_dofs], 0.0)
    } else {
        let lu = Factorizer::new(space.pattern.clone())?.lu(&a)?;
        solve_refined(&a, &lu, &b)?
    };
    let cells = (lo..=hi).map(|n| (n, strip.cell_field(&values.0, n))).collect();
    Ok(StripField {
        epsilon: eps,
        r: strip.r,
        residual: values.1,
        cells,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extrapolation {
    pub cells: BTreeMap<i64, Vec<Complex64>>,
    /// `|u(e3) - u(e2)| / |u(e2) - u(e1)|` on the cells in common, for the
    /// three smallest absorptions.
    pub ratio: f64,
    pub warning: Option<String>,
}

/// Pointwise polynomial extrapolation to `eps = 0` by Neville's scheme over
/// the given absorption samples (three samples give the quadratic
/// Richardson combination). Only cells present in every sample are kept.
pub fn extrapolate_lap(
    mesh: &UnitCellMesh,
    samples: &[(f64, &BTreeMap<i64, Vec<Complex64>>)],
) -> Result<Extrapolation> {
    if samples.len() < 3 {
        return Err(invalid(format!(
            "extrapolation needs three absorption values, got {}",
            samples.len()
        )));
    }
    for w in samples.windows(2) {
        if !(w[1].0 < w[0].0 && w[1].0 > 0.0) {
            return Err(invalid("absorption values must be positive and strictly decreasing"));
        }
    }
    let eps: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let common: Vec<i64> = samples[0]
        .1
        .keys()
        .cloned()
        .filter(|n| samples.iter().all(|s| s.1.contains_key(n)))
        .collect();
    let mut cells = BTreeMap::new();
    for &n in &common {
        let fields: Vec<&Vec<Complex64>> = samples.iter().map(|s| &s.1[&n]).collect();
        let len = fields[0].len();
        let mut out = Vec::with_capacity(len);
        let mut p = vec![Complex64::new(0.0, 0.0); eps.len()];
        for i in 0..len {
            for (k, f) in fields.iter().enumerate() {
                p[k] = f[i];
            }
            // Neville at 0, written so that equal samples are reproduced exactly.
            for m in 1..eps.len() {
                for k in 0..eps.len() - m {
                    p[k] = p[k + 1] + (p[k + 1] - p[k]) * (eps[k + m] / (eps[k] - eps[k + m]));
                }
            }
            out.push(p[0]);
        }
        cells.insert(n, out);
    }
    let m = samples.len();
    let diff_norm = |a: usize, b: usize| -> f64 {
        common
            .iter()
            .map(|n| {
                let d: Vec<Complex64> = samples[a].1[n]
                    .iter()
                    .zip(&samples[b].1[n])
                    .map(|(x, y)| x - y)
                    .collect();
                l2_norm(mesh, &d).powi(2)
            })
            .sum::<f64>()
            .sqrt()
    };
    let num = diff_norm(m - 1, m - 2);
    let den = diff_norm(m - 2, m - 3);
    let ratio = if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        num / den
    };
    let warning = (ratio > EXTRAPOLATION_RATIO_LIMIT)
        .then(|| format!("extrapolation unreliable: difference ratio {ratio:.3} exceeds {EXTRAPOLATION_RATIO_LIMIT}"));
    Ok(Extrapolation { cells, ratio, warning })
}

/// `sum_{|n| <= n_max} u(x1 + n, x2) z^{-n}` at the unit-cell vertices.
pub fn bloch_transform_truncated(field: &StripField, z: Complex64, n_max: usize) -> Result<Vec<Complex64>> {
    if n_max > field.r {
        return Err(invalid(format!(
            "n_max = {n_max} exceeds the strip half-length {}",
            field.r
        )));
    }
    if z == Complex64::new(0.0, 0.0) || !z.is_finite() {
        return Err(invalid(format!("transform parameter must be nonzero, got {z}")));
    }
    let len = field.cells[&0].len();
    let mut out = vec![Complex64::new(0.0, 0.0); len];
    let n_max = n_max as i64;
    for n in -n_max..=n_max {
        let c = z.powi(-n as i32);
        out.iter_mut().zip(&field.cells[&n]).for_each(|(o, u)| *o += c * u);
    }
    Ok(out)
}

/// `(1 / 2 pi i) oint_{|z| = 1} W(z) z^{n - 1} dz` by the `n_nodes`-point
/// periodic trapezoid rule.
pub fn inverse_transform_on_circle(
    transform: impl Fn(Complex64) -> Result<Vec<Complex64>>,
    n: i64,
    n_nodes: usize,
) -> Result<Vec<Complex64>> {
    let rule = SegmentRule::periodic(-PI, PI, n_nodes)?;
    apply_rule(&rule, |_, t| {
        let z = Complex64::from_polar(1.0, t);
        let w = transform(z)?;
        let c = Complex64::from_polar(1.0 / (2.0 * PI), n as f64 * t);
        Ok(w.into_iter().map(|v| v * c).collect::<Vec<_>>())
    })
    .map_err(|e| match e {
        LapError::Callback { source, .. } => *source,
        other => other,
    })
}
