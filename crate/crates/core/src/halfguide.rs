//! The half-guide Dirichlet problem on `x1 > 1/2`: a source `f` in the unit
//! cell is recovered from the Dirichlet data on `Gamma_1 = {1/2} x (0, 1)` by
//! Tikhonov regularization of the trace operator `A f = u_f|_{Gamma_1}`, and
//! the full-guide solution for `f` is restricted to the cells `n >= 1`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use faer::{Mat, Side};
use num_complex::Complex64;

use crate::cell::CellOperator;
use crate::contour::Contour;
use crate::dense::thin_svd;
use crate::error::{invalid, LapError, Result};
use crate::fullguide::{solve_full_many, LapSolution, SolveConfig};
use crate::medium::{smooth_cutoff, SourceSpec};
use crate::mesh::UnitCellMesh;

/// Sweep points with a relative mismatch above this fail.
pub const MISMATCH_LIMIT: f64 = 0.5;

/// Nodal values on `Gamma_1`, ascending in `x2`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceVector {
    pub x2: Vec<f64>,
    pub values: Vec<Complex64>,
}

impl TraceVector {
    pub fn gamma1_nodes(mesh: &UnitCellMesh) -> Vec<f64> {
        mesh.right_nodes.iter().map(|&v| mesh.vertices[v][1]).collect()
    }

    /// Trace of a vertex field of the unit cell.
    pub fn from_field(mesh: &UnitCellMesh, field: &[Complex64]) -> Self {
        TraceVector {
            x2: Self::gamma1_nodes(mesh),
            values: mesh.right_nodes.iter().map(|&v| field[v]).collect(),
        }
    }

    /// Linear interpolation of samples `(x2, value)` (ascending `x2`, covering
    /// `[0, 1]`) to the nodes of `mesh`.
    pub fn from_samples(mesh: &UnitCellMesh, samples: &[(f64, Complex64)]) -> Result<Self> {
        if samples.len() < 2 {
            return Err(invalid("trace data needs at least two samples"));
        }
        if samples.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(invalid("trace samples must be strictly ascending in x2"));
        }
        let (lo, hi) = (samples[0].0, samples[samples.len() - 1].0);
        if lo > 1e-12 || hi < 1.0 - 1e-12 {
            return Err(invalid(format!("trace samples cover [{lo}, {hi}], not [0, 1]")));
        }
        if samples.iter().any(|s| !s.1.is_finite()) {
            return Err(invalid("trace samples must be finite"));
        }
        let x2 = Self::gamma1_nodes(mesh);
        let values = x2
            .iter()
            .map(|&y| {
                let k = samples.partition_point(|s| s.0 <= y).clamp(1, samples.len() - 1);
                let (a, b) = (samples[k - 1], samples[k]);
                let s = (y - a.0) / (b.0 - a.0);
                a.1 * (1.0 - s) + b.1 * s
            })
            .collect();
        Ok(TraceVector { x2, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `x2, re_phi, im_phi`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x2,re_phi,im_phi\n");
        for (y, v) in self.x2.iter().zip(&self.values) {
            let _ = writeln!(out, "{y:.16e},{:.16e},{:.16e}", v.re, v.im);
        }
        out
    }
}

/// Consistent P1 mass matrix on the nodes `x2`.
pub fn trace_mass(x2: &[f64]) -> Mat<Complex64> {
    let n = x2.len();
    let mut m = Mat::<Complex64>::zeros(n, n);
    for k in 0..n.saturating_sub(1) {
        let len = x2[k + 1] - x2[k];
        m[(k, k)] += Complex64::new(len / 3.0, 0.0);
        m[(k + 1, k + 1)] += Complex64::new(len / 3.0, 0.0);
        m[(k, k + 1)] += Complex64::new(len / 6.0, 0.0);
        m[(k + 1, k)] += Complex64::new(len / 6.0, 0.0);
    }
    m
}

fn weighted_norm(gram: &Mat<Complex64>, v: &[Complex64]) -> f64 {
    let n = v.len();
    let mut s = 0.0;
    for i in 0..n {
        let mut row = Complex64::new(0.0, 0.0);
        for j in 0..n {
            row += gram[(i, j)] * v[j];
        }
        s += (v[i].conj() * row).re;
    }
    s.max(0.0).sqrt()
}

/// Modes `sin(p pi (x1 + 1/2)) cos(r pi x2) chi(x1)`, `p = 1..P1`,
/// `r = 0..R1-1`, row-major in `(p, r)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SourceBasis {
    pub p1: usize,
    pub r1: usize,
}

/// `chi(x1) = 1` for `|x1| <= 0.25`, 0 for `|x1| >= 0.45`.
pub fn basis_cutoff(x1: f64) -> f64 {
    smooth_cutoff(x1.abs(), 0.25, 0.45)
}

impl SourceBasis {
    pub fn new(p1: usize, r1: usize) -> Result<Self> {
        if p1 == 0 || r1 == 0 {
            return Err(invalid(format!("basis needs P1, R1 >= 1, got {p1}, {r1}")));
        }
        Ok(SourceBasis { p1, r1 })
    }

    pub fn len(&self) -> usize {
        self.p1 * self.r1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(p, r)` of basis function `l` (0-based).
    pub fn indices(&self, l: usize) -> (usize, usize) {
        (l / self.r1 + 1, l % self.r1)
    }

    pub fn function(&self, l: usize) -> SourceSpec {
        let (p, r) = self.indices(l);
        SourceSpec::real(format!("basis p={p} r={r}"), move |x| {
            (p as f64 * PI * (x[0] + 0.5)).sin() * (r as f64 * PI * x[1]).cos() * basis_cutoff(x[0])
        })
    }

    pub fn functions(&self) -> Vec<SourceSpec> {
        (0..self.len()).map(|l| self.function(l)).collect()
    }

    /// Every mode has at least four mesh intervals per half period.
    pub fn check_resolution(&self, mesh: &UnitCellMesh) -> Result<()> {
        let (n1, n2) = mesh.grid();
        let limit = (n1.min(n2) as f64) / 4.0;
        if self.p1 as f64 > limit || (self.r1 - 1) as f64 > limit {
            return Err(invalid(format!(
                "basis P1 = {}, R1 = {} is not resolved on a {n1}x{n2} mesh (limit {limit})",
                self.p1, self.r1
            )));
        }
        Ok(())
    }

    /// `sum_l c_l phi_l`.
    pub fn combine(&self, c: &[Complex64]) -> SourceSpec {
        let terms = c.iter().enumerate().map(|(l, &cl)| (cl, self.function(l))).collect();
        SourceSpec::combination(terms)
    }
}

/// Columns `A phi_l` on the `Gamma_1` nodes, plus the trace Gram matrix.
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    pub columns: Mat<Complex64>,
    pub gram: Mat<Complex64>,
}

impl OperatorMatrix {
    pub fn new(columns: Mat<Complex64>, gram: Mat<Complex64>) -> Result<Self> {
        if gram.nrows() != columns.nrows() || gram.ncols() != columns.nrows() {
            return Err(invalid("Gram matrix does not match the trace dimension"));
        }
        Ok(OperatorMatrix { columns, gram })
    }

    pub fn apply(&self, c: &[Complex64]) -> Vec<Complex64> {
        (0..self.columns.nrows())
            .map(|i| (0..self.columns.ncols()).map(|l| self.columns[(i, l)] * c[l]).sum())
            .collect()
    }

    pub fn column_norms(&self) -> Vec<f64> {
        (0..self.columns.ncols())
            .map(|l| {
                weighted_norm(
                    &self.gram,
                    &(0..self.columns.nrows())
                        .map(|i| self.columns[(i, l)])
                        .collect::<Vec<_>>(),
                )
            })
            .collect()
    }

    /// Singular values of the weighted matrix, descending.
    pub fn singular_values(&self) -> Result<Vec<f64>> {
        Ok(thin_svd(&self.weighted()?.0)?.s)
    }

    /// `(L^H Phi, L^H)` with `gram = L L^H`.
    fn weighted(&self) -> Result<(Mat<Complex64>, Mat<Complex64>)> {
        let llt = self
            .gram
            .llt(Side::Lower)
            .map_err(|e| LapError::NumericalFailure(format!("trace Gram matrix is not positive definite: {e:?}")))?;
        let lh = llt.L().adjoint().to_owned();
        Ok((&lh * &self.columns, lh))
    }
}

/// `A f` on `Gamma_1`: the trace of the cell-0 field of the full-guide
/// solution.
pub fn apply_a(op: &CellOperator, f: &SourceSpec, contour: &Contour, config: &SolveConfig) -> Result<TraceVector> {
    let cfg = SolveConfig {
        cells: (0, 0),
        ..config.clone()
    };
    let sol = solve_full_many(op, std::slice::from_ref(f), contour, &cfg)?
        .pop()
        .expect("one source");
    Ok(TraceVector::from_field(
        op.mesh(),
        sol.cell(0).expect("cell 0 requested"),
    ))
}

/// Full-guide solutions of every basis function on `cells` (which must
/// include 0) and the operator matrix from their cell-0 traces.
pub fn build_operator_matrix_with_fields(
    op: &CellOperator,
    basis: &SourceBasis,
    contour: &Contour,
    config: &SolveConfig,
    cells: (i64, i64),
) -> Result<(OperatorMatrix, Vec<LapSolution>)> {
    if basis.is_empty() {
        return Err(invalid("basis is empty"));
    }
    if !(cells.0 <= 0 && cells.1 >= 0) {
        return Err(invalid("the cell range must contain cell 0"));
    }
    let cfg = SolveConfig {
        cells,
        ..config.clone()
    };
    let sols = solve_full_many(op, &basis.functions(), contour, &cfg)?;
    let mesh = op.mesh();
    let traces: Vec<TraceVector> = sols
        .iter()
        .map(|s| TraceVector::from_field(mesh, s.cell(0).expect("cell 0")))
        .collect();
    let m = traces[0].len();
    let columns = Mat::from_fn(m, traces.len(), |i, l| traces[l].values[i]);
    let gram = trace_mass(&traces[0].x2);
    Ok((OperatorMatrix::new(columns, gram)?, sols))
}

pub fn build_operator_matrix(
    op: &CellOperator,
    basis: &SourceBasis,
    contour: &Contour,
    config: &SolveConfig,
) -> Result<OperatorMatrix> {
    Ok(build_operator_matrix_with_fields(op, basis, contour, config, (0, 0))?.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TikhonovSolution {
    pub alpha: f64,
    pub coefficients: Vec<Complex64>,
    /// Weighted `|Phi c - phi|`.
    pub residual_norm: f64,
    /// Euclidean `|c|`.
    pub solution_norm: f64,
}

/// `c = sum_n sigma_n / (sigma_n^2 + alpha) <u_n, phi> v_n` from the SVD of
/// the mass-weighted operator matrix.
pub fn tikhonov_solve(phi_mat: &OperatorMatrix, phi: &[Complex64], alpha: f64) -> Result<TikhonovSolution> {
    Ok(tikhonov_sweep(phi_mat, phi, &[alpha])?.pop().expect("one alpha"))
}

/// [`tikhonov_solve`] for several `alpha` with one SVD.
pub fn tikhonov_sweep(phi_mat: &OperatorMatrix, phi: &[Complex64], alphas: &[f64]) -> Result<Vec<TikhonovSolution>> {
    if let Some(a) = alphas.iter().find(|a| !(**a > 0.0) || !a.is_finite()) {
        return Err(invalid(format!("regularization parameter must be positive, got {a}")));
    }
    let m = phi_mat.columns.nrows();
    if phi.len() != m {
        return Err(invalid(format!(
            "trace has {} values, operator matrix has {m} rows",
            phi.len()
        )));
    }
    let (weighted, lh) = phi_mat.weighted()?;
    let phi_w: Vec<Complex64> = (0..m).map(|i| (0..m).map(|j| lh[(i, j)] * phi[j]).sum()).collect();
    let svd = thin_svd(&weighted)?;
    let k = svd.s.len();
    let proj: Vec<Complex64> = (0..k)
        .map(|n| (0..m).map(|i| svd.u[(i, n)].conj() * phi_w[i]).sum())
        .collect();
    let ncols = phi_mat.columns.ncols();
    Ok(alphas
        .iter()
        .map(|&alpha| {
            let mut c = vec![Complex64::new(0.0, 0.0); ncols];
            for n in 0..k {
                let f = svd.s[n] / (svd.s[n] * svd.s[n] + alpha);
                c.iter_mut()
                    .enumerate()
                    .for_each(|(l, cl)| *cl += f * proj[n] * svd.v[(l, n)]);
            }
            let r: Vec<Complex64> = phi_mat.apply(&c).iter().zip(phi).map(|(a, b)| a - b).collect();
            TikhonovSolution {
                alpha,
                residual_norm: weighted_norm(&phi_mat.gram, &r),
                solution_norm: c.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt(),
                coefficients: c,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub alpha: f64,
    pub mismatch: f64,
    pub residual_norm: f64,
    pub solution_norm: f64,
}

#[derive(Debug, Clone)]
pub struct HalfSolution {
    /// Cells `1..=n_max`.
    pub solution: LapSolution,
    pub alpha: f64,
    pub gamma1_mismatch: f64,
    pub coefficients: Vec<Complex64>,
    pub source: SourceSpec,
    pub sweep: Vec<SweepPoint>,
}

/// Relative weighted distance `|a - b| / |b|`, absolute when `b = 0`.
fn relative_mismatch(gram: &Mat<Complex64>, a: &[Complex64], b: &[Complex64]) -> f64 {
    let d: Vec<Complex64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let nd = weighted_norm(gram, &d);
    let nb = weighted_norm(gram, b);
    if nb > 0.0 {
        nd / nb
    } else {
        nd
    }
}

/// Solves the half-guide problem for Dirichlet data `phi` on cells
/// `1..=n_max`. The full-guide solution of `f_alpha = sum c_l phi_l` is
/// formed as the same combination of the basis solutions, which is exact by
/// linearity and costs no further cell solves.
pub fn solve_half(
    op: &CellOperator,
    phi: &TraceVector,
    basis: &SourceBasis,
    sweep: &[f64],
    contour: &Contour,
    config: &SolveConfig,
    n_max: i64,
) -> Result<HalfSolution> {
    if sweep.is_empty() {
        return Err(invalid("regularization sweep is empty"));
    }
    if n_max < 1 {
        return Err(invalid(format!("n_max must be at least 1, got {n_max}")));
    }
    if phi.values.iter().any(|v| !v.is_finite()) {
        return Err(invalid("trace data must be finite"));
    }
    let expected = TraceVector::gamma1_nodes(op.mesh());
    if phi.x2.len() != expected.len() || phi.x2.iter().zip(&expected).any(|(a, b)| (a - b).abs() > 1e-12) {
        return Err(invalid("trace data is not given on the Gamma_1 nodes of the mesh"));
    }
    basis.check_resolution(op.mesh())?;
    let (mat, fields) = build_operator_matrix_with_fields(op, basis, contour, config, (0, n_max))?;
    let sols = tikhonov_sweep(&mat, &phi.values, sweep)?;
    let mut points = Vec::with_capacity(sols.len());
    let mut best: Option<(usize, f64)> = None;
    for (k, s) in sols.iter().enumerate() {
        let mismatch = relative_mismatch(&mat.gram, &mat.apply(&s.coefficients), &phi.values);
        points.push(SweepPoint {
            alpha: s.alpha,
            mismatch,
            residual_norm: s.residual_norm,
            solution_norm: s.solution_norm,
        });
        if mismatch.is_finite() && best.is_none_or(|(_, m)| mismatch < m) {
            best = Some((k, mismatch));
        }
    }
    let (k, mismatch) = match best {
        Some(b) if b.1 <= MISMATCH_LIMIT => b,
        _ => {
            let diag = points
                .iter()
                .map(|p| format!("alpha={:.1e}: mismatch={:.3e}", p.alpha, p.mismatch))
                .collect::<Vec<_>>()
                .join(", ");
            return Err(LapError::RecoveryFailure(format!(
                "no regularization parameter reproduces the data: {diag}"
            )));
        }
    };
    let c = &sols[k].coefficients;
    let n_vertices = op.mesh().vertices.len();
    let mut cells = BTreeMap::new();
    for n in 1..=n_max {
        let mut u = vec![Complex64::new(0.0, 0.0); n_vertices];
        for (cl, f) in c.iter().zip(&fields) {
            u.iter_mut()
                .zip(f.cell(n).expect("requested cell"))
                .for_each(|(ui, fi)| *ui += cl * fi);
        }
        cells.insert(n, u);
    }
    let solution = LapSolution {
        cells,
        metadata: fields[0].metadata.clone(),
    };
    Ok(HalfSolution {
        solution,
        alpha: sols[k].alpha,
        gamma1_mismatch: mismatch,
        coefficients: c.clone(),
        source: basis.combine(c),
        sweep: points,
    })
}

impl HalfSolution {
    /// `l, p, r, re_c, im_c`.
    pub fn coefficients_csv(&self, basis: &SourceBasis) -> String {
        let mut out = String::from("l,p,r,re_c,im_c\n");
        for (l, c) in self.coefficients.iter().enumerate() {
            let (p, r) = basis.indices(l);
            let _ = writeln!(out, "{},{p},{r},{:.16e},{:.16e}", l + 1, c.re, c.im);
        }
        out
    }

    /// `alpha, mismatch, residual, solution_norm`.
    pub fn sweep_csv(&self) -> String {
        let mut out = String::from("alpha,mismatch,residual,solution_norm\n");
        for p in &self.sweep {
            let _ = writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e}",
                p.alpha, p.mismatch, p.residual_norm, p.solution_norm
            );
        }
        out
    }
}
