//! The quasi-periodic cell problem.
//!
//! For a spectral parameter `z = exp(L)` the periodic factor
//! `v_z = z^{-x1} w(z, .)` solves
//!
//! ```text
//! int grad v . grad phi + L (v d1 phi - d1 v phi) - ((k^2 + i eps) q + L^2) v phi
//!     = -int z^{-x1} f phi
//! ```
//!
//! for all periodic test functions `phi`. The system matrix is the linear
//! combination `K + L T - L^2 M - (k^2 + i eps) Q` of four real matrices
//! assembled once per mesh and medium.
//!
//! Each solve may be given an explicit logarithm `L` instead of `z`. Along a
//! contour the logarithm is taken from the parameterization, so `w` stays
//! continuous even where the contour crosses the negative real axis.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{invalid, LapError, Result};
use crate::fem::{P1Space, SourceLoad};
use crate::medium::{MediumSpec, SourceSpec};
use crate::mesh::UnitCellMesh;
use crate::sparse::{norm2, CscMatrix, Factorizer, SparseLu};

/// Default near-pole threshold on the singularity indicator.
pub const DEFAULT_POLE_THRESHOLD: f64 = 1e-8;

/// Inverse-iteration sweeps used by the singularity indicator.
const INDICATOR_SWEEPS: usize = 3;

/// Relative residual accepted after a direct solve.
pub const RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct CellProblem {
    pub mesh: Arc<UnitCellMesh>,
    pub medium: MediumSpec,
    pub k2: f64,
    /// Absorption `eps >= 0`; the LAP problem uses 0.
    pub absorption: f64,
}

impl CellProblem {
    pub fn new(mesh: Arc<UnitCellMesh>, medium: MediumSpec, k2: f64) -> Result<Self> {
        Self::with_absorption(mesh, medium, k2, 0.0)
    }

    pub fn with_absorption(mesh: Arc<UnitCellMesh>, medium: MediumSpec, k2: f64, absorption: f64) -> Result<Self> {
        if !(k2 > 0.0) || !k2.is_finite() {
            return Err(invalid(format!("k^2 must be positive, got {k2}")));
        }
        if !(absorption >= 0.0) || !absorption.is_finite() {
            return Err(invalid(format!("absorption must be nonnegative, got {absorption}")));
        }
        Ok(CellProblem {
            mesh,
            medium,
            k2,
            absorption,
        })
    }

    /// Built-in ring medium on a structured mesh of size `h`.
    pub fn ring(h: f64, k2: f64) -> Result<Self> {
        let mesh = Arc::new(crate::mesh::build_structured_mesh(h)?);
        Self::new(mesh, MediumSpec::ring(), k2)
    }

    /// Real-coefficient problems satisfy `v_{conj z} = conj(v_z)` for real
    /// sources.
    pub fn is_real(&self) -> bool {
        self.absorption == 0.0
    }

    fn wavenumber(&self) -> Complex64 {
        Complex64::new(self.k2, self.absorption)
    }
}

/// Periodic P1 space of a unit-cell mesh.
pub fn periodic_space(mesh: &UnitCellMesh) -> P1Space {
    let coords = (0..mesh.triangles.len()).map(|t| mesh.triangle_coords(t)).collect();
    let dofs = mesh
        .triangles
        .iter()
        .map(|t| t.map(|v| Some(mesh.dof_map[v])))
        .collect();
    P1Space::new(mesh.n_dofs(), coords, dofs)
}

/// Principal logarithm with the cut on `(-inf, 0]`.
pub fn principal_log(z: Complex64) -> Result<Complex64> {
    if z == Complex64::new(0.0, 0.0) || !z.is_finite() {
        return Err(invalid(format!(
            "spectral parameter must be nonzero and finite, got {z}"
        )));
    }
    Ok(z.ln())
}

/// Assembled, reusable operator of one cell problem. Immutable after
/// construction; solves at distinct `z` may run concurrently.
pub struct CellOperator {
    problem: CellProblem,
    space: P1Space,
    stiffness: CscMatrix<f64>,
    transport: CscMatrix<f64>,
    mass: CscMatrix<f64>,
    weighted_mass: CscMatrix<f64>,
    factorizer: Factorizer,
    mass_scale: f64,
    pole_threshold: Option<f64>,
}

impl CellOperator {
    pub fn new(problem: CellProblem) -> Result<Self> {
        let space = periodic_space(&problem.mesh);
        let stiffness = space.stiffness();
        let transport = space.transport();
        let mass = space.mass();
        let weighted_mass = space.weighted_mass(&problem.medium)?;
        let factorizer = Factorizer::new(space.pattern.clone())?;
        let mass_scale = mass.norm_one();
        Ok(CellOperator {
            problem,
            space,
            stiffness,
            transport,
            mass,
            weighted_mass,
            factorizer,
            mass_scale,
            pole_threshold: Some(DEFAULT_POLE_THRESHOLD),
        })
    }

    /// Disables (None) or sets the near-pole check performed by every solve.
    pub fn with_pole_threshold(mut self, threshold: Option<f64>) -> Self {
        self.pole_threshold = threshold;
        self
    }

    pub fn problem(&self) -> &CellProblem {
        &self.problem
    }

    pub fn mesh(&self) -> &UnitCellMesh {
        &self.problem.mesh
    }

    pub fn space(&self) -> &P1Space {
        &self.space
    }

    pub fn factorizer(&self) -> &Factorizer {
        &self.factorizer
    }

    pub fn stiffness(&self) -> &CscMatrix<f64> {
        &self.stiffness
    }

    pub fn transport(&self) -> &CscMatrix<f64> {
        &self.transport
    }

    pub fn mass(&self) -> &CscMatrix<f64> {
        &self.mass
    }

    pub fn weighted_mass(&self) -> &CscMatrix<f64> {
        &self.weighted_mass
    }

    pub fn n_dofs(&self) -> usize {
        self.space.n_dofs
    }

    /// System matrix for the logarithm `log_z`.
    pub fn matrix(&self, log_z: Complex64) -> CscMatrix<Complex64> {
        let kk = self.problem.wavenumber();
        let l2 = log_z * log_z;
        let values = self
            .stiffness
            .values
            .iter()
            .zip(&self.transport.values)
            .zip(&self.mass.values)
            .zip(&self.weighted_mass.values)
            .map(|(((k, t), m), q)| Complex64::new(*k, 0.0) + log_z * *t - l2 * *m - kk * *q)
            .collect();
        CscMatrix {
            pattern: self.space.pattern.clone(),
            values,
        }
    }

    pub fn load(&self, source: &SourceSpec) -> SourceLoad {
        self.space.source_load(source, 0.0)
    }

    /// Matrix and right-hand side at `z` (principal logarithm).
    pub fn assemble(&self, source: &SourceSpec, z: Complex64) -> Result<(CscMatrix<Complex64>, Vec<Complex64>)> {
        let log_z = principal_log(z)?;
        Ok((self.matrix(log_z), self.load(source).rhs(log_z)))
    }

    pub fn solve(&self, source: &SourceSpec, z: Complex64) -> Result<CellSolution> {
        let log_z = principal_log(z)?;
        self.solve_log(&self.load(source), log_z)
    }

    /// Solves the cell problem for an explicit branch of `log z`.
    pub fn solve_log(&self, load: &SourceLoad, log_z: Complex64) -> Result<CellSolution> {
        Ok(self
            .solve_log_many(&[load], log_z)?
            .pop()
            .expect("one load gives one solution"))
    }

    /// One factorization at `log z`, one solve per load.
    pub fn solve_log_many(&self, loads: &[&SourceLoad], log_z: Complex64) -> Result<Vec<CellSolution>> {
        let z = log_z.exp();
        let n = self.n_dofs();
        if loads.iter().all(|l| l.is_zero()) && self.pole_threshold.is_none() {
            return Ok(loads.iter().map(|_| CellSolution::zero(z, log_z, n)).collect());
        }
        let a = self.matrix(log_z);
        let lu = match self.factorizer.lu(&a) {
            Ok(lu) => lu,
            Err(_) => return Err(LapError::NearPole { z, indicator: 0.0 }),
        };
        if let Some(threshold) = self.pole_threshold {
            let indicator = self.indicator_from_lu(&lu);
            if !(indicator >= threshold) {
                return Err(LapError::NearPole { z, indicator });
            }
        }
        loads
            .iter()
            .map(|load| {
                if load.is_zero() {
                    return Ok(CellSolution::zero(z, log_z, n));
                }
                let b = load.rhs(log_z);
                let (x, residual) = solve_refined(&a, &lu, &b)?;
                Ok(CellSolution {
                    z,
                    log_z,
                    coefficients: x,
                    residual,
                })
            })
            .collect()
    }

    /// Smallest-singular-value estimate of the system matrix at `z`,
    /// normalized by the mass-matrix scale. 0 for an exactly singular matrix.
    pub fn singularity_indicator(&self, z: Complex64) -> Result<f64> {
        let log_z = principal_log(z)?;
        Ok(self.indicator_log(log_z))
    }

    pub fn indicator_log(&self, log_z: Complex64) -> f64 {
        let a = self.matrix(log_z);
        match self.factorizer.lu(&a) {
            Ok(lu) => self.indicator_from_lu(&lu),
            Err(_) => 0.0,
        }
    }

    fn indicator_from_lu(&self, lu: &SparseLu) -> f64 {
        let sigma = smallest_singular_value(lu, self.n_dofs(), INDICATOR_SWEEPS);
        if sigma.is_finite() {
            sigma / self.mass_scale
        } else {
            0.0
        }
    }
}

/// Inverse iteration on `A^H A` through an existing LU factorization. Every
/// half step yields an upper bound `|x| / |A^{-1} x|` of the smallest
/// singular value; the smallest bound is returned.
pub(crate) fn smallest_singular_value(lu: &SparseLu, n: usize, sweeps: usize) -> f64 {
    let mut x: Vec<Complex64> = (0..n)
        .map(|i| {
            let t = i as f64;
            Complex64::new(1.0 + 0.5 * (0.731 * t).sin(), 0.5 * (1.37 * t + 0.3).cos())
        })
        .collect();
    let nx = norm2(&x);
    x.iter_mut().for_each(|v| *v /= nx);
    let mut best = f64::INFINITY;
    for _ in 0..sweeps {
        lu.solve_in_place(&mut x);
        let ny = norm2(&x);
        if !(ny.is_finite()) || ny == 0.0 {
            return 0.0;
        }
        best = best.min(1.0 / ny);
        x.iter_mut().for_each(|v| *v /= ny);
        lu.solve_adjoint_in_place(&mut x);
        let nz = norm2(&x);
        if !(nz.is_finite()) || nz == 0.0 {
            return 0.0;
        }
        best = best.min(1.0 / nz);
        x.iter_mut().for_each(|v| *v /= nz);
    }
    best
}

/// Direct solve with up to two steps of iterative refinement. Returns the
/// solution and its relative residual.
pub(crate) fn solve_refined(a: &CscMatrix<Complex64>, lu: &SparseLu, b: &[Complex64]) -> Result<(Vec<Complex64>, f64)> {
    let nb = norm2(b);
    if nb == 0.0 {
        return Ok((vec![Complex64::new(0.0, 0.0); b.len()], 0.0));
    }
    let mut x = b.to_vec();
    lu.solve_in_place(&mut x);
    let mut residual = f64::INFINITY;
    for _ in 0..3 {
        let ax = a.matvec(&x);
        let mut r: Vec<Complex64> = b.iter().zip(&ax).map(|(bi, axi)| bi - axi).collect();
        residual = norm2(&r) / nb;
        if residual <= RESIDUAL_TOL || !residual.is_finite() {
            break;
        }
        lu.solve_in_place(&mut r);
        x.iter_mut().zip(&r).for_each(|(xi, ri)| *xi += ri);
    }
    if !(residual <= RESIDUAL_TOL) {
        return Err(LapError::NumericalFailure(format!(
            "cell solve residual {residual:.3e} exceeds {RESIDUAL_TOL:e}"
        )));
    }
    Ok((x, residual))
}

/// Periodic nodal field `v_z` for one spectral parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSolution {
    pub z: Complex64,
    pub log_z: Complex64,
    /// Nodal values of `v_z`, one per periodic dof.
    pub coefficients: Vec<Complex64>,
    pub residual: f64,
}

impl CellSolution {
    fn zero(z: Complex64, log_z: Complex64, n: usize) -> Self {
        CellSolution {
            z,
            log_z,
            coefficients: vec![Complex64::new(0.0, 0.0); n],
            residual: 0.0,
        }
    }

    /// `w(z, x) = exp(x1 log z) v_z(x)` at every mesh vertex.
    pub fn w_at_vertices(&self, mesh: &UnitCellMesh) -> Vec<Complex64> {
        mesh.vertices
            .iter()
            .zip(&mesh.dof_map)
            .map(|(x, &d)| (x[0] * self.log_z).exp() * self.coefficients[d])
            .collect()
    }

    /// The solution at `conj(z)` for a real problem with a real source.
    pub fn conjugate(&self) -> CellSolution {
        CellSolution {
            z: self.z.conj(),
            log_z: self.log_z.conj(),
            coefficients: self.coefficients.iter().map(|c| c.conj()).collect(),
            residual: self.residual,
        }
    }

    /// CSV dump `dof, re_v, im_v` with a header carrying `z` and `k^2`.
    pub fn to_csv(&self, k2: f64) -> String {
        use std::fmt::Write as _;
        let mut out = String::new();
        let _ = writeln!(out, "# z = {:.16e} {:+.16e}i", self.z.re, self.z.im);
        let _ = writeln!(out, "# k2 = {:.16e}", k2);
        out.push_str("dof,re_v,im_v\n");
        for (i, c) in self.coefficients.iter().enumerate() {
            let _ = writeln!(out, "{i},{:.16e},{:.16e}", c.re, c.im);
        }
        out
    }
}

/// Matrix and right-hand side of the cell problem at `z`.
pub fn assemble_cell_system(
    problem: &CellProblem,
    source: &SourceSpec,
    z: Complex64,
) -> Result<(CscMatrix<Complex64>, Vec<Complex64>)> {
    CellOperator::new(problem.clone())?.assemble(source, z)
}

pub fn solve_cell(problem: &CellProblem, source: &SourceSpec, z: Complex64) -> Result<CellSolution> {
    CellOperator::new(problem.clone())?.solve(source, z)
}

pub fn singularity_indicator(problem: &CellProblem, z: Complex64) -> Result<f64> {
    CellOperator::new(problem.clone())?.singularity_indicator(z)
}
