//! Piecewise-linear element integrals shared by the cell and strip solvers.

use std::sync::{Arc, OnceLock};

use num_complex::Complex64;

use crate::error::{invalid, Result};
use crate::medium::{MediumSpec, SourceSpec};
use crate::mesh::signed_area;
use crate::sparse::{CscMatrix, Pattern};

/// 7-point degree-5 rule on the reference triangle: barycentric points and
/// weights summing to one.
pub fn triangle_rule() -> &'static [([f64; 3], f64); 7] {
    static RULE: OnceLock<[([f64; 3], f64); 7]> = OnceLock::new();
    RULE.get_or_init(|| {
        let s15 = 15f64.sqrt();
        let a = (6.0 - s15) / 21.0;
        let b = (6.0 + s15) / 21.0;
        let wa = (155.0 - s15) / 1200.0;
        let wb = (155.0 + s15) / 1200.0;
        [
            ([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0], 9.0 / 40.0),
            ([a, a, 1.0 - 2.0 * a], wa),
            ([a, 1.0 - 2.0 * a, a], wa),
            ([1.0 - 2.0 * a, a, a], wa),
            ([b, b, 1.0 - 2.0 * b], wb),
            ([b, 1.0 - 2.0 * b, b], wb),
            ([1.0 - 2.0 * b, b, b], wb),
        ]
    })
}

pub(crate) fn bary_point(p: &[[f64; 2]; 3], l: &[f64; 3]) -> [f64; 2] {
    [
        l[0] * p[0][0] + l[1] * p[1][0] + l[2] * p[2][0],
        l[0] * p[0][1] + l[1] * p[1][1] + l[2] * p[2][1],
    ]
}

/// Gradients of the three barycentric basis functions.
pub(crate) fn p1_gradients(p: &[[f64; 2]; 3]) -> [[f64; 2]; 3] {
    let a2 = 2.0 * signed_area(p);
    [
        [(p[1][1] - p[2][1]) / a2, (p[2][0] - p[1][0]) / a2],
        [(p[2][1] - p[0][1]) / a2, (p[0][0] - p[2][0]) / a2],
        [(p[0][1] - p[1][1]) / a2, (p[1][0] - p[0][0]) / a2],
    ]
}

/// Geometric data of a P1 discretization: element coordinates and the dof of
/// each element vertex (`None` for eliminated Dirichlet nodes).
#[derive(Debug, Clone)]
pub struct P1Space {
    pub n_dofs: usize,
    pub coords: Vec<[[f64; 2]; 3]>,
    pub dofs: Vec<[Option<usize>; 3]>,
    pub pattern: Arc<Pattern>,
    positions: Vec<[[Option<usize>; 3]; 3]>,
}

impl P1Space {
    pub fn new(n_dofs: usize, coords: Vec<[[f64; 2]; 3]>, dofs: Vec<[Option<usize>; 3]>) -> Self {
        let pattern = Arc::new(Pattern::from_elements(n_dofs, &dofs));
        let positions = dofs.iter().map(|d| pattern.element_positions(d)).collect();
        P1Space {
            n_dofs,
            coords,
            dofs,
            pattern,
            positions,
        }
    }

    pub fn n_elements(&self) -> usize {
        self.coords.len()
    }

    fn assemble(&self, mut local: impl FnMut(usize, &[[f64; 2]; 3]) -> [[f64; 3]; 3]) -> CscMatrix<f64> {
        let mut m = CscMatrix::zeros(self.pattern.clone());
        for e in 0..self.n_elements() {
            let loc = local(e, &self.coords[e]);
            for a in 0..3 {
                for b in 0..3 {
                    if let Some(k) = self.positions[e][a][b] {
                        m.values[k] += loc[a][b];
                    }
                }
            }
        }
        m
    }

    /// `K_ab = int grad phi_b . grad phi_a`.
    pub fn stiffness(&self) -> CscMatrix<f64> {
        self.assemble(|_, p| {
            let g = p1_gradients(p);
            let area = signed_area(p);
            let mut loc = [[0.0; 3]; 3];
            for a in 0..3 {
                for b in 0..3 {
                    loc[a][b] = area * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
                }
            }
            loc
        })
    }

    /// First-order term `T_ab = int (phi_b d1 phi_a - d1 phi_b phi_a)`; real and
    /// antisymmetric.
    pub fn transport(&self) -> CscMatrix<f64> {
        self.assemble(|_, p| {
            let g = p1_gradients(p);
            let third = signed_area(p) / 3.0;
            let mut loc = [[0.0; 3]; 3];
            for a in 0..3 {
                for b in 0..3 {
                    loc[a][b] = third * (g[a][0] - g[b][0]);
                }
            }
            loc
        })
    }

    /// Consistent mass matrix.
    pub fn mass(&self) -> CscMatrix<f64> {
        self.assemble(|_, p| {
            let area = signed_area(p);
            let mut loc = [[area / 12.0; 3]; 3];
            for (a, row) in loc.iter_mut().enumerate() {
                row[a] = area / 6.0;
            }
            loc
        })
    }

    /// `Q_ab = int q phi_b phi_a` by the 7-point rule; fails if `q` drops
    /// below its declared lower bound.
    pub fn weighted_mass(&self, medium: &MediumSpec) -> Result<CscMatrix<f64>> {
        let rule = triangle_rule();
        let mut bad = None;
        let m = self.assemble(|_, p| {
            let area = signed_area(p);
            let mut loc = [[0.0; 3]; 3];
            for (l, w) in rule.iter() {
                let q = medium.eval(bary_point(p, l));
                if !(q >= medium.q_min) && bad.is_none() {
                    bad = Some((bary_point(p, l), q));
                }
                for a in 0..3 {
                    for b in 0..3 {
                        loc[a][b] += area * w * q * l[a] * l[b];
                    }
                }
            }
            loc
        });
        if let Some((x, q)) = bad {
            return Err(invalid(format!(
                "medium {} has q = {q} < q_min = {} at ({}, {})",
                medium.label, medium.q_min, x[0], x[1]
            )));
        }
        Ok(m)
    }

    /// Precomputes the quadrature data of `int f phi_a` restricted to the
    /// elements where `f` does not vanish.
    pub fn source_load(&self, source: &SourceSpec, offset_x1: f64) -> SourceLoad {
        let rule = triangle_rule();
        let mut elements = Vec::new();
        for e in 0..self.n_elements() {
            let p = &self.coords[e];
            let area = signed_area(p);
            let mut x1 = [0.0; 7];
            let mut g = [[Complex64::new(0.0, 0.0); 3]; 7];
            let mut nonzero = false;
            for (k, (l, w)) in rule.iter().enumerate() {
                let x = bary_point(p, l);
                let f = source.eval([x[0] - offset_x1, x[1]]);
                if f != Complex64::new(0.0, 0.0) {
                    nonzero = true;
                }
                x1[k] = x[0] - offset_x1;
                for a in 0..3 {
                    g[k][a] = f * (area * w * l[a]);
                }
            }
            if nonzero {
                elements.push(LoadElement {
                    dofs: self.dofs[e],
                    x1,
                    g,
                });
            }
        }
        SourceLoad {
            n_dofs: self.n_dofs,
            elements,
        }
    }
}

#[derive(Debug, Clone)]
struct LoadElement {
    dofs: [Option<usize>; 3],
    x1: [f64; 7],
    g: [[Complex64; 3]; 7],
}

/// Quadrature data for right-hand sides `-int exp(-x1 log z) f phi_a`.
#[derive(Debug, Clone)]
pub struct SourceLoad {
    n_dofs: usize,
    elements: Vec<LoadElement>,
}

impl SourceLoad {
    pub fn is_zero(&self) -> bool {
        self.elements.is_empty()
    }

    /// Right-hand side for the cell problem at spectral parameter `exp(log_z)`.
    pub fn rhs(&self, log_z: Complex64) -> Vec<Complex64> {
        let mut b = vec![Complex64::new(0.0, 0.0); self.n_dofs];
        for el in &self.elements {
            for k in 0..7 {
                let phase = (-el.x1[k] * log_z).exp();
                for a in 0..3 {
                    if let Some(d) = el.dofs[a] {
                        b[d] -= phase * el.g[k][a];
                    }
                }
            }
        }
        b
    }
}
