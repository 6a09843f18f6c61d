//! Compressed-column storage on a fixed, structurally symmetric pattern and
//! thin wrappers around faer's sparse direct factorizations.
//!
//! Every matrix assembled for one mesh shares the same [`Pattern`], so the
//! symbolic analysis is done once and reused for every numeric factorization.

use std::sync::Arc;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, Lu, SymbolicLlt, SymbolicLu};
use faer::sparse::{SparseColMat, SparseColMatRef, SymbolicSparseColMat};
use faer::{MatMut, Side};
use num_complex::Complex64;

use crate::error::{LapError, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pattern {
    pub n: usize,
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<usize>,
}

impl Pattern {
    /// Pattern of a P1 operator: all dof pairs sharing an element. Entries
    /// are sorted within each column.
    pub fn from_elements(n: usize, elements: &[[Option<usize>; 3]]) -> Pattern {
        let mut cols: Vec<Vec<usize>> = vec![Vec::new(); n];
        for dofs in elements {
            for a in dofs.iter().flatten() {
                for b in dofs.iter().flatten() {
                    cols[*b].push(*a);
                }
            }
        }
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        col_ptr.push(0);
        for c in cols.iter_mut() {
            c.sort_unstable();
            c.dedup();
            row_idx.extend_from_slice(c);
            col_ptr.push(row_idx.len());
        }
        Pattern { n, col_ptr, row_idx }
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    /// Storage position of entry `(row, col)`.
    pub fn position(&self, row: usize, col: usize) -> Option<usize> {
        let range = self.col_ptr[col]..self.col_ptr[col + 1];
        self.row_idx[range.clone()]
            .binary_search(&row)
            .ok()
            .map(|k| range.start + k)
    }

    /// Storage positions of the 3x3 block of an element, indexed `[a][b]`
    /// with `a` the row (test) and `b` the column (trial) local index.
    pub fn element_positions(&self, dofs: &[Option<usize>; 3]) -> [[Option<usize>; 3]; 3] {
        let mut out = [[None; 3]; 3];
        for a in 0..3 {
            for b in 0..3 {
                if let (Some(r), Some(c)) = (dofs[a], dofs[b]) {
                    out[a][b] = self.position(r, c);
                }
            }
        }
        out
    }

    fn symbolic(&self) -> SymbolicSparseColMat<usize> {
        SymbolicSparseColMat::new_checked(self.n, self.n, self.col_ptr.clone(), None, self.row_idx.clone())
    }
}

/// Values stored on a shared pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct CscMatrix<T> {
    pub pattern: Arc<Pattern>,
    pub values: Vec<T>,
}

impl<T: Copy + Default> CscMatrix<T> {
    pub fn zeros(pattern: Arc<Pattern>) -> Self {
        let values = vec![T::default(); pattern.nnz()];
        CscMatrix { pattern, values }
    }
}

impl<T: Copy> CscMatrix<T> {
    pub fn n(&self) -> usize {
        self.pattern.n
    }

    pub fn get(&self, row: usize, col: usize) -> Option<T> {
        self.pattern.position(row, col).map(|k| self.values[k])
    }

    /// Iterates `(row, col, value)`.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.pattern.n).flat_map(move |c| {
            (self.pattern.col_ptr[c]..self.pattern.col_ptr[c + 1])
                .map(move |k| (self.pattern.row_idx[k], c, self.values[k]))
        })
    }
}

impl CscMatrix<f64> {
    pub fn to_complex(&self, scale: Complex64) -> CscMatrix<Complex64> {
        CscMatrix {
            pattern: self.pattern.clone(),
            values: self.values.iter().map(|v| scale * v).collect(),
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let p = &self.pattern;
        let mut y = vec![0.0; p.n];
        for c in 0..p.n {
            let xc = x[c];
            for k in p.col_ptr[c]..p.col_ptr[c + 1] {
                y[p.row_idx[k]] += self.values[k] * xc;
            }
        }
        y
    }

    pub fn matvec_complex(&self, x: &[Complex64]) -> Vec<Complex64> {
        let p = &self.pattern;
        let mut y = vec![Complex64::new(0.0, 0.0); p.n];
        for c in 0..p.n {
            let xc = x[c];
            for k in p.col_ptr[c]..p.col_ptr[c + 1] {
                y[p.row_idx[k]] += xc * self.values[k];
            }
        }
        y
    }

    /// Largest absolute column sum.
    pub fn norm_one(&self) -> f64 {
        let p = &self.pattern;
        (0..p.n)
            .map(|c| {
                self.values[p.col_ptr[c]..p.col_ptr[c + 1]]
                    .iter()
                    .map(|v| v.abs())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }
}

impl CscMatrix<Complex64> {
    /// `y = A x` on complex vectors.
    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        let p = &self.pattern;
        let mut y = vec![Complex64::new(0.0, 0.0); p.n];
        for c in 0..p.n {
            let xc = x[c];
            for k in p.col_ptr[c]..p.col_ptr[c + 1] {
                y[p.row_idx[k]] += self.values[k] * xc;
            }
        }
        y
    }

    /// `y = A^H x`.
    pub fn adjoint_matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        let p = &self.pattern;
        (0..p.n)
            .map(|c| {
                (p.col_ptr[c]..p.col_ptr[c + 1])
                    .map(|k| self.values[k].conj() * x[p.row_idx[k]])
                    .sum()
            })
            .collect()
    }

    /// Frobenius norm of `A - A^H` relative to the Frobenius norm of `A`.
    pub fn hermitian_defect(&self) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (r, c, v) in self.triplets() {
            let t = self.get(c, r).unwrap_or_default();
            num += (v - t.conj()).norm_sqr();
            den += v.norm_sqr();
        }
        if den == 0.0 {
            0.0
        } else {
            (num / den).sqrt()
        }
    }

    fn as_faer(&self, symbolic: &SymbolicSparseColMat<usize>) -> SparseColMat<usize, Complex64> {
        SparseColMat::new(symbolic.clone(), self.values.clone())
    }
}

/// Reusable symbolic analysis for LU and Cholesky factorizations on one
/// pattern.
pub struct Factorizer {
    pattern: Arc<Pattern>,
    symbolic_mat: SymbolicSparseColMat<usize>,
    lu: SymbolicLu<usize>,
    llt: std::sync::OnceLock<SymbolicLlt<usize>>,
}

impl Factorizer {
    pub fn new(pattern: Arc<Pattern>) -> Result<Self> {
        let symbolic_mat = pattern.symbolic();
        let lu = SymbolicLu::try_new(symbolic_mat.as_ref())
            .map_err(|e| LapError::NumericalFailure(format!("symbolic LU failed: {e:?}")))?;
        Ok(Factorizer {
            pattern,
            symbolic_mat,
            lu,
            llt: std::sync::OnceLock::new(),
        })
    }

    pub fn pattern(&self) -> &Arc<Pattern> {
        &self.pattern
    }

    /// Numeric LU with partial pivoting.
    pub fn lu(&self, a: &CscMatrix<Complex64>) -> Result<SparseLu> {
        debug_assert!(Arc::ptr_eq(&a.pattern, &self.pattern) || *a.pattern == *self.pattern);
        let mat = a.as_faer(&self.symbolic_mat);
        let lu = Lu::try_new_with_symbolic(self.lu.clone(), mat.as_ref())
            .map_err(|e| LapError::NumericalFailure(format!("sparse LU failed: {e:?}")))?;
        Ok(SparseLu { lu, n: self.pattern.n })
    }

    /// Numeric Cholesky `A = L L^H` of a Hermitian positive definite matrix.
    pub fn cholesky(&self, a: &CscMatrix<Complex64>) -> Result<SparseCholesky> {
        let symbolic = match self.llt.get() {
            Some(s) => s.clone(),
            None => {
                let s = SymbolicLlt::try_new(self.symbolic_mat.as_ref(), Side::Lower)
                    .map_err(|e| LapError::NumericalFailure(format!("symbolic Cholesky failed: {e:?}")))?;
                let _ = self.llt.set(s.clone());
                s
            }
        };
        let mat = a.as_faer(&self.symbolic_mat);
        let r: SparseColMatRef<'_, usize, Complex64> = mat.as_ref();
        let llt = Llt::try_new_with_symbolic(symbolic, r, Side::Lower)
            .map_err(|e| LapError::NumericalFailure(format!("sparse Cholesky failed: {e:?}")))?;
        Ok(SparseCholesky { llt, n: self.pattern.n })
    }
}

pub struct SparseLu {
    lu: Lu<usize, Complex64>,
    n: usize,
}

impl SparseLu {
    pub fn solve_in_place(&self, rhs: &mut [Complex64]) {
        assert_eq!(rhs.len(), self.n);
        let m = MatMut::from_column_major_slice_mut(rhs, self.n, 1);
        self.lu.solve_in_place(m);
    }

    /// Solves `A^H x = rhs`.
    pub fn solve_adjoint_in_place(&self, rhs: &mut [Complex64]) {
        assert_eq!(rhs.len(), self.n);
        let m = MatMut::from_column_major_slice_mut(rhs, self.n, 1);
        self.lu.solve_adjoint_in_place(m);
    }
}

pub struct SparseCholesky {
    llt: Llt<usize, Complex64>,
    n: usize,
}

impl SparseCholesky {
    pub fn solve_in_place(&self, rhs: &mut [Complex64]) {
        assert_eq!(rhs.len(), self.n);
        let m = MatMut::from_column_major_slice_mut(rhs, self.n, 1);
        self.llt.solve_in_place(m);
    }
}

pub(crate) fn norm2(x: &[Complex64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

pub(crate) fn dot(x: &[Complex64], y: &[Complex64]) -> Complex64 {
    // x^H y
    x.iter().zip(y).map(|(a, b)| a.conj() * b).sum()
}
