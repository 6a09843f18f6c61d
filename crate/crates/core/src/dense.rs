//! Small dense helpers over faer for projected and reduced problems.

use faer::{Mat, Side};
use num_complex::Complex64;

use crate::error::{LapError, Result};

pub fn from_fn(n: usize, m: usize, f: impl FnMut(usize, usize) -> Complex64) -> Mat<Complex64> {
    Mat::from_fn(n, m, f)
}

/// Eigenpairs of a Hermitian matrix, eigenvalues ascending. Only the lower
/// triangle is read.
pub fn hermitian_eigen(a: &Mat<Complex64>) -> Result<(Vec<f64>, Mat<Complex64>)> {
    let eig = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| LapError::NumericalFailure(format!("dense Hermitian eigensolver failed: {e:?}")))?;
    let s = eig.S().column_vector();
    let values = (0..a.nrows()).map(|i| s[i].re).collect();
    Ok((values, eig.U().to_owned()))
}

/// Generalized problem `A v = mu B v` with `A` Hermitian and `B` Hermitian
/// positive definite. Eigenvectors are `B`-orthonormal columns.
pub fn generalized_hermitian_eigen(a: &Mat<Complex64>, b: &Mat<Complex64>) -> Result<(Vec<f64>, Mat<Complex64>)> {
    let n = a.nrows();
    let llt = b
        .llt(Side::Lower)
        .map_err(|e| LapError::NumericalFailure(format!("Cholesky of the mass matrix failed: {e:?}")))?;
    let l = llt.L();
    // C = L^{-1} A L^{-H}, using A = A^H.
    let mut y = a.clone();
    l.solve_lower_triangular_in_place(y.as_mut());
    let mut c = y.adjoint().to_owned();
    l.solve_lower_triangular_in_place(c.as_mut());
    let c = Mat::from_fn(n, n, |i, j| 0.5 * (c[(i, j)] + c[(j, i)].conj()));
    let (values, mut vecs) = hermitian_eigen(&c)?;
    l.adjoint().solve_upper_triangular_in_place(vecs.as_mut());
    Ok((values, vecs))
}

/// Thin SVD `A = U diag(s) V^H`.
pub struct ThinSvd {
    pub u: Mat<Complex64>,
    pub s: Vec<f64>,
    pub v: Mat<Complex64>,
}

pub fn thin_svd(a: &Mat<Complex64>) -> Result<ThinSvd> {
    let svd = a
        .thin_svd()
        .map_err(|e| LapError::NumericalFailure(format!("SVD failed: {e:?}")))?;
    let s = svd.S().column_vector();
    let k = a.nrows().min(a.ncols());
    Ok(ThinSvd {
        u: svd.U().to_owned(),
        s: (0..k).map(|i| s[i].re).collect(),
        v: svd.V().to_owned(),
    })
}

/// Solves `A x = b` for a small dense matrix with partial pivoting.
pub fn solve(a: &Mat<Complex64>, b: &[Complex64]) -> Vec<Complex64> {
    use faer::linalg::solvers::Solve;
    let lu = a.partial_piv_lu();
    let mut x = Mat::from_fn(b.len(), 1, |i, _| b[i]);
    lu.solve_in_place(x.as_mut());
    (0..b.len()).map(|i| x[(i, 0)]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn generalized_eigen_residuals() {
        let n = 6;
        let a = from_fn(n, n, |i, j| {
            if i == j {
                c(2.0 + i as f64, 0.0)
            } else if i + 1 == j {
                c(0.3, 0.7)
            } else if j + 1 == i {
                c(0.3, -0.7)
            } else {
                c(0.0, 0.0)
            }
        });
        let b = from_fn(n, n, |i, j| {
            if i == j {
                c(1.0 + 0.1 * i as f64, 0.0)
            } else if i.abs_diff(j) == 1 {
                c(0.1, 0.0)
            } else {
                c(0.0, 0.0)
            }
        });
        let (mu, v) = generalized_hermitian_eigen(&a, &b).unwrap();
        assert!(mu.windows(2).all(|w| w[0] <= w[1]));
        for k in 0..n {
            let vk = v.col(k).to_owned();
            let av = &a * &vk;
            let bv = &b * &vk;
            let r: f64 = (0..n).map(|i| (av[i] - bv[i] * mu[k]).norm_sqr()).sum::<f64>().sqrt();
            assert!(r < 1e-12);
        }
    }

    #[test]
    fn svd_and_solve() {
        let a = from_fn(4, 3, |i, j| {
            c((i + 2 * j) as f64, (i * j) as f64 * 0.1) + if i == j { c(3.0, 0.0) } else { c(0.0, 0.0) }
        });
        let svd = thin_svd(&a).unwrap();
        assert_eq!(svd.s.len(), 3);
        assert!(svd.s.windows(2).all(|w| w[0] >= w[1]));
        let sq = from_fn(3, 3, |i, j| a[(i, j)]);
        let b = vec![c(1.0, 0.0), c(0.0, 1.0), c(2.0, -1.0)];
        let x = solve(&sq, &b);
        for i in 0..3 {
            let r: Complex64 = (0..3).map(|j| sq[(i, j)] * x[j]).sum::<Complex64>() - b[i];
            assert!(r.norm() < 1e-12);
        }
    }
}
