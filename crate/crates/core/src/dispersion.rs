//! Band functions, crossings with `k^2`, stop bands and multiplier scans.
//!
//! For `z = exp(i alpha)` the homogeneous cell problem reads
//! `A(alpha) v = mu B v` with `A(alpha) = K + i alpha T + alpha^2 M` and the
//! `q`-weighted mass `B = Q`. The pencil is Hermitian positive semidefinite,
//! and `A(-alpha) = conj(A(alpha))`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use faer::Mat;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::cell::CellOperator;
use crate::dense;
use crate::error::{invalid, LapError, Result};
use crate::sparse::{dot, norm2, CscMatrix, SparseCholesky};

/// Dense eigensolves up to this many dofs; shift-invert Krylov above.
pub const DENSE_LIMIT: usize = 2000;
/// Eigenpair acceptance: `|A v - mu B v| <= tol (|A v| + |B v|)`.
pub const EIGEN_RESIDUAL_TOL: f64 = 1e-8;
pub const SLOPE_TOL: f64 = 1e-6;
/// Step of the central-difference slope check.
pub const SLOPE_FD_STEP: f64 = 1e-4;
/// Allowed relative disagreement between the two slope estimates.
pub const SLOPE_AGREEMENT: f64 = 1e-3;
/// Crossings of opposite class closer than this (radians) are rejected.
pub const MERGE_TOL: f64 = 1e-6;
const MAX_RESTARTS: usize = 60;
const BISECTION_STEPS: usize = 80;
/// Quasi-momentum resolution used to decide whether two sorted bands touch.
const TOUCH_TOL: f64 = 1e-9;
/// Relative band separation below which two sorted bands are taken to touch.
const TOUCH_SEPARATION: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CrossingClass {
    /// Right-propagating, positive slope.
    Rus,
    /// Left-propagating, negative slope.
    Lus,
    /// Stationary, zero slope.
    Sus,
}

impl CrossingClass {
    pub fn as_str(self) -> &'static str {
        match self {
            CrossingClass::Rus => "RUS",
            CrossingClass::Lus => "LUS",
            CrossingClass::Sus => "SUS",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Crossing {
    pub alpha: f64,
    /// 1-based index of the sorted band.
    pub band: usize,
    /// Rayleigh-quotient derivative of the band at `alpha`.
    pub slope: f64,
    /// Central-difference estimate of the same derivative.
    pub slope_fd: f64,
    pub class: CrossingClass,
    pub z: Complex64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DispersionDiagram {
    pub alphas: Vec<f64>,
    /// `bands[i][n]` is the `n`-th smallest eigenvalue at `alphas[i]`.
    pub bands: Vec<Vec<f64>>,
}

/// Eigenvalues with `B`-normalized eigenvectors.
#[derive(Debug, Clone)]
pub struct BandPairs {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<Complex64>>,
}

/// `A(alpha) = K + i alpha T + alpha^2 M`.
pub fn band_matrix(op: &CellOperator, alpha: f64) -> CscMatrix<Complex64> {
    let values = op
        .stiffness()
        .values
        .iter()
        .zip(&op.transport().values)
        .zip(&op.mass().values)
        .map(|((k, t), m)| Complex64::new(k + alpha * alpha * m, alpha * t))
        .collect();
    CscMatrix {
        pattern: op.space().pattern.clone(),
        values,
    }
}

/// `A'(alpha) = i T + 2 alpha M`.
fn band_matrix_derivative(op: &CellOperator, alpha: f64) -> CscMatrix<Complex64> {
    let values = op
        .transport()
        .values
        .iter()
        .zip(&op.mass().values)
        .map(|(t, m)| Complex64::new(2.0 * alpha * m, *t))
        .collect();
    CscMatrix {
        pattern: op.space().pattern.clone(),
        values,
    }
}

fn check_band_count(op: &CellOperator, n_bands: usize) -> Result<()> {
    if n_bands == 0 || n_bands > op.n_dofs() / 4 {
        return Err(invalid(format!(
            "n_bands must be in 1..={}, got {n_bands}",
            op.n_dofs() / 4
        )));
    }
    Ok(())
}

pub fn band_eigenvalues(op: &CellOperator, alpha: f64, n_bands: usize) -> Result<Vec<f64>> {
    Ok(band_pairs(op, alpha, n_bands)?.values)
}

/// The `n_bands` smallest eigenpairs of the band pencil at `alpha`.
pub fn band_pairs(op: &CellOperator, alpha: f64, n_bands: usize) -> Result<BandPairs> {
    check_band_count(op, n_bands)?;
    if !alpha.is_finite() {
        return Err(invalid(format!("quasi-momentum must be finite, got {alpha}")));
    }
    let a = band_matrix(op, alpha);
    let pairs = if op.n_dofs() <= DENSE_LIMIT {
        dense_pairs(op, &a, n_bands)?
    } else {
        krylov_pairs(op, &a, n_bands)?
    };
    for (k, (mu, v)) in pairs.values.iter().zip(&pairs.vectors).enumerate() {
        let (res, scale) = pair_residual(op, &a, *mu, v);
        if !(res <= EIGEN_RESIDUAL_TOL * scale) {
            return Err(LapError::NumericalFailure(format!(
                "band {} at alpha = {alpha}: eigen residual {:.3e} exceeds {:.1e} (scale {:.3e})",
                k + 1,
                res,
                EIGEN_RESIDUAL_TOL,
                scale
            )));
        }
    }
    Ok(pairs)
}

fn pair_residual(op: &CellOperator, a: &CscMatrix<Complex64>, mu: f64, v: &[Complex64]) -> (f64, f64) {
    let av = a.matvec(v);
    let bv = op.weighted_mass().matvec_complex(v);
    let r: Vec<Complex64> = av.iter().zip(&bv).map(|(x, y)| x - y * mu).collect();
    (norm2(&r), norm2(&av) + norm2(&bv))
}

fn dense_pairs(op: &CellOperator, a: &CscMatrix<Complex64>, n_bands: usize) -> Result<BandPairs> {
    let n = op.n_dofs();
    let mut ad = Mat::<Complex64>::zeros(n, n);
    for (r, c, v) in a.triplets() {
        ad[(r, c)] = v;
    }
    let mut bd = Mat::<Complex64>::zeros(n, n);
    for (r, c, v) in op.weighted_mass().triplets() {
        bd[(r, c)] = Complex64::new(v, 0.0);
    }
    let (values, vecs) = dense::generalized_hermitian_eigen(&ad, &bd)?;
    Ok(BandPairs {
        values: values[..n_bands].iter().map(|v| v.max(0.0)).collect(),
        vectors: (0..n_bands).map(|k| (0..n).map(|i| vecs[(i, k)]).collect()).collect(),
    })
}

/// Deterministic start vector number `k`.
fn start_vector(n: usize, k: usize) -> Vec<Complex64> {
    // Low-discrepancy phases; any fixed full-rank choice works.
    let g = 0.618_033_988_749_894_9;
    (0..n)
        .map(|i| {
            let t = ((i as f64) * g + (k as f64) * 0.414_213_562_373_095) % 1.0;
            let s = ((i as f64) * 0.754_877_666 + (k as f64) * g) % 1.0;
            Complex64::new(t - 0.5, s - 0.5)
        })
        .collect()
}

/// Rayleigh-Ritz on a block Krylov space of `(A + B)^{-1} B` with thick
/// restarts. `B`-orthonormal basis; convergence measured by the true residual.
fn krylov_pairs(op: &CellOperator, a: &CscMatrix<Complex64>, n_bands: usize) -> Result<BandPairs> {
    let n = op.n_dofs();
    let bmat = op.weighted_mass();
    let shifted = {
        let mut s = a.clone();
        for (k, v) in s.values.iter_mut().enumerate() {
            *v += bmat.values[k];
        }
        s
    };
    let chol: SparseCholesky = op.factorizer().cholesky(&shifted)?;
    let block = n_bands + 3;
    let max_basis = (6 * block).max(36).min(n);

    let mut seed: Vec<Vec<Complex64>> = (0..block).map(|k| start_vector(n, k)).collect();
    let mut worst = f64::INFINITY;
    for _cycle in 0..MAX_RESTARTS {
        let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(max_basis);
        let mut bbasis: Vec<Vec<Complex64>> = Vec::with_capacity(max_basis);
        let mut frontier: Vec<usize> = Vec::new();
        for v in seed.drain(..) {
            if let Some(idx) = push_b_orthonormal(&mut basis, &mut bbasis, v, bmat) {
                frontier.push(idx);
            }
        }
        while basis.len() < max_basis && !frontier.is_empty() {
            let mut next = Vec::new();
            for &idx in &frontier {
                if basis.len() >= max_basis {
                    break;
                }
                let mut w = bbasis[idx].clone();
                chol.solve_in_place(&mut w);
                if let Some(j) = push_b_orthonormal(&mut basis, &mut bbasis, w, bmat) {
                    next.push(j);
                }
            }
            frontier = next;
        }
        let m = basis.len();
        let abasis: Vec<Vec<Complex64>> = basis.iter().map(|v| a.matvec(v)).collect();
        let proj = Mat::from_fn(m, m, |i, j| dot(&basis[i], &abasis[j]));
        let proj = Mat::from_fn(m, m, |i, j| 0.5 * (proj[(i, j)] + proj[(j, i)].conj()));
        let (theta, y) = dense::hermitian_eigen(&proj)?;
        let keep = block.min(m);
        let mut values = Vec::with_capacity(keep);
        let mut vectors = Vec::with_capacity(keep);
        let mut converged = true;
        worst = 0.0;
        for k in 0..keep {
            let mut v = vec![Complex64::new(0.0, 0.0); n];
            let mut av = vec![Complex64::new(0.0, 0.0); n];
            let mut bv = vec![Complex64::new(0.0, 0.0); n];
            for j in 0..m {
                let c = y[(j, k)];
                for i in 0..n {
                    v[i] += basis[j][i] * c;
                    av[i] += abasis[j][i] * c;
                    bv[i] += bbasis[j][i] * c;
                }
            }
            if k < n_bands {
                let r: Vec<Complex64> = av.iter().zip(&bv).map(|(x, b)| x - b * theta[k]).collect();
                let rel = norm2(&r) / (norm2(&av) + norm2(&bv));
                worst = worst.max(rel);
                if !(rel <= 0.5 * EIGEN_RESIDUAL_TOL) {
                    converged = false;
                }
            }
            values.push(theta[k].max(0.0));
            vectors.push(v);
        }
        if converged {
            values.truncate(n_bands);
            vectors.truncate(n_bands);
            return Ok(BandPairs { values, vectors });
        }
        seed = vectors;
    }
    Err(LapError::NumericalFailure(format!(
        "shift-invert eigensolver did not converge in {MAX_RESTARTS} restarts (worst relative residual {worst:.3e})"
    )))
}

/// Appends `v` after two passes of classical Gram-Schmidt in the `B` inner
/// product; returns its index or `None` if it was numerically dependent.
fn push_b_orthonormal(
    basis: &mut Vec<Vec<Complex64>>,
    bbasis: &mut Vec<Vec<Complex64>>,
    mut v: Vec<Complex64>,
    bmat: &CscMatrix<f64>,
) -> Option<usize> {
    let norm0 = b_norm(&v, bmat);
    if !(norm0 > 0.0) || !norm0.is_finite() {
        return None;
    }
    for _ in 0..2 {
        let coeffs: Vec<Complex64> = bbasis.iter().map(|bu| dot(bu, &v)).collect();
        for (u, c) in basis.iter().zip(&coeffs) {
            for (vi, ui) in v.iter_mut().zip(u) {
                *vi -= ui * c;
            }
        }
    }
    let bv = bmat.matvec_complex(&v);
    let nrm = dot(&v, &bv).re.max(0.0).sqrt();
    if !(nrm > 1e-10 * norm0) {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= nrm);
    basis.push(v);
    bbasis.push(bv.into_iter().map(|x| x / nrm).collect());
    Some(basis.len() - 1)
}

fn b_norm(v: &[Complex64], bmat: &CscMatrix<f64>) -> f64 {
    dot(v, &bmat.matvec_complex(v)).re.max(0.0).sqrt()
}

/// Uniform grid `alpha_i = -pi + 2 pi i / n`, `i = 1..n`, on `(-pi, pi]`.
pub fn alpha_grid(n_alpha: usize) -> Vec<f64> {
    (1..=n_alpha)
        .map(|i| {
            if i == n_alpha {
                PI
            } else {
                -PI + 2.0 * PI * i as f64 / n_alpha as f64
            }
        })
        .collect()
}

pub fn compute_diagram(op: &CellOperator, n_alpha: usize, n_bands: usize) -> Result<DispersionDiagram> {
    if n_alpha < 16 {
        return Err(invalid(format!("n_alpha must be at least 16, got {n_alpha}")));
    }
    check_band_count(op, n_bands)?;
    compute_bands_at(op, alpha_grid(n_alpha), n_bands)
}

/// Same grid as [`compute_diagram`], solving only `alpha >= 0` and filling
/// `-alpha` from the exact symmetry `A(-alpha) = conj(A(alpha))`.
pub fn compute_diagram_mirrored(op: &CellOperator, n_alpha: usize, n_bands: usize) -> Result<DispersionDiagram> {
    if n_alpha < 16 {
        return Err(invalid(format!("n_alpha must be at least 16, got {n_alpha}")));
    }
    check_band_count(op, n_bands)?;
    let alphas = alpha_grid(n_alpha);
    let half: Vec<f64> = alphas.iter().cloned().filter(|a| *a >= 0.0).collect();
    let solved = compute_bands_at(op, half.clone(), n_bands)?;
    let bands = alphas
        .iter()
        .map(|a| {
            let target = a.abs();
            let i = half
                .iter()
                .position(|h| (h - target).abs() < 1e-12)
                .expect("alpha grid is symmetric");
            solved.bands[i].clone()
        })
        .collect();
    Ok(DispersionDiagram { alphas, bands })
}

/// Band values at arbitrary quasi-momenta, solved in parallel and gathered in
/// input order.
pub fn compute_bands_at(op: &CellOperator, alphas: Vec<f64>, n_bands: usize) -> Result<DispersionDiagram> {
    let bands = alphas
        .par_iter()
        .map(|&a| band_eigenvalues(op, a, n_bands))
        .collect::<Result<Vec<_>>>()?;
    Ok(DispersionDiagram { alphas, bands })
}

impl DispersionDiagram {
    pub fn n_bands(&self) -> usize {
        self.bands.first().map_or(0, |b| b.len())
    }

    /// Values of band `n` (0-based) along the grid.
    pub fn band(&self, n: usize) -> Vec<f64> {
        self.bands.iter().map(|b| b[n]).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("alpha");
        for n in 1..=self.n_bands() {
            let _ = write!(out, ",mu_{n}");
        }
        out.push('\n');
        for (a, b) in self.alphas.iter().zip(&self.bands) {
            let _ = write!(out, "{a:.16e}");
            for v in b {
                let _ = write!(out, ",{v:.16e}");
            }
            out.push('\n');
        }
        out
    }
}

fn rayleigh_slope(op: &CellOperator, alpha: f64, v: &[Complex64]) -> f64 {
    let d = band_matrix_derivative(op, alpha);
    let num = dot(v, &d.matvec(v)).re;
    let den = dot(v, &op.weighted_mass().matvec_complex(v)).re;
    num / den
}

fn wrap_alpha(a: f64) -> f64 {
    let mut a = a;
    while a <= -PI {
        a += 2.0 * PI;
    }
    while a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// All solutions of `mu_n(alpha) = k^2` bracketed by the diagram grid,
/// refined by bisection and classified by the sign of the slope.
pub fn find_crossings(diagram: &DispersionDiagram, op: &CellOperator, k2: f64) -> Result<Vec<Crossing>> {
    if !(k2 > 0.0) {
        return Err(invalid(format!("k^2 must be positive, got {k2}")));
    }
    let nb = diagram.n_bands();
    let na = diagram.alphas.len();
    if nb == 0 || na < 2 {
        return Err(invalid("diagram is empty"));
    }
    let top = diagram.bands.iter().map(|b| b[nb - 1]).fold(f64::INFINITY, f64::min);
    if !(top > k2) {
        return Err(invalid(format!(
            "diagram with {nb} bands does not bracket k^2 = {k2} (top band min {top})"
        )));
    }
    // Brackets (band, lo, hi, f(lo), f(hi)); the wrap interval starts at -pi,
    // where the spectrum equals the one at pi.
    let mut brackets = Vec::new();
    for n in 0..nb {
        for i in 0..na {
            let (lo, flo) = if i == 0 {
                (-PI, diagram.bands[na - 1][n] - k2)
            } else {
                (diagram.alphas[i - 1], diagram.bands[i - 1][n] - k2)
            };
            let (hi, fhi) = (diagram.alphas[i], diagram.bands[i][n] - k2);
            if (flo < 0.0) != (fhi < 0.0) {
                brackets.push((n, lo, hi, flo));
            }
        }
    }
    let solve = |&(n, lo, hi, flo): &(usize, f64, f64, f64)| -> Result<Crossing> {
        let (mut lo, mut hi) = (lo, hi);
        let mut alpha = 0.5 * (lo + hi);
        let mut pairs = band_pairs(op, alpha, nb)?;
        for _ in 0..BISECTION_STEPS {
            let f = pairs.values[n] - k2;
            if f.abs() <= 1e-8 * k2 || hi - lo < 1e-15 {
                break;
            }
            if (f < 0.0) == (flo < 0.0) {
                lo = alpha;
            } else {
                hi = alpha;
            }
            alpha = 0.5 * (lo + hi);
            pairs = band_pairs(op, alpha, nb)?;
        }
        let f = pairs.values[n] - k2;
        if !(f.abs() <= 1e-8 * k2) {
            return Err(LapError::NumericalFailure(format!(
                "crossing bisection for band {} stalled at alpha = {alpha} with |mu - k^2| = {:.3e}",
                n + 1,
                f.abs()
            )));
        }
        let slope = rayleigh_slope(op, alpha, &pairs.vectors[n]);
        let up = band_eigenvalues(op, alpha + SLOPE_FD_STEP, nb)?[n];
        let down = band_eigenvalues(op, alpha - SLOPE_FD_STEP, nb)?[n];
        let slope_fd = (up - down) / (2.0 * SLOPE_FD_STEP);
        let class = if slope > SLOPE_TOL {
            CrossingClass::Rus
        } else if slope < -SLOPE_TOL {
            CrossingClass::Lus
        } else {
            CrossingClass::Sus
        };
        let alpha = wrap_alpha(alpha);
        Ok(Crossing {
            alpha,
            band: n + 1,
            slope,
            slope_fd,
            class,
            z: Complex64::from_polar(1.0, alpha),
        })
    };
    let mut crossings = brackets.par_iter().map(solve).collect::<Result<Vec<_>>>()?;
    crossings.sort_by(|a, b| a.alpha.total_cmp(&b.alpha).then(a.band.cmp(&b.band)));

    for c in &crossings {
        if c.class == CrossingClass::Sus {
            return Err(LapError::AssumptionViolated(format!(
                "stationary crossing at alpha = {} (band {}, slope {:.3e})",
                c.alpha, c.band, c.slope
            )));
        }
        let scale = c.slope.abs().max(c.slope_fd.abs());
        if (c.slope - c.slope_fd).abs() > SLOPE_AGREEMENT * scale {
            return Err(LapError::NumericalFailure(format!(
                "slope check failed at alpha = {} (band {}): Rayleigh {:.6e} vs difference {:.6e}",
                c.alpha, c.band, c.slope, c.slope_fd
            )));
        }
    }
    for (i, a) in crossings.iter().enumerate() {
        for b in &crossings[i + 1..] {
            let d = (a.alpha - b.alpha).abs();
            let d = d.min(2.0 * PI - d);
            if d < MERGE_TOL && a.class != b.class {
                return Err(LapError::AssumptionViolated(format!(
                    "right and left propagating crossings coincide near alpha = {}",
                    a.alpha
                )));
            }
        }
    }
    // Equal crossings reached from two brackets (a value exactly on the grid).
    crossings.dedup_by(|b, a| a.band == b.band && (a.alpha - b.alpha).abs() < MERGE_TOL);
    Ok(crossings)
}

pub fn crossings_csv(crossings: &[Crossing]) -> String {
    let mut out = String::from("alpha,band,slope,class\n");
    for c in crossings {
        let _ = writeln!(out, "{:.16e},{},{:.16e},{}", c.alpha, c.band, c.slope, c.class.as_str());
    }
    out
}

/// Maximal subintervals of `k2_range` not covered by any band range of the
/// diagram, using grid extrema only.
pub fn stop_bands(diagram: &DispersionDiagram, k2_range: (f64, f64)) -> Vec<(f64, f64)> {
    let ranges: Vec<(f64, f64)> = (0..diagram.n_bands())
        .map(|n| {
            let b = diagram.band(n);
            (
                b.iter().cloned().fold(f64::INFINITY, f64::min),
                b.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            )
        })
        .collect();
    gaps(&ranges, k2_range, top_of(diagram))
}

fn top_of(diagram: &DispersionDiagram) -> f64 {
    let nb = diagram.n_bands();
    if nb == 0 {
        return f64::NEG_INFINITY;
    }
    diagram.band(nb - 1).iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Gaps are reported only below `valid_up_to`, the lowest value of the top
/// band: above it, unresolved higher bands may cover the spectrum.
fn gaps(ranges: &[(f64, f64)], k2_range: (f64, f64), valid_up_to: f64) -> Vec<(f64, f64)> {
    let mut sorted = ranges.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (lo, hi) = (k2_range.0, k2_range.1.min(valid_up_to));
    let mut out = Vec::new();
    let mut cursor = lo;
    for (a, b) in sorted {
        if a > cursor && cursor < hi {
            let end = a.min(hi);
            if end > cursor {
                out.push((cursor, end));
            }
        }
        cursor = cursor.max(b);
    }
    if cursor < hi {
        out.push((cursor, hi));
    }
    out
}

/// Stop bands with band extrema refined by golden-section search around the
/// grid extrema, to `tol` in quasi-momentum.
pub fn refine_stop_bands(
    op: &CellOperator,
    diagram: &DispersionDiagram,
    k2_range: (f64, f64),
    tol: f64,
) -> Result<Vec<(f64, f64)>> {
    let nb = diagram.n_bands();
    let step = 2.0 * PI / diagram.alphas.len() as f64;
    let mut ranges: Vec<(f64, f64, usize, usize)> = (0..nb)
        .map(|n| {
            let b = diagram.band(n);
            let imin = (0..b.len()).min_by(|&i, &j| b[i].total_cmp(&b[j])).unwrap_or(0);
            let imax = (0..b.len()).max_by(|&i, &j| b[i].total_cmp(&b[j])).unwrap_or(0);
            (b[imin], b[imax], imin, imax)
        })
        .collect();
    // Only extrema bounding a coarse gap move the answer.
    let coarse = stop_bands(diagram, k2_range);
    let mut touching = Vec::new();
    for &(s, e) in &coarse {
        let below = (0..nb).find(|&n| ranges[n].1 == s);
        let above = (0..nb).find(|&n| ranges[n].0 == e);
        if let Some(n) = below {
            let c = diagram.alphas[ranges[n].3];
            let band = |a: f64| band_eigenvalues(op, a, nb).map(|v| v[n]);
            ranges[n].1 = golden(band, c - step, c + step, tol, true, |_, _| false)?.max(ranges[n].1);
        }
        if let Some(m) = above {
            let c = diagram.alphas[ranges[m].2];
            let band = |a: f64| band_eigenvalues(op, a, nb).map(|v| v[m]);
            ranges[m].0 = golden(band, c - step, c + step, tol, false, |_, _| false)?.min(ranges[m].0);
        }
        // Sorted bands that touch where two analytic bands cross leave a
        // spurious gap of the size of the search tolerance. When both
        // extrema sit at the same quasi-momentum, minimize the band
        // separation itself.
        if let (Some(n), Some(m)) = (below, above) {
            let a = diagram.alphas[ranges[n].3];
            // For real media the diagram is even in alpha; the mirror image of
            // an extremum is an extremum as well.
            let b = diagram.alphas[ranges[m].2];
            let b = if (a + b).abs() < (a - b).abs() { -b } else { b };
            if m == n + 1 && (a - b).abs() <= 1.5 * step {
                let c = 0.5 * (a + b);
                let slope_bound = 4.0 * ranges[m].1.max(1.0).sqrt() + 4.0 * PI;
                let sep = |a: f64| band_eigenvalues(op, a, nb).map(|v| v[m] - v[n]);
                let min_sep = golden(sep, c - 2.0 * step, c + 2.0 * step, TOUCH_TOL, false, |width, best| {
                    width * slope_bound < 0.01 * best
                })?;
                if min_sep <= TOUCH_SEPARATION * ranges[m].0.max(1.0) {
                    touching.push((n, m));
                }
            }
        }
    }
    // A touching pair covers the interval between its two extrema.
    for &(n, m) in &touching {
        let top = ranges[m].0;
        ranges[n].1 = ranges[n].1.max(top);
    }
    let ranges: Vec<(f64, f64)> = ranges.iter().map(|r| (r.0, r.1)).collect();
    Ok(gaps(&ranges, k2_range, top_of(diagram)))
}

/// Golden-section search for the minimum (or maximum) value on `[a, b]`.
fn golden(
    f: impl Fn(f64) -> Result<f64>,
    a: f64,
    b: f64,
    tol: f64,
    maximize: bool,
    done: impl Fn(f64, f64) -> bool,
) -> Result<f64> {
    let sign = if maximize { -1.0 } else { 1.0 };
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (a, b);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = sign * f(c)?;
    let mut fd = sign * f(d)?;
    while b - a > tol && !done(b - a, sign * fc.min(fd)) {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = sign * f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = sign * f(d)?;
        }
    }
    Ok(sign * fc.min(fd))
}

pub fn stop_bands_csv(bands: &[(f64, f64)]) -> String {
    let mut out = String::from("k2_lo,k2_hi\n");
    for (a, b) in bands {
        let _ = writeln!(out, "{a:.16e},{b:.16e}");
    }
    out
}

/// Singularity indicator on a polar grid around the unit circle.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierScan {
    pub radii: Vec<f64>,
    pub angles: Vec<f64>,
    /// `values[i][j]` at `radii[i] * exp(i angles[j])`.
    pub values: Vec<Vec<f64>>,
}

pub fn multiplier_scan(op: &CellOperator, r_range: (f64, f64), grid: (usize, usize)) -> Result<MultiplierScan> {
    let (r_min, r_max) = r_range;
    let (n_r, n_t) = grid;
    if !(r_min > 0.0 && r_min < 1.0 && r_max > 1.0 && r_max.is_finite()) {
        return Err(invalid(format!(
            "scan needs 0 < r_min < 1 < r_max, got ({r_min}, {r_max})"
        )));
    }
    if n_r < 2 || n_t < 1 {
        return Err(invalid("scan grid needs n_r >= 2 and n_theta >= 1"));
    }
    let ratio = (r_max / r_min).ln();
    let radii: Vec<f64> = (0..n_r)
        .map(|i| r_min * (ratio * i as f64 / (n_r - 1) as f64).exp())
        .collect();
    let angles: Vec<f64> = (0..n_t).map(|j| -PI + 2.0 * PI * j as f64 / n_t as f64).collect();
    let points: Vec<(usize, usize)> = (0..n_r).flat_map(|i| (0..n_t).map(move |j| (i, j))).collect();
    let flat: Vec<f64> = points
        .par_iter()
        .map(|&(i, j)| op.indicator_log(Complex64::new(radii[i].ln(), angles[j])))
        .collect();
    let values = flat.chunks(n_t).map(|c| c.to_vec()).collect();
    Ok(MultiplierScan { radii, angles, values })
}

impl MultiplierScan {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("re_z,im_z,indicator\n");
        for (r, row) in self.radii.iter().zip(&self.values) {
            for (t, v) in self.angles.iter().zip(row) {
                let z = Complex64::from_polar(*r, *t);
                let _ = writeln!(out, "{:.16e},{:.16e},{:.16e}", z.re, z.im, v);
            }
        }
        out
    }
}

/// Analytic band values `j^2 pi^2 + (alpha + 2 pi m)^2` of the homogeneous
/// medium `q = 1`, sorted, including `j = 0`.
pub fn homogeneous_bands(alpha: f64, n_bands: usize) -> Vec<f64> {
    let mut v = Vec::new();
    for j in 0..=(n_bands as i64 + 2) {
        for m in -(n_bands as i64 + 2)..=(n_bands as i64 + 2) {
            let s = alpha + 2.0 * PI * m as f64;
            v.push((j * j) as f64 * PI * PI + s * s);
        }
    }
    v.sort_by(f64::total_cmp);
    v.truncate(n_bands);
    v
}
