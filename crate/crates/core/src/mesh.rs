//! Structured triangulations of the periodic unit cell `(-1/2, 1/2] x (0, 1)`.
//!
//! The cell is covered by a uniform `n1 x n2` grid whose squares are split
//! along alternating diagonals in a checkerboard pattern. For even `n` the
//! mesh is mirror symmetric about `x2 = 1/2` and `x1 = 0`, so media with
//! those symmetries keep them exactly after discretization. Vertices on `x1 = +1/2` are
//! kept as geometric nodes but share the periodic degree of freedom of their
//! partner on `x1 = -1/2`; the identification lives entirely in `dof_map`.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::error::{invalid, LapError, Result};

/// Tolerance used when testing whether a point belongs to the closed cell.
const DOMAIN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct UnitCellMesh {
    pub vertices: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    /// Vertices on `x1 = -1/2`, ascending in `x2`.
    pub left_nodes: Vec<usize>,
    /// Vertices on `x1 = +1/2`, ascending in `x2`.
    pub right_nodes: Vec<usize>,
    /// `(left, right)` pairs with equal height.
    pub pairing: Vec<(usize, usize)>,
    /// Largest element diameter.
    pub h: f64,
    /// Vertex index -> periodic degree of freedom.
    pub dof_map: Vec<usize>,
    n_dofs: usize,
    n1: usize,
    n2: usize,
}

/// Number of grid intervals needed so that `1/n <= h`, robust to `1/h`
/// landing a rounding error above an integer.
pub(crate) fn intervals_for(h: f64) -> usize {
    let raw = 1.0 / h;
    let n = (raw - 1e-9).ceil();
    n.max(1.0) as usize
}

/// Builds the uniform checkerboard triangulation with `n1 = n2 = ceil(1/h)`.
pub fn build_structured_mesh(h: f64) -> Result<UnitCellMesh> {
    if !(h > 0.0 && h <= 0.5) || !h.is_finite() {
        return Err(invalid(format!("mesh size h must satisfy 0 < h <= 0.5, got {h}")));
    }
    let n = intervals_for(h);
    Ok(UnitCellMesh::structured(n, n))
}

impl UnitCellMesh {
    /// Uniform grid with `n1` intervals in `x1` and `n2` in `x2`.
    pub fn structured(n1: usize, n2: usize) -> Self {
        assert!(n1 >= 1 && n2 >= 1);
        let nx = n1 + 1;
        let vid = |i: usize, j: usize| i + nx * j;
        let mut vertices = Vec::with_capacity(nx * (n2 + 1));
        for j in 0..=n2 {
            for i in 0..=n1 {
                vertices.push([-0.5 + i as f64 / n1 as f64, j as f64 / n2 as f64]);
            }
        }
        let mut triangles = Vec::with_capacity(2 * n1 * n2);
        for j in 0..n2 {
            for i in 0..n1 {
                let v00 = vid(i, j);
                let v10 = vid(i + 1, j);
                let v01 = vid(i, j + 1);
                let v11 = vid(i + 1, j + 1);
                if (i + j) % 2 == 0 {
                    triangles.push([v00, v10, v11]);
                    triangles.push([v00, v11, v01]);
                } else {
                    triangles.push([v00, v10, v01]);
                    triangles.push([v10, v11, v01]);
                }
            }
        }
        let left_nodes: Vec<usize> = (0..=n2).map(|j| vid(0, j)).collect();
        let right_nodes: Vec<usize> = (0..=n2).map(|j| vid(n1, j)).collect();
        let pairing = left_nodes.iter().copied().zip(right_nodes.iter().copied()).collect();
        let dof_map = (0..vertices.len())
            .map(|v| {
                let (i, j) = (v % nx, v / nx);
                (i % n1) + n1 * j
            })
            .collect();
        let dx = 1.0 / n1 as f64;
        let dy = 1.0 / n2 as f64;
        UnitCellMesh {
            vertices,
            triangles,
            left_nodes,
            right_nodes,
            pairing,
            h: dx.hypot(dy),
            dof_map,
            n_dofs: n1 * (n2 + 1),
            n1,
            n2,
        }
    }

    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }

    /// Grid intervals along `x1` and `x2`.
    pub fn grid(&self) -> (usize, usize) {
        (self.n1, self.n2)
    }

    pub fn triangle_coords(&self, t: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Unsigned area of triangle `t`.
    pub fn area(&self, t: usize) -> f64 {
        signed_area(&self.triangle_coords(t)).abs()
    }

    /// Longest edge of triangle `t`.
    pub fn diameter(&self, t: usize) -> f64 {
        let p = self.triangle_coords(t);
        let d = |a: [f64; 2], b: [f64; 2]| (a[0] - b[0]).hypot(a[1] - b[1]);
        d(p[0], p[1]).max(d(p[1], p[2])).max(d(p[2], p[0]))
    }

    /// Finds a triangle containing `x` and the barycentric coordinates of `x`
    /// in it.
    pub fn locate_point(&self, x: [f64; 2]) -> Result<(usize, [f64; 3])> {
        let [x1, x2] = x;
        if !(x1 >= -0.5 - DOMAIN_TOL && x1 <= 0.5 + DOMAIN_TOL && x2 >= -DOMAIN_TOL && x2 <= 1.0 + DOMAIN_TOL)
            || !x1.is_finite()
            || !x2.is_finite()
        {
            return Err(LapError::OutOfDomain { x1, x2 });
        }
        let (n1, n2) = (self.n1 as f64, self.n2 as f64);
        let gx = ((x1 + 0.5) * n1).clamp(0.0, n1);
        let gy = (x2 * n2).clamp(0.0, n2);
        let i = (gx.floor() as usize).min(self.n1 - 1);
        let j = (gy.floor() as usize).min(self.n2 - 1);
        let s = (gx - i as f64).clamp(0.0, 1.0);
        let t = (gy - j as f64).clamp(0.0, 1.0);
        let square = i + self.n1 * j;
        if (i + j) % 2 == 1 {
            return if s + t <= 1.0 {
                // (v00, v10, v01)
                Ok((2 * square, [1.0 - s - t, s, t]))
            } else {
                // (v10, v11, v01)
                Ok((2 * square + 1, [1.0 - t, s + t - 1.0, 1.0 - s]))
            };
        }
        if t <= s {
            // (v00, v10, v11)
            Ok((2 * square, [1.0 - s, s - t, t]))
        } else {
            // (v00, v11, v01)
            Ok((2 * square + 1, [1.0 - t, s, t - s]))
        }
    }

    /// Checks every structural invariant of a periodic cell mesh.
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(LapError::NumericalFailure(format!("mesh invariant: {m}")));
        if self.left_nodes.len() != self.right_nodes.len() || self.pairing.len() != self.left_nodes.len() {
            return fail("left/right node counts differ".into());
        }
        let mut seen_l = vec![false; self.vertices.len()];
        let mut seen_r = vec![false; self.vertices.len()];
        for &(l, r) in &self.pairing {
            if seen_l[l] || seen_r[r] {
                return fail("pairing is not a bijection".into());
            }
            seen_l[l] = true;
            seen_r[r] = true;
            let (pl, pr) = (self.vertices[l], self.vertices[r]);
            if (pl[1] - pr[1]).abs() > 1e-12 {
                return fail(format!("paired nodes {l},{r} differ in height"));
            }
            if (pl[0] + 0.5).abs() > 1e-12 || (pr[0] - 0.5).abs() > 1e-12 {
                return fail(format!("paired nodes {l},{r} are not on the periodic boundaries"));
            }
            if self.dof_map[l] != self.dof_map[r] {
                return fail(format!("paired nodes {l},{r} have different dofs"));
            }
        }
        if self.n_dofs != self.vertices.len() - self.right_nodes.len() {
            return fail("dof count != vertices - right nodes".into());
        }
        let mut edges: HashMap<(usize, usize), usize> = HashMap::new();
        let mut dmin = f64::INFINITY;
        let mut dmax: f64 = 0.0;
        for t in 0..self.triangles.len() {
            if signed_area(&self.triangle_coords(t)) <= 0.0 {
                return fail(format!("triangle {t} is degenerate or clockwise"));
            }
            let d = self.diameter(t);
            dmin = dmin.min(d);
            dmax = dmax.max(d);
            let tri = self.triangles[t];
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                *edges.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        if dmax > self.h * (1.0 + 1e-12) {
            return fail(format!("max diameter {dmax} exceeds h = {}", self.h));
        }
        if dmin / dmax < 0.2 {
            return fail(format!("mesh is not quasi-uniform (ratio {})", dmin / dmax));
        }
        for (&(a, b), &count) in &edges {
            let boundary = self.on_boundary(a, b);
            if count > 2 || (count == 1 && !boundary) || (count == 2 && boundary) {
                return fail(format!("edge ({a},{b}) shared by {count} triangles"));
            }
        }
        Ok(())
    }

    fn on_boundary(&self, a: usize, b: usize) -> bool {
        let (pa, pb) = (self.vertices[a], self.vertices[b]);
        let same = |u: f64, v: f64, c: f64| (u - c).abs() < 1e-12 && (v - c).abs() < 1e-12;
        same(pa[0], pb[0], -0.5) || same(pa[0], pb[0], 0.5) || same(pa[1], pb[1], 0.0) || same(pa[1], pb[1], 1.0)
    }

    /// CSV dump with `vertices`, `triangles` and `pairing` sections.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("# section: vertices\nid,x1,x2\n");
        for (i, v) in self.vertices.iter().enumerate() {
            let _ = writeln!(out, "{i},{:.16e},{:.16e}", v[0], v[1]);
        }
        out.push_str("# section: triangles\nid,v0,v1,v2\n");
        for (i, t) in self.triangles.iter().enumerate() {
            let _ = writeln!(out, "{i},{},{},{}", t[0], t[1], t[2]);
        }
        out.push_str("# section: pairing\nleft,right\n");
        for (l, r) in &self.pairing {
            let _ = writeln!(out, "{l},{r}");
        }
        out
    }
}

pub(crate) fn signed_area(p: &[[f64; 2]; 3]) -> f64 {
    0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coarse_counts() {
        let m = build_structured_mesh(0.5).unwrap();
        assert_eq!(m.vertices.len(), 9);
        assert_eq!(m.triangles.len(), 8);
        assert_eq!(m.right_nodes.len(), 3);
        assert_eq!(m.n_dofs(), 6);

        let m = build_structured_mesh(1.0 / 3.0).unwrap();
        assert_eq!(m.vertices.len(), 16);
        assert_eq!(m.triangles.len(), 18);
        assert_eq!(m.n_dofs(), 12);
    }

    #[test]
    fn invariants_fine_mesh() {
        let m = build_structured_mesh(0.01).unwrap();
        m.validate().unwrap();
        assert!(m.h <= 2f64.sqrt() * 0.01 + 1e-15);
    }

    #[test]
    fn rejects_bad_h() {
        for h in [0.0, -0.1, 0.6, f64::NAN] {
            assert!(matches!(build_structured_mesh(h), Err(LapError::InvalidParameter(_))));
        }
    }

    #[test]
    fn diameters_halve() {
        for h in [0.2, 0.1, 0.05, 0.025] {
            let a = build_structured_mesh(h).unwrap();
            let b = build_structured_mesh(h / 2.0).unwrap();
            let ratio = a.h / b.h;
            assert!((ratio - 2.0).abs() <= 2.0 * 0.05, "ratio {ratio}");
        }
    }

    #[test]
    fn locate_centroid_and_vertex() {
        let m = build_structured_mesh(0.1).unwrap();
        for t in [0, 7, 55, m.triangles.len() - 1] {
            let p = m.triangle_coords(t);
            let c = [(p[0][0] + p[1][0] + p[2][0]) / 3.0, (p[0][1] + p[1][1] + p[2][1]) / 3.0];
            let (found, bary) = m.locate_point(c).unwrap();
            assert_eq!(found, t);
            for b in bary {
                assert!((b - 1.0 / 3.0).abs() < 1e-12);
            }
        }
        let v = m.vertices[37];
        let (t, bary) = m.locate_point(v).unwrap();
        assert!(m.triangles[t].contains(&37));
        assert!(bary.iter().any(|b| (b - 1.0).abs() < 1e-12));
    }

    #[test]
    fn even_mesh_is_mirror_symmetric() {
        let m = build_structured_mesh(0.125).unwrap();
        let key = |p: [f64; 2]| ((p[0] * 1e6).round() as i64, (p[1] * 1e6).round() as i64);
        let tri_key = |t: &[[f64; 2]; 3]| {
            let mut k: Vec<_> = t.iter().map(|p| key(*p)).collect();
            k.sort();
            k
        };
        let all: std::collections::HashSet<_> =
            (0..m.triangles.len()).map(|t| tri_key(&m.triangle_coords(t))).collect();
        for t in 0..m.triangles.len() {
            let p = m.triangle_coords(t);
            assert!(all.contains(&tri_key(&p.map(|v| [v[0], 1.0 - v[1]]))));
            assert!(all.contains(&tri_key(&p.map(|v| [-v[0], v[1]]))));
        }
    }

    #[test]
    fn locate_rejects_outside() {
        let m = build_structured_mesh(0.1).unwrap();
        assert!(matches!(m.locate_point([0.6, 0.5]), Err(LapError::OutOfDomain { .. })));
        assert!(matches!(
            m.locate_point([0.0, -0.01]),
            Err(LapError::OutOfDomain { .. })
        ));
    }

    #[test]
    fn csv_has_sections() {
        let csv = build_structured_mesh(0.5).unwrap().to_csv();
        assert!(csv.contains("# section: vertices"));
        assert!(csv.contains("# section: triangles"));
        assert!(csv.contains("# section: pairing"));
        assert_eq!(csv.lines().filter(|l| l.starts_with("0,")).count(), 3);
    }
}
