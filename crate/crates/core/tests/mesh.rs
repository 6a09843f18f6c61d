use lapwg_core::{build_structured_mesh, LapError, UnitCellMesh};
use proptest::prelude::*;

#[test]
fn counts_for_coarse_meshes() {
    for (h, n) in [(0.5, 2usize), (1.0 / 3.0, 3)] {
        let m = build_structured_mesh(h).unwrap();
        assert_eq!(m.vertices.len(), (n + 1) * (n + 1));
        assert_eq!(m.triangles.len(), 2 * n * n);
        assert_eq!(m.left_nodes.len(), n + 1);
        assert_eq!(m.right_nodes.len(), n + 1);
        assert_eq!(m.n_dofs(), n * (n + 1));
        m.validate().unwrap();
    }
}

#[test]
fn fine_mesh_invariants() {
    let m = build_structured_mesh(0.01).unwrap();
    m.validate().unwrap();
    assert_eq!(m.grid(), (100, 100));
    let total: f64 = (0..m.triangles.len()).map(|t| m.area(t)).sum();
    assert!((total - 1.0).abs() < 1e-12);
    for &(l, r) in &m.pairing {
        assert_eq!(m.dof_map[l], m.dof_map[r]);
        assert!((m.vertices[l][1] - m.vertices[r][1]).abs() < 1e-14);
    }
    let mut dofs: Vec<usize> = m.dof_map.clone();
    dofs.sort_unstable();
    dofs.dedup();
    assert_eq!(dofs.len(), m.n_dofs());
    assert_eq!(*dofs.last().unwrap(), m.n_dofs() - 1);
}

#[test]
fn diameter_halves_under_refinement() {
    let d: Vec<f64> = [0.1, 0.05, 0.025]
        .iter()
        .map(|&h| build_structured_mesh(h).unwrap().h)
        .collect();
    for w in d.windows(2) {
        assert!((w[0] / w[1] - 2.0).abs() < 1e-9, "ratio {}", w[0] / w[1]);
    }
}

#[test]
fn rejects_invalid_sizes() {
    for h in [0.0, -0.1, 0.51, f64::NAN, f64::INFINITY] {
        assert!(
            matches!(build_structured_mesh(h), Err(LapError::InvalidParameter(_))),
            "h = {h}"
        );
    }
}

#[test]
fn locates_centroids_and_vertices() {
    let m = build_structured_mesh(0.125).unwrap();
    for t in 0..m.triangles.len() {
        let c = m.triangle_coords(t);
        let g = [(c[0][0] + c[1][0] + c[2][0]) / 3.0, (c[0][1] + c[1][1] + c[2][1]) / 3.0];
        let (found, bary) = m.locate_point(g).unwrap();
        assert_eq!(found, t);
        for b in bary {
            assert!((b - 1.0 / 3.0).abs() < 1e-12);
        }
    }
    for v in &m.vertices {
        let (t, bary) = m.locate_point(*v).unwrap();
        let c = m.triangle_coords(t);
        let hit = (0..3).any(|k| (bary[k] - 1.0).abs() < 1e-12 && (c[k][0] - v[0]).hypot(c[k][1] - v[1]) < 1e-12);
        assert!(hit, "vertex {v:?} not reproduced");
    }
}

proptest! {
    #[test]
    fn located_barycentrics_reproduce_point(x1 in -0.5f64..=0.5, x2 in 0.0f64..=1.0, n in 2usize..12) {
        let m = UnitCellMesh::structured(n, n);
        let (t, bary) = m.locate_point([x1, x2]).unwrap();
        let c = m.triangle_coords(t);
        prop_assert!((bary.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for b in bary {
            prop_assert!(b >= -1e-12);
        }
        let y1: f64 = (0..3).map(|k| bary[k] * c[k][0]).sum();
        let y2: f64 = (0..3).map(|k| bary[k] * c[k][1]).sum();
        prop_assert!((y1 - x1).abs() < 1e-12 && (y2 - x2).abs() < 1e-12);
    }

    #[test]
    fn structured_meshes_validate(n1 in 1usize..20, n2 in 1usize..20) {
        let m = UnitCellMesh::structured(n1, n2);
        prop_assert_eq!(m.triangles.len(), 2 * n1 * n2);
        prop_assert_eq!(m.n_dofs(), n1 * (n2 + 1));
    }
}
