use std::collections::HashMap;

use super::TriMesh;

/// Number of faces using each undirected edge.
pub fn edge_use_counts(mesh: &TriMesh) -> HashMap<(u32, u32), u32> {
    let mut counts = HashMap::with_capacity(mesh.face_count() * 3 / 2);
    for f in mesh.faces() {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    }
    counts
}

/// Edges not shared by exactly two faces.
pub fn non_manifold_edge_count(mesh: &TriMesh) -> usize {
    edge_use_counts(mesh).values().filter(|&&c| c != 2).count()
}

/// Every edge is shared by exactly two faces.
pub fn is_watertight(mesh: &TriMesh) -> bool {
    !mesh.is_empty() && non_manifold_edge_count(mesh) == 0
}

/// `V - E + F` counting only vertices referenced by a face.
pub fn euler_characteristic(mesh: &TriMesh) -> i64 {
    let mut used = vec![false; mesh.vertex_count()];
    for f in mesh.faces() {
        for &i in f {
            used[i as usize] = true;
        }
    }
    let v = used.iter().filter(|&&u| u).count() as i64;
    let e = edge_use_counts(mesh).len() as i64;
    v - e + mesh.face_count() as i64
}

/// Face-connected components. Returns the component count and a label per face.
pub fn connected_components(mesh: &TriMesh) -> (usize, Vec<usize>) {
    let mut parent: Vec<usize> = (0..mesh.vertex_count()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for f in mesh.faces() {
        let a = find(&mut parent, f[0] as usize);
        for &i in &f[1..] {
            let b = find(&mut parent, i as usize);
            if a != b {
                parent[b] = a;
            }
        }
    }
    let mut ids = HashMap::new();
    let labels = mesh
        .faces()
        .iter()
        .map(|f| {
            let root = find(&mut parent, f[0] as usize);
            let next = ids.len();
            *ids.entry(root).or_insert(next)
        })
        .collect();
    (ids.len(), labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;

    #[test]
    fn open_triangle_is_not_watertight() {
        let m = TriMesh::new(vec![Vec3::zeros(), Vec3::x(), Vec3::y()], vec![[0, 1, 2]]).unwrap();
        assert!(!is_watertight(&m));
        assert_eq!(non_manifold_edge_count(&m), 3);
        assert_eq!(euler_characteristic(&m), 1);
        assert_eq!(connected_components(&m).0, 1);
    }

    #[test]
    fn tetrahedron() {
        let m = TriMesh::new(
            vec![Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::z()],
            vec![[0, 2, 1], [0, 1, 3], [1, 2, 3], [0, 3, 2]],
        )
        .unwrap();
        assert!(is_watertight(&m));
        assert_eq!(euler_characteristic(&m), 2);
        assert!(m.signed_volume() > 0.0);
    }
}
