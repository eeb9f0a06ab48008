//! Marching tetrahedra over a scalar lattice.
//!
//! Every cube is split into six tetrahedra around its main diagonal
//! (Freudenthal), so neighboring cubes agree on their shared face diagonals
//! and the extracted surface is a closed 2-manifold whenever no lattice value
//! equals the iso-level.

use std::collections::HashMap;

use crate::geometry::Vec3;

/// Scalar field sampled at integer lattice points `[0, n)³`.
pub(crate) struct Lattice<'a> {
    pub n: [usize; 3],
    pub values: &'a [f64],
}

impl Lattice<'_> {
    #[inline]
    fn index(&self, p: [usize; 3]) -> usize {
        (p[2] * self.n[1] + p[1]) * self.n[0] + p[0]
    }
}

/// Cube corner offsets indexed by bit pattern `x | y << 1 | z << 2`.
const CORNER: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [0, 1, 0],
    [1, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [0, 1, 1],
    [1, 1, 1],
];

/// The six tetrahedra along the 0→7 diagonal, each positively oriented.
fn freudenthal() -> [[usize; 4]; 6] {
    let axes = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    axes.map(|[p, q, _]| {
        let a = 1 << p;
        let b = a | (1 << q);
        let mut t = [0, a, b, 7];
        if orientation(&t) < 0 {
            t.swap(2, 3);
        }
        t
    })
}

fn orientation(t: &[usize; 4]) -> i64 {
    let p = |c: usize| CORNER[c].map(|v| v as i64);
    let (o, a, b, c) = (p(t[0]), p(t[1]), p(t[2]), p(t[3]));
    let u = [a[0] - o[0], a[1] - o[1], a[2] - o[2]];
    let v = [b[0] - o[0], b[1] - o[1], b[2] - o[2]];
    let w = [c[0] - o[0], c[1] - o[1], c[2] - o[2]];
    u[0] * (v[1] * w[2] - v[2] * w[1]) - u[1] * (v[0] * w[2] - v[2] * w[0]) + u[2] * (v[0] * w[1] - v[1] * w[0])
}

/// Reorders `t` by an even permutation so `first` come first (in any order).
fn lead_with(t: &[usize; 4], first: &[usize]) -> [usize; 4] {
    let mut out = [0; 4];
    let mut n = 0;
    for &v in first {
        out[n] = v;
        n += 1;
    }
    for &v in t {
        if !first.contains(&v) {
            out[n] = v;
            n += 1;
        }
    }
    // Parity of the permutation taking t to out.
    let pos: Vec<usize> = out.iter().map(|v| t.iter().position(|x| x == v).unwrap()).collect();
    let mut inversions = 0;
    for i in 0..4 {
        for j in i + 1..4 {
            inversions += usize::from(pos[i] > pos[j]);
        }
    }
    if inversions % 2 == 1 {
        out.swap(2, 3);
    }
    out
}

/// Extracts the `iso` level set. Values above `iso` are inside; triangles
/// are wound so their normals point from inside to outside. Returns vertex
/// positions in lattice coordinates and triangles.
pub(crate) fn extract(lattice: &Lattice, iso: f64) -> (Vec<Vec3>, Vec<[u32; 3]>) {
    let tets = freudenthal();
    let [nx, ny, nz] = lattice.n;
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut edge_vertex: HashMap<(usize, usize), u32> = HashMap::new();

    for z in 0..nz.saturating_sub(1) {
        for y in 0..ny.saturating_sub(1) {
            for x in 0..nx.saturating_sub(1) {
                let pts: [[usize; 3]; 8] = CORNER.map(|o| [x + o[0], y + o[1], z + o[2]]);
                let ids = pts.map(|p| lattice.index(p));
                let inside = ids.map(|i| lattice.values[i] > iso);
                if inside.iter().all(|&b| b) || inside.iter().all(|&b| !b) {
                    continue;
                }
                let mut vertex = |a: usize, b: usize| -> u32 {
                    let key = (ids[a].min(ids[b]), ids[a].max(ids[b]));
                    *edge_vertex.entry(key).or_insert_with(|| {
                        // Interpolate from the lower lattice id so both cubes
                        // sharing the edge compute the identical position.
                        let (lo, hi) = if ids[a] < ids[b] { (a, b) } else { (b, a) };
                        let fa = lattice.values[ids[lo]];
                        let fb = lattice.values[ids[hi]];
                        let t = (iso - fa) / (fb - fa);
                        let pa = pts[lo].map(|v| v as f64);
                        let pb = pts[hi].map(|v| v as f64);
                        let p = Vec3::new(
                            pa[0] + t * (pb[0] - pa[0]),
                            pa[1] + t * (pb[1] - pa[1]),
                            pa[2] + t * (pb[2] - pa[2]),
                        );
                        vertices.push(p);
                        (vertices.len() - 1) as u32
                    })
                };
                for tet in &tets {
                    let ins: Vec<usize> = tet.iter().copied().filter(|&c| inside[c]).collect();
                    match ins.len() {
                        1 => {
                            let [a, b, c, d] = lead_with(tet, &ins);
                            faces.push([vertex(a, b), vertex(a, c), vertex(a, d)]);
                        }
                        3 => {
                            let out: Vec<usize> = tet.iter().copied().filter(|&c| !inside[c]).collect();
                            let [d, a, b, c] = lead_with(tet, &out);
                            faces.push([vertex(d, a), vertex(d, c), vertex(d, b)]);
                        }
                        2 => {
                            let [a, b, c, d] = lead_with(tet, &ins);
                            let (ac, ad, bd, bc) = (vertex(a, c), vertex(a, d), vertex(b, d), vertex(b, c));
                            faces.push([ac, ad, bd]);
                            faces.push([ac, bd, bc]);
                        }
                        _ => {}
                    }
                }
            }
        }
    }
    (vertices, faces)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{is_watertight, TriMesh};

    #[test]
    fn tetrahedra_tile_the_cube() {
        let tets = freudenthal();
        let total: i64 = tets.iter().map(orientation).sum();
        // Six tets of volume 1/6 each: determinants sum to 6.
        assert_eq!(total, 6);
        assert!(tets.iter().all(|t| orientation(t) == 1));
    }

    #[test]
    fn even_reordering_preserves_orientation() {
        for tet in freudenthal() {
            for first in [vec![tet[2]], vec![tet[3], tet[1]], vec![tet[1], tet[2], tet[0]]] {
                assert_eq!(orientation(&lead_with(&tet, &first)), 1);
            }
        }
    }

    #[test]
    fn single_point_gives_closed_outward_surface() {
        let n = [3, 3, 3];
        let mut values = vec![0.0; 27];
        values[13] = 1.0;
        let (v, f) = extract(&Lattice { n, values: &values }, 0.5);
        let mesh = TriMesh::new(v, f).unwrap();
        assert!(is_watertight(&mesh));
        let c = Vec3::repeat(1.0);
        let vol: f64 = mesh
            .faces()
            .iter()
            .map(|f| {
                let [a, b, d] = f.map(|i| mesh.vertices()[i as usize] - c);
                a.dot(&b.cross(&d)) / 6.0
            })
            .sum();
        assert!(vol > 0.0);
    }
}
