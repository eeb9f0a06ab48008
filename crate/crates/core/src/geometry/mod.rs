//! Triangle meshes, homogeneous transforms and the basic operations on them.

mod obj;
mod sampling;
mod shapes;
mod topology;

pub use obj::{load_mesh, parse_obj, save_mesh, write_obj};
pub use sampling::{sample_surface, SurfaceSample, SurfaceSampler};
pub use shapes::{
    gen_shape, BentTubeParams, BlockParams, BoxParams, CapsuleParams, GeneratorSpec, RingParams, ShapeKind,
    ShapeParams, SphereParams, TorusParams,
};
pub use topology::{connected_components, edge_use_counts, euler_characteristic, is_watertight, non_manifold_edge_count};

use std::ops::Mul;

use nalgebra::{Matrix3, Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segmentation::SelectionMask;

pub type Vec3 = nalgebra::Vector3<f64>;

/// Linear blocks with `|det|` at or below this are treated as singular.
pub const SINGULAR_DET: f64 = 1e-12;

/// A 4x4 homogeneous transform whose last row is `(0, 0, 0, 1)` and whose
/// linear block is invertible.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transform3(Matrix4<f64>);

impl Default for Transform3 {
    fn default() -> Self {
        Self::identity()
    }
}

impl Transform3 {
    pub fn identity() -> Self {
        Transform3(Matrix4::identity())
    }

    pub fn translation(t: Vec3) -> Self {
        Transform3(Matrix4::new_translation(&t))
    }

    pub fn uniform_scale(s: f64) -> Result<Self> {
        Self::scale(Vec3::new(s, s, s))
    }

    pub fn scale(s: Vec3) -> Result<Self> {
        Self::from_matrix(Matrix4::new_nonuniform_scaling(&s))
    }

    /// Rotation about the x axis by `angle` radians (right-handed).
    pub fn rotation_x(angle: f64) -> Self {
        Transform3(Matrix4::from_axis_angle(&Vec3::x_axis(), angle))
    }

    pub fn rotation_y(angle: f64) -> Self {
        Transform3(Matrix4::from_axis_angle(&Vec3::y_axis(), angle))
    }

    pub fn rotation_z(angle: f64) -> Self {
        Transform3(Matrix4::from_axis_angle(&Vec3::z_axis(), angle))
    }

    /// Validates and wraps a homogeneous matrix.
    pub fn from_matrix(m: Matrix4<f64>) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidTransform("non-finite entry".into()));
        }
        let last = m.row(3);
        if last[0] != 0.0 || last[1] != 0.0 || last[2] != 0.0 || last[3] != 1.0 {
            return Err(Error::InvalidTransform(format!(
                "last row must be (0, 0, 0, 1), got ({}, {}, {}, {})",
                last[0], last[1], last[2], last[3]
            )));
        }
        let det = m.fixed_view::<3, 3>(0, 0).determinant();
        if det.abs() <= SINGULAR_DET {
            return Err(Error::SingularTransform { det });
        }
        Ok(Transform3(m))
    }

    /// Builds a transform from 16 row-major entries.
    pub fn from_rows(rows: &[f64; 16]) -> Result<Self> {
        Self::from_matrix(Matrix4::from_row_slice(rows))
    }

    pub fn to_rows(&self) -> [f64; 16] {
        let mut out = [0.0; 16];
        for r in 0..4 {
            for c in 0..4 {
                out[r * 4 + c] = self.0[(r, c)];
            }
        }
        out
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.0
    }

    pub fn linear(&self) -> Matrix3<f64> {
        self.0.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn translation_part(&self) -> Vec3 {
        Vec3::new(self.0[(0, 3)], self.0[(1, 3)], self.0[(2, 3)])
    }

    pub fn determinant(&self) -> f64 {
        self.linear().determinant()
    }

    /// Cube root of `|det|` of the linear block: the scale a uniform-scale
    /// transform applies to lengths.
    pub fn scale_factor(&self) -> f64 {
        self.determinant().abs().cbrt()
    }

    /// Ratio of the largest to the smallest singular value of the linear block.
    pub fn anisotropy(&self) -> f64 {
        let sv = self.linear().singular_values();
        let max = sv.max();
        let min = sv.min();
        max / min
    }

    pub fn is_identity(&self) -> bool {
        self.0 == Matrix4::identity()
    }

    pub fn inverse(&self) -> Transform3 {
        // Invertibility is a construction invariant; the homogeneous inverse
        // keeps the (0,0,0,1) row up to rounding, which we restore exactly.
        let lin_inv = self
            .linear()
            .try_inverse()
            .expect("Transform3 invariant: invertible linear block");
        let t = -(lin_inv * self.translation_part());
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&lin_inv);
        m[(0, 3)] = t.x;
        m[(1, 3)] = t.y;
        m[(2, 3)] = t.z;
        Transform3(m)
    }

    #[inline]
    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        let m = &self.0;
        Vec3::new(
            m[(0, 0)] * p.x + m[(0, 1)] * p.y + m[(0, 2)] * p.z + m[(0, 3)],
            m[(1, 0)] * p.x + m[(1, 1)] * p.y + m[(1, 2)] * p.z + m[(1, 3)],
            m[(2, 0)] * p.x + m[(2, 1)] * p.y + m[(2, 2)] * p.z + m[(2, 3)],
        )
    }

    #[inline]
    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        let h = self.0 * Vector4::new(v.x, v.y, v.z, 0.0);
        Vec3::new(h.x, h.y, h.z)
    }
}

impl Mul for Transform3 {
    type Output = Transform3;

    fn mul(self, rhs: Transform3) -> Transform3 {
        let mut m = self.0 * rhs.0;
        m[(3, 0)] = 0.0;
        m[(3, 1)] = 0.0;
        m[(3, 2)] = 0.0;
        m[(3, 3)] = 1.0;
        Transform3(m)
    }
}

impl Serialize for Transform3 {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Transform3 {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows = <[f64; 16]>::deserialize(deserializer)?;
        Transform3::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vec3>) -> Option<Aabb> {
        let mut it = points.into_iter();
        let first = *it.next()?;
        let mut bb = Aabb { min: first, max: first };
        for p in it {
            bb.include(p);
        }
        Some(bb)
    }

    pub fn include(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn longest_side(&self) -> f64 {
        self.extent().max()
    }

    pub fn transformed(&self, t: &Transform3) -> Aabb {
        let corners = (0..8).map(|i| {
            Vec3::new(
                if i & 1 == 0 { self.min.x } else { self.max.x },
                if i & 2 == 0 { self.min.y } else { self.max.y },
                if i & 4 == 0 { self.min.z } else { self.max.z },
            )
        });
        let pts: Vec<Vec3> = corners.map(|c| t.transform_point(&c)).collect();
        Aabb::from_points(&pts).expect("eight corners")
    }
}

pub type Rgb = [f64; 3];

/// Indexed triangle mesh with optional per-vertex colors and a per-vertex
/// keep/drop selection mask.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[u32; 3]>,
    colors: Option<Vec<Rgb>>,
    mask: SelectionMask,
}

impl TriMesh {
    /// Builds a mesh, checking index bounds, degenerate faces and finiteness.
    /// The mask starts all-kept.
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[u32; 3]>) -> Result<Self> {
        if let Some(i) = vertices.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidMesh(format!("vertex {i} is not finite")));
        }
        let n = vertices.len();
        if let Some((i, f)) = faces
            .iter()
            .enumerate()
            .find(|(_, f)| f.iter().any(|&idx| idx as usize >= n))
        {
            return Err(Error::InvalidMesh(format!(
                "face {i} {f:?} references a vertex beyond {n}"
            )));
        }
        let degenerate: Vec<usize> = faces
            .iter()
            .enumerate()
            .filter(|(_, f)| f[0] == f[1] || f[1] == f[2] || f[0] == f[2])
            .map(|(i, _)| i)
            .collect();
        if !degenerate.is_empty() {
            return Err(Error::DegenerateFaces(degenerate));
        }
        Ok(TriMesh {
            mask: SelectionMask::all(n, true),
            vertices,
            faces,
            colors: None,
        })
    }

    pub fn with_colors(mut self, colors: Vec<Rgb>) -> Result<Self> {
        if colors.len() != self.vertices.len() {
            return Err(Error::InvalidMesh(format!(
                "{} colors for {} vertices",
                colors.len(),
                self.vertices.len()
            )));
        }
        if colors.iter().flatten().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::InvalidMesh("color component outside [0, 1]".into()));
        }
        self.colors = Some(colors);
        Ok(self)
    }

    /// Paints every vertex with one color.
    pub fn with_uniform_color(self, color: Rgb) -> Result<Self> {
        let n = self.vertices.len();
        self.with_colors(vec![color; n])
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    pub fn colors(&self) -> Option<&[Rgb]> {
        self.colors.as_deref()
    }

    pub fn mask(&self) -> &SelectionMask {
        &self.mask
    }

    pub fn set_mask(&mut self, mask: SelectionMask) -> Result<()> {
        if mask.len() != self.vertices.len() {
            return Err(Error::MaskLength {
                mask: mask.len(),
                vertices: self.vertices.len(),
            });
        }
        self.mask = mask;
        Ok(())
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn bbox(&self) -> Option<Aabb> {
        Aabb::from_points(&self.vertices)
    }

    pub fn triangle(&self, face: usize) -> [Vec3; 3] {
        let f = self.faces[face];
        [
            self.vertices[f[0] as usize],
            self.vertices[f[1] as usize],
            self.vertices[f[2] as usize],
        ]
    }

    /// Unnormalized face normal (length is twice the area).
    pub fn face_cross(&self, face: usize) -> Vec3 {
        let [a, b, c] = self.triangle(face);
        (b - a).cross(&(c - a))
    }

    pub fn face_area(&self, face: usize) -> f64 {
        0.5 * self.face_cross(face).norm()
    }

    pub fn total_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Signed enclosed volume (positive for outward-oriented closed meshes).
    pub fn signed_volume(&self) -> f64 {
        (0..self.faces.len())
            .map(|f| {
                let [a, b, c] = self.triangle(f);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    pub(crate) fn flip_faces(&mut self) {
        for f in &mut self.faces {
            f.swap(1, 2);
        }
    }
}

/// Applies `t` to every vertex. Topology, colors and mask are unchanged.
pub fn apply_transform(mesh: &TriMesh, t: &Transform3) -> TriMesh {
    let mut out = mesh.clone();
    if !t.is_identity() {
        for v in &mut out.vertices {
            *v = t.transform_point(v);
        }
    }
    out
}

/// Rescales the mesh so its longest bounding-box side is 1 and its box is
/// centered at the origin. The returned transform maps normalized coordinates
/// back to the original ones.
pub fn normalize_unit_bbox(mesh: &TriMesh) -> Result<(TriMesh, Transform3)> {
    let bb = mesh.bbox().ok_or(Error::EmptyMesh)?;
    let side = bb.longest_side();
    if !(side > 0.0) {
        return Err(Error::ZeroExtent);
    }
    let center = bb.center();
    let mut out = mesh.clone();
    for v in &mut out.vertices {
        *v = (*v - center) / side;
    }
    let back = Transform3::translation(center) * Transform3::uniform_scale(side)?;
    Ok((out, back))
}

/// Keeps the vertices marked kept and the faces whose three vertices are all
/// kept, re-indexed compactly.
pub fn extract_submesh(mesh: &TriMesh) -> Result<TriMesh> {
    let mask = mesh.mask();
    let mut remap = vec![u32::MAX; mesh.vertex_count()];
    let mut vertices = Vec::new();
    let mut colors = mesh.colors().map(|_| Vec::new());
    for (i, v) in mesh.vertices().iter().enumerate() {
        if mask.is_kept(i) {
            remap[i] = vertices.len() as u32;
            vertices.push(*v);
            if let (Some(out), Some(src)) = (colors.as_mut(), mesh.colors()) {
                out.push(src[i]);
            }
        }
    }
    if vertices.is_empty() {
        return Err(Error::EmptySelection);
    }
    let faces: Vec<[u32; 3]> = mesh
        .faces()
        .iter()
        .filter(|f| f.iter().all(|&i| remap[i as usize] != u32::MAX))
        .map(|f| [remap[f[0] as usize], remap[f[1] as usize], remap[f[2] as usize]])
        .collect();
    let out = TriMesh::new(vertices, faces)?;
    match colors {
        Some(c) => out.with_colors(c),
        None => Ok(out),
    }
}
