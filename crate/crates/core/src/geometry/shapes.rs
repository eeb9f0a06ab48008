//! Procedural watertight test shapes.
//!
//! Five of the families stand in for benchmark object categories: a capsule
//! (antenna), a bent tapered tube (banana), a torus (doughnut), a thin band
//! ring (ring) and an icosphere (ball). `box` and `block` are axis-aligned
//! bricks used for composition scenes and analytic tests.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, TAU};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{TriMesh, Vec3};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Elongated,
    BentTube,
    Torus,
    ThinRing,
    Sphere,
    Box,
    Block,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 7] = [
        ShapeKind::Elongated,
        ShapeKind::BentTube,
        ShapeKind::Torus,
        ShapeKind::ThinRing,
        ShapeKind::Sphere,
        ShapeKind::Box,
        ShapeKind::Block,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Elongated => "elongated",
            ShapeKind::BentTube => "bent_tube",
            ShapeKind::Torus => "torus",
            ShapeKind::ThinRing => "thin_ring",
            ShapeKind::Sphere => "sphere",
            ShapeKind::Box => "box",
            ShapeKind::Block => "block",
        }
    }
}

impl fmt::Display for ShapeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ShapeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ShapeKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidParams(format!("unknown shape kind {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CapsuleParams {
    pub radius: f64,
    /// Tip-to-tip length along y.
    pub length: f64,
    pub sides: usize,
    pub cap_rings: usize,
    pub body_rings: usize,
}

impl Default for CapsuleParams {
    fn default() -> Self {
        CapsuleParams {
            radius: 0.05,
            length: 1.0,
            sides: 24,
            cap_rings: 6,
            body_rings: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BentTubeParams {
    /// Radius of the circular centerline arc.
    pub bend_radius: f64,
    pub bend_angle_deg: f64,
    /// Tube radius at the middle of the arc.
    pub tube_radius: f64,
    /// Fraction by which the radius shrinks toward the ends.
    pub taper: f64,
    pub segments: usize,
    pub sides: usize,
    pub cap_rings: usize,
}

impl Default for BentTubeParams {
    fn default() -> Self {
        BentTubeParams {
            bend_radius: 0.5,
            bend_angle_deg: 110.0,
            tube_radius: 0.09,
            taper: 0.4,
            segments: 48,
            sides: 20,
            cap_rings: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TorusParams {
    pub major_radius: f64,
    pub minor_radius: f64,
    pub segments: usize,
    pub sides: usize,
}

impl Default for TorusParams {
    fn default() -> Self {
        TorusParams {
            major_radius: 0.4,
            minor_radius: 0.1,
            segments: 48,
            sides: 24,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RingParams {
    /// Radius of the band's centerline.
    pub radius: f64,
    /// Radial wall thickness.
    pub thickness: f64,
    /// Band height along y.
    pub band_width: f64,
    pub segments: usize,
    pub sides: usize,
}

impl Default for RingParams {
    fn default() -> Self {
        RingParams {
            radius: 0.4,
            thickness: 0.04,
            band_width: 0.1,
            segments: 64,
            sides: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SphereParams {
    pub radius: f64,
    pub subdivisions: u32,
}

impl Default for SphereParams {
    fn default() -> Self {
        SphereParams {
            radius: 0.5,
            subdivisions: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoxParams {
    pub size: [f64; 3],
    /// Grid cells per box edge.
    pub subdivisions: usize,
}

impl Default for BoxParams {
    fn default() -> Self {
        BoxParams {
            size: [1.0, 1.0, 1.0],
            subdivisions: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlockParams {
    pub size: [f64; 3],
    /// Grid cells per unit length on each face.
    pub cells_per_unit: f64,
}

impl Default for BlockParams {
    fn default() -> Self {
        BlockParams {
            size: [2.0, 1.0, 1.0],
            cells_per_unit: 6.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShapeParams {
    Elongated(CapsuleParams),
    BentTube(BentTubeParams),
    Torus(TorusParams),
    ThinRing(RingParams),
    Sphere(SphereParams),
    Box(BoxParams),
    Block(BlockParams),
}

impl ShapeParams {
    pub fn default_for(kind: ShapeKind) -> ShapeParams {
        match kind {
            ShapeKind::Elongated => ShapeParams::Elongated(Default::default()),
            ShapeKind::BentTube => ShapeParams::BentTube(Default::default()),
            ShapeKind::Torus => ShapeParams::Torus(Default::default()),
            ShapeKind::ThinRing => ShapeParams::ThinRing(Default::default()),
            ShapeKind::Sphere => ShapeParams::Sphere(Default::default()),
            ShapeKind::Box => ShapeParams::Box(Default::default()),
            ShapeKind::Block => ShapeParams::Block(Default::default()),
        }
    }

    pub fn kind(&self) -> ShapeKind {
        match self {
            ShapeParams::Elongated(_) => ShapeKind::Elongated,
            ShapeParams::BentTube(_) => ShapeKind::BentTube,
            ShapeParams::Torus(_) => ShapeKind::Torus,
            ShapeParams::ThinRing(_) => ShapeKind::ThinRing,
            ShapeParams::Sphere(_) => ShapeKind::Sphere,
            ShapeParams::Box(_) => ShapeKind::Box,
            ShapeParams::Block(_) => ShapeKind::Block,
        }
    }
}

/// Shape parameters plus the seed and amplitude of an optional deterministic
/// surface perturbation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    #[serde(flatten)]
    pub params: ShapeParams,
    #[serde(default)]
    pub seed: u64,
    /// Maximum displacement along the vertex normal, in model units.
    #[serde(default)]
    pub noise: f64,
}

impl GeneratorSpec {
    pub fn new(params: ShapeParams) -> Self {
        GeneratorSpec {
            params,
            seed: 0,
            noise: 0.0,
        }
    }

    pub fn kind(kind: ShapeKind) -> Self {
        Self::new(ShapeParams::default_for(kind))
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParams(msg.into())
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be positive, got {v}")))
    }
}

fn at_least(name: &str, v: usize, min: usize) -> Result<()> {
    if v >= min {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be at least {min}, got {v}")))
    }
}

pub fn gen_shape(spec: &GeneratorSpec) -> Result<TriMesh> {
    let mut mesh = match &spec.params {
        ShapeParams::Elongated(p) => capsule(p)?,
        ShapeParams::BentTube(p) => bent_tube(p)?,
        ShapeParams::Torus(p) => torus(p)?,
        ShapeParams::ThinRing(p) => ring(p)?,
        ShapeParams::Sphere(p) => icosphere(p)?,
        ShapeParams::Box(p) => {
            at_least("subdivisions", p.subdivisions, 1)?;
            lattice_box(p.size, [p.subdivisions; 3])?
        }
        ShapeParams::Block(p) => {
            positive("cells_per_unit", p.cells_per_unit)?;
            let cells = p.size.map(|s| ((s * p.cells_per_unit).round() as usize).max(1));
            lattice_box(p.size, cells)?
        }
    };
    if spec.noise != 0.0 {
        if !(spec.noise.is_finite() && spec.noise > 0.0) {
            return Err(invalid(format!("noise must be non-negative, got {}", spec.noise)));
        }
        perturb(&mut mesh, spec.noise, spec.seed)?;
    }
    Ok(mesh)
}

/// Stitches a sequence of vertex rings (each with `sides` vertices) into a
/// closed surface, optionally capped by single pole vertices, then orients
/// faces outward.
fn ring_surface(rings: &[Vec<Vec3>], closed: bool, start_pole: Option<Vec3>, end_pole: Option<Vec3>) -> Result<TriMesh> {
    let sides = rings[0].len();
    let mut vertices: Vec<Vec3> = rings.iter().flatten().copied().collect();
    let idx = |r: usize, s: usize| (r * sides + s % sides) as u32;
    let mut faces = Vec::new();
    let spans = if closed { rings.len() } else { rings.len() - 1 };
    for r in 0..spans {
        let r1 = (r + 1) % rings.len();
        for s in 0..sides {
            let a = idx(r, s);
            let b = idx(r1, s);
            let c = idx(r1, s + 1);
            let d = idx(r, s + 1);
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    if let Some(p) = start_pole {
        let pole = vertices.len() as u32;
        vertices.push(p);
        for s in 0..sides {
            faces.push([pole, idx(0, s + 1), idx(0, s)]);
        }
    }
    if let Some(p) = end_pole {
        let pole = vertices.len() as u32;
        vertices.push(p);
        let last = rings.len() - 1;
        for s in 0..sides {
            faces.push([pole, idx(last, s), idx(last, s + 1)]);
        }
    }
    let mut mesh = TriMesh::new(vertices, faces)?;
    if mesh.signed_volume() < 0.0 {
        mesh.flip_faces();
    }
    Ok(mesh)
}

fn circle(center: Vec3, u: Vec3, v: Vec3, ru: f64, rv: f64, sides: usize) -> Vec<Vec3> {
    (0..sides)
        .map(|s| {
            let a = TAU * s as f64 / sides as f64;
            center + u * (ru * a.cos()) + v * (rv * a.sin())
        })
        .collect()
}

fn capsule(p: &CapsuleParams) -> Result<TriMesh> {
    positive("radius", p.radius)?;
    positive("length", p.length)?;
    if p.length <= 2.0 * p.radius {
        return Err(invalid("capsule length must exceed its diameter"));
    }
    at_least("sides", p.sides, 3)?;
    at_least("cap_rings", p.cap_rings, 1)?;
    at_least("body_rings", p.body_rings, 1)?;
    let r = p.radius;
    let half = p.length / 2.0 - r;
    let (ex, ez) = (Vec3::x(), Vec3::z());
    let mut rings = Vec::new();
    for i in 1..=p.cap_rings {
        let phi = FRAC_PI_2 * i as f64 / p.cap_rings as f64;
        let rho = r * phi.sin();
        rings.push(circle(Vec3::new(0.0, half + r * phi.cos(), 0.0), ex, ez, rho, rho, p.sides));
    }
    for i in 1..=p.body_rings {
        let y = half - 2.0 * half * i as f64 / p.body_rings as f64;
        rings.push(circle(Vec3::new(0.0, y, 0.0), ex, ez, r, r, p.sides));
    }
    for i in 1..p.cap_rings {
        let phi = FRAC_PI_2 + FRAC_PI_2 * i as f64 / p.cap_rings as f64;
        let rho = r * phi.sin();
        rings.push(circle(Vec3::new(0.0, -half + r * phi.cos(), 0.0), ex, ez, rho, rho, p.sides));
    }
    ring_surface(
        &rings,
        false,
        Some(Vec3::new(0.0, half + r, 0.0)),
        Some(Vec3::new(0.0, -half - r, 0.0)),
    )
}

fn bent_tube(p: &BentTubeParams) -> Result<TriMesh> {
    positive("bend_radius", p.bend_radius)?;
    positive("tube_radius", p.tube_radius)?;
    positive("bend_angle_deg", p.bend_angle_deg)?;
    if p.bend_angle_deg >= 300.0 {
        return Err(invalid("bend angle must stay below 300 degrees"));
    }
    if !(0.0..1.0).contains(&p.taper) {
        return Err(invalid("taper must lie in [0, 1)"));
    }
    if p.tube_radius >= p.bend_radius {
        return Err(invalid("tube radius must be smaller than the bend radius"));
    }
    at_least("segments", p.segments, 2)?;
    at_least("sides", p.sides, 3)?;
    at_least("cap_rings", p.cap_rings, 1)?;

    let half_angle = p.bend_angle_deg.to_radians() / 2.0;
    let frame = |a: f64| {
        let center = Vec3::new(a.sin(), -a.cos(), 0.0) * p.bend_radius;
        let tangent = Vec3::new(a.cos(), a.sin(), 0.0);
        let normal = Vec3::new(a.sin(), -a.cos(), 0.0);
        let rel = a / half_angle;
        let radius = p.tube_radius * (1.0 - p.taper * rel * rel);
        (center, tangent, normal, radius)
    };
    let binormal = Vec3::z();
    let mut rings = Vec::new();

    let (c0, t0, n0, r0) = frame(-half_angle);
    for i in 1..p.cap_rings {
        let phi = FRAC_PI_2 * i as f64 / p.cap_rings as f64;
        let center = c0 - t0 * (r0 * phi.cos());
        rings.push(circle(center, n0, binormal, r0 * phi.sin(), r0 * phi.sin(), p.sides));
    }
    for i in 0..=p.segments {
        let a = -half_angle + 2.0 * half_angle * i as f64 / p.segments as f64;
        let (c, _, n, r) = frame(a);
        rings.push(circle(c, n, binormal, r, r, p.sides));
    }
    let (c1, t1, n1, r1) = frame(half_angle);
    for i in (1..p.cap_rings).rev() {
        let phi = FRAC_PI_2 * i as f64 / p.cap_rings as f64;
        let center = c1 + t1 * (r1 * phi.cos());
        rings.push(circle(center, n1, binormal, r1 * phi.sin(), r1 * phi.sin(), p.sides));
    }
    ring_surface(&rings, false, Some(c0 - t0 * r0), Some(c1 + t1 * r1))
}

fn torus_like(major: f64, radial: f64, axial: f64, segments: usize, sides: usize) -> Result<TriMesh> {
    let rings: Vec<Vec<Vec3>> = (0..segments)
        .map(|j| {
            let u = TAU * j as f64 / segments as f64;
            let dir = Vec3::new(u.cos(), 0.0, u.sin());
            circle(dir * major, dir, Vec3::y(), radial, axial, sides)
        })
        .collect();
    ring_surface(&rings, true, None, None)
}

fn torus(p: &TorusParams) -> Result<TriMesh> {
    positive("major_radius", p.major_radius)?;
    positive("minor_radius", p.minor_radius)?;
    if p.minor_radius >= p.major_radius {
        return Err(invalid("torus minor radius must be smaller than the major radius"));
    }
    at_least("segments", p.segments, 3)?;
    at_least("sides", p.sides, 3)?;
    torus_like(p.major_radius, p.minor_radius, p.minor_radius, p.segments, p.sides)
}

fn ring(p: &RingParams) -> Result<TriMesh> {
    positive("radius", p.radius)?;
    positive("thickness", p.thickness)?;
    positive("band_width", p.band_width)?;
    if p.thickness / 2.0 >= p.radius {
        return Err(invalid("ring thickness must be smaller than its diameter"));
    }
    at_least("segments", p.segments, 3)?;
    at_least("sides", p.sides, 3)?;
    torus_like(p.radius, p.thickness / 2.0, p.band_width / 2.0, p.segments, p.sides)
}

fn icosphere(p: &SphereParams) -> Result<TriMesh> {
    positive("radius", p.radius)?;
    if p.subdivisions > 7 {
        return Err(invalid("at most 7 sphere subdivisions"));
    }
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..p.subdivisions {
        let mut midpoints: HashMap<(u32, u32), u32> = HashMap::new();
        let mut mid = |a: u32, b: u32, vertices: &mut Vec<Vec3>| {
            *midpoints.entry((a.min(b), a.max(b))).or_insert_with(|| {
                let m = ((vertices[a as usize] + vertices[b as usize]) * 0.5).normalize();
                vertices.push(m);
                (vertices.len() - 1) as u32
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for [a, b, c] in faces {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    for v in &mut vertices {
        *v *= p.radius;
    }
    let mut mesh = TriMesh::new(vertices, faces)?;
    if mesh.signed_volume() < 0.0 {
        mesh.flip_faces();
    }
    Ok(mesh)
}

/// Axis-aligned box centered at the origin whose faces are split into a
/// regular grid of `cells` per axis. Vertices are welded through their
/// integer lattice coordinates.
fn lattice_box(size: [f64; 3], cells: [usize; 3]) -> Result<TriMesh> {
    for (axis, s) in size.iter().enumerate() {
        positive(&format!("size[{axis}]"), *s)?;
    }
    if cells.iter().product::<usize>() > 1_000_000 {
        return Err(invalid("box subdivision too fine"));
    }
    let mut index: HashMap<[usize; 3], u32> = HashMap::new();
    let mut vertices = Vec::new();
    let mut vertex = |l: [usize; 3], vertices: &mut Vec<Vec3>| -> u32 {
        *index.entry(l).or_insert_with(|| {
            let p = Vec3::new(
                size[0] * (l[0] as f64 / cells[0] as f64 - 0.5),
                size[1] * (l[1] as f64 / cells[1] as f64 - 0.5),
                size[2] * (l[2] as f64 / cells[2] as f64 - 0.5),
            );
            vertices.push(p);
            (vertices.len() - 1) as u32
        })
    };
    let mut faces = Vec::new();
    for axis in 0..3 {
        for positive_side in [false, true] {
            // (u, v) cyclic after `axis` gives u x v = +axis; swap for the low side.
            let (u, v) = if positive_side {
                ((axis + 1) % 3, (axis + 2) % 3)
            } else {
                ((axis + 2) % 3, (axis + 1) % 3)
            };
            let fixed = if positive_side { cells[axis] } else { 0 };
            for a in 0..cells[u] {
                for b in 0..cells[v] {
                    let corner = |du: usize, dv: usize| {
                        let mut l = [0; 3];
                        l[axis] = fixed;
                        l[u] = a + du;
                        l[v] = b + dv;
                        l
                    };
                    let p00 = vertex(corner(0, 0), &mut vertices);
                    let p10 = vertex(corner(1, 0), &mut vertices);
                    let p11 = vertex(corner(1, 1), &mut vertices);
                    let p01 = vertex(corner(0, 1), &mut vertices);
                    faces.push([p00, p10, p11]);
                    faces.push([p00, p11, p01]);
                }
            }
        }
    }
    TriMesh::new(vertices, faces)
}

fn perturb(mesh: &mut TriMesh, amplitude: f64, seed: u64) -> Result<()> {
    let mut normals = vec![Vec3::zeros(); mesh.vertex_count()];
    for (f, face) in mesh.faces().iter().enumerate() {
        let n = mesh.face_cross(f);
        for &i in face {
            normals[i as usize] += n;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let moved: Vec<Vec3> = mesh
        .vertices()
        .iter()
        .zip(&normals)
        .map(|(v, n)| {
            let d = amplitude * (2.0 * rng.random::<f64>() - 1.0);
            match n.try_normalize(1e-300) {
                Some(n) => v + n * d,
                None => *v,
            }
        })
        .collect();
    let rebuilt = TriMesh::new(moved, mesh.faces().to_vec())?;
    *mesh = rebuilt;
    Ok(())
}
