//! Sparse latent volumes: the voxel representation every part is encoded
//! into before composition.
//!
//! A volume is a set of active voxels on an `R³` grid, each carrying a feature
//! vector. The built-in encoder stores the mean surface color followed by the
//! mean surface normal (`D = 6`); any further channels are zero. Features are
//! carried verbatim through filtering and union, so the decoder only ever sees
//! values that came out of the encoder.

use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{Aabb, SurfaceSampler, Transform3, TriMesh, Vec3};
use crate::segmentation::SelectionMask;
use crate::spatial::KdTree;

/// Leading feature channels: RGB color, then the mean normal.
pub const COLOR_CHANNELS: std::ops::Range<usize> = 0..3;
pub const NORMAL_CHANNELS: std::ops::Range<usize> = 3..6;
pub const BASE_FEATURE_DIM: usize = 6;

pub const MIN_RESOLUTION: usize = 8;
pub const MAX_RESOLUTION: usize = 256;

/// Upper bound on encoder samples, whatever the requested density.
const MAX_ENCODE_SAMPLES: usize = 16_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseLatentVolume {
    resolution: usize,
    voxels: Vec<[u32; 3]>,
    features: Vec<f64>,
    dim: usize,
    grid_to_world: Transform3,
}

impl SparseLatentVolume {
    /// Builds a volume, checking that coordinates are in range and unique and
    /// that there is one `dim`-vector per voxel.
    pub fn new(
        resolution: usize,
        voxels: Vec<[u32; 3]>,
        features: Vec<f64>,
        dim: usize,
        grid_to_world: Transform3,
    ) -> Result<Self> {
        check_resolution(resolution)?;
        if dim == 0 || features.len() != voxels.len() * dim {
            return Err(Error::InvalidParams(format!(
                "{} feature values for {} voxels of dimension {dim}",
                features.len(),
                voxels.len()
            )));
        }
        let mut seen = vec![false; resolution.pow(3)];
        for v in &voxels {
            if v.iter().any(|&c| c as usize >= resolution) {
                return Err(Error::InvalidParams(format!("voxel {v:?} outside a {resolution}³ grid")));
            }
            let idx = linear_index(resolution, v);
            if std::mem::replace(&mut seen[idx], true) {
                return Err(Error::InvalidParams(format!("duplicate voxel {v:?}")));
            }
        }
        Ok(SparseLatentVolume {
            resolution,
            voxels,
            features,
            dim,
            grid_to_world,
        })
    }

    pub fn empty_like(&self) -> Self {
        SparseLatentVolume {
            resolution: self.resolution,
            voxels: Vec::new(),
            features: Vec::new(),
            dim: self.dim,
            grid_to_world: self.grid_to_world,
        }
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn voxels(&self) -> &[[u32; 3]] {
        &self.voxels
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn feature(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn grid_to_world(&self) -> &Transform3 {
        &self.grid_to_world
    }

    pub fn len(&self) -> usize {
        self.voxels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.is_empty()
    }

    /// World-space edge length of one voxel (cube root of the frame's volume
    /// scale).
    pub fn voxel_size(&self) -> f64 {
        self.grid_to_world.scale_factor()
    }

    pub fn world_center(&self, i: usize) -> Vec3 {
        let v = self.voxels[i];
        self.grid_to_world.transform_point(&Vec3::new(
            v[0] as f64 + 0.5,
            v[1] as f64 + 0.5,
            v[2] as f64 + 0.5,
        ))
    }

    pub fn world_centers(&self) -> Vec<Vec3> {
        (0..self.len()).map(|i| self.world_center(i)).collect()
    }

    /// Writes `i,j,k,f0..` rows to `csv_path` and the grid description to a
    /// sibling `.json` file.
    pub fn write_debug_dump(&self, csv_path: &Path) -> Result<()> {
        let mut out = String::from("i,j,k");
        for d in 0..self.dim {
            out.push_str(&format!(",f{d}"));
        }
        out.push('\n');
        for (n, v) in self.voxels.iter().enumerate() {
            out.push_str(&format!("{},{},{}", v[0], v[1], v[2]));
            for f in self.feature(n) {
                out.push_str(&format!(",{f}"));
            }
            out.push('\n');
        }
        std::fs::write(csv_path, out).map_err(|e| Error::io(csv_path, e))?;

        #[derive(Serialize)]
        struct Header {
            resolution: usize,
            feature_dim: usize,
            voxel_count: usize,
            grid_to_world: [f64; 16],
        }
        let header = Header {
            resolution: self.resolution,
            feature_dim: self.dim,
            voxel_count: self.len(),
            grid_to_world: self.grid_to_world.to_rows(),
        };
        let json_path = csv_path.with_extension("json");
        let mut f = std::fs::File::create(&json_path).map_err(|e| Error::io(&json_path, e))?;
        serde_json::to_writer_pretty(&mut f, &header).map_err(|e| Error::InvalidParams(e.to_string()))?;
        f.write_all(b"\n").map_err(|e| Error::io(&json_path, e))
    }
}

#[inline]
fn linear_index(r: usize, v: &[u32; 3]) -> usize {
    (v[2] as usize * r + v[1] as usize) * r + v[0] as usize
}

pub(crate) fn check_resolution(r: usize) -> Result<()> {
    if !(MIN_RESOLUTION..=MAX_RESOLUTION).contains(&r) {
        return Err(Error::InvalidParams(format!(
            "resolution {r} outside [{MIN_RESOLUTION}, {MAX_RESOLUTION}]"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncodeParams {
    pub resolution: usize,
    /// Surface samples per voxel-face area (`h²`) of mesh surface. The shell
    /// must be dense enough that no voxel the surface crosses substantially
    /// is missed, or flood fill would leak through it.
    pub samples_per_voxel: f64,
    pub seed: u64,
    pub feature_dim: usize,
}

impl Default for EncodeParams {
    fn default() -> Self {
        EncodeParams {
            resolution: 64,
            samples_per_voxel: 64.0,
            seed: 0,
            feature_dim: BASE_FEATURE_DIM,
        }
    }
}

/// Encodes a mesh's surface into a sparse volume.
///
/// The grid covers the mesh's bounding cube with one spare voxel on every
/// side, so the longest bbox side spans `R - 2` voxels. A voxel is active
/// when at least one area-weighted surface sample lands in it.
pub fn encode_mesh(mesh: &TriMesh, params: &EncodeParams) -> Result<SparseLatentVolume> {
    let r = params.resolution;
    check_resolution(r)?;
    if params.feature_dim < BASE_FEATURE_DIM {
        return Err(Error::InvalidParams(format!(
            "feature dimension must be at least {BASE_FEATURE_DIM}"
        )));
    }
    if !(params.samples_per_voxel > 0.0) {
        return Err(Error::InvalidParams("samples_per_voxel must be positive".into()));
    }
    let bb = mesh.bbox().ok_or(Error::EmptyMesh)?;
    let frame = crate::voxel::cubic_frame(&bb, r, 1)?;
    let h = frame.scale_factor();
    let origin = frame.translation_part();
    let sampler = SurfaceSampler::new(mesh)?;
    let wanted = (params.samples_per_voxel * sampler.total_area() / (h * h)).ceil();
    let n = (wanted as usize).clamp(1, MAX_ENCODE_SAMPLES);

    let normals: Vec<Vec3> = (0..mesh.face_count())
        .map(|f| mesh.face_cross(f).try_normalize(0.0).unwrap_or_else(Vec3::zeros))
        .collect();

    // Running sums per cell: color (3), normal (3), count.
    let mut slot = vec![u32::MAX; r.pow(3)];
    let mut sums: Vec<[f64; 7]> = Vec::new();
    let mut cells: Vec<[u32; 3]> = Vec::new();
    let hi = (r - 2) as f64;
    for s in sampler.samples(n, params.seed) {
        let g = (s.point - origin) / h;
        let c = [0, 1, 2].map(|a| g[a].floor().clamp(1.0, hi) as u32);
        let idx = linear_index(r, &c);
        if slot[idx] == u32::MAX {
            slot[idx] = sums.len() as u32;
            sums.push([0.0; 7]);
            cells.push(c);
        }
        let acc = &mut sums[slot[idx] as usize];
        let color = match mesh.colors() {
            Some(colors) => {
                let f = mesh.faces()[s.face];
                let mut c = [0.0; 3];
                for (corner, w) in f.iter().zip(s.bary) {
                    for ch in 0..3 {
                        c[ch] += colors[*corner as usize][ch] * w;
                    }
                }
                c
            }
            None => [1.0; 3],
        };
        let nrm = normals[s.face];
        for ch in 0..3 {
            acc[ch] += color[ch];
            acc[3 + ch] += nrm[ch];
        }
        acc[6] += 1.0;
    }

    let mut order: Vec<usize> = (0..cells.len()).collect();
    order.sort_unstable_by_key(|&i| linear_index(r, &cells[i]));
    let dim = params.feature_dim;
    let mut voxels = Vec::with_capacity(order.len());
    let mut features = Vec::with_capacity(order.len() * dim);
    for i in order {
        voxels.push(cells[i]);
        let acc = &sums[i];
        let count = acc[6];
        features.extend(acc[..6].iter().map(|v| v / count));
        features.extend(std::iter::repeat_n(0.0, dim - BASE_FEATURE_DIM));
    }
    // Clamp color means that rounding pushed a hair outside [0, 1].
    for f in features.chunks_mut(dim) {
        for c in &mut f[COLOR_CHANNELS] {
            *c = c.clamp(0.0, 1.0);
        }
    }
    SparseLatentVolume::new(r, voxels, features, dim, frame)
}

/// Keeps the voxels whose center lies within `threshold_voxels` voxel edges
/// of the kept part of the mesh.
///
/// The kept part is every kept vertex plus every face whose three vertices
/// are kept. Measuring to faces as well as vertices keeps the rule meaningful
/// on coarse meshes whose edges are longer than a voxel, and makes an
/// all-kept mask retain every voxel the surface was sampled into.
pub fn filter_by_mask(
    vol: &SparseLatentVolume,
    mesh: &TriMesh,
    mask: &SelectionMask,
    threshold_voxels: f64,
) -> Result<SparseLatentVolume> {
    if mask.len() != mesh.vertex_count() {
        return Err(Error::MaskLength {
            mask: mask.len(),
            vertices: mesh.vertex_count(),
        });
    }
    if !(threshold_voxels > 0.0 && threshold_voxels.is_finite()) {
        return Err(Error::InvalidParams("selection threshold must be positive".into()));
    }
    let kept = mask.kept_count();
    if kept == mesh.vertex_count() && kept > 0 {
        return Ok(vol.clone());
    }
    if kept == 0 || vol.is_empty() {
        return Ok(vol.empty_like());
    }

    let r = vol.resolution;
    let radius = threshold_voxels * vol.voxel_size();
    let r2 = radius * radius;
    let to_grid = vol.grid_to_world.inverse();
    let mut slot = vec![u32::MAX; r.pow(3)];
    for (n, v) in vol.voxels.iter().enumerate() {
        slot[linear_index(r, v)] = n as u32;
    }
    let centers = vol.world_centers();
    let mut keep = vec![false; vol.len()];

    let mut visit = |bb: Aabb, test: &dyn Fn(&Vec3) -> bool| {
        let gb = bb.transformed(&to_grid);
        let lo = [0, 1, 2].map(|a| ((gb.min[a] - 0.5).floor().max(0.0) as usize).min(r - 1));
        let hi = [0, 1, 2].map(|a| ((gb.max[a] - 0.5).ceil().max(0.0) as usize).min(r - 1));
        for k in lo[2]..=hi[2] {
            for j in lo[1]..=hi[1] {
                for i in lo[0]..=hi[0] {
                    let s = slot[(k * r + j) * r + i];
                    if s != u32::MAX && !keep[s as usize] && test(&centers[s as usize]) {
                        keep[s as usize] = true;
                    }
                }
            }
        }
    };

    let pad = Vec3::repeat(radius);
    for (i, p) in mesh.vertices().iter().enumerate() {
        if mask.is_kept(i) {
            let bb = Aabb { min: p - pad, max: p + pad };
            visit(bb, &|c: &Vec3| (c - p).norm_squared() <= r2);
        }
    }
    for f in 0..mesh.face_count() {
        if mesh.faces()[f].iter().all(|&v| mask.is_kept(v as usize)) {
            let tri = mesh.triangle(f);
            let mut bb = Aabb::from_points(tri.iter()).expect("three points");
            bb.min -= pad;
            bb.max += pad;
            visit(bb, &|c: &Vec3| point_triangle_dist2(c, &tri) <= r2);
        }
    }

    let mut out = vol.empty_like();
    for (n, &k) in keep.iter().enumerate() {
        if k {
            out.voxels.push(vol.voxels[n]);
            out.features.extend_from_slice(vol.feature(n));
        }
    }
    Ok(out)
}

/// Squared distance from `p` to a triangle (closest-feature classification
/// from Ericson, *Real-Time Collision Detection*, 5.1.5).
pub(crate) fn point_triangle_dist2(p: &Vec3, tri: &[Vec3; 3]) -> f64 {
    let [a, b, c] = *tri;
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return ap.norm_squared();
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return bp.norm_squared();
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (p - (a + ab * v)).norm_squared();
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return cp.norm_squared();
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (p - (a + ac * w)).norm_squared();
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (p - (b + (c - b) * w)).norm_squared();
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (p - (a + ab * v + ac * w)).norm_squared()
}

/// Places a volume: `grid_to_world ← t · grid_to_world`. Voxel coordinates
/// are untouched; the normal channels are mapped by the linear block of `t`
/// divided by its scale factor, keeping each normal's length.
pub fn transform_volume(vol: &SparseLatentVolume, t: &Transform3) -> Result<SparseLatentVolume> {
    let det = t.determinant();
    if !(det.abs() > crate::geometry::SINGULAR_DET) {
        return Err(Error::SingularTransform { det });
    }
    if t.is_identity() {
        return Ok(vol.clone());
    }
    let mut out = vol.clone();
    out.grid_to_world = *t * vol.grid_to_world;
    let lin = t.linear() / t.scale_factor();
    for f in out.features.chunks_mut(vol.dim) {
        let n = Vec3::new(f[3], f[4], f[5]);
        let len = n.norm();
        if len == 0.0 {
            continue;
        }
        let m = lin * n;
        let m = match m.try_normalize(0.0) {
            Some(u) => u * len,
            None => continue,
        };
        f[NORMAL_CHANNELS].copy_from_slice(m.as_slice());
    }
    Ok(out)
}

/// Merges placed volumes into one volume on a fresh cubic grid.
///
/// The grid is fit to the union of all source voxel cells, padded by one
/// output voxel on every side, so the longest side of the joint extent spans
/// `R - 2` output voxels. The grid is anchored at the padded minimum corner;
/// a single volume unioned at its own resolution therefore lands on its own
/// lattice. An output voxel is active if a source voxel center lies inside it
/// or its center lies within half a source edge of a source center. Active
/// voxels copy the feature of the nearest source center; ties go to the
/// lowest (volume, voxel) index.
pub fn latent_union(vols: &[SparseLatentVolume], output_resolution: usize) -> Result<SparseLatentVolume> {
    let r = output_resolution;
    check_resolution(r)?;
    let sources: Vec<&SparseLatentVolume> = vols.iter().filter(|v| !v.is_empty()).collect();
    let Some(first) = sources.first() else {
        return Err(Error::EmptyVolume);
    };
    let dim = first.dim;
    if sources.iter().any(|v| v.dim != dim) {
        return Err(Error::InvalidParams("volumes have different feature dimensions".into()));
    }

    let mut centers = Vec::new();
    let mut halves = Vec::new();
    let mut bb: Option<Aabb> = None;
    for v in &sources {
        let half = v.voxel_size() / 2.0;
        for c in v.world_centers() {
            let cell = Aabb {
                min: c - Vec3::repeat(half),
                max: c + Vec3::repeat(half),
            };
            bb = Some(match bb {
                Some(b) => b.union(&cell),
                None => cell,
            });
            centers.push(c);
            halves.push(half);
        }
    }
    let bb = bb.expect("at least one voxel");
    let h = bb.longest_side() / (r - 2) as f64;
    let origin = bb.min - Vec3::repeat(h);
    let frame = Transform3::translation(origin) * Transform3::uniform_scale(h)?;

    let to_cell = |x: f64, a: usize| ((x - origin[a]) / h).floor();
    let mut active = vec![false; r.pow(3)];
    let in_grid = |c: [f64; 3]| c.iter().all(|&v| v >= 0.0 && v < r as f64);
    for (c, &half) in centers.iter().zip(&halves) {
        let cell = [0, 1, 2].map(|a| to_cell(c[a], a));
        if in_grid(cell) {
            active[(cell[2] as usize * r + cell[1] as usize) * r + cell[0] as usize] = true;
        }
        // Output centers within `half` of c.
        let lo = [0, 1, 2].map(|a| ((c[a] - half - origin[a]) / h - 0.5).ceil().max(0.0) as usize);
        let hi = [0, 1, 2].map(|a| {
            let v = ((c[a] + half - origin[a]) / h - 0.5).floor();
            if v < 0.0 {
                None
            } else {
                Some((v as usize).min(r - 1))
            }
        });
        let (Some(hx), Some(hy), Some(hz)) = (hi[0], hi[1], hi[2]) else {
            continue;
        };
        for k in lo[2]..=hz {
            for j in lo[1]..=hy {
                for i in lo[0]..=hx {
                    let oc = origin + Vec3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5) * h;
                    if (oc - c).norm_squared() <= half * half {
                        active[(k * r + j) * r + i] = true;
                    }
                }
            }
        }
    }

    let owner: Vec<(usize, usize)> = sources
        .iter()
        .enumerate()
        .flat_map(|(s, v)| (0..v.len()).map(move |i| (s, i)))
        .collect();
    let tree = KdTree::new(centers);
    let cells: Vec<usize> = (0..active.len()).filter(|&i| active[i]).collect();
    let nearest: Vec<usize> = cells
        .par_iter()
        .map(|&idx| {
            let c = [idx % r, (idx / r) % r, idx / (r * r)];
            let p = origin + Vec3::new(c[0] as f64 + 0.5, c[1] as f64 + 0.5, c[2] as f64 + 0.5) * h;
            tree.nearest(&p).expect("non-empty tree").0
        })
        .collect();

    let mut voxels = Vec::with_capacity(cells.len());
    let mut features = Vec::with_capacity(cells.len() * dim);
    for (&idx, &src) in cells.iter().zip(&nearest) {
        voxels.push([(idx % r) as u32, ((idx / r) % r) as u32, (idx / (r * r)) as u32]);
        let (s, i) = owner[src];
        features.extend_from_slice(sources[s].feature(i));
    }
    Ok(SparseLatentVolume {
        resolution: r,
        voxels,
        features,
        dim,
        grid_to_world: frame,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{gen_shape, GeneratorSpec, ShapeKind};
    use approx::assert_relative_eq;

    fn sphere() -> TriMesh {
        gen_shape(&GeneratorSpec::kind(ShapeKind::Sphere)).unwrap()
    }

    fn tiny(voxels: Vec<[u32; 3]>, feats: Vec<f64>, t: Transform3) -> SparseLatentVolume {
        SparseLatentVolume::new(8, voxels, feats, 1, t).unwrap()
    }

    #[test]
    fn constructor_rejects_duplicates_and_out_of_range() {
        let t = Transform3::identity();
        assert!(SparseLatentVolume::new(8, vec![[1, 1, 1], [1, 1, 1]], vec![0.0, 0.0], 1, t).is_err());
        assert!(SparseLatentVolume::new(8, vec![[8, 0, 0]], vec![0.0], 1, t).is_err());
        assert!(SparseLatentVolume::new(8, vec![[0, 0, 0]], vec![0.0, 1.0], 1, t).is_err());
    }

    #[test]
    fn single_triangle_normals() {
        let tri = TriMesh::new(
            vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let vol = encode_mesh(&tri, &EncodeParams { resolution: 8, ..Default::default() }).unwrap();
        assert!(!vol.is_empty());
        for i in 0..vol.len() {
            let f = vol.feature(i);
            assert_eq!(&f[COLOR_CHANNELS], &[1.0, 1.0, 1.0]);
            assert_relative_eq!(f[5], 1.0, epsilon = 1e-12);
            // Every active voxel is crossed by the z = 0 plane of the triangle.
            let c = vol.world_center(i);
            assert!(c.z.abs() <= vol.voxel_size() / 2.0 + 1e-12);
        }
    }

    #[test]
    fn sphere_shell_is_thin_and_complete() {
        let s = sphere();
        let vol = encode_mesh(&s, &EncodeParams::default()).unwrap();
        let h = vol.voxel_size();
        let diag = h * 3f64.sqrt() / 2.0;
        for c in vol.world_centers() {
            let d = c.norm();
            assert!((d - 0.5).abs() <= diag + 0.01, "center at radius {d}");
        }
        let again = encode_mesh(&s, &EncodeParams::default()).unwrap();
        assert_eq!(vol, again);
    }

    #[test]
    fn filter_all_and_none() {
        let s = sphere();
        let vol = encode_mesh(&s, &EncodeParams::default()).unwrap();
        let all = SelectionMask::all(s.vertex_count(), true);
        assert_eq!(filter_by_mask(&vol, &s, &all, 1.0).unwrap(), vol);
        let none = SelectionMask::all(s.vertex_count(), false);
        assert!(filter_by_mask(&vol, &s, &none, 1.0).unwrap().is_empty());
        let short = SelectionMask::all(3, true);
        assert!(matches!(filter_by_mask(&vol, &s, &short, 1.0), Err(Error::MaskLength { .. })));
    }

    #[test]
    fn transform_rotates_normals() {
        let vol = SparseLatentVolume::new(
            8,
            vec![[2, 2, 2]],
            vec![1.0, 1.0, 1.0, 1.0, 0.0, 0.0],
            6,
            Transform3::identity(),
        )
        .unwrap();
        let rot = Transform3::rotation_y(std::f64::consts::FRAC_PI_2);
        let out = transform_volume(&vol, &rot).unwrap();
        let f = out.feature(0);
        assert_relative_eq!(f[3], 0.0, epsilon = 1e-12);
        assert_relative_eq!(f[5], -1.0, epsilon = 1e-12);
        let scaled = transform_volume(&vol, &Transform3::uniform_scale(3.0).unwrap()).unwrap();
        assert_relative_eq!(scaled.feature(0)[3], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn transform_translation_shifts_centers() {
        let vol = encode_mesh(&sphere(), &EncodeParams { resolution: 16, ..Default::default() }).unwrap();
        let d = Vec3::new(0.25, -1.0, 3.0);
        let moved = transform_volume(&vol, &Transform3::translation(d)).unwrap();
        for i in 0..vol.len() {
            assert!((moved.world_center(i) - vol.world_center(i) - d).norm() < 1e-12);
        }
        let singular = Transform3::identity();
        assert!(transform_volume(&vol, &singular).is_ok());
    }

    #[test]
    fn union_of_one_volume_reproduces_support() {
        let vol = encode_mesh(&sphere(), &EncodeParams { resolution: 32, ..Default::default() }).unwrap();
        let out = latent_union(std::slice::from_ref(&vol), 32).unwrap();
        assert_eq!(out.len(), vol.len());
        let tree = KdTree::new(vol.world_centers());
        for c in out.world_centers() {
            let (_, d2) = tree.nearest(&c).unwrap();
            assert!(d2.sqrt() < 1e-9);
        }
        let empty = vol.empty_like();
        let with_empty = latent_union(&[vol.clone(), empty.clone()], 32).unwrap();
        assert_eq!(with_empty, out);
        assert!(matches!(latent_union(&[empty], 32), Err(Error::EmptyVolume)));
    }

    #[test]
    fn union_features_are_copied_not_blended() {
        let t = Transform3::identity();
        let a = tiny(vec![[1, 1, 1], [2, 1, 1]], vec![0.25, 0.5], t);
        let b = tiny(vec![[3, 1, 1]], vec![0.75], t);
        let out = latent_union(&[a, b], 8).unwrap();
        for f in out.features() {
            assert!([0.25, 0.5, 0.75].contains(f));
        }
    }

    #[test]
    fn union_tie_goes_to_first_volume() {
        let t = Transform3::identity();
        let a = tiny(vec![[1, 1, 1]], vec![1.0], t);
        let b = tiny(vec![[1, 1, 1]], vec![2.0], t);
        let ab = latent_union(&[a.clone(), b.clone()], 8).unwrap();
        let ba = latent_union(&[b, a], 8).unwrap();
        assert_eq!(ab.voxels(), ba.voxels());
        assert!(ab.features().iter().all(|&f| f == 1.0));
        assert!(ba.features().iter().all(|&f| f == 2.0));
    }

    #[test]
    fn point_triangle_distance_cases() {
        let tri = [Vec3::zeros(), Vec3::x(), Vec3::y()];
        assert_relative_eq!(point_triangle_dist2(&Vec3::new(0.2, 0.2, 1.0), &tri), 1.0);
        assert_relative_eq!(point_triangle_dist2(&Vec3::new(-1.0, -1.0, 0.0), &tri), 2.0);
        assert_relative_eq!(point_triangle_dist2(&Vec3::new(1.0, 1.0, 0.0), &tri), 0.5, epsilon = 1e-15);
        assert_relative_eq!(point_triangle_dist2(&Vec3::new(0.5, -2.0, 0.0), &tri), 4.0);
    }

    #[test]
    fn debug_dump_writes_csv_and_header() {
        let vol = encode_mesh(&sphere(), &EncodeParams { resolution: 8, ..Default::default() }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vol.csv");
        vol.write_debug_dump(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("i,j,k,f0,f1,f2,f3,f4,f5\n"));
        assert_eq!(text.lines().count(), vol.len() + 1);
        let header: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(path.with_extension("json")).unwrap()).unwrap();
        assert_eq!(header["resolution"], 8);
        assert_eq!(header["grid_to_world"].as_array().unwrap().len(), 16);
    }
}
