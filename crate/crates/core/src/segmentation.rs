//! Brush-stroke vertex painting that produces keep/drop selection masks.
//!
//! Strokes are given in world space together with the mesh's world placement.
//! The path is pulled back into mesh-local space and the brush radius is
//! divided by the placement's uniform scale, so painting looks the same no
//! matter how the asset has been moved or resized. Distance is Euclidean,
//! measured from each vertex to the stroke polyline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Transform3, TriMesh, Vec3};

/// Placements whose singular values differ by more than this ratio are
/// rejected: a spherical brush has no meaningful local shape under them.
pub const MAX_BRUSH_ANISOTROPY: f64 = 1.2;

/// Per-vertex keep (`true`) / drop (`false`) flags.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SelectionMask(Vec<bool>);

impl SelectionMask {
    pub fn all(len: usize, kept: bool) -> Self {
        SelectionMask(vec![kept; len])
    }

    pub fn from_bools(kept: Vec<bool>) -> Self {
        SelectionMask(kept)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_kept(&self, vertex: usize) -> bool {
        self.0[vertex]
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.0.iter().copied()
    }

    pub fn kept_count(&self) -> usize {
        self.0.iter().filter(|&&k| k).count()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BrushMode {
    Keep,
    Drop,
}

/// A painted stroke: a polyline in world space swept by a spherical brush.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "StrokeRecord", into = "StrokeRecord")]
pub struct BrushStroke {
    path: Vec<Vec3>,
    radius: f64,
    mode: BrushMode,
}

/// Wire form: `{"path": [[x,y,z], ...], "radius": r, "mode": "keep"|"drop"}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StrokeRecord {
    path: Vec<[f64; 3]>,
    radius: f64,
    mode: BrushMode,
}

impl TryFrom<StrokeRecord> for BrushStroke {
    type Error = Error;

    fn try_from(r: StrokeRecord) -> Result<Self> {
        BrushStroke::new(r.path.iter().map(|p| Vec3::new(p[0], p[1], p[2])).collect(), r.radius, r.mode)
    }
}

impl From<BrushStroke> for StrokeRecord {
    fn from(s: BrushStroke) -> Self {
        StrokeRecord {
            path: s.path.iter().map(|p| [p.x, p.y, p.z]).collect(),
            radius: s.radius,
            mode: s.mode,
        }
    }
}

impl BrushStroke {
    pub fn new(path: Vec<Vec3>, radius: f64, mode: BrushMode) -> Result<Self> {
        if path.is_empty() {
            return Err(Error::InvalidParams("stroke path is empty".into()));
        }
        if path.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidParams("stroke path has non-finite points".into()));
        }
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::InvalidParams(format!("brush radius must be positive, got {radius}")));
        }
        Ok(BrushStroke { path, radius, mode })
    }

    pub fn path(&self) -> &[Vec3] {
        &self.path
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn mode(&self) -> BrushMode {
        self.mode
    }

    /// Re-expresses the stroke in the local frame of a mesh placed at
    /// `world`: path mapped through the inverse placement, radius divided by
    /// the placement's scale.
    pub fn to_local(&self, world: &Transform3) -> Result<BrushStroke> {
        let ratio = world.anisotropy();
        if ratio > MAX_BRUSH_ANISOTROPY {
            return Err(Error::AnisotropicScale {
                ratio,
                limit: MAX_BRUSH_ANISOTROPY,
            });
        }
        if world.is_identity() {
            return Ok(self.clone());
        }
        let inv = world.inverse();
        BrushStroke::new(
            self.path.iter().map(|p| inv.transform_point(p)).collect(),
            self.radius / world.scale_factor(),
            self.mode,
        )
    }
}

fn point_segment_dist2(p: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 > 0.0 {
        ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p - (a + ab * t)).norm_squared()
}

fn polyline_dist2(p: &Vec3, path: &[Vec3]) -> f64 {
    if path.len() == 1 {
        return (p - path[0]).norm_squared();
    }
    path.windows(2)
        .map(|w| point_segment_dist2(p, &w[0], &w[1]))
        .fold(f64::INFINITY, f64::min)
}

/// Paints `stroke` onto `mesh` placed at `world_transform` and returns the
/// updated mask. Vertices within the effective local radius of the path take
/// the stroke's mode; all others keep their current flag.
pub fn apply_stroke(mesh: &TriMesh, stroke: &BrushStroke, world_transform: &Transform3) -> Result<SelectionMask> {
    let local = stroke.to_local(world_transform)?;
    let r2 = local.radius * local.radius;
    let value = local.mode == BrushMode::Keep;
    let mut kept = mesh.mask().as_slice().to_vec();
    for (flag, v) in kept.iter_mut().zip(mesh.vertices()) {
        if polyline_dist2(v, &local.path) <= r2 {
            *flag = value;
        }
    }
    Ok(SelectionMask(kept))
}

pub fn set_all(mesh: &TriMesh, kept: bool) -> SelectionMask {
    SelectionMask::all(mesh.vertex_count(), kept)
}

/// `(kept, total)` vertex counts.
pub fn mask_stats(mask: &SelectionMask) -> (usize, usize) {
    (mask.kept_count(), mask.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{extract_submesh, gen_shape, GeneratorSpec, ShapeKind};

    fn single_vertex_mesh(p: Vec3) -> TriMesh {
        // Triangle whose other two vertices are far away.
        TriMesh::new(vec![p, Vec3::new(100.0, 0.0, 0.0), Vec3::new(0.0, 100.0, 0.0)], vec![[0, 1, 2]]).unwrap()
    }

    #[test]
    fn vertex_inside_radius_is_kept() {
        let mut m = single_vertex_mesh(Vec3::new(0.4, 0.0, 0.0));
        m.set_mask(set_all(&m, false)).unwrap();
        let stroke = BrushStroke::new(vec![Vec3::new(0.0, -1.0, 0.0), Vec3::new(0.0, 1.0, 0.0)], 0.5, BrushMode::Keep)
            .unwrap();
        let mask = apply_stroke(&m, &stroke, &Transform3::identity()).unwrap();
        assert_eq!(mask.as_slice(), &[true, false, false]);
    }

    #[test]
    fn world_scale_shrinks_local_radius() {
        let stroke = BrushStroke::new(vec![Vec3::zeros()], 0.5, BrushMode::Drop).unwrap();
        let local = stroke.to_local(&Transform3::uniform_scale(2.0).unwrap()).unwrap();
        assert!((local.radius() - 0.25).abs() < 1e-15);
        // A vertex at local distance 0.3 is now outside the brush.
        let m = single_vertex_mesh(Vec3::new(0.3, 0.0, 0.0));
        let mask = apply_stroke(&m, &stroke, &Transform3::uniform_scale(2.0).unwrap()).unwrap();
        assert!(mask.is_kept(0));
        let m = single_vertex_mesh(Vec3::new(0.2, 0.0, 0.0));
        let mask = apply_stroke(&m, &stroke, &Transform3::uniform_scale(2.0).unwrap()).unwrap();
        assert!(!mask.is_kept(0));
    }

    #[test]
    fn anisotropic_and_singular_placements_rejected() {
        let m = single_vertex_mesh(Vec3::zeros());
        let stroke = BrushStroke::new(vec![Vec3::zeros()], 0.5, BrushMode::Drop).unwrap();
        let squash = Transform3::scale(Vec3::new(1.0, 1.0, 2.0)).unwrap();
        assert!(matches!(apply_stroke(&m, &stroke, &squash), Err(Error::AnisotropicScale { .. })));
        let mild = Transform3::scale(Vec3::new(1.0, 1.0, 1.1)).unwrap();
        assert!(apply_stroke(&m, &stroke, &mild).is_ok());
        assert!(Transform3::scale(Vec3::new(1.0, 0.0, 1.0)).is_err());
    }

    #[test]
    fn stroke_validation() {
        assert!(BrushStroke::new(vec![], 1.0, BrushMode::Keep).is_err());
        assert!(BrushStroke::new(vec![Vec3::zeros()], 0.0, BrushMode::Keep).is_err());
        let json = r#"{"path":[[0,0,0],[1,0,0]],"radius":0.1,"mode":"drop"}"#;
        let s: BrushStroke = serde_json::from_str(json).unwrap();
        assert_eq!(s.mode(), BrushMode::Drop);
        assert_eq!(serde_json::to_string(&s).unwrap(), r#"{"path":[[0.0,0.0,0.0],[1.0,0.0,0.0]],"radius":0.1,"mode":"drop"}"#);
        assert!(serde_json::from_str::<BrushStroke>(r#"{"path":[],"radius":0.1,"mode":"drop"}"#).is_err());
    }

    #[test]
    fn set_all_and_stats() {
        let m = gen_shape(&GeneratorSpec::kind(ShapeKind::Box)).unwrap();
        assert_eq!(mask_stats(&set_all(&m, true)), (8, 8));
        assert_eq!(mask_stats(&set_all(&m, false)), (0, 8));
        let mut copy = m.clone();
        copy.set_mask(set_all(&m, true)).unwrap();
        assert_eq!(extract_submesh(&copy).unwrap(), m);
    }

    #[test]
    fn hemisphere_stroke_on_icosphere() {
        let mut m = gen_shape(&GeneratorSpec::kind(ShapeKind::Sphere)).unwrap();
        m.set_mask(set_all(&m, false)).unwrap();
        // A brush of radius 0.5 * sqrt(2) centered at the north pole reaches
        // exactly the equator of a radius 0.5 sphere.
        let stroke = BrushStroke::new(vec![Vec3::new(0.0, 0.0, 0.5)], 0.5 * 2f64.sqrt() - 1e-9, BrushMode::Keep).unwrap();
        let mask = apply_stroke(&m, &stroke, &Transform3::identity()).unwrap();
        let oracle = m.vertices().iter().filter(|v| v.z > 1e-9).count();
        let (kept, total) = mask_stats(&mask);
        assert_eq!(kept, oracle);
        let frac = kept as f64 / total as f64;
        assert!((frac - 0.5).abs() <= 0.1, "{frac}");
    }

    #[test]
    fn keep_then_drop_last_write_wins() {
        let mut m = gen_shape(&GeneratorSpec::kind(ShapeKind::Sphere)).unwrap();
        m.set_mask(set_all(&m, false)).unwrap();
        let keep = BrushStroke::new(vec![Vec3::new(0.0, 0.0, 0.5)], 0.6, BrushMode::Keep).unwrap();
        let drop = BrushStroke::new(vec![Vec3::new(0.0, 0.0, 0.5)], 0.2, BrushMode::Drop).unwrap();
        let after_keep = apply_stroke(&m, &keep, &Transform3::identity()).unwrap();
        m.set_mask(after_keep.clone()).unwrap();
        let after_drop = apply_stroke(&m, &drop, &Transform3::identity()).unwrap();
        for (i, v) in m.vertices().iter().enumerate() {
            let d = (v - Vec3::new(0.0, 0.0, 0.5)).norm();
            let expected = d > 0.2 && d <= 0.6;
            assert_eq!(after_drop.is_kept(i), expected);
        }
        assert!(after_drop.kept_count() > 0 && after_drop.kept_count() < after_keep.kept_count());
    }
}
