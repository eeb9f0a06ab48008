//! Restricted Wavefront OBJ reader/writer.
//!
//! Supported: `v x y z` and the colored `v x y z r g b` form, triangular `f`
//! records (`a`, `a/b`, `a//c`, `a/b/c`; negative indices are relative).
//! `vt`, `vn`, groups, objects, materials, smoothing and comments are skipped.

use std::fmt::Write as _;
use std::path::Path;

use super::{Rgb, TriMesh, Vec3};
use crate::error::{Error, Result};

pub fn load_mesh(path: impl AsRef<Path>) -> Result<TriMesh> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_obj(&text)
}

pub fn parse_obj(text: &str) -> Result<TriMesh> {
    let mut vertices = Vec::new();
    let mut colors: Vec<Rgb> = Vec::new();
    let mut colored: Option<bool> = None;
    let mut faces = Vec::new();

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let err = |message: String| Error::Parse { line, message };
        let content = raw.split('#').next().unwrap_or("").trim();
        let mut parts = content.split_whitespace();
        let Some(tag) = parts.next() else { continue };
        match tag {
            "v" => {
                let nums = parts
                    .map(|p| {
                        p.parse::<f64>()
                            .ok()
                            .filter(|v| v.is_finite())
                            .ok_or_else(|| err(format!("invalid number {p:?}")))
                    })
                    .collect::<Result<Vec<f64>>>()?;
                let has_color = match nums.len() {
                    3 => false,
                    6 => true,
                    n => return Err(err(format!("vertex needs 3 or 6 numbers, got {n}"))),
                };
                match colored {
                    None => colored = Some(has_color),
                    Some(c) if c != has_color => {
                        return Err(err("vertex colors present on some vertices only".into()))
                    }
                    _ => {}
                }
                vertices.push(Vec3::new(nums[0], nums[1], nums[2]));
                if has_color {
                    let c = [nums[3], nums[4], nums[5]];
                    if c.iter().any(|v| !(0.0..=1.0).contains(v)) {
                        return Err(err("color component outside [0, 1]".into()));
                    }
                    colors.push(c);
                }
            }
            "f" => {
                let idx = parts
                    .map(|p| {
                        let first = p.split('/').next().unwrap_or("");
                        let i: i64 = first
                            .parse()
                            .map_err(|_| err(format!("invalid face index {p:?}")))?;
                        let n = vertices.len() as i64;
                        let resolved = if i > 0 {
                            i - 1
                        } else if i < 0 {
                            n + i
                        } else {
                            return Err(err("face index 0 (OBJ indices are 1-based)".into()));
                        };
                        if resolved < 0 || resolved >= n {
                            return Err(err(format!("face index {i} out of range (have {n} vertices)")));
                        }
                        Ok(resolved as u32)
                    })
                    .collect::<Result<Vec<u32>>>()?;
                if idx.len() != 3 {
                    return Err(err(format!("only triangular faces are supported, got {}", idx.len())));
                }
                faces.push([idx[0], idx[1], idx[2]]);
            }
            "vt" | "vn" | "vp" | "o" | "g" | "s" | "usemtl" | "mtllib" | "l" => {}
            other => return Err(err(format!("unsupported record {other:?}"))),
        }
    }

    let mesh = TriMesh::new(vertices, faces)?;
    if colored == Some(true) {
        mesh.with_colors(colors)
    } else {
        Ok(mesh)
    }
}

/// Serializes a mesh as OBJ text. Positions use the shortest representation
/// that round-trips exactly; colors are written with six decimals.
pub fn write_obj(mesh: &TriMesh) -> String {
    let mut out = String::with_capacity(mesh.vertex_count() * 48 + mesh.face_count() * 24);
    for (i, v) in mesh.vertices().iter().enumerate() {
        match mesh.colors() {
            Some(c) => {
                let c = c[i];
                let _ = writeln!(out, "v {} {} {} {:.6} {:.6} {:.6}", v.x, v.y, v.z, c[0], c[1], c[2]);
            }
            None => {
                let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
            }
        }
    }
    for f in mesh.faces() {
        let _ = writeln!(out, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
    }
    out
}

pub fn save_mesh(mesh: &TriMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_obj(mesh)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{gen_shape, GeneratorSpec, ShapeKind};

    #[test]
    fn minimal_triangle() {
        let m = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n").unwrap();
        assert_eq!(m.vertex_count(), 3);
        assert_eq!(m.face_count(), 1);
        assert!(m.mask().iter().all(|k| k));
    }

    #[test]
    fn zero_index_is_a_parse_error() {
        match parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn slash_forms_and_ignored_records() {
        let text = "# header\no thing\nv 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nvn 0 0 1\nf 1/1/1 2//1 -1/1\n";
        let m = parse_obj(text).unwrap();
        assert_eq!(m.faces(), &[[0, 1, 2]]);
    }

    #[test]
    fn degenerate_face_lists_indices() {
        let text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\nf 1 1 2\nf 2 3 3\n";
        match parse_obj(text) {
            Err(Error::DegenerateFaces(f)) => assert_eq!(f, vec![1, 2]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn quads_and_mixed_colors_rejected() {
        assert!(parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nf 1 2 4 3\n").is_err());
        assert!(parse_obj("v 0 0 0 1 0 0\nv 1 0 0\n").is_err());
    }

    #[test]
    fn cube_round_trip() {
        let cube = gen_shape(&GeneratorSpec::kind(ShapeKind::Box))
        .unwrap();
        let back = parse_obj(&write_obj(&cube)).unwrap();
        assert_eq!(back.vertex_count(), 8);
        assert_eq!(back.face_count(), 12);
    }

    #[test]
    fn torus_round_trip_is_exact() {
        let t = gen_shape(&GeneratorSpec::kind(ShapeKind::Torus)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("torus.obj");
        save_mesh(&t, &path).unwrap();
        let back = load_mesh(&path).unwrap();
        assert_eq!(back.vertex_count(), t.vertex_count());
        assert_eq!(back.faces(), t.faces());
        assert_eq!(back.vertices(), t.vertices());
        assert!(!std::fs::read_to_string(&path).unwrap().contains('\r'));
    }

    #[test]
    fn colors_survive_within_quantization() {
        let m = parse_obj("v 0 0 0 0.123456789 1 0\nv 1 0 0 0.5 0.25 0.3333333333\nv 0 1 0 0 0 0\nf 1 2 3\n")
            .unwrap();
        let back = parse_obj(&write_obj(&m)).unwrap();
        for (a, b) in m.colors().unwrap().iter().zip(back.colors().unwrap()) {
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() <= 1.0 / 255.0);
            }
        }
    }
}
