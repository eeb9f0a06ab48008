//! Surrogate decoder: turns a composed latent volume into one watertight
//! surface.
//!
//! The active voxels are treated as a surface shell. Flood fill from the grid
//! boundary separates exterior from interior, a morphological closing bridges
//! small gaps between parts, and an iso-surface is extracted from a lightly
//! smoothed occupancy field. Vertex colors are copied from the nearest voxel
//! of the volume, never interpolated.

mod tetra;

use crate::error::{Error, Result};
use crate::geometry::{TriMesh, Vec3};
use crate::slat::{SparseLatentVolume, COLOR_CHANNELS};
use crate::spatial::KdTree;
use crate::voxel::OccupancyGrid;

pub const DEFAULT_CLOSING_PASSES: usize = 1;
pub const MAX_CLOSING_PASSES: usize = 3;

/// Shell → interior fill → `closing_passes` closings.
pub fn solidify(vol: &SparseLatentVolume, closing_passes: usize) -> Result<OccupancyGrid> {
    if vol.is_empty() {
        return Err(Error::EmptyVolume);
    }
    if closing_passes > MAX_CLOSING_PASSES {
        return Err(Error::InvalidParams(format!(
            "closing passes must be at most {MAX_CLOSING_PASSES}"
        )));
    }
    let mut grid = OccupancyGrid::empty(vol.resolution(), *vol.grid_to_world());
    for v in vol.voxels() {
        grid.set(v[0] as usize, v[1] as usize, v[2] as usize, true);
    }
    grid.fill_interior();
    grid.close(closing_passes);
    Ok(grid)
}

/// Padding (in lattice points) around the grid so the surface closes.
const PAD: usize = 2;

/// Extracts the 0.5 level set of the occupancy field
/// `f = (occ + box(occ)) / 2`, where `box` is the 3×3×3 mean.
///
/// Occupied voxels have `f > 0.5` and empty ones `f < 0.5`, so the decoded
/// solid contains exactly the occupied voxel centers; the box term only
/// moves the crossing points, which removes most staircase artifacts.
pub fn decode_surface(grid: &OccupancyGrid, vol: &SparseLatentVolume) -> Result<TriMesh> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if vol.is_empty() {
        return Err(Error::EmptyVolume);
    }
    let r = grid.resolution();
    let n = r + 2 * PAD;
    let occ = |x: i64, y: i64, z: i64| -> f64 {
        let r = r as i64;
        if x < 0 || y < 0 || z < 0 || x >= r || y >= r || z >= r {
            0.0
        } else {
            f64::from(u8::from(grid.get(x as usize, y as usize, z as usize)))
        }
    };
    let mut values = vec![0.0; n * n * n];
    for z in 0..n {
        for y in 0..n {
            for x in 0..n {
                let (gx, gy, gz) = (x as i64 - PAD as i64, y as i64 - PAD as i64, z as i64 - PAD as i64);
                let mut sum = 0.0;
                for dz in -1..=1 {
                    for dy in -1..=1 {
                        for dx in -1..=1 {
                            sum += occ(gx + dx, gy + dy, gz + dz);
                        }
                    }
                }
                values[(z * n + y) * n + x] = 0.5 * (occ(gx, gy, gz) + sum / 27.0);
            }
        }
    }
    let (lattice_pts, mut faces) = tetra::extract(&tetra::Lattice { n: [n; 3], values: &values }, 0.5);

    let g2w = grid.grid_to_world();
    let offset = 0.5 - PAD as f64;
    let vertices: Vec<Vec3> = lattice_pts
        .iter()
        .map(|p| g2w.transform_point(&(p + Vec3::repeat(offset))))
        .collect();
    if g2w.determinant() < 0.0 {
        for f in &mut faces {
            f.swap(1, 2);
        }
    }

    let tree = KdTree::new(vol.world_centers());
    let colors: Vec<[f64; 3]> = vertices
        .iter()
        .map(|v| {
            let (i, _) = tree.nearest(v).expect("volume is non-empty");
            let f = &vol.feature(i)[COLOR_CHANNELS];
            [f[0], f[1], f[2]]
        })
        .collect();
    TriMesh::new(vertices, faces)?.with_colors(colors)
}

/// Solidify then decode.
pub fn decode_volume(vol: &SparseLatentVolume, closing_passes: usize) -> Result<TriMesh> {
    let grid = solidify(vol, closing_passes)?;
    decode_surface(&grid, vol)
}
