//! Dense occupancy grids: solid voxelization of watertight meshes, boundary
//! flood fill and 6-neighborhood morphology.
//!
//! Voxel `(i, j, k)` covers the unit cube `[i, i+1] x [j, j+1] x [k, k+1]`
//! in grid coordinates; `grid_to_world` maps grid coordinates to world space.

use crate::error::{Error, Result};
use crate::geometry::{is_watertight, Aabb, Transform3, TriMesh, Vec3};

#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    resolution: usize,
    occupied: Vec<bool>,
    grid_to_world: Transform3,
}

const NEIGHBORS6: [[i64; 3]; 6] = [[1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1]];

impl OccupancyGrid {
    pub fn empty(resolution: usize, grid_to_world: Transform3) -> Self {
        OccupancyGrid {
            resolution,
            occupied: vec![false; resolution.pow(3)],
            grid_to_world,
        }
    }

    pub fn from_cells(resolution: usize, grid_to_world: Transform3, occupied: Vec<bool>) -> Result<Self> {
        if occupied.len() != resolution.pow(3) {
            return Err(Error::InvalidParams(format!(
                "{} cells for resolution {resolution}",
                occupied.len()
            )));
        }
        Ok(OccupancyGrid {
            resolution,
            occupied,
            grid_to_world,
        })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn grid_to_world(&self) -> &Transform3 {
        &self.grid_to_world
    }

    pub fn cells(&self) -> &[bool] {
        &self.occupied
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.resolution + j) * self.resolution + i
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let r = self.resolution;
        [index % r, (index / r) % r, index / (r * r)]
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> bool {
        self.occupied[self.index(i, j, k)]
    }

    pub fn set(&mut self, i: usize, j: usize, k: usize, value: bool) {
        let idx = self.index(i, j, k);
        self.occupied[idx] = value;
    }

    pub fn count(&self) -> usize {
        self.occupied.iter().filter(|&&o| o).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.occupied.iter().any(|&o| o)
    }

    pub fn occupied_coords(&self) -> impl Iterator<Item = [usize; 3]> + '_ {
        self.occupied
            .iter()
            .enumerate()
            .filter(|(_, &o)| o)
            .map(|(i, _)| self.coords(i))
    }

    /// World-space center of voxel `(i, j, k)`.
    pub fn voxel_center(&self, c: [usize; 3]) -> Vec3 {
        self.grid_to_world.transform_point(&Vec3::new(
            c[0] as f64 + 0.5,
            c[1] as f64 + 0.5,
            c[2] as f64 + 0.5,
        ))
    }

    /// Cellwise union. Grids must share resolution and frame.
    pub fn union_with(&mut self, other: &OccupancyGrid) -> Result<()> {
        self.check_compatible(other)?;
        for (a, &b) in self.occupied.iter_mut().zip(&other.occupied) {
            *a |= b;
        }
        Ok(())
    }

    pub fn intersection_count(&self, other: &OccupancyGrid) -> Result<usize> {
        self.check_compatible(other)?;
        Ok(self.occupied.iter().zip(&other.occupied).filter(|(&a, &b)| a && b).count())
    }

    /// `|A ∩ B| / |A ∪ B|`.
    pub fn iou(&self, other: &OccupancyGrid) -> Result<f64> {
        self.check_compatible(other)?;
        let (mut inter, mut union) = (0usize, 0usize);
        for (&a, &b) in self.occupied.iter().zip(&other.occupied) {
            inter += (a && b) as usize;
            union += (a || b) as usize;
        }
        if union == 0 {
            return Err(Error::ZeroUnion);
        }
        Ok(inter as f64 / union as f64)
    }

    fn check_compatible(&self, other: &OccupancyGrid) -> Result<()> {
        if self.resolution != other.resolution || self.grid_to_world != other.grid_to_world {
            return Err(Error::InvalidParams("occupancy grids do not share a frame".into()));
        }
        Ok(())
    }

    /// Number of 6-connected components of occupied voxels.
    pub fn component_count(&self) -> usize {
        let mut seen = vec![false; self.occupied.len()];
        let mut count = 0;
        for start in 0..self.occupied.len() {
            if !self.occupied[start] || seen[start] {
                continue;
            }
            count += 1;
            seen[start] = true;
            let mut stack = vec![start];
            while let Some(cur) = stack.pop() {
                for n in self.neighbors(cur) {
                    if self.occupied[n] && !seen[n] {
                        seen[n] = true;
                        stack.push(n);
                    }
                }
            }
        }
        count
    }

    fn neighbors(&self, index: usize) -> impl Iterator<Item = usize> + '_ {
        let c = self.coords(index);
        let r = self.resolution as i64;
        NEIGHBORS6.iter().filter_map(move |d| {
            let n = [c[0] as i64 + d[0], c[1] as i64 + d[1], c[2] as i64 + d[2]];
            if n.iter().all(|&v| (0..r).contains(&v)) {
                Some(self.index(n[0] as usize, n[1] as usize, n[2] as usize))
            } else {
                None
            }
        })
    }

    /// Voxels reachable from the grid boundary through unoccupied cells.
    pub fn exterior(&self) -> Vec<bool> {
        flood_exterior(&self.occupied, [self.resolution; 3])
    }

    /// Marks every voxel not reachable from the boundary as occupied.
    pub fn fill_interior(&mut self) {
        let outside = self.exterior();
        for (o, out) in self.occupied.iter_mut().zip(outside) {
            *o = !out;
        }
    }

    pub fn dilate(&mut self) {
        let src = self.occupied.clone();
        for idx in 0..src.len() {
            if src[idx] {
                continue;
            }
            if self.neighbors(idx).any(|n| src[n]) {
                self.occupied[idx] = true;
            }
        }
    }

    /// Erosion treating cells beyond the grid as occupied, so that closing
    /// never removes voxels touching the boundary.
    pub fn erode(&mut self) {
        let src = self.occupied.clone();
        for idx in 0..src.len() {
            if src[idx] && self.neighbors(idx).any(|n| !src[n]) {
                self.occupied[idx] = false;
            }
        }
    }

    /// `passes` dilations followed by as many erosions, computed as on an
    /// unbounded grid: the work grid is padded by `passes` empty cells and
    /// the result cropped back, so closing never grows along the grid edge.
    pub fn close(&mut self, passes: usize) {
        if passes == 0 {
            return;
        }
        let r = self.resolution;
        let n = r + 2 * passes;
        let mut work = OccupancyGrid {
            resolution: n,
            occupied: vec![false; n * n * n],
            grid_to_world: self.grid_to_world,
        };
        let shift = |c: usize| c + passes;
        for idx in 0..self.occupied.len() {
            if self.occupied[idx] {
                let [i, j, k] = self.coords(idx);
                let w = work.index(shift(i), shift(j), shift(k));
                work.occupied[w] = true;
            }
        }
        for _ in 0..passes {
            work.dilate();
        }
        // n erosions decide an original cell from its n-neighbourhood, which
        // lies inside the padding, so `erode`'s edge rule never matters here.
        for _ in 0..passes {
            work.erode();
        }
        for idx in 0..self.occupied.len() {
            let [i, j, k] = self.coords(idx);
            self.occupied[idx] = work.occupied[work.index(shift(i), shift(j), shift(k))];
        }
    }
}

/// Axis-aligned cubic grid frame of `resolution` voxels per side, centered on
/// `bb`, whose longest side spans `resolution - 2 * margin` voxels.
pub fn cubic_frame(bb: &Aabb, resolution: usize, margin: usize) -> Result<Transform3> {
    if resolution <= 2 * margin {
        return Err(Error::InvalidParams(format!(
            "resolution {resolution} too small for a {margin}-voxel margin"
        )));
    }
    let side = bb.longest_side();
    if !(side > 0.0) {
        return Err(Error::ZeroExtent);
    }
    let h = side / (resolution - 2 * margin) as f64;
    let origin = bb.center() - Vec3::repeat(h * resolution as f64 / 2.0);
    Ok(Transform3::translation(origin) * Transform3::uniform_scale(h)?)
}

/// Ray direction used for inside tests; generic so rays avoid mesh edges and
/// lattice-aligned vertices.
const RAY_DIR: [f64; 3] = [0.771_846_561_4, 0.452_079_340_3, 0.447_119_213_8];

/// Solid voxelization of a watertight mesh on the given grid.
///
/// Voxels touched by the surface form a conservative shell, which a boundary
/// flood fill cannot cross; every non-shell voxel is then exterior or
/// interior. Shell voxels are classified by whether their center lies inside
/// the mesh, using a ray cast to the nearest non-shell voxel along the ray.
/// All work happens in the sub-box of the grid covering the mesh, padded by
/// one voxel; everything else is exterior.
pub fn voxelize_solid(mesh: &TriMesh, resolution: usize, grid_to_world: &Transform3) -> Result<OccupancyGrid> {
    if !is_watertight(mesh) {
        return Err(Error::NotWatertight {
            boundary_edges: crate::geometry::non_manifold_edge_count(mesh).max(usize::from(mesh.is_empty())),
        });
    }
    let r = resolution;
    let mut grid = OccupancyGrid::empty(r, *grid_to_world);
    let to_grid = grid_to_world.inverse();
    let verts: Vec<Vec3> = mesh.vertices().iter().map(|v| to_grid.transform_point(v)).collect();
    let bb = Aabb::from_points(verts.iter()).expect("watertight mesh has vertices");
    let mut lo = [0usize; 3];
    let mut n = [0usize; 3];
    for a in 0..3 {
        let l = (bb.min[a].floor() as i64 - 1).max(0);
        let h = (bb.max[a].floor() as i64 + 1).min(r as i64 - 1);
        if l > h {
            return Ok(grid);
        }
        lo[a] = l as usize;
        n[a] = (h - l + 1) as usize;
    }
    let shift = Vec3::new(lo[0] as f64, lo[1] as f64, lo[2] as f64);
    let tris: Vec<[Vec3; 3]> = mesh
        .faces()
        .iter()
        .map(|f| f.map(|i| verts[i as usize] - shift))
        .collect();

    let cells = n[0] * n[1] * n[2];
    let index = |c: [usize; 3]| (c[2] * n[1] + c[1]) * n[0] + c[0];
    let shell_pairs = shell_incidence(&tris, n);
    let mut shell = vec![false; cells];
    for &(cell, _) in &shell_pairs {
        shell[cell as usize] = true;
    }
    let outside = flood_exterior(&shell, n);
    let (starts, tri_ids) = csr(&shell_pairs, cells);

    let dir = Vec3::from(RAY_DIR).normalize();
    let mut candidates: Vec<u32> = Vec::new();
    let in_box = |c: &[i64; 3]| (0..3).all(|a| c[a] >= 0 && (c[a] as usize) < n[a]);
    for k in 0..n[2] {
        for j in 0..n[1] {
            for i in 0..n[0] {
                let idx = index([i, j, k]);
                let inside = if !shell[idx] {
                    !outside[idx]
                } else {
                    let origin = Vec3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5);
                    candidates.clear();
                    let mut walker = Dda::new(origin, dir, [i, j, k]);
                    let (t_end, end_outside) = loop {
                        let cur = index(walker.cell.map(|v| v as usize));
                        candidates.extend_from_slice(&tri_ids[starts[cur]..starts[cur + 1]]);
                        let t_enter = walker.step();
                        if !in_box(&walker.cell) {
                            break (t_enter + 1.0, true);
                        }
                        let next = index(walker.cell.map(|v| v as usize));
                        if !shell[next] {
                            let t_exit = walker.next_boundary();
                            break ((t_enter + t_exit) * 0.5, outside[next]);
                        }
                    };
                    candidates.sort_unstable();
                    candidates.dedup();
                    let crossings = candidates
                        .iter()
                        .filter(|&&t| ray_hits(&origin, &dir, &tris[t as usize], t_end))
                        .count();
                    (crossings % 2 == 1) ^ !end_outside
                };
                if inside {
                    grid.set(lo[0] + i, lo[1] + j, lo[2] + k, true);
                }
            }
        }
    }
    Ok(grid)
}

/// Cells of an `n[0] × n[1] × n[2]` box reachable from its boundary through
/// unblocked cells (6-connected).
fn flood_exterior(blocked: &[bool], n: [usize; 3]) -> Vec<bool> {
    let index = |c: [usize; 3]| (c[2] * n[1] + c[1]) * n[0] + c[0];
    let mut outside = vec![false; blocked.len()];
    let mut stack: Vec<[usize; 3]> = Vec::new();
    for k in 0..n[2] {
        for j in 0..n[1] {
            for i in 0..n[0] {
                let boundary = i == 0 || j == 0 || k == 0 || i + 1 == n[0] || j + 1 == n[1] || k + 1 == n[2];
                let idx = index([i, j, k]);
                if boundary && !blocked[idx] && !outside[idx] {
                    outside[idx] = true;
                    stack.push([i, j, k]);
                }
            }
        }
    }
    while let Some(c) = stack.pop() {
        for a in 0..3 {
            for up in [false, true] {
                let mut m = c;
                if up {
                    if c[a] + 1 == n[a] {
                        continue;
                    }
                    m[a] += 1;
                } else {
                    if c[a] == 0 {
                        continue;
                    }
                    m[a] -= 1;
                }
                let idx = index(m);
                if !blocked[idx] && !outside[idx] {
                    outside[idx] = true;
                    stack.push(m);
                }
            }
        }
    }
    outside
}

/// `(cell, triangle)` pairs for every cell of an `n`-box a triangle touches.
fn shell_incidence(tris: &[[Vec3; 3]], n: [usize; 3]) -> Vec<(u32, u32)> {
    const EPS: f64 = 1e-9;
    let mut pairs = Vec::new();
    for (t, tri) in tris.iter().enumerate() {
        let lo = tri[0].inf(&tri[1]).inf(&tri[2]);
        let hi = tri[0].sup(&tri[1]).sup(&tri[2]);
        let range = |a: usize| {
            let max = n[a] as i64 - 1;
            let l = ((lo[a] - EPS).floor() as i64).clamp(0, max);
            let h = ((hi[a] + EPS).floor() as i64).clamp(0, max);
            l..=h
        };
        for k in range(2) {
            for j in range(1) {
                for i in range(0) {
                    let center = Vec3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5);
                    if tri_box_overlap(&center, 0.5 + EPS, tri) {
                        let cell = (k as usize * n[1] + j as usize) * n[0] + i as usize;
                        pairs.push((cell as u32, t as u32));
                    }
                }
            }
        }
    }
    pairs
}

fn csr(pairs: &[(u32, u32)], cells: usize) -> (Vec<usize>, Vec<u32>) {
    let mut starts = vec![0usize; cells + 1];
    for &(c, _) in pairs {
        starts[c as usize + 1] += 1;
    }
    for i in 0..cells {
        starts[i + 1] += starts[i];
    }
    let mut fill = starts.clone();
    let mut ids = vec![0u32; pairs.len()];
    for &(c, t) in pairs {
        ids[fill[c as usize]] = t;
        fill[c as usize] += 1;
    }
    (starts, ids)
}

/// Voxel walk along a ray (Amanatides & Woo).
struct Dda {
    cell: [i64; 3],
    step: [i64; 3],
    t_max: [f64; 3],
    t_delta: [f64; 3],
}

impl Dda {
    fn new(origin: Vec3, dir: Vec3, cell: [usize; 3]) -> Self {
        let mut d = Dda {
            cell: [cell[0] as i64, cell[1] as i64, cell[2] as i64],
            step: [0; 3],
            t_max: [f64::INFINITY; 3],
            t_delta: [f64::INFINITY; 3],
        };
        for a in 0..3 {
            if dir[a] > 0.0 {
                d.step[a] = 1;
                d.t_max[a] = ((cell[a] + 1) as f64 - origin[a]) / dir[a];
                d.t_delta[a] = 1.0 / dir[a];
            } else if dir[a] < 0.0 {
                d.step[a] = -1;
                d.t_max[a] = (cell[a] as f64 - origin[a]) / dir[a];
                d.t_delta[a] = -1.0 / dir[a];
            }
        }
        d
    }

    fn axis(&self) -> usize {
        let t = &self.t_max;
        if t[0] <= t[1] && t[0] <= t[2] {
            0
        } else if t[1] <= t[2] {
            1
        } else {
            2
        }
    }

    /// Moves to the next cell and returns the ray parameter at its entry.
    fn step(&mut self) -> f64 {
        let a = self.axis();
        let t = self.t_max[a];
        self.cell[a] += self.step[a];
        self.t_max[a] += self.t_delta[a];
        t
    }

    fn next_boundary(&self) -> f64 {
        self.t_max[self.axis()]
    }
}

/// Möller–Trumbore test for a hit with parameter in `(0, t_end)`.
fn ray_hits(origin: &Vec3, dir: &Vec3, tri: &[Vec3; 3], t_end: f64) -> bool {
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-300 {
        return false;
    }
    let inv = 1.0 / det;
    let s = origin - tri[0];
    let u = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return false;
    }
    let q = s.cross(&e1);
    let v = dir.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return false;
    }
    let t = e2.dot(&q) * inv;
    t > 0.0 && t < t_end
}

/// Separating-axis triangle/box overlap test (Akenine-Möller).
pub(crate) fn tri_box_overlap(center: &Vec3, half: f64, tri: &[Vec3; 3]) -> bool {
    let v = [tri[0] - center, tri[1] - center, tri[2] - center];
    let e = [v[1] - v[0], v[2] - v[1], v[0] - v[2]];

    // Box face normals.
    for a in 0..3 {
        let lo = v[0][a].min(v[1][a]).min(v[2][a]);
        let hi = v[0][a].max(v[1][a]).max(v[2][a]);
        if lo > half || hi < -half {
            return false;
        }
    }
    // Triangle normal.
    let n = e[0].cross(&e[1]);
    let d = n.dot(&v[0]);
    let rad = half * (n.x.abs() + n.y.abs() + n.z.abs());
    if d.abs() > rad {
        return false;
    }
    // Edge cross products.
    let axes = [Vec3::x(), Vec3::y(), Vec3::z()];
    for edge in &e {
        for unit in &axes {
            let axis = unit.cross(edge);
            let p0 = axis.dot(&v[0]);
            let p1 = axis.dot(&v[1]);
            let p2 = axis.dot(&v[2]);
            let lo = p0.min(p1).min(p2);
            let hi = p0.max(p1).max(p2);
            let rad = half * (axis.x.abs() + axis.y.abs() + axis.z.abs());
            if lo > rad || hi < -rad {
                return false;
            }
        }
    }
    true
}
