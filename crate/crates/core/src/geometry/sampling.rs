use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{TriMesh, Vec3};
use crate::error::{Error, Result};

/// A point drawn on a mesh surface, with the face it lies on and its
/// barycentric coordinates in that face.
#[derive(Debug, Clone, Copy)]
pub struct SurfaceSample {
    pub point: Vec3,
    pub face: usize,
    pub bary: [f64; 3],
}

/// Area-weighted triangle sampler. Randomness comes from a ChaCha stream
/// seeded per call, so results are platform independent.
pub struct SurfaceSampler<'a> {
    mesh: &'a TriMesh,
    cumulative: Vec<f64>,
    total: f64,
}

impl<'a> SurfaceSampler<'a> {
    pub fn new(mesh: &'a TriMesh) -> Result<Self> {
        let mut cumulative = Vec::with_capacity(mesh.face_count());
        let mut total = 0.0;
        for f in 0..mesh.face_count() {
            total += mesh.face_area(f);
            cumulative.push(total);
        }
        if !(total > 0.0) {
            return Err(Error::ZeroArea);
        }
        Ok(SurfaceSampler {
            mesh,
            cumulative,
            total,
        })
    }

    pub fn total_area(&self) -> f64 {
        self.total
    }

    pub fn sample_one(&self, rng: &mut impl Rng) -> SurfaceSample {
        let target = rng.random::<f64>() * self.total;
        let face = self
            .cumulative
            .partition_point(|&c| c <= target)
            .min(self.cumulative.len() - 1);
        let r1: f64 = rng.random();
        let r2: f64 = rng.random();
        let s = r1.sqrt();
        let bary = [1.0 - s, s * (1.0 - r2), s * r2];
        let [a, b, c] = self.mesh.triangle(face);
        SurfaceSample {
            point: a * bary[0] + b * bary[1] + c * bary[2],
            face,
            bary,
        }
    }

    pub fn samples(&self, n: usize, seed: u64) -> Vec<SurfaceSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| self.sample_one(&mut rng)).collect()
    }
}

/// Draws `n` points uniformly over the surface area of `mesh`.
pub fn sample_surface(mesh: &TriMesh, n: usize, seed: u64) -> Result<Vec<Vec3>> {
    if n == 0 {
        return Err(Error::InvalidParams("sample count must be at least 1".into()));
    }
    let sampler = SurfaceSampler::new(mesh)?;
    Ok(sampler.samples(n, seed).into_iter().map(|s| s.point).collect())
}
