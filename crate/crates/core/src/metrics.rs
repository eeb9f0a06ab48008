//! Fidelity metrics: symmetric squared Chamfer distance, solid-voxel IoU,
//! the no-decode reference composite, and t-based confidence intervals.

use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, StudentsT};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::geometry::{apply_transform, is_watertight, non_manifold_edge_count, Aabb, SurfaceSampler, Transform3, TriMesh, Vec3};
use crate::spatial::{nearest_brute_force, KdTree};
use crate::voxel::{cubic_frame, voxelize_solid, OccupancyGrid};

pub const DEFAULT_CHAMFER_SAMPLES: usize = 10_000;
pub const DEFAULT_IOU_RESOLUTION: usize = 128;
pub const MIN_IOU_RESOLUTION: usize = 32;

/// Point sets at most this large use exhaustive search.
const BRUTE_FORCE_MAX: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricRecord {
    pub chamfer_sq: f64,
    pub iou: f64,
}

/// Mean over `from` of the squared distance to the nearest point of `to`.
fn directional_mean(from: &[Vec3], to: &[Vec3]) -> f64 {
    let d2: Vec<f64> = if from.len().max(to.len()) <= BRUTE_FORCE_MAX {
        from.iter().map(|p| nearest_brute_force(to, p).expect("non-empty").1).collect()
    } else {
        let tree = KdTree::new(to.to_vec());
        from.par_iter().map(|p| tree.nearest(p).expect("non-empty").1).collect()
    };
    // Sequential sum so the result does not depend on thread count.
    d2.iter().sum::<f64>() / from.len() as f64
}

/// Symmetric squared Chamfer distance: the sum of the two directional means
/// of squared nearest-neighbor distances.
pub fn chamfer_sq(a: &[Vec3], b: &[Vec3]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    let ab = directional_mean(a, b);
    let ba = directional_mean(b, a);
    Ok(ab + ba)
}

fn require_watertight(m: &TriMesh) -> Result<()> {
    if is_watertight(m) {
        Ok(())
    } else {
        Err(Error::NotWatertight {
            boundary_edges: non_manifold_edge_count(m),
        })
    }
}

/// Cubic frame over the union of the given boxes with a one-voxel margin.
pub fn joint_frame(boxes: &[Aabb], resolution: usize) -> Result<Transform3> {
    let mut iter = boxes.iter();
    let first = iter.next().ok_or(Error::EmptyMesh)?;
    let joint = iter.fold(*first, |acc, b| acc.union(b));
    cubic_frame(&joint, resolution, 1)
}

/// Volumetric IoU of two watertight meshes, voxelized as solids on their
/// joint bounding cube.
pub fn mesh_iou(a: &TriMesh, b: &TriMesh, resolution: usize) -> Result<f64> {
    if resolution < MIN_IOU_RESOLUTION {
        return Err(Error::InvalidParams(format!(
            "IoU resolution must be at least {MIN_IOU_RESOLUTION}"
        )));
    }
    require_watertight(a)?;
    require_watertight(b)?;
    let frame = joint_frame(&[a.bbox().ok_or(Error::EmptyMesh)?, b.bbox().ok_or(Error::EmptyMesh)?], resolution)?;
    let ga = voxelize_solid(a, resolution, &frame)?;
    let gb = voxelize_solid(b, resolution, &frame)?;
    ga.iou(&gb)
}

/// The undecoded union of placed meshes: surface samples for Chamfer and
/// solid occupancy for IoU.
#[derive(Debug, Clone)]
pub struct ReferenceComposite {
    pub points: Vec<Vec3>,
    pub occupancy: OccupancyGrid,
    /// The placed meshes, for computing joint frames.
    pub meshes: Vec<TriMesh>,
}

/// Splits `total` over weights by largest remainder; ties go to the lower
/// index.
fn apportion(weights: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut rest = total - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&i, &j| (exact[j] - exact[j].floor()).total_cmp(&(exact[i] - exact[i].floor())).then(i.cmp(&j)));
    for i in order {
        if rest == 0 {
            break;
        }
        counts[i] += 1;
        rest -= 1;
    }
    counts
}

/// Places every instance, samples `samples` points over the combined
/// surface (split by area), and voxelizes the union of the instance solids
/// on the given grid.
pub fn reference_composite_on(
    instances: &[(TriMesh, Transform3)],
    resolution: usize,
    grid_to_world: &Transform3,
    samples: usize,
    seed: u64,
) -> Result<ReferenceComposite> {
    if instances.is_empty() {
        return Err(Error::EmptyMesh);
    }
    if samples == 0 {
        return Err(Error::InvalidParams("sample count must be at least 1".into()));
    }
    let meshes: Vec<TriMesh> = instances.iter().map(|(m, t)| apply_transform(m, t)).collect();
    for m in &meshes {
        require_watertight(m)?;
    }
    let samplers = meshes.iter().map(SurfaceSampler::new).collect::<Result<Vec<_>>>()?;
    let counts = apportion(&samplers.iter().map(|s| s.total_area()).collect::<Vec<_>>(), samples);
    let mut points = Vec::with_capacity(samples);
    for (i, (s, &n)) in samplers.iter().zip(&counts).enumerate() {
        points.extend(s.samples(n, instance_seed(seed, i)).into_iter().map(|p| p.point));
    }
    let mut occupancy = OccupancyGrid::empty(resolution, *grid_to_world);
    for m in &meshes {
        occupancy.union_with(&voxelize_solid(m, resolution, grid_to_world)?)?;
    }
    Ok(ReferenceComposite {
        points,
        occupancy,
        meshes,
    })
}

/// [`reference_composite_on`] over the joint bounding cube of the placed
/// instances.
pub fn reference_composite(
    instances: &[(TriMesh, Transform3)],
    resolution: usize,
    samples: usize,
    seed: u64,
) -> Result<ReferenceComposite> {
    let boxes = instances
        .iter()
        .map(|(m, t)| m.bbox().map(|b| b.transformed(t)).ok_or(Error::EmptyMesh))
        .collect::<Result<Vec<_>>>()?;
    let frame = joint_frame(&boxes, resolution)?;
    reference_composite_on(instances, resolution, &frame, samples, seed)
}

pub(crate) fn instance_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Mean and 95% half-width `t(0.975, n-1) · s / √n`.
pub fn confidence_interval_95(values: &[f64]) -> Result<(f64, f64)> {
    let n = values.len();
    if n < 2 {
        return Err(Error::TooFewValues { needed: 2, got: n });
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = t_quantile_975(n - 1);
    Ok((mean, t * var.sqrt() / (n as f64).sqrt()))
}

/// Two-sided 95% critical value of Student's t with `df` degrees of freedom.
///
/// The library quantile is good to a few 1e-10 at small `df`; it seeds
/// Newton iterations on the exact finite series for `P(|T| <= t)`.
pub fn t_quantile_975(df: usize) -> f64 {
    assert!(df >= 1, "degrees of freedom must be positive");
    let mut t = StudentsT::new(0.0, 1.0, df as f64)
        .expect("df >= 1")
        .inverse_cdf(0.975);
    let nu = df as f64;
    let log_norm = ln_gamma((nu + 1.0) / 2.0) - ln_gamma(nu / 2.0) - 0.5 * (nu * std::f64::consts::PI).ln();
    for _ in 0..4 {
        let density = (log_norm - (nu + 1.0) / 2.0 * (1.0 + t * t / nu).ln()).exp();
        let step = (two_sided_t_mass(t, df) - 0.95) / (2.0 * density);
        t -= step;
        if step.abs() <= 1e-16 * t {
            break;
        }
    }
    t
}

/// `P(|T| <= t)` for integer `df` (Abramowitz & Stegun 26.7.3–26.7.4).
fn two_sided_t_mass(t: f64, df: usize) -> f64 {
    let theta = (t / (df as f64).sqrt()).atan();
    let (s, c) = theta.sin_cos();
    let c2 = c * c;
    if df % 2 == 1 {
        // 2/pi * (theta + sin(theta) * (cos + 2/3 cos^3 + 2·4/(3·5) cos^5 + ...)).
        let mut sum = 0.0;
        if df > 1 {
            let mut term = c;
            sum = term;
            let mut k = 1;
            while 2 * k + 1 < df {
                term *= c2 * (2 * k) as f64 / (2 * k + 1) as f64;
                sum += term;
                k += 1;
            }
        }
        std::f64::consts::FRAC_2_PI * (theta + s * sum)
    } else {
        // sin(theta) * (1 + 1/2 cos^2 + 1·3/(2·4) cos^4 + ...).
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1;
        while 2 * k < df {
            term *= c2 * (2 * k - 1) as f64 / (2 * k) as f64;
            sum += term;
            k += 1;
        }
        s * sum
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{gen_shape, GeneratorSpec, ShapeKind};
    use approx::assert_relative_eq;

    fn cube() -> TriMesh {
        gen_shape(&GeneratorSpec::kind(ShapeKind::Box)).unwrap()
    }

    #[test]
    fn chamfer_analytic() {
        let a = [Vec3::zeros()];
        let b = [Vec3::x()];
        assert_eq!(chamfer_sq(&a, &b).unwrap(), 2.0);
        assert_eq!(chamfer_sq(&a, &a).unwrap(), 0.0);
        assert!(matches!(chamfer_sq(&a, &[]), Err(Error::EmptyPointSet)));
    }

    #[test]
    fn iou_self_and_disjoint() {
        let c = cube();
        assert_eq!(mesh_iou(&c, &c, 32).unwrap(), 1.0);
        let far = apply_transform(&c, &Transform3::translation(Vec3::new(3.0, 0.0, 0.0)));
        assert_eq!(mesh_iou(&c, &far, 64).unwrap(), 0.0);
    }

    #[test]
    fn iou_half_overlap() {
        let c = cube();
        let shifted = apply_transform(&c, &Transform3::translation(Vec3::new(0.5, 0.0, 0.0)));
        let iou = mesh_iou(&c, &shifted, 128).unwrap();
        assert!((iou - 1.0 / 3.0).abs() < 0.02, "{iou}");
    }

    #[test]
    fn apportion_is_exact() {
        assert_eq!(apportion(&[1.0, 3.0], 100), vec![25, 75]);
        assert_eq!(apportion(&[1.0, 1.0, 1.0], 10), vec![4, 3, 3]);
        assert_eq!(apportion(&[2.0], 7), vec![7]);
    }

    #[test]
    fn reference_disjoint_counts_add() {
        let c = cube();
        let placed = [
            (c.clone(), Transform3::identity()),
            (c.clone(), Transform3::translation(Vec3::new(2.0, 0.0, 0.0))),
        ];
        let rc = reference_composite(&placed, 64, 1000, 3).unwrap();
        assert_eq!(rc.points.len(), 1000);
        let frame = *rc.occupancy.grid_to_world();
        let a = voxelize_solid(&rc.meshes[0], 64, &frame).unwrap().count();
        let b = voxelize_solid(&rc.meshes[1], 64, &frame).unwrap().count();
        assert_eq!(rc.occupancy.count(), a + b);
    }

    #[test]
    fn ci_small_cases() {
        assert_eq!(confidence_interval_95(&[1.0, 1.0, 1.0, 1.0]).unwrap(), (1.0, 0.0));
        let (m, hw) = confidence_interval_95(&[0.0, 2.0]).unwrap();
        assert_eq!(m, 1.0);
        assert_relative_eq!(hw, 12.706204736432095, epsilon = 1e-9);
        assert!(matches!(confidence_interval_95(&[1.0]), Err(Error::TooFewValues { .. })));
    }
}
