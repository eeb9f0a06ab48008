//! Transform-sweep benchmark.
//!
//! Each sweep composes every ordered pair of test shapes while one transform
//! parameter of the second shape varies, and scores the decoded result
//! against the undecoded union of the two placed meshes.

mod csv_io;
mod plot;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decoder::{decode_surface, solidify, DEFAULT_CLOSING_PASSES};
use crate::error::{Error, Result};
use crate::geometry::{gen_shape, normalize_unit_bbox, sample_surface, GeneratorSpec, ShapeKind, Transform3, TriMesh, Vec3};
use crate::metrics::{
    chamfer_sq, confidence_interval_95, instance_seed, joint_frame, reference_composite_on, MetricRecord,
    DEFAULT_CHAMFER_SAMPLES, DEFAULT_IOU_RESOLUTION,
};
use crate::slat::{encode_mesh, latent_union, transform_volume, EncodeParams, SparseLatentVolume};
use crate::voxel::voxelize_solid;

pub use csv_io::{emit_csv, parse_csv, read_csv, write_csv, CSV_HEADER};
pub use plot::{emit_plot, render_svg, Metric};

pub const DEFAULT_CATEGORIES: [ShapeKind; 5] = [
    ShapeKind::Elongated,
    ShapeKind::BentTube,
    ShapeKind::Torus,
    ShapeKind::ThinRing,
    ShapeKind::Sphere,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    Translation,
    Rotation,
    Scale,
}

impl SweepKind {
    pub const ALL: [SweepKind; 3] = [SweepKind::Translation, SweepKind::Rotation, SweepKind::Scale];

    pub fn name(self) -> &'static str {
        match self {
            SweepKind::Translation => "translation",
            SweepKind::Rotation => "rotation",
            SweepKind::Scale => "scale",
        }
    }

    /// Parameter range: extents, degrees, or scale factor.
    pub fn default_range(self) -> (f64, f64) {
        match self {
            SweepKind::Translation => (0.0, 5.0),
            SweepKind::Rotation => (-180.0, 180.0),
            SweepKind::Scale => (0.1, 10.0),
        }
    }

    /// Value at which the second shape is placed as at rest.
    pub fn identity_value(self) -> f64 {
        match self {
            SweepKind::Translation | SweepKind::Rotation => 0.0,
            SweepKind::Scale => 1.0,
        }
    }

    pub fn is_geometric(self) -> bool {
        self == SweepKind::Scale
    }

    pub fn unit(self) -> &'static str {
        match self {
            SweepKind::Translation => "object extents",
            SweepKind::Rotation => "degrees",
            SweepKind::Scale => "scale factor",
        }
    }
}

impl fmt::Display for SweepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SweepKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidParams(format!("unknown sweep kind {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub kind: SweepKind,
    pub steps: usize,
    pub range: (f64, f64),
    /// Rest offset of the second shape along x, in object extents.
    pub baseline_offset_extents: f64,
    pub compose_resolution: usize,
    pub iou_resolution: usize,
    pub chamfer_samples: usize,
    pub closing_passes: usize,
    pub encode: EncodeParams,
    pub categories: Vec<ShapeKind>,
    pub seed: u64,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl SweepSpec {
    pub fn new(kind: SweepKind) -> Self {
        SweepSpec {
            kind,
            steps: 33,
            range: kind.default_range(),
            baseline_offset_extents: 1.8,
            compose_resolution: 64,
            iou_resolution: DEFAULT_IOU_RESOLUTION,
            chamfer_samples: DEFAULT_CHAMFER_SAMPLES,
            closing_passes: DEFAULT_CLOSING_PASSES,
            encode: EncodeParams::default(),
            categories: DEFAULT_CATEGORIES.to_vec(),
            seed: 0,
            threads: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps < 2 {
            return Err(Error::InvalidParams("a sweep needs at least 2 steps".into()));
        }
        let (lo, hi) = self.range;
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(Error::InvalidParams("sweep range must be finite".into()));
        }
        if self.kind.is_geometric() && !(lo > 0.0 && hi > 0.0) {
            return Err(Error::InvalidParams("scale range must be strictly positive".into()));
        }
        if !(self.baseline_offset_extents.is_finite() && self.baseline_offset_extents >= 0.0) {
            return Err(Error::InvalidParams("baseline offset must be non-negative".into()));
        }
        if self.chamfer_samples == 0 {
            return Err(Error::InvalidParams("chamfer sample count must be positive".into()));
        }
        Ok(())
    }

    /// The swept parameter values: linear, or geometric for scale.
    pub fn param_values(&self) -> Vec<f64> {
        let (lo, hi) = self.range;
        let n = self.steps;
        (0..n)
            .map(|i| {
                if i == 0 {
                    return lo;
                }
                if i == n - 1 {
                    return hi;
                }
                let u = i as f64 / (n - 1) as f64;
                if self.kind.is_geometric() {
                    // Centered on the geometric mean so the middle step is exact.
                    (lo * hi).sqrt() * (hi / lo).powf(u - 0.5)
                } else {
                    lo + u * (hi - lo)
                }
            })
            .collect()
    }

    /// World placement of the second shape at parameter `value`.
    pub fn placement(&self, value: f64) -> Result<Transform3> {
        let b = self.baseline_offset_extents;
        Ok(match self.kind {
            SweepKind::Translation => Transform3::translation(Vec3::new(b + value, 0.0, 0.0)),
            SweepKind::Rotation => {
                Transform3::translation(Vec3::new(b, 0.0, 0.0)) * Transform3::rotation_y(value.to_radians())
            }
            SweepKind::Scale => Transform3::translation(Vec3::new(b, 0.0, 0.0)) * Transform3::uniform_scale(value)?,
        })
    }
}

/// All ordered pairs of exactly five categories, self-pairs included, in
/// row-major order.
pub fn enumerate_pairs(categories: &[ShapeKind]) -> Result<Vec<(ShapeKind, ShapeKind)>> {
    if categories.len() != 5 {
        return Err(Error::InvalidParams(format!(
            "expected exactly 5 categories, got {}",
            categories.len()
        )));
    }
    Ok(categories
        .iter()
        .flat_map(|&a| categories.iter().map(move |&b| (a, b)))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellRecord {
    pub anchor: ShapeKind,
    pub other: ShapeKind,
    pub step: usize,
    pub param_value: f64,
    /// Metrics, or the error that stopped this cell.
    pub outcome: std::result::Result<MetricRecord, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepAggregate {
    pub step: usize,
    pub param_value: f64,
    pub mean_chamfer_sq: Option<f64>,
    pub ci_chamfer_sq: Option<f64>,
    pub mean_iou: Option<f64>,
    pub ci_iou: Option<f64>,
    pub n_valid: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub kind: SweepKind,
    pub records: Vec<CellRecord>,
    pub aggregates: Vec<StepAggregate>,
}

impl SweepResult {
    pub fn aggregate_at(&self, step: usize) -> Option<&StepAggregate> {
        self.aggregates.iter().find(|a| a.step == step)
    }

    /// Step whose parameter is closest to `value`.
    pub fn step_nearest(&self, value: f64) -> Option<&StepAggregate> {
        self.aggregates
            .iter()
            .min_by(|a, b| (a.param_value - value).abs().total_cmp(&(b.param_value - value).abs()))
    }
}

/// One test shape, normalized to a unit bounding box at the origin and
/// encoded once.
struct Prepared {
    mesh: TriMesh,
    volume: SparseLatentVolume,
}

fn prepare(kind: ShapeKind, encode: &EncodeParams) -> Result<Prepared> {
    let raw = gen_shape(&GeneratorSpec::kind(kind))?;
    let (mesh, _) = normalize_unit_bbox(&raw)?;
    let volume = encode_mesh(&mesh, encode)?;
    Ok(Prepared { mesh, volume })
}

fn evaluate_cell(spec: &SweepSpec, anchor: &Prepared, other: &Prepared, value: f64, cell_seed: u64) -> Result<MetricRecord> {
    let place = spec.placement(value)?;
    let moved = transform_volume(&other.volume, &place)?;
    let union = latent_union(&[anchor.volume.clone(), moved], spec.compose_resolution)?;
    let grid = solidify(&union, spec.closing_passes)?;
    let decoded = decode_surface(&grid, &union)?;

    let instances = [(anchor.mesh.clone(), Transform3::identity()), (other.mesh.clone(), place)];
    let mut boxes = vec![decoded.bbox().ok_or(Error::EmptyMesh)?];
    boxes.extend(instances.iter().map(|(m, t)| m.bbox().expect("non-empty").transformed(t)));
    let frame = joint_frame(&boxes, spec.iou_resolution)?;
    let reference = reference_composite_on(
        &instances,
        spec.iou_resolution,
        &frame,
        spec.chamfer_samples,
        instance_seed(cell_seed, 0),
    )?;
    let decoded_points = sample_surface(&decoded, spec.chamfer_samples, instance_seed(cell_seed, 1))?;
    let chamfer = chamfer_sq(&decoded_points, &reference.points)?;
    let decoded_solid = voxelize_solid(&decoded, spec.iou_resolution, &frame)?;
    let iou = decoded_solid.iou(&reference.occupancy)?;
    Ok(MetricRecord { chamfer_sq: chamfer, iou })
}

/// Runs every (pair, step) cell and aggregates per step. Failing cells are
/// recorded and excluded from the aggregates.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate()?;
    match spec.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidParams(e.to_string()))?
            .install(|| run_sweep_inner(spec)),
        None => run_sweep_inner(spec),
    }
}

fn run_sweep_inner(spec: &SweepSpec) -> Result<SweepResult> {
    let pairs = enumerate_pairs(&spec.categories)?;
    let prepared: Vec<Prepared> = spec
        .categories
        .par_iter()
        .map(|&k| prepare(k, &spec.encode))
        .collect::<Result<_>>()?;
    let slot = |k: ShapeKind| spec.categories.iter().position(|&c| c == k).expect("known category");
    let values = spec.param_values();

    let cells: Vec<(usize, usize)> = (0..pairs.len())
        .flat_map(|p| (0..values.len()).map(move |s| (p, s)))
        .collect();
    let records: Vec<CellRecord> = cells
        .par_iter()
        .map(|&(p, s)| {
            let (a, b) = pairs[p];
            let cell_seed = instance_seed(spec.seed, p * values.len() + s);
            let outcome = evaluate_cell(spec, &prepared[slot(a)], &prepared[slot(b)], values[s], cell_seed)
                .map_err(|e| e.to_string());
            CellRecord {
                anchor: a,
                other: b,
                step: s,
                param_value: values[s],
                outcome,
            }
        })
        .collect();

    let aggregates = aggregate(&records, &values);
    Ok(SweepResult {
        kind: spec.kind,
        records,
        aggregates,
    })
}

pub(crate) fn aggregate(records: &[CellRecord], values: &[f64]) -> Vec<StepAggregate> {
    values
        .iter()
        .enumerate()
        .map(|(step, &param_value)| {
            let ok: Vec<&MetricRecord> = records
                .iter()
                .filter(|r| r.step == step)
                .filter_map(|r| r.outcome.as_ref().ok())
                .collect();
            let summarize = |xs: Vec<f64>| match xs.len() {
                0 => (None, None),
                1 => (Some(xs[0]), None),
                _ => {
                    let (m, h) = confidence_interval_95(&xs).expect("n >= 2");
                    (Some(m), Some(h))
                }
            };
            let (mean_chamfer_sq, ci_chamfer_sq) = summarize(ok.iter().map(|m| m.chamfer_sq).collect());
            let (mean_iou, ci_iou) = summarize(ok.iter().map(|m| m.iou).collect());
            StepAggregate {
                step,
                param_value,
                mean_chamfer_sq,
                ci_chamfer_sq,
                mean_iou,
                ci_iou,
                n_valid: ok.len(),
            }
        })
        .collect()
}

/// Ranks starting at 1, ties receiving the mean of their positions.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation (Pearson correlation of average ranks).
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::InvalidParams("spearman inputs differ in length".into()));
    }
    if x.len() < 2 {
        return Err(Error::TooFewValues { needed: 2, got: x.len() });
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::InvalidParams("spearman of a constant sequence is undefined".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn pairs() {
        let p = enumerate_pairs(&DEFAULT_CATEGORIES).unwrap();
        assert_eq!(p.len(), 25);
        assert_eq!(p[0], (ShapeKind::Elongated, ShapeKind::Elongated));
        assert!(p.contains(&(ShapeKind::Torus, ShapeKind::Torus)));
        assert!(enumerate_pairs(&DEFAULT_CATEGORIES[..4]).is_err());
    }

    #[test]
    fn parameter_grids() {
        let t = SweepSpec::new(SweepKind::Translation).param_values();
        assert_eq!(t.len(), 33);
        assert_eq!((t[0], t[32]), (0.0, 5.0));
        assert_relative_eq!(t[1] - t[0], 5.0 / 32.0, epsilon = 1e-15);
        let s = SweepSpec::new(SweepKind::Scale).param_values();
        assert_eq!((s[0], s[32]), (0.1, 10.0));
        assert_eq!(s[16], 1.0);
        for w in s.windows(3) {
            assert_relative_eq!(w[1] / w[0], w[2] / w[1], epsilon = 1e-12);
        }
        let r = SweepSpec::new(SweepKind::Rotation).param_values();
        assert_eq!((r[0], r[16], r[32]), (-180.0, 0.0, 180.0));
    }

    #[test]
    fn invalid_specs() {
        let mut s = SweepSpec::new(SweepKind::Scale);
        s.range = (0.0, 10.0);
        assert!(s.validate().is_err());
        let mut s = SweepSpec::new(SweepKind::Translation);
        s.steps = 1;
        assert!(s.validate().is_err());
    }

    #[test]
    fn ranks_and_spearman() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
        assert_relative_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 35.0]).unwrap(), 1.0);
        assert_relative_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
        assert!(spearman(&[1.0, 1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn aggregates_skip_failures() {
        let ok = |c: f64| Ok(MetricRecord { chamfer_sq: c, iou: 0.5 });
        let recs = vec![
            CellRecord { anchor: ShapeKind::Torus, other: ShapeKind::Torus, step: 0, param_value: 0.0, outcome: ok(1.0) },
            CellRecord { anchor: ShapeKind::Torus, other: ShapeKind::Sphere, step: 0, param_value: 0.0, outcome: ok(3.0) },
            CellRecord { anchor: ShapeKind::Sphere, other: ShapeKind::Torus, step: 0, param_value: 0.0, outcome: Err("x".into()) },
        ];
        let agg = aggregate(&recs, &[0.0]);
        assert_eq!(agg[0].n_valid, 2);
        assert_eq!(agg[0].mean_chamfer_sq, Some(2.0));
        assert_eq!(agg[0].ci_iou, Some(0.0));
    }
}
