//! Scene files and the compose pipeline.
//!
//! A scene is a list of assets (an OBJ file or a procedural generator, plus
//! the brush strokes painted on it) and a list of instances placing those
//! assets in the world. Composing a scene encodes each asset once, filters it
//! by its painted selection, moves it into place, unions everything into one
//! sparse volume and decodes a single surface.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::decoder::{decode_surface, solidify, DEFAULT_CLOSING_PASSES, MAX_CLOSING_PASSES};
use crate::error::{Error, Result};
use crate::geometry::{gen_shape, load_mesh, BlockParams, GeneratorSpec, Rgb, ShapeParams, Transform3, TriMesh, Vec3};
use crate::segmentation::{apply_stroke, BrushMode, BrushStroke, SelectionMask};
use crate::slat::{encode_mesh, filter_by_mask, latent_union, transform_volume, EncodeParams, SparseLatentVolume};

pub const SCENE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComposeParams {
    pub resolution: usize,
    /// Distance, in voxel edges, within which a voxel counts as touching
    /// the kept part of its asset.
    pub selection_threshold_voxels: f64,
    pub closing_passes: usize,
}

impl Default for ComposeParams {
    fn default() -> Self {
        ComposeParams {
            resolution: 64,
            selection_threshold_voxels: 1.0,
            closing_passes: DEFAULT_CLOSING_PASSES,
        }
    }
}

impl ComposeParams {
    pub fn validate(&self) -> Result<()> {
        crate::slat::check_resolution(self.resolution)?;
        if !(self.selection_threshold_voxels.is_finite() && self.selection_threshold_voxels > 0.0) {
            return Err(Error::InvalidParams(format!(
                "selection_threshold_voxels must be positive, got {}",
                self.selection_threshold_voxels
            )));
        }
        if self.closing_passes > MAX_CLOSING_PASSES {
            return Err(Error::InvalidParams(format!(
                "closing_passes must be at most {MAX_CLOSING_PASSES}, got {}",
                self.closing_passes
            )));
        }
        Ok(())
    }
}

fn keep() -> BrushMode {
    BrushMode::Keep
}

fn is_keep(m: &BrushMode) -> bool {
    *m == BrushMode::Keep
}

/// A source mesh and its painted selection. Exactly one of `mesh_path` and
/// `generator` is set. Strokes are stored in the asset's local frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Asset {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorSpec>,
    /// Uniform vertex color applied on load, replacing any file colors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub color: Option<Rgb>,
    /// Selection state of every vertex before the strokes are replayed.
    #[serde(default = "keep", skip_serializing_if = "is_keep")]
    pub initial: BrushMode,
    #[serde(default)]
    pub strokes: Vec<BrushStroke>,
}

impl Asset {
    pub fn from_generator(id: impl Into<String>, generator: GeneratorSpec) -> Self {
        Asset {
            id: id.into(),
            mesh_path: None,
            generator: Some(generator),
            color: None,
            initial: BrushMode::Keep,
            strokes: Vec::new(),
        }
    }

    pub fn from_mesh_path(id: impl Into<String>, path: impl Into<String>) -> Self {
        Asset {
            id: id.into(),
            mesh_path: Some(path.into()),
            generator: None,
            color: None,
            initial: BrushMode::Keep,
            strokes: Vec::new(),
        }
    }

    pub fn with_color(mut self, color: Rgb) -> Self {
        self.color = Some(color);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Instance {
    pub id: String,
    pub asset_id: String,
    #[serde(default)]
    pub transform: Transform3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub version: u32,
    #[serde(default)]
    pub assets: Vec<Asset>,
    #[serde(default)]
    pub instances: Vec<Instance>,
    #[serde(default)]
    pub compose_params: ComposeParams,
}

impl Default for Scene {
    fn default() -> Self {
        Scene {
            version: SCENE_VERSION,
            assets: Vec::new(),
            instances: Vec::new(),
            compose_params: ComposeParams::default(),
        }
    }
}

impl Scene {
    pub fn asset(&self, id: &str) -> Option<&Asset> {
        self.assets.iter().find(|a| a.id == id)
    }

    pub fn asset_mut(&mut self, id: &str) -> Option<&mut Asset> {
        self.assets.iter_mut().find(|a| a.id == id)
    }

    pub fn instance(&self, id: &str) -> Option<&Instance> {
        self.instances.iter().find(|i| i.id == id)
    }

    pub fn instance_mut(&mut self, id: &str) -> Option<&mut Instance> {
        self.instances.iter_mut().find(|i| i.id == id)
    }

    /// Checks the cross-references the type system cannot: ids unique,
    /// instance assets resolvable, one mesh source per asset.
    pub fn validate(&self) -> Result<()> {
        if self.version != SCENE_VERSION {
            return Err(Error::scene(
                "$.version",
                format!("unsupported version {} (expected {SCENE_VERSION})", self.version),
            ));
        }
        let mut asset_ids = HashSet::new();
        for (i, a) in self.assets.iter().enumerate() {
            if a.id.is_empty() {
                return Err(Error::scene(format!("$.assets[{i}].id"), "empty id"));
            }
            if !asset_ids.insert(a.id.as_str()) {
                return Err(Error::scene(format!("$.assets[{i}].id"), format!("duplicate asset id {:?}", a.id)));
            }
            if a.mesh_path.is_some() == a.generator.is_some() {
                return Err(Error::scene(
                    format!("$.assets[{i}]"),
                    "exactly one of mesh_path and generator must be set",
                ));
            }
            if let Some(c) = a.color {
                if c.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(Error::scene(format!("$.assets[{i}].color"), "components must lie in [0, 1]"));
                }
            }
        }
        let mut instance_ids = HashSet::new();
        for (i, inst) in self.instances.iter().enumerate() {
            if inst.id.is_empty() {
                return Err(Error::scene(format!("$.instances[{i}].id"), "empty id"));
            }
            if !instance_ids.insert(inst.id.as_str()) {
                return Err(Error::scene(
                    format!("$.instances[{i}].id"),
                    format!("duplicate instance id {:?}", inst.id),
                ));
            }
            if !asset_ids.contains(inst.asset_id.as_str()) {
                return Err(Error::scene(
                    format!("$.instances[{i}].asset_id"),
                    format!("unknown asset {:?}", inst.asset_id),
                ));
            }
        }
        self.compose_params
            .validate()
            .map_err(|e| Error::scene("$.compose_params", e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Scene> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let scene: Scene = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let path = if path == "." { "$".to_string() } else { format!("$.{path}") };
            Error::scene(path, e.into_inner().to_string())
        })?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scene serializes");
        s.push('\n');
        s
    }
}

pub fn scene_load(path: impl AsRef<Path>) -> Result<Scene> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Scene::from_json(&text)
}

pub fn scene_save(scene: &Scene, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    scene.validate()?;
    std::fs::write(path, scene.to_json()).map_err(|e| Error::io(path, e))
}

/// Where relative `mesh_path`s are looked up, in order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AssetResolver {
    pub dirs: Vec<PathBuf>,
}

impl AssetResolver {
    pub fn new(dirs: impl IntoIterator<Item = PathBuf>) -> Self {
        AssetResolver {
            dirs: dirs.into_iter().collect(),
        }
    }

    /// Resolver for a scene file: its own directory first, then `asset_root`.
    pub fn for_scene_file(scene_path: &Path, asset_root: Option<&Path>) -> Self {
        let dir = scene_path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        AssetResolver::new(std::iter::once(dir).chain(asset_root.map(Path::to_path_buf)))
    }

    pub fn resolve(&self, mesh_path: &str) -> Result<PathBuf> {
        let p = Path::new(mesh_path);
        if p.is_absolute() {
            return Ok(p.to_path_buf());
        }
        self.dirs
            .iter()
            .map(|d| d.join(p))
            .find(|c| c.is_file())
            .ok_or_else(|| Error::io(p, std::io::Error::new(std::io::ErrorKind::NotFound, "not found in asset directories")))
    }
}

/// Loads an asset's mesh (colored, if the asset sets a color) with its
/// selection mask replayed from the stored strokes.
pub fn load_asset(asset: &Asset, resolver: &AssetResolver) -> Result<TriMesh> {
    let mut mesh = load_asset_geometry(asset, resolver)?;
    mesh.set_mask(asset_mask(&mesh, asset)?)?;
    Ok(mesh)
}

fn load_asset_geometry(asset: &Asset, resolver: &AssetResolver) -> Result<TriMesh> {
    let mesh = match (&asset.mesh_path, &asset.generator) {
        (Some(p), None) => load_mesh(resolver.resolve(p)?)?,
        (None, Some(g)) => gen_shape(g)?,
        _ => {
            return Err(Error::scene(
                format!("asset {}", asset.id),
                "exactly one of mesh_path and generator must be set",
            ))
        }
    };
    match asset.color {
        Some(c) => mesh.with_uniform_color(c),
        None => Ok(mesh),
    }
}

/// Replays an asset's strokes, in order, over its initial selection.
pub fn asset_mask(mesh: &TriMesh, asset: &Asset) -> Result<SelectionMask> {
    let mut m = mesh.clone();
    m.set_mask(SelectionMask::all(mesh.vertex_count(), asset.initial == BrushMode::Keep))?;
    let id = Transform3::identity();
    for s in &asset.strokes {
        let mask = apply_stroke(&m, s, &id)?;
        m.set_mask(mask)?;
    }
    Ok(m.mask().clone())
}

/// Pipeline stages, reported through the progress callback and attached to
/// failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Load,
    Encode,
    Filter,
    Transform,
    Union,
    Solidify,
    Decode,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Load => "load",
            Stage::Encode => "encode",
            Stage::Filter => "filter",
            Stage::Transform => "transform",
            Stage::Union => "union",
            Stage::Solidify => "solidify",
            Stage::Decode => "decode",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{stage} failed: {source}")]
pub struct ComposeError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

impl From<ComposeError> for Error {
    fn from(e: ComposeError) -> Self {
        e.source
    }
}

#[derive(Debug, Clone)]
pub struct Composition {
    pub mesh: TriMesh,
    /// Instances left out because their selection was empty.
    pub skipped: Vec<String>,
    /// Edge length of the output voxel grid.
    pub voxel_size: f64,
    pub voxel_count: usize,
}

type CacheSlot = Arc<Mutex<Option<(Arc<TriMesh>, Arc<SparseLatentVolume>)>>>;

/// Encoded volumes keyed by asset source and resolution. Each key has its
/// own lock, so concurrent composes encode a given asset once while other
/// assets proceed in parallel.
#[derive(Debug, Default)]
pub struct EncodeCache {
    slots: Mutex<HashMap<(String, usize), CacheSlot>>,
}

impl EncodeCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.slots.lock().unwrap().values().filter(|s| s.lock().unwrap().is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn key(asset: &Asset, resolver: &AssetResolver) -> Result<String> {
        let source = match (&asset.mesh_path, &asset.generator) {
            (Some(p), _) => format!("file:{}", resolver.resolve(p)?.display()),
            (None, Some(g)) => format!("gen:{}", serde_json::to_string(g).expect("generator serializes")),
            (None, None) => String::new(),
        };
        Ok(format!("{source}|color:{:?}", asset.color))
    }

    /// Returns the asset's geometry (without selection) and its encoding.
    fn get(
        &self,
        asset: &Asset,
        resolver: &AssetResolver,
        resolution: usize,
        progress: &mut dyn FnMut(Stage),
    ) -> Result<(Arc<TriMesh>, Arc<SparseLatentVolume>), ComposeError> {
        let at = |stage| move |source| ComposeError { stage, source };
        let key = (Self::key(asset, resolver).map_err(at(Stage::Load))?, resolution);
        let slot = self.slots.lock().unwrap().entry(key).or_default().clone();
        let mut guard = slot.lock().unwrap();
        if let Some((m, v)) = guard.as_ref() {
            return Ok((m.clone(), v.clone()));
        }
        progress(Stage::Load);
        let mesh = load_asset_geometry(asset, resolver).map_err(at(Stage::Load))?;
        progress(Stage::Encode);
        let params = EncodeParams {
            resolution,
            ..EncodeParams::default()
        };
        let vol = encode_mesh(&mesh, &params).map_err(at(Stage::Encode))?;
        let entry = (Arc::new(mesh), Arc::new(vol));
        *guard = Some(entry.clone());
        Ok(entry)
    }
}

/// Runs the full pipeline on `scene`. See [`compose_with`].
pub fn compose(scene: &Scene, resolver: &AssetResolver) -> Result<Composition> {
    Ok(compose_with(scene, resolver, &EncodeCache::new(), &mut |_| {})?)
}

/// Encode (cached) → filter by selection → transform → union → solidify →
/// decode. Instances whose selection keeps nothing are skipped; if every
/// instance is skipped the scene has nothing to compose.
pub fn compose_with(
    scene: &Scene,
    resolver: &AssetResolver,
    cache: &EncodeCache,
    progress: &mut dyn FnMut(Stage),
) -> Result<Composition, ComposeError> {
    let at = |stage| move |source| ComposeError { stage, source };
    scene.validate().map_err(at(Stage::Load))?;
    let p = &scene.compose_params;
    let mut masks: HashMap<&str, SelectionMask> = HashMap::new();
    let mut vols = Vec::new();
    let mut skipped = Vec::new();
    for inst in &scene.instances {
        let asset = scene.asset(&inst.asset_id).expect("validated");
        let (mesh, vol) = cache.get(asset, resolver, p.resolution, progress)?;
        if !masks.contains_key(asset.id.as_str()) {
            progress(Stage::Filter);
            let mask = asset_mask(&mesh, asset).map_err(at(Stage::Filter))?;
            masks.insert(&asset.id, mask);
        }
        let mask = &masks[asset.id.as_str()];
        if mask.kept_count() == 0 {
            skipped.push(inst.id.clone());
            continue;
        }
        progress(Stage::Filter);
        let filtered = filter_by_mask(&vol, &mesh, mask, p.selection_threshold_voxels).map_err(at(Stage::Filter))?;
        if filtered.is_empty() {
            skipped.push(inst.id.clone());
            continue;
        }
        progress(Stage::Transform);
        vols.push(transform_volume(&filtered, &inst.transform).map_err(at(Stage::Transform))?);
    }
    if vols.is_empty() {
        return Err(ComposeError {
            stage: Stage::Filter,
            source: Error::NothingToCompose(skipped),
        });
    }
    progress(Stage::Union);
    let union = latent_union(&vols, p.resolution).map_err(at(Stage::Union))?;
    progress(Stage::Solidify);
    let grid = solidify(&union, p.closing_passes).map_err(at(Stage::Solidify))?;
    progress(Stage::Decode);
    let mesh = decode_surface(&grid, &union).map_err(at(Stage::Decode))?;
    Ok(Composition {
        mesh,
        skipped,
        voxel_size: union.voxel_size(),
        voxel_count: union.len(),
    })
}

/// Five colored building blocks stacked into a small gate: a base slab, two
/// pillars (one rotated a quarter turn), a lintel and a half-scale cap.
pub fn five_block_scene() -> Scene {
    let block = |id: &str, size: [f64; 3], color: Rgb| {
        Asset::from_generator(
            id,
            GeneratorSpec::new(ShapeParams::Block(BlockParams {
                size,
                cells_per_unit: 6.0,
            })),
        )
        .with_color(color)
    };
    let assets = vec![
        block("base", [4.0, 0.5, 2.0], [0.85, 0.20, 0.20]),
        block("pillar_left", [1.0, 1.5, 1.0], [0.20, 0.45, 0.85]),
        block("pillar_right", [1.0, 1.5, 0.8], [0.95, 0.80, 0.15]),
        block("lintel", [4.0, 0.5, 1.0], [0.25, 0.70, 0.30]),
        block("cap", [1.0, 1.0, 1.0], [0.95, 0.95, 0.95]),
    ];
    let t = |v: [f64; 3]| Transform3::translation(Vec3::new(v[0], v[1], v[2]));
    let instances = vec![
        ("base-1", "base", Transform3::identity()),
        ("pillar_left-1", "pillar_left", t([-1.5, 1.0, 0.0])),
        (
            "pillar_right-1",
            "pillar_right",
            t([1.5, 1.0, 0.0]) * Transform3::rotation_y(std::f64::consts::FRAC_PI_2),
        ),
        ("lintel-1", "lintel", t([0.0, 2.0, 0.0])),
        (
            "cap-1",
            "cap",
            t([0.0, 2.5, 0.0]) * Transform3::rotation_z(std::f64::consts::FRAC_PI_2) * Transform3::uniform_scale(0.5).expect("positive"),
        ),
    ]
    .into_iter()
    .map(|(id, asset, transform)| Instance {
        id: id.into(),
        asset_id: asset.into(),
        transform,
    })
    .collect();
    Scene {
        version: SCENE_VERSION,
        assets,
        instances,
        compose_params: ComposeParams::default(),
    }
}
