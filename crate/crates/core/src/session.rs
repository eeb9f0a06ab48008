//! Editing sessions: a mutable scene, a revision counter and the most recent
//! composition.
//!
//! Mutations on one session are serialized by its write lock and each bumps
//! the revision. Composition runs on a snapshot without holding the lock, so
//! reads stay available while it runs; its result is tagged with the
//! revision it was computed from and reported stale once the scene moves on.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{parse_obj, save_mesh, GeneratorSpec, Rgb, Transform3, TriMesh};
use crate::scene::{
    asset_mask, compose_with, load_asset, scene_save, Asset, AssetResolver, ComposeError, ComposeParams, EncodeCache,
    Instance, Scene, Stage,
};
use crate::segmentation::{BrushMode, BrushStroke, SelectionMask};

/// Where a new asset's geometry comes from.
#[derive(Debug, Clone)]
pub enum AssetSource {
    /// OBJ text, stored verbatim in the session directory.
    Obj(String),
    Generator(GeneratorSpec),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AddedAsset {
    pub asset_id: String,
    /// The identity-placed instance created alongside, if requested.
    pub instance_id: Option<String>,
    pub revision: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MaskStats {
    pub kept: usize,
    pub total: usize,
}

impl From<&SelectionMask> for MaskStats {
    fn from(m: &SelectionMask) -> Self {
        MaskStats {
            kept: m.kept_count(),
            total: m.len(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ComposeResult {
    pub mesh: Arc<TriMesh>,
    /// Scene revision the result was computed from.
    pub revision: u64,
    pub skipped: Vec<String>,
    pub voxel_size: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ComposeState {
    Idle,
    Running,
    Done,
    Failed,
}

/// Progress of the latest composition, for polling.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComposeStatus {
    pub state: ComposeState,
    pub revision: Option<u64>,
    pub stage: Option<Stage>,
    pub error: Option<String>,
}

impl Default for ComposeStatus {
    fn default() -> Self {
        ComposeStatus {
            state: ComposeState::Idle,
            revision: None,
            stage: None,
            error: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComposeSummary {
    pub revision: u64,
    pub vertex_count: usize,
    pub face_count: usize,
    pub skipped_instances: Vec<String>,
    pub voxel_size: f64,
}

#[derive(Debug)]
struct State {
    scene: Scene,
    revision: u64,
    next_serial: u64,
    result: Option<ComposeResult>,
}

impl State {
    fn fresh_id(&mut self, prefix: &str) -> String {
        loop {
            self.next_serial += 1;
            let id = format!("{prefix}{}", self.next_serial);
            if self.scene.asset(&id).is_none() && self.scene.instance(&id).is_none() {
                return id;
            }
        }
    }

    fn bump(&mut self) -> u64 {
        self.revision += 1;
        self.revision
    }

    fn instance(&self, id: &str) -> Result<&Instance> {
        self.scene.instance(id).ok_or_else(|| Error::UnknownId(id.to_string()))
    }

    fn asset(&self, id: &str) -> Result<&Asset> {
        self.scene.asset(id).ok_or_else(|| Error::UnknownId(id.to_string()))
    }
}

#[derive(Debug)]
pub struct Session {
    id: String,
    dir: PathBuf,
    resolver: AssetResolver,
    state: RwLock<State>,
    cache: EncodeCache,
    /// Held for the duration of a composition: one at a time per session.
    composing: Mutex<()>,
    status: Mutex<ComposeStatus>,
}

impl Session {
    fn new(id: String, dir: PathBuf, extra_dirs: Vec<PathBuf>, scene: Scene) -> Self {
        let resolver = AssetResolver::new(std::iter::once(dir.clone()).chain(extra_dirs));
        Session {
            id,
            dir,
            resolver,
            state: RwLock::new(State {
                scene,
                revision: 0,
                next_serial: 0,
                result: None,
            }),
            cache: EncodeCache::new(),
            composing: Mutex::new(()),
            status: Mutex::new(ComposeStatus::default()),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    /// Directory holding uploaded meshes.
    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn revision(&self) -> u64 {
        self.state.read().unwrap().revision
    }

    pub fn scene(&self) -> Scene {
        self.state.read().unwrap().scene.clone()
    }

    /// The scene together with the revision it belongs to.
    pub fn snapshot(&self) -> (Scene, u64) {
        let s = self.state.read().unwrap();
        (s.scene.clone(), s.revision)
    }

    fn mutate<T>(&self, f: impl FnOnce(&mut State) -> Result<T>) -> Result<(T, u64)> {
        let mut s = self.state.write().unwrap();
        let out = f(&mut s)?;
        Ok((out, s.bump()))
    }

    pub fn add_asset(&self, source: AssetSource, color: Option<Rgb>, place_instance: bool) -> Result<AddedAsset> {
        if let AssetSource::Obj(text) = &source {
            parse_obj(text)?;
        }
        let mut s = self.state.write().unwrap();
        let asset_id = s.fresh_id("a");
        let mut asset = match source {
            AssetSource::Obj(text) => {
                let file = format!("{asset_id}.obj");
                let path = self.dir.join(&file);
                std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
                Asset::from_mesh_path(&asset_id, file)
            }
            AssetSource::Generator(g) => {
                crate::geometry::gen_shape(&g)?;
                Asset::from_generator(&asset_id, g)
            }
        };
        asset.color = color;
        s.scene.assets.push(asset);
        let instance_id = place_instance.then(|| {
            let id = s.fresh_id("i");
            s.scene.instances.push(Instance {
                id: id.clone(),
                asset_id: asset_id.clone(),
                transform: Transform3::identity(),
            });
            id
        });
        s.scene.validate()?;
        let revision = s.bump();
        Ok(AddedAsset {
            asset_id,
            instance_id,
            revision,
        })
    }

    pub fn add_instance(&self, asset_id: &str, transform: Transform3) -> Result<(String, u64)> {
        self.mutate(|s| {
            s.asset(asset_id)?;
            let id = s.fresh_id("i");
            s.scene.instances.push(Instance {
                id: id.clone(),
                asset_id: asset_id.to_string(),
                transform,
            });
            Ok(id)
        })
    }

    /// New instance sharing the source instance's asset and placement.
    pub fn duplicate_instance(&self, instance_id: &str) -> Result<(String, u64)> {
        self.mutate(|s| {
            let src = s.instance(instance_id)?.clone();
            let id = s.fresh_id("i");
            s.scene.instances.push(Instance { id: id.clone(), ..src });
            Ok(id)
        })
    }

    pub fn set_transform(&self, instance_id: &str, transform: Transform3) -> Result<u64> {
        self.mutate(|s| {
            s.instance(instance_id)?;
            s.scene.instance_mut(instance_id).expect("checked").transform = transform;
            Ok(())
        })
        .map(|(_, r)| r)
    }

    pub fn delete_instance(&self, instance_id: &str) -> Result<u64> {
        self.mutate(|s| {
            s.instance(instance_id)?;
            s.scene.instances.retain(|i| i.id != instance_id);
            Ok(())
        })
        .map(|(_, r)| r)
    }

    /// Removes an asset and every instance of it; returns how many instances
    /// went with it.
    pub fn delete_asset(&self, asset_id: &str) -> Result<(usize, u64)> {
        self.mutate(|s| {
            s.asset(asset_id)?;
            s.scene.assets.retain(|a| a.id != asset_id);
            let before = s.scene.instances.len();
            s.scene.instances.retain(|i| i.asset_id != asset_id);
            Ok(before - s.scene.instances.len())
        })
    }

    /// Paints a world-space stroke onto an asset. The stroke is mapped into
    /// the asset's frame through `via_instance`'s placement (identity if
    /// none) and stored there, so it applies to every instance.
    pub fn paint(&self, asset_id: &str, stroke: &BrushStroke, via_instance: Option<&str>) -> Result<(MaskStats, u64)> {
        let mut s = self.state.write().unwrap();
        let world = match via_instance {
            Some(iid) => {
                let inst = s.instance(iid)?;
                if inst.asset_id != asset_id {
                    return Err(Error::InvalidParams(format!("instance {iid} does not place asset {asset_id}")));
                }
                inst.transform
            }
            None => Transform3::identity(),
        };
        let local = stroke.to_local(&world)?;
        let mut asset = s.asset(asset_id)?.clone();
        asset.strokes.push(local);
        let mask = load_asset(&asset, &self.resolver)?.mask().clone();
        *s.scene.asset_mut(asset_id).expect("checked") = asset;
        Ok((MaskStats::from(&mask), s.bump()))
    }

    /// Drops all strokes and sets every vertex to `initial`.
    pub fn reset_selection(&self, asset_id: &str, initial: BrushMode) -> Result<u64> {
        self.mutate(|s| {
            s.asset(asset_id)?;
            let a = s.scene.asset_mut(asset_id).expect("checked");
            a.initial = initial;
            a.strokes.clear();
            Ok(())
        })
        .map(|(_, r)| r)
    }

    /// The asset's current selection.
    pub fn mask(&self, asset_id: &str) -> Result<SelectionMask> {
        let asset = self.state.read().unwrap().asset(asset_id)?.clone();
        let mesh = load_asset(&asset, &self.resolver)?;
        asset_mask(&mesh, &asset)
    }

    /// The asset's mesh in its own frame, selection attached.
    pub fn asset_mesh(&self, asset_id: &str) -> Result<TriMesh> {
        let asset = self.state.read().unwrap().asset(asset_id)?.clone();
        load_asset(&asset, &self.resolver)
    }

    pub fn set_compose_params(&self, params: ComposeParams) -> Result<u64> {
        params.validate()?;
        self.mutate(|s| {
            s.scene.compose_params = params;
            Ok(())
        })
        .map(|(_, r)| r)
    }

    /// Replaces the whole scene, as if its file had been loaded.
    pub fn replace_scene(&self, scene: Scene) -> Result<u64> {
        scene.validate()?;
        self.mutate(|s| {
            s.scene = scene;
            Ok(())
        })
        .map(|(_, r)| r)
    }

    /// Composes the current scene and attaches the result, unless a result
    /// from a newer revision is already attached.
    pub fn compose_now(&self) -> Result<ComposeSummary, ComposeError> {
        let _one_at_a_time = self.composing.lock().unwrap();
        let (scene, revision) = self.snapshot();
        *self.status.lock().unwrap() = ComposeStatus {
            state: ComposeState::Running,
            revision: Some(revision),
            stage: None,
            error: None,
        };
        let outcome = compose_with(&scene, &self.resolver, &self.cache, &mut |stage| {
            self.status.lock().unwrap().stage = Some(stage);
        });
        let mut status = self.status.lock().unwrap();
        match outcome {
            Ok(c) => {
                status.state = ComposeState::Done;
                let summary = ComposeSummary {
                    revision,
                    vertex_count: c.mesh.vertex_count(),
                    face_count: c.mesh.face_count(),
                    skipped_instances: c.skipped.clone(),
                    voxel_size: c.voxel_size,
                };
                let mut s = self.state.write().unwrap();
                if s.result.as_ref().is_none_or(|r| r.revision <= revision) {
                    s.result = Some(ComposeResult {
                        mesh: Arc::new(c.mesh),
                        revision,
                        skipped: c.skipped,
                        voxel_size: c.voxel_size,
                    });
                }
                Ok(summary)
            }
            Err(e) => {
                status.state = ComposeState::Failed;
                status.stage = Some(e.stage);
                status.error = Some(e.source.to_string());
                Err(e)
            }
        }
    }

    pub fn compose_status(&self) -> ComposeStatus {
        self.status.lock().unwrap().clone()
    }

    /// The attached result and whether the scene has changed since.
    pub fn result(&self) -> Option<(ComposeResult, bool)> {
        let s = self.state.read().unwrap();
        s.result.as_ref().map(|r| (r.clone(), r.revision != s.revision))
    }

    /// Writes the attached result as OBJ.
    pub fn export(&self, path: &Path) -> Result<u64> {
        let (r, _) = self.result().ok_or(Error::NoResult)?;
        save_mesh(&r.mesh, path)?;
        Ok(r.revision)
    }

    /// Writes `scene.json` plus every referenced mesh file into `dir`, making
    /// a bundle that composes identically anywhere.
    pub fn save_bundle(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let scene = self.scene();
        let mut copied: HashMap<String, String> = HashMap::new();
        let mut out = scene.clone();
        for a in &mut out.assets {
            let Some(p) = a.mesh_path.clone() else { continue };
            if let Some(name) = copied.get(&p) {
                a.mesh_path = Some(name.clone());
                continue;
            }
            let src = self.resolver.resolve(&p)?;
            let name = format!("{}.obj", a.id);
            let dst = dir.join(&name);
            std::fs::copy(&src, &dst).map_err(|e| Error::io(&src, e))?;
            copied.insert(p, name.clone());
            a.mesh_path = Some(name);
        }
        let path = dir.join("scene.json");
        scene_save(&out, &path)?;
        Ok(path)
    }
}

/// All live sessions. Different sessions share nothing but this map.
#[derive(Debug)]
pub struct SessionStore {
    root: PathBuf,
    extra_dirs: Vec<PathBuf>,
    sessions: RwLock<HashMap<String, Arc<Session>>>,
}

impl SessionStore {
    /// Sessions keep uploaded meshes under `root/<session id>/`. Relative
    /// mesh paths in loaded scenes are also looked up in `extra_dirs`.
    pub fn new(root: impl Into<PathBuf>, extra_dirs: Vec<PathBuf>) -> Self {
        SessionStore {
            root: root.into(),
            extra_dirs,
            sessions: RwLock::new(HashMap::new()),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn create(&self) -> Result<Arc<Session>> {
        self.create_with(Scene::default())
    }

    /// New session starting from `scene`.
    pub fn create_with(&self, scene: Scene) -> Result<Arc<Session>> {
        scene.validate()?;
        let id = uuid::Uuid::new_v4().simple().to_string();
        let dir = self.root.join(&id);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let session = Arc::new(Session::new(id.clone(), dir, self.extra_dirs.clone(), scene));
        self.sessions.write().unwrap().insert(id, session.clone());
        Ok(session)
    }

    pub fn get(&self, id: &str) -> Result<Arc<Session>> {
        self.sessions
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| Error::UnknownId(id.to_string()))
    }

    /// Forgets a session; its directory stays on disk.
    pub fn remove(&self, id: &str) -> Result<()> {
        self.sessions
            .write()
            .unwrap()
            .remove(id)
            .map(|_| ())
            .ok_or_else(|| Error::UnknownId(id.to_string()))
    }

    pub fn ids(&self) -> Vec<String> {
        let mut v: Vec<String> = self.sessions.read().unwrap().keys().cloned().collect();
        v.sort();
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{gen_shape, is_watertight, load_mesh, write_obj, ShapeKind, Vec3};
    use crate::scene::{compose, scene_load};

    fn store() -> (tempfile::TempDir, SessionStore) {
        let dir = tempfile::tempdir().unwrap();
        let store = SessionStore::new(dir.path(), vec![]);
        (dir, store)
    }

    fn sphere() -> AssetSource {
        AssetSource::Generator(GeneratorSpec::kind(ShapeKind::Sphere))
    }

    #[test]
    fn happy_path_exports_obj() {
        let (dir, store) = store();
        let s = store.create().unwrap();
        let added = s.add_asset(sphere(), None, true).unwrap();
        assert_eq!(added.revision, 1);
        let summary = s.compose_now().unwrap();
        assert_eq!(summary.revision, 1);
        let out = dir.path().join("out.obj");
        assert_eq!(s.export(&out).unwrap(), 1);
        let m = load_mesh(&out).unwrap();
        assert!(is_watertight(&m));
        assert_eq!(s.compose_status().state, ComposeState::Done);
    }

    #[test]
    fn revisions_bump_and_results_go_stale() {
        let (_d, store) = store();
        let s = store.create().unwrap();
        let a = s.add_asset(sphere(), None, true).unwrap();
        s.compose_now().unwrap();
        assert!(!s.result().unwrap().1);
        let r = s
            .set_transform(a.instance_id.as_deref().unwrap(), Transform3::translation(Vec3::new(1.0, 0.0, 0.0)))
            .unwrap();
        assert_eq!(r, 2);
        let (res, stale) = s.result().unwrap();
        assert!(stale);
        assert_eq!(res.revision, 1);
        assert!(s.set_transform("nope", Transform3::identity()).is_err());
        assert_eq!(s.revision(), 2);
    }

    #[test]
    fn duplicate_then_move() {
        let (_d, store) = store();
        let s = store.create().unwrap();
        let a = s.add_asset(sphere(), None, true).unwrap();
        let first = a.instance_id.unwrap();
        let (dup, _) = s.duplicate_instance(&first).unwrap();
        s.set_transform(&dup, Transform3::translation(Vec3::new(3.0, 0.0, 0.0))).unwrap();
        let scene = s.scene();
        assert_eq!(scene.instances.len(), 2);
        assert_eq!(scene.instances[0].asset_id, scene.instances[1].asset_id);
        assert_ne!(scene.instances[0].transform, scene.instances[1].transform);
        s.compose_now().unwrap();
        let mesh = s.result().unwrap().0.mesh;
        assert_eq!(crate::geometry::connected_components(&mesh).0, 2);
    }

    #[test]
    fn dropping_everything_is_an_error() {
        let (_d, store) = store();
        let s = store.create().unwrap();
        let a = s.add_asset(sphere(), None, true).unwrap();
        let stroke = BrushStroke::new(vec![Vec3::zeros()], 5.0, BrushMode::Drop).unwrap();
        let (stats, _) = s.paint(&a.asset_id, &stroke, None).unwrap();
        assert_eq!(stats.kept, 0);
        let err = s.compose_now().unwrap_err();
        assert!(matches!(err.source, Error::NothingToCompose(_)));
        let st = s.compose_status();
        assert_eq!(st.state, ComposeState::Failed);
        assert_eq!(st.stage, Some(Stage::Filter));
    }

    #[test]
    fn painting_through_an_instance_uses_its_frame() {
        let (_d, store) = store();
        let s = store.create().unwrap();
        let a = s.add_asset(sphere(), None, true).unwrap();
        let iid = a.instance_id.unwrap();
        let t = Transform3::translation(Vec3::new(10.0, 0.0, 0.0)) * Transform3::uniform_scale(2.0).unwrap();
        s.set_transform(&iid, t).unwrap();
        // Top cap in world space: local top (0, 0, 0.5) lands at (10, 0, 1).
        let stroke = BrushStroke::new(vec![Vec3::new(10.0, 0.0, 1.0)], 0.4, BrushMode::Drop).unwrap();
        let (stats, _) = s.paint(&a.asset_id, &stroke, Some(&iid)).unwrap();
        assert!(stats.kept < stats.total && stats.kept > 0);
        let stored = &s.scene().assets[0].strokes[0];
        assert!((stored.radius() - 0.2).abs() < 1e-12);
        let mesh = gen_shape(&GeneratorSpec::kind(ShapeKind::Sphere)).unwrap();
        let mask = s.mask(&a.asset_id).unwrap();
        for (v, kept) in mesh.vertices().iter().zip(mask.iter()) {
            if (v - Vec3::new(0.0, 0.0, 0.5)).norm() > 0.2 + 1e-9 {
                assert!(kept);
            }
        }
    }

    #[test]
    fn asset_delete_cascades() {
        let (_d, store) = store();
        let s = store.create().unwrap();
        let a = s.add_asset(sphere(), None, true).unwrap();
        let b = s.add_asset(AssetSource::Generator(GeneratorSpec::kind(ShapeKind::Box)), None, true).unwrap();
        s.duplicate_instance(a.instance_id.as_deref().unwrap()).unwrap();
        let (removed, _) = s.delete_asset(&a.asset_id).unwrap();
        assert_eq!(removed, 2);
        let scene = s.scene();
        assert_eq!(scene.instances.len(), 1);
        assert_eq!(scene.instances[0].asset_id, b.asset_id);
        assert!(s.delete_asset(&a.asset_id).is_err());
    }

    #[test]
    fn uploaded_obj_is_stored_verbatim_and_bundle_recomposes() {
        let (dir, store) = store();
        let s = store.create().unwrap();
        let text = write_obj(&gen_shape(&GeneratorSpec::kind(ShapeKind::Torus)).unwrap()) + "# trailing comment\n";
        let a = s.add_asset(AssetSource::Obj(text.clone()), Some([0.2, 0.4, 0.6]), true).unwrap();
        let stored = std::fs::read_to_string(s.dir().join(format!("{}.obj", a.asset_id))).unwrap();
        assert_eq!(stored, text);
        assert!(s.add_asset(AssetSource::Obj("f 1 2 3\n".into()), None, true).is_err());
        s.compose_now().unwrap();
        let in_session = write_obj(&s.result().unwrap().0.mesh);
        let bundle = dir.path().join("bundle");
        let path = s.save_bundle(&bundle).unwrap();
        let loaded = scene_load(&path).unwrap();
        assert_eq!(loaded, s.scene());
        let fresh = compose(&loaded, &AssetResolver::for_scene_file(&path, None)).unwrap();
        assert_eq!(write_obj(&fresh.mesh), in_session);
    }

    #[test]
    fn store_lookup() {
        let (_d, store) = store();
        let s = store.create().unwrap();
        assert!(store.get(s.id()).is_ok());
        assert!(matches!(store.get("missing"), Err(Error::UnknownId(_))));
        store.remove(s.id()).unwrap();
        assert!(store.ids().is_empty());
    }
}
