use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;
use voxcompose_core::geometry::{gen_shape, parse_obj, write_obj, GeneratorSpec, ShapeKind};
use voxcompose_core::scene::{compose, AssetResolver, Scene};
use voxcompose_core::session::SessionStore;
use voxcompose_service::api::{router, REVISION_HEADER, STALE_HEADER};

struct Harness {
    _dir: tempfile::TempDir,
    app: Router,
}

struct Reply {
    status: StatusCode,
    headers: axum::http::HeaderMap,
    body: Vec<u8>,
}

impl Reply {
    fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap_or_else(|_| panic!("not JSON: {}", String::from_utf8_lossy(&self.body)))
    }

    fn text(&self) -> String {
        String::from_utf8(self.body.clone()).unwrap()
    }
}

impl Harness {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let store = Arc::new(SessionStore::new(dir.path().join("sessions"), vec![]));
        Harness {
            app: router(store),
            _dir: dir,
        }
    }

    async fn send(&self, method: Method, uri: &str, content_type: Option<&str>, body: impl Into<Body>) -> Reply {
        let mut req = Request::builder().method(method).uri(uri);
        if let Some(ct) = content_type {
            req = req.header("content-type", ct);
        }
        let resp = self.app.clone().oneshot(req.body(body.into()).unwrap()).await.unwrap();
        let status = resp.status();
        let headers = resp.headers().clone();
        let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
        Reply { status, headers, body }
    }

    async fn json(&self, method: Method, uri: &str, body: Value) -> Reply {
        self.send(method, uri, Some("application/json"), body.to_string()).await
    }

    async fn get(&self, uri: &str) -> Reply {
        self.send(Method::GET, uri, None, Body::empty()).await
    }

    async fn session(&self) -> String {
        let r = self.send(Method::POST, "/sessions", None, Body::empty()).await;
        assert_eq!(r.status, StatusCode::CREATED);
        r.json()["id"].as_str().unwrap().to_string()
    }

    async fn generator_asset(&self, sid: &str, kind: &str) -> (String, String) {
        let r = self
            .json(Method::POST, &format!("/sessions/{sid}/assets"), json!({ "generator": { "kind": kind } }))
            .await;
        assert_eq!(r.status, StatusCode::CREATED, "{}", r.text());
        let v = r.json();
        (
            v["asset_id"].as_str().unwrap().to_string(),
            v["instance_id"].as_str().unwrap().to_string(),
        )
    }
}

fn translation(x: f64, y: f64, z: f64) -> Value {
    json!([1, 0, 0, x, 0, 1, 0, y, 0, 0, 1, z, 0, 0, 0, 1])
}

#[tokio::test]
async fn create_add_compose_fetch_result() {
    let h = Harness::new();
    let sid = h.session().await;
    h.generator_asset(&sid, "sphere").await;

    let r = h.send(Method::POST, &format!("/sessions/{sid}/compose"), None, Body::empty()).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.text());
    let summary = r.json();
    assert_eq!(summary["revision"], 1);
    assert!(summary["face_count"].as_u64().unwrap() > 0);

    let r = h.get(&format!("/sessions/{sid}/result")).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.headers[REVISION_HEADER], "1");
    assert_eq!(r.headers[STALE_HEADER], "false");
    let mesh = parse_obj(&r.text()).unwrap();
    assert_eq!(mesh.face_count() as u64, summary["face_count"].as_u64().unwrap());

    let status = h.get(&format!("/sessions/{sid}/compose")).await.json();
    assert_eq!(status["state"], "done");
    assert_eq!(status["result_revision"], 1);
    assert_eq!(status["stale"], false);
}

#[tokio::test]
async fn edits_after_compose_mark_the_result_stale() {
    let h = Harness::new();
    let sid = h.session().await;
    let (_, iid) = h.generator_asset(&sid, "box").await;
    h.send(Method::POST, &format!("/sessions/{sid}/compose"), None, Body::empty()).await;
    let r = h
        .json(
            Method::PUT,
            &format!("/sessions/{sid}/instances/{iid}/transform"),
            json!({ "transform": translation(0.5, 0.0, 0.0) }),
        )
        .await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.json()["revision"], 2);
    let r = h.get(&format!("/sessions/{sid}/result")).await;
    assert_eq!(r.headers[REVISION_HEADER], "1");
    assert_eq!(r.headers[STALE_HEADER], "true");
}

#[tokio::test]
async fn multipart_and_raw_obj_uploads() {
    let h = Harness::new();
    let sid = h.session().await;
    let obj = write_obj(&gen_shape(&GeneratorSpec::kind(ShapeKind::Torus)).unwrap());

    let boundary = "XBOUNDARYX";
    let form = format!(
        "--{boundary}\r\nContent-Disposition: form-data; name=\"file\"; filename=\"torus.obj\"\r\nContent-Type: model/obj\r\n\r\n{obj}\r\n--{boundary}\r\nContent-Disposition: form-data; name=\"color\"\r\n\r\n[0.1, 0.5, 0.9]\r\n--{boundary}--\r\n"
    );
    let r = h
        .send(
            Method::POST,
            &format!("/sessions/{sid}/assets"),
            Some(&format!("multipart/form-data; boundary={boundary}")),
            form,
        )
        .await;
    assert_eq!(r.status, StatusCode::CREATED, "{}", r.text());
    let aid = r.json()["asset_id"].as_str().unwrap().to_string();

    let r = h.send(Method::POST, &format!("/sessions/{sid}/assets"), Some("text/plain"), obj.clone()).await;
    assert_eq!(r.status, StatusCode::CREATED, "{}", r.text());

    let bad = h
        .send(Method::POST, &format!("/sessions/{sid}/assets"), Some("text/plain"), "v 0 0 0\nf 1 1 1\n")
        .await;
    assert_eq!(bad.status, StatusCode::BAD_REQUEST);

    let mesh = parse_obj(&h.get(&format!("/sessions/{sid}/assets/{aid}/mesh")).await.text()).unwrap();
    assert_eq!(mesh.colors().unwrap()[0], [0.1, 0.5, 0.9]);

    let scene: Scene = Scene::from_json(&h.get(&format!("/sessions/{sid}/scene")).await.text()).unwrap();
    assert_eq!(scene.assets.len(), 2);
    assert_eq!(scene.instances.len(), 2);
    assert!(scene.assets[0].mesh_path.is_some());
}

#[tokio::test]
async fn strokes_update_the_service_mask() {
    let h = Harness::new();
    let sid = h.session().await;
    let (aid, iid) = h.generator_asset(&sid, "sphere").await;
    h.json(
        Method::PUT,
        &format!("/sessions/{sid}/instances/{iid}/transform"),
        json!({ "transform": translation(5.0, 0.0, 0.0) }),
    )
    .await;
    let r = h
        .json(Method::PUT, &format!("/sessions/{sid}/assets/{aid}/selection"), json!({ "initial": "drop" }))
        .await;
    assert_eq!(r.status, StatusCode::OK);
    // Keep the top half, painted in world space through the moved instance.
    let stroke = json!({ "path": [[5.0, 0.0, 0.5]], "radius": 0.72, "mode": "keep", "instance_id": iid });
    let r = h.json(Method::POST, &format!("/sessions/{sid}/assets/{aid}/strokes"), stroke.clone()).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.text());
    let painted = r.json();
    let kept = painted["kept"].as_u64().unwrap();
    assert!(kept > 0 && kept < painted["total"].as_u64().unwrap());

    // Idempotent: the same stroke again leaves the mask unchanged.
    let again = h.json(Method::POST, &format!("/sessions/{sid}/assets/{aid}/strokes"), stroke).await.json();
    assert_eq!(again["kept"], painted["kept"]);

    let mask = h.get(&format!("/sessions/{sid}/assets/{aid}/mask")).await.json();
    assert_eq!(mask["kept_count"], painted["kept"]);
    let flags = mask["kept"].as_array().unwrap();
    assert_eq!(flags.iter().filter(|b| b.as_bool().unwrap()).count() as u64, kept);

    let bad = h
        .json(
            Method::POST,
            &format!("/sessions/{sid}/assets/{aid}/strokes"),
            json!({ "path": [], "radius": 0.1, "mode": "keep" }),
        )
        .await;
    assert_eq!(bad.status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn duplicate_and_cascading_delete() {
    let h = Harness::new();
    let sid = h.session().await;
    let (aid, iid) = h.generator_asset(&sid, "sphere").await;
    let r = h.json(Method::POST, &format!("/sessions/{sid}/instances"), json!({ "duplicate_of": iid })).await;
    assert_eq!(r.status, StatusCode::CREATED);
    let dup = r.json()["instance_id"].as_str().unwrap().to_string();
    h.json(
        Method::PUT,
        &format!("/sessions/{sid}/instances/{dup}/transform"),
        json!({ "transform": translation(3.0, 0.0, 0.0) }),
    )
    .await;
    let r = h
        .json(
            Method::POST,
            &format!("/sessions/{sid}/instances"),
            json!({ "asset_id": aid, "transform": translation(0.0, 3.0, 0.0) }),
        )
        .await;
    assert_eq!(r.status, StatusCode::CREATED);
    let third = r.json()["instance_id"].as_str().unwrap().to_string();

    let r = h
        .send(Method::DELETE, &format!("/sessions/{sid}/instances/{third}"), None, Body::empty())
        .await;
    assert_eq!(r.status, StatusCode::OK);

    let scene = Scene::from_json(&h.get(&format!("/sessions/{sid}/scene")).await.text()).unwrap();
    assert_eq!(scene.instances.len(), 2);
    assert_eq!(scene.instances[0].asset_id, scene.instances[1].asset_id);
    assert_ne!(scene.instances[0].transform, scene.instances[1].transform);

    let r = h.send(Method::DELETE, &format!("/sessions/{sid}/assets/{aid}"), None, Body::empty()).await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.json()["removed_instances"], 2);
    let r = h.send(Method::POST, &format!("/sessions/{sid}/compose"), None, Body::empty()).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn errors_are_json_with_status_and_stage() {
    let h = Harness::new();
    assert_eq!(h.get("/sessions/nope/scene").await.status, StatusCode::NOT_FOUND);
    let sid = h.session().await;
    assert_eq!(h.get(&format!("/sessions/{sid}/result")).await.status, StatusCode::NOT_FOUND);
    let (aid, iid) = h.generator_asset(&sid, "sphere").await;

    let r = h
        .json(
            Method::PUT,
            &format!("/sessions/{sid}/instances/{iid}/transform"),
            json!({ "transform": [0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1] }),
        )
        .await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
    assert!(r.json()["error"].as_str().unwrap().starts_with("$.transform"));

    let r = h
        .json(Method::PUT, &format!("/sessions/{sid}/instances/missing/transform"), json!({ "transform": translation(0.0, 0.0, 0.0) }))
        .await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);

    h.json(
        Method::POST,
        &format!("/sessions/{sid}/assets/{aid}/strokes"),
        json!({ "path": [[0, 0, 0]], "radius": 5.0, "mode": "drop" }),
    )
    .await;
    let r = h.send(Method::POST, &format!("/sessions/{sid}/compose"), None, Body::empty()).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    let body = r.json();
    assert_eq!(body["stage"], "filter");
    assert!(body["error"].as_str().unwrap().contains("empty selection"));
    let status = h.get(&format!("/sessions/{sid}/compose")).await.json();
    assert_eq!(status["state"], "failed");
    assert_eq!(status["stage"], "filter");

    let r = h.send(Method::POST, "/sessions", Some("application/json"), "{\"version\": 2}").await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);
}

/// A session built through the API and one created from its scene JSON
/// compose to the same bytes, and both match composing the scene directly.
#[tokio::test]
async fn api_edits_and_scene_files_are_equivalent() {
    let h = Harness::new();
    let sid = h.session().await;
    let (_, iid) = h.generator_asset(&sid, "torus").await;
    let (aid2, _) = h.generator_asset(&sid, "elongated").await;
    h.json(
        Method::PUT,
        &format!("/sessions/{sid}/instances/{iid}/transform"),
        json!({ "transform": translation(0.0, 0.0, 0.6) }),
    )
    .await;
    h.json(
        Method::POST,
        &format!("/sessions/{sid}/assets/{aid2}/strokes"),
        json!({ "path": [[0.5, 0, 0], [0.2, 0, 0]], "radius": 0.15, "mode": "drop" }),
    )
    .await;
    h.send(Method::POST, &format!("/sessions/{sid}/compose"), None, Body::empty()).await;
    let first = h.get(&format!("/sessions/{sid}/result")).await.text();

    let scene_json = h.get(&format!("/sessions/{sid}/scene")).await.text();
    let r = h.send(Method::POST, "/sessions", Some("application/json"), scene_json.clone()).await;
    assert_eq!(r.status, StatusCode::CREATED, "{}", r.text());
    let sid2 = r.json()["id"].as_str().unwrap().to_string();
    assert_eq!(h.get(&format!("/sessions/{sid2}/scene")).await.text(), scene_json);
    h.send(Method::POST, &format!("/sessions/{sid2}/compose"), None, Body::empty()).await;
    let second = h.get(&format!("/sessions/{sid2}/result")).await.text();
    assert_eq!(first, second);

    let direct = compose(&Scene::from_json(&scene_json).unwrap(), &AssetResolver::default()).unwrap();
    assert_eq!(write_obj(&direct.mesh), first);
}
