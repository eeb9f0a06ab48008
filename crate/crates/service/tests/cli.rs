use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use voxcompose_core::bench::read_csv;
use voxcompose_core::geometry::{is_watertight, load_mesh};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_voxcompose"));
    c.env_remove("VOXCOMPOSE_ASSETS").env("RUST_LOG", "warn");
    c
}

fn ok(c: &mut Command) {
    let out = c.output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn gen_then_compose_a_scene() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(bin().args(["gen", "--kind", "torus", "--seed", "3", "--out"]).arg(d.join("torus.obj")));
    assert!(is_watertight(&load_mesh(d.join("torus.obj")).unwrap()));

    let scene = r#"{
      "version": 1,
      "assets": [
        {"id": "t", "mesh_path": "torus.obj", "color": [0.9, 0.3, 0.1]},
        {"id": "s", "generator": {"kind": "sphere", "radius": 0.3}}
      ],
      "instances": [
        {"id": "t1", "asset_id": "t"},
        {"id": "s1", "asset_id": "s", "transform": [1,0,0,0.6, 0,1,0,0, 0,0,1,0, 0,0,0,1]}
      ]
    }"#;
    std::fs::write(d.join("scene.json"), scene).unwrap();
    let out = d.join("out.obj");
    ok(bin()
        .args(["compose", "--resolution", "48", "--scene"])
        .arg(d.join("scene.json"))
        .arg("--out")
        .arg(&out));
    let mesh = load_mesh(&out).unwrap();
    assert!(is_watertight(&mesh));
    assert!(mesh.colors().is_some());

    // A relative path that is not next to the scene falls back to the asset root.
    let elsewhere = tempfile::tempdir().unwrap();
    std::fs::copy(d.join("scene.json"), elsewhere.path().join("scene.json")).unwrap();
    let out2 = elsewhere.path().join("out.obj");
    let failed = bin()
        .arg("compose")
        .arg("--scene")
        .arg(elsewhere.path().join("scene.json"))
        .arg("--out")
        .arg(&out2)
        .output()
        .unwrap();
    assert!(!failed.status.success());
    ok(bin()
        .env("VOXCOMPOSE_ASSETS", d)
        .args(["compose", "--resolution", "48", "--scene"])
        .arg(elsewhere.path().join("scene.json"))
        .arg("--out")
        .arg(&out2));
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&out2).unwrap());
}

#[test]
fn small_sweep_writes_csv_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let config = d.join("voxcompose.toml");
    std::fs::write(&config, "[sweep]\nsteps = 9\nresolution = 32\niou_resolution = 32\nsamples = 400\n").unwrap();
    let csv = d.join("scale.csv");
    ok(bin()
        .arg("--config")
        .arg(&config)
        .args(["sweep", "--kind", "scale", "--steps", "3", "--out-csv"])
        .arg(&csv)
        .arg("--out-plot")
        .arg(d.join("plots")));
    let r = read_csv(&csv).unwrap();
    assert_eq!(r.records.len(), 25 * 3);
    assert_eq!(r.aggregates.len(), 3);
    assert_eq!(r.aggregates[1].param_value, 1.0);
    for m in ["chamfer_sq", "iou"] {
        assert!(Path::new(&d.join("plots").join(format!("scale_{m}.svg"))).exists());
    }
}

fn http(port: u16, request: &str) -> String {
    let mut s = TcpStream::connect(("127.0.0.1", port)).unwrap();
    s.write_all(request.as_bytes()).unwrap();
    let mut out = String::new();
    s.read_to_string(&mut out).unwrap();
    out
}

#[test]
fn serve_answers_over_tcp() {
    let dir = tempfile::tempdir().unwrap();
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let mut child = bin()
        .env("VOXCOMPOSE_ASSETS", dir.path())
        .args(["serve", "--port", &port.to_string()])
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let deadline = Instant::now() + Duration::from_secs(20);
    while TcpStream::connect(("127.0.0.1", port)).is_err() {
        assert!(Instant::now() < deadline, "server did not start");
        std::thread::sleep(Duration::from_millis(50));
    }
    let resp = http(
        port,
        "POST /sessions HTTP/1.1\r\nHost: localhost\r\nContent-Length: 0\r\nConnection: close\r\n\r\n",
    );
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(resp.starts_with("HTTP/1.1 201"), "{resp}");
    assert!(resp.contains("\"revision\":0"));
}

#[test]
fn serve_without_asset_dir_fails() {
    let out = bin().args(["serve", "--port", "1"]).output().unwrap();
    assert!(!out.status.success());
}
