//! The `voxcompose` command line: `gen`, `compose`, `sweep` and `serve`.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use voxcompose_core::bench::{emit_csv, emit_plot, run_sweep, SweepKind, SweepSpec};
use voxcompose_core::geometry::{gen_shape, save_mesh, GeneratorSpec, ShapeKind, ShapeParams};
use voxcompose_core::scene::{compose, scene_load, AssetResolver};
use voxcompose_core::session::SessionStore;

use crate::config::Config;

/// Environment variable naming the asset root directory.
pub const ASSETS_ENV: &str = "VOXCOMPOSE_ASSETS";

#[derive(Debug, Parser)]
#[command(name = "voxcompose", version, about = "Compose 3D parts through a shared sparse voxel volume")]
pub struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a procedural test shape as OBJ.
    Gen(GenArgs),
    /// Compose a scene file into one mesh.
    Compose(ComposeArgs),
    /// Run a transform sweep and write CSV (and optionally SVG plots).
    Sweep(SweepArgs),
    /// Serve the session HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub kind: ShapeKind,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Amplitude of the seeded surface perturbation.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Shape parameters as JSON, e.g. '{"major_radius": 0.4}'.
    #[arg(long)]
    pub params: Option<String>,
}

#[derive(Debug, Args)]
pub struct ComposeArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the scene's compose resolution.
    #[arg(long)]
    pub resolution: Option<usize>,
    /// Overrides the scene's closing passes.
    #[arg(long)]
    pub closing: Option<usize>,
    /// Fallback directory for relative mesh paths.
    #[arg(long, env = ASSETS_ENV)]
    pub assets: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub kind: SweepKind,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Compose (and encode) grid resolution.
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long)]
    pub iou_resolution: Option<usize>,
    /// Surface samples per mesh for Chamfer distance.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Rest offset of the second shape, in object extents.
    #[arg(long)]
    pub baseline: Option<f64>,
    /// Worker threads (default: all CPUs).
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub out_csv: PathBuf,
    #[arg(long)]
    pub out_plot: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub host: Option<String>,
    #[arg(long)]
    pub port: Option<u16>,
    /// Directory for session data; relative scene mesh paths resolve here too.
    #[arg(long, env = ASSETS_ENV)]
    pub assets: Option<PathBuf>,
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    match cli.command {
        Command::Gen(a) => gen(a),
        Command::Compose(a) => compose_cmd(a, &config),
        Command::Sweep(a) => sweep(a, &config),
        Command::Serve(a) => serve(a, &config),
    }
}

fn gen(a: GenArgs) -> anyhow::Result<()> {
    let params = match &a.params {
        Some(json) => {
            let mut v: serde_json::Value = serde_json::from_str(json).context("--params is not JSON")?;
            let obj = v.as_object_mut().context("--params must be a JSON object")?;
            obj.insert("kind".into(), serde_json::Value::String(a.kind.name().into()));
            serde_json::from_value::<ShapeParams>(v).context("invalid --params")?
        }
        None => ShapeParams::default_for(a.kind),
    };
    let spec = GeneratorSpec {
        params,
        seed: a.seed,
        noise: a.noise,
    };
    let mesh = gen_shape(&spec)?;
    save_mesh(&mesh, &a.out)?;
    tracing::info!(kind = %a.kind, vertices = mesh.vertex_count(), faces = mesh.face_count(), out = %a.out.display(), "generated");
    Ok(())
}

fn compose_cmd(a: ComposeArgs, config: &Config) -> anyhow::Result<()> {
    let mut scene = scene_load(&a.scene)?;
    if let Some(r) = a.resolution.or(config.compose.resolution) {
        scene.compose_params.resolution = r;
    }
    if let Some(c) = a.closing.or(config.compose.closing) {
        scene.compose_params.closing_passes = c;
    }
    let assets = a.assets.or_else(|| config.serve.assets.clone());
    let resolver = AssetResolver::for_scene_file(&a.scene, assets.as_deref());
    let started = Instant::now();
    let c = compose(&scene, &resolver)?;
    for id in &c.skipped {
        tracing::warn!(instance = id, "instance has an empty selection; skipped");
    }
    save_mesh(&c.mesh, &a.out)?;
    tracing::info!(
        faces = c.mesh.face_count(),
        voxels = c.voxel_count,
        ms = started.elapsed().as_millis() as u64,
        out = %a.out.display(),
        "composed"
    );
    Ok(())
}

fn sweep_spec(a: &SweepArgs, config: &Config) -> SweepSpec {
    let c = &config.sweep;
    let mut spec = SweepSpec::new(a.kind);
    if let Some(v) = a.steps.or(c.steps) {
        spec.steps = v;
    }
    if let Some(v) = a.resolution.or(c.resolution) {
        spec.compose_resolution = v;
        spec.encode.resolution = v;
    }
    if let Some(v) = a.iou_resolution.or(c.iou_resolution) {
        spec.iou_resolution = v;
    }
    if let Some(v) = a.samples.or(c.samples) {
        spec.chamfer_samples = v;
    }
    if let Some(v) = a.seed.or(c.seed) {
        spec.seed = v;
    }
    if let Some(v) = a.baseline.or(c.baseline) {
        spec.baseline_offset_extents = v;
    }
    spec.threads = a.threads.or(c.threads);
    spec
}

fn sweep(a: SweepArgs, config: &Config) -> anyhow::Result<()> {
    let spec = sweep_spec(&a, config);
    spec.validate()?;
    let started = Instant::now();
    let result = run_sweep(&spec)?;
    let failed = result.records.iter().filter(|r| r.outcome.is_err()).count();
    tracing::info!(
        kind = %spec.kind,
        cells = result.records.len(),
        failed,
        secs = started.elapsed().as_secs_f64(),
        "sweep finished"
    );
    emit_csv(&result, &a.out_csv)?;
    if let Some(dir) = &a.out_plot {
        for p in emit_plot(&result, dir)? {
            tracing::info!(plot = %p.display(), "wrote plot");
        }
    }
    Ok(())
}

fn serve(a: ServeArgs, config: &Config) -> anyhow::Result<()> {
    let host = a
        .host
        .or_else(|| config.serve.host.clone())
        .unwrap_or_else(|| "127.0.0.1".into());
    let port = a.port.or(config.serve.port).unwrap_or(8080);
    let Some(assets) = a.assets.or_else(|| config.serve.assets.clone()) else {
        bail!("no asset directory: pass --assets, set {ASSETS_ENV}, or set serve.assets in the config");
    };
    std::fs::create_dir_all(&assets).with_context(|| format!("creating {}", assets.display()))?;
    let addr: SocketAddr = format!("{host}:{port}").parse().context("invalid host or port")?;
    let store = Arc::new(SessionStore::new(assets.join("sessions"), vec![assets.clone()]));
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
        tracing::info!(addr = %listener.local_addr()?, assets = %assets.display(), "listening");
        axum::serve(listener, crate::api::router(store))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_config() {
        let cli = Cli::try_parse_from([
            "voxcompose", "sweep", "--kind", "scale", "--steps", "5", "--out-csv", "x.csv",
        ])
        .unwrap();
        let config = Config::parse("[sweep]\nsteps = 9\nseed = 7\nresolution = 32\n").unwrap();
        let Command::Sweep(a) = cli.command else { panic!() };
        let spec = sweep_spec(&a, &config);
        assert_eq!(spec.steps, 5);
        assert_eq!(spec.seed, 7);
        assert_eq!(spec.compose_resolution, 32);
        assert_eq!(spec.encode.resolution, 32);
        assert_eq!(spec.kind, SweepKind::Scale);
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        assert!(Config::parse("[sweep]\nstep = 9\n").is_err());
    }
}
