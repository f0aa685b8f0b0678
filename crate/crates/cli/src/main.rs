//! `lidarsplat` command-line tool.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use lidarsplat_core::bridge::{BridgeClient, BridgeError};
use lidarsplat_core::camera::{DEFAULT_Z_FAR, DEFAULT_Z_NEAR};
use lidarsplat_core::dataset::{generate_dataset, AugmentParams, GroundTruth};
use lidarsplat_core::io::cameras::{load_cameras, write_cameras, CameraSet};
use lidarsplat_core::io::frame_io::{read_color_png, read_frame, write_color_png, write_frame};
use lidarsplat_core::io::{load_ply, write_ply, DatasetMode, PlyFormat};
use lidarsplat_core::metrics::{psnr_image, ssim_image};
use lidarsplat_core::scene::{bench_scene, two_plane_scene};
use lidarsplat_core::{
    build_grid, depth_filter, project_points, run_bench, BenchReport, CameraModel, FilterParams,
    PointCloud, RenderParams, UniformGrid,
};

/// Culling budget per million points.
const CULL_BUDGET_MS_PER_MPOINT: f64 = 60.0;
/// Raw + filter frame budget.
const FRAME_BUDGET_MS: f64 = 33.0;

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(String),
    Bridge(String),
    Perf(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            Self::Perf(_) => 1,
            Self::Usage(_) => 2,
            Self::Data(_) => 3,
            Self::Bridge(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Self::Usage(m) | Self::Data(m) | Self::Bridge(m) | Self::Perf(m) => m,
        }
    }
}

fn data<E: std::fmt::Display>(context: impl std::fmt::Display) -> impl FnOnce(E) -> CliError {
    move |e| CliError::Data(format!("{context}: {e}"))
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser)]
#[command(
    name = "lidarsplat",
    version,
    about = "Render, filter and benchmark colored LiDAR point clouds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Point cloud (PLY, ascii or binary little-endian)
    #[arg(long)]
    cloud: Option<PathBuf>,
    /// Camera trajectory JSON
    #[arg(long)]
    cameras: Option<PathBuf>,
    /// Grid cell edge in meters
    #[arg(long, default_value_t = 1.0)]
    cell_size: f64,
    /// Filter pyramid depth
    #[arg(long, default_value_t = 4)]
    levels: usize,
    #[arg(long, default_value_t = 0.1)]
    filter_strength: f64,
    #[arg(long, default_value_t = 0.25)]
    edge_threshold: f64,
    /// Relative depth tolerance of the soft z-buffer
    #[arg(long, default_value_t = 0.01)]
    zbuf_eps: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Reconstruction service: host:port, tcp://host:port or unix:path
    #[arg(long, env = "LIDARSPLAT_BRIDGE")]
    bridge: Option<String>,
    #[arg(long, default_value_t = 500)]
    bridge_timeout_ms: u64,
    #[arg(long, default_value_t = DEFAULT_Z_NEAR)]
    z_near: f64,
    #[arg(long, default_value_t = DEFAULT_Z_FAR)]
    z_far: f64,
    /// Output file or directory (meaning depends on the command)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Render one frame: raw, filtered and (with --bridge) reconstructed
    Render {
        #[arg(long)]
        frame: String,
        #[command(flatten)]
        common: Common,
    },
    /// Render every frame of the camera trajectory to numbered files
    Path {
        #[command(flatten)]
        common: Common,
    },
    /// Apply the depth filter to stored frames (`<base>.png/.pfm/.a.png`)
    Filter {
        /// Frame base paths
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Generate a training dataset from a cloud, cameras and ground truth
    Synth {
        #[arg(long)]
        mode: String,
        /// Directory holding `<frame id>.png` ground-truth photos
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, num_args = 2, default_values_t = [-0.15, 0.15], allow_negative_numbers = true)]
        brightness: Vec<f64>,
        #[arg(long, num_args = 2, default_values_t = [0.8, 1.25])]
        contrast: Vec<f64>,
        #[arg(long, num_args = 2, default_values_t = [2, 4])]
        groups: Vec<u32>,
        #[command(flatten)]
        common: Common,
    },
    /// Time culling, projection and filtering; prints a JSON report
    Bench {
        #[arg(long, default_value_t = 10)]
        frames: usize,
        /// Without --cloud: size of a synthetic uniform cloud
        #[arg(long, default_value_t = 1_000_000)]
        points: usize,
        /// Without --cameras: synthetic camera resolution
        #[arg(long, num_args = 2, default_values_t = [960, 720])]
        resolution: Vec<u32>,
        /// Fail (exit 1) when a performance budget is exceeded
        #[arg(long)]
        strict_perf: bool,
        #[command(flatten)]
        common: Common,
    },
    /// PSNR and SSIM of a prediction against ground truth (JSON)
    Metrics { pred: PathBuf, gt: PathBuf },
    /// Write the synthetic two-plane scene: cloud.ply, cameras.json, gt/
    Scene {
        #[arg(long, default_value_t = 3)]
        frames: usize,
        #[arg(long, num_args = 2, default_values_t = [128, 96])]
        resolution: Vec<u32>,
        #[arg(long, value_enum, default_value_t = Format::Binary)]
        format: Format,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Ascii,
    Binary,
}

impl Common {
    fn render_params(&self) -> Result<RenderParams> {
        let p = RenderParams {
            zbuffer_epsilon_rel: self.zbuf_eps,
            cell_size: self.cell_size,
        };
        p.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(p)
    }

    fn filter_params(&self) -> Result<FilterParams> {
        let p = FilterParams {
            levels_n: self.levels,
            filter_strength: self.filter_strength,
            edge_threshold: self.edge_threshold,
        };
        p.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(p)
    }

    fn out(&self) -> Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| CliError::Usage("--out is required".into()))
    }

    fn cloud(&self) -> Result<(PointCloud, UniformGrid)> {
        let path = self
            .cloud
            .as_deref()
            .ok_or_else(|| CliError::Usage("--cloud is required".into()))?;
        let cloud = load_ply(path).map_err(data(path.display()))?;
        if cloud.is_empty() {
            return Err(CliError::Data(format!(
                "{}: cloud has no points",
                path.display()
            )));
        }
        let grid =
            build_grid(&cloud, self.render_params()?.cell_size).map_err(data(path.display()))?;
        Ok((cloud, grid))
    }

    fn cameras(&self) -> Result<CameraSet> {
        let path = self
            .cameras
            .as_deref()
            .ok_or_else(|| CliError::Usage("--cameras is required".into()))?;
        if !(self.z_near > 0.0 && self.z_near < self.z_far) {
            return Err(CliError::Usage("need 0 < --z-near < --z-far".into()));
        }
        load_cameras(path, self.z_near, self.z_far).map_err(|e| CliError::Data(e.to_string()))
    }

    fn bridge(&self) -> Result<Option<BridgeClient>> {
        self.bridge
            .as_deref()
            .map(|e| BridgeClient::new(e, Duration::from_millis(self.bridge_timeout_ms)))
            .transpose()
            .map_err(|e| CliError::Usage(e.to_string()))
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(data(dir.display()))
}

fn print_json(value: &serde_json::Value) {
    let text = serde_json::to_string_pretty(value).expect("json serializes");
    // a closed pipe is not worth a panic
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

/// Renders, filters and optionally reconstructs one frame into `out/<name>.*`.
#[allow(clippy::too_many_arguments)]
fn render_one(
    cloud: &PointCloud,
    grid: &UniformGrid,
    camera: &CameraModel,
    rparams: &RenderParams,
    fparams: &FilterParams,
    bridge: Option<&BridgeClient>,
    out: &Path,
    name: &str,
) -> Result<(serde_json::Value, Option<BridgeError>)> {
    let raw = project_points(cloud, grid, camera, rparams);
    let filtered = depth_filter(&raw, fparams).map_err(data(name))?;
    let raw_base = out.join(format!("{name}.raw"));
    let filtered_base = out.join(format!("{name}.filtered"));
    write_frame(&raw, &raw_base).map_err(data(name))?;
    write_frame(&filtered, &filtered_base).map_err(data(name))?;
    let mut summary = json!({
        "frame": name,
        "raw_filled": raw.filled_count(),
        "filtered_filled": filtered.filled_count(),
        "raw": raw_base,
        "filtered": filtered_base,
        "recon": null,
    });
    let mut failure = None;
    if let Some(client) = bridge {
        match client.reconstruct(&filtered) {
            Ok(image) => {
                let path = out.join(format!("{name}.recon.png"));
                write_color_png(&image, &path).map_err(data(name))?;
                summary["recon"] = json!(path);
            }
            Err(e) => failure = Some(e),
        }
    }
    Ok((summary, failure))
}

fn cmd_render(frame: &str, common: &Common) -> Result<()> {
    let cameras = common.cameras()?;
    let Some(camera) = cameras.get(frame) else {
        return Err(CliError::Data(format!(
            "unknown frame id \"{frame}\"; available: {}",
            cameras.ids().join(", ")
        )));
    };
    let (rparams, fparams, bridge) = (
        common.render_params()?,
        common.filter_params()?,
        common.bridge()?,
    );
    let (cloud, grid) = common.cloud()?;
    let out = common.out()?;
    create_dir(out)?;
    let (summary, failure) = render_one(
        &cloud,
        &grid,
        camera,
        &rparams,
        &fparams,
        bridge.as_ref(),
        out,
        frame,
    )?;
    print_json(&summary);
    match failure {
        Some(e) => Err(CliError::Bridge(format!(
            "raw and filtered frames written; reconstruction failed: {e}"
        ))),
        None => Ok(()),
    }
}

fn cmd_path(common: &Common) -> Result<()> {
    let cameras = common.cameras()?;
    let (rparams, fparams, bridge) = (
        common.render_params()?,
        common.filter_params()?,
        common.bridge()?,
    );
    let (cloud, grid) = common.cloud()?;
    let out = common.out()?;
    create_dir(out)?;
    let mut frames = Vec::new();
    let mut bridge_failures = 0;
    let mut bridge = bridge;
    for (i, (id, camera)) in cameras.frames.iter().enumerate() {
        let name = format!("{i:05}");
        let (mut summary, failure) = render_one(
            &cloud,
            &grid,
            camera,
            &rparams,
            &fparams,
            bridge.as_ref(),
            out,
            &name,
        )?;
        summary["id"] = json!(id);
        if let Some(e) = failure {
            // stop asking an unreachable service for the remaining frames
            eprintln!("frame {id}: reconstruction failed: {e}; continuing without the bridge");
            bridge_failures += 1;
            bridge = None;
        }
        eprintln!("rendered {}/{} ({id})", i + 1, cameras.frames.len());
        frames.push(summary);
    }
    print_json(&json!({ "frames": frames }));
    if bridge_failures > 0 {
        return Err(CliError::Bridge(
            "reconstruction service failed; raw and filtered frames written".into(),
        ));
    }
    Ok(())
}

fn cmd_filter(inputs: &[PathBuf], common: &Common) -> Result<()> {
    let fparams = common.filter_params()?;
    let out = common.out()?;
    create_dir(out)?;
    let mut results = Vec::new();
    for input in inputs {
        let frame = read_frame(input).map_err(|e| CliError::Data(e.to_string()))?;
        let filtered = depth_filter(&frame, &fparams).map_err(data(input.display()))?;
        let name = input.file_name().ok_or_else(|| {
            CliError::Usage(format!("{}: not a frame base path", input.display()))
        })?;
        let base = out.join(name);
        write_frame(&filtered, &base).map_err(data(base.display()))?;
        results.push(json!({
            "input": input,
            "output": base,
            "filled_before": frame.filled_count(),
            "filled_after": filtered.filled_count(),
        }));
    }
    print_json(&json!({ "frames": results }));
    Ok(())
}

fn range<T: Copy>(values: &[T], flag: &str) -> Result<[T; 2]> {
    values
        .try_into()
        .map_err(|_| CliError::Usage(format!("--{flag} takes two values")))
}

fn cmd_synth(
    mode: &str,
    gt: &Path,
    brightness: &[f64],
    contrast: &[f64],
    groups: &[u32],
    common: &Common,
) -> Result<()> {
    let mode: DatasetMode = mode.parse().map_err(CliError::Usage)?;
    let augment = AugmentParams {
        brightness_delta_range: range(brightness, "brightness")?,
        contrast_scale_range: range(contrast, "contrast")?,
        group_count_range: range(groups, "groups")?,
        seed: common.seed,
    };
    augment
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let (rparams, fparams) = (common.render_params()?, common.filter_params()?);
    let out = common.out()?;
    if !gt.is_dir() {
        return Err(CliError::Data(format!(
            "{}: ground-truth directory not found",
            gt.display()
        )));
    }
    let cameras = common.cameras()?;
    let (cloud, grid) = common.cloud()?;
    eprintln!(
        "generating {} {mode} pairs from {} points into {}",
        cameras.frames.len(),
        cloud.count(),
        out.display()
    );
    let t = Instant::now();
    let manifest = generate_dataset(
        &cloud,
        &grid,
        &cameras,
        &GroundTruth::Dir(gt.to_path_buf()),
        out,
        mode,
        &augment,
        &fparams,
        &rparams,
    )
    .map_err(|e| CliError::Data(e.to_string()))?;
    eprintln!("done in {:.1} s", t.elapsed().as_secs_f64());
    print_json(&serde_json::to_value(&manifest).expect("manifest serializes"));
    Ok(())
}

fn perf_gates(report: &BenchReport) -> Vec<String> {
    let mut misses = Vec::new();
    let cull_budget = CULL_BUDGET_MS_PER_MPOINT * report.points_total as f64 / 1e6;
    if report.culling_ms.mean > cull_budget {
        misses.push(format!(
            "culling {:.2} ms exceeds {:.2} ms ({CULL_BUDGET_MS_PER_MPOINT} ms per 1M points)",
            report.culling_ms.mean, cull_budget
        ));
    }
    if report.total_ms.mean > FRAME_BUDGET_MS {
        misses.push(format!(
            "frame {:.2} ms exceeds {FRAME_BUDGET_MS} ms",
            report.total_ms.mean
        ));
    }
    misses
}

fn cmd_bench(
    frames: usize,
    points: usize,
    resolution: &[u32],
    strict_perf: bool,
    common: &Common,
) -> Result<()> {
    if frames == 0 {
        return Err(CliError::Usage("--frames must be at least 1".into()));
    }
    let (rparams, fparams) = (common.render_params()?, common.filter_params()?);
    let (cloud, grid, cameras) = match (&common.cloud, &common.cameras) {
        (Some(_), Some(_)) => {
            let (cloud, grid) = common.cloud()?;
            let cams: Vec<CameraModel> = common
                .cameras()?
                .frames
                .into_iter()
                .map(|(_, c)| c)
                .collect();
            if cams.is_empty() {
                return Err(CliError::Data("camera file has no frames".into()));
            }
            (cloud, grid, cams)
        }
        (None, None) => {
            let [w, h] = range(resolution, "resolution")?;
            let (cloud, camera) = bench_scene(points, w, h, common.seed)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            let grid = build_grid(&cloud, rparams.cell_size)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            (cloud, grid, vec![camera])
        }
        _ => {
            return Err(CliError::Usage(
                "give both --cloud and --cameras, or neither".into(),
            ))
        }
    };
    let report = run_bench(&cloud, &grid, &cameras, frames, &rparams, &fparams)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    print_json(&serde_json::to_value(&report).expect("report serializes"));
    let misses = perf_gates(&report);
    for m in &misses {
        eprintln!("warning: {m} ({} threads)", report.threads);
    }
    if strict_perf && !misses.is_empty() {
        return Err(CliError::Perf("performance budget exceeded".into()));
    }
    Ok(())
}

fn cmd_metrics(pred: &Path, gt: &Path) -> Result<()> {
    let a = read_color_png(pred).map_err(|e| CliError::Data(e.to_string()))?;
    let b = read_color_png(gt).map_err(|e| CliError::Data(e.to_string()))?;
    let psnr = psnr_image(&a, &b).map_err(|e| CliError::Data(e.to_string()))?;
    let ssim = ssim_image(&a, &b).map_err(|e| CliError::Data(e.to_string()))?;
    print_json(&json!({ "psnr": psnr, "ssim": ssim }));
    Ok(())
}

fn cmd_scene(frames: usize, resolution: &[u32], format: Format, common: &Common) -> Result<()> {
    let [w, h] = range(resolution, "resolution")?;
    let scene = two_plane_scene(w, h, common.levels).map_err(|e| CliError::Usage(e.to_string()))?;
    let out = common.out()?;
    create_dir(&out.join("gt"))?;
    let format = match format {
        Format::Ascii => PlyFormat::Ascii,
        Format::Binary => PlyFormat::BinaryLittleEndian,
    };
    let cameras = scene.camera_path(frames, 0.01);
    write_ply(out.join("cloud.ply"), &scene.cloud, format).map_err(data("cloud.ply"))?;
    write_cameras(out.join("cameras.json"), &cameras).map_err(|e| CliError::Data(e.to_string()))?;
    for (id, cam) in &cameras.frames {
        write_color_png(
            &scene.ground_truth(cam),
            out.join("gt").join(format!("{id}.png")),
        )
        .map_err(|e| CliError::Data(e.to_string()))?;
    }
    print_json(&json!({
        "cloud": out.join("cloud.ply"),
        "cameras": out.join("cameras.json"),
        "gt": out.join("gt"),
        "points": scene.cloud.count(),
        "front_rect": scene.front_rect,
    }));
    Ok(())
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("LIDARSPLAT_THREADS") else {
        return Ok(());
    };
    let n: usize = value.parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        CliError::Usage(format!(
            "LIDARSPLAT_THREADS must be a positive integer, got \"{value}\""
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match &cli.command {
        Command::Render { frame, common } => cmd_render(frame, common),
        Command::Path { common } => cmd_path(common),
        Command::Filter { inputs, common } => cmd_filter(inputs, common),
        Command::Synth {
            mode,
            gt,
            brightness,
            contrast,
            groups,
            common,
        } => cmd_synth(mode, gt, brightness, contrast, groups, common),
        Command::Bench {
            frames,
            points,
            resolution,
            strict_perf,
            common,
        } => cmd_bench(*frames, *points, resolution, *strict_perf, common),
        Command::Metrics { pred, gt } => cmd_metrics(pred, gt),
        Command::Scene {
            frames,
            resolution,
            format,
            common,
        } => cmd_scene(*frames, resolution, *format, common),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
