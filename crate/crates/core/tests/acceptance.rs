//! Acceptance suite. Prints one line per criterion and fails if any hard
//! criterion fails. Performance gates only warn unless
//! `LIDARSPLAT_STRICT_PERF=1` is set.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Instant;

use lidarsplat_core::dataset::{generate_dataset, pair_dir, AugmentParams, GroundTruth};
use lidarsplat_core::depth_filter::{build_min_pyramid, filter_keep_mask, upsample_filter_step};
use lidarsplat_core::io::frame_io::{read_frame, write_frame};
use lidarsplat_core::io::{
    load_ply, read_raw_tensor, write_ply, write_raw_tensor, DatasetMode, PlyFormat,
};
use lidarsplat_core::metrics::{psnr_image, ssim_image, PSNR_CAP};
use lidarsplat_core::render::project_all_points;
use lidarsplat_core::scene::{bench_scene, two_plane_scene, uniform_box_cloud};
use lidarsplat_core::{
    build_grid, depth_filter, project_points, run_bench, ColorImage, DepthImage, FilterParams,
    FrameRGBDA, RawTensorFrame, RenderParams,
};
use rand::seq::SliceRandom;
use rand::Rng;

use common::{random_camera, random_cloud, random_depth, random_filter_params, rng};

const CULL_CONFIGS: usize = 20;
const CULL_MAX_POINTS: usize = 200_000;
const CULL_RUNTIME_S: f64 = 60.0;
const ORDER_SCENES: usize = 10;
const FILTER_IMAGES: usize = 50;
const LEAK_STRENGTH: f64 = 0.5;
const LEAK_LEVELS: usize = 3;
const CULL_BUDGET_MS: f64 = 60.0;
const FRAME_BUDGET_MS: f64 = 33.0;
const PSNR_TOL: f64 = 1e-9;
const SSIM_TOL: f64 = 1e-12;

#[derive(Clone, Copy, PartialEq)]
enum Outcome {
    Pass,
    Fail,
    Warn,
}

struct Suite {
    strict_perf: bool,
    failures: Vec<&'static str>,
}

impl Suite {
    fn report(&mut self, name: &'static str, outcome: Outcome, detail: String) {
        let tag = match outcome {
            Outcome::Pass => "PASS",
            Outcome::Fail => "FAIL",
            Outcome::Warn => "WARN",
        };
        println!("{tag}  {name:<28} {detail}");
        if outcome == Outcome::Fail {
            self.failures.push(name);
        }
    }

    fn check(&mut self, name: &'static str, ok: bool, detail: String) {
        self.report(name, if ok { Outcome::Pass } else { Outcome::Fail }, detail);
    }

    fn gate(&mut self, name: &'static str, ok: bool, detail: String) {
        let outcome = match (ok, self.strict_perf) {
            (true, _) => Outcome::Pass,
            (false, true) => Outcome::Fail,
            (false, false) => Outcome::Warn,
        };
        self.report(name, outcome, detail);
    }
}

fn culling_transparency(s: &mut Suite) {
    let t = Instant::now();
    let mut r = rng(0xC0FFEE);
    let mut mismatches = 0;
    let mut nonempty = 0;
    for _ in 0..CULL_CONFIGS {
        let n = r.random_range(1_000..=CULL_MAX_POINTS);
        let cloud = random_cloud(&mut r, n);
        let camera = random_camera(&mut r);
        let params = RenderParams {
            cell_size: r.random_range(0.05..2.0),
            zbuffer_epsilon_rel: r.random_range(0.0..0.05),
        };
        let grid = build_grid(&cloud, params.cell_size).unwrap();
        let culled = project_points(&cloud, &grid, &camera, &params);
        let brute = project_all_points(&cloud, &camera, &params);
        mismatches += usize::from(culled != brute);
        nonempty += usize::from(brute.filled_count() > 0);
    }
    let secs = t.elapsed().as_secs_f64();
    s.check(
        "culling_transparency",
        mismatches == 0 && secs < CULL_RUNTIME_S,
        format!("{CULL_CONFIGS} configs ({nonempty} non-empty views), {mismatches} mismatches, {secs:.1} s"),
    );
}

fn order_invariance(s: &mut Suite) {
    let mut r = rng(0x0DE5);
    let mut mismatches = 0;
    for _ in 0..ORDER_SCENES {
        let n = r.random_range(1_000..50_000);
        let cloud = random_cloud(&mut r, n);
        let camera = random_camera(&mut r);
        let params = RenderParams {
            cell_size: 0.5,
            zbuffer_epsilon_rel: r.random_range(0.0..0.1),
        };
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut r);
        let shuffled = cloud.permuted(&order);
        let a = project_points(&cloud, &build_grid(&cloud, 0.5).unwrap(), &camera, &params);
        let b = project_points(
            &shuffled,
            &build_grid(&shuffled, 0.5).unwrap(),
            &camera,
            &params,
        );
        mismatches += usize::from(a != b);
    }
    s.check(
        "order_invariance",
        mismatches == 0,
        format!("{ORDER_SCENES} scenes, {mismatches} mismatches"),
    );
}

fn frame_from_depth(depth: &DepthImage) -> FrameRGBDA {
    let mut f = FrameRGBDA::empty(depth.width, depth.height);
    for (i, &d) in depth.data.iter().enumerate() {
        if d.is_finite() {
            f.depth[i] = d;
            f.alpha[i] = 1;
            f.rgb[i] = [0.25, 0.5, 0.75];
        }
    }
    f
}

/// Returns the number of violations of each filter property on one image.
fn filter_properties(
    depth: &DepthImage,
    params: &FilterParams,
    counts: &mut BTreeMap<&'static str, usize>,
) {
    let input = frame_from_depth(depth);
    let out = depth_filter(&input, params).unwrap();
    let subset = (0..input.pixel_count()).all(|i| {
        out.alpha[i] == 0
            || (input.alpha[i] == 1 && out.depth[i].to_bits() == input.depth[i].to_bits())
    });
    *counts.entry("subset").or_default() += usize::from(!subset);

    let keep = filter_keep_mask(depth, params).unwrap();
    let min = depth.data.iter().copied().fold(f32::INFINITY, f32::min);
    let min_kept = depth.data.iter().zip(&keep).all(|(&d, &k)| d != min || k);
    *counts.entry("global_min").or_default() += usize::from(!min_kept);

    let finite: Vec<f32> = depth
        .data
        .iter()
        .copied()
        .filter(|d| d.is_finite())
        .collect();
    if !finite.is_empty() {
        let lo = finite.iter().copied().fold(f32::INFINITY, f32::min);
        let hi = finite.iter().copied().fold(0.0, f32::max);
        let strong = FilterParams {
            filter_strength: f64::from(hi) / f64::from(lo),
            ..*params
        };
        *counts.entry("identity").or_default() +=
            usize::from(depth_filter(&input, &strong).unwrap() != input);
    }

    let pyramid = build_min_pyramid(depth, params.levels_n).unwrap();
    let last = params.levels_n == 1;
    let strengths = [0.0, 0.02, 0.1, 0.3, params.filter_strength, 1.0, 4.0];
    let mut sorted = strengths;
    sorted.sort_by(f64::total_cmp);
    let masks: Vec<Vec<bool>> = sorted
        .iter()
        .map(|&fs| {
            let p = FilterParams {
                filter_strength: fs,
                ..*params
            };
            upsample_filter_step(&pyramid.levels[0], &pyramid.levels[1], &p, last)
                .unwrap()
                .kept
        })
        .collect();
    let monotone = masks
        .windows(2)
        .all(|w| w[0].iter().zip(&w[1]).all(|(a, b)| !a || *b));
    *counts.entry("monotone").or_default() += usize::from(!monotone);
}

fn filter_invariants(s: &mut Suite) {
    let mut r = rng(0xF117E5);
    let mut counts = BTreeMap::new();
    for _ in 0..FILTER_IMAGES {
        let w = r.random_range(8..200);
        let h = r.random_range(8..160);
        let depth = random_depth(&mut r, w, h);
        let params = random_filter_params(&mut r, w, h);
        filter_properties(&depth, &params, &mut counts);
    }
    let scene = two_plane_scene(128, 96, LEAK_LEVELS).unwrap();
    let frame = project_all_points(&scene.cloud, &scene.camera, &RenderParams::default());
    let params = FilterParams {
        levels_n: LEAK_LEVELS,
        filter_strength: LEAK_STRENGTH,
        ..Default::default()
    };
    filter_properties(&frame.depth_image(), &params, &mut counts);

    let violations: usize = counts.values().sum();
    let detail = counts
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(" ");
    s.check(
        "depth_filter_invariants",
        violations == 0,
        format!("{FILTER_IMAGES} random images + two-plane, violations: {detail}"),
    );
}

fn two_plane_leak(s: &mut Suite) {
    let scene = two_plane_scene(256, 192, LEAK_LEVELS).unwrap();
    let frame = project_all_points(&scene.cloud, &scene.camera, &RenderParams::default());
    let params = FilterParams {
        levels_n: LEAK_LEVELS,
        filter_strength: LEAK_STRENGTH,
        ..Default::default()
    };
    let out = depth_filter(&frame, &params).unwrap();
    let (w, h) = (frame.width, frame.height);
    let (mut back, mut back_removed, mut front, mut front_kept) = (0, 0, 0, 0);
    for v in 0..h {
        for u in 0..w {
            let i = v * w + u;
            if scene.is_front_pixel(u, v) {
                front += 1;
                front_kept += usize::from(out.alpha[i] == 1);
            } else if scene.is_interior(u, v) {
                back += 1;
                back_removed += usize::from(out.alpha[i] == 0);
            }
        }
    }
    s.check(
        "two_plane_leak_removal",
        back > 0 && back_removed == back && front_kept == front,
        format!("interior back removed {back_removed}/{back}, front kept {front_kept}/{front}"),
    );
}

fn culling_throughput(s: &mut Suite) {
    let (cloud, camera) = bench_scene(1_000_000, 960, 720, 7).unwrap();
    let grid = build_grid(&cloud, 0.1).unwrap();
    let report = run_bench(
        &cloud,
        &grid,
        &[camera],
        10,
        &RenderParams::default(),
        &FilterParams::default(),
    )
    .unwrap();
    let ms = report.culling_ms.mean;
    s.gate(
        "culling_throughput",
        ms <= CULL_BUDGET_MS,
        format!(
            "1M points, {} cells, culling {ms:.3} ms mean (budget {CULL_BUDGET_MS} ms, {} threads)",
            grid.cell_count(),
            report.threads
        ),
    );
}

fn frame_time(s: &mut Suite) {
    let (cloud, camera) = bench_scene(1_000_000, 960, 720, 8).unwrap();
    let grid = build_grid(&cloud, 0.25).unwrap();
    let report = run_bench(
        &cloud,
        &grid,
        &[camera],
        10,
        &RenderParams::default(),
        &FilterParams::default(),
    )
    .unwrap();
    let t = report.total_ms;
    s.gate(
        "frame_time_960x720",
        t.mean <= FRAME_BUDGET_MS && report.points_after_culling >= 1_000_000.0,
        format!(
            "{:.0} visible points, total {:.1} ms mean (cull {:.2}, project {:.1}, filter {:.1}; budget {FRAME_BUDGET_MS} ms, {} threads)",
            report.points_after_culling,
            t.mean,
            report.culling_ms.mean,
            report.projection_ms.mean,
            report.filter_ms.mean,
            report.threads
        ),
    );
}

fn metrics(s: &mut Suite) {
    let mut r = rng(11);
    let gt = ColorImage {
        width: 64,
        height: 48,
        data: (0..64 * 48)
            .map(|_| [r.random(), r.random(), r.random()])
            .collect(),
    };
    let same_psnr = psnr_image(&gt, &gt).unwrap();
    let same_ssim = ssim_image(&gt, &gt).unwrap();
    let a = ColorImage::filled(32, 32, [0.5; 3]);
    let b = ColorImage::filled(32, 32, [0.6; 3]);
    // f32 0.6 - 0.5 is not exactly 0.1; use the f64 path for the closed form
    let flat_a = vec![0.5f64; 32 * 32 * 3];
    let flat_b = vec![0.6f64; 32 * 32 * 3];
    let closed = lidarsplat_core::psnr(&flat_a, &flat_b).unwrap();
    let image_path = psnr_image(&a, &b).unwrap();

    let mut ssims = Vec::new();
    for sigma in [0.02f32, 0.05, 0.1, 0.2, 0.4] {
        let mut nr = rng(99);
        let noisy = ColorImage {
            data: gt
                .data
                .iter()
                .map(|p| {
                    p.map(|c| {
                        let n: f32 = nr.random_range(-1.0..1.0);
                        (c + sigma * n).clamp(0.0, 1.0)
                    })
                })
                .collect(),
            ..gt.clone()
        };
        ssims.push(ssim_image(&gt, &noisy).unwrap());
    }
    let monotone = ssims.windows(2).all(|w| w[1] < w[0]);
    s.check(
        "psnr_ssim",
        same_psnr == PSNR_CAP
            && (same_ssim - 1.0).abs() <= SSIM_TOL
            && (closed - 20.0).abs() <= PSNR_TOL
            && (image_path - 20.0).abs() < 1e-5
            && monotone,
        format!(
            "identical psnr {same_psnr} ssim {same_ssim:.15}; 0.5 vs 0.6 psnr {closed:.12} (f32 images {image_path:.6}); noise ssim {ssims:.4?}"
        ),
    );
}

fn dataset_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn dataset(s: &mut Suite) {
    let scene = two_plane_scene(128, 96, LEAK_LEVELS).unwrap();
    let cameras = scene.camera_path(3, 0.01);
    let gt = GroundTruth::Memory(
        cameras
            .frames
            .iter()
            .map(|(id, cam)| (id.clone(), scene.ground_truth(cam)))
            .collect(),
    );
    let grid = build_grid(&scene.cloud, 0.5).unwrap();
    let fparams = FilterParams {
        levels_n: LEAK_LEVELS,
        filter_strength: LEAK_STRENGTH,
        ..Default::default()
    };
    let rparams = RenderParams::default();
    let augment = AugmentParams {
        seed: 2024,
        ..Default::default()
    };
    let tmp = tempfile::tempdir().unwrap();
    let run = |name: &str, mode| {
        let dir = tmp.path().join(name);
        let m = generate_dataset(
            &scene.cloud,
            &grid,
            &cameras,
            &gt,
            &dir,
            mode,
            &augment,
            &fparams,
            &rparams,
        )
        .unwrap();
        (dir, m)
    };
    let (filtered, m) = run("filtered", DatasetMode::Filtered);
    let (leaky, _) = run("leaky", DatasetMode::Leaky);
    let (again, _) = run("filtered_again", DatasetMode::Filtered);

    let mut mask_ok = true;
    let mut subset_ok = true;
    for id in &m.ids {
        let f = read_frame(pair_dir(&filtered, id).join("input")).unwrap();
        let l = read_frame(pair_dir(&leaky, id).join("input")).unwrap();
        mask_ok &= f.check_invariants().is_ok() && l.check_invariants().is_ok();
        mask_ok &= (0..f.pixel_count()).all(|i| (f.alpha[i] == 1) == (f.depth[i] > 0.0));
        subset_ok &= (0..f.pixel_count())
            .all(|i| f.alpha[i] == 0 || (l.alpha[i] == 1 && l.depth[i] == f.depth[i]));
        subset_ok &= f.filled_count() < l.filled_count();
    }
    let deterministic = dataset_bytes(&filtered) == dataset_bytes(&again);
    s.check(
        "dataset_generation",
        m.ids.len() == 3 && mask_ok && subset_ok && deterministic,
        format!(
            "{} pairs, mask consistent {mask_ok}, filtered within leaky {subset_ok}, byte-identical rerun {deterministic}",
            m.ids.len()
        ),
    );
}

fn io_round_trips(s: &mut Suite) {
    let tmp = tempfile::tempdir().unwrap();
    let cloud = uniform_box_cloud(5_000, [-10.0, -1.0, 0.0], [10.0, 1.0, 1e4], 3).unwrap();
    write_ply(tmp.path().join("a.ply"), &cloud, PlyFormat::Ascii).unwrap();
    write_ply(
        tmp.path().join("b.ply"),
        &cloud,
        PlyFormat::BinaryLittleEndian,
    )
    .unwrap();
    let a = load_ply(tmp.path().join("a.ply")).unwrap();
    let b = load_ply(tmp.path().join("b.ply")).unwrap();
    let ply_ok = a == b && b == cloud;

    let scene = two_plane_scene(64, 48, 2).unwrap();
    let frame = project_all_points(&scene.cloud, &scene.camera, &RenderParams::default());
    write_frame(&frame, tmp.path().join("frame")).unwrap();
    let back = read_frame(tmp.path().join("frame")).unwrap();
    let frame_ok = back
        .depth
        .iter()
        .zip(&frame.depth)
        .all(|(x, y)| x.to_bits() == y.to_bits())
        && back.alpha == frame.alpha;

    let mut r = rng(5);
    let mut big = FrameRGBDA::empty(1920, 1440);
    for i in 0..big.pixel_count() {
        if r.random_bool(0.5) {
            big.alpha[i] = 1;
            big.depth[i] = r.random_range(0.1f32..100.0);
            big.rgb[i] = [r.random(), r.random(), r.random()];
        }
    }
    let tensor = RawTensorFrame::from_rgbda(&big);
    let mut wire = Vec::new();
    write_raw_tensor(&mut wire, &tensor).unwrap();
    let tensor_back = read_raw_tensor(wire.as_slice()).unwrap();
    let tensor_ok = tensor_back.header == tensor.header
        && tensor_back
            .payload
            .iter()
            .zip(&tensor.payload)
            .all(|(x, y)| x.to_bits() == y.to_bits());

    s.check(
        "io_round_trips",
        ply_ok && frame_ok && tensor_ok,
        format!("ply ascii/binary equal {ply_ok}, frame depth+mask exact {frame_ok}, tensor 1920x1440x5 exact {tensor_ok}"),
    );
}

fn main() {
    let strict_perf = std::env::var("LIDARSPLAT_STRICT_PERF").is_ok_and(|v| v == "1");
    let mut s = Suite {
        strict_perf,
        failures: Vec::new(),
    };
    println!();
    culling_transparency(&mut s);
    order_invariance(&mut s);
    filter_invariants(&mut s);
    two_plane_leak(&mut s);
    culling_throughput(&mut s);
    frame_time(&mut s);
    metrics(&mut s);
    dataset(&mut s);
    io_round_trips(&mut s);
    if !s.failures.is_empty() {
        eprintln!("acceptance failed: {:?}", s.failures);
        std::process::exit(1);
    }
}
