//! Per-stage frame timing.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::camera::CameraModel;
use crate::cloud::PointCloud;
use crate::depth_filter::{depth_filter, FilterParams};
use crate::error::FilterError;
use crate::frustum::extract_frustum;
use crate::grid::UniformGrid;
use crate::render::{project_cells, RenderParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageStats {
    pub mean: f64,
    pub p50: f64,
    pub p95: f64,
}

impl StageStats {
    /// Nearest-rank percentiles of millisecond samples.
    pub fn from_samples(samples: &[f64]) -> Self {
        assert!(!samples.is_empty(), "no samples");
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let rank = |p: f64| s[((p * s.len() as f64).ceil() as usize).clamp(1, s.len()) - 1];
        Self {
            mean: s.iter().sum::<f64>() / s.len() as f64,
            p50: rank(0.5),
            p95: rank(0.95),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub points_total: usize,
    pub frames: usize,
    /// `[width, height]`
    pub resolution: [u32; 2],
    pub pixels: usize,
    pub threads: usize,
    /// Frustum extraction and cell selection.
    pub culling_ms: StageStats,
    /// Point gathering, clipping and z-buffer resolve.
    pub projection_ms: StageStats,
    pub filter_ms: StageStats,
    pub total_ms: StageStats,
    /// `1000 / total_ms.mean`
    pub fps: f64,
    /// Mean number of points in the culled cells.
    pub points_after_culling: f64,
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

/// Renders and filters `frames` frames, cycling through `cameras`.
pub fn run_bench(
    cloud: &PointCloud,
    grid: &UniformGrid,
    cameras: &[CameraModel],
    frames: usize,
    rparams: &RenderParams,
    fparams: &FilterParams,
) -> Result<BenchReport, FilterError> {
    if frames == 0 || cameras.is_empty() {
        return Err(FilterError::InvalidParams(
            "need at least one frame and one camera".into(),
        ));
    }
    fparams.validate()?;
    let mut cull = Vec::with_capacity(frames);
    let mut project = Vec::with_capacity(frames);
    let mut filter = Vec::with_capacity(frames);
    let mut total = Vec::with_capacity(frames);
    let mut culled_points = 0usize;
    for i in 0..frames {
        let camera = &cameras[i % cameras.len()];
        let t0 = Instant::now();
        let cells = grid.cull_cells(&extract_frustum(camera));
        cull.push(ms(t0));

        let t1 = Instant::now();
        let frame = project_cells(grid, &cells, camera, rparams);
        project.push(ms(t1));

        let t2 = Instant::now();
        let filtered = depth_filter(&frame, fparams)?;
        filter.push(ms(t2));
        total.push(ms(t0));

        culled_points += cells
            .iter()
            .map(|&c| grid.cell_points(c).len())
            .sum::<usize>();
        std::hint::black_box(filtered);
    }
    let total_ms = StageStats::from_samples(&total);
    let camera = &cameras[0];
    Ok(BenchReport {
        points_total: cloud.count(),
        frames,
        resolution: [camera.width, camera.height],
        pixels: camera.pixel_count(),
        threads: rayon::current_num_threads(),
        culling_ms: StageStats::from_samples(&cull),
        projection_ms: StageStats::from_samples(&project),
        filter_ms: StageStats::from_samples(&filter),
        total_ms,
        fps: if total_ms.mean > 0.0 {
            1000.0 / total_ms.mean
        } else {
            f64::INFINITY
        },
        points_after_culling: culled_points as f64 / frames as f64,
    })
}
