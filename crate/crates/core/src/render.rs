//! 1x1-pixel point projection with a deterministic soft z-buffer.
//!
//! Two passes over the culled points: the first finds the per-pixel minimum
//! depth `m`, the second averages the colors of every point at that pixel
//! with depth `<= m * (1 + eps)`. Colors are summed as integers, so the
//! result does not depend on point order or thread count.

use std::sync::atomic::{AtomicU32, AtomicU64, Ordering};

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::camera::CameraModel;
use crate::cloud::PointCloud;
use crate::error::GeometryError;
use crate::frame::FrameRGBDA;
use crate::frustum::extract_frustum;
use crate::grid::UniformGrid;

pub const DEFAULT_ZBUFFER_EPSILON_REL: f64 = 0.01;
pub const DEFAULT_CELL_SIZE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RenderParams {
    /// Relative depth tolerance of the soft z-buffer.
    pub zbuffer_epsilon_rel: f64,
    /// Grid cell edge length in meters.
    pub cell_size: f64,
}

impl Default for RenderParams {
    fn default() -> Self {
        Self {
            zbuffer_epsilon_rel: DEFAULT_ZBUFFER_EPSILON_REL,
            cell_size: DEFAULT_CELL_SIZE,
        }
    }
}

impl RenderParams {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.zbuffer_epsilon_rel >= 0.0 && self.zbuffer_epsilon_rel.is_finite()) {
            return Err(GeometryError::InvalidParams(format!(
                "z-buffer epsilon must be non-negative, got {}",
                self.zbuffer_epsilon_rel
            )));
        }
        if !(self.cell_size > 0.0 && self.cell_size.is_finite()) {
            return Err(GeometryError::InvalidCellSize(self.cell_size));
        }
        Ok(())
    }
}

/// A point that survived clipping: target pixel, depth and color.
#[derive(Debug, Clone, Copy)]
struct Fragment {
    pixel: u32,
    depth: f32,
    color: [u8; 3],
}

#[inline]
fn rasterize_point(camera: &CameraModel, p: &[f32; 3], color: [u8; 3]) -> Option<Fragment> {
    let world = Vector3::new(f64::from(p[0]), f64::from(p[1]), f64::from(p[2]));
    camera.rasterize(&world).map(|(pixel, z)| Fragment {
        pixel: pixel as u32,
        depth: z as f32,
        color,
    })
}

/// Renders the points of `cells` (as returned by culling).
pub fn project_cells(
    grid: &UniformGrid,
    cells: &[usize],
    camera: &CameraModel,
    params: &RenderParams,
) -> FrameRGBDA {
    let fragments: Vec<Fragment> = cells
        .par_iter()
        .flat_map_iter(|&c| grid.cell_positions(c).iter().zip(grid.cell_colors(c)))
        .filter_map(|(p, &color)| rasterize_point(camera, p, color))
        .collect();
    resolve(camera, params, &fragments)
}

/// Culls the grid against the camera frustum and renders what remains.
///
/// `grid` must have been built from `cloud`.
pub fn project_points(
    cloud: &PointCloud,
    grid: &UniformGrid,
    camera: &CameraModel,
    params: &RenderParams,
) -> FrameRGBDA {
    assert_eq!(
        cloud.count(),
        grid.point_count(),
        "grid was built from a different cloud"
    );
    let cells = grid.cull_cells(&extract_frustum(camera));
    project_cells(grid, &cells, camera, params)
}

/// Renders every point of the cloud without culling.
pub fn project_all_points(
    cloud: &PointCloud,
    camera: &CameraModel,
    params: &RenderParams,
) -> FrameRGBDA {
    let fragments: Vec<Fragment> = cloud
        .positions()
        .par_iter()
        .zip(cloud.colors())
        .filter_map(|(p, &color)| rasterize_point(camera, p, color))
        .collect();
    resolve(camera, params, &fragments)
}

/// Per-pixel z-buffer state, kept together so both passes touch one cache
/// line per fragment.
#[repr(align(32))]
struct PixelAcc {
    min_bits: AtomicU32,
    count: AtomicU32,
    sums: [AtomicU64; 3],
}

impl Default for PixelAcc {
    fn default() -> Self {
        Self {
            min_bits: AtomicU32::new(u32::MAX),
            count: AtomicU32::new(0),
            sums: Default::default(),
        }
    }
}

fn resolve(camera: &CameraModel, params: &RenderParams, fragments: &[Fragment]) -> FrameRGBDA {
    let (w, h) = (camera.width as usize, camera.height as usize);
    let n = w * h;

    let acc: Vec<PixelAcc> = (0..n).map(|_| PixelAcc::default()).collect();
    // Depths are positive, so their IEEE bit patterns order like the values.
    fragments.par_iter().for_each(|f| {
        acc[f.pixel as usize]
            .min_bits
            .fetch_min(f.depth.to_bits(), Ordering::Relaxed);
    });

    let scale = 1.0 + params.zbuffer_epsilon_rel;
    fragments.par_iter().for_each(|f| {
        let a = &acc[f.pixel as usize];
        let min = f32::from_bits(a.min_bits.load(Ordering::Relaxed));
        if f64::from(f.depth) <= f64::from(min) * scale {
            for k in 0..3 {
                a.sums[k].fetch_add(u64::from(f.color[k]), Ordering::Relaxed);
            }
            a.count.fetch_add(1, Ordering::Relaxed);
        }
    });

    let mut frame = FrameRGBDA::empty(w, h);
    frame
        .rgb
        .par_iter_mut()
        .zip(frame.depth.par_iter_mut())
        .zip(frame.alpha.par_iter_mut())
        .enumerate()
        .for_each(|(px, ((rgb, depth), alpha))| {
            let a = &acc[px];
            let count = a.count.load(Ordering::Relaxed);
            if count == 0 {
                return;
            }
            let denom = f64::from(count) * 255.0;
            for (c, sum) in rgb.iter_mut().zip(&a.sums) {
                *c = (sum.load(Ordering::Relaxed) as f64 / denom) as f32;
            }
            *depth = f32::from_bits(a.min_bits.load(Ordering::Relaxed));
            *alpha = 1;
        });
    frame
}
