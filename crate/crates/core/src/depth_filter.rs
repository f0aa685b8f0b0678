//! Hierarchical depth-guided background filter.
//!
//! Background points that leak between sparse foreground pixels are removed
//! by comparing every pixel to the nearest depth one level up a min-pooled
//! pyramid:
//!
//! 1. Min-pool the depth map `n` times with a 2x2 / stride-2 window (empty
//!    pixels are `+inf`).
//! 2. Starting from the coarsest level, upsample one level at a time. A
//!    child pixel survives when its depth is within `filter_strength`
//!    (relative) of a reference depth taken from its parent. Parents that
//!    sit on a depth edge (Laplacian response) also offer their eight
//!    neighbors as references.
//! 3. Between levels, discarded pixels are filled by bilinear interpolation
//!    of the coarser result so the next comparison has a reference; the
//!    last step does not fill.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::FilterError;
use crate::frame::{DepthImage, FrameRGBDA};

pub const DEFAULT_LEVELS: usize = 4;
pub const DEFAULT_FILTER_STRENGTH: f64 = 0.1;
pub const DEFAULT_EDGE_THRESHOLD: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterParams {
    /// Number of 2x2 min-pooling steps.
    pub levels_n: usize,
    /// Relative depth tolerance of the keep rule; smaller keeps fewer pixels.
    pub filter_strength: f64,
    /// Relative Laplacian magnitude above which a pixel counts as an edge.
    pub edge_threshold: f64,
}

impl Default for FilterParams {
    fn default() -> Self {
        Self {
            levels_n: DEFAULT_LEVELS,
            filter_strength: DEFAULT_FILTER_STRENGTH,
            edge_threshold: DEFAULT_EDGE_THRESHOLD,
        }
    }
}

impl FilterParams {
    pub fn validate(&self) -> Result<(), FilterError> {
        if self.levels_n < 1 {
            return Err(FilterError::InvalidParams(
                "levels_n must be at least 1".into(),
            ));
        }
        if !(self.filter_strength >= 0.0 && self.filter_strength.is_finite()) {
            return Err(FilterError::InvalidParams(format!(
                "filter_strength must be finite and non-negative, got {}",
                self.filter_strength
            )));
        }
        if !(self.edge_threshold > 0.0 && self.edge_threshold.is_finite()) {
            return Err(FilterError::InvalidParams(format!(
                "edge_threshold must be positive, got {}",
                self.edge_threshold
            )));
        }
        Ok(())
    }

    /// Largest `levels_n` an image of this size supports.
    pub fn max_levels(width: usize, height: usize) -> usize {
        let m = width.min(height);
        if m == 0 {
            0
        } else {
            m.ilog2() as usize
        }
    }
}

/// Min-pooled depth levels; `levels[0]` is the coarsest, the last entry is
/// the full-resolution input.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthPyramid {
    pub levels: Vec<DepthImage>,
}

impl DepthPyramid {
    /// Number of pooling steps (one less than the number of levels).
    pub fn steps(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn finest(&self) -> &DepthImage {
        self.levels.last().expect("pyramid has at least one level")
    }
}

/// Per-pixel edge flags of one pyramid level.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeMask {
    pub width: usize,
    pub height: usize,
    pub flags: Vec<bool>,
}

impl EdgeMask {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.flags[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }
}

/// Result of one upsampling step: the depth image handed to the next level
/// and which of its pixels passed the keep rule (as opposed to being filled).
#[derive(Debug, Clone, PartialEq)]
pub struct FilterStep {
    pub depth: DepthImage,
    pub kept: Vec<bool>,
}

fn normalize_empty(d: f32) -> f32 {
    if d > 0.0 && d.is_finite() {
        d
    } else {
        f32::INFINITY
    }
}

fn min_pool(fine: &DepthImage) -> DepthImage {
    let w = fine.width.div_ceil(2);
    let h = fine.height.div_ceil(2);
    let mut data = vec![f32::INFINITY; w * h];
    data.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        let y0 = 2 * y;
        let y1 = (y0 + 1).min(fine.height - 1);
        for (x, out) in row.iter_mut().enumerate() {
            let x0 = 2 * x;
            let x1 = (x0 + 1).min(fine.width - 1);
            *out = fine
                .get(x0, y0)
                .min(fine.get(x1, y0))
                .min(fine.get(x0, y1))
                .min(fine.get(x1, y1));
        }
    });
    DepthImage {
        width: w,
        height: h,
        data,
    }
}

/// Builds a min-pooling pyramid with `levels_n` downsampling steps.
///
/// Empty pixels may be given as `0` or `+inf`; both become `+inf`.
pub fn build_min_pyramid(depth: &DepthImage, levels_n: usize) -> Result<DepthPyramid, FilterError> {
    let need = 1usize.checked_shl(levels_n as u32).unwrap_or(usize::MAX);
    if levels_n == 0 || depth.width < need || depth.height < need {
        return Err(FilterError::ImageTooSmall {
            width: depth.width,
            height: depth.height,
            levels: levels_n,
        });
    }
    let base = DepthImage {
        width: depth.width,
        height: depth.height,
        data: depth.data.iter().map(|&d| normalize_empty(d)).collect(),
    };
    let mut levels = Vec::with_capacity(levels_n + 1);
    levels.push(base);
    for _ in 0..levels_n {
        let next = min_pool(levels.last().unwrap());
        levels.push(next);
    }
    levels.reverse();
    Ok(DepthPyramid { levels })
}

/// Flags pixels whose 4-neighbor Laplacian exceeds `edge_threshold` times
/// their own depth. Empty neighbors and out-of-image neighbors take the
/// center value, so holes and borders never fire.
pub fn laplacian_edges(depth: &DepthImage, edge_threshold: f64) -> EdgeMask {
    let (w, h) = depth.dims();
    let mut flags = vec![false; w * h];
    flags.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, flag) in row.iter_mut().enumerate() {
            let center = depth.get(x, y);
            if !center.is_finite() {
                continue;
            }
            let c = f64::from(center);
            let sample = |nx: usize, ny: usize| {
                let v = depth.get(nx, ny);
                if v.is_finite() {
                    f64::from(v)
                } else {
                    c
                }
            };
            let left = sample(x.saturating_sub(1), y);
            let right = sample((x + 1).min(w - 1), y);
            let up = sample(x, y.saturating_sub(1));
            let down = sample(x, (y + 1).min(h - 1));
            let response = left + right + up + down - 4.0 * c;
            *flag = response.abs() > edge_threshold * c;
        }
    });
    EdgeMask {
        width: w,
        height: h,
        flags,
    }
}

#[inline]
fn keeps(fine: f64, reference: f64, strength: f64) -> bool {
    reference.is_finite() && fine - reference <= strength * reference
}

/// Bilinear sample of the finite values of `coarse` at the center of fine
/// pixel `(x, y)`, renormalizing over finite taps.
fn interpolate(coarse: &DepthImage, x: usize, y: usize) -> f32 {
    // fine pixel center (x + 0.5) maps to coarse coordinate x / 2 - 0.25
    let axis = |i: usize, n: usize| -> [(usize, f64); 2] {
        let pos = i as f64 / 2.0 - 0.25;
        let i0 = pos.floor();
        let t = pos - i0;
        let clamp = |v: f64| (v.max(0.0) as usize).min(n - 1);
        [(clamp(i0), 1.0 - t), (clamp(i0 + 1.0), t)]
    };
    let xs = axis(x, coarse.width);
    let ys = axis(y, coarse.height);
    let mut acc = 0.0;
    let mut weight = 0.0;
    for &(cy, wy) in &ys {
        for &(cx, wx) in &xs {
            let v = coarse.get(cx, cy);
            let wgt = wx * wy;
            if v.is_finite() && wgt > 0.0 {
                acc += wgt * f64::from(v);
                weight += wgt;
            }
        }
    }
    if weight > 0.0 {
        (acc / weight) as f32
    } else {
        f32::INFINITY
    }
}

/// One coarse-to-fine step of the filter.
///
/// `coarse` is the filtered (and, except before the first step, filled)
/// result of the previous level; `fine` is the matching min-pooled level.
pub fn upsample_filter_step(
    coarse: &DepthImage,
    fine: &DepthImage,
    params: &FilterParams,
    is_final: bool,
) -> Result<FilterStep, FilterError> {
    if coarse.width != fine.width.div_ceil(2) || coarse.height != fine.height.div_ceil(2) {
        return Err(FilterError::DimensionMismatch {
            coarse: coarse.dims(),
            fine: fine.dims(),
        });
    }
    params.validate()?;
    let edges = laplacian_edges(coarse, params.edge_threshold);
    let strength = params.filter_strength;
    let (w, h) = fine.dims();
    let (cw, ch) = coarse.dims();

    let mut kept = vec![false; w * h];
    kept.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        let py = y / 2;
        for (x, keep) in row.iter_mut().enumerate() {
            let f = fine.get(x, y);
            if !f.is_finite() {
                continue;
            }
            let f = f64::from(f);
            let px = x / 2;
            if keeps(f, f64::from(coarse.get(px, py)), strength) {
                *keep = true;
                continue;
            }
            if !edges.get(px, py) {
                continue;
            }
            'search: for ny in py.saturating_sub(1)..=(py + 1).min(ch - 1) {
                for nx in px.saturating_sub(1)..=(px + 1).min(cw - 1) {
                    if keeps(f, f64::from(coarse.get(nx, ny)), strength) {
                        *keep = true;
                        break 'search;
                    }
                }
            }
        }
    });

    let mut data = vec![f32::INFINITY; w * h];
    data.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, out) in row.iter_mut().enumerate() {
            let i = y * w + x;
            if kept[i] {
                *out = fine.data[i];
            } else if !is_final {
                *out = interpolate(coarse, x, y);
            }
        }
    });

    Ok(FilterStep {
        depth: DepthImage {
            width: w,
            height: h,
            data,
        },
        kept,
    })
}

/// Full-resolution keep mask of the filter for a depth image.
pub fn filter_keep_mask(
    depth: &DepthImage,
    params: &FilterParams,
) -> Result<Vec<bool>, FilterError> {
    params.validate()?;
    let pyramid = build_min_pyramid(depth, params.levels_n)?;
    let mut upsampled = pyramid.levels[0].clone();
    let mut kept = Vec::new();
    for i in 1..=params.levels_n {
        let step =
            upsample_filter_step(&upsampled, &pyramid.levels[i], params, i == params.levels_n)?;
        upsampled = step.depth;
        kept = step.kept;
    }
    Ok(kept)
}

/// Removes background pixels from a rendered frame. Kept pixels are copied
/// unchanged; discarded pixels become empty.
pub fn depth_filter(frame: &FrameRGBDA, params: &FilterParams) -> Result<FrameRGBDA, FilterError> {
    let kept = filter_keep_mask(&frame.depth_image(), params)?;
    Ok(frame.masked(&kept))
}
