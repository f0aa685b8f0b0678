//! Synthetic training pairs for the reconstruction network.
//!
//! Ground-truth photos are only approximately registered to the scan, so
//! instead of pairing a raw projection with a photo, the network input is
//! built from the photo itself: the cloud is projected from the photo's
//! pose, and only its depth and fill mask are kept. Photo pixels are copied
//! into the input wherever the (filtered) projection is filled, which gives
//! a pixel-aligned pair.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::CameraModel;
use crate::cloud::PointCloud;
use crate::depth_filter::{filter_keep_mask, FilterParams};
use crate::error::FilterError;
use crate::frame::{ColorImage, FrameRGBDA};
use crate::grid::UniformGrid;
use crate::io::cameras::CameraSet;
use crate::io::frame_io::{read_color_png, write_color_png, write_frame};
use crate::io::manifest::{
    DatasetManifest, DatasetMode, ManifestParameters, MANIFEST_FILE, MANIFEST_VERSION,
};
use crate::io::IoError;
use crate::render::{project_points, RenderParams};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("ground truth {id} is {actual:?}, camera expects {expected:?}")]
    DimensionMismatch {
        id: String,
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("missing ground truth for frame \"{0}\"")]
    MissingFrame(String),
    #[error("invalid pair id \"{0}\"")]
    InvalidId(String),
    #[error("invalid augmentation parameters: {0}")]
    InvalidAugment(String),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Io(#[from] IoError),
}

/// Network input `(RGBDA)^s` and target `(RGB)^gt`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub id: String,
    pub input: FrameRGBDA,
    pub target: ColorImage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    /// Additive brightness offsets, drawn uniformly per group.
    pub brightness_delta_range: [f64; 2],
    /// Contrast factors around mid-gray, drawn uniformly per group.
    pub contrast_scale_range: [f64; 2],
    /// Number of spatial groups, drawn uniformly (inclusive).
    pub group_count_range: [u32; 2],
    pub seed: u64,
}

impl Default for AugmentParams {
    fn default() -> Self {
        Self {
            brightness_delta_range: [-0.15, 0.15],
            contrast_scale_range: [0.8, 1.25],
            group_count_range: [2, 4],
            seed: 0,
        }
    }
}

impl AugmentParams {
    /// Parameters that leave every pixel unchanged.
    pub fn identity() -> Self {
        Self {
            brightness_delta_range: [0.0, 0.0],
            contrast_scale_range: [1.0, 1.0],
            group_count_range: [1, 1],
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        let [b0, b1] = self.brightness_delta_range;
        let [c0, c1] = self.contrast_scale_range;
        let [g0, g1] = self.group_count_range;
        let bad = |m: String| Err(DatasetError::InvalidAugment(m));
        if !(b0 <= b1 && b0 >= -1.0 && b1 <= 1.0) {
            return bad(format!(
                "brightness range [{b0}, {b1}] must be ordered within [-1, 1]"
            ));
        }
        if !(c0 <= c1 && c0 >= 0.0 && c1.is_finite()) {
            return bad(format!(
                "contrast range [{c0}, {c1}] must be ordered and non-negative"
            ));
        }
        if !(1 <= g0 && g0 <= g1) {
            return bad(format!(
                "group count range [{g0}, {g1}] must be ordered and >= 1"
            ));
        }
        Ok(())
    }
}

fn check_dims(id: &str, gt: &ColorImage, camera: &CameraModel) -> Result<(), DatasetError> {
    let expected = (camera.width as usize, camera.height as usize);
    if gt.dims() != expected {
        return Err(DatasetError::DimensionMismatch {
            id: id.to_string(),
            expected,
            actual: gt.dims(),
        });
    }
    Ok(())
}

fn render_and_filter(
    cloud: &PointCloud,
    grid: &UniformGrid,
    camera: &CameraModel,
    fparams: &FilterParams,
    rparams: &RenderParams,
) -> Result<(FrameRGBDA, Vec<bool>), DatasetError> {
    let frame = project_points(cloud, grid, camera, rparams);
    let keep = filter_keep_mask(&frame.depth_image(), fparams)?;
    Ok((frame, keep))
}

/// Input keeps the filtered depth and mask; its color comes from the photo.
pub fn make_filtered_pair(
    id: &str,
    cloud: &PointCloud,
    grid: &UniformGrid,
    gt_image: &ColorImage,
    gt_camera: &CameraModel,
    fparams: &FilterParams,
    rparams: &RenderParams,
) -> Result<TrainingPair, DatasetError> {
    check_dims(id, gt_image, gt_camera)?;
    let (frame, keep) = render_and_filter(cloud, grid, gt_camera, fparams, rparams)?;
    let mut input = frame.masked(&keep);
    for (i, rgb) in input.rgb.iter_mut().enumerate() {
        if input.alpha[i] == 1 {
            *rgb = gt_image.data[i];
        }
    }
    Ok(TrainingPair {
        id: id.to_string(),
        input,
        target: gt_image.clone(),
    })
}

/// Input keeps every projected pixel. Pixels the filter classifies as
/// foreground take the photo color, background pixels keep the projected
/// point color.
pub fn make_leaky_pair(
    id: &str,
    cloud: &PointCloud,
    grid: &UniformGrid,
    gt_image: &ColorImage,
    gt_camera: &CameraModel,
    fparams: &FilterParams,
    rparams: &RenderParams,
) -> Result<TrainingPair, DatasetError> {
    check_dims(id, gt_image, gt_camera)?;
    let (mut input, keep) = render_and_filter(cloud, grid, gt_camera, fparams, rparams)?;
    for (i, rgb) in input.rgb.iter_mut().enumerate() {
        if keep[i] {
            *rgb = gt_image.data[i];
        }
    }
    Ok(TrainingPair {
        id: id.to_string(),
        input,
        target: gt_image.clone(),
    })
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn lattice_value(seed: u64, ix: i64, iy: i64) -> f64 {
    let h = splitmix64(seed ^ splitmix64((ix as u64) ^ splitmix64(iy as u64).rotate_left(17)));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Smooth value noise in `[0, 1)` with lattice spacing `cell` pixels.
fn value_noise(seed: u64, x: usize, y: usize, cell: f64) -> f64 {
    let fx = (x as f64 + 0.5) / cell;
    let fy = (y as f64 + 0.5) / cell;
    let (ix, iy) = (fx.floor(), fy.floor());
    let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
    let (tx, ty) = (smooth(fx - ix), smooth(fy - iy));
    let (ix, iy) = (ix as i64, iy as i64);
    let a = lattice_value(seed, ix, iy);
    let b = lattice_value(seed, ix + 1, iy);
    let c = lattice_value(seed, ix, iy + 1);
    let d = lattice_value(seed, ix + 1, iy + 1);
    let top = a + (b - a) * tx;
    let bottom = c + (d - c) * tx;
    (top + (bottom - top) * ty).clamp(0.0, 1.0 - f64::EPSILON)
}

fn draw(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
    let u: f64 = rng.random();
    lo + (hi - lo) * u
}

/// Per-region brightness/contrast jitter of the filled pixels.
///
/// Filled pixels are split into `k` groups by quantizing a seeded
/// low-frequency noise field; each group gets its own contrast `c` and
/// brightness `b`, applied as `clamp(c * (v - 0.5) + 0.5 + b, 0, 1)`.
pub fn augment_brightness_contrast(
    image: &ColorImage,
    alpha: &[u8],
    params: &AugmentParams,
) -> Result<ColorImage, DatasetError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let [g0, g1] = params.group_count_range;
    let k = rng.random_range(g0..=g1) as usize;
    let groups: Vec<(f64, f64)> = (0..k)
        .map(|_| {
            let c = draw(&mut rng, params.contrast_scale_range);
            let b = draw(&mut rng, params.brightness_delta_range);
            (c, b)
        })
        .collect();
    let noise_seed: u64 = rng.random();
    let cell = (image.width.max(image.height) as f64 / 2.0).max(1.0);

    let mut out = image.clone();
    out.data
        .par_chunks_mut(image.width.max(1))
        .enumerate()
        .for_each(|(y, row)| {
            for (x, px) in row.iter_mut().enumerate() {
                if alpha[y * image.width + x] != 1 {
                    continue;
                }
                let group = if k == 1 {
                    0
                } else {
                    ((value_noise(noise_seed, x, y, cell) * k as f64) as usize).min(k - 1)
                };
                let (c, b) = groups[group];
                for v in px.iter_mut() {
                    *v = (c * (f64::from(*v) - 0.5) + 0.5 + b).clamp(0.0, 1.0) as f32;
                }
            }
        });
    Ok(out)
}

/// Where ground-truth photos come from.
#[derive(Debug, Clone)]
pub enum GroundTruth {
    /// `<dir>/<frame id>.png`
    Dir(PathBuf),
    Memory(HashMap<String, ColorImage>),
}

impl GroundTruth {
    fn load(&self, id: &str) -> Result<ColorImage, DatasetError> {
        match self {
            Self::Dir(dir) => {
                let path = dir.join(format!("{id}.png"));
                if !path.exists() {
                    return Err(DatasetError::MissingFrame(id.to_string()));
                }
                Ok(read_color_png(path)?)
            }
            Self::Memory(map) => map
                .get(id)
                .cloned()
                .ok_or_else(|| DatasetError::MissingFrame(id.to_string())),
        }
    }
}

/// Directory holding one pair inside a dataset.
pub fn pair_dir(out_dir: &Path, id: &str) -> PathBuf {
    out_dir.join("pairs").join(id)
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id != "." && id != ".." && !id.contains(['/', '\\', '\0'])
}

/// Writes one training pair per camera frame plus `manifest.json`.
///
/// Layout: `pairs/<id>/input.{png,pfm,a.png}` and `pairs/<id>/target.png`.
/// Each frame's augmentation seed is derived from `augment.seed` and the
/// frame index, so reruns are byte-identical.
#[allow(clippy::too_many_arguments)]
pub fn generate_dataset(
    cloud: &PointCloud,
    grid: &UniformGrid,
    cameras: &CameraSet,
    ground_truth: &GroundTruth,
    out_dir: &Path,
    mode: DatasetMode,
    augment: &AugmentParams,
    fparams: &FilterParams,
    rparams: &RenderParams,
) -> Result<DatasetManifest, DatasetError> {
    augment.validate()?;
    fparams.validate()?;
    if let Some((id, _)) = cameras.frames.iter().find(|(id, _)| !valid_id(id)) {
        return Err(DatasetError::InvalidId(id.clone()));
    }
    fs::create_dir_all(out_dir.join("pairs")).map_err(|e| IoError::file(out_dir, e))?;

    cameras.frames.par_iter().enumerate().try_for_each(
        |(index, (id, camera))| -> Result<(), DatasetError> {
            let gt = ground_truth.load(id)?;
            let mut pair = match mode {
                DatasetMode::Filtered => {
                    make_filtered_pair(id, cloud, grid, &gt, camera, fparams, rparams)?
                }
                DatasetMode::Leaky => {
                    make_leaky_pair(id, cloud, grid, &gt, camera, fparams, rparams)?
                }
            };
            let frame_params = AugmentParams {
                seed: splitmix64(augment.seed ^ splitmix64(index as u64)),
                ..augment.clone()
            };
            pair.input.rgb = augment_brightness_contrast(
                &pair.input.color_image(),
                &pair.input.alpha,
                &frame_params,
            )?
            .data;
            let dir = pair_dir(out_dir, id);
            fs::create_dir_all(&dir).map_err(|e| IoError::file(&dir, e))?;
            write_frame(&pair.input, dir.join("input"))?;
            write_color_png(&pair.target, dir.join("target.png"))?;
            Ok(())
        },
    )?;

    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        mode,
        ids: cameras.frames.iter().map(|(id, _)| id.clone()).collect(),
        parameters: ManifestParameters {
            filter: *fparams,
            render: *rparams,
            augment: augment.clone(),
        },
        seed: augment.seed,
    };
    manifest.write(out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}
