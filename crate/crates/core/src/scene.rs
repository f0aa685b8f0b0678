//! Deterministic synthetic scenes for tests, benchmarks and demos.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::camera::{CameraModel, RigidTransform, DEFAULT_Z_FAR, DEFAULT_Z_NEAR};
use crate::cloud::PointCloud;
use crate::error::GeometryError;
use crate::frame::ColorImage;
use crate::io::cameras::{CameraSet, Intrinsics};

pub const FRONT_DEPTH: f64 = 1.0;
pub const BACK_DEPTH: f64 = 5.0;

/// Striped texture so images are not constant.
fn texture(base: [u8; 3], x: f64, y: f64) -> [u8; 3] {
    let stripe = ((x * 8.0).floor() + (y * 8.0).floor()).rem_euclid(2.0) as u8;
    [base[0], base[1].saturating_add(stripe * 50), base[2]]
}

const FRONT_COLOR: [u8; 3] = [210, 60, 40];
const BACK_COLOR: [u8; 3] = [30, 90, 200];

/// A front plane sparsely sampled on a pixel checkerboard in front of a
/// densely sampled back plane. Seen from `camera`, the back plane shows
/// through every other front pixel: the textbook leakage case.
#[derive(Debug, Clone)]
pub struct TwoPlaneScene {
    pub cloud: PointCloud,
    pub camera: CameraModel,
    /// Front plane pixel rectangle `[x0, y0, x1, y1)`.
    pub front_rect: [usize; 4],
    /// Filter depth the rectangle is aligned for.
    pub levels: usize,
}

impl TwoPlaneScene {
    pub fn in_front_rect(&self, u: usize, v: usize) -> bool {
        let [x0, y0, x1, y1] = self.front_rect;
        (x0..x1).contains(&u) && (y0..y1).contains(&v)
    }

    /// Pixels where the camera sees a front-plane point.
    pub fn is_front_pixel(&self, u: usize, v: usize) -> bool {
        self.in_front_rect(u, v) && (u + v).is_multiple_of(2)
    }

    /// Distance from the rectangle border below which a filter with
    /// `levels` steps may be influenced by the outside.
    pub fn margin(&self) -> usize {
        1 << (self.levels + 1)
    }

    /// Inside the front rectangle and at least [`margin`](Self::margin)
    /// pixels from its border.
    pub fn is_interior(&self, u: usize, v: usize) -> bool {
        let [x0, y0, x1, y1] = self.front_rect;
        let m = self.margin();
        u >= x0 + m && u + m < x1 && v >= y0 + m && v + m < y1
    }

    /// Ideal photo from `camera`: front plane solid over its world
    /// rectangle, back plane elsewhere.
    pub fn ground_truth(&self, camera: &CameraModel) -> ColorImage {
        let [x0, y0, x1, y1] = self.front_rect;
        let c0 = &self.camera;
        let corner = |u: usize, v: usize| {
            (
                (u as f64 - c0.cx) / c0.fx * FRONT_DEPTH,
                (v as f64 - c0.cy) / c0.fy * FRONT_DEPTH,
            )
        };
        let (wx0, wy0) = corner(x0, y0);
        let (wx1, wy1) = corner(x1, y1);
        // front plane is z = FRONT_DEPTH in the reference camera frame
        let to_ref = c0.world_to_camera;
        let cam_to_world = camera.world_to_camera.inverse();
        let origin = to_ref.apply(&camera.center());
        let (w, h) = (camera.width as usize, camera.height as usize);
        let mut data = Vec::with_capacity(w * h);
        for v in 0..h {
            for u in 0..w {
                let dir_cam = Vector3::new(
                    (u as f64 + 0.5 - camera.cx) / camera.fx,
                    (v as f64 + 0.5 - camera.cy) / camera.fy,
                    1.0,
                );
                let dir_world = cam_to_world.rotation() * dir_cam;
                let dir = to_ref.rotation() * dir_world;
                let hit = |z: f64| {
                    let s = (z - origin.z) / dir.z;
                    (s > 0.0).then(|| origin + dir * s)
                };
                let front = hit(FRONT_DEPTH)
                    .filter(|p| p.x >= wx0 && p.x < wx1 && p.y >= wy0 && p.y < wy1)
                    .map(|p| texture(FRONT_COLOR, p.x, p.y));
                let color = front
                    .or_else(|| hit(BACK_DEPTH).map(|p| texture(BACK_COLOR, p.x, p.y)))
                    .unwrap_or([0; 3]);
                data.push(color.map(|c| f32::from(c) / 255.0));
            }
        }
        ColorImage {
            width: w,
            height: h,
            data,
        }
    }

    /// `n` cameras sliding sideways from the reference pose, ids `000`,
    /// `001`, ...
    pub fn camera_path(&self, n: usize, step: f64) -> CameraSet {
        let c = &self.camera;
        let frames = (0..n)
            .map(|i| {
                let shift = Vector3::new(-(i as f64) * step, 0.0, 0.0);
                let pose = RigidTransform::new(
                    *c.world_to_camera.rotation(),
                    c.world_to_camera.translation() + shift,
                )
                .expect("rotation unchanged");
                (format!("{i:03}"), c.with_pose(pose))
            })
            .collect();
        CameraSet {
            intrinsics: Intrinsics {
                fx: c.fx,
                fy: c.fy,
                cx: c.cx,
                cy: c.cy,
                width: c.width,
                height: c.height,
            },
            frames,
        }
    }
}

/// Builds the two-plane scene for a `width`x`height` identity camera with a
/// focal length equal to the width. The front rectangle covers roughly the
/// middle half of the image, aligned to `2^levels` pixel blocks.
pub fn two_plane_scene(
    width: u32,
    height: u32,
    levels: usize,
) -> Result<TwoPlaneScene, GeometryError> {
    let f = f64::from(width);
    let camera = CameraModel::new(
        f,
        f,
        f64::from(width) / 2.0,
        f64::from(height) / 2.0,
        width,
        height,
        RigidTransform::identity(),
        DEFAULT_Z_NEAR,
        DEFAULT_Z_FAR,
    )?;
    let block = 1usize << levels;
    let (w, h) = (width as usize, height as usize);
    let up = |x: usize| x.div_ceil(block) * block;
    let down = |x: usize| x / block * block;
    let front_rect = [up(w / 4), up(h / 4), down(3 * w / 4), down(3 * h / 4)];
    if front_rect[0] >= front_rect[2] || front_rect[1] >= front_rect[3] {
        return Err(GeometryError::InvalidParams(format!(
            "{width}x{height} is too small for a front rectangle aligned to {block} pixels"
        )));
    }

    let mut scene = TwoPlaneScene {
        cloud: PointCloud::new(Vec::new(), Vec::new())?,
        camera,
        front_rect,
        levels,
    };
    let mut positions = Vec::new();
    let mut colors = Vec::new();
    let mut push = |p: Vector3<f64>, base: [u8; 3]| {
        positions.push([p.x as f32, p.y as f32, p.z as f32]);
        colors.push(texture(base, p.x, p.y));
    };
    for v in 0..h {
        for u in 0..w {
            push(
                camera.unproject(u as u32, v as u32, BACK_DEPTH)?,
                BACK_COLOR,
            );
            if scene.is_front_pixel(u, v) {
                push(
                    camera.unproject(u as u32, v as u32, FRONT_DEPTH)?,
                    FRONT_COLOR,
                );
            }
        }
    }
    scene.cloud = PointCloud::new(positions, colors)?;
    Ok(scene)
}

/// `n` points uniform in the box `[lo, hi]` with random colors.
pub fn uniform_box_cloud(
    n: usize,
    lo: [f32; 3],
    hi: [f32; 3],
    seed: u64,
) -> Result<PointCloud, GeometryError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions = (0..n)
        .map(|_| std::array::from_fn(|k| lo[k] + (hi[k] - lo[k]) * rng.random::<f32>()))
        .collect();
    let colors = (0..n).map(|_| rng.random()).collect();
    PointCloud::new(positions, colors)
}

/// Benchmark setup: an identity camera looking down +z at a box
/// `[-1, 1] x [-0.75, 0.75] x [2, 4]`, which it sees completely.
pub fn bench_scene(
    points: usize,
    width: u32,
    height: u32,
    seed: u64,
) -> Result<(PointCloud, CameraModel), GeometryError> {
    let cloud = uniform_box_cloud(points, [-1.0, -0.75, 2.0], [1.0, 0.75, 4.0], seed)?;
    // the near face fills 80% of the limiting image dimension
    let f = 0.8 * f64::from(width).min(f64::from(height) / 0.75);
    let camera = CameraModel::new(
        f,
        f,
        f64::from(width) / 2.0,
        f64::from(height) / 2.0,
        width,
        height,
        RigidTransform::identity(),
        DEFAULT_Z_NEAR,
        DEFAULT_Z_FAR,
    )?;
    Ok((cloud, camera))
}
