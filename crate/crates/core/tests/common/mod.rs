#![allow(dead_code)]

use lidarsplat_core::{CameraModel, DepthImage, FilterParams, PointCloud, RigidTransform};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Clustered cloud with some coordinates snapped to a lattice, so points
/// land exactly on cell faces and pixel boundaries.
pub fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> PointCloud {
    let clusters: Vec<([f32; 3], f32)> = (0..rng.random_range(1..6))
        .map(|_| {
            let c = [
                rng.random_range(-4.0f32..4.0),
                rng.random_range(-4.0f32..4.0),
                rng.random_range(-4.0f32..4.0),
            ];
            (c, rng.random_range(0.05f32..3.0))
        })
        .collect();
    let mut positions = Vec::with_capacity(n);
    let mut colors = Vec::with_capacity(n);
    for _ in 0..n {
        let (c, r) = clusters[rng.random_range(0..clusters.len())];
        let mut p: [f32; 3] = std::array::from_fn(|k| c[k] + rng.random_range(-r..=r));
        if rng.random_bool(0.1) {
            p = p.map(|v| (v * 4.0).round() / 4.0);
        }
        positions.push(p);
        colors.push(rng.random());
    }
    // exact duplicates exercise the averaging path
    for i in 0..n / 50 {
        let j = rng.random_range(0..positions.len());
        positions[i] = positions[j];
    }
    PointCloud::new(positions, colors).unwrap()
}

/// Camera somewhere around the origin looking roughly at it. Some draws
/// look away from the cloud entirely.
pub fn random_camera(rng: &mut ChaCha8Rng) -> CameraModel {
    let width = 16 * rng.random_range(2..=16u32);
    let height = 16 * rng.random_range(2..=12u32);
    let dir = Vector3::<f64>::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    );
    let dir = dir.try_normalize(1e-6).unwrap_or(Vector3::z());
    let eye = dir * rng.random_range(0.5..12.0);
    let target = if rng.random_bool(0.15) {
        eye * 2.0
    } else {
        Vector3::<f64>::new(
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
        )
    };
    let up = if (target - eye).normalize().y.abs() > 0.99 {
        Vector3::x()
    } else {
        Vector3::new(0.0, -1.0, 0.0)
    };
    let pose =
        RigidTransform::look_at(eye, target, up).unwrap_or_else(|_| RigidTransform::identity());
    let f = f64::from(width) * rng.random_range(0.4..2.5);
    let z_near = rng.random_range(0.05..1.5);
    let z_far = z_near + rng.random_range(1.0..30.0);
    CameraModel::new(
        f,
        f * rng.random_range(0.9..1.1),
        f64::from(width) * rng.random_range(0.3..0.7),
        f64::from(height) * rng.random_range(0.3..0.7),
        width,
        height,
        pose,
        z_near,
        z_far,
    )
    .unwrap()
}

/// Sparse depth image with blobs at several depths and scattered leaks.
pub fn random_depth(rng: &mut ChaCha8Rng, width: usize, height: usize) -> DepthImage {
    let mut data = vec![f32::INFINITY; width * height];
    let density = rng.random_range(0.05..1.0);
    let layers: Vec<f32> = (0..rng.random_range(1..5))
        .map(|_| rng.random_range(0.3f32..60.0))
        .collect();
    for (i, d) in data.iter_mut().enumerate() {
        if rng.random_bool(density) {
            let (x, y) = (i % width, i / width);
            let layer = (x * layers.len() / width + y * 7 / height) % layers.len();
            *d = layers[layer] * rng.random_range(0.97f32..1.03);
        }
    }
    DepthImage {
        width,
        height,
        data,
    }
}

pub fn random_filter_params(rng: &mut ChaCha8Rng, width: usize, height: usize) -> FilterParams {
    let max = FilterParams::max_levels(width, height).max(1);
    FilterParams {
        levels_n: rng.random_range(1..=max.min(6)),
        filter_strength: rng.random_range(0.0..1.0),
        edge_threshold: rng.random_range(0.05..2.0),
    }
}

/// Straightforward restatement of the hierarchical filter, written for
/// clarity rather than speed. Returns the keep mask.
pub mod reference {
    use lidarsplat_core::{DepthImage, FilterParams};

    type Img = (usize, usize, Vec<f64>);

    fn at(img: &Img, x: isize, y: isize) -> Option<f64> {
        let (w, h, d) = img;
        if x < 0 || y < 0 || x as usize >= *w || y as usize >= *h {
            return None;
        }
        Some(d[y as usize * w + x as usize])
    }

    /// Level `k` pixel = min over the `2^k` block of the input.
    fn pooled(input: &Img, k: u32) -> Img {
        let (w, h, _) = input;
        let s = 1usize << k;
        let (pw, ph) = (w.div_ceil(s), h.div_ceil(s));
        let mut out = vec![f64::INFINITY; pw * ph];
        for y in 0..*h {
            for x in 0..*w {
                let o = &mut out[(y / s) * pw + x / s];
                *o = o.min(input.2[y * w + x]);
            }
        }
        (pw, ph, out)
    }

    fn is_edge(img: &Img, x: usize, y: usize, thr: f64) -> bool {
        let c = at(img, x as isize, y as isize).unwrap();
        if !c.is_finite() {
            return false;
        }
        let mut sum = 0.0;
        for (dx, dy) in [(-1, 0), (1, 0), (0, -1), (0, 1)] {
            let v = at(img, x as isize + dx, y as isize + dy).filter(|v| v.is_finite());
            sum += v.unwrap_or(c);
        }
        (sum - 4.0 * c).abs() > thr * c
    }

    fn bilinear(img: &Img, fx: usize, fy: usize) -> f64 {
        let (w, h, _) = img;
        let sx = (fx as f64 + 0.5) / 2.0 - 0.5;
        let sy = (fy as f64 + 0.5) / 2.0 - 0.5;
        let (x0, y0) = (sx.floor(), sy.floor());
        let (tx, ty) = (sx - x0, sy - y0);
        let mut num = 0.0;
        let mut den = 0.0;
        for (dy, wy) in [(0.0, 1.0 - ty), (1.0, ty)] {
            for (dx, wx) in [(0.0, 1.0 - tx), (1.0, tx)] {
                let cx = (x0 + dx).clamp(0.0, (*w - 1) as f64) as usize;
                let cy = (y0 + dy).clamp(0.0, (*h - 1) as f64) as usize;
                let v = img.2[cy * w + cx];
                if wx * wy > 0.0 && v.is_finite() {
                    num += wx * wy * v;
                    den += wx * wy;
                }
            }
        }
        if den > 0.0 {
            // match the f32 storage of intermediate levels
            (num / den) as f32 as f64
        } else {
            f64::INFINITY
        }
    }

    pub fn keep_mask(depth: &DepthImage, p: &FilterParams) -> Vec<bool> {
        let input: Img = (
            depth.width,
            depth.height,
            depth
                .data
                .iter()
                .map(|&d| {
                    if d > 0.0 && d.is_finite() {
                        f64::from(d)
                    } else {
                        f64::INFINITY
                    }
                })
                .collect(),
        );
        let n = p.levels_n as u32;
        let mut up = pooled(&input, n);
        let mut kept = Vec::new();
        for k in (0..n).rev() {
            let fine = pooled(&input, k);
            let (w, h, _) = fine;
            let mut next = vec![f64::INFINITY; w * h];
            kept = vec![false; w * h];
            for y in 0..h {
                for x in 0..w {
                    let f = fine.2[y * w + x];
                    if !f.is_finite() {
                        continue;
                    }
                    let (px, py) = (x / 2, y / 2);
                    let mut refs = vec![at(&up, px as isize, py as isize).unwrap()];
                    if is_edge(&up, px, py, p.edge_threshold) {
                        for dy in -1..=1 {
                            for dx in -1..=1 {
                                if let Some(v) = at(&up, px as isize + dx, py as isize + dy) {
                                    refs.push(v);
                                }
                            }
                        }
                    }
                    if refs
                        .iter()
                        .any(|&r| r.is_finite() && f - r <= p.filter_strength * r)
                    {
                        kept[y * w + x] = true;
                        next[y * w + x] = f;
                    }
                }
            }
            if k > 0 {
                for y in 0..h {
                    for x in 0..w {
                        if !kept[y * w + x] {
                            next[y * w + x] = bilinear(&up, x, y);
                        }
                    }
                }
            }
            up = (w, h, next);
        }
        kept
    }
}
