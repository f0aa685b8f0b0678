use nalgebra::Vector3;

use crate::camera::CameraModel;

/// Plane `normal . p + offset = 0`; the inside is where the expression is
/// non-negative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub normal: Vector3<f64>,
    pub offset: f64,
}

impl Plane {
    fn from_camera_frame(normal: Vector3<f64>, offset: f64, camera: &CameraModel) -> Self {
        let len = normal.norm();
        let (n_cam, d_cam) = (normal / len, offset / len);
        // n.(R p + t) + d = (R^T n).p + (n.t + d)
        let pose = &camera.world_to_camera;
        Self {
            normal: pose.rotation().transpose() * n_cam,
            offset: n_cam.dot(pose.translation()) + d_cam,
        }
    }

    #[inline]
    pub fn signed_distance(&self, p: &Vector3<f64>) -> f64 {
        self.normal.dot(p) + self.offset
    }
}

/// The six inward-facing world-frame planes bounding a camera's view volume:
/// near, far, left, right, top, bottom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frustum {
    pub planes: [Plane; 6],
}

/// Builds the view frustum of `camera` from its intrinsics, image size and
/// clip depths.
pub fn extract_frustum(camera: &CameraModel) -> Frustum {
    let w = f64::from(camera.width);
    let h = f64::from(camera.height);
    let (fx, fy, cx, cy) = (camera.fx, camera.fy, camera.cx, camera.cy);
    let plane = |n: Vector3<f64>, d: f64| Plane::from_camera_frame(n, d, camera);
    Frustum {
        planes: [
            // Z >= z_near
            plane(Vector3::new(0.0, 0.0, 1.0), -camera.z_near),
            // Z <= z_far
            plane(Vector3::new(0.0, 0.0, -1.0), camera.z_far),
            // u >= 0  <=>  fx X + cx Z >= 0
            plane(Vector3::new(fx, 0.0, cx), 0.0),
            // u <= w  <=>  -fx X + (w - cx) Z >= 0
            plane(Vector3::new(-fx, 0.0, w - cx), 0.0),
            // v >= 0
            plane(Vector3::new(0.0, fy, cy), 0.0),
            // v <= h
            plane(Vector3::new(0.0, -fy, h - cy), 0.0),
        ],
    }
}

impl Frustum {
    /// True when `p` is on the inner side of every plane, allowing `slack`
    /// meters of tolerance.
    pub fn contains(&self, p: &Vector3<f64>, slack: f64) -> bool {
        self.planes.iter().all(|pl| pl.signed_distance(p) >= -slack)
    }

    /// Smallest absolute distance from `p` to any plane.
    pub fn min_plane_distance(&self, p: &Vector3<f64>) -> f64 {
        self.planes
            .iter()
            .map(|pl| pl.signed_distance(p).abs())
            .fold(f64::INFINITY, f64::min)
    }

    /// Conservative box test: false only when the box lies entirely
    /// outside at least one plane.
    pub fn intersects_aabb(&self, lo: &Vector3<f64>, hi: &Vector3<f64>) -> bool {
        self.planes.iter().all(|pl| {
            let corner = Vector3::new(
                if pl.normal.x >= 0.0 { hi.x } else { lo.x },
                if pl.normal.y >= 0.0 { hi.y } else { lo.y },
                if pl.normal.z >= 0.0 { hi.z } else { lo.z },
            );
            pl.signed_distance(&corner) >= 0.0
        })
    }
}
