//! Pinhole camera model and rigid poses.
//!
//! Camera frame convention: +x right, +y down, +z forward. A camera-frame
//! point `(X, Y, Z)` lands at continuous pixel coordinates
//! `(fx * X / Z + cx, fy * Y / Z + cy)`; the integer pixel is the floor of
//! those coordinates, so pixel `(u, v)` has its center at `(u + 0.5, v + 0.5)`.

use nalgebra::{Matrix3, Vector3};

use crate::error::GeometryError;

const ORTHONORMAL_TOL: f64 = 1e-6;

/// Rotation followed by translation: `p' = R * p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl RigidTransform {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        if !rotation
            .iter()
            .chain(translation.iter())
            .all(|v| v.is_finite())
        {
            return Err(GeometryError::InvalidTransform("non-finite entry".into()));
        }
        let gram = rotation.transpose() * rotation;
        let dev = (gram - Matrix3::identity()).amax();
        if dev > ORTHONORMAL_TOL {
            return Err(GeometryError::InvalidTransform(format!(
                "rotation is not orthonormal (max deviation {dev:e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(GeometryError::InvalidTransform(format!(
                "rotation determinant is {det}, expected +1"
            )));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Parses a row-major 4x4 matrix whose last row must be `[0, 0, 0, 1]`.
    ///
    /// Rotations that are orthonormal to within `tolerance` are snapped to
    /// the nearest proper rotation, so text files with limited precision
    /// still load.
    pub fn from_row_major(m: &[f64; 16], tolerance: f64) -> Result<Self, GeometryError> {
        let bottom = [m[12], m[13], m[14], m[15]];
        if bottom != [0.0, 0.0, 0.0, 1.0] {
            return Err(GeometryError::InvalidTransform(format!(
                "last row must be [0, 0, 0, 1], got {bottom:?}"
            )));
        }
        let rotation = Matrix3::new(m[0], m[1], m[2], m[4], m[5], m[6], m[8], m[9], m[10]);
        let translation = Vector3::new(m[3], m[7], m[11]);
        if !rotation.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::InvalidTransform("non-finite entry".into()));
        }
        let dev = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        if dev > tolerance || (rotation.determinant() - 1.0).abs() > tolerance {
            return Err(GeometryError::InvalidTransform(format!(
                "rotation is not a proper rotation within {tolerance:e}"
            )));
        }
        Self::new(orthonormalize(&rotation), translation)
    }

    pub fn to_row_major(&self) -> [f64; 16] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            t.x,
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            t.y,
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            t.z,
            0.0,
            0.0,
            0.0,
            1.0,
        ]
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    #[inline]
    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// World-to-camera pose of a camera at `eye` looking at `target`.
    ///
    /// `up` is the world direction that should appear upward in the image.
    pub fn look_at(
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
    ) -> Result<Self, GeometryError> {
        let forward = (target - eye)
            .try_normalize(1e-12)
            .ok_or_else(|| GeometryError::InvalidTransform("eye equals target".into()))?;
        let right = forward
            .cross(&up)
            .try_normalize(1e-12)
            .ok_or_else(|| GeometryError::InvalidTransform("up is parallel to view".into()))?;
        let down = forward.cross(&right);
        let rotation =
            Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let translation = -(rotation * eye);
        Self::new(rotation, translation)
    }
}

/// Gram-Schmidt on the rows of `m`, producing a right-handed rotation.
fn orthonormalize(m: &Matrix3<f64>) -> Matrix3<f64> {
    let r0 = m.row(0).transpose().normalize();
    let r1 = m.row(1).transpose();
    let r1 = (r1 - r0 * r0.dot(&r1)).normalize();
    let r2 = r0.cross(&r1);
    Matrix3::from_rows(&[r0.transpose(), r1.transpose(), r2.transpose()])
}

/// A camera-frame point after perspective division.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

/// Pinhole camera with a world-to-camera pose and clip depths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub world_to_camera: RigidTransform,
    pub z_near: f64,
    pub z_far: f64,
}

pub const DEFAULT_Z_NEAR: f64 = 0.1;
pub const DEFAULT_Z_FAR: f64 = 100.0;

impl CameraModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
        world_to_camera: RigidTransform,
        z_near: f64,
        z_far: f64,
    ) -> Result<Self, GeometryError> {
        let camera = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            world_to_camera,
            z_near,
            z_far,
        };
        camera.validate()?;
        Ok(camera)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |msg: String| Err(GeometryError::InvalidCamera(msg));
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return bad(format!(
                "focal lengths must be positive, got {} {}",
                self.fx, self.fy
            ));
        }
        if !(self.cx.is_finite() && self.cy.is_finite()) {
            return bad("principal point must be finite".into());
        }
        if !(self.z_near > 0.0 && self.z_near < self.z_far && self.z_far.is_finite()) {
            return bad(format!(
                "need 0 < z_near < z_far, got {} / {}",
                self.z_near, self.z_far
            ));
        }
        for (name, dim) in [("width", self.width), ("height", self.height)] {
            if dim < 16 || dim % 16 != 0 {
                return bad(format!(
                    "{name} must be a positive multiple of 16, got {dim}"
                ));
            }
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Camera position in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        self.world_to_camera.inverse().translation
    }

    /// Perspective projection without any clipping. `None` when the point
    /// is at or behind the camera plane.
    pub fn project(&self, world: &Vector3<f64>) -> Option<Projection> {
        let pc = self.world_to_camera.apply(world);
        if pc.z <= 0.0 {
            return None;
        }
        Some(Projection {
            u: self.fx * pc.x / pc.z + self.cx,
            v: self.fy * pc.y / pc.z + self.cy,
            depth: pc.z,
        })
    }

    /// Rasterizes a world point to `(pixel index, depth)`.
    ///
    /// Points outside `[z_near, z_far]` are rejected before the division;
    /// the pixel is the floor of the continuous coordinates and must lie
    /// inside the image.
    #[inline]
    pub fn rasterize(&self, world: &Vector3<f64>) -> Option<(usize, f64)> {
        let pc = self.world_to_camera.apply(world);
        if !(pc.z >= self.z_near && pc.z <= self.z_far) {
            return None;
        }
        let u = (self.fx * pc.x / pc.z + self.cx).floor();
        let v = (self.fy * pc.y / pc.z + self.cy).floor();
        if u < 0.0 || v < 0.0 || u >= f64::from(self.width) || v >= f64::from(self.height) {
            return None;
        }
        Some((v as usize * self.width as usize + u as usize, pc.z))
    }

    /// World point seen at the center of pixel `(u, v)` at the given depth.
    pub fn unproject(&self, u: u32, v: u32, depth: f64) -> Result<Vector3<f64>, GeometryError> {
        if !(depth > 0.0) || !depth.is_finite() {
            return Err(GeometryError::NonPositiveDepth(depth));
        }
        let x = (f64::from(u) + 0.5 - self.cx) / self.fx * depth;
        let y = (f64::from(v) + 0.5 - self.cy) / self.fy * depth;
        let pc = Vector3::new(x, y, depth);
        Ok(self.world_to_camera.inverse().apply(&pc))
    }

    /// Same camera at a different pose.
    pub fn with_pose(&self, world_to_camera: RigidTransform) -> Self {
        Self {
            world_to_camera,
            ..*self
        }
    }
}
