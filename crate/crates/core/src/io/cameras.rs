//! Camera trajectory files.
//!
//! ```json
//! {"intrinsics": {"fx": 500, "fy": 500, "cx": 320, "cy": 240, "width": 640, "height": 480},
//!  "frames": [{"id": "000", "camera_to_world": [1,0,0,0, 0,1,0,0, 0,0,1,0, 0,0,0,1]}]}
//! ```
//!
//! Poses are camera-to-world, row-major 4x4, camera axes +x right, +y down,
//! +z forward.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::IoError;
use crate::camera::{CameraModel, RigidTransform};

/// Rotation tolerance accepted when reading poses from text.
pub const POSE_TOLERANCE: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FrameRecord {
    id: String,
    camera_to_world: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CameraFile {
    intrinsics: Intrinsics,
    frames: Vec<FrameRecord>,
}

/// Shared intrinsics plus an ordered list of named poses.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraSet {
    pub intrinsics: Intrinsics,
    pub frames: Vec<(String, CameraModel)>,
}

impl CameraSet {
    pub fn ids(&self) -> Vec<&str> {
        self.frames.iter().map(|(id, _)| id.as_str()).collect()
    }

    pub fn get(&self, id: &str) -> Option<&CameraModel> {
        self.frames.iter().find(|(f, _)| f == id).map(|(_, c)| c)
    }
}

pub fn parse_cameras(text: &str, z_near: f64, z_far: f64) -> Result<CameraSet, String> {
    let file: CameraFile = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let k = file.intrinsics;
    let mut seen = HashSet::new();
    let mut frames = Vec::with_capacity(file.frames.len());
    for rec in file.frames {
        if !seen.insert(rec.id.clone()) {
            return Err(format!("duplicate frame id \"{}\"", rec.id));
        }
        let m: [f64; 16] = rec.camera_to_world.as_slice().try_into().map_err(|_| {
            format!(
                "frame \"{}\": camera_to_world needs 16 numbers, got {}",
                rec.id,
                rec.camera_to_world.len()
            )
        })?;
        let c2w = RigidTransform::from_row_major(&m, POSE_TOLERANCE)
            .map_err(|e| format!("frame \"{}\": {e}", rec.id))?;
        let cam = CameraModel::new(
            k.fx,
            k.fy,
            k.cx,
            k.cy,
            k.width,
            k.height,
            c2w.inverse(),
            z_near,
            z_far,
        )
        .map_err(|e| format!("frame \"{}\": {e}", rec.id))?;
        frames.push((rec.id, cam));
    }
    Ok(CameraSet {
        intrinsics: k,
        frames,
    })
}

/// Loads a camera file; clip depths are not part of the format.
pub fn load_cameras(path: impl AsRef<Path>, z_near: f64, z_far: f64) -> Result<CameraSet, IoError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| IoError::file(path, e))?;
    parse_cameras(&text, z_near, z_far).map_err(|e| IoError::format(path, e))
}

pub fn cameras_to_json(set: &CameraSet) -> String {
    let file = CameraFile {
        intrinsics: set.intrinsics,
        frames: set
            .frames
            .iter()
            .map(|(id, cam)| FrameRecord {
                id: id.clone(),
                camera_to_world: cam.world_to_camera.inverse().to_row_major().to_vec(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("camera file serializes")
}

pub fn write_cameras(path: impl AsRef<Path>, set: &CameraSet) -> Result<(), IoError> {
    let path = path.as_ref();
    fs::write(path, cameras_to_json(set)).map_err(|e| IoError::file(path, e))
}
