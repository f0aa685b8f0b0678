//! File formats: PLY clouds, camera JSON, frame images, the raw tensor
//! framing used by the reconstruction bridge, and dataset manifests.

pub mod cameras;
pub mod frame_io;
pub mod manifest;
pub mod ply;
pub mod tensor;

use std::path::PathBuf;

use thiserror::Error;

pub use cameras::{load_cameras, write_cameras, CameraSet};
pub use frame_io::{read_color_png, read_frame, write_color_png, write_frame};
pub use manifest::{DatasetManifest, DatasetMode};
pub use ply::{load_ply, write_ply, PlyError, PlyFormat};
pub use tensor::{read_raw_tensor, write_raw_tensor, RawTensorFrame, TensorError};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    File {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
    #[error(transparent)]
    Ply(#[from] PlyError),
}

impl IoError {
    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::File {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        Self::Format {
            path: path.into(),
            message: message.to_string(),
        }
    }
}
