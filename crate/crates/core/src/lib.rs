//! Real-time rendering of large colored LiDAR point clouds.
//!
//! The pipeline culls a uniform grid against the view frustum, projects the
//! surviving points as single pixels with a soft z-buffer, and removes
//! background points that leak between foreground pixels with a
//! hierarchical depth filter. The resulting RGB + depth + fill-mask frames
//! feed a neural reconstruction service through a small framed protocol,
//! and can be turned into synthetic training pairs.

pub mod bench;
pub mod bridge;
pub mod camera;
pub mod cloud;
pub mod dataset;
pub mod depth_filter;
pub mod error;
pub mod frame;
pub mod frustum;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod render;
pub mod scene;

pub use bench::{run_bench, BenchReport};
pub use bridge::BridgeClient;
pub use camera::{CameraModel, RigidTransform};
pub use cloud::PointCloud;
pub use dataset::{generate_dataset, AugmentParams, TrainingPair};
pub use depth_filter::{depth_filter, DepthPyramid, EdgeMask, FilterParams};
pub use error::{FilterError, GeometryError};
pub use frame::{ColorImage, DepthImage, FrameRGBDA};
pub use frustum::{extract_frustum, Frustum};
pub use grid::{build_grid, UniformGrid};
pub use io::{DatasetManifest, DatasetMode, RawTensorFrame};
pub use metrics::{psnr, ssim_image};
pub use render::{project_points, RenderParams};
