//! Python bindings: clouds, cameras, rendering, the depth filter, metrics
//! and frame I/O. Images cross the boundary as numpy arrays shaped
//! `(height, width[, 3])`.

use std::collections::BTreeMap;

use lidarsplat_core::camera::{DEFAULT_Z_FAR, DEFAULT_Z_NEAR};
use lidarsplat_core::io::frame_io;
use lidarsplat_core::io::tensor::{read_raw_tensor, write_rgbda_tensor};
use lidarsplat_core::io::{load_cameras, load_ply, write_ply, PlyFormat};
use lidarsplat_core::metrics::psnr_image;
use lidarsplat_core::{
    build_grid, depth_filter as core_filter, project_points, ssim_image, BridgeClient, CameraModel,
    ColorImage, FilterParams, FrameRGBDA, PointCloud, RawTensorFrame, RenderParams, RigidTransform,
    UniformGrid,
};
use numpy::ndarray::{Array2, Array3};
use numpy::{IntoPyArray, PyArray2, PyArray3, PyReadonlyArray2, PyReadonlyArray3};
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn os_err(e: impl std::fmt::Display) -> PyErr {
    PyOSError::new_err(e.to_string())
}

#[pyclass(name = "PointCloud", module = "lidarsplat")]
struct PyPointCloud {
    inner: PointCloud,
}

#[pymethods]
impl PyPointCloud {
    /// `positions` is `(N, 3)` float32 meters, `colors` `(N, 3)` uint8.
    #[new]
    fn new(
        positions: PyReadonlyArray2<'_, f32>,
        colors: PyReadonlyArray2<'_, u8>,
    ) -> PyResult<Self> {
        let p = positions.as_array();
        let c = colors.as_array();
        if p.ncols() != 3 || c.ncols() != 3 {
            return Err(value_err("positions and colors must have 3 columns"));
        }
        let pos = p.rows().into_iter().map(|r| [r[0], r[1], r[2]]).collect();
        let col = c.rows().into_iter().map(|r| [r[0], r[1], r[2]]).collect();
        Ok(Self {
            inner: PointCloud::new(pos, col).map_err(value_err)?,
        })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self {
            inner: load_ply(path).map_err(os_err)?,
        })
    }

    #[pyo3(signature = (path, binary = true))]
    fn save(&self, path: &str, binary: bool) -> PyResult<()> {
        let format = if binary {
            PlyFormat::BinaryLittleEndian
        } else {
            PlyFormat::Ascii
        };
        write_ply(path, &self.inner, format).map_err(os_err)
    }

    fn __len__(&self) -> usize {
        self.inner.count()
    }

    #[getter]
    fn positions<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray2<f32>> {
        let flat: Vec<f32> = self.inner.positions().iter().flatten().copied().collect();
        Array2::from_shape_vec((self.inner.count(), 3), flat)
            .unwrap()
            .into_pyarray(py)
    }

    #[getter]
    fn colors<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray2<u8>> {
        let flat: Vec<u8> = self.inner.colors().iter().flatten().copied().collect();
        Array2::from_shape_vec((self.inner.count(), 3), flat)
            .unwrap()
            .into_pyarray(py)
    }

    fn __repr__(&self) -> String {
        format!("PointCloud(count={})", self.inner.count())
    }
}

#[pyclass(name = "Camera", module = "lidarsplat")]
struct PyCamera {
    inner: CameraModel,
}

#[pymethods]
impl PyCamera {
    /// `world_to_camera` is a 4x4 rigid transform; defaults to identity.
    #[new]
    #[pyo3(signature = (fx, fy, cx, cy, width, height, world_to_camera = None, z_near = DEFAULT_Z_NEAR, z_far = DEFAULT_Z_FAR))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
        world_to_camera: Option<PyReadonlyArray2<'_, f64>>,
        z_near: f64,
        z_far: f64,
    ) -> PyResult<Self> {
        let pose = match world_to_camera {
            None => RigidTransform::identity(),
            Some(m) => {
                let m = m.as_array();
                if m.dim() != (4, 4) {
                    return Err(value_err("world_to_camera must be 4x4"));
                }
                let mut rows = [0.0; 16];
                for (dst, src) in rows.iter_mut().zip(m.iter()) {
                    *dst = *src;
                }
                RigidTransform::from_row_major(&rows, 1e-5).map_err(value_err)?
            }
        };
        Ok(Self {
            inner: CameraModel::new(fx, fy, cx, cy, width, height, pose, z_near, z_far)
                .map_err(value_err)?,
        })
    }

    #[getter]
    fn width(&self) -> u32 {
        self.inner.width
    }

    #[getter]
    fn height(&self) -> u32 {
        self.inner.height
    }

    #[getter]
    fn world_to_camera<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray2<f64>> {
        let rows = self.inner.world_to_camera.to_row_major().to_vec();
        Array2::from_shape_vec((4, 4), rows)
            .unwrap()
            .into_pyarray(py)
    }

    fn __repr__(&self) -> String {
        let c = &self.inner;
        format!(
            "Camera({}x{}, fx={}, fy={}, cx={}, cy={})",
            c.width, c.height, c.fx, c.fy, c.cx, c.cy
        )
    }
}

/// Loads a camera JSON file into `{id: Camera}`.
#[pyfunction]
#[pyo3(signature = (path, z_near = DEFAULT_Z_NEAR, z_far = DEFAULT_Z_FAR))]
fn load_camera_set(path: &str, z_near: f64, z_far: f64) -> PyResult<BTreeMap<String, PyCamera>> {
    let set = load_cameras(path, z_near, z_far).map_err(os_err)?;
    Ok(set
        .ids()
        .into_iter()
        .map(|id| {
            (
                id.to_string(),
                PyCamera {
                    inner: *set.get(id).unwrap(),
                },
            )
        })
        .collect())
}

#[pyclass(name = "Frame", module = "lidarsplat")]
struct PyFrame {
    inner: FrameRGBDA,
}

fn rgb_array(width: usize, height: usize, rgb: &[[f32; 3]]) -> Array3<f32> {
    Array3::from_shape_vec((height, width, 3), rgb.iter().flatten().copied().collect()).unwrap()
}

fn color_from_array(a: &PyReadonlyArray3<'_, f32>) -> PyResult<ColorImage> {
    let a = a.as_array();
    let (h, w, c) = a.dim();
    if c != 3 {
        return Err(value_err("expected an (H, W, 3) array"));
    }
    let data = a.as_standard_layout();
    let data = data
        .as_slice()
        .unwrap()
        .chunks_exact(3)
        .map(|p| [p[0], p[1], p[2]])
        .collect();
    Ok(ColorImage {
        width: w,
        height: h,
        data,
    })
}

#[pymethods]
impl PyFrame {
    /// Builds a frame from `(H, W, 3)` color, `(H, W)` depth and `(H, W)`
    /// mask arrays; the channel coupling rules are checked.
    #[new]
    fn new(
        rgb: PyReadonlyArray3<'_, f32>,
        depth: PyReadonlyArray2<'_, f32>,
        alpha: PyReadonlyArray2<'_, u8>,
    ) -> PyResult<Self> {
        let color = color_from_array(&rgb)?;
        let d = depth.as_array();
        let a = alpha.as_array();
        if d.dim() != (color.height, color.width) || a.dim() != d.dim() {
            return Err(value_err("rgb, depth and alpha shapes disagree"));
        }
        let frame = FrameRGBDA {
            width: color.width,
            height: color.height,
            rgb: color.data,
            depth: d.iter().copied().collect(),
            alpha: a.iter().copied().collect(),
        };
        frame
            .check_invariants()
            .map_err(|(i, why)| value_err(format!("pixel {i}: {why}")))?;
        Ok(Self { inner: frame })
    }

    #[staticmethod]
    fn read(base: &str) -> PyResult<Self> {
        Ok(Self {
            inner: frame_io::read_frame(base).map_err(os_err)?,
        })
    }

    /// Writes `<base>.png`, `<base>.pfm` and `<base>.a.png`.
    fn write(&self, base: &str) -> PyResult<()> {
        frame_io::write_frame(&self.inner, base).map_err(os_err)
    }

    /// Serializes as an RGBDA raw tensor message.
    fn to_tensor_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        let mut buf = Vec::new();
        write_rgbda_tensor(&mut buf, &self.inner).unwrap();
        PyBytes::new(py, &buf)
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height
    }

    #[getter]
    fn rgb<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray3<f32>> {
        rgb_array(self.inner.width, self.inner.height, &self.inner.rgb).into_pyarray(py)
    }

    #[getter]
    fn depth<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray2<f32>> {
        Array2::from_shape_vec(
            (self.inner.height, self.inner.width),
            self.inner.depth.clone(),
        )
        .unwrap()
        .into_pyarray(py)
    }

    #[getter]
    fn alpha<'py>(&self, py: Python<'py>) -> Bound<'py, PyArray2<u8>> {
        Array2::from_shape_vec(
            (self.inner.height, self.inner.width),
            self.inner.alpha.clone(),
        )
        .unwrap()
        .into_pyarray(py)
    }

    fn filled_count(&self) -> usize {
        self.inner.filled_count()
    }

    fn __repr__(&self) -> String {
        format!(
            "Frame({}x{}, filled={})",
            self.inner.width,
            self.inner.height,
            self.inner.filled_count()
        )
    }
}

/// Decodes an RGB0 raw tensor message into an `(H, W, 3)` array.
#[pyfunction]
fn color_from_tensor_bytes<'py>(
    py: Python<'py>,
    data: &[u8],
) -> PyResult<Bound<'py, PyArray3<f32>>> {
    let tensor: RawTensorFrame = read_raw_tensor(data).map_err(value_err)?;
    let image = tensor.to_color().map_err(value_err)?;
    Ok(rgb_array(image.width, image.height, &image.data).into_pyarray(py))
}

/// A cloud with its culling grid, ready to render from any camera.
#[pyclass(name = "Renderer", module = "lidarsplat")]
struct PyRenderer {
    cloud: PointCloud,
    grid: UniformGrid,
    params: RenderParams,
}

#[pymethods]
impl PyRenderer {
    #[new]
    #[pyo3(signature = (cloud, cell_size = 1.0, zbuffer_epsilon_rel = 0.01))]
    fn new(
        cloud: PyRef<'_, PyPointCloud>,
        cell_size: f64,
        zbuffer_epsilon_rel: f64,
    ) -> PyResult<Self> {
        let params = RenderParams {
            zbuffer_epsilon_rel,
            cell_size,
        };
        params.validate().map_err(value_err)?;
        let grid = build_grid(&cloud.inner, cell_size).map_err(value_err)?;
        Ok(Self {
            cloud: cloud.inner.clone(),
            grid,
            params,
        })
    }

    fn render(&self, py: Python<'_>, camera: PyRef<'_, PyCamera>) -> PyFrame {
        let camera = camera.inner;
        let frame = py.detach(|| project_points(&self.cloud, &self.grid, &camera, &self.params));
        PyFrame { inner: frame }
    }
}

#[pyfunction]
#[pyo3(signature = (frame, levels = 4, filter_strength = 0.1, edge_threshold = 0.25))]
fn depth_filter(
    py: Python<'_>,
    frame: PyRef<'_, PyFrame>,
    levels: usize,
    filter_strength: f64,
    edge_threshold: f64,
) -> PyResult<PyFrame> {
    let params = FilterParams {
        levels_n: levels,
        filter_strength,
        edge_threshold,
    };
    let input = &frame.inner;
    let out = py
        .detach(|| core_filter(input, &params))
        .map_err(value_err)?;
    Ok(PyFrame { inner: out })
}

/// Sends a frame to a reconstruction service and returns the RGB reply.
#[pyfunction]
#[pyo3(signature = (endpoint, frame, timeout_ms = 500))]
fn reconstruct<'py>(
    py: Python<'py>,
    endpoint: &str,
    frame: PyRef<'_, PyFrame>,
    timeout_ms: u64,
) -> PyResult<Bound<'py, PyArray3<f32>>> {
    let client = BridgeClient::new(endpoint, std::time::Duration::from_millis(timeout_ms))
        .map_err(value_err)?;
    let input = &frame.inner;
    let image = py.detach(|| client.reconstruct(input)).map_err(os_err)?;
    Ok(rgb_array(image.width, image.height, &image.data).into_pyarray(py))
}

#[pyfunction]
fn psnr(a: PyReadonlyArray3<'_, f32>, b: PyReadonlyArray3<'_, f32>) -> PyResult<f64> {
    psnr_image(&color_from_array(&a)?, &color_from_array(&b)?).map_err(value_err)
}

#[pyfunction]
fn ssim(a: PyReadonlyArray3<'_, f32>, b: PyReadonlyArray3<'_, f32>) -> PyResult<f64> {
    ssim_image(&color_from_array(&a)?, &color_from_array(&b)?).map_err(value_err)
}

/// The synthetic occlusion scene: a striped back plane seen through a
/// checkerboard front plane. Returns `(cloud, camera)`.
#[pyfunction]
#[pyo3(signature = (width = 128, height = 96, levels = 3))]
fn two_plane_scene(width: u32, height: u32, levels: usize) -> PyResult<(PyPointCloud, PyCamera)> {
    let scene =
        lidarsplat_core::scene::two_plane_scene(width, height, levels).map_err(value_err)?;
    Ok((
        PyPointCloud { inner: scene.cloud },
        PyCamera {
            inner: scene.camera,
        },
    ))
}

#[pymodule]
fn lidarsplat(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPointCloud>()?;
    m.add_class::<PyCamera>()?;
    m.add_class::<PyFrame>()?;
    m.add_class::<PyRenderer>()?;
    m.add_function(wrap_pyfunction!(load_camera_set, m)?)?;
    m.add_function(wrap_pyfunction!(depth_filter, m)?)?;
    m.add_function(wrap_pyfunction!(reconstruct, m)?)?;
    m.add_function(wrap_pyfunction!(color_from_tensor_bytes, m)?)?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(ssim, m)?)?;
    m.add_function(wrap_pyfunction!(two_plane_scene, m)?)?;
    Ok(())
}
