//! Uniform grid partition of a point cloud, laid out by counting sort so
//! each cell's points are one contiguous run of `point_order`.
//!
//! The grid also keeps a cell-ordered copy of positions and colors, so a
//! frame touches memory sequentially instead of chasing indices.

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::cloud::PointCloud;
use crate::error::GeometryError;
use crate::frustum::Frustum;

/// Hard cap on the number of grid cells (keeps the offset table bounded).
pub const MAX_CELLS: u128 = 1 << 26;

#[derive(Debug, Clone, PartialEq)]
pub struct UniformGrid {
    origin: [f64; 3],
    cell_size: f64,
    dims: [usize; 3],
    cell_offsets: Vec<u32>,
    point_order: Vec<u32>,
    positions: Vec<[f32; 3]>,
    colors: Vec<[u8; 3]>,
}

/// Partitions `cloud` into cubic cells of edge `cell_size` meters, anchored
/// at the component-wise minimum of the positions.
pub fn build_grid(cloud: &PointCloud, cell_size: f64) -> Result<UniformGrid, GeometryError> {
    if !(cell_size > 0.0 && cell_size.is_finite()) {
        return Err(GeometryError::InvalidCellSize(cell_size));
    }
    if let Some(index) = cloud
        .positions()
        .iter()
        .position(|p| !p.iter().all(|c| c.is_finite()))
    {
        return Err(GeometryError::InvalidPoint { index });
    }
    let (origin, max) = cloud.bounds().ok_or(GeometryError::EmptyCloud)?;
    if cloud.count() >= u32::MAX as usize {
        return Err(GeometryError::CloudTooLarge(cloud.count()));
    }

    let mut dims = [1usize; 3];
    let mut total: u128 = 1;
    for k in 0..3 {
        let cells = ((max[k] - origin[k]) / cell_size).ceil().max(1.0);
        if cells > MAX_CELLS as f64 {
            return Err(GeometryError::GridTooLarge(cells as u128));
        }
        dims[k] = cells as usize;
        total *= dims[k] as u128;
    }
    if total > MAX_CELLS {
        return Err(GeometryError::GridTooLarge(total));
    }

    let mut grid = UniformGrid {
        origin,
        cell_size,
        dims,
        cell_offsets: Vec::new(),
        point_order: Vec::new(),
        positions: Vec::new(),
        colors: Vec::new(),
    };
    let cells: Vec<u32> = cloud
        .positions()
        .par_iter()
        .map(|p| grid.cell_of(p) as u32)
        .collect();

    let n_cells = total as usize;
    let mut offsets = vec![0u32; n_cells + 1];
    for &c in &cells {
        offsets[c as usize + 1] += 1;
    }
    for i in 0..n_cells {
        offsets[i + 1] += offsets[i];
    }
    let mut cursor = offsets.clone();
    let mut order = vec![0u32; cells.len()];
    for (i, &c) in cells.iter().enumerate() {
        let slot = &mut cursor[c as usize];
        order[*slot as usize] = i as u32;
        *slot += 1;
    }
    grid.positions = order
        .par_iter()
        .map(|&i| cloud.positions()[i as usize])
        .collect();
    grid.colors = order
        .par_iter()
        .map(|&i| cloud.colors()[i as usize])
        .collect();
    grid.cell_offsets = offsets;
    grid.point_order = order;
    Ok(grid)
}

/// Free-function form of [`UniformGrid::cull_cells`].
pub fn cull_cells(grid: &UniformGrid, frustum: &Frustum) -> Vec<usize> {
    grid.cull_cells(frustum)
}

impl UniformGrid {
    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn cell_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn cell_offsets(&self) -> &[u32] {
        &self.cell_offsets
    }

    pub fn point_order(&self) -> &[u32] {
        &self.point_order
    }

    /// Linear cell index holding a position (clamped into the grid).
    pub fn cell_of(&self, p: &[f32; 3]) -> usize {
        let mut idx = [0usize; 3];
        for k in 0..3 {
            let t = ((f64::from(p[k]) - self.origin[k]) / self.cell_size).floor();
            idx[k] = if t <= 0.0 {
                0
            } else {
                (t as usize).min(self.dims[k] - 1)
            };
        }
        self.linear_index(idx)
    }

    pub fn linear_index(&self, [x, y, z]: [usize; 3]) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    pub fn cell_coords(&self, cell: usize) -> [usize; 3] {
        let x = cell % self.dims[0];
        let yz = cell / self.dims[0];
        [x, yz % self.dims[1], yz / self.dims[1]]
    }

    /// Point indices stored in `cell`.
    pub fn cell_points(&self, cell: usize) -> &[u32] {
        let lo = self.cell_offsets[cell] as usize;
        let hi = self.cell_offsets[cell + 1] as usize;
        &self.point_order[lo..hi]
    }

    pub fn point_count(&self) -> usize {
        self.point_order.len()
    }

    fn cell_range(&self, cell: usize) -> std::ops::Range<usize> {
        self.cell_offsets[cell] as usize..self.cell_offsets[cell + 1] as usize
    }

    /// Positions of the points in `cell`, in `cell_points` order.
    pub fn cell_positions(&self, cell: usize) -> &[[f32; 3]] {
        &self.positions[self.cell_range(cell)]
    }

    pub fn cell_colors(&self, cell: usize) -> &[[u8; 3]] {
        &self.colors[self.cell_range(cell)]
    }

    /// Axis-aligned bounds of `cell`, padded by a small margin so points
    /// assigned by the floor rule are always inside despite rounding.
    pub fn cell_bounds(&self, cell: usize) -> (Vector3<f64>, Vector3<f64>) {
        let c = self.cell_coords(cell);
        let scale = self
            .origin
            .iter()
            .map(|o| o.abs())
            .fold(self.cell_size, f64::max);
        let margin = 1e-6 * self.cell_size + 1e-9 * scale;
        let lo = Vector3::from_fn(|k, _| self.origin[k] + c[k] as f64 * self.cell_size - margin);
        let hi =
            Vector3::from_fn(|k, _| self.origin[k] + (c[k] + 1) as f64 * self.cell_size + margin);
        (lo, hi)
    }

    /// Occupied cells whose bounds intersect the frustum.
    ///
    /// Conservative: whole cells are accepted, the exact per-point clip
    /// happens during projection. Empty cells are never returned.
    pub fn cull_cells(&self, frustum: &Frustum) -> Vec<usize> {
        (0..self.cell_count())
            .filter(|&c| self.cell_offsets[c] != self.cell_offsets[c + 1])
            .filter(|&c| {
                let (lo, hi) = self.cell_bounds(c);
                frustum.intersects_aabb(&lo, &hi)
            })
            .collect()
    }

    /// Occupied cells, in index order.
    pub fn occupied_cells(&self) -> Vec<usize> {
        (0..self.cell_count())
            .filter(|&c| self.cell_offsets[c] != self.cell_offsets[c + 1])
            .collect()
    }
}
