use crate::error::GeometryError;

/// A colored point cloud stored as flat position and color arrays.
///
/// Positions are world-space meters, colors are 8-bit sRGB.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    positions: Vec<[f32; 3]>,
    colors: Vec<[u8; 3]>,
}

impl PointCloud {
    pub fn new(positions: Vec<[f32; 3]>, colors: Vec<[u8; 3]>) -> Result<Self, GeometryError> {
        if positions.len() != colors.len() {
            return Err(GeometryError::LengthMismatch {
                positions: positions.len(),
                colors: colors.len(),
            });
        }
        if let Some(index) = positions
            .iter()
            .position(|p| !p.iter().all(|c| c.is_finite()))
        {
            return Err(GeometryError::InvalidPoint { index });
        }
        Ok(Self { positions, colors })
    }

    pub fn positions(&self) -> &[[f32; 3]] {
        &self.positions
    }

    pub fn colors(&self) -> &[[u8; 3]] {
        &self.colors
    }

    pub fn count(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Component-wise minimum and maximum of all positions.
    pub fn bounds(&self) -> Option<([f64; 3], [f64; 3])> {
        let first = self.positions.first()?;
        let mut lo = first.map(f64::from);
        let mut hi = lo;
        for p in &self.positions[1..] {
            for k in 0..3 {
                let v = f64::from(p[k]);
                lo[k] = lo[k].min(v);
                hi[k] = hi[k].max(v);
            }
        }
        Some((lo, hi))
    }

    /// Returns a new cloud with points reordered so that output point `i`
    /// is input point `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            positions: order.iter().map(|&i| self.positions[i]).collect(),
            colors: order.iter().map(|&i| self.colors[i]).collect(),
        }
    }

    pub fn into_parts(self) -> (Vec<[f32; 3]>, Vec<[u8; 3]>) {
        (self.positions, self.colors)
    }
}
