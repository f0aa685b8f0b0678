//! Image containers shared by every pipeline stage.

/// Five-channel render output: sRGB color in `[0, 1]`, z-depth in meters
/// (0 = empty) and a binary fill mask.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRGBDA {
    pub width: usize,
    pub height: usize,
    pub rgb: Vec<[f32; 3]>,
    pub depth: Vec<f32>,
    pub alpha: Vec<u8>,
}

impl FrameRGBDA {
    pub fn empty(width: usize, height: usize) -> Self {
        let n = width * height;
        Self {
            width,
            height,
            rgb: vec![[0.0; 3]; n],
            depth: vec![0.0; n],
            alpha: vec![0; n],
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn filled_count(&self) -> usize {
        self.alpha.iter().filter(|&&a| a == 1).count()
    }

    /// Checks the channel coupling rules, returning the first offending
    /// pixel index with a reason.
    pub fn check_invariants(&self) -> Result<(), (usize, &'static str)> {
        let n = self.pixel_count();
        if self.rgb.len() != n || self.depth.len() != n || self.alpha.len() != n {
            return Err((0, "channel length mismatch"));
        }
        for i in 0..n {
            match self.alpha[i] {
                1 if self.depth[i] > 0.0 && self.depth[i].is_finite() => {}
                1 => return Err((i, "filled pixel without positive depth")),
                0 if self.depth[i] != 0.0 => return Err((i, "empty pixel with depth")),
                0 if self.rgb[i] != [0.0; 3] => return Err((i, "empty pixel with color")),
                0 => {}
                _ => return Err((i, "alpha is not binary")),
            }
        }
        Ok(())
    }

    /// Depth channel with empty pixels mapped to `+inf`.
    pub fn depth_image(&self) -> DepthImage {
        DepthImage {
            width: self.width,
            height: self.height,
            data: self
                .depth
                .iter()
                .zip(&self.alpha)
                .map(|(&d, &a)| if a == 1 { d } else { f32::INFINITY })
                .collect(),
        }
    }

    /// Copy of this frame keeping only pixels where `keep` is true.
    pub fn masked(&self, keep: &[bool]) -> Self {
        let mut out = self.clone();
        for (i, &k) in keep.iter().enumerate() {
            if !k {
                out.rgb[i] = [0.0; 3];
                out.depth[i] = 0.0;
                out.alpha[i] = 0;
            }
        }
        out
    }

    pub fn color_image(&self) -> ColorImage {
        ColorImage {
            width: self.width,
            height: self.height,
            data: self.rgb.clone(),
        }
    }
}

/// Single-channel depth image where empty pixels hold `+inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl DepthImage {
    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    /// Builds a depth image from a 0-means-empty buffer.
    pub fn from_sparse(width: usize, height: usize, depth: &[f32]) -> Self {
        assert_eq!(depth.len(), width * height);
        Self {
            width,
            height,
            data: depth
                .iter()
                .map(|&d| if d > 0.0 { d } else { f32::INFINITY })
                .collect(),
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}

/// Three-channel sRGB image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<[f32; 3]>,
}

impl ColorImage {
    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        Self {
            width,
            height,
            data: vec![rgb; width * height],
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }
}
