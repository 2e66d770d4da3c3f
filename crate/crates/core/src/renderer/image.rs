use crate::linalg3::Vec3;

/// Row-major RGB float image, nominally in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    pub width: usize,
    pub height: usize,
    /// Interleaved `r, g, b` per pixel, rows top to bottom.
    pub data: Vec<f64>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0.0; width * height * 3] }
    }

    pub fn filled(width: usize, height: usize, color: Vec3) -> Self {
        let mut img = Self::new(width, height);
        for px in img.data.chunks_exact_mut(3) {
            px.copy_from_slice(color.as_slice());
        }
        img
    }

    pub fn pixel(&self, x: usize, y: usize) -> Vec3 {
        let o = (y * self.width + x) * 3;
        Vec3::new(self.data[o], self.data[o + 1], self.data[o + 2])
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, c: Vec3) {
        let o = (y * self.width + x) * 3;
        self.data[o..o + 3].copy_from_slice(c.as_slice());
    }

    pub fn same_shape(&self, other: &ImageBuffer) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Channel `c` as a row-major plane.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.data.iter().skip(c).step_by(3).copied().collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
