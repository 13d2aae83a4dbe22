use super::math::Vec3;
use crate::error::{Error, Result};

/// Row-major image of per-pixel values.
#[derive(Clone, Debug, PartialEq)]
pub struct ImagePlane<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<T>,
}

impl<T: Clone> ImagePlane<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        ImagePlane {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for j in 0..height {
            for i in 0..width {
                data.push(f(i, j));
            }
        }
        ImagePlane { width, height, data }
    }
}

impl<T> ImagePlane<T> {
    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.width + i
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> &T {
        &self.data[j * self.width + i]
    }

    #[inline]
    pub fn get_mut(&mut self, i: usize, j: usize) -> &mut T {
        let w = self.width;
        &mut self.data[j * w + i]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn same_size<U>(&self, other: &ImagePlane<U>) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn ensure_same_size<U>(&self, other: &ImagePlane<U>, what: &str) -> Result<()> {
        if self.same_size(other) {
            Ok(())
        } else {
            Err(Error::Input(format!(
                "{what}: dimension mismatch {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )))
        }
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> ImagePlane<U> {
        ImagePlane {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }
}

pub type ColorImage = ImagePlane<Vec3>;
pub type ScalarImage = ImagePlane<f64>;

impl ColorImage {
    /// Extracts one channel as a scalar plane.
    pub fn channel(&self, c: usize) -> ScalarImage {
        self.map(|v| v[c])
    }
}
