//! Image value model.
//!
//! Images are channel-major real arrays with every pixel in `[0, 1]`. The
//! shape is fixed per experiment; operations that accept raw arrays validate
//! against the expected shape before touching pixel values.

use ndarray::Array3;

use crate::error::{Error, Result};

/// Fixed (channels, height, width) shape of a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImageShape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl ImageShape {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn of(array: &Array3<f64>) -> Self {
        let (c, h, w) = array.dim();
        Self::new(c, h, w)
    }
}

impl std::fmt::Display for ImageShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.channels, self.height, self.width)
    }
}

/// A valid image: every value in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pixels: Array3<f64>,
}

impl Image {
    /// Wrap an array that is already within `[0, 1]`.
    pub fn new(pixels: Array3<f64>) -> Result<Self> {
        if pixels.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::param("image values must lie in [0, 1]"));
        }
        Ok(Self { pixels })
    }

    pub fn pixels(&self) -> &Array3<f64> {
        &self.pixels
    }

    pub fn into_pixels(self) -> Array3<f64> {
        self.pixels
    }

    pub fn shape(&self) -> ImageShape {
        ImageShape::of(&self.pixels)
    }
}

/// Clamp an arbitrary real array of the dataset shape into a valid image.
///
/// Rejects arrays whose shape differs from `expected`.
pub fn clip_to_valid(values: &Array3<f64>, expected: ImageShape) -> Result<Image> {
    let got = ImageShape::of(values);
    if got != expected {
        return Err(Error::shape(expected, got));
    }
    Ok(Image {
        pixels: values.mapv(|v| v.clamp(0.0, 1.0)),
    })
}
