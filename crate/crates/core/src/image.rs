use std::ops::Deref;

use ndarray::Array2;

use crate::error::{Error, Result};

/// A real-valued intensity grid, nominally normalized to `[0, 1]`.
///
/// Row index is the frequency-encode direction, column index the
/// phase-encode direction.
#[derive(Debug, Clone, PartialEq)]
pub struct Image(Array2<f64>);

impl Image {
    pub fn new(data: Array2<f64>) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Image("image has no pixels".into()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Image("image contains non-finite values".into()));
        }
        Ok(Self(data))
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self(Array2::zeros((height, width)))
    }

    pub fn height(&self) -> usize {
        self.0.nrows()
    }

    pub fn width(&self) -> usize {
        self.0.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.dim()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_array(self) -> Array2<f64> {
        self.0
    }

    /// Copy with every pixel clamped into `[lo, hi]`.
    pub fn clipped(&self, lo: f64, hi: f64) -> Image {
        Image(self.0.mapv(|v| v.clamp(lo, hi)))
    }
}

impl Deref for Image {
    type Target = Array2<f64>;

    fn deref(&self) -> &Array2<f64> {
        &self.0
    }
}

impl From<Image> for Array2<f64> {
    fn from(img: Image) -> Self {
        img.0
    }
}
