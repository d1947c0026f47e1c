//! Gradient maps, edge maps and correlation statistics.

mod canny;
mod correlation;
mod gradient;

pub use canny::{canny_edges, CannyParams};
pub use correlation::{
    moments, stabilized_abs_correlation, stabilized_abs_correlation_with, CorrelationTerms, Moments,
};
pub use gradient::{gradient_map, GradientMap};
pub(crate) use gradient::forward_differences;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major (progressive scan) flattening of a 2-D map.
pub trait ProgressiveScan {
    fn dims(&self) -> (usize, usize);

    fn flatten_progressive(&self) -> Vec<f64>;
}

/// Binary edge image; every value is 0 or 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeMap {
    height: usize,
    width: usize,
    values: Vec<u8>,
}

impl EdgeMap {
    pub fn new(height: usize, width: usize, values: Vec<u8>) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::Shape(format!(
                "edge map has {} values, expected {height}x{width}",
                values.len()
            )));
        }
        if values.iter().any(|&v| v > 1) {
            return Err(Error::Pixel("edge map values must be 0 or 1".into()));
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    /// Inverse of [`ProgressiveScan::flatten_progressive`].
    pub fn from_progressive(height: usize, width: usize, flat: &[f64]) -> Result<Self> {
        let values = flat
            .iter()
            .map(|&v| match v {
                v if v == 0.0 => Ok(0),
                v if v == 1.0 => Ok(1),
                v => Err(Error::Pixel(format!("edge value {v} is not binary"))),
            })
            .collect::<Result<Vec<u8>>>()?;
        Self::new(height, width, values)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.values[row * self.width + col]
    }

    /// Fraction of edge pixels.
    pub fn density(&self) -> f64 {
        self.values.iter().map(|&v| f64::from(v)).sum::<f64>() / self.values.len() as f64
    }
}

impl ProgressiveScan for EdgeMap {
    fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    fn flatten_progressive(&self) -> Vec<f64> {
        self.values.iter().map(|&v| f64::from(v)).collect()
    }
}

impl ProgressiveScan for GradientMap {
    fn dims(&self) -> (usize, usize) {
        (self.height(), self.width())
    }

    fn flatten_progressive(&self) -> Vec<f64> {
        self.values().to_vec()
    }
}
