use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tile::ImageTile;

/// Forward-difference gradient magnitudes of an `M`x`N` image, stored as an
/// `(M-1)`x`(N-1)` row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl GradientMap {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::Shape(format!(
                "gradient map has {} values, expected {height}x{width}",
                values.len()
            )));
        }
        if values.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Pixel("gradient magnitudes must be >= 0".into()));
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    /// Column `j` as a vector of length `height`.
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.height).map(|i| self.get(i, j)).collect()
    }

    /// Row `i` as a slice of length `width`.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.width..(i + 1) * self.width]
    }
}

/// Horizontal and vertical forward differences at every gradient-map position.
pub(crate) fn forward_differences(img: &ImageTile) -> (Vec<f64>, Vec<f64>) {
    let (h, w) = (img.height() - 1, img.width() - 1);
    let stride = img.width();
    let px = img.pixels();
    let mut gx = Vec::with_capacity(h * w);
    let mut gy = Vec::with_capacity(h * w);
    for i in 0..h {
        for j in 0..w {
            let f = px[i * stride + j];
            gx.push(px[i * stride + j + 1] - f);
            gy.push(px[(i + 1) * stride + j] - f);
        }
    }
    (gx, gy)
}

/// Gradient map of a single-channel image:
/// `g(i,j) = sqrt((f(i,j+1)-f(i,j))^2 + (f(i+1,j)-f(i,j))^2)`.
pub fn gradient_map(img: &ImageTile) -> Result<GradientMap> {
    if img.channels() != 1 {
        return Err(Error::Channel {
            expected: 1,
            actual: img.channels(),
        });
    }
    if img.height() < 2 || img.width() < 2 {
        return Err(Error::Shape(format!(
            "gradient map needs at least 2x2, got {}x{}",
            img.height(),
            img.width()
        )));
    }
    let (gx, gy) = forward_differences(img);
    let values = gx
        .iter()
        .zip(&gy)
        .map(|(x, y)| (x * x + y * y).sqrt())
        .collect();
    Ok(GradientMap {
        height: img.height() - 1,
        width: img.width() - 1,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_has_zero_gradient() {
        let img = ImageTile::filled(4, 5, 1, 9.0).unwrap();
        let g = gradient_map(&img).unwrap();
        assert_eq!((g.height(), g.width()), (3, 4));
        assert!(g.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_by_two() {
        let img = ImageTile::from_rows(&[&[0.0, 1.0], &[2.0, 3.0]]).unwrap();
        let g = gradient_map(&img).unwrap();
        assert_eq!(g.values().len(), 1);
        assert!((g.values()[0] - 5f64.sqrt()).abs() < 1e-12);
        assert!((g.values()[0] - 2.23607).abs() < 1e-5);
    }

    #[test]
    fn ramp_has_uniform_gradient() {
        let img =
            ImageTile::from_rows(&[&[0.0, 1.0, 2.0], &[3.0, 4.0, 5.0], &[6.0, 7.0, 8.0]]).unwrap();
        let g = gradient_map(&img).unwrap();
        assert_eq!((g.height(), g.width()), (2, 2));
        for &v in g.values() {
            assert!((v - 10f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_rgb_and_tiny() {
        let rgb = ImageTile::filled(3, 3, 3, 0.0).unwrap();
        assert!(matches!(gradient_map(&rgb), Err(Error::Channel { .. })));
        let tiny = ImageTile::filled(1, 3, 1, 0.0).unwrap();
        assert!(matches!(gradient_map(&tiny), Err(Error::Shape(_))));
    }

    #[test]
    fn columns_and_rows() {
        let g = GradientMap::new(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(g.column(1), vec![2.0, 5.0]);
        assert_eq!(g.row(1), &[4.0, 5.0, 6.0]);
    }
}
