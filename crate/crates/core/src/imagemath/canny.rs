//! Canny edge detection.
//!
//! Smoothing uses an integer-weight separable Gaussian and the magnitude
//! comparisons stay on the unnormalized integer scale, so for 8-bit inputs
//! every intermediate value is an exactly representable integer. That makes
//! the detector exactly invariant to adding a constant to the image and makes
//! non-maximum suppression ties on symmetric edges deterministic.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::EdgeMap;
use crate::error::{Error, Result};
use crate::tile::ImageTile;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CannyParams {
    /// Gaussian standard deviation in pixels.
    pub sigma: f64,
    /// Hysteresis thresholds on the Sobel magnitude of a 0..255 image.
    pub low: f64,
    pub high: f64,
}

impl Default for CannyParams {
    fn default() -> Self {
        Self {
            sigma: 1.4,
            low: 50.0,
            high: 150.0,
        }
    }
}

impl CannyParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!("canny sigma must be > 0, got {}", self.sigma)));
        }
        if !(self.low >= 0.0) || !(self.high >= 0.0) {
            return Err(Error::Config("canny thresholds must be >= 0".into()));
        }
        if self.low > self.high {
            return Err(Error::Config(format!(
                "canny low threshold {} exceeds high threshold {}",
                self.low, self.high
            )));
        }
        Ok(())
    }

    pub fn radius(&self) -> usize {
        ((1.5 * self.sigma).round() as usize).max(1)
    }

    /// Integer 1-D Gaussian taps summing to roughly 64.
    fn taps(&self) -> Vec<f64> {
        let r = self.radius() as i64;
        let raw: Vec<f64> = (-r..=r)
            .map(|k| (-((k * k) as f64) / (2.0 * self.sigma * self.sigma)).exp())
            .collect();
        let total: f64 = raw.iter().sum();
        raw.iter()
            .map(|g| (64.0 * g / total).round().max(1.0))
            .collect()
    }
}

pub fn canny_edges(img: &ImageTile, params: &CannyParams) -> Result<EdgeMap> {
    params.validate()?;
    if img.channels() != 1 {
        return Err(Error::Channel {
            expected: 1,
            actual: img.channels(),
        });
    }
    let (h, w) = (img.height(), img.width());
    let min = 2 * params.radius() + 1;
    if h < min || w < min {
        return Err(Error::Shape(format!(
            "canny with sigma {} needs at least {min}x{min}, got {h}x{w}",
            params.sigma
        )));
    }

    let taps = params.taps();
    let tap_sum: f64 = taps.iter().sum();
    let scale = tap_sum * tap_sum;

    let blurred = blur(img.pixels(), h, w, &taps);
    let (gx, gy) = sobel(&blurred, h, w);
    let sq: Vec<f64> = gx.iter().zip(&gy).map(|(x, y)| x * x + y * y).collect();
    let thin = non_maximum_suppression(&sq, &gx, &gy, h, w);

    let low = (params.low * scale).powi(2);
    let high = (params.high * scale).powi(2);
    let values = hysteresis(&thin, h, w, low, high);
    EdgeMap::new(h, w, values)
}

#[inline]
fn clamp_idx(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

/// Separable blur with replicated borders, left unnormalized.
fn blur(px: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let r = (taps.len() / 2) as isize;
    let mut tmp = vec![0.0; h * w];
    for i in 0..h {
        let row = &px[i * w..(i + 1) * w];
        for j in 0..w {
            let mut acc = 0.0;
            for (t, &k) in taps.iter().enumerate() {
                acc += k * row[clamp_idx(j as isize + t as isize - r, w)];
            }
            tmp[i * w + j] = acc;
        }
    }
    let mut out = vec![0.0; h * w];
    for i in 0..h {
        for j in 0..w {
            let mut acc = 0.0;
            for (t, &k) in taps.iter().enumerate() {
                acc += k * tmp[clamp_idx(i as isize + t as isize - r, h) * w + j];
            }
            out[i * w + j] = acc;
        }
    }
    out
}

fn sobel(b: &[f64], h: usize, w: usize) -> (Vec<f64>, Vec<f64>) {
    let at = |i: isize, j: isize| b[clamp_idx(i, h) * w + clamp_idx(j, w)];
    let mut gx = vec![0.0; h * w];
    let mut gy = vec![0.0; h * w];
    for i in 0..h as isize {
        for j in 0..w as isize {
            let idx = i as usize * w + j as usize;
            gx[idx] = (at(i - 1, j + 1) + 2.0 * at(i, j + 1) + at(i + 1, j + 1))
                - (at(i - 1, j - 1) + 2.0 * at(i, j - 1) + at(i + 1, j - 1));
            gy[idx] = (at(i + 1, j - 1) + 2.0 * at(i + 1, j) + at(i + 1, j + 1))
                - (at(i - 1, j - 1) + 2.0 * at(i - 1, j) + at(i - 1, j + 1));
        }
    }
    (gx, gy)
}

/// Keeps a pixel when its magnitude is at least the neighbor behind it and
/// strictly above the neighbor ahead along the gradient direction. The
/// asymmetric comparison collapses exact two-pixel ties to one pixel.
fn non_maximum_suppression(sq: &[f64], gx: &[f64], gy: &[f64], h: usize, w: usize) -> Vec<f64> {
    let mag = |i: isize, j: isize| {
        if i < 0 || j < 0 || i >= h as isize || j >= w as isize {
            0.0
        } else {
            sq[i as usize * w + j as usize]
        }
    };
    let mut out = vec![0.0; h * w];
    for i in 0..h as isize {
        for j in 0..w as isize {
            let idx = i as usize * w + j as usize;
            let m = sq[idx];
            if m <= 0.0 {
                continue;
            }
            let mut angle = gy[idx].atan2(gx[idx]).to_degrees();
            if angle < 0.0 {
                angle += 180.0;
            }
            let ((bi, bj), (ai, aj)) = if !(22.5..157.5).contains(&angle) {
                ((i, j - 1), (i, j + 1))
            } else if angle < 67.5 {
                ((i - 1, j - 1), (i + 1, j + 1))
            } else if angle < 112.5 {
                ((i - 1, j), (i + 1, j))
            } else {
                ((i - 1, j + 1), (i + 1, j - 1))
            };
            if m >= mag(bi, bj) && m > mag(ai, aj) {
                out[idx] = m;
            }
        }
    }
    out
}

fn hysteresis(thin: &[f64], h: usize, w: usize, low: f64, high: f64) -> Vec<u8> {
    let mut out = vec![0u8; h * w];
    let mut queue = VecDeque::new();
    for (idx, &m) in thin.iter().enumerate() {
        if m > 0.0 && m >= high {
            out[idx] = 1;
            queue.push_back(idx);
        }
    }
    while let Some(idx) = queue.pop_front() {
        let (i, j) = ((idx / w) as isize, (idx % w) as isize);
        for di in -1..=1 {
            for dj in -1..=1 {
                let (ni, nj) = (i + di, j + dj);
                if ni < 0 || nj < 0 || ni >= h as isize || nj >= w as isize {
                    continue;
                }
                let n = ni as usize * w + nj as usize;
                if out[n] == 0 && thin[n] > 0.0 && thin[n] >= low {
                    out[n] = 1;
                    queue.push_back(n);
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn step(h: usize, w: usize) -> ImageTile {
        let px = (0..h * w)
            .map(|k| if k % w < w / 2 { 0.0 } else { 255.0 })
            .collect();
        ImageTile::new(h, w, 1, px).unwrap()
    }

    #[test]
    fn default_kernel_is_five_taps() {
        let p = CannyParams::default();
        assert_eq!(p.radius(), 2);
        assert_eq!(p.taps(), vec![7.0, 15.0, 20.0, 15.0, 7.0]);
    }

    #[test]
    fn constant_images_have_no_edges() {
        for v in [0.0, 255.0, 93.0] {
            let e = canny_edges(&ImageTile::filled(12, 9, 1, v).unwrap(), &CannyParams::default())
                .unwrap();
            assert!(e.values().iter().all(|&x| x == 0));
        }
    }

    #[test]
    fn vertical_step_gives_single_column() {
        let e = canny_edges(&step(16, 16), &CannyParams::default()).unwrap();
        let cols: Vec<usize> = (0..16)
            .filter(|&j| (0..16).any(|i| e.get(i, j) == 1))
            .collect();
        assert_eq!(cols.len(), 1, "edge columns {cols:?}");
        let col = cols[0];
        assert!(col == 7 || col == 8);
        assert!((0..16).all(|i| e.get(i, col) == 1));
    }

    #[test]
    fn config_and_shape_errors() {
        let bad = CannyParams {
            low: 200.0,
            high: 100.0,
            ..Default::default()
        };
        assert!(matches!(
            canny_edges(&step(8, 8), &bad),
            Err(Error::Config(_))
        ));
        assert!(canny_edges(&ImageTile::filled(4, 8, 1, 0.0).unwrap(), &CannyParams::default())
            .is_err());
        assert!(canny_edges(&ImageTile::filled(8, 8, 3, 0.0).unwrap(), &CannyParams::default())
            .is_err());
    }

    proptest! {
        #[test]
        fn invariant_under_constant_shift(
            px in prop::collection::vec(0u8..=200, 100),
            shift in 0u8..=55,
        ) {
            let a = ImageTile::new(10, 10, 1, px.iter().map(|&v| f64::from(v)).collect()).unwrap();
            let b = ImageTile::new(10, 10, 1, px.iter().map(|&v| f64::from(v + shift)).collect()).unwrap();
            let p = CannyParams::default();
            prop_assert_eq!(canny_edges(&a, &p).unwrap(), canny_edges(&b, &p).unwrap());
        }
    }
}
