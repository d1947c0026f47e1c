//! Pixel grids and geometric tile operations.
//!
//! Pixels are stored as `f64` on the 8-bit scale `[0, 255]`, row-major with the
//! channel index fastest. Quantization to `u8` happens only when writing PNG files.

use std::path::Path;

use image::{DynamicImage, GrayImage, ImageBuffer, Luma, Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// BT.601 luma weights for R, G, B.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageTile {
    height: usize,
    width: usize,
    channels: usize,
    pixels: Vec<f64>,
}

impl ImageTile {
    pub fn new(height: usize, width: usize, channels: usize, pixels: Vec<f64>) -> Result<Self> {
        let tile = Self::new_unchecked_range(height, width, channels, pixels)?;
        if let Some(bad) = tile.pixels.iter().find(|v| !(0.0..=255.0).contains(*v)) {
            return Err(Error::Pixel(format!("value {bad} outside [0, 255]")));
        }
        Ok(tile)
    }

    /// Builds a tile without the `[0, 255]` range check.
    ///
    /// Generator outputs are left unclamped while optimizing; everything else
    /// should go through [`ImageTile::new`].
    pub fn new_unchecked_range(
        height: usize,
        width: usize,
        channels: usize,
        pixels: Vec<f64>,
    ) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::Channel {
                expected: 3,
                actual: channels,
            });
        }
        if height == 0 || width == 0 {
            return Err(Error::Shape(format!("empty image {height}x{width}")));
        }
        if pixels.len() != height * width * channels {
            return Err(Error::Shape(format!(
                "pixel buffer has {} values, expected {height}x{width}x{channels}",
                pixels.len()
            )));
        }
        if pixels.iter().any(|v| !v.is_finite()) {
            return Err(Error::Pixel("non-finite value".into()));
        }
        Ok(Self {
            height,
            width,
            channels,
            pixels,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    /// Single-channel tile from nested rows. Panics on ragged input; meant for tests
    /// and small literals.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, |r| r.len());
        assert!(rows.iter().all(|r| r.len() == width), "ragged rows");
        Self::new(height, width, 1, rows.concat())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.pixels[(row * self.width + col) * self.channels + channel]
    }

    pub fn same_shape(&self, other: &ImageTile) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    pub(crate) fn ensure_same_shape(&self, other: &ImageTile) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "{}x{}x{} vs {}x{}x{}",
                self.height, self.width, self.channels, other.height, other.width, other.channels
            )))
        }
    }

    /// One channel as a single-channel tile.
    pub fn channel(&self, channel: usize) -> Result<ImageTile> {
        if channel >= self.channels {
            return Err(Error::Channel {
                expected: channel + 1,
                actual: self.channels,
            });
        }
        let pixels = self
            .pixels
            .iter()
            .skip(channel)
            .step_by(self.channels)
            .copied()
            .collect();
        Ok(ImageTile {
            height: self.height,
            width: self.width,
            channels: 1,
            pixels,
        })
    }

    /// BT.601 luma of an RGB tile.
    pub fn to_luminance(&self) -> Result<ImageTile> {
        if self.channels == 1 {
            return Err(Error::AlreadyLuminance);
        }
        let [wr, wg, wb] = LUMA_WEIGHTS;
        let pixels = self
            .pixels
            .chunks_exact(3)
            .map(|p| (wr * p[0] + wg * p[1] + wb * p[2]).clamp(0.0, 255.0))
            .collect();
        Ok(ImageTile {
            height: self.height,
            width: self.width,
            channels: 1,
            pixels,
        })
    }

    /// Luminance for RGB input, a clone for single-channel input.
    pub fn luminance_or_self(&self) -> ImageTile {
        if self.channels == 1 {
            self.clone()
        } else {
            self.to_luminance().expect("three channels")
        }
    }

    /// Copies the `h`x`w` window with top-left corner at (`top`, `left`).
    pub fn window(&self, top: usize, left: usize, h: usize, w: usize) -> Result<ImageTile> {
        if top + h > self.height || left + w > self.width || h == 0 || w == 0 {
            return Err(Error::Shape(format!(
                "window {h}x{w} at ({top},{left}) outside {}x{}",
                self.height, self.width
            )));
        }
        let c = self.channels;
        let mut pixels = Vec::with_capacity(h * w * c);
        for row in top..top + h {
            let start = (row * self.width + left) * c;
            pixels.extend_from_slice(&self.pixels[start..start + w * c]);
        }
        Ok(ImageTile {
            height: h,
            width: w,
            channels: c,
            pixels,
        })
    }

    /// Bilinear resize to `target`x`target` using pixel-center alignment with
    /// edge clamping.
    pub fn resize(&self, target: usize) -> Result<ImageTile> {
        if target == 0 {
            return Err(Error::Config("resize target must be at least 1".into()));
        }
        if target == self.height && target == self.width {
            return Ok(self.clone());
        }
        let c = self.channels;
        let rows: Vec<(usize, usize, f64)> = sample_positions(self.height, target);
        let cols: Vec<(usize, usize, f64)> = sample_positions(self.width, target);
        let mut pixels = Vec::with_capacity(target * target * c);
        for &(r0, r1, fy) in &rows {
            for &(c0, c1, fx) in &cols {
                for ch in 0..c {
                    let top = lerp(self.get(r0, c0, ch), self.get(r0, c1, ch), fx);
                    let bottom = lerp(self.get(r1, c0, ch), self.get(r1, c1, ch), fx);
                    pixels.push(lerp(top, bottom, fy).clamp(0.0, 255.0));
                }
            }
        }
        Ok(ImageTile {
            height: target,
            width: target,
            channels: c,
            pixels,
        })
    }

    /// Splits the tile into a `k`x`k` grid of equally sized tiles.
    pub fn crop_grid(&self, k: usize) -> Result<TileGrid> {
        if k == 0 || self.height % k != 0 || self.width % k != 0 {
            return Err(Error::Dimension {
                height: self.height,
                width: self.width,
                k,
            });
        }
        let (th, tw) = (self.height / k, self.width / k);
        let mut tiles = Vec::with_capacity(k * k);
        for gr in 0..k {
            for gc in 0..k {
                tiles.push(self.window(gr * th, gc * tw, th, tw)?);
            }
        }
        TileGrid::new(k, k, tiles)
    }

    pub fn read_png(path: impl AsRef<Path>) -> Result<ImageTile> {
        let path = path.as_ref();
        let img = image::open(path).map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Self::from_dynamic(img))
    }

    pub fn from_dynamic(img: DynamicImage) -> ImageTile {
        let (channels, height, width, raw) = match img {
            DynamicImage::ImageLuma8(_)
            | DynamicImage::ImageLumaA8(_)
            | DynamicImage::ImageLuma16(_)
            | DynamicImage::ImageLumaA16(_) => {
                let g = img.to_luma8();
                (1, g.height(), g.width(), g.into_raw())
            }
            other => {
                let rgb = other.to_rgb8();
                (3, rgb.height(), rgb.width(), rgb.into_raw())
            }
        };
        ImageTile {
            height: height as usize,
            width: width as usize,
            channels,
            pixels: raw.into_iter().map(f64::from).collect(),
        }
    }

    /// Quantizes to 8 bits (round half away from zero, clamped).
    pub fn to_u8(&self) -> Vec<u8> {
        self.pixels
            .iter()
            .map(|v| v.round().clamp(0.0, 255.0) as u8)
            .collect()
    }

    pub fn write_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let (w, h) = (self.width as u32, self.height as u32);
        let raw = self.to_u8();
        let res = if self.channels == 1 {
            let buf: GrayImage = ImageBuffer::<Luma<u8>, _>::from_raw(w, h, raw).expect("sized");
            buf.save_with_format(path, image::ImageFormat::Png)
        } else {
            let buf: RgbImage = ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, raw).expect("sized");
            buf.save_with_format(path, image::ImageFormat::Png)
        };
        res.map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
    }
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    if t == 0.0 {
        a
    } else {
        a + (b - a) * t
    }
}

/// For each output index, the two source indices and the blend factor.
fn sample_positions(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    let max = (src - 1) as f64;
    (0..dst)
        .map(|i| {
            let pos = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, max);
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(src - 1);
            (lo, hi, pos - lo as f64)
        })
        .collect()
}

/// A `rows`x`cols` grid of equally shaped tiles in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct TileGrid {
    rows: usize,
    cols: usize,
    tiles: Vec<ImageTile>,
}

impl TileGrid {
    pub fn new(rows: usize, cols: usize, tiles: Vec<ImageTile>) -> Result<Self> {
        if rows == 0 || cols == 0 || tiles.len() != rows * cols {
            return Err(Error::Shape(format!(
                "grid {rows}x{cols} needs {} tiles, got {}",
                rows * cols,
                tiles.len()
            )));
        }
        let first = &tiles[0];
        if let Some(bad) = tiles.iter().position(|t| !t.same_shape(first)) {
            return Err(Error::Shape(format!(
                "tile {bad} is {}x{}x{}, tile 0 is {}x{}x{}",
                tiles[bad].height,
                tiles[bad].width,
                tiles[bad].channels,
                first.height,
                first.width,
                first.channels
            )));
        }
        Ok(Self { rows, cols, tiles })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn tiles(&self) -> &[ImageTile] {
        &self.tiles
    }

    pub fn into_tiles(self) -> Vec<ImageTile> {
        self.tiles
    }

    /// Edge length of the (square) tiles; the height for non-square tiles.
    pub fn tile_size(&self) -> usize {
        self.tiles[0].height
    }

    pub fn map<F>(&self, f: F) -> Result<TileGrid>
    where
        F: FnMut(&ImageTile) -> Result<ImageTile>,
    {
        let tiles = self.tiles.iter().map(f).collect::<Result<Vec<_>>>()?;
        TileGrid::new(self.rows, self.cols, tiles)
    }

    /// Row-major concatenation of the grid into a single image.
    pub fn stitch(&self) -> Result<ImageTile> {
        let first = &self.tiles[0];
        let (th, tw, c) = (first.height, first.width, first.channels);
        let (height, width) = (th * self.rows, tw * self.cols);
        let mut pixels = vec![0.0; height * width * c];
        for (idx, tile) in self.tiles.iter().enumerate() {
            tile.ensure_same_shape(first)?;
            let (gr, gc) = (idx / self.cols, idx % self.cols);
            for r in 0..th {
                let src = &tile.pixels[r * tw * c..(r + 1) * tw * c];
                let start = ((gr * th + r) * width + gc * tw) * c;
                pixels[start..start + tw * c].copy_from_slice(src);
            }
        }
        Ok(ImageTile {
            height,
            width,
            channels: c,
            pixels,
        })
    }
}
