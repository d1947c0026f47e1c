//! Model interface and the small reference models used to exercise the trainer.

use std::fmt::Debug;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tile::ImageTile;

/// An image-to-image generator with a flat parameter vector.
pub trait Generator: Debug + Send + Sync {
    fn params(&self) -> &[f64];

    fn params_mut(&mut self) -> &mut [f64];

    /// Output for `img` under an explicit parameter vector. Outputs are not clamped.
    fn forward_with(&self, params: &[f64], img: &ImageTile) -> ImageTile;

    fn forward(&self, img: &ImageTile) -> ImageTile {
        self.forward_with(self.params(), img)
    }

    fn clone_box(&self) -> Box<dyn Generator>;
}

/// An image scorer producing values in `[0, 1]`.
pub trait Discriminator: Debug + Send + Sync {
    fn params(&self) -> &[f64];

    fn params_mut(&mut self) -> &mut [f64];

    fn score_with(&self, params: &[f64], img: &ImageTile) -> f64;

    fn score(&self, img: &ImageTile) -> f64 {
        self.score_with(self.params(), img)
    }

    fn clone_box(&self) -> Box<dyn Discriminator>;
}

/// Per-pixel affine colour map `out = W rgb + 255 b` (12 parameters: `W`
/// row-major then `b`). Single-channel inputs are treated as grey RGB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyAffineGenerator {
    params: Vec<f64>,
}

impl ToyAffineGenerator {
    pub const DIM: usize = 12;

    pub fn identity() -> Self {
        Self::new([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], [0.0; 3])
    }

    /// `offset` is in units of full scale (1.0 = 255).
    pub fn new(matrix: [[f64; 3]; 3], offset: [f64; 3]) -> Self {
        let mut params = Vec::with_capacity(Self::DIM);
        for row in matrix {
            params.extend_from_slice(&row);
        }
        params.extend_from_slice(&offset);
        Self { params }
    }

    pub fn from_params(params: Vec<f64>) -> Result<Self> {
        if params.len() != Self::DIM {
            return Err(Error::Shape(format!(
                "affine generator needs {} parameters, got {}",
                Self::DIM,
                params.len()
            )));
        }
        Ok(Self { params })
    }

    pub fn apply_params(params: &[f64], img: &ImageTile) -> ImageTile {
        let c = img.channels();
        let px = img.pixels();
        let mut out = Vec::with_capacity(img.height() * img.width() * 3);
        for p in px.chunks_exact(c) {
            let rgb = if c == 3 { [p[0], p[1], p[2]] } else { [p[0]; 3] };
            for row in 0..3 {
                let w = &params[row * 3..row * 3 + 3];
                out.push(w[0] * rgb[0] + w[1] * rgb[1] + w[2] * rgb[2] + 255.0 * params[9 + row]);
            }
        }
        ImageTile::new_unchecked_range(img.height(), img.width(), 3, out)
            .expect("finite affine output")
    }
}

impl Generator for ToyAffineGenerator {
    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn forward_with(&self, params: &[f64], img: &ImageTile) -> ImageTile {
        Self::apply_params(params, img)
    }

    fn clone_box(&self) -> Box<dyn Generator> {
        Box::new(self.clone())
    }
}

/// Logistic regression on colour statistics: per-channel means, per-channel
/// standard deviations and the pooled standard deviation, all scaled to
/// `[0, 1]` (7 weights + bias).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyStatDiscriminator {
    params: Vec<f64>,
}

impl Default for ToyStatDiscriminator {
    fn default() -> Self {
        Self {
            params: vec![0.0; Self::DIM],
        }
    }
}

impl ToyStatDiscriminator {
    pub const DIM: usize = 8;

    pub fn from_params(params: Vec<f64>) -> Result<Self> {
        if params.len() != Self::DIM {
            return Err(Error::Shape(format!(
                "stat discriminator needs {} parameters, got {}",
                Self::DIM,
                params.len()
            )));
        }
        Ok(Self { params })
    }

    pub fn features(img: &ImageTile) -> [f64; 7] {
        let c = img.channels();
        let n = (img.height() * img.width()) as f64;
        let mut sum = [0.0; 3];
        let mut sq = [0.0; 3];
        for p in img.pixels().chunks_exact(c) {
            for ch in 0..3 {
                let v = if c == 3 { p[ch] } else { p[0] } / 255.0;
                sum[ch] += v;
                sq[ch] += v * v;
            }
        }
        let mean = sum.map(|s| s / n);
        let std: Vec<f64> = (0..3)
            .map(|ch| (sq[ch] / n - mean[ch] * mean[ch]).max(0.0).sqrt())
            .collect();
        let pooled_mean = mean.iter().sum::<f64>() / 3.0;
        let pooled_sq = sq.iter().sum::<f64>() / (3.0 * n);
        let pooled_std = (pooled_sq - pooled_mean * pooled_mean).max(0.0).sqrt();
        [mean[0], mean[1], mean[2], std[0], std[1], std[2], pooled_std]
    }

    pub fn score_params(params: &[f64], img: &ImageTile) -> f64 {
        let f = Self::features(img);
        let z: f64 = f.iter().zip(params).map(|(a, b)| a * b).sum::<f64>() + params[7];
        1.0 / (1.0 + (-z).exp())
    }
}

impl Discriminator for ToyStatDiscriminator {
    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn score_with(&self, params: &[f64], img: &ImageTile) -> f64 {
        Self::score_params(params, img)
    }

    fn clone_box(&self) -> Box<dyn Discriminator> {
        Box::new(self.clone())
    }
}

/// Central-difference gradient with step `1e-4 * max(1, |theta_i|)`.
pub fn parameter_gradient<F>(params: &[f64], mut objective: F) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut probe = params.to_vec();
    let mut grad = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let h = 1e-4 * params[i].abs().max(1.0);
        probe[i] = params[i] + h;
        let plus = objective(&probe)?;
        probe[i] = params[i] - h;
        let minus = objective(&probe)?;
        probe[i] = params[i];
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}

/// The two generators and two discriminators of the translation model.
#[derive(Debug)]
pub struct ModelBundle {
    /// Remote sensing -> map.
    pub g_rm: Box<dyn Generator>,
    /// Map -> remote sensing.
    pub g_mr: Box<dyn Generator>,
    /// Scores maps.
    pub d_m: Box<dyn Discriminator>,
    /// Scores remote sensing images.
    pub d_r: Box<dyn Discriminator>,
}

impl Clone for ModelBundle {
    fn clone(&self) -> Self {
        Self {
            g_rm: self.g_rm.clone_box(),
            g_mr: self.g_mr.clone_box(),
            d_m: self.d_m.clone_box(),
            d_r: self.d_r.clone_box(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub v: u32,
    pub g_rm: Vec<f64>,
    pub g_mr: Vec<f64>,
    pub d_m: Vec<f64>,
    pub d_r: Vec<f64>,
}

impl ModelBundle {
    /// Identity generators and neutral discriminators.
    pub fn toy() -> Self {
        Self {
            g_rm: Box::new(ToyAffineGenerator::identity()),
            g_mr: Box::new(ToyAffineGenerator::identity()),
            d_m: Box::new(ToyStatDiscriminator::default()),
            d_r: Box::new(ToyStatDiscriminator::default()),
        }
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            v: 1,
            g_rm: self.g_rm.params().to_vec(),
            g_mr: self.g_mr.params().to_vec(),
            d_m: self.d_m.params().to_vec(),
            d_r: self.d_r.params().to_vec(),
        }
    }

    pub fn toy_from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.v != 1 {
            return Err(Error::Validation(format!("unsupported checkpoint version {}", ck.v)));
        }
        Ok(Self {
            g_rm: Box::new(ToyAffineGenerator::from_params(ck.g_rm.clone())?),
            g_mr: Box::new(ToyAffineGenerator::from_params(ck.g_mr.clone())?),
            d_m: Box::new(ToyStatDiscriminator::from_params(ck.d_m.clone())?),
            d_r: Box::new(ToyStatDiscriminator::from_params(ck.d_r.clone())?),
        })
    }

    pub fn all_finite(&self) -> bool {
        [self.g_rm.params(), self.g_mr.params(), self.d_m.params(), self.d_r.params()]
            .iter()
            .all(|p| p.iter().all(|v| v.is_finite()))
    }
}
