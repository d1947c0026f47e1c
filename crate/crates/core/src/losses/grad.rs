//! Analytic derivatives of the image losses with respect to the generated pixels.

use super::{gradient_pair, luma, LossId, LossWeights};
use crate::error::Result;
use crate::imagemath::{forward_differences, moments, GradientMap};
use crate::tile::{ImageTile, LUMA_WEIGHTS};

/// `d loss / d gen` for every pixel (and channel) of `gen`.
///
/// The losses are non-smooth where `gen == truth` (L1 kinks), where a gradient
/// magnitude is zero, and where a column/row covariance is zero. At those points
/// the returned value is one valid subgradient; use [`is_smooth_at`] to detect them.
pub fn loss_image_gradient(
    id: LossId,
    gen: &ImageTile,
    truth: &ImageTile,
    w: &LossWeights,
) -> Result<Vec<f64>> {
    gen.ensure_same_shape(truth)?;
    match id {
        LossId::PixelL1 => {
            let n = gen.pixels().len() as f64;
            Ok(gen
                .pixels()
                .iter()
                .zip(truth.pixels())
                .map(|(g, t)| sign(g - t) / n)
                .collect())
        }
        LossId::GraL1 => {
            let (g, t) = gradient_pair(gen, truth)?;
            let n = g.values().len() as f64;
            let d_map: Vec<f64> = g
                .values()
                .iter()
                .zip(t.values())
                .map(|(a, b)| sign(a - b) / n)
                .collect();
            Ok(backprop_to_pixels(gen, &g, &d_map))
        }
        LossId::GraStr => {
            let (g, t) = gradient_pair(gen, truth)?;
            let d_map = gra_str_map_gradient(&g, &t, w.c1_grastr, w.c2_grastr);
            Ok(backprop_to_pixels(gen, &g, &d_map))
        }
    }
}

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// d rho / d y_k for `rho = (|cov(x,y)| + c) / (sigma_x sigma_y + c)`, accumulated
/// with factor `scale` through `sink(k, value)`.
fn rho_gradient(x: &[f64], y: &[f64], c: f64, scale: f64, mut sink: impl FnMut(usize, f64)) {
    let n = x.len() as f64;
    let m = moments(x, y);
    let (sx, sy) = (m.sigma_x(), m.sigma_y());
    let num = m.cov.abs() + c;
    let den = sx * sy + c;
    let s = sign(m.cov);
    for k in 0..x.len() {
        let d_cov = (x[k] - m.mean_x) / n;
        let d_sy = if sy > 0.0 { (y[k] - m.mean_y) / (n * sy) } else { 0.0 };
        let d = s * d_cov / den - num * sx * d_sy / (den * den);
        sink(k, scale * d);
    }
}

/// d GraStr / d G(gen) over the gradient map of the generated image.
fn gra_str_map_gradient(g: &GradientMap, t: &GradientMap, c1: f64, c2: f64) -> Vec<f64> {
    let (h, w) = (g.height(), g.width());
    let mut d = vec![0.0; h * w];
    let col_scale = -1.0 / w as f64;
    for j in 0..w {
        rho_gradient(&t.column(j), &g.column(j), c1, col_scale, |i, v| {
            d[i * w + j] += v
        });
    }
    let row_scale = -1.0 / h as f64;
    for i in 0..h {
        rho_gradient(t.row(i), g.row(i), c2, row_scale, |j, v| d[i * w + j] += v);
    }
    d
}

/// Chain rule from the gradient map of `luma(gen)` back to the pixels of `gen`.
fn backprop_to_pixels(gen: &ImageTile, g: &GradientMap, d_map: &[f64]) -> Vec<f64> {
    let lum = luma(gen);
    let (gx, gy) = forward_differences(&lum);
    let stride = gen.width();
    let mut d_lum = vec![0.0; gen.height() * gen.width()];
    for i in 0..g.height() {
        for j in 0..g.width() {
            let k = i * g.width() + j;
            let mag = g.values()[k];
            if mag == 0.0 || d_map[k] == 0.0 {
                continue;
            }
            let (ux, uy) = (gx[k] / mag, gy[k] / mag);
            d_lum[i * stride + j + 1] += d_map[k] * ux;
            d_lum[(i + 1) * stride + j] += d_map[k] * uy;
            d_lum[i * stride + j] -= d_map[k] * (ux + uy);
        }
    }
    if gen.channels() == 1 {
        d_lum
    } else {
        d_lum
            .iter()
            .flat_map(|&d| LUMA_WEIGHTS.map(|wt| wt * d))
            .collect()
    }
}

/// True when every pixel can be perturbed by `±h` without crossing a
/// non-differentiable point of the loss.
pub fn is_smooth_at(
    id: LossId,
    gen: &ImageTile,
    truth: &ImageTile,
    h: f64,
) -> Result<bool> {
    gen.ensure_same_shape(truth)?;
    Ok(match id {
        LossId::PixelL1 => {
            let margin = (2.0 * h).max(1e-6);
            gen.pixels()
                .iter()
                .zip(truth.pixels())
                .all(|(a, b)| (a - b).abs() > margin)
        }
        LossId::GraL1 => {
            let (g, t) = gradient_pair(gen, truth)?;
            let margin = (3.0 * h).max(1e-6);
            g.values()
                .iter()
                .zip(t.values())
                .all(|(a, b)| *a > margin && (a - b).abs() > margin)
        }
        LossId::GraStr => {
            let (g, t) = gradient_pair(gen, truth)?;
            let margin = (3.0 * h).max(1e-6);
            if g.values().iter().any(|&v| v <= margin) {
                return Ok(false);
            }
            // One pixel moves at most three map entries by at most sqrt(2) h each.
            let cov_ok = |x: &[f64], y: &[f64]| {
                let m = moments(x, y);
                let spread = x.iter().map(|v| (v - m.mean_x).abs()).fold(0.0, f64::max);
                m.cov.abs() > 10.0 * h * spread.max(1e-12) && m.sigma_y() > margin
            };
            (0..g.width()).all(|j| cov_ok(&t.column(j), &g.column(j)))
                && (0..g.height()).all(|i| cov_ok(t.row(i), g.row(i)))
        }
    })
}

/// Worst relative error between the analytic gradient and central differences
/// with step `h`, over pixels whose analytic derivative exceeds 1e-8 in magnitude.
pub fn finite_difference_check(
    id: LossId,
    gen: &ImageTile,
    truth: &ImageTile,
    w: &LossWeights,
    h: f64,
) -> Result<f64> {
    let analytic = loss_image_gradient(id, gen, truth, w)?;
    let mut px = gen.pixels().to_vec();
    let mut worst: f64 = 0.0;
    for (k, &a) in analytic.iter().enumerate() {
        if a.abs() <= 1e-8 {
            continue;
        }
        let orig = px[k];
        px[k] = orig + h;
        let plus = eval(id, gen, &px, truth, w)?;
        px[k] = orig - h;
        let minus = eval(id, gen, &px, truth, w)?;
        px[k] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs());
        worst = worst.max(rel);
    }
    Ok(worst)
}

fn eval(id: LossId, like: &ImageTile, px: &[f64], truth: &ImageTile, w: &LossWeights) -> Result<f64> {
    let img =
        ImageTile::new_unchecked_range(like.height(), like.width(), like.channels(), px.to_vec())?;
    id.evaluate(&img, truth, w)
}
