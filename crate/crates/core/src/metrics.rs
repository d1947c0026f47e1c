//! Full-reference quality metrics: MSE, global SSIM and ESSI.
//!
//! ESSI multiplies a stabilized absolute correlation of the two binary Canny edge
//! maps by a mean-similarity factor. The second factor collapses the score when
//! one edge map is empty and the other is not, which the correlation alone
//! would rate as perfect.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagemath::{canny_edges, moments, CannyParams, CorrelationTerms, EdgeMap, ProgressiveScan};
use crate::tile::ImageTile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricMode {
    /// Metric computed on BT.601 luma.
    Luminance,
    /// Metric computed per RGB channel, then averaged.
    RgbMean,
}

impl MetricMode {
    pub const ALL: [MetricMode; 2] = [MetricMode::RgbMean, MetricMode::Luminance];

    pub fn as_str(&self) -> &'static str {
        match self {
            MetricMode::Luminance => "luminance",
            MetricMode::RgbMean => "rgbmean",
        }
    }
}

impl fmt::Display for MetricMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "luminance" => Ok(MetricMode::Luminance),
            "rgbmean" => Ok(MetricMode::RgbMean),
            other => Err(Error::Config(format!("unknown metric mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    pub c1: f64,
    pub c2: f64,
    pub canny: CannyParams,
    pub mode: MetricMode,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            c1: 1e-12,
            c2: 1e-12,
            canny: CannyParams::default(),
            mode: MetricMode::Luminance,
        }
    }
}

impl MetricConfig {
    pub fn with_mode(mut self, mode: MetricMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c1 > 0.0 && self.c2 > 0.0) {
            return Err(Error::Config(format!(
                "metric stabilizers must be > 0, got {}, {}",
                self.c1, self.c2
            )));
        }
        self.canny.validate()
    }
}

/// Applies a single-channel metric according to `mode`.
fn per_mode<F>(gen: &ImageTile, truth: &ImageTile, mode: MetricMode, f: F) -> Result<f64>
where
    F: Fn(&ImageTile, &ImageTile) -> Result<f64>,
{
    gen.ensure_same_shape(truth)?;
    if gen.channels() == 1 {
        return f(gen, truth);
    }
    match mode {
        MetricMode::Luminance => f(&gen.to_luminance()?, &truth.to_luminance()?),
        MetricMode::RgbMean => {
            let mut sum = 0.0;
            for c in 0..gen.channels() {
                sum += f(&gen.channel(c)?, &truth.channel(c)?)?;
            }
            Ok(sum / gen.channels() as f64)
        }
    }
}

fn mse_single(gen: &ImageTile, truth: &ImageTile) -> Result<f64> {
    let n = gen.pixels().len() as f64;
    Ok(gen
        .pixels()
        .iter()
        .zip(truth.pixels())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n)
}

pub fn mse(gen: &ImageTile, truth: &ImageTile, mode: MetricMode) -> Result<f64> {
    per_mode(gen, truth, mode, mse_single)
}

/// Whole-image SSIM with population moments.
pub fn ssim(gen: &ImageTile, truth: &ImageTile, cfg: &MetricConfig) -> Result<f64> {
    let (c1, c2) = (cfg.c1, cfg.c2);
    per_mode(gen, truth, cfg.mode, |g, t| {
        let m = moments(g.pixels(), t.pixels());
        Ok(((2.0 * m.mean_x * m.mean_y + c1) * (2.0 * m.cov + c2))
            / ((m.mean_x * m.mean_x + m.mean_y * m.mean_y + c1) * (m.var_x + m.var_y + c2)))
    })
}

/// ESSI of two binary edge maps.
pub fn essi_from_edges(gen: &EdgeMap, truth: &EdgeMap, c1: f64, c2: f64) -> Result<f64> {
    if gen.dims() != truth.dims() {
        return Err(Error::Shape(format!(
            "edge maps {:?} vs {:?}",
            gen.dims(),
            truth.dims()
        )));
    }
    let terms = essi_terms(gen, truth, c1, c2);
    Ok(terms.rho * terms.theta)
}

pub fn essi_terms(gen: &EdgeMap, truth: &EdgeMap, c1: f64, c2: f64) -> CorrelationTerms {
    let m = moments(&gen.flatten_progressive(), &truth.flatten_progressive());
    CorrelationTerms::from_moments(&m, c1, c2)
}

pub fn essi(gen: &ImageTile, truth: &ImageTile, cfg: &MetricConfig) -> Result<f64> {
    per_mode(gen, truth, cfg.mode, |g, t| {
        let eg = canny_edges(g, &cfg.canny)?;
        let et = canny_edges(t, &cfg.canny)?;
        essi_from_edges(&eg, &et, cfg.c1, cfg.c2)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileMetrics {
    pub tile_id: String,
    pub mode: MetricMode,
    pub mse: f64,
    pub ssim: f64,
    pub essi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub mode: MetricMode,
    pub count: usize,
    pub mse: f64,
    pub ssim: f64,
    pub essi: f64,
}

/// Per-tile metrics in both modes, ordered by tile id then mode, plus per-mode means.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricReport {
    pub records: Vec<TileMetrics>,
    pub aggregates: Vec<AggregateMetrics>,
}

impl MetricReport {
    pub fn aggregate(&self, mode: MetricMode) -> Option<&AggregateMetrics> {
        self.aggregates.iter().find(|a| a.mode == mode)
    }
}

pub fn evaluate_tile(
    tile_id: &str,
    gen: &ImageTile,
    truth: &ImageTile,
    cfg: &MetricConfig,
    mode: MetricMode,
) -> Result<TileMetrics> {
    let cfg = cfg.with_mode(mode);
    Ok(TileMetrics {
        tile_id: tile_id.to_string(),
        mode,
        mse: mse(gen, truth, mode)?,
        ssim: ssim(gen, truth, &cfg)?,
        essi: essi(gen, truth, &cfg)?,
    })
}

/// Evaluates `(tile_id, generated, truth)` triples in both modes.
pub fn evaluate_pair_set(
    pairs: &[(String, ImageTile, ImageTile)],
    cfg: &MetricConfig,
) -> Result<MetricReport> {
    cfg.validate()?;
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.sort_by(|&a, &b| pairs[a].0.cmp(&pairs[b].0));
    let mut records = Vec::with_capacity(pairs.len() * 2);
    for idx in order {
        let (id, gen, truth) = &pairs[idx];
        for mode in MetricMode::ALL {
            records.push(evaluate_tile(id, gen, truth, cfg, mode)?);
        }
    }
    let aggregates = MetricMode::ALL
        .into_iter()
        .filter_map(|mode| {
            let rows: Vec<&TileMetrics> = records.iter().filter(|r| r.mode == mode).collect();
            if rows.is_empty() {
                return None;
            }
            let n = rows.len() as f64;
            Some(AggregateMetrics {
                mode,
                count: rows.len(),
                mse: rows.iter().map(|r| r.mse).sum::<f64>() / n,
                ssim: rows.iter().map(|r| r.ssim).sum::<f64>() / n,
                essi: rows.iter().map(|r| r.essi).sum::<f64>() / n,
            })
        })
        .collect();
    Ok(MetricReport {
        records,
        aggregates,
    })
}
