//! Content, adversarial and identity losses for two-domain map translation.
//!
//! The content losses are built from three pieces: the pixel-wise L1 loss, the
//! gradient L1 loss (mean absolute difference of gradient maps) and the gradient
//! structure loss (two minus the mean stabilized absolute correlation of the
//! gradient-map columns and rows). The last two only apply to the
//! remote-sensing-to-map direction; the trainer decides where each op is used.

mod grad;

pub use grad::{finite_difference_check, is_smooth_at, loss_image_gradient};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imagemath::{gradient_map, moments, GradientMap};
use crate::tile::{ImageTile, LUMA_WEIGHTS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_ctn: f64,
    pub lambda_adv: f64,
    pub lambda_idt: f64,
    /// Pixel L1 weight inside the cycle-content losses.
    pub lambda_l1u: f64,
    /// Pixel L1 weight inside the supervised content losses.
    pub lambda_l1: f64,
    /// Column stabilizer of the gradient structure loss.
    pub c1_grastr: f64,
    /// Row stabilizer of the gradient structure loss.
    pub c2_grastr: f64,
    /// Floor applied before taking logs in the adversarial loss.
    pub eps_log: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_ctn: 10.0,
            lambda_adv: 1.0,
            lambda_idt: 0.1,
            lambda_l1u: 1.0,
            lambda_l1: 10.0,
            c1_grastr: 1e-8,
            c2_grastr: 1e-8,
            eps_log: 1e-12,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let weights = [
            ("lambda_ctn", self.lambda_ctn),
            ("lambda_adv", self.lambda_adv),
            ("lambda_idt", self.lambda_idt),
            ("lambda_l1u", self.lambda_l1u),
            ("lambda_l1", self.lambda_l1),
        ];
        for (name, v) in weights {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be >= 0, got {v}")));
            }
        }
        for (name, v) in [
            ("c1_grastr", self.c1_grastr),
            ("c2_grastr", self.c2_grastr),
            ("eps_log", self.eps_log),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Content,
    Adversarial,
    Identity,
    Total,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossTerm {
    pub raw: f64,
    pub weight: f64,
}

impl LossTerm {
    pub fn contribution(&self) -> f64 {
        self.raw * self.weight
    }
}

/// A scalar loss together with the weighted terms it was assembled from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub label: String,
    pub kind: LossKind,
    pub total: f64,
    pub terms: BTreeMap<String, LossTerm>,
}

impl LossBreakdown {
    fn from_terms(label: &str, kind: LossKind, terms: &[(&str, f64, f64)]) -> Self {
        let terms: BTreeMap<String, LossTerm> = terms
            .iter()
            .map(|&(name, raw, weight)| (name.to_string(), LossTerm { raw, weight }))
            .collect();
        let total = terms.values().map(LossTerm::contribution).sum();
        Self {
            label: label.to_string(),
            kind,
            total,
            terms,
        }
    }

    pub fn single(label: &str, kind: LossKind, value: f64) -> Self {
        Self::from_terms(label, kind, &[(label, value, 1.0)])
    }

    pub fn ledger_sum(&self) -> f64 {
        self.terms.values().map(LossTerm::contribution).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.total.is_finite() && self.terms.values().all(|t| t.raw.is_finite())
    }
}

/// Differentiable image losses with analytic gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossId {
    PixelL1,
    GraL1,
    GraStr,
}

impl LossId {
    pub const ALL: [LossId; 3] = [LossId::PixelL1, LossId::GraL1, LossId::GraStr];

    pub fn as_str(&self) -> &'static str {
        match self {
            LossId::PixelL1 => "pixel_l1",
            LossId::GraL1 => "gra_l1",
            LossId::GraStr => "gra_str",
        }
    }

    pub fn evaluate(&self, gen: &ImageTile, truth: &ImageTile, w: &LossWeights) -> Result<f64> {
        match self {
            LossId::PixelL1 => pixel_l1(gen, truth),
            LossId::GraL1 => gra_l1(gen, truth),
            LossId::GraStr => gra_str(gen, truth, w),
        }
    }
}

impl fmt::Display for LossId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| Error::UnknownLoss(s.to_string()))
    }
}

/// Luminance without clamping, so unclamped generator outputs keep their gradients.
pub(crate) fn luma(img: &ImageTile) -> ImageTile {
    if img.channels() == 1 {
        return img.clone();
    }
    let [wr, wg, wb] = LUMA_WEIGHTS;
    let px = img
        .pixels()
        .chunks_exact(3)
        .map(|p| wr * p[0] + wg * p[1] + wb * p[2])
        .collect();
    ImageTile::new_unchecked_range(img.height(), img.width(), 1, px).expect("same dims")
}

/// Mean absolute difference over every pixel and channel.
pub fn pixel_l1(a: &ImageTile, b: &ImageTile) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let n = a.pixels().len() as f64;
    Ok(a.pixels()
        .iter()
        .zip(b.pixels())
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
        / n)
}

fn gradient_pair(gen: &ImageTile, truth: &ImageTile) -> Result<(GradientMap, GradientMap)> {
    gen.ensure_same_shape(truth)?;
    Ok((gradient_map(&luma(gen))?, gradient_map(&luma(truth))?))
}

/// Mean absolute difference of the gradient maps (luminance for RGB input).
pub fn gra_l1(gen: &ImageTile, truth: &ImageTile) -> Result<f64> {
    let (g, t) = gradient_pair(gen, truth)?;
    Ok(gra_l1_maps(&g, &t))
}

pub(crate) fn gra_l1_maps(g: &GradientMap, t: &GradientMap) -> f64 {
    let n = g.values().len() as f64;
    g.values()
        .iter()
        .zip(t.values())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / n
}

/// Gradient structure loss: `2 - mean_j rho(col_j) - mean_i rho(row_i)`, where
/// `rho = (|cov| + C) / (sigma_truth * sigma_gen + C)` over the gradient-map
/// columns (stabilizer `C1`) and rows (stabilizer `C2`). Lies in `[0, 2]`.
pub fn gra_str(gen: &ImageTile, truth: &ImageTile, w: &LossWeights) -> Result<f64> {
    let (g, t) = gradient_pair(gen, truth)?;
    Ok(gra_str_maps(&g, &t, w.c1_grastr, w.c2_grastr))
}

/// Per-column and per-row stabilized correlations between truth and generated maps.
pub fn column_row_rhos(
    g: &GradientMap,
    t: &GradientMap,
    c1: f64,
    c2: f64,
) -> (Vec<f64>, Vec<f64>) {
    let cols = (0..g.width())
        .map(|j| {
            let m = moments(&t.column(j), &g.column(j));
            (m.cov.abs() + c1) / (m.sigma_x() * m.sigma_y() + c1)
        })
        .collect();
    let rows = (0..g.height())
        .map(|i| {
            let m = moments(t.row(i), g.row(i));
            (m.cov.abs() + c2) / (m.sigma_x() * m.sigma_y() + c2)
        })
        .collect();
    (cols, rows)
}

pub fn gra_str_maps(g: &GradientMap, t: &GradientMap, c1: f64, c2: f64) -> f64 {
    let (cols, rows) = column_row_rhos(g, t, c1, c2);
    2.0 - cols.iter().sum::<f64>() / cols.len() as f64 - rows.iter().sum::<f64>() / rows.len() as f64
}

/// Topological consistency: gradient L1 plus gradient structure.
pub fn topo_consistency(gen: &ImageTile, truth: &ImageTile, w: &LossWeights) -> Result<f64> {
    let (g, t) = gradient_pair(gen, truth)?;
    Ok(gra_l1_maps(&g, &t) + gra_str_maps(&g, &t, w.c1_grastr, w.c2_grastr))
}

fn content_with_topology(
    label: &str,
    gen: &ImageTile,
    truth: &ImageTile,
    l1_weight: f64,
    w: &LossWeights,
) -> Result<LossBreakdown> {
    let l1 = pixel_l1(gen, truth)?;
    let (g, t) = gradient_pair(gen, truth)?;
    Ok(LossBreakdown::from_terms(
        label,
        LossKind::Content,
        &[
            ("l1", l1, l1_weight),
            ("gra_l1", gra_l1_maps(&g, &t), 1.0),
            ("gra_str", gra_str_maps(&g, &t, w.c1_grastr, w.c2_grastr), 1.0),
        ],
    ))
}

fn content_l1_only(
    label: &str,
    gen: &ImageTile,
    truth: &ImageTile,
    l1_weight: f64,
) -> Result<LossBreakdown> {
    let l1 = pixel_l1(gen, truth)?;
    Ok(LossBreakdown::from_terms(
        label,
        LossKind::Content,
        &[("l1", l1, l1_weight), ("gra_l1", 0.0, 0.0), ("gra_str", 0.0, 0.0)],
    ))
}

/// Supervised remote sensing -> map content loss.
pub fn content_sup_r2m(
    gen_map: &ImageTile,
    truth_map: &ImageTile,
    w: &LossWeights,
) -> Result<LossBreakdown> {
    content_with_topology("ctn_r2m", gen_map, truth_map, w.lambda_l1, w)
}

/// Supervised map -> remote sensing content loss.
pub fn content_sup_m2r(
    gen_rs: &ImageTile,
    truth_rs: &ImageTile,
    w: &LossWeights,
) -> Result<LossBreakdown> {
    content_l1_only("ctn_m2r", gen_rs, truth_rs, w.lambda_l1)
}

/// Cycle content loss for remote sensing -> map -> remote sensing.
pub fn content_cycle_rmr(
    recon_rs: &ImageTile,
    orig_rs: &ImageTile,
    w: &LossWeights,
) -> Result<LossBreakdown> {
    content_l1_only("ctn_rmr", recon_rs, orig_rs, w.lambda_l1u)
}

/// Cycle content loss for map -> remote sensing -> map.
pub fn content_cycle_mrm(
    recon_map: &ImageTile,
    orig_map: &ImageTile,
    w: &LossWeights,
) -> Result<LossBreakdown> {
    content_with_topology("ctn_mrm", recon_map, orig_map, w.lambda_l1u, w)
}

/// `mean(log D(real)) + mean(log(1 - D(fake)))` with logs floored at `eps`.
pub fn adversarial_loss(d_real: &[f64], d_fake: &[f64], eps: f64) -> Result<f64> {
    if d_real.is_empty() || d_fake.is_empty() {
        return Err(Error::Shape("discriminator score vectors must be non-empty".into()));
    }
    if !(eps > 0.0) {
        return Err(Error::Config(format!("eps must be > 0, got {eps}")));
    }
    if let Some(bad) = d_real
        .iter()
        .chain(d_fake)
        .find(|s| !(0.0..=1.0).contains(*s))
    {
        return Err(Error::Pixel(format!("discriminator score {bad} outside [0, 1]")));
    }
    let real = d_real.iter().map(|s| s.clamp(eps, 1.0).ln()).sum::<f64>() / d_real.len() as f64;
    let fake = d_fake
        .iter()
        .map(|s| (1.0 - s).clamp(eps, 1.0).ln())
        .sum::<f64>()
        / d_fake.len() as f64;
    Ok(real + fake)
}

/// Pixel L1 between a generator applied to its own target domain and the input.
pub fn identity_loss(g_applied_to_target: &ImageTile, target: &ImageTile) -> Result<f64> {
    pixel_l1(g_applied_to_target, target)
}

/// Combines content, adversarial and identity breakdowns with their group weights.
/// Each ledger entry is named `label.term` and carries the product of the group
/// weight and the term weight.
pub fn total_loss(parts: &[LossBreakdown], w: &LossWeights) -> LossBreakdown {
    let mut terms = BTreeMap::new();
    let mut total = 0.0;
    for part in parts {
        let group = match part.kind {
            LossKind::Content => w.lambda_ctn,
            LossKind::Adversarial => w.lambda_adv,
            LossKind::Identity => w.lambda_idt,
            LossKind::Total => 1.0,
        };
        total += group * part.total;
        for (name, term) in &part.terms {
            let key = if part.kind == LossKind::Total {
                name.clone()
            } else {
                format!("{}.{}", part.label, name)
            };
            terms.insert(
                key,
                LossTerm {
                    raw: term.raw,
                    weight: group * term.weight,
                },
            );
        }
    }
    LossBreakdown {
        label: "total".into(),
        kind: LossKind::Total,
        total,
        terms,
    }
}
