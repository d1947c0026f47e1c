use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Population (divide-by-n) first and second moments of a vector pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean_x: f64,
    pub mean_y: f64,
    pub var_x: f64,
    pub var_y: f64,
    pub cov: f64,
}

impl Moments {
    pub fn sigma_x(&self) -> f64 {
        self.var_x.sqrt()
    }

    pub fn sigma_y(&self) -> f64 {
        self.var_y.sqrt()
    }
}

/// Two-pass population moments. The caller guarantees equal, non-zero lengths.
pub fn moments(x: &[f64], y: &[f64]) -> Moments {
    debug_assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mean_x = x.iter().sum::<f64>() / n;
    let mean_y = y.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mean_x, b - mean_y);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    Moments {
        mean_x,
        mean_y,
        var_x: sxx / n,
        var_y: syy / n,
        cov: sxy / n,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationTerms {
    pub mu_x: f64,
    pub mu_y: f64,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub sigma_xy: f64,
    /// `(|sigma_xy| + C1) / (sigma_x * sigma_y + C1)`
    pub rho: f64,
    /// `(2 mu_x mu_y + C2) / (mu_x^2 + mu_y^2 + C2)`
    pub theta: f64,
}

impl CorrelationTerms {
    pub fn from_moments(m: &Moments, c1: f64, c2: f64) -> Self {
        let (sx, sy) = (m.sigma_x(), m.sigma_y());
        Self {
            mu_x: m.mean_x,
            mu_y: m.mean_y,
            sigma_x: sx,
            sigma_y: sy,
            sigma_xy: m.cov,
            rho: stabilized_rho(m.cov, sx, sy, c1),
            theta: (2.0 * m.mean_x * m.mean_y + c2)
                / (m.mean_x * m.mean_x + m.mean_y * m.mean_y + c2),
        }
    }
}

#[inline]
pub(crate) fn stabilized_rho(cov: f64, sigma_x: f64, sigma_y: f64, c: f64) -> f64 {
    (cov.abs() + c) / (sigma_x * sigma_y + c)
}

/// Stabilized absolute Pearson correlation with the same constant for `rho` and `theta`.
pub fn stabilized_abs_correlation(x: &[f64], y: &[f64], c: f64) -> Result<CorrelationTerms> {
    stabilized_abs_correlation_with(x, y, c, c)
}

pub fn stabilized_abs_correlation_with(
    x: &[f64],
    y: &[f64],
    c1: f64,
    c2: f64,
) -> Result<CorrelationTerms> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!(
            "vector lengths differ: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::Shape(format!(
            "correlation needs at least 2 samples, got {}",
            x.len()
        )));
    }
    if !(c1 > 0.0 && c2 > 0.0) {
        return Err(Error::Config(format!(
            "stabilizers must be positive, got {c1}, {c2}"
        )));
    }
    Ok(CorrelationTerms::from_moments(&moments(x, y), c1, c2))
}
