use std::collections::BTreeMap;

use maptopo_core::losses::{finite_difference_check, is_smooth_at};
use maptopo_core::{ImageTile, LossId, LossWeights};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{CliError, CliResult};

pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub seed: u64,
    pub pairs: usize,
    pub size: usize,
    pub step: f64,
    /// Worst relative error per loss.
    pub max_rel_error: BTreeMap<String, f64>,
    /// Random pairs discarded because a loss kink lay within the step.
    pub resampled: BTreeMap<String, usize>,
}

impl GradcheckReport {
    pub fn worst(&self) -> f64 {
        self.max_rel_error.values().copied().fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.worst() < GRADCHECK_TOLERANCE
    }
}

fn random_tile(rng: &mut ChaCha8Rng, size: usize) -> CliResult<ImageTile> {
    let px = (0..size * size).map(|_| rng.random_range(0.0..255.0)).collect();
    Ok(ImageTile::new(size, size, 1, px)?)
}

/// Compares analytic pixel gradients of every loss with central differences on
/// `pairs` random `size`x`size` pairs per loss. Pairs whose losses are not smooth
/// within the step are redrawn. Fails when any relative error reaches 1e-4.
pub fn cmd_gradcheck(seed: u64, pairs: usize, size: usize, step: f64) -> CliResult<GradcheckReport> {
    if pairs == 0 || size < 3 || !(step > 0.0) {
        return Err(CliError::Validation(
            "gradcheck needs pairs >= 1, size >= 3 and a positive step".into(),
        ));
    }
    let w = LossWeights::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_rel_error = BTreeMap::new();
    let mut resampled = BTreeMap::new();
    for id in LossId::ALL {
        let (mut worst, mut skipped, mut done) = (0.0f64, 0usize, 0usize);
        while done < pairs {
            let gen = random_tile(&mut rng, size)?;
            let truth = random_tile(&mut rng, size)?;
            if !is_smooth_at(id, &gen, &truth, step)? {
                skipped += 1;
                if skipped > 1000 * pairs {
                    return Err(CliError::Internal(format!(
                        "{id}: could not draw a smooth pair after {skipped} attempts"
                    )));
                }
                continue;
            }
            worst = worst.max(finite_difference_check(id, &gen, &truth, &w, step)?);
            done += 1;
        }
        max_rel_error.insert(id.to_string(), worst);
        resampled.insert(id.to_string(), skipped);
    }
    let report = GradcheckReport {
        seed,
        pairs,
        size,
        step,
        max_rel_error,
        resampled,
    };
    Ok(report)
}
