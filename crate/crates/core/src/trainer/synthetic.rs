//! Synthetic affine dataset: maps are a known colour transform of random
//! remote-sensing tiles, so a trained affine generator can be checked against it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::run::{Domain, InMemorySource};
use crate::dataset::{DatasetManifest, Group, SampleRecord, Subset, MANIFEST_VERSION};
use crate::error::Result;
use crate::tile::ImageTile;
use crate::trainer::ToyAffineGenerator;

#[derive(Debug, Clone, PartialEq)]
pub struct AffineTask {
    pub matrix: [[f64; 3]; 3],
    /// Full-scale units, as in [`ToyAffineGenerator::new`].
    pub offset: [f64; 3],
    pub paired: usize,
    /// Split evenly between remote-sensing-only and map-only records.
    pub unpaired: usize,
    pub size: usize,
    pub rs_range: (f64, f64),
    pub seed: u64,
}

impl Default for AffineTask {
    fn default() -> Self {
        Self {
            matrix: [[0.9, 0.1, 0.0], [0.05, 0.8, 0.1], [0.0, 0.1, 1.1]],
            offset: [0.04, -0.02, 0.0],
            paired: 200,
            unpaired: 200,
            size: 32,
            rs_range: (40.0, 200.0),
            seed: 0,
        }
    }
}

impl AffineTask {
    pub fn true_params(&self) -> Vec<f64> {
        use crate::trainer::Generator;
        ToyAffineGenerator::new(self.matrix, self.offset).params().to_vec()
    }

    /// Frobenius norm of `params - truth` over the norm of `truth`.
    pub fn relative_error(&self, params: &[f64]) -> f64 {
        let truth = self.true_params();
        let num: f64 = params.iter().zip(&truth).map(|(a, b)| (a - b).powi(2)).sum();
        let den: f64 = truth.iter().map(|b| b * b).sum();
        (num / den).sqrt()
    }

    fn random_rs(&self, rng: &mut ChaCha8Rng) -> Result<ImageTile> {
        let (lo, hi) = self.rs_range;
        let n = self.size * self.size * 3;
        let px = (0..n).map(|_| rng.random_range(lo..hi)).collect();
        ImageTile::new(self.size, self.size, 3, px)
    }

    fn to_map(&self, rs: &ImageTile) -> Result<ImageTile> {
        let out = ToyAffineGenerator::apply_params(&self.true_params(), rs);
        let px = out.into_pixels().into_iter().map(|v| v.clamp(0.0, 255.0)).collect();
        ImageTile::new(self.size, self.size, 3, px)
    }

    pub fn build(&self) -> Result<(DatasetManifest, InMemorySource)> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut source = InMemorySource::new();
        let mut records = Vec::new();
        let total = self.paired + self.unpaired;
        for i in 0..total {
            let id = format!("s{i:05}");
            let group = if i < self.paired {
                Group::Paired
            } else if (i - self.paired) % 2 == 0 {
                Group::UnpairedRs
            } else {
                Group::UnpairedMap
            };
            let rs = self.random_rs(&mut rng)?;
            let (mut rs_path, mut map_path) = (None, None);
            if group != Group::UnpairedMap {
                rs_path = Some(format!("rs/{id}.png"));
                source.insert(&id, Domain::Rs, rs.clone());
            }
            if group != Group::UnpairedRs {
                map_path = Some(format!("map/{id}.png"));
                source.insert(&id, Domain::Map, self.to_map(&rs)?);
            }
            records.push(SampleRecord {
                id,
                rs_path,
                map_path,
                group,
                subset: Subset::Train,
            });
        }
        let manifest = DatasetManifest {
            version: MANIFEST_VERSION,
            seed: self.seed,
            records,
        };
        manifest.validate()?;
        Ok((manifest, source))
    }
}
