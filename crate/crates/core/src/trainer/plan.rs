use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetManifest, Group, Subset};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageSelection {
    /// Unsupervised pre-training on unpaired samples, then supervised fine-tuning.
    Both,
    SupervisedOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreezeMode {
    /// A frozen first-step generator ignores only the cycle-content loss.
    CycleOnly,
    /// A frozen first-step generator receives no update at all.
    AllTerms,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingSchedule {
    pub epochs: usize,
    /// First epoch at which the first-step generator is frozen in cycle steps.
    pub t_s: usize,
    pub base_lr: f64,
    /// Epoch at which linear decay to zero begins.
    pub decay_start: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub batch_size: usize,
    pub stages: StageSelection,
    pub freeze_mode: FreezeMode,
}

impl Default for TrainingSchedule {
    fn default() -> Self {
        Self::with_epochs(200, 150)
    }
}

impl TrainingSchedule {
    /// Defaults with the decay starting halfway through.
    pub fn with_epochs(epochs: usize, t_s: usize) -> Self {
        Self {
            epochs,
            t_s,
            base_lr: 2e-4,
            decay_start: epochs / 2,
            adam_beta1: 0.5,
            adam_beta2: 0.999,
            batch_size: 1,
            stages: StageSelection::Both,
            freeze_mode: FreezeMode::CycleOnly,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if self.t_s == 0 || self.t_s > self.epochs {
            return Err(Error::Config(format!(
                "t_s must be in 1..={}, got {}",
                self.epochs, self.t_s
            )));
        }
        if self.decay_start > self.epochs {
            return Err(Error::Config(format!(
                "decay_start {} exceeds epochs {}",
                self.decay_start, self.epochs
            )));
        }
        for (name, b) in [("beta1", self.adam_beta1), ("beta2", self.adam_beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(Error::Config(format!("adam {name} must be in (0, 1), got {b}")));
            }
        }
        if !(self.base_lr > 0.0) {
            return Err(Error::Config(format!("base_lr must be > 0, got {}", self.base_lr)));
        }
        if self.batch_size != 1 {
            return Err(Error::Config("only batch size 1 is supported".into()));
        }
        Ok(())
    }

    /// Constant until `decay_start`, then linear to zero at `epochs`.
    pub fn learning_rate(&self, epoch: usize) -> f64 {
        if epoch < self.decay_start || self.epochs == self.decay_start {
            self.base_lr
        } else {
            let remaining = self.epochs.saturating_sub(epoch) as f64;
            self.base_lr * remaining / (self.epochs - self.decay_start) as f64
        }
    }

    pub fn freeze_active(&self, epoch: usize) -> bool {
        epoch >= self.t_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Unsupervised,
    Supervised,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// remote sensing -> map -> remote sensing
    Rmr,
    /// map -> remote sensing -> map
    Mrm,
    /// supervised translation in both directions
    Paired,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanStep {
    pub stage: Stage,
    pub direction: Direction,
    /// The primary sample, then (for cycle steps) an unpaired sample from the
    /// other domain used for the real side of the adversarial loss and the
    /// identity loss.
    pub sample_ids: Vec<String>,
    pub freeze_first_step: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochPlan {
    pub epoch: usize,
    pub steps: Vec<PlanStep>,
}

impl EpochPlan {
    /// Every unsupervised step comes before every supervised one.
    pub fn stage_order_holds(&self) -> bool {
        let first_sup = self
            .steps
            .iter()
            .position(|s| s.stage == Stage::Supervised)
            .unwrap_or(self.steps.len());
        self.steps[first_sup..]
            .iter()
            .all(|s| s.stage == Stage::Supervised)
    }
}

/// splitmix64 finalizer, used to derive per-epoch seeds.
pub(crate) fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn ids(manifest: &DatasetManifest, group: Group) -> Vec<String> {
    manifest
        .records_in(Subset::Train, group)
        .map(|r| r.id.clone())
        .collect()
}

pub fn build_epoch_plan(
    manifest: &DatasetManifest,
    epoch: usize,
    sched: &TrainingSchedule,
    seed: u64,
) -> Result<EpochPlan> {
    let paired = ids(manifest, Group::Paired);
    let (mut rs, mut maps) = match sched.stages {
        StageSelection::Both => (ids(manifest, Group::UnpairedRs), ids(manifest, Group::UnpairedMap)),
        StageSelection::SupervisedOnly => (Vec::new(), Vec::new()),
    };
    if paired.is_empty() && rs.is_empty() && maps.is_empty() {
        return Err(Error::Validation("manifest has no training records".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, epoch as u64));
    let freeze = sched.freeze_active(epoch);

    let mut unsup: Vec<(Direction, String)> = rs
        .iter()
        .map(|id| (Direction::Rmr, id.clone()))
        .chain(maps.iter().map(|id| (Direction::Mrm, id.clone())))
        .collect();
    unsup.shuffle(&mut rng);
    rs.shuffle(&mut rng);
    maps.shuffle(&mut rng);

    let (mut next_rs, mut next_map) = (0usize, 0usize);
    let mut steps = Vec::with_capacity(unsup.len() + paired.len());
    for (direction, id) in unsup {
        let partner = match direction {
            Direction::Rmr if !maps.is_empty() => {
                next_map += 1;
                Some(maps[(next_map - 1) % maps.len()].clone())
            }
            Direction::Mrm if !rs.is_empty() => {
                next_rs += 1;
                Some(rs[(next_rs - 1) % rs.len()].clone())
            }
            _ => None,
        };
        let mut sample_ids = vec![id];
        sample_ids.extend(partner);
        steps.push(PlanStep {
            stage: Stage::Unsupervised,
            direction,
            sample_ids,
            freeze_first_step: freeze,
        });
    }

    let mut paired = paired;
    paired.shuffle(&mut rng);
    steps.extend(paired.into_iter().map(|id| PlanStep {
        stage: Stage::Supervised,
        direction: Direction::Paired,
        sample_ids: vec![id],
        freeze_first_step: false,
    }));

    Ok(EpochPlan { epoch, steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{split, SourcePair, SplitConfig};

    fn manifest(n: usize, ratio: f64) -> DatasetManifest {
        let src: Vec<SourcePair> = (0..n)
            .map(|i| SourcePair {
                id: format!("t{i:03}"),
                rs_path: format!("rs{i}.png"),
                map_path: format!("map{i}.png"),
            })
            .collect();
        split(
            &src,
            &SplitConfig {
                paired_ratio: ratio,
                seed: 1,
                test_fraction: 0.0,
            },
        )
        .unwrap()
    }

    #[test]
    fn learning_rate_schedule() {
        let s = TrainingSchedule::with_epochs(200, 150);
        assert_eq!(s.decay_start, 100);
        assert_eq!(s.learning_rate(0), 2e-4);
        assert_eq!(s.learning_rate(100), 2e-4);
        assert!((s.learning_rate(150) - 1e-4).abs() < 1e-18);
        assert_eq!(s.learning_rate(200), 0.0);
    }

    #[test]
    fn freeze_flags_follow_threshold() {
        let m = manifest(20, 0.5);
        let s = TrainingSchedule::with_epochs(200, 150);
        let p0 = build_epoch_plan(&m, 0, &s, 7).unwrap();
        assert!(p0.steps.iter().all(|s| !s.freeze_first_step));
        let p150 = build_epoch_plan(&m, 150, &s, 7).unwrap();
        for step in &p150.steps {
            assert_eq!(step.freeze_first_step, step.stage == Stage::Unsupervised);
        }
        assert!(p150.stage_order_holds());
    }

    #[test]
    fn plan_covers_every_train_record() {
        let m = manifest(21, 0.3);
        let p = build_epoch_plan(&m, 3, &TrainingSchedule::with_epochs(10, 5), 2).unwrap();
        let mut primaries: Vec<&str> = p.steps.iter().map(|s| s.sample_ids[0].as_str()).collect();
        primaries.sort();
        let mut all: Vec<&str> = m.records.iter().map(|r| r.id.as_str()).collect();
        all.sort();
        assert_eq!(primaries, all);
        for step in &p.steps {
            let rec = m.get(&step.sample_ids[0]).unwrap();
            let expected = match rec.group {
                Group::Paired => Direction::Paired,
                Group::UnpairedRs => Direction::Rmr,
                Group::UnpairedMap => Direction::Mrm,
            };
            assert_eq!(step.direction, expected);
        }
    }

    #[test]
    fn paired_only_manifest_is_all_supervised() {
        let m = manifest(10, 1.0);
        let p = build_epoch_plan(&m, 0, &TrainingSchedule::with_epochs(10, 5), 0).unwrap();
        assert!(p.steps.iter().all(|s| s.stage == Stage::Supervised));
        assert_eq!(p.steps.len(), 10);
    }

    #[test]
    fn empty_manifest_is_rejected() {
        let m = DatasetManifest {
            version: 1,
            seed: 0,
            records: vec![],
        };
        assert!(build_epoch_plan(&m, 0, &TrainingSchedule::with_epochs(10, 5), 0).is_err());
    }

    #[test]
    fn schedule_validation() {
        assert!(TrainingSchedule::with_epochs(10, 0).validate().is_err());
        assert!(TrainingSchedule::with_epochs(10, 11).validate().is_err());
        let mut s = TrainingSchedule::with_epochs(10, 5);
        s.adam_beta1 = 1.0;
        assert!(s.validate().is_err());
        assert!(TrainingSchedule::default().validate().is_ok());
    }
}
