use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use maptopo_core::dataset::{load_manifest, DatasetManifest, Group, SampleRecord, Subset};
use maptopo_core::metrics::evaluate_pair_set;
use maptopo_core::trainer::{
    train, Checkpoint, Domain, FileSource, FreezeMode, ImageSource, ModelBundle, StageSelection,
    TrainingSchedule,
};
use maptopo_core::{ImageTile, LossWeights, MetricConfig, MetricMode};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{csv_writer, io_err, CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub manifest: PathBuf,
    pub epochs: usize,
    pub t_s: usize,
    pub seed: u64,
    pub freeze_mode: FreezeMode,
    pub supervised_only: bool,
    pub weights: LossWeights,
    pub log_jsonl: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub epochs: usize,
    pub steps: usize,
    pub first_epoch_loss: f64,
    pub last_epoch_loss: f64,
    pub params: Checkpoint,
}

fn schedule(epochs: usize, t_s: usize, freeze_mode: FreezeMode, supervised_only: bool) -> TrainingSchedule {
    TrainingSchedule {
        freeze_mode,
        stages: if supervised_only {
            StageSelection::SupervisedOnly
        } else {
            StageSelection::Both
        },
        ..TrainingSchedule::with_epochs(epochs, t_s)
    }
}

/// Trains the reference affine models on a manifest's training records.
pub fn cmd_train(opts: &TrainOptions) -> CliResult<TrainSummary> {
    let manifest = load_manifest(&opts.manifest)?;
    let sched = schedule(opts.epochs, opts.t_s, opts.freeze_mode, opts.supervised_only);
    let source = FileSource::new(&opts.manifest, manifest.clone());
    let mut models = ModelBundle::toy();
    let log = train(&manifest, &mut models, &opts.weights, &sched, opts.seed, &source)?;
    if let Some(path) = &opts.log_jsonl {
        let f = File::create(path).map_err(|e| io_err(path, e))?;
        log.write_jsonl(BufWriter::new(f)).map_err(|e| io_err(path, e))?;
    }
    if let Some(path) = &opts.checkpoint {
        let text = serde_json::to_string_pretty(&log.final_params)
            .map_err(|e| CliError::Internal(e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| io_err(path, e))?;
    }
    Ok(TrainSummary {
        epochs: log.epochs.len(),
        steps: log.steps.len(),
        first_epoch_loss: log.epochs.first().map_or(f64::NAN, |e| e.mean_total),
        last_epoch_loss: log.epochs.last().map_or(f64::NAN, |e| e.mean_total),
        params: log.final_params,
    })
}

pub const SWEEP_HEADER: [&str; 9] = [
    "ratio",
    "paired",
    "unpaired",
    "mse",
    "ssim",
    "essi",
    "mse_increase",
    "ssim_increase",
    "essi_increase",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub ratio: f64,
    pub paired: usize,
    pub unpaired: usize,
    /// Luminance means of MSE, SSIM and ESSI on the test subset.
    pub metrics: [f64; 3],
    /// Relative change against the previous (smaller) ratio.
    pub increase: Option<[f64; 3]>,
}

fn has_both(r: &SampleRecord) -> bool {
    r.rs_path.is_some() && r.map_path.is_some()
}

fn evaluate_generator(
    models: &ModelBundle,
    test: &[&SampleRecord],
    source: &dyn ImageSource,
) -> CliResult<[f64; 3]> {
    let mut pairs = Vec::with_capacity(test.len());
    for r in test {
        let rs = source.load(&r.id, Domain::Rs)?;
        let truth = source.load(&r.id, Domain::Map)?;
        let out = models.g_rm.forward(&rs);
        let px = out.pixels().iter().map(|v| v.clamp(0.0, 255.0)).collect();
        let gen = ImageTile::new(out.height(), out.width(), out.channels(), px)?;
        pairs.push((r.id.clone(), gen, truth));
    }
    let report = evaluate_pair_set(&pairs, &MetricConfig::default())?;
    let agg = report
        .aggregate(MetricMode::Luminance)
        .ok_or_else(|| CliError::Internal("empty evaluation".into()))?;
    Ok([agg.mse, agg.ssim, agg.essi])
}

/// Keeps the manifest's paired records fixed and drops unpaired records to
/// raise the paired ratio `P / (P + U)`. At each ratio the reference models are
/// trained from scratch and the map generator is scored on the test subset.
pub fn cmd_ratio_sweep(
    manifest_path: &Path,
    ratios: &[f64],
    seed: u64,
    epochs: usize,
    out_csv: &Path,
) -> CliResult<Vec<SweepRow>> {
    if ratios.is_empty() || ratios.iter().any(|r| !(*r > 0.0 && *r <= 1.0)) {
        return Err(CliError::Validation("ratios must be non-empty and in (0, 1]".into()));
    }
    let mut ratios = ratios.to_vec();
    ratios.sort_by(f64::total_cmp);
    ratios.dedup();

    let manifest = load_manifest(manifest_path)?;
    let test: Vec<&SampleRecord> = manifest
        .records
        .iter()
        .filter(|r| r.subset == Subset::Test && has_both(r))
        .collect();
    if test.is_empty() {
        return Err(CliError::Validation(
            "manifest has no test records (split with --test-fraction > 0)".into(),
        ));
    }
    let paired_records: Vec<&SampleRecord> = manifest.records_in(Subset::Train, Group::Paired).collect();
    let paired = paired_records.len();
    if paired == 0 {
        return Err(CliError::Validation("manifest has no paired training records".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pools: [Vec<&SampleRecord>; 2] = [
        manifest.records_in(Subset::Train, Group::UnpairedRs).collect(),
        manifest.records_in(Subset::Train, Group::UnpairedMap).collect(),
    ];
    for p in &mut pools {
        p.shuffle(&mut rng);
    }
    // Alternate between the two pools; once one runs dry the other continues.
    let mut unpaired_order = Vec::with_capacity(pools[0].len() + pools[1].len());
    for k in 0..pools[0].len().max(pools[1].len()) {
        unpaired_order.extend(pools.iter().filter_map(|p| p.get(k).copied()));
    }

    let eval_source = FileSource::new(manifest_path, manifest.clone());
    let mut rows: Vec<SweepRow> = Vec::with_capacity(ratios.len());
    for &ratio in &ratios {
        let unpaired = ((paired as f64 / ratio).round() as usize).saturating_sub(paired);
        if unpaired > unpaired_order.len() {
            return Err(CliError::Validation(format!(
                "ratio {ratio} needs {unpaired} unpaired records, the manifest has {}",
                unpaired_order.len()
            )));
        }
        let mut records: Vec<SampleRecord> = paired_records.iter().map(|r| (*r).clone()).collect();
        records.extend(unpaired_order[..unpaired].iter().map(|r| (*r).clone()));
        records.sort_by(|a, b| a.id.cmp(&b.id));
        let sub = DatasetManifest {
            version: manifest.version,
            seed,
            records,
        };
        let source = FileSource::new(manifest_path, sub.clone());
        let mut models = ModelBundle::toy();
        let sched = schedule(epochs, epochs, FreezeMode::CycleOnly, false);
        train(&sub, &mut models, &LossWeights::default(), &sched, seed, &source)?;
        let metrics = evaluate_generator(&models, &test, &eval_source)?;
        let increase = rows.last().and_then(|prev| {
            let mut out = [0.0; 3];
            for k in 0..3 {
                if prev.metrics[k] == 0.0 {
                    return None;
                }
                out[k] = (metrics[k] - prev.metrics[k]) / prev.metrics[k].abs();
            }
            Some(out)
        });
        rows.push(SweepRow {
            ratio,
            paired,
            unpaired,
            metrics,
            increase,
        });
    }

    let mut w = csv_writer(out_csv)?;
    w.write_record(SWEEP_HEADER)?;
    for r in &rows {
        let mut rec = vec![r.ratio.to_string(), r.paired.to_string(), r.unpaired.to_string()];
        rec.extend(r.metrics.iter().map(f64::to_string));
        match r.increase {
            Some(inc) => rec.extend(inc.iter().map(f64::to_string)),
            None => rec.extend(std::iter::repeat_n(String::new(), 3)),
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| io_err(out_csv, e))?;
    Ok(rows)
}
