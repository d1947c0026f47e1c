use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use maptopo_core::metrics::{evaluate_pair_set, AggregateMetrics, TileMetrics};
use maptopo_core::{ImageTile, MetricConfig, MetricMode, MetricReport};
use serde::{Deserialize, Serialize};

use crate::pairing::pair_dirs;
use crate::{csv_writer, read_json, relative_to, CliError, CliResult};

pub const METRICS_HEADER: [&str; 4] = ["tile_id", "metric", "mode", "value"];
pub const COMPARE_HEADER: [&str; 5] = ["model", "dataset", "metric", "rgbmean", "luminance"];
pub const ABLATION_HEADER: [&str; 5] = ["table", "component", "MSE", "SSIM", "ESSI"];

/// Row id used for the per-mode means in the metrics CSV.
const MEAN_ROW: &str = "mean";

const METRIC_NAMES: [&str; 3] = ["MSE", "SSIM", "ESSI"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeSelection {
    Luminance,
    Rgbmean,
    Both,
}

impl ModeSelection {
    pub fn includes(&self, mode: MetricMode) -> bool {
        match self {
            ModeSelection::Both => true,
            ModeSelection::Luminance => mode == MetricMode::Luminance,
            ModeSelection::Rgbmean => mode == MetricMode::RgbMean,
        }
    }
}

impl FromStr for ModeSelection {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "luminance" => Ok(ModeSelection::Luminance),
            "rgbmean" => Ok(ModeSelection::Rgbmean),
            "both" => Ok(ModeSelection::Both),
            _ => Err(CliError::Validation(format!(
                "unknown mode {s:?} (expected luminance, rgbmean or both)"
            ))),
        }
    }
}

fn values(m: &TileMetrics) -> [f64; 3] {
    [m.mse, m.ssim, m.essi]
}

fn agg_values(m: &AggregateMetrics) -> [f64; 3] {
    [m.mse, m.ssim, m.essi]
}

fn merge(parts: Vec<MetricReport>) -> MetricReport {
    let mut records = Vec::new();
    let mut sums: BTreeMap<&'static str, (MetricMode, usize, [f64; 3])> = BTreeMap::new();
    for part in parts {
        for a in &part.aggregates {
            let e = sums.entry(a.mode.as_str()).or_insert((a.mode, 0, [0.0; 3]));
            e.1 += a.count;
            for (s, v) in e.2.iter_mut().zip(agg_values(a)) {
                *s += v * a.count as f64;
            }
        }
        records.extend(part.records);
    }
    let aggregates = MetricMode::ALL
        .iter()
        .filter_map(|m| sums.get(m.as_str()))
        .map(|&(mode, count, s)| {
            let n = count as f64;
            AggregateMetrics {
                mode,
                count,
                mse: s[0] / n,
                ssim: s[1] / n,
                essi: s[2] / n,
            }
        })
        .collect();
    MetricReport {
        records,
        aggregates,
    }
}

/// Evaluates every stem-matched PNG pair of two directories in both modes.
/// Pairs are split across threads; results keep stem order.
pub(crate) fn evaluate_dirs(gen_dir: &Path, truth_dir: &Path) -> CliResult<MetricReport> {
    let pairs = pair_dirs(gen_dir, truth_dir)?;
    let cfg = MetricConfig::default();
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let chunk = pairs.len().div_ceil(workers).max(1);
    let parts = std::thread::scope(|scope| {
        let handles: Vec<_> = pairs
            .chunks(chunk)
            .map(|files| {
                let cfg = &cfg;
                scope.spawn(move || -> CliResult<MetricReport> {
                    let mut loaded = Vec::with_capacity(files.len());
                    for f in files {
                        let gen = ImageTile::read_png(&f.left)?;
                        let truth = ImageTile::read_png(&f.right)?;
                        if !gen.same_shape(&truth) {
                            return Err(CliError::Validation(format!(
                                "{}: {}x{}x{} does not match {} ({}x{}x{})",
                                f.left.display(),
                                gen.height(),
                                gen.width(),
                                gen.channels(),
                                f.right.display(),
                                truth.height(),
                                truth.width(),
                                truth.channels()
                            )));
                        }
                        loaded.push((f.stem.clone(), gen, truth));
                    }
                    Ok(evaluate_pair_set(&loaded, cfg)?)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(CliError::Internal("worker panicked".into()))))
            .collect::<CliResult<Vec<_>>>()
    })?;
    Ok(merge(parts))
}

/// Per-tile and mean metrics for a generated directory against its ground truth.
pub fn cmd_metrics(
    generated_dir: &Path,
    truth_dir: &Path,
    mode: ModeSelection,
    out_csv: &Path,
) -> CliResult<MetricReport> {
    let full = evaluate_dirs(generated_dir, truth_dir)?;
    let report = MetricReport {
        records: full.records.into_iter().filter(|r| mode.includes(r.mode)).collect(),
        aggregates: full.aggregates.into_iter().filter(|a| mode.includes(a.mode)).collect(),
    };
    let mut w = csv_writer(out_csv)?;
    w.write_record(METRICS_HEADER)?;
    for r in &report.records {
        for (name, v) in METRIC_NAMES.iter().zip(values(r)) {
            w.write_record([r.tile_id.as_str(), name, r.mode.as_str(), &v.to_string()])?;
        }
    }
    for a in &report.aggregates {
        for (name, v) in METRIC_NAMES.iter().zip(agg_values(a)) {
            w.write_record([MEAN_ROW, name, a.mode.as_str(), &v.to_string()])?;
        }
    }
    w.flush().map_err(|e| crate::io_err(out_csv, e))?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDir {
    pub name: String,
    pub dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    pub models: Vec<ModelDir>,
    pub truth_dir: PathBuf,
    #[serde(default = "both")]
    pub mode: ModeSelection,
    /// Defaults to the name of the truth directory.
    #[serde(default)]
    pub dataset: Option<String>,
}

fn both() -> ModeSelection {
    ModeSelection::Both
}

fn luminance() -> ModeSelection {
    ModeSelection::Luminance
}

fn dataset_name(explicit: &Option<String>, truth_dir: &Path) -> String {
    explicit.clone().unwrap_or_else(|| {
        truth_dir
            .file_name()
            .and_then(|s| s.to_str())
            .unwrap_or("dataset")
            .to_string()
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// One row per (model, metric) with the RGB-mean and luminance means side by side.
/// A mode excluded by the config leaves its column empty.
pub fn cmd_compare(config_json: &Path, out_csv: &Path) -> CliResult<Vec<(String, MetricReport)>> {
    let cfg: CompareConfig = read_json(config_json)?;
    if cfg.models.is_empty() {
        return Err(CliError::Validation("compare config lists no models".into()));
    }
    let truth = relative_to(config_json, &cfg.truth_dir);
    let dataset = dataset_name(&cfg.dataset, &cfg.truth_dir);
    let mut reports = Vec::new();
    for m in &cfg.models {
        reports.push((m.name.clone(), evaluate_dirs(&relative_to(config_json, &m.dir), &truth)?));
    }
    let mut w = csv_writer(out_csv)?;
    w.write_record(COMPARE_HEADER)?;
    for (name, report) in &reports {
        let pick = |mode: MetricMode, k: usize| {
            cfg.mode
                .includes(mode)
                .then(|| report.aggregate(mode).map(|a| agg_values(a)[k]))
                .flatten()
        };
        for (k, metric) in METRIC_NAMES.iter().enumerate() {
            w.write_record([
                name.as_str(),
                dataset.as_str(),
                metric,
                &fmt_opt(pick(MetricMode::RgbMean, k)),
                &fmt_opt(pick(MetricMode::Luminance, k)),
            ])?;
        }
    }
    w.flush().map_err(|e| crate::io_err(out_csv, e))?;
    Ok(reports)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationVariant {
    pub name: String,
    pub dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationConfig {
    pub truth_dir: PathBuf,
    pub variants: Vec<AblationVariant>,
    #[serde(default = "luminance")]
    pub mode: ModeSelection,
}

/// The three ablation tables: the ablated component and its rows in order.
pub fn ablation_tables() -> [(&'static str, [&'static str; 4]); 3] {
    [
        ("L1", ["Full", "L1", "L1&GraStr", "L1&GraL1"]),
        ("GraL1", ["Full", "GraL1", "GraStr&GraL1", "L1&GraL1"]),
        ("GraStr", ["Full", "GraStr", "GraStr&GraL1", "L1&GraStr"]),
    ]
}

fn canonical_variant(name: &str) -> Option<&'static str> {
    let squashed: String = name.chars().filter(|c| !c.is_whitespace()).collect();
    ablation_tables()
        .iter()
        .flat_map(|(_, rows)| rows.iter().copied())
        .find(|r| r.eq_ignore_ascii_case(&squashed))
}

/// Evaluates each loss-combination directory once and lays the means out as the
/// three ablation tables. Uses the luminance means unless the config says otherwise.
pub fn cmd_ablation(config_json: &Path, out_csv: &Path) -> CliResult<BTreeMap<String, [f64; 3]>> {
    let cfg: AblationConfig = read_json(config_json)?;
    let mode = match cfg.mode {
        ModeSelection::Rgbmean => MetricMode::RgbMean,
        ModeSelection::Luminance => MetricMode::Luminance,
        ModeSelection::Both => {
            return Err(CliError::Validation("ablation tables use a single mode".into()))
        }
    };
    let truth = relative_to(config_json, &cfg.truth_dir);
    let mut dirs: BTreeMap<&'static str, PathBuf> = BTreeMap::new();
    for v in &cfg.variants {
        let name = canonical_variant(&v.name).ok_or_else(|| {
            CliError::Validation(format!("unknown loss combination {:?}", v.name))
        })?;
        if dirs.insert(name, relative_to(config_json, &v.dir)).is_some() {
            return Err(CliError::Validation(format!("loss combination {name} listed twice")));
        }
    }
    let mut missing: Vec<&str> = ablation_tables()
        .iter()
        .flat_map(|(_, rows)| rows.iter().copied())
        .filter(|r| !dirs.contains_key(r))
        .collect();
    missing.sort();
    missing.dedup();
    if !missing.is_empty() {
        return Err(CliError::Validation(format!(
            "ablation config is missing {}",
            missing.join(", ")
        )));
    }

    let mut means = BTreeMap::new();
    for (name, dir) in &dirs {
        let report = evaluate_dirs(dir, &truth)?;
        let agg = report
            .aggregate(mode)
            .ok_or_else(|| CliError::Internal(format!("no {mode} aggregate for {name}")))?;
        means.insert(name.to_string(), agg_values(agg));
    }

    let mut w = csv_writer(out_csv)?;
    w.write_record(ABLATION_HEADER)?;
    for (table, rows) in ablation_tables() {
        for row in rows {
            let v = means[row];
            w.write_record([table, row, &v[0].to_string(), &v[1].to_string(), &v[2].to_string()])?;
        }
    }
    w.flush().map_err(|e| crate::io_err(out_csv, e))?;
    Ok(means)
}
