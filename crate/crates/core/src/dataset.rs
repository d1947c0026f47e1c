//! Dataset manifests, seeded paired/unpaired splitting and large-image tiling.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tile::{ImageTile, TileGrid};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Paired,
    UnpairedRs,
    UnpairedMap,
}

impl Group {
    pub fn as_str(&self) -> &'static str {
        match self {
            Group::Paired => "paired",
            Group::UnpairedRs => "unpaired_rs",
            Group::UnpairedMap => "unpaired_map",
        }
    }

    fn parse(s: &str) -> Option<Group> {
        [Group::Paired, Group::UnpairedRs, Group::UnpairedMap]
            .into_iter()
            .find(|g| g.as_str() == s)
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    Train,
    Test,
}

impl Subset {
    fn parse(s: &str) -> Option<Subset> {
        match s {
            "train" => Some(Subset::Train),
            "test" => Some(Subset::Test),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rs_path: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub map_path: Option<String>,
    pub group: Group,
    pub subset: Subset,
}

impl SampleRecord {
    pub fn validate(&self) -> Result<()> {
        let fail = |reason: &str| {
            Err(Error::Record {
                id: self.id.clone(),
                reason: reason.to_string(),
            })
        };
        match (self.group, &self.rs_path, &self.map_path) {
            (Group::Paired, Some(_), Some(_)) => Ok(()),
            (Group::Paired, _, _) => fail("paired record needs both rs_path and map_path"),
            (Group::UnpairedRs, Some(_), None) => Ok(()),
            (Group::UnpairedRs, _, _) => fail("unpaired_rs record must have only rs_path"),
            (Group::UnpairedMap, None, Some(_)) => Ok(()),
            (Group::UnpairedMap, _, _) => fail("unpaired_map record must have only map_path"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub seed: u64,
    pub records: Vec<SampleRecord>,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        if self.version != MANIFEST_VERSION {
            return Err(Error::Validation(format!(
                "unsupported manifest version {}",
                self.version
            )));
        }
        let mut ids = BTreeSet::new();
        let mut paths = BTreeSet::new();
        for r in &self.records {
            r.validate()?;
            if !ids.insert(r.id.as_str()) {
                return Err(Error::Record {
                    id: r.id.clone(),
                    reason: "duplicate id".into(),
                });
            }
            for p in [&r.rs_path, &r.map_path].into_iter().flatten() {
                if !paths.insert(p.as_str()) {
                    return Err(Error::Record {
                        id: r.id.clone(),
                        reason: format!("path {p:?} appears in more than one record"),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn records_in(&self, subset: Subset, group: Group) -> impl Iterator<Item = &SampleRecord> {
        self.records
            .iter()
            .filter(move |r| r.subset == subset && r.group == group)
    }

    pub fn count(&self, subset: Subset, group: Group) -> usize {
        self.records_in(subset, group).count()
    }

    pub fn get(&self, id: &str) -> Option<&SampleRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawManifest = serde_json::from_str(text)?;
        let mut records = Vec::with_capacity(raw.records.len());
        for r in raw.records {
            let group = Group::parse(&r.group).ok_or_else(|| Error::Record {
                id: r.id.clone(),
                reason: format!("unknown group {:?}", r.group),
            })?;
            let subset = Subset::parse(&r.subset).ok_or_else(|| Error::Record {
                id: r.id.clone(),
                reason: format!("unknown subset {:?}", r.subset),
            })?;
            records.push(SampleRecord {
                id: r.id,
                rs_path: r.rs_path,
                map_path: r.map_path,
                group,
                subset,
            });
        }
        let m = DatasetManifest {
            version: raw.version,
            seed: raw.seed,
            records,
        };
        m.validate()?;
        Ok(m)
    }
}

#[derive(Deserialize)]
struct RawManifest {
    version: u32,
    seed: u64,
    records: Vec<RawRecord>,
}

#[derive(Deserialize)]
struct RawRecord {
    id: String,
    rs_path: Option<String>,
    map_path: Option<String>,
    group: String,
    subset: String,
}

pub fn save_manifest(m: &DatasetManifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    m.validate()?;
    std::fs::write(path, m.to_json()?).map_err(|e| Error::io(path, e))
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    DatasetManifest::from_json(&text)
}

/// Resolves a manifest path entry relative to the directory holding the manifest.
pub fn resolve_path(manifest_path: &Path, entry: &str) -> PathBuf {
    manifest_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(entry)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    /// Fraction of training samples that keep both images.
    pub paired_ratio: f64,
    pub seed: u64,
    /// Fraction of samples held out as a fully paired test subset. Zero keeps
    /// every sample in training.
    pub test_fraction: f64,
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.paired_ratio > 0.0 && self.paired_ratio <= 1.0) {
            return Err(Error::Config(format!(
                "paired ratio must be in (0, 1], got {}",
                self.paired_ratio
            )));
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return Err(Error::Config(format!(
                "test fraction must be in [0, 1), got {}",
                self.test_fraction
            )));
        }
        Ok(())
    }
}

/// A fully paired source sample before splitting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourcePair {
    pub id: String,
    pub rs_path: String,
    pub map_path: String,
}

/// Shuffles the sources and assigns them to test, paired and unpaired pools.
///
/// After the seeded shuffle the first `round(test_fraction * n)` samples form the
/// test subset, the next `round(paired_ratio * n_train)` stay paired, and the rest
/// alternate between keeping only the remote sensing image and keeping only the
/// map, so no underlying pair contributes to both unpaired pools.
pub fn split(samples: &[SourcePair], cfg: &SplitConfig) -> Result<DatasetManifest> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::Validation("no samples to split".into()));
    }
    let mut sorted: Vec<&SourcePair> = samples.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    if let Some(dup) = sorted.windows(2).find(|w| w[0].id == w[1].id) {
        return Err(Error::Record {
            id: dup[0].id.clone(),
            reason: "duplicate sample id".into(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    sorted.shuffle(&mut rng);

    let n = sorted.len();
    let n_test = (cfg.test_fraction * n as f64).round() as usize;
    if n_test >= n {
        return Err(Error::Config(format!(
            "test fraction {} leaves no training samples out of {n}",
            cfg.test_fraction
        )));
    }
    let n_train = n - n_test;
    let n_paired = ((cfg.paired_ratio * n_train as f64).round() as usize).clamp(1, n_train);

    let mut records = Vec::with_capacity(n);
    for (pos, s) in sorted.iter().enumerate() {
        let (group, subset) = if pos < n_test {
            (Group::Paired, Subset::Test)
        } else if pos - n_test < n_paired {
            (Group::Paired, Subset::Train)
        } else if (pos - n_test - n_paired) % 2 == 0 {
            (Group::UnpairedRs, Subset::Train)
        } else {
            (Group::UnpairedMap, Subset::Train)
        };
        records.push(SampleRecord {
            id: s.id.clone(),
            rs_path: (group != Group::UnpairedMap).then(|| s.rs_path.clone()),
            map_path: (group != Group::UnpairedRs).then(|| s.map_path.clone()),
            group,
            subset,
        });
    }
    records.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(DatasetManifest {
        version: MANIFEST_VERSION,
        seed: cfg.seed,
        records,
    })
}

/// Crops a large image into a `k`x`k` grid and resizes every tile to `work_size`.
pub fn tile_image(img: &ImageTile, k: usize, work_size: Option<usize>) -> Result<TileGrid> {
    let grid = img.crop_grid(k)?;
    match work_size {
        Some(size) => grid.map(|t| t.resize(size)),
        None => Ok(grid),
    }
}

/// [`tile_image`] on a PNG file.
pub fn tile_pipeline(
    big_image: impl AsRef<Path>,
    k: usize,
    work_size: Option<usize>,
) -> Result<TileGrid> {
    tile_image(&ImageTile::read_png(big_image)?, k, work_size)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sources(n: usize) -> Vec<SourcePair> {
        (0..n)
            .map(|i| SourcePair {
                id: format!("s{i:05}"),
                rs_path: format!("rs/s{i:05}.png"),
                map_path: format!("map/s{i:05}.png"),
            })
            .collect()
    }

    fn cfg(ratio: f64, seed: u64) -> SplitConfig {
        SplitConfig {
            paired_ratio: ratio,
            seed,
            test_fraction: 0.0,
        }
    }

    #[test]
    fn ratio_counts() {
        let m = split(&sources(1000), &cfg(0.1, 3)).unwrap();
        assert_eq!(m.count(Subset::Train, Group::Paired), 100);
        assert_eq!(m.count(Subset::Train, Group::UnpairedRs), 450);
        assert_eq!(m.count(Subset::Train, Group::UnpairedMap), 450);
        m.validate().unwrap();
    }

    #[test]
    fn full_ratio_is_all_paired() {
        let m = split(&sources(37), &cfg(1.0, 1)).unwrap();
        assert!(m.records.iter().all(|r| r.group == Group::Paired));
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let a = split(&sources(50), &cfg(0.5, 9)).unwrap().to_json().unwrap();
        let b = split(&sources(50), &cfg(0.5, 9)).unwrap().to_json().unwrap();
        let c = split(&sources(50), &cfg(0.5, 10)).unwrap().to_json().unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn test_subset_stays_paired() {
        let m = split(
            &sources(100),
            &SplitConfig {
                paired_ratio: 0.1,
                seed: 4,
                test_fraction: 0.2,
            },
        )
        .unwrap();
        let test: Vec<_> = m.records.iter().filter(|r| r.subset == Subset::Test).collect();
        assert_eq!(test.len(), 20);
        assert!(test.iter().all(|r| r.group == Group::Paired));
        assert_eq!(m.count(Subset::Train, Group::Paired), 8);
    }

    #[test]
    fn split_errors() {
        assert!(split(&[], &cfg(0.5, 0)).is_err());
        assert!(split(&sources(4), &cfg(0.0, 0)).is_err());
        assert!(split(&sources(4), &cfg(1.5, 0)).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let m = split(&sources(10), &cfg(0.5, 2)).unwrap();
        save_manifest(&m, &path).unwrap();
        assert_eq!(load_manifest(&path).unwrap(), m);
    }

    #[test]
    fn paired_without_map_is_rejected() {
        let text = r#"{"version":1,"seed":0,"records":[
            {"id":"a","rs_path":"x.png","group":"paired","subset":"train"}]}"#;
        match DatasetManifest::from_json(text) {
            Err(Error::Record { id, .. }) => assert_eq!(id, "a"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_group_names_record() {
        let text = r#"{"version":1,"seed":0,"records":[
            {"id":"ok","rs_path":"a.png","map_path":"b.png","group":"paired","subset":"train"},
            {"id":"weird","rs_path":"c.png","group":"half_paired","subset":"train"}]}"#;
        let err = DatasetManifest::from_json(text).unwrap_err();
        assert!(err.to_string().contains("weird"), "{err}");
    }

    #[test]
    fn tiling_counts() {
        let img = ImageTile::filled(64, 64, 3, 5.0).unwrap();
        let grid = tile_image(&img, 8, Some(4)).unwrap();
        assert_eq!(grid.tiles().len(), 64);
        assert_eq!(grid.stitch().unwrap().height(), 32);
        let single = tile_image(&img, 1, Some(16)).unwrap();
        assert_eq!(single.tiles().len(), 1);
        assert_eq!(single.tile_size(), 16);
        assert!(matches!(
            tile_image(&ImageTile::filled(10, 10, 1, 0.0).unwrap(), 3, None),
            Err(Error::Dimension { .. })
        ));
    }
}
