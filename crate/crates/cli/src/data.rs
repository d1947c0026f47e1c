use std::path::Path;

use maptopo_core::dataset::{save_manifest, split, Group, SourcePair, SplitConfig, Subset};
use maptopo_core::{ImageTile, TileGrid};
use serde::{Deserialize, Serialize};

use crate::pairing::pair_dirs;
use crate::{io_err, read_json, CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub paired: usize,
    pub unpaired_rs: usize,
    pub unpaired_map: usize,
    pub test: usize,
}

/// Path of `target` as written into a manifest stored in `manifest_dir`:
/// relative when it lies below that directory, absolute otherwise.
fn manifest_entry(manifest_dir: &Path, target: &Path) -> CliResult<String> {
    let target = target.canonicalize().map_err(|e| io_err(target, e))?;
    let rel = match manifest_dir.canonicalize() {
        Ok(base) => target.strip_prefix(&base).map(Path::to_path_buf).unwrap_or(target.clone()),
        Err(_) => target.clone(),
    };
    rel.to_str()
        .map(|s| s.replace('\\', "/"))
        .ok_or_else(|| CliError::Validation(format!("{} is not valid UTF-8", rel.display())))
}

/// Pairs remote-sensing and map tiles by file stem, splits them and writes the manifest.
pub fn cmd_split(
    rs_dir: &Path,
    map_dir: &Path,
    paired_ratio: f64,
    seed: u64,
    test_fraction: f64,
    out_manifest: &Path,
) -> CliResult<SplitSummary> {
    let files = pair_dirs(rs_dir, map_dir)?;
    let manifest_dir = out_manifest
        .parent()
        .filter(|d| !d.as_os_str().is_empty())
        .unwrap_or(Path::new("."))
        .to_path_buf();
    std::fs::create_dir_all(&manifest_dir).map_err(|e| io_err(&manifest_dir, e))?;
    let sources = files
        .iter()
        .map(|f| {
            Ok(SourcePair {
                id: f.stem.clone(),
                rs_path: manifest_entry(&manifest_dir, &f.left)?,
                map_path: manifest_entry(&manifest_dir, &f.right)?,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let manifest = split(
        &sources,
        &SplitConfig {
            paired_ratio,
            seed,
            test_fraction,
        },
    )?;
    save_manifest(&manifest, out_manifest)?;
    Ok(SplitSummary {
        paired: manifest.count(Subset::Train, Group::Paired),
        unpaired_rs: manifest.count(Subset::Train, Group::UnpairedRs),
        unpaired_map: manifest.count(Subset::Train, Group::UnpairedMap),
        test: manifest.count(Subset::Test, Group::Paired),
    })
}

pub const TILE_INDEX: &str = "tiles.json";

/// Written next to the tiles by `cmd_tile`; `cmd_stitch` reads it back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileIndex {
    pub v: u32,
    pub rows: usize,
    pub cols: usize,
    pub tile_size: usize,
    pub source_height: usize,
    pub source_width: usize,
    /// Row-major tile file names.
    pub files: Vec<String>,
}

pub fn cmd_tile(input: &Path, k: usize, resize: Option<usize>, out_dir: &Path) -> CliResult<TileIndex> {
    let img = ImageTile::read_png(input)?;
    let grid = maptopo_core::dataset::tile_image(&img, k, resize)?;
    std::fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let mut files = Vec::with_capacity(k * k);
    for (idx, tile) in grid.tiles().iter().enumerate() {
        let name = format!("tile_r{:02}_c{:02}.png", idx / k, idx % k);
        tile.write_png(out_dir.join(&name))?;
        files.push(name);
    }
    let index = TileIndex {
        v: 1,
        rows: grid.rows(),
        cols: grid.cols(),
        tile_size: grid.tile_size(),
        source_height: img.height(),
        source_width: img.width(),
        files,
    };
    let path = out_dir.join(TILE_INDEX);
    let text = serde_json::to_string_pretty(&index).map_err(|e| CliError::Internal(e.to_string()))?;
    std::fs::write(&path, text + "\n").map_err(|e| io_err(&path, e))?;
    Ok(index)
}

/// Reassembles a `cmd_tile` directory into one PNG; returns its height and width.
pub fn cmd_stitch(tile_dir: &Path, out_png: &Path) -> CliResult<(usize, usize)> {
    let index: TileIndex = read_json(&tile_dir.join(TILE_INDEX))?;
    if index.v != 1 {
        return Err(CliError::Validation(format!("unsupported tile index version {}", index.v)));
    }
    let tiles = index
        .files
        .iter()
        .map(|f| ImageTile::read_png(tile_dir.join(f)))
        .collect::<Result<Vec<_>, _>>()?;
    let grid = TileGrid::new(index.rows, index.cols, tiles)?;
    let img = grid.stitch()?;
    if let Some(dir) = out_png.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    img.write_png(out_png)?;
    Ok((img.height(), img.width()))
}
