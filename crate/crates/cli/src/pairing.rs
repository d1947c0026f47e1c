use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::{io_err, CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairedFile {
    pub stem: String,
    pub left: PathBuf,
    pub right: PathBuf,
}

fn png_stems(dir: &Path) -> CliResult<BTreeMap<String, PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::Validation(format!("{}: no such directory", dir.display())),
        _ => io_err(dir, e),
    })?;
    let mut out = BTreeMap::new();
    for entry in entries {
        let path = entry.map_err(|e| io_err(dir, e))?.path();
        let is_png = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if !is_png || !path.is_file() {
            continue;
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        out.insert(stem, path);
    }
    Ok(out)
}

/// Matches PNG files with identical stems in two directories, sorted by stem.
/// Any file without a counterpart is an error naming every orphan.
pub fn pair_dirs(left: &Path, right: &Path) -> CliResult<Vec<PairedFile>> {
    let l = png_stems(left)?;
    let r = png_stems(right)?;
    let mut orphans: Vec<String> = l
        .iter()
        .filter(|(s, _)| !r.contains_key(*s))
        .map(|(_, p)| p.display().to_string())
        .collect();
    orphans.extend(
        r.iter()
            .filter(|(s, _)| !l.contains_key(*s))
            .map(|(_, p)| p.display().to_string()),
    );
    if !orphans.is_empty() {
        return Err(CliError::Validation(format!(
            "unmatched files: {}",
            orphans.join(", ")
        )));
    }
    if l.is_empty() {
        return Err(CliError::Validation(format!("no PNG files in {}", left.display())));
    }
    Ok(l.into_iter()
        .map(|(stem, left)| {
            let right = r[&stem].clone();
            PairedFile { stem, left, right }
        })
        .collect())
}
