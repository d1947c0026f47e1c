#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use maptopo_core::ImageTile;
use maptopo_perception::{StudyConfig, StudySample, API_VERSION};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

pub const FIXTURE_TILES: usize = 3;
pub const FIXTURE_SIZE: usize = 32;

/// Flat background with a few solid rectangles and light noise, so edge maps are not empty.
pub fn structured_tile(seed: u64, size: usize) -> ImageTile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bg: [f64; 3] = [rng.random_range(150.0..230.0), rng.random_range(150.0..230.0), 240.0];
    let mut px: Vec<f64> = (0..size * size).flat_map(|_| bg).collect();
    for _ in 0..3 {
        let colour: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..120.0f64).round());
        let (r0, c0) = (rng.random_range(0..size - 4), rng.random_range(0..size - 4));
        let (h, w) = (rng.random_range(3..size / 2), rng.random_range(3..size / 2));
        for r in r0..(r0 + h).min(size) {
            for c in c0..(c0 + w).min(size) {
                px[(r * size + c) * 3..(r * size + c) * 3 + 3].copy_from_slice(&colour);
            }
        }
    }
    for v in &mut px {
        *v = (*v + rng.random_range(-3.0..3.0f64)).round().clamp(0.0, 255.0);
    }
    ImageTile::new(size, size, 3, px).unwrap()
}

pub fn perturbed(tile: &ImageTile, seed: u64, amplitude: f64) -> ImageTile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let px = tile
        .pixels()
        .iter()
        .map(|v| (v + rng.random_range(-amplitude..=amplitude)).round().clamp(0.0, 255.0))
        .collect();
    ImageTile::new(tile.height(), tile.width(), tile.channels(), px).unwrap()
}

pub fn noise_tile(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize) -> ImageTile {
    let px = (0..h * w * c).map(|_| rng.random_range(0..=255u8) as f64).collect();
    ImageTile::new(h, w, c, px).unwrap()
}

fn write_dir(dir: &Path, tiles: &[ImageTile]) {
    fs::create_dir_all(dir).unwrap();
    for (i, t) in tiles.iter().enumerate() {
        t.write_png(dir.join(format!("tile{i:02}.png"))).unwrap();
    }
}

pub const COMPARE_MODELS: [&str; 3] = ["pix2pix", "cyclegan", "topogan"];

pub const ABLATION_VARIANTS: [&str; 7] = [
    "Full",
    "L1",
    "GraL1",
    "GraStr",
    "L1&GraStr",
    "L1&GraL1",
    "GraStr&GraL1",
];

/// Writes a truth directory, one directory per compared model and per ablation
/// variant, plus both config files. Returns (compare config, ablation config).
pub fn write_eval_fixtures(root: &Path) -> (PathBuf, PathBuf) {
    let truth: Vec<ImageTile> = (0..FIXTURE_TILES)
        .map(|i| structured_tile(100 + i as u64, FIXTURE_SIZE))
        .collect();
    write_dir(&root.join("truth"), &truth);

    let mut models = Vec::new();
    for (k, name) in COMPARE_MODELS.iter().enumerate() {
        let tiles: Vec<_> = truth
            .iter()
            .enumerate()
            .map(|(i, t)| perturbed(t, 1000 + (k * 10 + i) as u64, 4.0 * (3 - k) as f64))
            .collect();
        write_dir(&root.join("models").join(name), &tiles);
        models.push(json!({"name": name, "dir": format!("models/{name}")}));
    }
    let compare = root.join("compare.json");
    let cfg = json!({"models": models, "truth_dir": "truth", "dataset": "synthetic"});
    fs::write(&compare, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();

    let mut variants = Vec::new();
    for (k, name) in ABLATION_VARIANTS.iter().enumerate() {
        let dir = format!("ablation/v{k}");
        let tiles: Vec<_> = truth
            .iter()
            .enumerate()
            .map(|(i, t)| perturbed(t, 2000 + (k * 10 + i) as u64, 2.0 + k as f64))
            .collect();
        write_dir(&root.join(&dir), &tiles);
        variants.push(json!({"name": name, "dir": dir}));
    }
    let ablation = root.join("ablation.json");
    let cfg = json!({"truth_dir": "truth", "variants": variants});
    fs::write(&ablation, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    (compare, ablation)
}

/// Compares `actual` with `tests/golden/<name>`; `UPDATE_GOLDEN=1` rewrites the file instead.
pub fn check_golden(name: &str, actual: &str) -> Result<(), String> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var("UPDATE_GOLDEN").is_ok_and(|v| v == "1") {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(&path, actual).unwrap();
        return Ok(());
    }
    let expected = fs::read_to_string(&path)
        .map_err(|e| format!("{}: {e} (run with UPDATE_GOLDEN=1)", path.display()))?;
    if expected != actual {
        return Err(format!("{name} differs from golden:\n--- expected\n{expected}--- actual\n{actual}"));
    }
    Ok(())
}

/// A study whose image files are placeholders; the server only streams them.
pub fn write_study(dir: &Path, samples: usize, models: &[&str]) -> PathBuf {
    let mut list = Vec::new();
    for i in 0..samples {
        let id = format!("s{i}");
        let mut outputs = BTreeMap::new();
        let mut files = vec![format!("{id}_input.png"), format!("{id}_truth.png")];
        for m in models {
            let f = format!("{m}/{id}.png");
            outputs.insert(m.to_string(), f.clone());
            files.push(f);
        }
        for f in &files {
            let p = dir.join(f);
            fs::create_dir_all(p.parent().unwrap()).unwrap();
            fs::write(p, f.as_bytes()).unwrap();
        }
        list.push(StudySample {
            id,
            input: files[0].clone(),
            truth: files[1].clone(),
            outputs,
        });
    }
    let cfg = StudyConfig {
        v: API_VERSION,
        dataset: "fixture".into(),
        models: models.iter().map(|s| s.to_string()).collect(),
        samples: list,
        selectable_ground_truth: false,
    };
    let path = dir.join("study.json");
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}
