//! Input generators shared by the benchmarks.

use maptopo_core::ImageTile;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Seeded uniform noise with integer values in `0..=255`.
pub fn noise(seed: u64, size: usize, channels: usize) -> ImageTile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let px = (0..size * size * channels).map(|_| rng.random_range(0..=255u8) as f64).collect();
    ImageTile::new(size, size, channels, px).expect("valid tile")
}

/// A pair whose second tile is the first plus bounded noise.
pub fn pair(seed: u64, size: usize, channels: usize) -> (ImageTile, ImageTile) {
    let a = noise(seed, size, channels);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let px = a
        .pixels()
        .iter()
        .map(|v| (v + rng.random_range(-20.0..20.0f64)).clamp(0.0, 255.0))
        .collect();
    let b = ImageTile::new(size, size, channels, px).expect("valid tile");
    (a, b)
}
