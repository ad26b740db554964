//! Counter-based derivation of independent random streams.
//!
//! Every random quantity is addressed by a key `(seed, path...)`, e.g.
//! `(master_seed, MC_NOISE, sample, layer)`. The key is hashed with a
//! splitmix64 finalizer into a ChaCha seed, so a draw depends only on its
//! address and never on how many other draws were made before it or on which
//! worker thread made it.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Stream purpose tags. Distinct tags keep streams for different roles
/// disjoint even when they share a seed and indices.
pub mod tag {
    pub const KLD_PRIOR: u64 = 0x4b4c_445f_5052_494f;
    pub const MC_NOISE: u64 = 0x4d43_5f4e_4f49_5345;
    pub const VARIANCE_NOISE: u64 = 0x5641_525f_4e4f_4953;
    pub const INPUT_WEIGHTS: u64 = 0x5749_4e5f_5745_4947;
    pub const OUTPUT_WEIGHTS: u64 = 0x574f_5554_5f57_4549;
    pub const ANCESTRAL: u64 = 0x414e_4345_5354_5241;
    pub const TAU_DRAW: u64 = 0x5441_555f_4452_4157;
    pub const KAPPA_DRAW: u64 = 0x4b41_5050_415f_4452;
}

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hash a key into a 64-bit stream id.
pub fn derive(seed: u64, path: &[u64]) -> u64 {
    let mut h = mix64(seed ^ 0x9e37_79b9_7f4a_7c15);
    for (i, &p) in path.iter().enumerate() {
        h = mix64(h ^ mix64(p.wrapping_add((i as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15))));
    }
    h
}

/// A generator for the stream at `(seed, path)`.
pub fn stream(seed: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, path))
}

/// A `rows x cols` matrix of standard normal draws from the stream at
/// `(seed, path)`, filled row by row.
pub fn normal_matrix(rows: usize, cols: usize, seed: u64, path: &[u64]) -> DMatrix<f64> {
    let mut rng = stream(seed, path);
    DMatrix::from_row_iterator(rows, cols, (0..rows * cols).map(|_| StandardNormal.sample(&mut rng)))
}
