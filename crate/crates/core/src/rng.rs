//! Seeded random streams.
//!
//! Every random quantity is drawn from a ChaCha stream whose seed is derived
//! from a base seed and a path of integer labels, so a trial's draws depend
//! only on its coordinates and never on execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::{Matrix, Vector};

pub type Stream = ChaCha12Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes `labels` into `base`, giving an independent-looking 64-bit seed.
pub fn derive_seed(base: u64, labels: &[u64]) -> u64 {
    labels
        .iter()
        .fold(splitmix64(base), |acc, &l| splitmix64(acc ^ splitmix64(l.wrapping_add(0x5851_f42d))))
}

pub fn stream(seed: u64) -> Stream {
    ChaCha12Rng::seed_from_u64(seed)
}

pub fn stream_for(base: u64, labels: &[u64]) -> Stream {
    stream(derive_seed(base, labels))
}

pub fn gaussian(rng: &mut Stream) -> f64 {
    StandardNormal.sample(rng)
}

pub fn gaussian_vector(rng: &mut Stream, len: usize) -> Vector {
    Vector::from_fn(len, |_, _| gaussian(rng))
}

/// Matrix with i.i.d. standard normal entries, filled row by row.
pub fn gaussian_matrix(rng: &mut Stream, rows: usize, cols: usize) -> Matrix {
    let data: Vec<f64> = (0..rows * cols).map(|_| gaussian(rng)).collect();
    Matrix::from_row_slice(rows, cols, &data)
}
