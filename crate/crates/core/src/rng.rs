//! Seeded random streams.
//!
//! Every random draw in the crate comes from a ChaCha20 generator keyed by a
//! 64-bit seed and selected by a stream id. A Monte-Carlo trial derives its
//! seed from the master seed with [`derive_seed`]; inside a trial each user's
//! fading matrix and CSI error use their own streams (see
//! [`crate::channel::generate_channels`]), so adding users or toggling CSI
//! error never shifts another user's draws.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::{CMat, C64};

/// Per-trial seed: SplitMix64 applied to the master seed advanced by `index`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One draw from CN(0, variance).
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> C64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(s * re, s * im)
}

/// Matrix with i.i.d. CN(0, variance) entries, drawn in row-major order.
pub fn complex_gaussian_matrix<R: Rng + ?Sized>(
    rng: &mut R,
    rows: usize,
    cols: usize,
    variance: f64,
) -> CMat {
    let mut m = CMat::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = complex_gaussian(rng, variance);
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_differ() {
        let a = derive_seed(1, 0);
        let b = derive_seed(1, 1);
        let c = derive_seed(2, 0);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, derive_seed(1, 0));
    }

    #[test]
    fn streams_are_independent_sequences() {
        let mut r0 = stream_rng(5, 0);
        let mut r1 = stream_rng(5, 1);
        let x: u64 = r0.random();
        let y: u64 = r1.random();
        assert_ne!(x, y);
    }

    #[test]
    fn complex_gaussian_has_requested_variance() {
        let mut rng = stream_rng(11, 3);
        let n = 100_000;
        let var: f64 = (0..n)
            .map(|_| complex_gaussian(&mut rng, 0.1).norm_sqr())
            .sum::<f64>()
            / n as f64;
        assert!((var - 0.1).abs() < 0.002, "{var}");
    }
}
