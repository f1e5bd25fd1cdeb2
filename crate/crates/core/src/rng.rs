//! Deterministic random number generation.
//!
//! All randomness in this crate flows through [`ChaCha12Rng`] seeded with
//! [`SeedableRng::seed_from_u64`], so runs are bit-reproducible across
//! platforms. Gaussian variates use Marsaglia's polar method (a rejection
//! scheme over uniform draws) rather than a tabulated sampler.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// Construct the crate-wide RNG from a 64-bit seed.
pub fn new_rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

/// Derive an independent stream seed from a base seed and a stream label.
///
/// SplitMix64 finalizer; distinct labels give decorrelated streams while
/// staying a pure function of `(base, stream)`.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One pair of independent standard-normal variates via the polar method.
pub fn standard_normal_pair<R: Rng + ?Sized>(rng: &mut R) -> (f64, f64) {
    loop {
        let u = 2.0 * rng.gen::<f64>() - 1.0;
        let v = 2.0 * rng.gen::<f64>() - 1.0;
        let s = u * u + v * v;
        if s > 0.0 && s < 1.0 {
            let f = (-2.0 * s.ln() / s).sqrt();
            return (u * f, v * f);
        }
    }
}

/// Fill a slice with i.i.d. standard-normal draws.
pub fn fill_standard_normal<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    let mut i = 0;
    while i + 1 < out.len() {
        let (a, b) = standard_normal_pair(rng);
        out[i] = a;
        out[i + 1] = b;
        i += 2;
    }
    if i < out.len() {
        out[i] = standard_normal_pair(rng).0;
    }
}

/// Sample a point uniformly distributed on the unit sphere in `R^dim`.
///
/// Normalized vector of i.i.d. Gaussians; an all-zero draw (probability
/// zero in practice) is resampled internally.
pub fn unit_vector<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    assert!(dim >= 1, "unit_vector requires dim >= 1");
    let mut v = vec![0.0; dim];
    loop {
        fill_standard_normal(rng, &mut v);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-300 {
            for x in &mut v {
                *x /= norm;
            }
            return v;
        }
    }
}
