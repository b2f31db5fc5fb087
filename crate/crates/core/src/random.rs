//! Seeded RNG streams and complex Gaussian draws.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Rng = ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent stream keyed by a base seed and a path of indices
/// (e.g. `[epoch, batch, item]`).
pub fn stream(seed: u64, path: &[u64]) -> Rng {
    let mut key = splitmix(seed);
    for &p in path {
        key = splitmix(key ^ splitmix(p.wrapping_add(0x632b_e59b_d9b4_e019)));
    }
    ChaCha8Rng::seed_from_u64(key)
}

/// Circular complex Gaussian sample with `E|z|^2 = variance`.
pub fn complex_gaussian<R: rand::Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * s, im * s)
}

pub fn add_complex_gaussian<R: rand::Rng + ?Sized>(buf: &mut [Complex64], rng: &mut R, variance: f64) {
    if variance <= 0.0 {
        return;
    }
    for v in buf.iter_mut() {
        *v += complex_gaussian(rng, variance);
    }
}
