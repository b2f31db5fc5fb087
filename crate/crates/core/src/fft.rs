//! Thin wrappers over `rustfft` with a per-thread planner cache.
//!
//! Forward transforms are unnormalized, inverse transforms carry the `1/N`
//! factor, so `ifft(fft(x)) == x`.

use std::cell::RefCell;
use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

pub fn fft_inplace(buf: &mut [Complex64]) {
    if buf.is_empty() {
        return;
    }
    let plan = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(buf.len()));
    plan.process(buf);
}

pub fn ifft_inplace(buf: &mut [Complex64]) {
    if buf.is_empty() {
        return;
    }
    let plan = PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(buf.len()));
    plan.process(buf);
    let scale = 1.0 / buf.len() as f64;
    for v in buf.iter_mut() {
        *v *= scale;
    }
}

/// FFT bin frequencies in Hz, in transform order (DC first, negatives last).
pub fn fft_freqs(n: usize, sample_rate: f64) -> Vec<f64> {
    let df = sample_rate / n as f64;
    (0..n)
        .map(|k| {
            let k = k as i64;
            let signed = if k < (n as i64 + 1) / 2 { k } else { k - n as i64 };
            signed as f64 * df
        })
        .collect()
}

/// Angular frequencies (rad/s) in transform order.
pub fn fft_omegas(n: usize, sample_rate: f64) -> Vec<f64> {
    fft_freqs(n, sample_rate)
        .into_iter()
        .map(|f| 2.0 * PI * f)
        .collect()
}

/// Multiply the spectrum of `buf` by `response` (transform order) in place.
pub fn filter_inplace(buf: &mut [Complex64], response: &[Complex64]) {
    debug_assert_eq!(buf.len(), response.len());
    fft_inplace(buf);
    for (v, h) in buf.iter_mut().zip(response) {
        *v *= h;
    }
    ifft_inplace(buf);
}

/// Real-valued variant of [`filter_inplace`].
pub fn filter_real_inplace(buf: &mut [Complex64], response: &[f64]) {
    debug_assert_eq!(buf.len(), response.len());
    fft_inplace(buf);
    for (v, h) in buf.iter_mut().zip(response) {
        *v *= *h;
    }
    ifft_inplace(buf);
}

/// Same-length ("center-aligned") linear convolution of `x` with `taps`.
///
/// Output sample `n` is `sum_m taps[m] * x[n - (m - c)]` with `c = (K-1)/2`,
/// samples outside `x` taken as zero. Long inputs go through a zero-padded FFT.
pub fn convolve_same(x: &[Complex64], taps: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    let k = taps.len();
    if n == 0 || k == 0 {
        return vec![Complex64::new(0.0, 0.0); n];
    }
    let c = (k - 1) / 2;
    if (n as u64) * (k as u64) <= 1 << 16 {
        let mut out = vec![Complex64::new(0.0, 0.0); n];
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for (m, h) in taps.iter().enumerate() {
                let j = i as isize + c as isize - m as isize;
                if j >= 0 && (j as usize) < n {
                    acc += h * x[j as usize];
                }
            }
            *o = acc;
        }
        return out;
    }
    let full = n + k - 1;
    let size = full.next_power_of_two();
    let mut a = vec![Complex64::new(0.0, 0.0); size];
    a[..n].copy_from_slice(x);
    let mut b = vec![Complex64::new(0.0, 0.0); size];
    b[..k].copy_from_slice(taps);
    fft_inplace(&mut a);
    fft_inplace(&mut b);
    for (u, v) in a.iter_mut().zip(&b) {
        *u *= v;
    }
    ifft_inplace(&mut a);
    a[c..c + n].to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
        (0..n)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn parseval_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [16, 1000, 4096] {
            let x = random(n, &mut rng);
            let mut y = x.clone();
            fft_inplace(&mut y);
            let et: f64 = x.iter().map(|v| v.norm_sqr()).sum();
            let ef: f64 = y.iter().map(|v| v.norm_sqr()).sum::<f64>() / n as f64;
            assert!((et - ef).abs() / et < 1e-9);
        }
    }

    #[test]
    fn fft_convolution_matches_direct() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random(3000, &mut rng);
        let h = random(129, &mut rng);
        let fast = convolve_same(&x, &h);
        let c = 64isize;
        for i in [0usize, 1, 63, 64, 1500, 2999] {
            let mut acc = Complex64::new(0.0, 0.0);
            for (m, t) in h.iter().enumerate() {
                let j = i as isize + c - m as isize;
                if j >= 0 && (j as usize) < x.len() {
                    acc += t * x[j as usize];
                }
            }
            assert!((acc - fast[i]).norm() < 1e-10);
        }
    }

    #[test]
    fn freq_grid_layout() {
        let f = fft_freqs(4, 4.0);
        assert_eq!(f, vec![0.0, 1.0, -2.0, -1.0]);
        let f = fft_freqs(5, 5.0);
        assert_eq!(f, vec![0.0, 1.0, 2.0, -2.0, -1.0]);
    }
}
