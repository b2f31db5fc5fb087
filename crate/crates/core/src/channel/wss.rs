use serde::{Deserialize, Serialize};

use crate::fft;
use crate::sigproc::ComplexSignal;

/// Super-Gaussian-edged WSS passband: a rectangle of width `b0` convolved
/// with a Gaussian whose FWHM is `b_otf`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WssParams {
    /// -6 dB bandwidth, Hz.
    pub b0: f64,
    /// Edge steepness, Hz.
    pub b_otf: f64,
    /// Passband center relative to the signal center, Hz.
    #[serde(default)]
    pub freq_offset: f64,
}

impl Default for WssParams {
    fn default() -> Self {
        Self {
            b0: 73e9,
            b_otf: 8.8e9,
            freq_offset: 0.0,
        }
    }
}

impl WssParams {
    pub fn sigma(&self) -> f64 {
        self.b_otf / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt())
    }

    /// Amplitude response on the FFT grid of an `n`-point transform.
    pub fn response(&self, n: usize, sample_rate: f64) -> Vec<f64> {
        fft::fft_freqs(n, sample_rate)
            .into_iter()
            .map(|f| wss_amplitude(f, self))
            .collect()
    }
}

/// Field amplitude gain of the WSS at baseband frequency `f` (Hz).
///
/// Unit passband gain: `0.5 * [erf((B0/2 - df)/(sqrt2 sigma)) - erf((-B0/2 - df)/(sqrt2 sigma))]`
/// with `df = f - freq_offset`.
pub fn wss_amplitude(f: f64, p: &WssParams) -> f64 {
    let s = std::f64::consts::SQRT_2 * p.sigma();
    let df = f - p.freq_offset;
    0.5 * (libm::erf((p.b0 / 2.0 - df) / s) - libm::erf((-p.b0 / 2.0 - df) / s))
}

/// Frequency-domain WSS filtering, identical on every polarization.
pub fn apply_wss(signal: &ComplexSignal, p: &WssParams) -> ComplexSignal {
    let h = p.response(signal.len(), signal.sample_rate);
    signal.map_pols(|x| {
        let mut buf = x.to_vec();
        fft::filter_real_inplace(&mut buf, &h);
        buf
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random;
    use num_complex::Complex64;
    use rand::SeedableRng;

    #[test]
    fn unit_gain_at_center() {
        let p = WssParams::default();
        assert!((wss_amplitude(0.0, &p) - 1.0).abs() < 1e-12);
        let q = WssParams {
            freq_offset: 2e9,
            ..p
        };
        assert!((wss_amplitude(2e9, &q) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn half_amplitude_at_band_edges() {
        for fo in [0.0, 2e9, -1.5e9] {
            let p = WssParams {
                freq_offset: fo,
                ..WssParams::default()
            };
            for edge in [fo + p.b0 / 2.0, fo - p.b0 / 2.0] {
                let a = wss_amplitude(edge, &p);
                assert!((a - 0.5).abs() < 1e-12, "{a}");
            }
        }
        let db = 20.0 * 0.5f64.log10();
        assert!((db + 6.0206).abs() < 1e-4);
    }

    #[test]
    fn even_symmetry_without_offset() {
        let p = WssParams::default();
        for k in 0..200 {
            let f = k as f64 * 0.37e9;
            assert_eq!(wss_amplitude(f, &p), wss_amplitude(-f, &p));
        }
    }

    #[test]
    fn bounded_and_monotone() {
        let p = WssParams {
            freq_offset: 1e9,
            ..WssParams::default()
        };
        let mut prev = f64::INFINITY;
        for k in 0..2000 {
            let d = k as f64 * 0.05e9;
            let a = wss_amplitude(p.freq_offset + d, &p);
            let b = wss_amplitude(p.freq_offset - d, &p);
            assert!((0.0..=1.0).contains(&a));
            if d < 60e9 {
                assert!(a > 0.0);
            }
            assert!((a - b).abs() < 1e-12);
            assert!(a <= prev);
            prev = a;
        }
    }

    #[test]
    fn wide_filter_is_all_pass() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let x: Vec<Complex64> = (0..512).map(|_| random::complex_gaussian(&mut rng, 1.0)).collect();
        let sig = ComplexSignal::single(x.clone(), 130e9, 2).unwrap();
        let p = WssParams {
            b0: 1e15,
            ..WssParams::default()
        };
        let y = apply_wss(&sig, &p);
        for (a, b) in x.iter().zip(&y.pols[0]) {
            assert!((a - b).norm() < 1e-12);
        }
    }
}
