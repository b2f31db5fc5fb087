use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::random;
use crate::sigproc::ComplexSignal;

pub const PLANCK: f64 = 6.626_070_15e-34;
pub const LIGHT_SPEED: f64 = 299_792_458.0;

/// Relative AWGN levels at or below this are treated as "off".
pub const AWGN_BYPASS_DB: f64 = -200.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdfaParams {
    pub gain_db: f64,
    /// `-inf` disables ASE.
    pub noise_figure_db: f64,
    #[serde(default = "default_wavelength")]
    pub center_wavelength_nm: f64,
}

fn default_wavelength() -> f64 {
    1550.0
}

impl Default for EdfaParams {
    fn default() -> Self {
        Self {
            gain_db: 16.0,
            noise_figure_db: 5.0,
            center_wavelength_nm: 1550.0,
        }
    }
}

impl EdfaParams {
    pub fn field_gain(&self) -> f64 {
        10f64.powf(self.gain_db / 20.0)
    }

    pub fn frequency(&self) -> f64 {
        LIGHT_SPEED / (self.center_wavelength_nm * 1e-9)
    }

    /// ASE power spectral density per polarization, W/Hz:
    /// `(NF/2) (G - 1) h nu`.
    pub fn ase_psd(&self) -> f64 {
        let nf = 10f64.powf(self.noise_figure_db / 10.0);
        let g = 10f64.powf(self.gain_db / 10.0);
        nf / 2.0 * (g - 1.0) * PLANCK * self.frequency()
    }

    /// ASE variance per complex sample and polarization at `sample_rate`.
    pub fn ase_variance(&self, sample_rate: f64) -> f64 {
        self.ase_psd() * sample_rate
    }
}

/// Amplify by the EDFA gain and add white ASE over the simulation bandwidth.
/// Samples are field amplitudes in W^1/2.
pub fn edfa_amplify<R: Rng + ?Sized>(signal: &ComplexSignal, p: &EdfaParams, rng: &mut R) -> ComplexSignal {
    let g = p.field_gain();
    let var = p.ase_variance(signal.sample_rate);
    let mut out = signal.clone();
    for pol in &mut out.pols {
        for v in pol.iter_mut() {
            *v *= g;
        }
        random::add_complex_gaussian(pol, rng, var);
    }
    out
}

/// Per-polarization variance of relative AWGN at `level_db` below the mean
/// (polarization-summed) power of `signal`; `None` when bypassed.
pub fn relative_awgn_variance(signal: &ComplexSignal, level_db: f64) -> Option<f64> {
    if level_db <= AWGN_BYPASS_DB {
        return None;
    }
    let total = signal.mean_power() * 10f64.powf(level_db / 10.0);
    Some(total / signal.num_pols() as f64)
}

/// Add white Gaussian noise `level_db` below the current mean signal power,
/// split equally across polarizations.
pub fn add_relative_awgn<R: Rng + ?Sized>(signal: &ComplexSignal, level_db: f64, rng: &mut R) -> ComplexSignal {
    let mut out = signal.clone();
    if let Some(var) = relative_awgn_variance(signal, level_db) {
        for pol in &mut out.pols {
            random::add_complex_gaussian(pol, rng, var);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tone(n: usize, amp: f64, pols: usize) -> ComplexSignal {
        let p: Vec<Complex64> = (0..n)
            .map(|k| Complex64::from_polar(amp, 0.01 * k as f64))
            .collect();
        ComplexSignal::new(vec![p; pols], 130e9, 2).unwrap()
    }

    fn noise_power(a: &ComplexSignal, b: &ComplexSignal, scale: f64) -> f64 {
        let mut acc = 0.0;
        for (pa, pb) in a.pols.iter().zip(&b.pols) {
            for (x, y) in pa.iter().zip(pb) {
                acc += (y - x * scale).norm_sqr();
            }
        }
        acc / a.len() as f64
    }

    #[test]
    fn noiseless_gain() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = EdfaParams {
            noise_figure_db: f64::NEG_INFINITY,
            ..EdfaParams::default()
        };
        let s = tone(1024, 1e-2, 2);
        let out = edfa_amplify(&s, &p, &mut rng);
        let ratio = out.mean_power() / s.mean_power();
        assert!((ratio - 10f64.powf(1.6)).abs() / ratio < 1e-12);
    }

    #[test]
    fn ase_power_matches_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = EdfaParams::default();
        let s = tone(1 << 16, 1e-3, 1);
        let out = edfa_amplify(&s, &p, &mut rng);
        let measured = noise_power(&s, &out, p.field_gain());
        let expected = p.ase_psd() * s.sample_rate;
        assert!((measured / expected - 1.0).abs() < 0.05, "{measured} vs {expected}");
        // nu for 1550 nm
        assert!((p.frequency() - 193.414e12).abs() < 0.01e12);
    }

    #[test]
    fn two_stage_ase_accumulates_through_second_gain() {
        // stage 1 ASE gets amplified by stage 2: rho1*G2 + rho2. With a fixed
        // n_sp this telescopes to n_sp*h*nu*(G1*G2 - 1), the single-stage value.
        let half = EdfaParams {
            gain_db: 8.0,
            ..EdfaParams::default()
        };
        let full = EdfaParams::default();
        let two_stage = half.ase_psd() * 10f64.powf(0.8) + half.ase_psd();
        let one_stage = full.ase_psd();
        assert!((two_stage - one_stage).abs() / one_stage < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = tone(1 << 16, 1e-3, 1);
        let a = edfa_amplify(&edfa_amplify(&s, &half, &mut rng), &half, &mut rng);
        let measured = noise_power(&s, &a, full.field_gain());
        let expected = two_stage * s.sample_rate;
        assert!((measured / expected - 1.0).abs() < 0.05);
    }

    #[test]
    fn relative_awgn_level() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = tone(1 << 16, 1.0, 1);
        let out = add_relative_awgn(&s, -21.0, &mut rng);
        let n = noise_power(&s, &out, 1.0);
        assert!((n / 10f64.powf(-2.1) - 1.0).abs() < 0.03, "{n}");
    }

    #[test]
    fn relative_awgn_twice_doubles() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = tone(1 << 16, 1.0, 2);
        let mut out = s.clone();
        for _ in 0..2 {
            let var = relative_awgn_variance(&s, -21.0).unwrap();
            for pol in &mut out.pols {
                random::add_complex_gaussian(pol, &mut rng, var);
            }
        }
        let n = noise_power(&s, &out, 1.0);
        assert!((n / (2.0 * 10f64.powf(-2.1) * s.mean_power()) - 1.0).abs() < 0.03);
    }

    #[test]
    fn bypass_is_noop() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let s = tone(64, 1.0, 2);
        assert_eq!(add_relative_awgn(&s, -200.0, &mut rng), s);
        assert_eq!(add_relative_awgn(&s, f64::NEG_INFINITY, &mut rng), s);
    }
}
