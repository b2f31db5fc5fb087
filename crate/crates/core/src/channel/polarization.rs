use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;
use crate::sigproc::ComplexSignal;

/// Samples per block over which the RSOP angle is held constant.
pub const RSOP_BLOCK: usize = 256;

/// Lumped PDL x RSOP x PMD Jones element.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolarizationParams {
    /// PDL vector magnitude, in [0, 1).
    pub gamma: f64,
    /// RSOP angles at `t = 0`, rad.
    pub alpha: f64,
    pub xi: f64,
    pub eta: f64,
    /// Differential group delay, s.
    pub dgd: f64,
    /// Rotation speed of `alpha`, rad/s.
    pub rsop_rate: f64,
}

impl Default for PolarizationParams {
    fn default() -> Self {
        Self {
            gamma: pdl_db_to_gamma(3.0),
            alpha: 0.3,
            xi: 0.2,
            eta: -0.4,
            dgd: 40e-12,
            rsop_rate: 1e5,
        }
    }
}

impl PolarizationParams {
    pub fn identity() -> Self {
        Self {
            gamma: 0.0,
            alpha: 0.0,
            xi: 0.0,
            eta: 0.0,
            dgd: 0.0,
            rsop_rate: 0.0,
        }
    }

    pub fn pdl_db(&self) -> f64 {
        gamma_to_pdl_db(self.gamma)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config(format!(
                "PDL magnitude must lie in [0, 1), got {}",
                self.gamma
            )));
        }
        Ok(())
    }

    /// `J(omega)` at time `t`: PDL * RSOP(t) * PMD(omega).
    pub fn jones(&self, omega: f64, t: f64) -> [[Complex64; 2]; 2] {
        let pdl = [(1.0 + self.gamma).sqrt(), (1.0 - self.gamma).sqrt()];
        let r = self.rsop(t);
        let pmd = [
            Complex64::from_polar(1.0, omega * self.dgd / 2.0),
            Complex64::from_polar(1.0, -omega * self.dgd / 2.0),
        ];
        let mut j = [[Complex64::new(0.0, 0.0); 2]; 2];
        for row in 0..2 {
            for col in 0..2 {
                j[row][col] = pdl[row] * r[row][col] * pmd[col];
            }
        }
        j
    }

    fn rsop(&self, t: f64) -> [[Complex64; 2]; 2] {
        let a = self.alpha + self.rsop_rate * t;
        let (s, c) = a.sin_cos();
        [
            [Complex64::from_polar(c, self.xi), -Complex64::from_polar(s, self.eta)],
            [Complex64::from_polar(s, -self.eta), Complex64::from_polar(c, -self.xi)],
        ]
    }
}

/// `10 log10((1 + gamma) / (1 - gamma))`
pub fn gamma_to_pdl_db(gamma: f64) -> f64 {
    10.0 * ((1.0 + gamma) / (1.0 - gamma)).log10()
}

pub fn pdl_db_to_gamma(pdl_db: f64) -> f64 {
    let r = 10f64.powf(pdl_db / 10.0);
    (r - 1.0) / (r + 1.0)
}

/// Apply the Jones model to a dual-polarization signal whose first sample
/// is at time `t0`.
///
/// PMD is applied over the whole frame in the frequency domain; RSOP and PDL
/// are frequency-flat and are applied per [`RSOP_BLOCK`] samples with the
/// angle taken at the block center.
pub fn apply_polarization(signal: &ComplexSignal, p: &PolarizationParams, t0: f64) -> Result<ComplexSignal> {
    if signal.num_pols() != 2 {
        return Err(Error::Shape(format!(
            "polarization effects need 2 polarizations, got {}",
            signal.num_pols()
        )));
    }
    p.validate()?;
    let n = signal.len();
    let omegas = fft::fft_omegas(n, signal.sample_rate);
    let mut x = signal.pols[0].clone();
    let mut y = signal.pols[1].clone();
    let hx: Vec<Complex64> = omegas.iter().map(|w| Complex64::from_polar(1.0, w * p.dgd / 2.0)).collect();
    let hy: Vec<Complex64> = hx.iter().map(|v| v.conj()).collect();
    fft::filter_inplace(&mut x, &hx);
    fft::filter_inplace(&mut y, &hy);

    let dt = 1.0 / signal.sample_rate;
    let pdl = [(1.0 + p.gamma).sqrt(), (1.0 - p.gamma).sqrt()];
    let mut start = 0;
    while start < n {
        let end = (start + RSOP_BLOCK).min(n);
        let t = t0 + (start + end) as f64 / 2.0 * dt;
        let r = p.rsop(t);
        for k in start..end {
            let (a, b) = (x[k], y[k]);
            x[k] = pdl[0] * (r[0][0] * a + r[0][1] * b);
            y[k] = pdl[1] * (r[1][0] * a + r[1][1] * b);
        }
        start = end;
    }
    ComplexSignal::new(vec![x, y], signal.sample_rate, signal.sps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dual_noise(n: usize, seed: u64) -> ComplexSignal {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut g = || (0..n).map(|_| random::complex_gaussian(&mut rng, 1.0)).collect::<Vec<_>>();
        let a = g();
        let b = g();
        ComplexSignal::new(vec![a, b], 130e9, 2).unwrap()
    }

    #[test]
    fn identity_parameters() {
        let s = dual_noise(1000, 1);
        let out = apply_polarization(&s, &PolarizationParams::identity(), 0.0).unwrap();
        for (a, b) in s.pols.iter().zip(&out.pols) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn pdl_round_trip() {
        let g = pdl_db_to_gamma(3.0);
        assert!((g - 0.3323).abs() < 1e-4, "{g}");
        assert!((gamma_to_pdl_db(g) - 3.0).abs() < 1e-9);
        // aligned vs anti-aligned states
        let p = PolarizationParams {
            gamma: g,
            ..PolarizationParams::identity()
        };
        let n = 512;
        let one = vec![Complex64::new(1.0, 0.0); n];
        let zero = vec![Complex64::new(0.0, 0.0); n];
        let sx = ComplexSignal::new(vec![one.clone(), zero.clone()], 130e9, 2).unwrap();
        let sy = ComplexSignal::new(vec![zero, one], 130e9, 2).unwrap();
        let px = apply_polarization(&sx, &p, 0.0).unwrap().mean_power();
        let py = apply_polarization(&sy, &p, 0.0).unwrap().mean_power();
        assert!((10.0 * (px / py).log10() - 3.0).abs() < 1e-9);
    }

    #[test]
    fn lossless_elements_conserve_energy() {
        let s = dual_noise(2048, 2);
        for (alpha, xi, eta, dgd) in [(0.3, 0.1, -0.7, 40e-12), (1.2, -2.0, 0.5, 3e-12), (0.0, 0.0, 0.0, 100e-12)] {
            let p = PolarizationParams {
                gamma: 0.0,
                alpha,
                xi,
                eta,
                dgd,
                rsop_rate: 1e9,
            };
            let out = apply_polarization(&s, &p, 1e-6).unwrap();
            assert!((out.energy() / s.energy() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn jones_is_unitary_without_pdl() {
        let p = PolarizationParams {
            gamma: 0.0,
            ..PolarizationParams::default()
        };
        let j = p.jones(2e11, 3e-7);
        for r in 0..2 {
            for c in 0..2 {
                let dot: Complex64 = (0..2).map(|k| j[r][k] * j[c][k].conj()).sum();
                let expect = if r == c { 1.0 } else { 0.0 };
                assert!((dot - expect).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn single_pol_is_rejected() {
        let s = ComplexSignal::single(vec![Complex64::new(1.0, 0.0); 8], 1.0, 2).unwrap();
        assert!(matches!(
            apply_polarization(&s, &PolarizationParams::default(), 0.0),
            Err(Error::Shape(_))
        ));
    }
}
