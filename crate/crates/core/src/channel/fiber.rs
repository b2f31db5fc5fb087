use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::amplifier::LIGHT_SPEED;
use crate::error::{Error, Result};
use crate::fft;
use crate::sigproc::ComplexSignal;

/// Manakov averaging factor for the dual-polarization Kerr term.
pub const MANAKOV_FACTOR: f64 = 8.0 / 9.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiberParams {
    pub length_m: f64,
    pub loss_db_per_km: f64,
    /// ps/(nm km)
    pub dispersion: f64,
    /// Kerr nonlinearity, 1/(W m).
    pub kerr: f64,
    pub step_m: f64,
    #[serde(default = "default_wavelength")]
    pub wavelength_nm: f64,
}

fn default_wavelength() -> f64 {
    1550.0
}

impl Default for FiberParams {
    fn default() -> Self {
        Self {
            length_m: 80e3,
            loss_db_per_km: 0.2,
            dispersion: 16.7,
            kerr: 0.0013,
            step_m: 10.0,
            wavelength_nm: 1550.0,
        }
    }
}

impl FiberParams {
    /// Loss-only span: no dispersion, no Kerr effect.
    pub fn loss_only(length_m: f64, loss_db_per_km: f64) -> Self {
        Self {
            length_m,
            loss_db_per_km,
            dispersion: 0.0,
            kerr: 0.0,
            ..Self::default()
        }
    }

    /// Power attenuation coefficient, 1/m.
    pub fn alpha(&self) -> f64 {
        self.loss_db_per_km * std::f64::consts::LN_10 / 10.0 / 1e3
    }

    pub fn beta2(&self) -> f64 {
        beta2_from_dispersion(self.dispersion, self.wavelength_nm)
    }

    /// Accumulated dispersion, ps/nm.
    pub fn total_dispersion(&self) -> f64 {
        self.dispersion * self.length_m / 1e3
    }

    pub fn is_linear(&self) -> bool {
        self.kerr == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_m > 0.0) {
            return Err(Error::Config(format!(
                "SSFM step must be positive, got {} m",
                self.step_m
            )));
        }
        if !(self.length_m >= 0.0) {
            return Err(Error::Config(format!(
                "fiber length must be non-negative, got {} m",
                self.length_m
            )));
        }
        Ok(())
    }

    /// Nonlinear step lengths: whole steps plus one final fractional step.
    pub fn step_lengths(&self) -> Vec<f64> {
        let whole = (self.length_m / self.step_m + 1e-9).floor() as usize;
        let mut steps = vec![self.step_m; whole];
        let rest = self.length_m - whole as f64 * self.step_m;
        if rest > 1e-9 * self.step_m {
            steps.push(rest);
        }
        steps
    }
}

/// GVD parameter (s^2/m) from dispersion in ps/(nm km) at `wavelength_nm`.
pub fn beta2_from_dispersion(dispersion: f64, wavelength_nm: f64) -> f64 {
    let d = dispersion * 1e-6; // s/m^2
    let lambda = wavelength_nm * 1e-9;
    -d * lambda * lambda / (2.0 * PI * LIGHT_SPEED)
}

/// `exp(len * (-alpha/2 + i beta2/2 omega^2))` on the FFT grid.
pub fn linear_response(len: f64, alpha: f64, beta2: f64, omegas: &[f64]) -> Vec<Complex64> {
    omegas
        .iter()
        .map(|w| (Complex64::new(-alpha / 2.0, beta2 / 2.0 * w * w) * len).exp())
        .collect()
}

/// Symmetric split-step propagation of one fiber span.
///
/// A Kerr-free fiber is a single exact frequency-domain operator; otherwise
/// each step is a half linear step, a full nonlinear phase rotation, and a
/// half linear step, with adjacent half steps merged.
pub fn ssfm_propagate(signal: &ComplexSignal, p: &FiberParams) -> Result<ComplexSignal> {
    let plan = SsfmPlan::new(p, signal.len(), signal.sample_rate, signal.num_pols())?;
    let mut out = signal.clone();
    plan.forward(&mut out.pols);
    Ok(out)
}

/// Precomputed operators for propagating fields of a fixed length/rate.
#[derive(Clone, Debug)]
pub struct SsfmPlan {
    steps: Vec<f64>,
    gamma: f64,
    responses: Vec<Vec<Complex64>>,
    // response index applied before nonlinear step i; last entry closes the span
    segment: Vec<usize>,
}

impl SsfmPlan {
    pub fn new(p: &FiberParams, n: usize, sample_rate: f64, num_pols: usize) -> Result<Self> {
        p.validate()?;
        let omegas = fft::fft_omegas(n, sample_rate);
        let (alpha, beta2) = (p.alpha(), p.beta2());
        if p.is_linear() {
            return Ok(Self {
                steps: Vec::new(),
                gamma: 0.0,
                responses: vec![linear_response(p.length_m, alpha, beta2, &omegas)],
                segment: vec![0],
            });
        }
        let steps = p.step_lengths();
        let mut lens = Vec::with_capacity(steps.len() + 1);
        for i in 0..=steps.len() {
            let before = if i == 0 { 0.0 } else { steps[i - 1] / 2.0 };
            let after = steps.get(i).map_or(0.0, |h| h / 2.0);
            lens.push(before + after);
        }
        let mut distinct: Vec<f64> = Vec::new();
        let mut responses = Vec::new();
        let segment = lens
            .iter()
            .map(|&len| match distinct.iter().position(|&d| d == len) {
                Some(k) => k,
                None => {
                    distinct.push(len);
                    responses.push(linear_response(len, alpha, beta2, &omegas));
                    distinct.len() - 1
                }
            })
            .collect();
        let gamma = if num_pols == 2 {
            MANAKOV_FACTOR * p.kerr
        } else {
            p.kerr
        };
        Ok(Self {
            steps,
            gamma,
            responses,
            segment,
        })
    }

    pub fn num_steps(&self) -> usize {
        self.steps.len()
    }

    fn linear(&self, seg: usize, pols: &mut [Vec<Complex64>]) {
        let h = &self.responses[self.segment[seg]];
        for p in pols.iter_mut() {
            fft::filter_inplace(p, h);
        }
    }

    fn linear_adjoint(&self, seg: usize, pols: &mut [Vec<Complex64>]) {
        let h: Vec<Complex64> = self.responses[self.segment[seg]]
            .iter()
            .map(|v| v.conj())
            .collect();
        for p in pols.iter_mut() {
            fft::filter_inplace(p, &h);
        }
    }

    fn nonlinear(&self, step: usize, pols: &mut [Vec<Complex64>]) {
        let k = self.gamma * self.steps[step];
        let n = pols[0].len();
        for t in 0..n {
            let power: f64 = pols.iter().map(|p| p[t].norm_sqr()).sum();
            let rot = Complex64::from_polar(1.0, k * power);
            for p in pols.iter_mut() {
                p[t] *= rot;
            }
        }
    }

    /// Vector-Jacobian product of one nonlinear step taken at input `x`.
    ///
    /// With `y = x e^{i phi}`, `phi = k sum|x|^2`, the real-pair gradient is
    /// `g e^{-i phi} + 2 k q x` where `q = -sum Im(conj(g) y)`.
    fn nonlinear_adjoint(&self, step: usize, x: &[Vec<Complex64>], grad: &mut [Vec<Complex64>]) {
        let k = self.gamma * self.steps[step];
        let n = x[0].len();
        for t in 0..n {
            let power: f64 = x.iter().map(|p| p[t].norm_sqr()).sum();
            let rot = Complex64::from_polar(1.0, k * power);
            let q: f64 = x
                .iter()
                .zip(grad.iter())
                .map(|(xp, gp)| -(gp[t].conj() * xp[t] * rot).im)
                .sum();
            for (xp, gp) in x.iter().zip(grad.iter_mut()) {
                gp[t] = gp[t] * rot.conj() + xp[t] * (2.0 * k * q);
            }
        }
    }

    pub fn forward(&self, pols: &mut [Vec<Complex64>]) {
        for i in 0..self.steps.len() {
            self.linear(i, pols);
            self.nonlinear(i, pols);
        }
        self.linear(self.steps.len(), pols);
    }

    /// Forward pass keeping the field at the start of every `every`-th step.
    pub fn forward_checkpointed(&self, pols: &mut [Vec<Complex64>], every: usize) -> Vec<Vec<Vec<Complex64>>> {
        let every = every.max(1);
        let mut checkpoints = Vec::with_capacity(self.steps.len() / every + 1);
        for i in 0..self.steps.len() {
            if i % every == 0 {
                checkpoints.push(pols.to_vec());
            }
            self.linear(i, pols);
            self.nonlinear(i, pols);
        }
        self.linear(self.steps.len(), pols);
        checkpoints
    }

    /// Reverse-mode pass: maps the output gradient to the input gradient,
    /// recomputing the fields between checkpoints.
    pub fn adjoint(&self, checkpoints: &[Vec<Vec<Complex64>>], every: usize, grad: &mut [Vec<Complex64>]) {
        let every = every.max(1);
        let n = self.steps.len();
        self.linear_adjoint(n, grad);
        for (c, cp) in checkpoints.iter().enumerate().rev() {
            let start = c * every;
            let end = (start + every).min(n);
            let mut state = cp.clone();
            let mut inputs = Vec::with_capacity(end - start);
            for i in start..end {
                self.linear(i, &mut state);
                inputs.push(state.clone());
                self.nonlinear(i, &mut state);
            }
            for i in (start..end).rev() {
                self.nonlinear_adjoint(i, &inputs[i - start], grad);
                self.linear_adjoint(i, grad);
            }
        }
    }
}
