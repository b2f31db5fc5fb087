use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::taps::FirTaps;
use crate::error::{Error, Result};
use crate::sigproc::{ComplexSignal, SymbolSequence};

/// Symbols per divergence-check window.
pub const DIVERGENCE_WINDOW: usize = 1000;
/// Error-power growth between consecutive windows treated as divergence.
pub const DIVERGENCE_RATIO: f64 = 10.0;
// growth below this error power is convergence noise, not divergence
const DIVERGENCE_FLOOR: f64 = 0.1;

/// Second-order (proportional + integral) loop gains.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PllGains {
    pub kp: f64,
    pub ki: f64,
}

impl Default for PllGains {
    fn default() -> Self {
        Self { kp: 1e-2, ki: 1e-4 }
    }
}

impl PllGains {
    pub fn disabled() -> Self {
        Self { kp: 0.0, ki: 0.0 }
    }
}

/// 2x2 butterfly: `out_x = hxx * in_x + hxy * in_y`, `out_y = hyx * in_x + hyy * in_y`.
#[derive(Clone, Debug, PartialEq)]
pub struct ButterflyTaps {
    pub hxx: FirTaps,
    pub hxy: FirTaps,
    pub hyx: FirTaps,
    pub hyy: FirTaps,
    pub step_size: f64,
}

impl ButterflyTaps {
    /// Center-spike start: identity on the direct branches, zero cross terms.
    pub fn identity(len: usize, spacing: usize, step_size: f64) -> Result<Self> {
        Ok(Self {
            hxx: FirTaps::identity(len, spacing)?,
            hxy: FirTaps::zeros(len, spacing)?,
            hyx: FirTaps::zeros(len, spacing)?,
            hyy: FirTaps::identity(len, spacing)?,
            step_size,
        })
    }

    pub fn len(&self) -> usize {
        self.hxx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hxx.is_empty()
    }

    fn validate(&self) -> Result<()> {
        let n = self.hxx.len();
        if [&self.hxy, &self.hyx, &self.hyy].iter().any(|t| t.len() != n) {
            return Err(Error::Shape("butterfly branches differ in length".into()));
        }
        if n % 2 == 0 {
            return Err(Error::Shape(format!("butterfly length must be odd, got {n}")));
        }
        Ok(())
    }

    fn branches(&self) -> [&FirTaps; 4] {
        [&self.hxx, &self.hxy, &self.hyx, &self.hyy]
    }
}

#[derive(Clone, Debug)]
pub struct EqualizerOutput {
    /// Derotated equalizer output, one sequence per polarization.
    pub symbols: Vec<SymbolSequence>,
    pub taps: ButterflyTaps,
    /// PLL phase estimate after the last symbol, per output.
    pub final_phase: [f64; 2],
    /// Mean error power over consecutive [`DIVERGENCE_WINDOW`]-symbol windows.
    pub error_power: Vec<f64>,
}

/// Data-aided 2x2 LMS equalizer with a per-output PLL.
///
/// For each symbol: filter a window of samples centered on the symbol
/// instant, derotate by the PLL phase, take the error against the reference,
/// update the taps along `mu * e * e^{j phi} * conj(window)`, then advance
/// the PLL with the phase error `arg(z conj(ref))`.
pub fn lms_pll_equalize(
    signal: &ComplexSignal,
    reference: &[SymbolSequence],
    init: &ButterflyTaps,
    pll: &PllGains,
) -> Result<EqualizerOutput> {
    lms_pll_equalize_scheduled(signal, reference, init, pll, None)
}

/// [`lms_pll_equalize`] with the step size switched to `tracking.1` from
/// symbol `tracking.0` on.
pub fn lms_pll_equalize_scheduled(
    signal: &ComplexSignal,
    reference: &[SymbolSequence],
    init: &ButterflyTaps,
    pll: &PllGains,
    tracking: Option<(usize, f64)>,
) -> Result<EqualizerOutput> {
    if signal.num_pols() != 2 || reference.len() != 2 {
        return Err(Error::Shape(
            "the butterfly equalizer needs dual-polarization signal and references".into(),
        ));
    }
    init.validate()?;
    let sps = signal.sps;
    let nsym = signal.len() / sps;
    if reference.iter().any(|r| r.len() != nsym) {
        return Err(Error::Shape(format!(
            "references must hold {nsym} symbols ({} samples at {sps} sps)",
            signal.len()
        )));
    }
    let k = init.len();
    let c = k / 2;
    let mut mu = init.step_size;

    // zero-padded inputs so every window is a plain slice
    let padded: Vec<Vec<Complex64>> = signal
        .pols
        .iter()
        .map(|p| {
            let mut v = vec![Complex64::new(0.0, 0.0); p.len() + 2 * c + sps];
            v[c..c + p.len()].copy_from_slice(p);
            v
        })
        .collect();
    // weights stored reversed so that y = sum_j w[j] * window[j]
    let mut w: Vec<Vec<Complex64>> = init
        .branches()
        .iter()
        .map(|t| t.taps.iter().rev().copied().collect())
        .collect();

    let mut phase = [0.0f64; 2];
    let mut integ = [0.0f64; 2];
    let mut out = [Vec::with_capacity(nsym), Vec::with_capacity(nsym)];
    let mut error_power = Vec::new();
    let mut window_acc = 0.0;
    let mut window_len = 0usize;

    for s in 0..nsym {
        if let Some((at, step)) = tracking {
            if s == at {
                mu = step;
            }
        }
        let start = s * sps;
        let win = [&padded[0][start..start + k], &padded[1][start..start + k]];
        for o in 0..2 {
            let mut y = Complex64::new(0.0, 0.0);
            for (i, wi) in win.iter().enumerate() {
                let taps = &w[2 * o + i];
                y += taps.iter().zip(wi.iter()).map(|(a, b)| a * b).sum::<Complex64>();
            }
            let rot = Complex64::from_polar(1.0, -phase[o]);
            let z = y * rot;
            let d = reference[o].symbols[s];
            let e = d - z;
            window_acc += e.norm_sqr();

            let g = e * rot.conj() * mu;
            for (i, wi) in win.iter().enumerate() {
                for (a, b) in w[2 * o + i].iter_mut().zip(wi.iter()) {
                    *a += g * b.conj();
                }
            }

            if d.norm_sqr() > 0.0 {
                let err = (z * d.conj()).arg();
                integ[o] += pll.ki * err;
                phase[o] += pll.kp * err + integ[o];
            }
            out[o].push(z);
        }
        window_len += 1;
        if window_len == DIVERGENCE_WINDOW || s + 1 == nsym {
            let p = window_acc / (2 * window_len) as f64;
            if !p.is_finite() {
                return Err(Error::EqualizerDivergence { symbol: s, step_size: mu });
            }
            if let Some(&prev) = error_power.last() {
                if p > DIVERGENCE_RATIO * prev && p > DIVERGENCE_FLOOR {
                    return Err(Error::EqualizerDivergence { symbol: s, step_size: mu });
                }
            }
            error_power.push(p);
            window_acc = 0.0;
            window_len = 0;
        }
    }

    let unrev = |v: &Vec<Complex64>| -> Result<FirTaps> {
        FirTaps::new(v.iter().rev().copied().collect(), init.hxx.spacing)
    };
    let taps = ButterflyTaps {
        hxx: unrev(&w[0])?,
        hxy: unrev(&w[1])?,
        hyx: unrev(&w[2])?,
        hyy: unrev(&w[3])?,
        step_size: mu,
    };
    let [ox, oy] = out;
    Ok(EqualizerOutput {
        symbols: vec![SymbolSequence::new(ox), SymbolSequence::new(oy)],
        taps,
        final_phase: phase,
        error_power,
    })
}
