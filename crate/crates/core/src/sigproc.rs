//! Symbol and waveform primitives shared by the evaluation and training links:
//! 16-QAM mapping, root-raised-cosine shaping, matched filtering, SNR and
//! spectra.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft;

/// SNR reported when the error vector is exactly zero.
pub const SNR_CAP_DB: f64 = 80.0;

/// Symbols dropped at each end of a frame before measuring SNR.
pub const DEFAULT_SNR_GUARD: usize = 512;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Modulation {
    Qam16,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SymbolSequence {
    pub symbols: Vec<Complex64>,
    pub modulation: Modulation,
}

impl SymbolSequence {
    pub fn new(symbols: Vec<Complex64>) -> Self {
        Self {
            symbols,
            modulation: Modulation::Qam16,
        }
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn mean_power(&self) -> f64 {
        mean_power(&self.symbols)
    }

    /// Copy of the symbols in `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        Self {
            symbols: self.symbols[start..end].to_vec(),
            modulation: self.modulation,
        }
    }
}

/// Sampled complex baseband waveform, one sample vector per polarization.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexSignal {
    pub pols: Vec<Vec<Complex64>>,
    pub sample_rate: f64,
    pub sps: usize,
}

impl ComplexSignal {
    pub fn new(pols: Vec<Vec<Complex64>>, sample_rate: f64, sps: usize) -> Result<Self> {
        if pols.is_empty() || pols.len() > 2 {
            return Err(Error::Shape(format!(
                "a signal carries 1 or 2 polarizations, got {}",
                pols.len()
            )));
        }
        if pols.iter().any(|p| p.len() != pols[0].len()) {
            return Err(Error::Shape("polarizations differ in length".into()));
        }
        if !(sample_rate > 0.0) || sps == 0 {
            return Err(Error::Config(format!(
                "invalid sample rate {sample_rate} / sps {sps}"
            )));
        }
        let s = Self {
            pols,
            sample_rate,
            sps,
        };
        if !s.is_finite() {
            return Err(Error::Shape("signal contains NaN or Inf samples".into()));
        }
        Ok(s)
    }

    pub fn single(samples: Vec<Complex64>, sample_rate: f64, sps: usize) -> Result<Self> {
        Self::new(vec![samples], sample_rate, sps)
    }

    pub fn num_pols(&self) -> usize {
        self.pols.len()
    }

    /// Samples per polarization.
    pub fn len(&self) -> usize {
        self.pols[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn baud_rate(&self) -> f64 {
        self.sample_rate / self.sps as f64
    }

    /// Mean per-sample power summed over polarizations.
    pub fn mean_power(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.energy() / self.len() as f64
    }

    pub fn energy(&self) -> f64 {
        self.pols
            .iter()
            .flat_map(|p| p.iter())
            .map(|v| v.norm_sqr())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.pols
            .iter()
            .flat_map(|p| p.iter())
            .all(|v| v.re.is_finite() && v.im.is_finite())
    }

    pub fn scale(&mut self, factor: f64) {
        for p in &mut self.pols {
            for v in p.iter_mut() {
                *v *= factor;
            }
        }
    }

    /// New signal with the same metadata and `f` applied to every polarization.
    pub fn map_pols(&self, mut f: impl FnMut(&[Complex64]) -> Vec<Complex64>) -> Self {
        Self {
            pols: self.pols.iter().map(|p| f(p)).collect(),
            sample_rate: self.sample_rate,
            sps: self.sps,
        }
    }
}

pub fn mean_power(x: &[Complex64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|v| v.norm_sqr()).sum::<f64>() / x.len() as f64
}

// Gray code per axis: 2 bits -> amplitude level.
const GRAY_LEVELS: [(u8, f64); 4] = [(0b00, -3.0), (0b01, -1.0), (0b11, 1.0), (0b10, 3.0)];

fn gray_level(bits: u8) -> f64 {
    GRAY_LEVELS
        .iter()
        .find(|(b, _)| *b == bits)
        .map(|(_, l)| *l)
        .expect("two-bit value")
}

/// The 16-QAM point for a nibble `b3 b2 b1 b0` (first bit most significant).
///
/// The first two bits pick the in-phase level, the last two the quadrature
/// level, each through the Gray table `00 -> -3, 01 -> -1, 11 -> +1, 10 -> +3`.
/// Points are scaled by `1/sqrt(10)` for unit average power.
pub fn qam16_point(nibble: u8) -> Complex64 {
    let i = gray_level((nibble >> 2) & 0b11);
    let q = gray_level(nibble & 0b11);
    Complex64::new(i, q) / 10f64.sqrt()
}

pub fn qam16_constellation() -> [Complex64; 16] {
    std::array::from_fn(|n| qam16_point(n as u8))
}

/// Maps a bit stream (one `bool` per bit) onto Gray-coded 16-QAM symbols.
pub fn map_qam16(bits: &[bool]) -> Result<SymbolSequence> {
    if bits.len() % 4 != 0 {
        return Err(Error::Shape(format!(
            "16-QAM needs a multiple of 4 bits, got {}",
            bits.len()
        )));
    }
    let symbols = bits
        .chunks_exact(4)
        .map(|c| {
            let nibble = c.iter().fold(0u8, |acc, &b| (acc << 1) | b as u8);
            qam16_point(nibble)
        })
        .collect();
    Ok(SymbolSequence::new(symbols))
}

/// Uniform random 16-QAM symbols drawn through the bit mapper.
pub fn random_qam16<R: rand::Rng + ?Sized>(n: usize, rng: &mut R) -> SymbolSequence {
    let bits: Vec<bool> = (0..4 * n).map(|_| rng.random::<bool>()).collect();
    map_qam16(&bits).expect("bit count is a multiple of 4")
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RrcSpec {
    pub rolloff: f64,
    pub span_symbols: usize,
    pub sps: usize,
}

impl Default for RrcSpec {
    fn default() -> Self {
        Self {
            rolloff: 0.01,
            span_symbols: 512,
            sps: 2,
        }
    }
}

impl RrcSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.rolloff > 0.0 && self.rolloff <= 1.0) {
            return Err(Error::Config(format!(
                "RRC roll-off must lie in (0, 1], got {}",
                self.rolloff
            )));
        }
        if self.sps < 2 {
            return Err(Error::Config(format!("RRC needs sps >= 2, got {}", self.sps)));
        }
        if self.span_symbols == 0 {
            return Err(Error::Config("RRC span must be positive".into()));
        }
        Ok(())
    }

    /// Real, even-symmetric, unit-energy taps; `span_symbols * sps + 1` long.
    pub fn taps(&self) -> Vec<f64> {
        let half = (self.span_symbols * self.sps / 2) as i64;
        let beta = self.rolloff;
        let mut taps: Vec<f64> = (-half..=half)
            .map(|n| rrc_impulse(n as f64 / self.sps as f64, beta))
            .collect();
        let norm = taps.iter().map(|t| t * t).sum::<f64>().sqrt();
        for t in &mut taps {
            *t /= norm;
        }
        taps
    }

    /// Sampled RRC frequency response on an `n`-point FFT grid, i.e. the
    /// filter of an `n`-sample periodic frame. Scaled so that shaping and
    /// matched filtering together have unit gain at the symbol instants.
    pub fn periodic_response(&self, n: usize) -> Vec<f64> {
        let beta = self.rolloff;
        let sps = self.sps as f64;
        let lo = (1.0 - beta) / 2.0;
        let hi = (1.0 + beta) / 2.0;
        (0..n)
            .map(|k| {
                // frequency in units of the symbol rate
                let kk = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
                let f = (kk * sps / n as f64).abs();
                let rc = if f <= lo {
                    1.0
                } else if f < hi {
                    0.5 * (1.0 + (PI / beta * (f - lo)).cos())
                } else {
                    0.0
                };
                (sps * rc).sqrt()
            })
            .collect()
    }

    pub(crate) fn complex_taps(&self) -> Vec<Complex64> {
        self.taps().into_iter().map(|t| Complex64::new(t, 0.0)).collect()
    }
}

/// RRC impulse response at `t` symbol periods (unnormalized).
fn rrc_impulse(t: f64, beta: f64) -> f64 {
    if t.abs() < 1e-12 {
        return 1.0 - beta + 4.0 * beta / PI;
    }
    let edge = 1.0 / (4.0 * beta);
    if (t.abs() - edge).abs() < 1e-9 {
        let a = PI / (4.0 * beta);
        return beta / 2f64.sqrt() * ((1.0 + 2.0 / PI) * a.sin() + (1.0 - 2.0 / PI) * a.cos());
    }
    let num = (PI * t * (1.0 - beta)).sin() + 4.0 * beta * t * (PI * t * (1.0 + beta)).cos();
    let den = PI * t * (1.0 - (4.0 * beta * t).powi(2));
    num / den
}

/// Zero-insertion upsampling by `sps`.
pub fn upsample(symbols: &[Complex64], sps: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); symbols.len() * sps];
    for (i, s) in symbols.iter().enumerate() {
        out[i * sps] = *s;
    }
    out
}

/// Upsample and RRC-shape one polarization of symbols.
pub fn rrc_shape(symbols: &SymbolSequence, spec: &RrcSpec, baud_rate: f64) -> Result<ComplexSignal> {
    spec.validate()?;
    let up = upsample(&symbols.symbols, spec.sps);
    let shaped = fft::convolve_same(&up, &spec.complex_taps());
    ComplexSignal::single(shaped, baud_rate * spec.sps as f64, spec.sps)
}

/// Dual-polarization variant of [`rrc_shape`].
pub fn rrc_shape_dual(
    x: &SymbolSequence,
    y: &SymbolSequence,
    spec: &RrcSpec,
    baud_rate: f64,
) -> Result<ComplexSignal> {
    if x.len() != y.len() {
        return Err(Error::Shape("polarization symbol counts differ".into()));
    }
    let sx = rrc_shape(x, spec, baud_rate)?;
    let sy = rrc_shape(y, spec, baud_rate)?;
    ComplexSignal::new(
        vec![sx.pols.into_iter().next().unwrap(), sy.pols.into_iter().next().unwrap()],
        sx.sample_rate,
        spec.sps,
    )
}

/// Matched RRC filter followed by one sample per symbol at `timing_phase`.
/// Returns one sequence per polarization.
pub fn matched_filter_downsample(
    signal: &ComplexSignal,
    spec: &RrcSpec,
    timing_phase: usize,
) -> Result<Vec<SymbolSequence>> {
    spec.validate()?;
    if signal.sps != spec.sps {
        return Err(Error::Config(format!(
            "signal runs at {} sps but the filter expects {}",
            signal.sps, spec.sps
        )));
    }
    if timing_phase >= spec.sps {
        return Err(Error::Config(format!(
            "timing phase {timing_phase} outside [0, {})",
            spec.sps
        )));
    }
    let taps = spec.complex_taps();
    Ok(signal
        .pols
        .iter()
        .map(|p| {
            let filtered = fft::convolve_same(p, &taps);
            SymbolSequence::new(
                filtered
                    .iter()
                    .skip(timing_phase)
                    .step_by(spec.sps)
                    .copied()
                    .collect(),
            )
        })
        .collect())
}

/// `10 log10(mean|ref|^2 / mean|rx - ref|^2)`, capped at [`SNR_CAP_DB`].
pub fn snr_db(received: &SymbolSequence, reference: &SymbolSequence) -> Result<f64> {
    snr_db_slices(&received.symbols, &reference.symbols)
}

pub fn snr_db_slices(received: &[Complex64], reference: &[Complex64]) -> Result<f64> {
    if received.len() != reference.len() {
        return Err(Error::Shape(format!(
            "SNR over {} received vs {} reference symbols",
            received.len(),
            reference.len()
        )));
    }
    if reference.is_empty() {
        return Err(Error::Shape("SNR over an empty sequence".into()));
    }
    let sig = mean_power(reference);
    let err = received
        .iter()
        .zip(reference)
        .map(|(r, x)| (r - x).norm_sqr())
        .sum::<f64>()
        / reference.len() as f64;
    if err == 0.0 {
        return Ok(SNR_CAP_DB);
    }
    Ok((10.0 * (sig / err).log10()).min(SNR_CAP_DB))
}

/// RMS error vector magnitude relative to the reference RMS.
pub fn evm(received: &[Complex64], reference: &[Complex64]) -> f64 {
    let err: f64 = received
        .iter()
        .zip(reference)
        .map(|(r, x)| (r - x).norm_sqr())
        .sum();
    let sig: f64 = reference.iter().map(|x| x.norm_sqr()).sum();
    (err / sig).sqrt()
}

/// Welch-averaged two-sided power spectral density, summed over
/// polarizations, as `(frequency Hz, dB)` pairs sorted by frequency.
///
/// Hann window, 50 % overlap, density normalized per Hz.
pub fn power_spectrum(signal: &ComplexSignal, nfft: usize) -> Result<Vec<(f64, f64)>> {
    if nfft == 0 || !nfft.is_power_of_two() {
        return Err(Error::Config(format!("nfft must be a power of two, got {nfft}")));
    }
    if nfft > signal.len() {
        return Err(Error::Config(format!(
            "nfft {nfft} exceeds signal length {}",
            signal.len()
        )));
    }
    let window: Vec<f64> = (0..nfft)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / nfft as f64).cos())
        .collect();
    let wpow: f64 = window.iter().map(|w| w * w).sum();
    let hop = (nfft / 2).max(1);
    let mut acc = vec![0.0; nfft];
    let mut segments = 0usize;
    for p in &signal.pols {
        let mut start = 0;
        let mut pol_segments = 0;
        while start + nfft <= p.len() {
            let mut buf: Vec<Complex64> = p[start..start + nfft]
                .iter()
                .zip(&window)
                .map(|(v, w)| v * w)
                .collect();
            fft::fft_inplace(&mut buf);
            for (a, v) in acc.iter_mut().zip(&buf) {
                *a += v.norm_sqr();
            }
            pol_segments += 1;
            start += hop;
        }
        segments = pol_segments;
    }
    let scale = 1.0 / (segments as f64 * wpow * signal.sample_rate);
    let freqs = fft::fft_freqs(nfft, signal.sample_rate);
    let mut out: Vec<(f64, f64)> = freqs
        .into_iter()
        .zip(acc)
        .map(|(f, p)| (f, 10.0 * (p * scale).max(1e-300).log10()))
        .collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(out)
}
