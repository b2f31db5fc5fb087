//! Conventional receiver DSP: FIR filtering, CD compensation, the adaptive
//! 2x2 LMS equalizer with PLL, and pre-equalizer tap handling.

mod lms;
mod taps;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

pub use lms::{lms_pll_equalize, lms_pll_equalize_scheduled, ButterflyTaps, EqualizerOutput, PllGains, DIVERGENCE_RATIO, DIVERGENCE_WINDOW};
pub use taps::{extract_preeq_taps, format_taps, parse_taps, read_taps, write_taps, FirTaps, TapFileMeta};

use crate::channel::beta2_from_dispersion;
use crate::error::{Error, Result};
use crate::fft;
use crate::sigproc::{self, ComplexSignal, RrcSpec, SymbolSequence};

/// Same-length, center-aligned convolution of every polarization with `taps`.
pub fn fir_apply(signal: &ComplexSignal, taps: &FirTaps) -> ComplexSignal {
    signal.map_pols(|p| fft::convolve_same(p, &taps.taps))
}

/// Undo `total_dispersion` ps/nm of accumulated chromatic dispersion at
/// `wavelength_nm`.
pub fn cd_compensate(signal: &ComplexSignal, total_dispersion: f64, wavelength_nm: f64) -> ComplexSignal {
    if total_dispersion == 0.0 {
        return signal.clone();
    }
    let h = cd_response(signal.len(), signal.sample_rate, total_dispersion, wavelength_nm);
    signal.map_pols(|p| {
        let mut buf = p.to_vec();
        fft::filter_inplace(&mut buf, &h);
        buf
    })
}

/// Frequency response of the CD compensator on the FFT grid.
pub fn cd_response(n: usize, sample_rate: f64, total_dispersion: f64, wavelength_nm: f64) -> Vec<Complex64> {
    // beta2 * L for the whole link: D * L in ps/nm == (ps/(nm km)) * km
    let beta2_l = beta2_from_dispersion(total_dispersion, wavelength_nm) * 1e3;
    fft::fft_omegas(n, sample_rate)
        .into_iter()
        .map(|w| Complex64::from_polar(1.0, -beta2_l / 2.0 * w * w))
        .collect()
}

/// Scale each polarization to mean power `1 / sps`, the power of an
/// RRC-shaped unit-power symbol stream.
pub fn normalize_per_pol(signal: &ComplexSignal) -> ComplexSignal {
    let target = 1.0 / signal.sps as f64;
    signal.map_pols(|p| {
        let pw = sigproc::mean_power(p);
        let s = if pw > 0.0 { (target / pw).sqrt() } else { 1.0 };
        p.iter().map(|v| v * s).collect()
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RxConfig {
    pub num_taps: usize,
    /// LMS step size over the preamble.
    pub step_size: f64,
    /// Step size after the preamble; `None` keeps `step_size`.
    pub tracking_step_size: Option<f64>,
    /// Adaptation passes over the frame before the scored pass, each
    /// starting from the previous pass's taps.
    pub preconverge_passes: usize,
    pub pll: PllGains,
    /// Leading symbols excluded from SNR while the equalizer converges.
    pub preamble: usize,
    /// Symbols dropped at both frame ends before measuring SNR.
    pub guard: usize,
    pub wavelength_nm: f64,
    /// RRC matched filter ahead of the equalizer; `None` leaves it to the
    /// equalizer taps.
    pub matched_filter: Option<RrcSpec>,
}

impl Default for RxConfig {
    fn default() -> Self {
        Self {
            num_taps: 101,
            step_size: 1e-3,
            tracking_step_size: Some(1e-4),
            preconverge_passes: 1,
            pll: PllGains::default(),
            preamble: 4000,
            guard: sigproc::DEFAULT_SNR_GUARD,
            wavelength_nm: 1550.0,
            matched_filter: Some(RrcSpec::default()),
        }
    }
}

impl RxConfig {
    /// Symbol range `[start, end)` scored for SNR in an `n`-symbol frame.
    pub fn scored_range(&self, n: usize) -> Result<(usize, usize)> {
        let start = self.preamble.max(self.guard);
        let end = n.saturating_sub(self.guard);
        if start >= end {
            return Err(Error::Config(format!(
                "frame of {n} symbols leaves nothing to score after preamble {} and guard {}",
                self.preamble, self.guard
            )));
        }
        Ok((start, end))
    }
}

#[derive(Clone, Debug)]
pub struct RxResult {
    /// SNR over both polarizations.
    pub snr_db: f64,
    pub snr_db_per_pol: Vec<f64>,
    /// Mean squared error over the scored symbols, both polarizations.
    pub mse: f64,
    pub equalizer: EqualizerOutput,
}

impl RxResult {
    /// The converged x-polarization filter with the final PLL phase folded
    /// in, i.e. the single filter that maps the normalized input to symbols.
    pub fn converged_taps(&self) -> FirTaps {
        self.equalizer
            .taps
            .hxx
            .scaled(Complex64::from_polar(1.0, -self.equalizer.final_phase[0]))
    }
}

/// Full receiver: CD compensation, per-polarization power normalization,
/// matched filter, LMS/PLL equalization and SNR against the transmitted
/// symbols.
pub fn receive(
    signal: &ComplexSignal,
    reference: &[SymbolSequence],
    total_dispersion: f64,
    cfg: &RxConfig,
) -> Result<RxResult> {
    let compensated = cd_compensate(signal, total_dispersion, cfg.wavelength_nm);
    let mut normalized = normalize_per_pol(&compensated);
    if let Some(rrc) = &cfg.matched_filter {
        let taps = rrc.complex_taps();
        normalized = normalized.map_pols(|p| fft::convolve_same(p, &taps));
    }
    let mut init = ButterflyTaps::identity(cfg.num_taps, signal.sps, cfg.step_size)?;
    for _ in 0..cfg.preconverge_passes {
        init = lms_pll_equalize(&normalized, reference, &init, &cfg.pll)?.taps;
        init.step_size = cfg.step_size;
    }
    let tracking = cfg.tracking_step_size.map(|mu| (cfg.preamble, mu));
    let eq = lms_pll_equalize_scheduled(&normalized, reference, &init, &cfg.pll, tracking)?;
    let (start, end) = cfg.scored_range(reference[0].len())?;
    let mut err = 0.0;
    let mut sig = 0.0;
    let mut per_pol = Vec::with_capacity(2);
    for (out, r) in eq.symbols.iter().zip(reference) {
        let rx = &out.symbols[start..end];
        let tx = &r.symbols[start..end];
        per_pol.push(sigproc::snr_db_slices(rx, tx)?);
        err += rx.iter().zip(tx).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>();
        sig += tx.iter().map(|b| b.norm_sqr()).sum::<f64>();
    }
    let count = (2 * (end - start)) as f64;
    let snr_db = if err == 0.0 {
        sigproc::SNR_CAP_DB
    } else {
        (10.0 * (sig / err).log10()).min(sigproc::SNR_CAP_DB)
    };
    Ok(RxResult {
        snr_db,
        snr_db_per_pol: per_pol,
        mse: err / count,
        equalizer: eq,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{ssfm_propagate, FiberParams};
    use crate::random;
    use crate::sigproc::{random_qam16, rrc_shape_dual, RrcSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
        (0..n)
            .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn centered_impulse_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = rand_vec(300, &mut rng);
        let sig = ComplexSignal::single(x.clone(), 1.0, 2).unwrap();
        let y = fir_apply(&sig, &FirTaps::identity(101, 2).unwrap());
        for (a, b) in x.iter().zip(&y.pols[0]) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn fir_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = rand_vec(200, &mut rng);
        let mut h = rand_vec(17, &mut rng);
        h.truncate(17);
        let taps = FirTaps::new(h.clone(), 2).unwrap();
        let y = fir_apply(&ComplexSignal::single(x.clone(), 1.0, 2).unwrap(), &taps);
        let c = 8isize;
        for n in 0..200isize {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..200isize {
                let m = n - i + c;
                if (0..17).contains(&m) {
                    acc += x[i as usize] * h[m as usize];
                }
            }
            assert!((acc - y.pols[0][n as usize]).norm() < 1e-12);
        }
    }

    #[test]
    fn complex_fir_splits_into_four_real_convolutions() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = rand_vec(128, &mut rng);
        let h = rand_vec(7, &mut rng);
        let conv_real = |a: &[f64], b: &[f64]| -> Vec<f64> {
            let sig: Vec<Complex64> = a.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            let t: Vec<Complex64> = b.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            fft::convolve_same(&sig, &t).iter().map(|v| v.re).collect()
        };
        let xr: Vec<f64> = x.iter().map(|v| v.re).collect();
        let xi: Vec<f64> = x.iter().map(|v| v.im).collect();
        let hr: Vec<f64> = h.iter().map(|v| v.re).collect();
        let hi: Vec<f64> = h.iter().map(|v| v.im).collect();
        let y = fir_apply(
            &ComplexSignal::single(x, 1.0, 2).unwrap(),
            &FirTaps::new(h, 2).unwrap(),
        );
        let (a, b, c, d) = (conv_real(&xr, &hr), conv_real(&xi, &hi), conv_real(&xr, &hi), conv_real(&xi, &hr));
        for n in 0..128 {
            assert!((y.pols[0][n].re - (a[n] - b[n])).abs() < 1e-12);
            assert!((y.pols[0][n].im - (c[n] + d[n])).abs() < 1e-12);
        }
    }

    #[test]
    fn fir_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = rand_vec(256, &mut rng);
        let y = rand_vec(256, &mut rng);
        let taps = FirTaps::new(rand_vec(31, &mut rng), 2).unwrap();
        let (a, b) = (Complex64::new(0.3, -1.2), Complex64::new(-2.0, 0.5));
        let mix: Vec<Complex64> = x.iter().zip(&y).map(|(u, v)| a * u + b * v).collect();
        let f = |v: Vec<Complex64>| fir_apply(&ComplexSignal::single(v, 1.0, 2).unwrap(), &taps).pols[0].clone();
        let (fx, fy, fm) = (f(x), f(y), f(mix));
        for n in 0..256 {
            assert!((fm[n] - (a * fx[n] + b * fy[n])).norm() < 1e-12);
        }
    }

    #[test]
    fn fir_is_shift_equivariant_away_from_edges() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = rand_vec(256, &mut rng);
        let mut shifted = vec![Complex64::new(0.0, 0.0); 5];
        shifted.extend_from_slice(&x[..251]);
        let taps = FirTaps::new(rand_vec(9, &mut rng), 2).unwrap();
        let f = |v: Vec<Complex64>| fir_apply(&ComplexSignal::single(v, 1.0, 2).unwrap(), &taps).pols[0].clone();
        let (a, b) = (f(x), f(shifted));
        for n in 20..240 {
            assert!((a[n] - b[n + 5]).norm() < 1e-12);
        }
    }

    #[test]
    fn cd_compensation_inverts_linear_fiber() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = rand_vec(4096, &mut rng);
        let sig = ComplexSignal::single(x, 130e9, 2).unwrap();
        let zero = cd_compensate(&sig, 0.0, 1550.0);
        assert_eq!(zero, sig);
        let fiber = FiberParams {
            length_m: 16.0 * 80e3,
            loss_db_per_km: 0.0,
            kerr: 0.0,
            ..FiberParams::default()
        };
        let out = ssfm_propagate(&sig, &fiber).unwrap();
        let back = cd_compensate(&out, fiber.total_dispersion(), 1550.0);
        let err = sigproc::evm(&back.pols[0], &sig.pols[0]);
        assert!(err < 1e-6, "{err}");
    }

    fn clean_dual(n: usize, seed: u64) -> (ComplexSignal, Vec<SymbolSequence>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_qam16(n, &mut rng);
        let y = random_qam16(n, &mut rng);
        let spec = RrcSpec::default();
        let s = rrc_shape_dual(&x, &y, &spec, 65e9).unwrap();
        (s, vec![x, y])
    }

    #[test]
    fn clean_signal_converges_to_identity_like_taps() {
        let (s, refs) = clean_dual(1 << 13, 7);
        let cfg = RxConfig {
            pll: PllGains::disabled(),
            ..RxConfig::default()
        };
        let r = receive(&s, &refs, 0.0, &cfg).unwrap();
        assert!(r.snr_db >= 40.0, "{}", r.snr_db);
        let hxx = &r.equalizer.taps.hxx;
        let center = hxx.taps[hxx.center()].norm();
        let rest = hxx
            .taps
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != hxx.center())
            .map(|(_, t)| t.norm())
            .fold(0.0, f64::max);
        assert!(center > 10.0 * rest);
    }

    /// Solve `A x = b` by Gaussian elimination with partial pivoting.
    fn solve(mut a: Vec<Vec<Complex64>>, mut b: Vec<Complex64>) -> Vec<Complex64> {
        let n = b.len();
        for col in 0..n {
            let piv = (col..n).max_by(|&i, &j| a[i][col].norm().total_cmp(&a[j][col].norm())).unwrap();
            a.swap(col, piv);
            b.swap(col, piv);
            for row in col + 1..n {
                let f = a[row][col] / a[col][col];
                for k in col..n {
                    let v = a[col][k];
                    a[row][k] -= f * v;
                }
                let v = b[col];
                b[row] -= f * v;
            }
        }
        let mut x = vec![Complex64::new(0.0, 0.0); n];
        for row in (0..n).rev() {
            let mut acc = b[row];
            for k in row + 1..n {
                acc -= a[row][k] * x[k];
            }
            x[row] = acc / a[row][row];
        }
        x
    }

    #[test]
    fn static_isi_converges_near_wiener_solution() {
        let n = 120_000;
        let k = 11;
        let c = k / 2;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let refs = vec![random_qam16(n, &mut rng), random_qam16(n, &mut rng)];
        let channel = [Complex64::new(0.25, 0.1), Complex64::new(1.0, 0.0), Complex64::new(-0.3, 0.2)];
        let pols: Vec<Vec<Complex64>> = refs
            .iter()
            .map(|r| {
                let up = sigproc::upsample(&r.symbols, 2);
                let mut y = fft::convolve_same(&up, &channel);
                random::add_complex_gaussian(&mut y, &mut rng, 0.01);
                y
            })
            .collect();
        let sig = ComplexSignal::new(pols, 130e9, 2).unwrap();
        let init = ButterflyTaps::identity(k, 2, 1e-3).unwrap();
        let eq = lms_pll_equalize(&sig, &refs, &init, &PllGains::disabled()).unwrap();
        let tail = n - 30_000..n - 10;
        let lms_mse: f64 = tail
            .clone()
            .map(|s| (eq.symbols[0].symbols[s] - refs[0].symbols[s]).norm_sqr())
            .sum::<f64>()
            / tail.len() as f64;

        // normal equations over the joint (x, y) window for output x
        let dim = 2 * k;
        let window = |s: usize| -> Vec<Complex64> {
            let mut u = Vec::with_capacity(dim);
            for p in &sig.pols {
                for m in 0..k {
                    let j = (2 * s + c) as isize - m as isize;
                    u.push(if j >= 0 && (j as usize) < p.len() { p[j as usize] } else { Complex64::new(0.0, 0.0) });
                }
            }
            u
        };
        let mut r = vec![vec![Complex64::new(0.0, 0.0); dim]; dim];
        let mut p = vec![Complex64::new(0.0, 0.0); dim];
        for s in tail.clone() {
            let u = window(s);
            for i in 0..dim {
                for j in 0..dim {
                    r[i][j] += u[i].conj() * u[j];
                }
                p[i] += u[i].conj() * refs[0].symbols[s];
            }
        }
        let h = solve(r, p);
        let wiener_mse: f64 = tail
            .clone()
            .map(|s| {
                let u = window(s);
                let y: Complex64 = u.iter().zip(&h).map(|(a, b)| a * b).sum();
                (y - refs[0].symbols[s]).norm_sqr()
            })
            .sum::<f64>()
            / tail.len() as f64;
        let gap_db = 10.0 * (lms_mse / wiener_mse).log10();
        assert!(gap_db >= -0.01 && gap_db < 0.2, "LMS {lms_mse} vs Wiener {wiener_mse}");
    }

    #[test]
    fn pll_tracks_phase_walk() {
        let (s, refs) = clean_dual(1 << 14, 9);
        let mut noisy = s.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        // about the link's operating SNR after the matched filter
        let scale = (noisy.mean_power() / 2.0 * 10f64.powf(-1.5)).sqrt();
        for p in &mut noisy.pols {
            for v in p.iter_mut() {
                *v += random::complex_gaussian(&mut rng, scale * scale);
            }
        }
        let mut walked = noisy.clone();
        crate::channel::apply_laser_phase_noise(&mut walked, 100e3, &mut ChaCha8Rng::seed_from_u64(11));
        let cfg = RxConfig::default();
        let a = receive(&noisy, &refs, 0.0, &cfg).unwrap();
        let b = receive(&walked, &refs, 0.0, &cfg).unwrap();
        assert!(a.snr_db - b.snr_db < 0.2, "{} vs {}", a.snr_db, b.snr_db);
    }

    #[test]
    fn equalizer_is_deterministic() {
        let (s, refs) = clean_dual(4096, 12);
        let init = ButterflyTaps::identity(21, 2, 1e-3).unwrap();
        let a = lms_pll_equalize(&s, &refs, &init, &PllGains::default()).unwrap();
        let b = lms_pll_equalize(&s, &refs, &init, &PllGains::default()).unwrap();
        assert_eq!(a.taps, b.taps);
        assert_eq!(a.symbols, b.symbols);
    }

    #[test]
    fn oversized_step_diverges() {
        let (s, refs) = clean_dual(8192, 13);
        let s = s.map_pols(|p| p.iter().map(|v| v * 10.0).collect());
        let init = ButterflyTaps::identity(101, 2, 0.5).unwrap();
        let err = lms_pll_equalize(&s, &refs, &init, &PllGains::default()).unwrap_err();
        assert!(matches!(err, Error::EqualizerDivergence { step_size, .. } if step_size == 0.5));
        assert!(err.to_string().contains("0.5"));
    }

    #[test]
    fn single_pol_rejected() {
        let s = ComplexSignal::single(vec![Complex64::new(1.0, 0.0); 20], 1.0, 2).unwrap();
        let refs = vec![SymbolSequence::new(vec![Complex64::new(1.0, 0.0); 10])];
        let init = ButterflyTaps::identity(5, 2, 1e-3).unwrap();
        assert!(matches!(
            lms_pll_equalize(&s, &refs, &init, &PllGains::default()),
            Err(Error::Shape(_))
        ));
    }
}
