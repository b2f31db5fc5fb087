use jointeq::channel::{apply_polarization, apply_wss, ssfm_propagate, wss_amplitude};
use jointeq::harness::{format_dataset, generate_dataset, parse_dataset, CountRange};
use jointeq::rxdsp::fir_apply;
use jointeq::sigproc::{matched_filter_downsample, random_qam16, rrc_shape, snr_db};
use jointeq::traingraph::{complex_conv_forward, ComplexConvLayer};
use jointeq::{fft, random, Complex64, ComplexSignal, FiberParams, FirTaps, PolarizationParams, RrcSpec, WssParams};
use proptest::prelude::*;

fn noise(n: usize, seed: u64) -> Vec<Complex64> {
    let mut rng = random::stream(seed, &[]);
    (0..n).map(|_| random::complex_gaussian(&mut rng, 1.0)).collect()
}

fn energy(x: &[Complex64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum()
}

fn rel_l2(a: &[Complex64], b: &[Complex64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    (d / energy(b)).sqrt()
}

fn dual(n: usize, seed: u64) -> ComplexSignal {
    ComplexSignal::new(vec![noise(n, seed), noise(n, seed ^ 0xff)], 130e9, 2).unwrap()
}

fn combine(x: &ComplexSignal, y: &ComplexSignal, f: impl Fn(Complex64, Complex64) -> Complex64) -> ComplexSignal {
    let pols = x
        .pols
        .iter()
        .zip(&y.pols)
        .map(|(a, b)| a.iter().zip(b).map(|(&u, &v)| f(u, v)).collect())
        .collect();
    ComplexSignal::new(pols, x.sample_rate, x.sps).unwrap()
}

fn wss_params() -> impl Strategy<Value = WssParams> {
    (10e9..200e9f64, 1e9..20e9f64, -10e9..10e9f64).prop_map(|(b0, botf, fo)| WssParams {
        b0,
        b_otf: botf,
        freq_offset: fo,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn parseval(n in 1usize..300, seed in any::<u64>()) {
        let x = noise(n, seed);
        let mut y = x.clone();
        fft::fft_inplace(&mut y);
        let spectral = energy(&y) / n as f64;
        prop_assert!((spectral / energy(&x) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn snr_ignores_common_rotation(seed in any::<u64>(), phi in -7.0..7.0f64) {
        let mut rng = random::stream(seed, &[]);
        let tx = random_qam16(256, &mut rng);
        let mut rx = tx.clone();
        rx.symbols.iter_mut().for_each(|s| *s += random::complex_gaussian(&mut rng, 0.01));
        let rot = Complex64::from_polar(1.0, phi);
        let (mut tx2, mut rx2) = (tx.clone(), rx.clone());
        tx2.symbols.iter_mut().for_each(|s| *s *= rot);
        rx2.symbols.iter_mut().for_each(|s| *s *= rot);
        let a = snr_db(&rx, &tx).unwrap();
        let b = snr_db(&rx2, &tx2).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn wss_amplitude_is_bounded_and_falls_off(p in wss_params(), d1 in 0.0..150e9f64, d2 in 0.0..150e9f64) {
        let (near, far) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        for d in [near, far] {
            for f in [p.freq_offset + d, p.freq_offset - d] {
                let a = wss_amplitude(f, &p);
                prop_assert!(a >= 0.0 && a <= 1.0);
            }
        }
        // strictly positive through the edge; deep in the stopband the erf
        // difference underflows
        let edge = p.freq_offset + p.b0 / 2.0 + 2.0 * p.b_otf;
        prop_assert!(wss_amplitude(edge, &p) > 0.0);
        prop_assert!(wss_amplitude(p.freq_offset + far, &p) <= wss_amplitude(p.freq_offset + near, &p) + 1e-15);
        prop_assert!(wss_amplitude(p.freq_offset - far, &p) <= wss_amplitude(p.freq_offset - near, &p) + 1e-15);
    }

    #[test]
    fn wss_is_linear(p in wss_params(), seed in any::<u64>(), a in -3.0..3.0f64, b in -3.0..3.0f64) {
        let x = dual(256, seed);
        let y = dual(256, seed.wrapping_add(1));
        let combo = combine(&x, &y, |u, v| u * a + v * Complex64::new(0.0, b));
        let lhs = apply_wss(&combo, &p);
        let rhs = combine(&apply_wss(&x, &p), &apply_wss(&y, &p), |u, v| u * a + v * Complex64::new(0.0, b));
        for (l, r) in lhs.pols.iter().zip(&rhs.pols) {
            prop_assert!(rel_l2(l, r) < 1e-12);
        }
    }

    #[test]
    fn fir_is_linear(seed in any::<u64>(), len in 0usize..12, a in -2.0..2.0f64) {
        let taps = FirTaps::new(noise(2 * len + 1, seed ^ 7), 2).unwrap();
        let x = dual(200, seed);
        let y = dual(200, seed ^ 9);
        let lhs = fir_apply(&combine(&x, &y, |u, v| u * a + v), &taps);
        let rhs = combine(&fir_apply(&x, &taps), &fir_apply(&y, &taps), |u, v| u * a + v);
        for (l, r) in lhs.pols.iter().zip(&rhs.pols) {
            prop_assert!(rel_l2(l, r) < 1e-12);
        }
    }

    #[test]
    fn fir_is_shift_equivariant_away_from_edges(seed in any::<u64>(), len in 0usize..8, shift in 0usize..40) {
        let taps = FirTaps::new(noise(2 * len + 1, seed ^ 3), 2).unwrap();
        // burst in the middle, zeros around it
        let burst = noise(30, seed);
        let place = |at: usize| {
            let mut v = vec![Complex64::new(0.0, 0.0); 200];
            v[at..at + 30].copy_from_slice(&burst);
            ComplexSignal::single(v, 130e9, 2).unwrap()
        };
        let base = fir_apply(&place(60), &taps);
        let moved = fir_apply(&place(60 + shift), &taps);
        for i in 20..140 {
            prop_assert!((moved.pols[0][i + shift] - base.pols[0][i]).norm() < 1e-12);
        }
    }

    #[test]
    fn dispersion_commutes_with_wss(p in wss_params(), seed in any::<u64>(), km in 1.0..100.0f64) {
        let fiber = FiberParams {
            length_m: km * 1e3,
            kerr: 0.0,
            step_m: 5e3,
            ..FiberParams::default()
        };
        let x = dual(512, seed);
        let a = apply_wss(&ssfm_propagate(&x, &fiber).unwrap(), &p);
        let b = ssfm_propagate(&apply_wss(&x, &p), &fiber).unwrap();
        for (l, r) in a.pols.iter().zip(&b.pols) {
            prop_assert!(rel_l2(l, r) < 1e-9);
        }
    }

    #[test]
    fn lossless_polarization_preserves_energy(
        seed in any::<u64>(),
        angles in (-3.2..3.2f64, -3.2..3.2f64, -3.2..3.2f64),
        dgd in 0.0..20e-12f64,
        rate in 0.0..1e6f64,
    ) {
        let p = PolarizationParams { gamma: 0.0, alpha: angles.0, xi: angles.1, eta: angles.2, dgd, rsop_rate: rate };
        let x = dual(512, seed);
        let y = apply_polarization(&x, &p, 0.0).unwrap();
        let ex: f64 = x.pols.iter().map(|v| energy(v)).sum();
        let ey: f64 = y.pols.iter().map(|v| energy(v)).sum();
        prop_assert!((ey / ex - 1.0).abs() < 1e-9);
    }

    #[test]
    fn count_range_round_trips(a in 0usize..500, len in 0usize..50) {
        let r = CountRange { first: a, last: a + len };
        prop_assert_eq!(r.to_string().parse::<CountRange>().unwrap(), r);
        prop_assert_eq!(r.values().count(), r.len());
    }

    #[test]
    fn dataset_text_round_trips(sets in 2usize..12, symbols in 1usize..40, seed in any::<u64>()) {
        let d = generate_dataset(sets, symbols, sets - 1, seed).unwrap();
        let back = parse_dataset(&format_dataset(&d), std::path::Path::new("mem")).unwrap();
        prop_assert_eq!(back, d);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn shaping_then_matched_filter_returns_the_symbols(seed in any::<u64>()) {
        let mut rng = random::stream(seed, &[]);
        let tx = random_qam16(2048, &mut rng);
        let spec = RrcSpec::default();
        let wave = rrc_shape(&tx, &spec, 65e9).unwrap();
        let rx = matched_filter_downsample(&wave, &spec, 0).unwrap();
        // same-length filtering: the first and last half-spans lack neighbours
        let g = spec.span_symbols / 2;
        let evm = jointeq::sigproc::evm(&rx[0].symbols[g..2048 - g], &tx.symbols[g..2048 - g]);
        prop_assert!(evm < 1e-3, "{evm}");
    }

    #[test]
    fn conv_layer_is_fir_with_reversed_taps(seed in any::<u64>(), k in prop::sample::select(vec![1usize, 7, 101]), n in 1usize..300) {
        let x = noise(n, seed);
        let w = noise(k, seed ^ 5);
        let layer = ComplexConvLayer::from_weights(&w).unwrap();
        let y = complex_conv_forward(&x, &layer).unwrap();
        // zero-padded cross-correlation, written out
        let c = (k / 2) as isize;
        let direct: Vec<Complex64> = (0..n as isize)
            .map(|i| {
                (0..k as isize)
                    .filter_map(|j| {
                        let idx = i + j - c;
                        (0..n as isize).contains(&idx).then(|| w[j as usize] * x[idx as usize])
                    })
                    .sum()
            })
            .collect();
        prop_assert!(rel_l2(&y, &direct) < 1e-12);
    }
}
