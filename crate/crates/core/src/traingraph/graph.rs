use std::ops::Range;

use num_complex::Complex64;
use rand::Rng;

use super::conv::{xcorr, xcorr_backward, ComplexConvLayer};
use super::TrainConfig;
use crate::channel::{linear_response, LinkConfig, SsfmPlan, Stage, AWGN_BYPASS_DB};
use crate::error::{Error, Result};
use crate::fft;
use crate::random;
use crate::rxdsp::cd_response;
use crate::sigproc::{self, RrcSpec, SymbolSequence};

#[derive(Clone, Debug)]
enum Op {
    PreEq,
    /// Scale to a fixed mean power.
    Normalize(f64),
    Gain(f64),
    Filter(Vec<Complex64>),
    RealFilter(Vec<f64>),
    Ssfm(Box<SsfmPlan>),
    /// White noise of fixed variance.
    Noise(f64),
    /// White noise relative to the current mean power, dB.
    RelativeNoise(f64),
    RxEq,
    Downsample(usize),
}

#[derive(Clone, Debug)]
enum Cache {
    None,
    Input(Vec<Complex64>),
    Norm { x: Vec<Complex64>, scale: f64, power: f64 },
    Ssfm(Vec<Vec<Vec<Complex64>>>),
}

/// Activations recorded by [`Graph::forward`] for one set.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    caches: Vec<Cache>,
    output: Vec<Complex64>,
}

impl Tape {
    pub fn is_empty(&self) -> bool {
        self.caches.is_empty()
    }

    /// Output symbols of the recorded pass.
    pub fn output(&self) -> &[Complex64] {
        &self.output
    }
}

/// Real-pair gradients of the two trainable layers: entry `j` is
/// `dL/dh_r[j] + i dL/dh_i[j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub preeq: Vec<Complex64>,
    pub rx: Vec<Complex64>,
}

impl Gradients {
    pub fn zeros(kernel_size: usize) -> Self {
        let z = vec![Complex64::new(0.0, 0.0); kernel_size];
        Self { preeq: z.clone(), rx: z }
    }

    /// Same layout as [`Graph::params`].
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(4 * self.preeq.len());
        for layer in [&self.preeq, &self.rx] {
            out.extend(layer.iter().map(|g| g.re));
            out.extend(layer.iter().map(|g| g.im));
        }
        out
    }

    pub(crate) fn accumulate(&mut self, other: &Gradients, scale: f64) {
        for (a, b) in self.preeq.iter_mut().zip(&other.preeq) {
            *a += b * scale;
        }
        for (a, b) in self.rx.iter_mut().zip(&other.rx) {
            *a += b * scale;
        }
    }
}

/// Single-polarization training link: RRC shaping, trainable pre-equalizer,
/// launch power normalization, the static channel layers, CD compensation,
/// receiver power normalization, trainable receiver filter, RRC matched
/// filter and downsampling. Polarization stages and laser phase noise are
/// not part of the graph.
#[derive(Clone, Debug)]
pub struct Graph {
    pub preeq: ComplexConvLayer,
    pub rx: ComplexConvLayer,
    /// Draw noise in the forward pass. Off for gradient checks.
    pub noise_enabled: bool,
    pub set_symbols: usize,
    /// Symbols at each set edge excluded from the loss.
    pub loss_guard: usize,
    pub sps: usize,
    pub sample_rate: f64,
    shaping: Vec<f64>,
    ops: Vec<Op>,
    checkpoint_every: usize,
}

impl Graph {
    /// Build the graph twin of `link` for sets of `cfg.set_symbols` symbols.
    /// Both trainable layers start as identity filters.
    pub fn new(link: &LinkConfig, rrc: &RrcSpec, cfg: &TrainConfig) -> Result<Self> {
        link.validate()?;
        rrc.validate()?;
        cfg.validate()?;
        let sps = rrc.sps;
        let n = cfg.set_symbols * sps;
        let fs = link.baud_rate * sps as f64;
        let omegas = fft::fft_omegas(n, fs);
        let mut ops = vec![Op::PreEq, Op::Normalize(link.launch_power_w() / 2.0)];
        ops.push(Op::RelativeNoise(link.tx_awgn_db));
        let mut wavelength = None;
        for stage in &link.stages {
            match stage {
                Stage::Fiber(f) => {
                    wavelength.get_or_insert(f.wavelength_nm);
                    if f.is_linear() {
                        ops.push(Op::Filter(linear_response(f.length_m, f.alpha(), f.beta2(), &omegas)));
                    } else {
                        ops.push(Op::Ssfm(Box::new(SsfmPlan::new(f, n, fs, 1)?)));
                    }
                }
                Stage::Edfa(e) => {
                    ops.push(Op::Gain(e.field_gain()));
                    ops.push(Op::Noise(e.ase_variance(fs)));
                }
                Stage::Wss(w) => ops.push(Op::RealFilter(w.response(n, fs))),
                Stage::Awgn { level_db } => ops.push(Op::RelativeNoise(*level_db)),
                Stage::Polarization(_) => {}
            }
        }
        ops.push(Op::RelativeNoise(link.rx_awgn_db));
        let dispersion = link.total_dispersion();
        if dispersion != 0.0 {
            ops.push(Op::Filter(cd_response(n, fs, dispersion, wavelength.unwrap_or(1550.0))));
        }
        ops.push(Op::Normalize(1.0 / sps as f64));
        let shaping = rrc.periodic_response(n);
        ops.push(Op::RxEq);
        ops.push(Op::RealFilter(shaping.clone()));
        ops.push(Op::Downsample(sps));
        Ok(Self {
            preeq: ComplexConvLayer::identity(cfg.kernel_size)?,
            rx: ComplexConvLayer::identity(cfg.kernel_size)?,
            noise_enabled: true,
            set_symbols: cfg.set_symbols,
            loss_guard: cfg.loss_guard,
            sps,
            sample_rate: fs,
            shaping,
            ops,
            checkpoint_every: cfg.checkpoint_every,
        })
    }

    pub fn kernel_size(&self) -> usize {
        self.preeq.kernel_size()
    }

    /// Symbols scored by the loss.
    pub fn scored(&self) -> Range<usize> {
        self.loss_guard..self.set_symbols - self.loss_guard
    }

    /// `[preeq h_r, preeq h_i, rx h_r, rx h_i]`.
    pub fn params(&self) -> Vec<f64> {
        [&self.preeq.h_r, &self.preeq.h_i, &self.rx.h_r, &self.rx.h_i]
            .iter()
            .flat_map(|v| v.iter().copied())
            .collect()
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        let k = self.kernel_size();
        if params.len() != 4 * k {
            return Err(Error::Shape(format!("expected {} parameters, got {}", 4 * k, params.len())));
        }
        let mut chunks = params.chunks(k).map(<[f64]>::to_vec);
        self.preeq = ComplexConvLayer::new(chunks.next().unwrap(), chunks.next().unwrap())?;
        self.rx = ComplexConvLayer::new(chunks.next().unwrap(), chunks.next().unwrap())?;
        Ok(())
    }

    /// Upsampled, RRC-shaped waveform of one set (the static first layer).
    /// Sets are treated as periodic frames.
    pub fn shape(&self, symbols: &SymbolSequence) -> Result<Vec<Complex64>> {
        if symbols.len() != self.set_symbols {
            return Err(Error::Shape(format!(
                "graph built for {}-symbol sets, got {}",
                self.set_symbols,
                symbols.len()
            )));
        }
        let mut x = sigproc::upsample(&symbols.symbols, self.sps);
        fft::filter_real_inplace(&mut x, &self.shaping);
        Ok(x)
    }

    /// Forward pass of one set, recording activations in `tape`.
    pub fn forward<R: Rng + ?Sized>(
        &self,
        symbols: &SymbolSequence,
        rng: &mut R,
        tape: &mut Tape,
    ) -> Result<Vec<Complex64>> {
        let shaped = self.shape(symbols)?;
        self.forward_shaped(&shaped, rng, tape)
    }

    /// Forward pass from an already shaped waveform (see [`Graph::shape`]).
    pub fn forward_shaped<R: Rng + ?Sized>(
        &self,
        shaped: &[Complex64],
        rng: &mut R,
        tape: &mut Tape,
    ) -> Result<Vec<Complex64>> {
        if shaped.len() != self.set_symbols * self.sps {
            return Err(Error::Shape(format!(
                "expected {} samples, got {}",
                self.set_symbols * self.sps,
                shaped.len()
            )));
        }
        tape.caches.clear();
        // power targets scale with the set's own symbol power, so the
        // sampling spread of a finite set is not a gain error
        let set_power = sigproc::mean_power(shaped) * self.sps as f64;
        let mut x = shaped.to_vec();
        for op in &self.ops {
            let cache = match op {
                Op::PreEq => {
                    let y = xcorr(&x, &self.preeq.weights());
                    Cache::Input(std::mem::replace(&mut x, y))
                }
                Op::RxEq => {
                    let y = xcorr(&x, &self.rx.weights());
                    Cache::Input(std::mem::replace(&mut x, y))
                }
                Op::Normalize(target) => {
                    let power = sigproc::mean_power(&x);
                    if !(power > 0.0) {
                        return Err(Error::State("cannot normalize an all-zero waveform".into()));
                    }
                    let scale = (target * set_power / power).sqrt();
                    let y = x.iter().map(|v| v * scale).collect();
                    Cache::Norm {
                        x: std::mem::replace(&mut x, y),
                        scale,
                        power,
                    }
                }
                Op::Gain(g) => {
                    x.iter_mut().for_each(|v| *v *= *g);
                    Cache::None
                }
                Op::Filter(h) => {
                    fft::filter_inplace(&mut x, h);
                    Cache::None
                }
                Op::RealFilter(h) => {
                    fft::filter_real_inplace(&mut x, h);
                    Cache::None
                }
                Op::Ssfm(plan) => {
                    let mut pols = [std::mem::take(&mut x)];
                    let cps = plan.forward_checkpointed(&mut pols, self.checkpoint_every);
                    let [y] = pols;
                    x = y;
                    Cache::Ssfm(cps)
                }
                Op::Noise(var) => {
                    if self.noise_enabled {
                        random::add_complex_gaussian(&mut x, rng, *var);
                    }
                    Cache::None
                }
                Op::RelativeNoise(db) => {
                    if self.noise_enabled && *db > AWGN_BYPASS_DB {
                        let var = sigproc::mean_power(&x) * 10f64.powf(db / 10.0);
                        random::add_complex_gaussian(&mut x, rng, var);
                    }
                    Cache::None
                }
                Op::Downsample(sps) => {
                    x = x.iter().step_by(*sps).copied().collect();
                    Cache::None
                }
            };
            tape.caches.push(cache);
        }
        tape.output = x.clone();
        Ok(x)
    }

    /// Vector-Jacobian product of the recorded pass: maps the real-pair
    /// gradient `seed` at the output symbols to gradients of both layers.
    pub fn backward(&self, tape: &Tape, seed: &[Complex64]) -> Result<Gradients> {
        if tape.caches.len() != self.ops.len() {
            return Err(Error::State("backward pass requested before a forward pass".into()));
        }
        if seed.len() != tape.output.len() {
            return Err(Error::Shape(format!(
                "seed has {} entries for {} outputs",
                seed.len(),
                tape.output.len()
            )));
        }
        let mut g = seed.to_vec();
        let mut grads = Gradients::zeros(self.kernel_size());
        for (op, cache) in self.ops.iter().zip(&tape.caches).rev() {
            match (op, cache) {
                (Op::PreEq, Cache::Input(x)) => {
                    let (gx, gw) = xcorr_backward(x, &self.preeq.weights(), &g);
                    grads.preeq = gw;
                    g = gx;
                }
                (Op::RxEq, Cache::Input(x)) => {
                    let (gx, gw) = xcorr_backward(x, &self.rx.weights(), &g);
                    grads.rx = gw;
                    g = gx;
                }
                (Op::Normalize(_), Cache::Norm { x, scale, power }) => {
                    let s: f64 = g.iter().zip(x).map(|(a, b)| (a.conj() * b).re).sum();
                    let k = scale * s / (power * x.len() as f64);
                    for (gi, xi) in g.iter_mut().zip(x) {
                        *gi = *gi * *scale - xi * k;
                    }
                }
                (Op::Gain(a), _) => g.iter_mut().for_each(|v| *v *= *a),
                (Op::Filter(h), _) => {
                    let hc: Vec<Complex64> = h.iter().map(|v| v.conj()).collect();
                    fft::filter_inplace(&mut g, &hc);
                }
                (Op::RealFilter(h), _) => fft::filter_real_inplace(&mut g, h),
                (Op::Ssfm(plan), Cache::Ssfm(cps)) => {
                    let mut pols = [std::mem::take(&mut g)];
                    plan.adjoint(cps, self.checkpoint_every, &mut pols);
                    let [y] = pols;
                    g = y;
                }
                (Op::Noise(_) | Op::RelativeNoise(_), _) => {}
                (Op::Downsample(sps), _) => {
                    let mut up = vec![Complex64::new(0.0, 0.0); g.len() * sps];
                    for (i, v) in g.iter().enumerate() {
                        up[i * sps] = *v;
                    }
                    g = up;
                }
                _ => return Err(Error::State("activation cache does not match the graph".into())),
            }
        }
        Ok(grads)
    }

    /// Loss of a recorded output against the transmitted symbols over
    /// [`Graph::scored`], with its real-pair gradient seed.
    pub fn loss_seed(&self, output: &[Complex64], target: &SymbolSequence) -> Result<(f64, Vec<Complex64>)> {
        if output.len() != target.len() {
            return Err(Error::Shape("output and target lengths differ".into()));
        }
        let range = self.scored();
        let m = range.len() as f64;
        let mut seed = vec![Complex64::new(0.0, 0.0); output.len()];
        let mut loss = 0.0;
        for s in range {
            let d = output[s] - target.symbols[s];
            loss += d.norm_sqr();
            seed[s] = d * (2.0 / m);
        }
        Ok((loss / m, seed))
    }

    /// Forward and backward for one set from its shaped waveform.
    pub fn loss_and_grad<R: Rng + ?Sized>(
        &self,
        shaped: &[Complex64],
        target: &SymbolSequence,
        rng: &mut R,
    ) -> Result<(f64, Gradients)> {
        let mut tape = Tape::default();
        let out = self.forward_shaped(shaped, rng, &mut tape)?;
        let (loss, seed) = self.loss_seed(&out, target)?;
        Ok((loss, self.backward(&tape, &seed)?))
    }

    /// Loss of one set without recording a tape.
    pub fn loss<R: Rng + ?Sized>(&self, shaped: &[Complex64], target: &SymbolSequence, rng: &mut R) -> Result<f64> {
        let mut tape = Tape::default();
        let out = self.forward_shaped(shaped, rng, &mut tape)?;
        Ok(self.loss_seed(&out, target)?.0)
    }
}

/// Mean squared complex error, `sum |out - target|^2 / n`.
pub fn loss_mse(output: &SymbolSequence, target: &SymbolSequence) -> Result<f64> {
    if output.len() != target.len() {
        return Err(Error::Shape(format!(
            "output has {} symbols, target {}",
            output.len(),
            target.len()
        )));
    }
    if output.is_empty() {
        return Ok(0.0);
    }
    Ok(output
        .symbols
        .iter()
        .zip(&target.symbols)
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        / output.len() as f64)
}
