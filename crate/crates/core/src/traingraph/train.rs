use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::conv::ComplexConvLayer;
use super::graph::{Gradients, Graph};
use super::optim::{adam_step, AdamHyper, AdamState, Optimizer};
use crate::error::{Error, Result};
use crate::random;
use crate::rxdsp::FirTaps;
use crate::sigproc::SymbolSequence;

// RNG stream tags
const SHUFFLE: u64 = 1;
const TRAIN_NOISE: u64 = 2;
const TEST_NOISE: u64 = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Epochs without a new best held-out loss before stopping.
    pub patience: usize,
    /// Sets per optimizer step.
    pub batch_size: usize,
    pub dataset_sets: usize,
    pub train_sets: usize,
    pub test_sets: usize,
    pub set_symbols: usize,
    pub kernel_size: usize,
    /// Symbols at each set edge left out of the loss.
    pub loss_guard: usize,
    /// Half-width of the uniform perturbation of the off-center pre-eq taps.
    pub init_spread: f64,
    /// SSFM steps between stored fields in the backward pass.
    pub checkpoint_every: usize,
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            max_epochs: 150,
            patience: 6,
            batch_size: 64,
            dataset_sets: 7680,
            train_sets: 6400,
            test_sets: 1280,
            set_symbols: 512,
            kernel_size: 101,
            loss_guard: 0,
            init_spread: 1e-4,
            checkpoint_every: 64,
            optimizer: Optimizer::Adam,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.train_sets + self.test_sets != self.dataset_sets {
            return bad(format!(
                "train {} + test {} sets != dataset {}",
                self.train_sets, self.test_sets, self.dataset_sets
            ));
        }
        if self.train_sets == 0 || self.test_sets == 0 || self.batch_size == 0 {
            return bad("train, test and batch sizes must be positive".into());
        }
        if self.kernel_size % 2 == 0 {
            return bad(format!("kernel size must be odd, got {}", self.kernel_size));
        }
        if 2 * self.loss_guard >= self.set_symbols {
            return bad(format!(
                "loss guard {} leaves nothing of a {}-symbol set",
                self.loss_guard, self.set_symbols
            ));
        }
        if !(self.learning_rate > 0.0) || self.max_epochs == 0 || self.patience == 0 {
            return bad("learning rate, epoch limit and patience must be positive".into());
        }
        Ok(())
    }

    pub fn hyper(&self) -> AdamHyper {
        AdamHyper {
            learning_rate: self.learning_rate,
            ..AdamHyper::default()
        }
    }
}

/// Pre-eq layer: center tap 1, other taps uniform in `±spread` (real and
/// imaginary parts). Rx layer: `rx_taps` reversed into layer order.
pub fn initialize<R: Rng + ?Sized>(graph: &mut Graph, rx_taps: &FirTaps, spread: f64, rng: &mut R) -> Result<()> {
    let k = graph.kernel_size();
    if rx_taps.len() != k {
        return Err(Error::Config(format!(
            "receiver taps have length {}, layers expect {k}",
            rx_taps.len()
        )));
    }
    let mut w: Vec<Complex64> = (0..k)
        .map(|_| {
            if spread > 0.0 {
                Complex64::new(rng.random_range(-spread..=spread), rng.random_range(-spread..=spread))
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    w[k / 2] = Complex64::new(1.0, 0.0);
    graph.preeq = ComplexConvLayer::from_weights(&w)?;
    graph.rx = ComplexConvLayer::from_fir(rx_taps)?;
    Ok(())
}

/// Rotate the receiver layer by the phase that best maps the noiseless
/// graph output onto `sets` (least squares). Receiver taps taken from a
/// run with laser phase noise carry the carrier phase of that run, which
/// the graph does not model. Returns the applied rotation in radians.
pub fn align_rx_phase(graph: &mut Graph, sets: &[SymbolSequence]) -> Result<f64> {
    let mut probe = graph.clone();
    probe.noise_enabled = false;
    let mut rng = random::stream(0, &[]);
    let mut acc = Complex64::new(0.0, 0.0);
    for s in sets {
        let out = probe.forward(s, &mut rng, &mut super::graph::Tape::default())?;
        let scored = probe.scored();
        acc += out[scored.clone()]
            .iter()
            .zip(&s.symbols[scored])
            .map(|(y, x)| y.conj() * x)
            .sum::<Complex64>();
    }
    if acc.norm() == 0.0 {
        return Ok(0.0);
    }
    let phi = acc.arg();
    let w: Vec<Complex64> = graph.rx.weights().iter().map(|v| v * Complex64::from_polar(1.0, phi)).collect();
    graph.rx = ComplexConvLayer::from_weights(&w)?;
    Ok(phi)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_loss: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Graph holding the best-epoch weights.
    pub graph: Graph,
    pub curves: Vec<EpochRecord>,
    /// Held-out loss of the initialized graph, before any update.
    pub initial_test_loss: f64,
    pub best_epoch: usize,
    pub best_test_loss: f64,
    /// Stopped by patience rather than the epoch limit.
    pub early_stopped: bool,
}

impl TrainOutcome {
    /// Record of the epoch training stopped at.
    pub fn last(&self) -> Option<&EpochRecord> {
        self.curves.last()
    }
}

/// Mean loss over `sets` with the fixed held-out noise realizations.
pub fn held_out_loss(graph: &Graph, shaped: &[Vec<Complex64>], sets: &[SymbolSequence], seed: u64) -> Result<f64> {
    let mut total = 0.0;
    for (i, (x, s)) in shaped.iter().zip(sets).enumerate() {
        let mut rng = random::stream(seed, &[TEST_NOISE, i as u64]);
        total += graph.loss(x, s, &mut rng)?;
    }
    Ok(total / sets.len() as f64)
}

/// Epoch loop: shuffled batches with fresh noise per set, one optimizer step
/// per batch on the batch-mean loss, held-out loss after every epoch, early
/// stop after `patience` epochs without improvement. Returns the best-epoch
/// weights.
pub fn train(
    graph: Graph,
    cfg: &TrainConfig,
    train_sets: &[SymbolSequence],
    test_sets: &[SymbolSequence],
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    if train_sets.is_empty() || test_sets.is_empty() {
        return Err(Error::Config("training needs non-empty train and test sets".into()));
    }
    let shape_all = |sets: &[SymbolSequence]| -> Result<Vec<Vec<Complex64>>> {
        sets.iter().map(|s| graph.shape(s)).collect()
    };
    let train_shaped = shape_all(train_sets)?;
    let test_shaped = shape_all(test_sets)?;

    let mut graph = graph;
    let mut params = graph.params();
    let mut state = AdamState::new(params.len());
    let hyper = cfg.hyper();
    let initial = held_out_loss(&graph, &test_shaped, test_sets, cfg.seed)?;
    if !initial.is_finite() {
        return Err(Error::TrainingDivergence {
            epoch: 0,
            learning_rate: cfg.learning_rate,
        });
    }
    let mut best = (initial, params.clone(), 0usize);
    let mut curves = Vec::new();
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..train_sets.len()).collect();
    let mut early_stopped = false;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut random::stream(cfg.seed, &[SHUFFLE, epoch as u64]));
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = Gradients::zeros(graph.kernel_size());
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let mut rng = random::stream(cfg.seed, &[TRAIN_NOISE, epoch as u64, i as u64]);
                let (loss, g) = graph.loss_and_grad(&train_shaped[i], &train_sets[i], &mut rng)?;
                epoch_loss += loss;
                grads.accumulate(&g, scale);
            }
            let flat = grads.flat();
            if !epoch_loss.is_finite() || flat.iter().any(|v| !v.is_finite()) {
                return Err(Error::TrainingDivergence {
                    epoch,
                    learning_rate: cfg.learning_rate,
                });
            }
            adam_step(&mut params, &flat, &mut state, &hyper, cfg.optimizer)?;
            if params.iter().any(|v| !v.is_finite()) {
                return Err(Error::TrainingDivergence {
                    epoch,
                    learning_rate: cfg.learning_rate,
                });
            }
            graph.set_params(&params)?;
        }
        let train_loss = epoch_loss / train_sets.len() as f64;
        let test_loss = held_out_loss(&graph, &test_shaped, test_sets, cfg.seed)?;
        if !test_loss.is_finite() {
            return Err(Error::TrainingDivergence {
                epoch,
                learning_rate: cfg.learning_rate,
            });
        }
        let record = EpochRecord {
            epoch,
            train_loss,
            test_loss,
        };
        on_epoch(&record);
        curves.push(record);
        if test_loss < best.0 {
            best = (test_loss, params.clone(), epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                early_stopped = true;
                break;
            }
        }
    }
    graph.set_params(&best.1)?;
    Ok(TrainOutcome {
        graph,
        curves,
        initial_test_loss: initial,
        best_epoch: best.2,
        best_test_loss: best.0,
        early_stopped,
    })
}

/// Learning curves as `epoch,train_loss,test_loss` CSV.
pub fn format_curves(curves: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_loss,test_loss\n");
    for r in curves {
        writeln!(out, "{},{:e},{:e}", r.epoch, r.train_loss, r.test_loss).unwrap();
    }
    out
}

pub fn write_curves(path: &Path, curves: &[EpochRecord]) -> Result<()> {
    std::fs::write(path, format_curves(curves)).map_err(|e| Error::io(path, e))
}
