use rand::{Rng, RngCore};

use super::dataset::{generate_dataset, Dataset};
use super::report::{
    CurveSeries, PointRecord, RunReport, SpectrumRecord, TapKind, TapRecord, TrainingSummary,
};
use super::scenario::ScenarioSpec;
use crate::channel::{run_evaluation_link, LinkConfig};
use crate::error::{Error, Result};
use crate::random;
use crate::rxdsp::{fir_apply, receive, FirTaps, RxResult};
use crate::sigproc::{power_spectrum, random_qam16, rrc_shape_dual, SymbolSequence};
use crate::traingraph::{align_rx_phase, initialize, train, EpochRecord, Graph, TrainConfig, TrainOutcome};

// RNG stream tags, keyed further by (wss_count)
const EVAL_SYMBOLS: u64 = 10;
const EVAL_NOISE: u64 = 11;
const INIT: u64 = 12;
const TRAIN_SEED: u64 = 13;

// training sets used to align the receiver layer phase
const PHASE_SETS: usize = 16;

/// Progress events of a scenario run.
#[derive(Clone, Copy, Debug)]
pub enum Progress<'a> {
    Baseline { wss_count: usize, tx_fo: f64, seed: u64, snr_db: f64 },
    Epoch { wss_count: usize, tx_fo: f64, seed: u64, record: &'a EpochRecord },
    Point(&'a PointRecord),
}

/// One run of the evaluation link and receiver.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub rx: RxResult,
    /// Spectrum of the transmitted waveform after pre-equalization.
    pub tx_spectrum: Option<Vec<(f64, f64)>>,
}

/// Evaluation symbols for both polarizations of a point.
pub fn eval_symbols(spec: &ScenarioSpec, seed: u64, wss_count: usize) -> [SymbolSequence; 2] {
    let mut rng = random::stream(seed, &[EVAL_SYMBOLS, wss_count as u64]);
    [
        random_qam16(spec.eval_symbols, &mut rng),
        random_qam16(spec.eval_symbols, &mut rng),
    ]
}

/// Noise stream shared by every evaluation of a point (paired comparison).
pub fn eval_noise(seed: u64, wss_count: usize) -> random::Rng {
    random::stream(seed, &[EVAL_NOISE, wss_count as u64])
}

/// Shape `symbols`, apply `preeq` to both polarizations, run `link` and the
/// receiver. Noise is drawn from `rng`.
pub fn evaluate<R: Rng + ?Sized>(
    spec: &ScenarioSpec,
    link: &LinkConfig,
    symbols: &[SymbolSequence; 2],
    preeq: Option<&FirTaps>,
    rng: &mut R,
    with_spectrum: bool,
) -> Result<Evaluation> {
    let mut tx = rrc_shape_dual(&symbols[0], &symbols[1], &spec.rrc, link.baud_rate)?;
    if let Some(taps) = preeq {
        tx = fir_apply(&tx, taps);
    }
    let tx_spectrum = if with_spectrum {
        Some(power_spectrum(&tx, spec.spectrum_nfft)?)
    } else {
        None
    };
    let received = run_evaluation_link(&tx, link, rng)?;
    let rx = receive(&received, symbols, link.total_dispersion(), &spec.rx)?;
    Ok(Evaluation { rx, tx_spectrum })
}

/// Build the training graph of `link`, initialize it from `rx_taps` and
/// train on `data`.
pub fn train_point(
    spec: &ScenarioSpec,
    link: &LinkConfig,
    rx_taps: &FirTaps,
    data: &Dataset,
    seed: u64,
    wss_count: usize,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    let cfg = TrainConfig {
        seed: random::stream(seed, &[TRAIN_SEED, wss_count as u64]).next_u64(),
        ..spec.train.clone()
    };
    let mut graph = Graph::new(&spec.training_link(link), &spec.rrc, &cfg)?;
    let mut rng = random::stream(seed, &[INIT, wss_count as u64]);
    initialize(&mut graph, rx_taps, cfg.init_spread, &mut rng)?;
    let (train_sets, test_sets) = data.split();
    align_rx_phase(&mut graph, &train_sets[..train_sets.len().min(PHASE_SETS)])?;
    train(graph, &cfg, &train_sets, &test_sets, &mut on_epoch)
}

fn dataset_for(spec: &ScenarioSpec, seed: u64) -> Result<Dataset> {
    generate_dataset(
        spec.train.dataset_sets,
        spec.train.set_symbols,
        spec.train.train_sets,
        seed,
    )
}

fn summarize(out: &TrainOutcome) -> TrainingSummary {
    let last = out.last().copied().unwrap_or(EpochRecord {
        epoch: 0,
        train_loss: f64::NAN,
        test_loss: out.initial_test_loss,
    });
    TrainingSummary {
        epochs: last.epoch,
        best_epoch: out.best_epoch,
        early_stopped: out.early_stopped,
        initial_test_loss: out.initial_test_loss,
        best_test_loss: out.best_test_loss,
        final_train_loss: last.train_loss,
        final_test_loss: last.test_loss,
    }
}

struct Trained {
    preeq: FirTaps,
    rx: FirTaps,
    summary: TrainingSummary,
    curve: Vec<EpochRecord>,
}

struct PointCtx<'a> {
    spec: &'a ScenarioSpec,
    data: &'a Dataset,
    seed: u64,
    wss_count: usize,
    symbols: [SymbolSequence; 2],
}

impl PointCtx<'_> {
    fn baseline(&self, link: &LinkConfig, tx_fo: f64, report: &mut RunReport) -> Result<(PointRecord, FirTaps)> {
        let first_seed = self.seed == report.seeds[0];
        let eval = evaluate(
            self.spec,
            link,
            &self.symbols,
            None,
            &mut eval_noise(self.seed, self.wss_count),
            first_seed,
        )?;
        if let Some(points) = eval.tx_spectrum {
            report.spectra.push(SpectrumRecord {
                label: "tx".into(),
                wss_count: self.wss_count,
                tx_fo_hz: tx_fo,
                seed: self.seed,
                points,
            });
        }
        let rx_taps = eval.rx.converged_taps();
        report.taps.push(TapRecord {
            wss_count: self.wss_count,
            tx_fo_hz: tx_fo,
            seed: self.seed,
            kind: TapKind::RxInit,
            taps: rx_taps.clone(),
        });
        let record = PointRecord {
            wss_count: self.wss_count,
            wss_fo_hz: self.spec.wss_fo,
            tx_fo_hz: tx_fo,
            seed: self.seed,
            snr_rx_only_db: eval.rx.snr_db,
            baseline_mse: eval.rx.mse,
            snr_joint_db: None,
            gain_db: None,
            snr_joint_fixed_db: None,
            gain_fixed_db: None,
            training: None,
            error: None,
        };
        Ok((record, rx_taps))
    }

    fn train(
        &self,
        link: &LinkConfig,
        tx_fo: f64,
        rx_taps: &FirTaps,
        report: &mut RunReport,
        progress: &mut dyn FnMut(Progress<'_>),
    ) -> Result<Trained> {
        let out = train_point(self.spec, link, rx_taps, self.data, self.seed, self.wss_count, |record| {
            progress(Progress::Epoch {
                wss_count: self.wss_count,
                tx_fo,
                seed: self.seed,
                record,
            })
        })?;
        let sps = self.spec.rrc.sps;
        let trained = Trained {
            preeq: out.graph.preeq.to_fir(sps)?,
            rx: out.graph.rx.to_fir(sps)?,
            summary: summarize(&out),
            curve: out.curves,
        };
        report.curves.push(CurveSeries {
            wss_count: self.wss_count,
            tx_fo_hz: tx_fo,
            seed: self.seed,
            epochs: trained.curve.clone(),
        });
        for (kind, taps) in [(TapKind::Preeq, &trained.preeq), (TapKind::RxTrained, &trained.rx)] {
            report.taps.push(TapRecord {
                wss_count: self.wss_count,
                tx_fo_hz: tx_fo,
                seed: self.seed,
                kind,
                taps: taps.clone(),
            });
        }
        Ok(trained)
    }

    fn joint(&self, link: &LinkConfig, tx_fo: f64, preeq: &FirTaps, report: &mut RunReport, label: &str) -> Result<f64> {
        let first_seed = self.seed == report.seeds[0];
        let eval = evaluate(
            self.spec,
            link,
            &self.symbols,
            Some(preeq),
            &mut eval_noise(self.seed, self.wss_count),
            first_seed,
        )?;
        if let Some(points) = eval.tx_spectrum {
            report.spectra.push(SpectrumRecord {
                label: label.into(),
                wss_count: self.wss_count,
                tx_fo_hz: tx_fo,
                seed: self.seed,
                points,
            });
        }
        Ok(eval.rx.snr_db)
    }
}

fn empty_report(spec: &ScenarioSpec, tx_fo_sweep: bool) -> RunReport {
    RunReport {
        scenario: spec.name.clone(),
        link: Some(spec.link),
        seeds: spec.seed_list(),
        tx_fo_sweep,
        ..RunReport::default()
    }
}

// training failures are recorded; anything else aborts the run
fn trained_or_record(res: Result<Trained>, record: &mut PointRecord) -> Result<Option<Trained>> {
    match res {
        Ok(t) => {
            record.training = Some(t.summary.clone());
            Ok(Some(t))
        }
        Err(e @ Error::TrainingDivergence { .. }) => {
            record.error = Some(e.to_string());
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

/// For every WSS count, Tx offset and seed: receiver-only baseline, training
/// initialized from the baseline equalizer, then the joint evaluation with
/// the trained pre-equalizer on the same symbols and noise.
pub fn run_scenario(spec: &ScenarioSpec, mut progress: impl FnMut(Progress<'_>)) -> Result<RunReport> {
    spec.validate()?;
    let mut report = empty_report(spec, false);
    for seed in spec.seed_list() {
        let data = dataset_for(spec, seed)?;
        for wss_count in spec.wss_count.values() {
            let ctx = PointCtx {
                spec,
                data: &data,
                seed,
                wss_count,
                symbols: eval_symbols(spec, seed, wss_count),
            };
            for tx_fo in spec.tx_fo.values() {
                let link = spec.link_for(wss_count, tx_fo);
                let (mut record, rx_taps) = ctx.baseline(&link, tx_fo, &mut report)?;
                progress(Progress::Baseline {
                    wss_count,
                    tx_fo,
                    seed,
                    snr_db: record.snr_rx_only_db,
                });
                let trained = ctx.train(&link, tx_fo, &rx_taps, &mut report, &mut progress);
                if let Some(t) = trained_or_record(trained, &mut record)? {
                    let snr = ctx.joint(&link, tx_fo, &t.preeq, &mut report, "tx-preeq")?;
                    record.set_joint(snr);
                }
                progress(Progress::Point(&record));
                report.records.push(record);
            }
        }
    }
    Ok(report)
}

/// Tx laser offset study: per WSS count and seed, taps trained at zero
/// offset are compared at every offset in `fo_list` with taps retrained for
/// that offset. Records carry both joint results.
pub fn sweep_tx_fo(spec: &ScenarioSpec, fo_list: &[f64], mut progress: impl FnMut(Progress<'_>)) -> Result<RunReport> {
    spec.validate()?;
    if fo_list.is_empty() {
        return Err(Error::Config("Tx offset sweep is empty".into()));
    }
    let mut report = empty_report(spec, true);
    for seed in spec.seed_list() {
        let data = dataset_for(spec, seed)?;
        for wss_count in spec.wss_count.values() {
            let ctx = PointCtx {
                spec,
                data: &data,
                seed,
                wss_count,
                symbols: eval_symbols(spec, seed, wss_count),
            };
            let link0 = spec.link_for(wss_count, 0.0);
            let (mut rec0, taps0) = ctx.baseline(&link0, 0.0, &mut report)?;
            let fixed = ctx.train(&link0, 0.0, &taps0, &mut report, &mut progress);
            let Some(fixed) = trained_or_record(fixed, &mut rec0)? else {
                // nothing to compare against at any offset
                for &fo in fo_list {
                    let mut r = rec0.clone();
                    r.tx_fo_hz = fo;
                    progress(Progress::Point(&r));
                    report.records.push(r);
                }
                continue;
            };
            for &fo in fo_list {
                let mut record;
                let retrained;
                let link;
                if fo == 0.0 {
                    link = link0.clone();
                    record = rec0.clone();
                    retrained = Some(fixed.preeq.clone());
                } else {
                    link = spec.link_for(wss_count, fo);
                    let (r, taps) = ctx.baseline(&link, fo, &mut report)?;
                    record = r;
                    let t = ctx.train(&link, fo, &taps, &mut report, &mut progress);
                    retrained = trained_or_record(t, &mut record)?.map(|t| t.preeq);
                }
                progress(Progress::Baseline {
                    wss_count,
                    tx_fo: fo,
                    seed,
                    snr_db: record.snr_rx_only_db,
                });
                if let Some(taps) = retrained {
                    let snr = ctx.joint(&link, fo, &taps, &mut report, "tx-preeq")?;
                    record.set_joint(snr);
                }
                let snr = if fo == 0.0 && record.snr_joint_db.is_some() {
                    record.snr_joint_db.unwrap()
                } else {
                    ctx.joint(&link, fo, &fixed.preeq, &mut report, "tx-preeq-fixed")?
                };
                record.set_fixed(snr);
                progress(Progress::Point(&record));
                report.records.push(record);
            }
        }
    }
    Ok(report)
}

/// [`sweep_tx_fo`] when the spec lists several Tx offsets, else
/// [`run_scenario`].
pub fn run(spec: &ScenarioSpec, progress: impl FnMut(Progress<'_>)) -> Result<RunReport> {
    if spec.tx_fo.is_sweep() {
        sweep_tx_fo(spec, &spec.tx_fo.values(), progress)
    } else {
        run_scenario(spec, progress)
    }
}
