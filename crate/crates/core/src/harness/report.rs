use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::LinkTemplate;
use crate::error::{Error, Result};
use crate::rxdsp::{format_taps, FirTaps, TapFileMeta};
use crate::traingraph::{format_curves, EpochRecord};

/// Training statistics of one point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub epochs: usize,
    pub best_epoch: usize,
    pub early_stopped: bool,
    /// Held-out loss of the initialized graph.
    pub initial_test_loss: f64,
    pub best_test_loss: f64,
    pub final_train_loss: f64,
    pub final_test_loss: f64,
}

/// One (point, seed) result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub wss_count: usize,
    pub wss_fo_hz: f64,
    pub tx_fo_hz: f64,
    pub seed: u64,
    pub snr_rx_only_db: f64,
    /// Receiver-only MSE over the scored symbols.
    pub baseline_mse: f64,
    /// `None` when training failed.
    pub snr_joint_db: Option<f64>,
    pub gain_db: Option<f64>,
    /// Joint SNR with the taps trained at zero Tx offset.
    pub snr_joint_fixed_db: Option<f64>,
    pub gain_fixed_db: Option<f64>,
    pub training: Option<TrainingSummary>,
    pub error: Option<String>,
}

impl PointRecord {
    pub(crate) fn set_joint(&mut self, snr: f64) {
        self.snr_joint_db = Some(snr);
        self.gain_db = Some(snr - self.snr_rx_only_db);
    }

    pub(crate) fn set_fixed(&mut self, snr: f64) {
        self.snr_joint_fixed_db = Some(snr);
        self.gain_fixed_db = Some(snr - self.snr_rx_only_db);
    }
}

/// Seed average of one point over the seeds that trained successfully.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub wss_count: usize,
    pub tx_fo_hz: f64,
    pub seeds: usize,
    pub snr_rx_only_db: f64,
    pub snr_joint_db: f64,
    pub gain_db: f64,
    pub snr_joint_fixed_db: Option<f64>,
    pub gain_fixed_db: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveSeries {
    pub wss_count: usize,
    pub tx_fo_hz: f64,
    pub seed: u64,
    pub epochs: Vec<EpochRecord>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TapKind {
    /// Trained Tx pre-equalizer in FIR order.
    Preeq,
    /// Converged receiver-only equalizer used to initialize training.
    RxInit,
    /// Trained receiver layer in FIR order.
    RxTrained,
}

impl TapKind {
    pub fn label(self) -> &'static str {
        match self {
            TapKind::Preeq => "preeq",
            TapKind::RxInit => "rx-init",
            TapKind::RxTrained => "rx-trained",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TapRecord {
    pub wss_count: usize,
    pub tx_fo_hz: f64,
    pub seed: u64,
    pub kind: TapKind,
    pub taps: FirTaps,
}

/// Power spectral density snapshot, `(Hz, dB)` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRecord {
    /// `tx` (before pre-equalization) or `tx-preeq`.
    pub label: String,
    pub wss_count: usize,
    pub tx_fo_hz: f64,
    pub seed: u64,
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub link: Option<LinkTemplate>,
    pub seeds: Vec<u64>,
    /// Records carry fixed-taps results.
    pub tx_fo_sweep: bool,
    pub records: Vec<PointRecord>,
    pub curves: Vec<CurveSeries>,
    pub taps: Vec<TapRecord>,
    pub spectra: Vec<SpectrumRecord>,
}

impl RunReport {
    /// Seed averages per `(wss_count, tx_fo)` in record order. Points where
    /// every seed failed are left out.
    pub fn summary(&self) -> Vec<PointSummary> {
        let mut keys: Vec<(usize, f64)> = Vec::new();
        for r in &self.records {
            if !keys.contains(&(r.wss_count, r.tx_fo_hz)) {
                keys.push((r.wss_count, r.tx_fo_hz));
            }
        }
        keys.into_iter()
            .filter_map(|(w, fo)| {
                let ok: Vec<&PointRecord> = self
                    .records
                    .iter()
                    .filter(|r| r.wss_count == w && r.tx_fo_hz == fo && r.snr_joint_db.is_some())
                    .collect();
                if ok.is_empty() {
                    return None;
                }
                let n = ok.len() as f64;
                let mean = |f: &dyn Fn(&PointRecord) -> f64| ok.iter().map(|r| f(r)).sum::<f64>() / n;
                let rx_only = mean(&|r| r.snr_rx_only_db);
                let joint = mean(&|r| r.snr_joint_db.unwrap());
                let fixed = ok
                    .iter()
                    .all(|r| r.snr_joint_fixed_db.is_some())
                    .then(|| mean(&|r| r.snr_joint_fixed_db.unwrap()));
                Some(PointSummary {
                    wss_count: w,
                    tx_fo_hz: fo,
                    seeds: ok.len(),
                    snr_rx_only_db: rx_only,
                    snr_joint_db: joint,
                    gain_db: joint - rx_only,
                    snr_joint_fixed_db: fixed,
                    gain_fixed_db: fixed.map(|f| f - rx_only),
                })
            })
            .collect()
    }

    pub fn has_failures(&self) -> bool {
        self.records.iter().any(|r| r.error.is_some())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::parse(origin, e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".into(), |x| format!("{x:.6}"))
}

/// Seed-averaged sweep table. WSS sweeps use
/// `wss_count,snr_rx_only_db,snr_joint_db,gain_db`; Tx offset sweeps lead
/// with `tx_fo_hz` and add the fixed-taps columns.
pub fn sweep_csv(report: &RunReport) -> String {
    let mut out = String::new();
    if report.tx_fo_sweep {
        out.push_str(
            "tx_fo_hz,wss_count,snr_rx_only_db,snr_joint_db,gain_db,snr_joint_fixed_db,gain_fixed_db\n",
        );
        for s in report.summary() {
            writeln!(
                out,
                "{},{},{:.6},{:.6},{:.6},{},{}",
                s.tx_fo_hz,
                s.wss_count,
                s.snr_rx_only_db,
                s.snr_joint_db,
                s.gain_db,
                opt(s.snr_joint_fixed_db),
                opt(s.gain_fixed_db)
            )
            .unwrap();
        }
    } else {
        out.push_str("wss_count,snr_rx_only_db,snr_joint_db,gain_db\n");
        for s in report.summary() {
            writeln!(
                out,
                "{},{:.6},{:.6},{:.6}",
                s.wss_count, s.snr_rx_only_db, s.snr_joint_db, s.gain_db
            )
            .unwrap();
        }
    }
    out
}

/// Every (point, seed) record, failures included.
pub fn records_csv(report: &RunReport) -> String {
    let mut out = String::from(
        "wss_count,wss_fo_hz,tx_fo_hz,seed,snr_rx_only_db,snr_joint_db,gain_db,snr_joint_fixed_db,gain_fixed_db,error\n",
    );
    for r in &report.records {
        writeln!(
            out,
            "{},{},{},{},{:.6},{},{},{},{},{}",
            r.wss_count,
            r.wss_fo_hz,
            r.tx_fo_hz,
            r.seed,
            r.snr_rx_only_db,
            opt(r.snr_joint_db),
            opt(r.gain_db),
            opt(r.snr_joint_fixed_db),
            opt(r.gain_fixed_db),
            r.error.as_deref().unwrap_or("").replace(',', ";")
        )
        .unwrap();
    }
    out
}

pub fn spectrum_csv(s: &SpectrumRecord) -> String {
    let mut out = String::from("freq_hz,psd_db\n");
    for (f, db) in &s.points {
        writeln!(out, "{f},{db:.6}").unwrap();
    }
    out
}

/// One output file and the seed it belongs to (`None` for aggregates).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub kind: String,
    pub seed: Option<u64>,
}

fn fo_tag(fo: f64) -> String {
    format!("{}mhz", (fo / 1e6).round() as i64)
}

/// Relative path of a tap file inside a report directory.
pub fn tap_path(kind: TapKind, wss_count: usize, tx_fo: f64, seed: u64) -> PathBuf {
    PathBuf::from(format!(
        "taps/{}_wss{wss_count}_fo{}_seed{seed}.txt",
        kind.label(),
        fo_tag(tx_fo)
    ))
}

/// Relative path of a learning-curve file inside a report directory.
pub fn curve_path(wss_count: usize, tx_fo: f64, seed: u64) -> PathBuf {
    PathBuf::from(format!("curves/wss{wss_count}_fo{}_seed{seed}.csv", fo_tag(tx_fo)))
}

/// Write every artifact of `report` under `out_dir` and a `manifest.json`
/// listing them. Returns the manifest entries.
pub fn emit_report(report: &RunReport, out_dir: &Path) -> Result<Vec<ManifestEntry>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut entries = Vec::new();
    let mut put = |rel: PathBuf, kind: &str, seed: Option<u64>, body: String| -> Result<()> {
        let path = out_dir.join(&rel);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        entries.push(ManifestEntry {
            path: rel,
            kind: kind.to_string(),
            seed,
        });
        Ok(())
    };
    if !report.records.is_empty() {
        put(PathBuf::from("sweep.csv"), "sweep", None, sweep_csv(report))?;
        put(PathBuf::from("records.csv"), "records", None, records_csv(report))?;
        put(PathBuf::from("report.json"), "report", None, report.to_json())?;
    }
    for c in &report.curves {
        put(
            curve_path(c.wss_count, c.tx_fo_hz, c.seed),
            "learning-curve",
            Some(c.seed),
            format_curves(&c.epochs),
        )?;
    }
    for t in &report.taps {
        let meta = TapFileMeta {
            seed: t.seed,
            provenance: t.kind.label().into(),
        };
        put(
            tap_path(t.kind, t.wss_count, t.tx_fo_hz, t.seed),
            "taps",
            Some(t.seed),
            format_taps(&t.taps, &meta),
        )?;
    }
    for s in &report.spectra {
        put(
            PathBuf::from(format!(
                "spectra/{}_wss{}_fo{}_seed{}.csv",
                s.label,
                s.wss_count,
                fo_tag(s.tx_fo_hz),
                s.seed
            )),
            "spectrum",
            Some(s.seed),
            spectrum_csv(s),
        )?;
    }
    #[derive(Serialize)]
    struct Manifest<'a> {
        scenario: &'a str,
        seeds: &'a [u64],
        files: &'a [ManifestEntry],
    }
    let manifest = Manifest {
        scenario: &report.scenario,
        seeds: &report.seeds,
        files: &entries,
    };
    let path = out_dir.join("manifest.json");
    let body = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    Ok(entries)
}
