use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use jointeq::harness::{
    curve_path, emit_report, eval_noise, eval_symbols, evaluate as run_eval, generate_dataset, read_dataset, run,
    tap_path, train_point, Dataset, Progress, RunReport, ScenarioSpec, TapKind,
};
use jointeq::rxdsp::{read_taps, write_taps, FirTaps, TapFileMeta};
use jointeq::traingraph::write_curves;

use crate::Common;

/// Points of a sweep reported a training divergence.
#[derive(Debug, thiserror::Error)]
#[error("training diverged at {0} point(s); see records.csv")]
pub struct SweepDiverged(pub usize);

fn prepare(c: &Common) -> Result<Option<ScenarioSpec>> {
    let spec = c.spec()?;
    if c.dry_run {
        print!("{}", spec.to_toml());
        return Ok(None);
    }
    mkdir(&c.out)?;
    Ok(Some(spec))
}

fn mkdir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| jointeq::Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn write(path: &Path, body: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        mkdir(dir)?;
    }
    fs::write(path, body).map_err(|e| jointeq::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(())
}

fn points(spec: &ScenarioSpec) -> Vec<(u64, usize, f64)> {
    let mut v = Vec::new();
    for seed in spec.seed_list() {
        for wss in spec.wss_count.values() {
            for fo in spec.tx_fo.values() {
                v.push((seed, wss, fo));
            }
        }
    }
    v
}

fn dataset_for(spec: &ScenarioSpec, seed: u64) -> jointeq::Result<Dataset> {
    let t = &spec.train;
    generate_dataset(t.dataset_sets, t.set_symbols, t.train_sets, seed)
}

pub fn dataset(c: &Common) -> Result<()> {
    let Some(spec) = prepare(c)? else { return Ok(()) };
    let d = dataset_for(&spec, spec.seed)?;
    let path = c.out.join("dataset.txt");
    jointeq::harness::write_dataset(&path, &d)?;
    eprintln!(
        "wrote {} ({} sets x {} symbols, {} for training)",
        path.display(),
        d.len(),
        d.set_symbols,
        d.train_sets
    );
    Ok(())
}

pub fn baseline(c: &Common) -> Result<()> {
    let Some(spec) = prepare(c)? else { return Ok(()) };
    let mut csv = String::from("wss_count,tx_fo_hz,seed,snr_rx_only_db,mse\n");
    for (seed, wss, fo) in points(&spec) {
        let link = spec.link_for(wss, fo);
        let symbols = eval_symbols(&spec, seed, wss);
        let ev = run_eval(&spec, &link, &symbols, None, &mut eval_noise(seed, wss), false)?;
        let meta = TapFileMeta {
            seed,
            provenance: TapKind::RxInit.label().into(),
        };
        let path = c.out.join(tap_path(TapKind::RxInit, wss, fo, seed));
        mkdir(path.parent().unwrap())?;
        write_taps(&path, &ev.rx.converged_taps(), &meta)?;
        writeln!(csv, "{wss},{fo},{seed},{:.6},{:.8}", ev.rx.snr_db, ev.rx.mse)?;
        eprintln!("wss {wss:>2}  fo {fo:e}  seed {seed}  snr {:.3} dB", ev.rx.snr_db);
    }
    write(&c.out.join("baseline.csv"), &csv)
}

fn rx_init_taps(spec: &ScenarioSpec, out: &Path, seed: u64, wss: usize, fo: f64) -> Result<FirTaps> {
    let path = out.join(tap_path(TapKind::RxInit, wss, fo, seed));
    if path.exists() {
        return Ok(read_taps(&path)?.0);
    }
    eprintln!("no {}; running the baseline for this point", path.display());
    let link = spec.link_for(wss, fo);
    let ev = run_eval(
        spec,
        &link,
        &eval_symbols(spec, seed, wss),
        None,
        &mut eval_noise(seed, wss),
        false,
    )?;
    Ok(ev.rx.converged_taps())
}

pub fn train(c: &Common, dataset: Option<&Path>) -> Result<()> {
    let Some(spec) = prepare(c)? else { return Ok(()) };
    let default_path = c.out.join("dataset.txt");
    let from_file = match dataset {
        Some(p) => Some(read_dataset(p)?),
        None if default_path.exists() => Some(read_dataset(&default_path)?),
        None => None,
    };
    if let Some(d) = &from_file {
        if d.set_symbols != spec.train.set_symbols || d.len() != spec.train.dataset_sets {
            return Err(jointeq::Error::Config(format!(
                "dataset holds {} sets of {} symbols, the scenario expects {} sets of {}",
                d.len(),
                d.set_symbols,
                spec.train.dataset_sets,
                spec.train.set_symbols
            ))
            .into());
        }
    }
    let sps = spec.rrc.sps;
    for (seed, wss, fo) in points(&spec) {
        let data = match &from_file {
            Some(d) => d.clone(),
            None => dataset_for(&spec, seed)?,
        };
        let rx = rx_init_taps(&spec, &c.out, seed, wss, fo)?;
        let link = spec.link_for(wss, fo);
        let out = train_point(&spec, &link, &rx, &data, seed, wss, |r| {
            eprintln!(
                "wss {wss:>2}  seed {seed}  epoch {:>3}  train {:.6}  test {:.6}",
                r.epoch, r.train_loss, r.test_loss
            )
        })?;
        let curve = c.out.join(curve_path(wss, fo, seed));
        mkdir(curve.parent().unwrap())?;
        write_curves(&curve, &out.curves)?;
        for (kind, layer) in [(TapKind::Preeq, &out.graph.preeq), (TapKind::RxTrained, &out.graph.rx)] {
            let path = c.out.join(tap_path(kind, wss, fo, seed));
            mkdir(path.parent().unwrap())?;
            let meta = TapFileMeta {
                seed,
                provenance: format!("trained {}", kind.label()),
            };
            write_taps(&path, &layer.to_fir(sps)?, &meta)?;
        }
        eprintln!(
            "wss {wss:>2}  seed {seed}  best epoch {}  test loss {:.6} -> {:.6}",
            out.best_epoch, out.initial_test_loss, out.best_test_loss
        );
    }
    Ok(())
}

pub fn evaluate(c: &Common, taps: Option<&Path>) -> Result<()> {
    let Some(spec) = prepare(c)? else { return Ok(()) };
    let fixed = taps.map(read_taps).transpose()?.map(|(t, _)| t);
    let mut csv = String::from("wss_count,tx_fo_hz,seed,snr_rx_only_db,snr_joint_db,gain_db\n");
    for (seed, wss, fo) in points(&spec) {
        let preeq = match &fixed {
            Some(t) => t.clone(),
            None => {
                let path = c.out.join(tap_path(TapKind::Preeq, wss, fo, seed));
                read_taps(&path)
                    .with_context(|| format!("no trained taps for wss {wss}, seed {seed}; run `train` first"))?
                    .0
            }
        };
        let link = spec.link_for(wss, fo);
        let symbols = eval_symbols(&spec, seed, wss);
        let base = run_eval(&spec, &link, &symbols, None, &mut eval_noise(seed, wss), false)?;
        let joint = run_eval(&spec, &link, &symbols, Some(&preeq), &mut eval_noise(seed, wss), false)?;
        let (b, j) = (base.rx.snr_db, joint.rx.snr_db);
        writeln!(csv, "{wss},{fo},{seed},{b:.6},{j:.6},{:.6}", j - b)?;
        println!("wss {wss:>2}  fo {fo:e}  seed {seed}  rx-only {b:.3} dB  joint {j:.3} dB  gain {:.3} dB", j - b);
    }
    write(&c.out.join("evaluate.csv"), &csv)
}

pub fn sweep(c: &Common) -> Result<()> {
    let Some(spec) = prepare(c)? else { return Ok(()) };
    let report = run(&spec, |p| match p {
        Progress::Baseline {
            wss_count,
            tx_fo,
            seed,
            snr_db,
        } => eprintln!("wss {wss_count:>2}  fo {tx_fo:e}  seed {seed}  baseline {snr_db:.3} dB"),
        Progress::Epoch { record, .. } if record.epoch % 10 == 0 => {
            eprintln!("    epoch {:>3}  test {:.6}", record.epoch, record.test_loss)
        }
        Progress::Epoch { .. } => {}
        Progress::Point(r) => match (r.gain_db, &r.error) {
            (Some(g), _) => eprintln!("    joint {:.3} dB  gain {g:.3} dB", r.snr_joint_db.unwrap_or(f64::NAN)),
            (None, Some(e)) => eprintln!("    {e}"),
            (None, None) => {}
        },
    })?;
    finish(&report, &c.out)?;
    sweep_failures(&report)
}

fn finish(report: &RunReport, out: &Path) -> Result<()> {
    let files = emit_report(report, out)?;
    print!("{}", summary_table(report));
    eprintln!("wrote {} files under {}", files.len() + 1, out.display());
    Ok(())
}

fn sweep_failures(report: &RunReport) -> Result<()> {
    let failed = report.records.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        return Err(SweepDiverged(failed).into());
    }
    Ok(())
}

pub fn report(input: Option<&Path>, out: &Path) -> Result<()> {
    let default = out.join("report.json");
    let report = RunReport::load(input.unwrap_or(&default))?;
    finish(&report, out)
}

fn summary_table(report: &RunReport) -> String {
    let mut s = String::new();
    writeln!(s, "{}  seeds {:?}", report.scenario, report.seeds).unwrap();
    writeln!(s, "{:>5} {:>10} {:>10} {:>10} {:>8}", "wss", "tx_fo_ghz", "rx_only", "joint", "gain").unwrap();
    for p in report.summary() {
        writeln!(
            s,
            "{:>5} {:>10.2} {:>10.3} {:>10.3} {:>8.3}",
            p.wss_count,
            p.tx_fo_hz / 1e9,
            p.snr_rx_only_db,
            p.snr_joint_db,
            p.gain_db
        )
        .unwrap();
    }
    s
}
