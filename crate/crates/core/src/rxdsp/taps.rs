use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Complex FIR coefficients with a center tap.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FirTaps {
    pub taps: Vec<Complex64>,
    /// Samples per symbol of the signal these taps filter.
    pub spacing: usize,
}

impl FirTaps {
    pub fn new(taps: Vec<Complex64>, spacing: usize) -> Result<Self> {
        if taps.len() % 2 == 0 {
            return Err(Error::Shape(format!(
                "FIR length must be odd, got {}",
                taps.len()
            )));
        }
        if taps.iter().any(|t| !(t.re.is_finite() && t.im.is_finite())) {
            return Err(Error::Shape("FIR taps contain NaN or Inf".into()));
        }
        Ok(Self { taps, spacing })
    }

    /// Unit center tap, zeros elsewhere.
    pub fn identity(len: usize, spacing: usize) -> Result<Self> {
        let mut taps = vec![Complex64::new(0.0, 0.0); len];
        if len > 0 {
            taps[len / 2] = Complex64::new(1.0, 0.0);
        }
        Self::new(taps, spacing)
    }

    pub fn zeros(len: usize, spacing: usize) -> Result<Self> {
        Self::new(vec![Complex64::new(0.0, 0.0); len], spacing)
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn center(&self) -> usize {
        self.taps.len() / 2
    }

    pub fn reversed(&self) -> Self {
        Self {
            taps: self.taps.iter().rev().copied().collect(),
            spacing: self.spacing,
        }
    }

    /// Every tap multiplied by `factor`.
    pub fn scaled(&self, factor: Complex64) -> Self {
        Self {
            taps: self.taps.iter().map(|t| t * factor).collect(),
            spacing: self.spacing,
        }
    }

    pub fn l2_distance(&self, other: &FirTaps) -> f64 {
        self.taps
            .iter()
            .zip(&other.taps)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

/// Turns the first conv layer's (cross-correlation) weights into
/// pre-equalizer FIR coefficients by index reversal.
pub fn extract_preeq_taps(first_layer_weights: &[Complex64], spacing: usize) -> Result<FirTaps> {
    FirTaps::new(first_layer_weights.iter().rev().copied().collect(), spacing)
}

/// Header metadata stored with a tap file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TapFileMeta {
    pub seed: u64,
    /// Where the taps came from, e.g. `trained` or `lms-converged`.
    pub provenance: String,
}

/// Plain-text tap file: `#`-prefixed `key value` header lines (length,
/// spacing, seed, provenance) followed by one `index real imag` line per
/// tap in shortest round-trip notation.
pub fn format_taps(taps: &FirTaps, meta: &TapFileMeta) -> String {
    let mut out = String::new();
    writeln!(out, "# jointeq-taps 1").unwrap();
    writeln!(out, "# length {}", taps.len()).unwrap();
    writeln!(out, "# spacing {}", taps.spacing).unwrap();
    writeln!(out, "# seed {}", meta.seed).unwrap();
    writeln!(out, "# provenance {}", meta.provenance).unwrap();
    for (i, t) in taps.taps.iter().enumerate() {
        writeln!(out, "{i} {:e} {:e}", t.re, t.im).unwrap();
    }
    out
}

pub fn parse_taps(text: &str, origin: &Path) -> Result<(FirTaps, TapFileMeta)> {
    let mut length = None;
    let mut spacing = None;
    let mut seed = 0;
    let mut provenance = String::new();
    let mut taps = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let bad = |what: &str| Error::parse(origin, format!("line {}: {what}", lineno + 1));
        if let Some(header) = line.strip_prefix('#') {
            let mut parts = header.trim().splitn(2, ' ');
            let key = parts.next().unwrap_or_default();
            let value = parts.next().unwrap_or_default().trim();
            match key {
                "length" => length = Some(value.parse::<usize>().map_err(|_| bad("bad length"))?),
                "spacing" => spacing = Some(value.parse::<usize>().map_err(|_| bad("bad spacing"))?),
                "seed" => seed = value.parse::<u64>().map_err(|_| bad("bad seed"))?,
                "provenance" => provenance = value.to_string(),
                _ => {}
            }
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(bad("expected `index real imag`"));
        }
        let index: usize = fields[0].parse().map_err(|_| bad("bad index"))?;
        if index != taps.len() {
            return Err(bad("tap indices must be consecutive from 0"));
        }
        let re: f64 = fields[1].parse().map_err(|_| bad("bad real part"))?;
        let im: f64 = fields[2].parse().map_err(|_| bad("bad imaginary part"))?;
        taps.push(Complex64::new(re, im));
    }
    let length = length.ok_or_else(|| Error::parse(origin, "missing length header"))?;
    if length != taps.len() {
        return Err(Error::parse(
            origin,
            format!("header says {length} taps, file has {}", taps.len()),
        ));
    }
    let spacing = spacing.ok_or_else(|| Error::parse(origin, "missing spacing header"))?;
    let taps = FirTaps::new(taps, spacing).map_err(|e| Error::parse(origin, e.to_string()))?;
    Ok((taps, TapFileMeta { seed, provenance }))
}

pub fn write_taps(path: &Path, taps: &FirTaps, meta: &TapFileMeta) -> Result<()> {
    std::fs::write(path, format_taps(taps, meta)).map_err(|e| Error::io(path, e))
}

pub fn read_taps(path: &Path) -> Result<(FirTaps, TapFileMeta)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_taps(&text, path)
}
