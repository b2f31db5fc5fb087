use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::random;
use crate::sigproc::{qam16_point, SymbolSequence};

/// Symbol sets for training, stored as 16-QAM nibbles.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    pub seed: u64,
    pub set_symbols: usize,
    /// Leading sets used for training; the rest are held out.
    pub train_sets: usize,
    pub nibbles: Vec<Vec<u8>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.nibbles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nibbles.is_empty()
    }

    pub fn sequences(&self) -> Vec<SymbolSequence> {
        self.nibbles
            .iter()
            .map(|set| SymbolSequence::new(set.iter().map(|&n| qam16_point(n)).collect()))
            .collect()
    }

    /// `(train, test)` symbol sets.
    pub fn split(&self) -> (Vec<SymbolSequence>, Vec<SymbolSequence>) {
        let mut all = self.sequences();
        let test = all.split_off(self.train_sets);
        (all, test)
    }
}

/// `sets` sets of `set_symbols` symbols from a seeded pseudo-random bit
/// stream, four bits per symbol. The first `train_sets` form the training
/// split.
pub fn generate_dataset(sets: usize, set_symbols: usize, train_sets: usize, seed: u64) -> Result<Dataset> {
    if sets == 0 || set_symbols == 0 || train_sets == 0 || train_sets >= sets {
        return Err(Error::Config(format!(
            "dataset of {sets} sets x {set_symbols} symbols cannot hold a {train_sets}-set training split"
        )));
    }
    let mut rng = random::stream(seed, &[DATASET_STREAM]);
    let nibbles = (0..sets)
        .map(|_| {
            (0..set_symbols)
                .map(|_| (0..4).fold(0u8, |acc, _| (acc << 1) | rng.random::<bool>() as u8))
                .collect()
        })
        .collect();
    Ok(Dataset {
        seed,
        set_symbols,
        train_sets,
        nibbles,
    })
}

const DATASET_STREAM: u64 = 0xda7a;

/// Text form: `#` header lines (`sets`, `symbols`, `train`, `seed`), then
/// one line of hex nibbles per set.
pub fn format_dataset(d: &Dataset) -> String {
    let mut out = String::with_capacity(d.len() * (d.set_symbols + 1) + 128);
    writeln!(out, "# jointeq-dataset 1").unwrap();
    writeln!(out, "# sets {}", d.len()).unwrap();
    writeln!(out, "# symbols {}", d.set_symbols).unwrap();
    writeln!(out, "# train {}", d.train_sets).unwrap();
    writeln!(out, "# seed {}", d.seed).unwrap();
    for set in &d.nibbles {
        for n in set {
            out.push(char::from_digit(u32::from(*n), 16).unwrap());
        }
        out.push('\n');
    }
    out
}

pub fn parse_dataset(text: &str, origin: &Path) -> Result<Dataset> {
    let err = |m: String| Error::parse(origin, m);
    let mut header = std::collections::HashMap::new();
    let mut nibbles = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if let Some(h) = line.strip_prefix('#') {
            let mut parts = h.split_whitespace();
            if let (Some(k), Some(v)) = (parts.next(), parts.next()) {
                header.insert(k.to_string(), v.to_string());
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let set = line
            .trim()
            .chars()
            .map(|c| c.to_digit(16).map(|d| d as u8))
            .collect::<Option<Vec<u8>>>()
            .ok_or_else(|| err(format!("line {}: not a hex nibble string", i + 1)))?;
        nibbles.push(set);
    }
    let field = |k: &str| -> Result<u64> {
        header
            .get(k)
            .ok_or_else(|| err(format!("missing `{k}` header")))?
            .parse()
            .map_err(|e| err(format!("bad `{k}` header: {e}")))
    };
    let (sets, symbols, train, seed) = (field("sets")?, field("symbols")?, field("train")?, field("seed")?);
    if nibbles.len() as u64 != sets {
        return Err(err(format!("header says {sets} sets, found {}", nibbles.len())));
    }
    if let Some(bad) = nibbles.iter().position(|s| s.len() as u64 != symbols) {
        return Err(err(format!("set {bad} does not have {symbols} symbols")));
    }
    if train == 0 || train >= sets {
        return Err(err(format!("training split {train} out of range for {sets} sets")));
    }
    Ok(Dataset {
        seed,
        set_symbols: symbols as usize,
        train_sets: train as usize,
        nibbles,
    })
}

pub fn write_dataset(path: &Path, d: &Dataset) -> Result<()> {
    std::fs::write(path, format_dataset(d)).map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text, path)
}
