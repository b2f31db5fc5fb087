use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::channel::{LinkConfig, LinkParams, LinkTemplate};
use crate::error::{Error, Result};
use crate::rxdsp::RxConfig;
use crate::sigproc::RrcSpec;
use crate::traingraph::TrainConfig;

/// A WSS count or an inclusive range of counts, written `n` or `a..b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CountRange {
    pub first: usize,
    pub last: usize,
}

impl CountRange {
    pub fn single(n: usize) -> Self {
        Self { first: n, last: n }
    }

    pub fn values(&self) -> impl Iterator<Item = usize> {
        self.first..=self.last
    }

    pub fn len(&self) -> usize {
        self.last + 1 - self.first.min(self.last + 1)
    }

    pub fn is_empty(&self) -> bool {
        self.first > self.last
    }
}

impl FromStr for CountRange {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("`{s}` is neither a count nor a range a..b"));
        let num = |t: &str| t.trim().parse::<usize>().map_err(|_| bad());
        let r = match s.split_once("..") {
            Some((a, b)) => {
                let b = b.strip_prefix('=').unwrap_or(b);
                Self {
                    first: num(a)?,
                    last: num(b)?,
                }
            }
            None => Self::single(num(s)?),
        };
        if r.is_empty() {
            return Err(Error::Config(format!("empty range `{s}`")));
        }
        Ok(r)
    }
}

impl fmt::Display for CountRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.first == self.last {
            write!(f, "{}", self.first)
        } else {
            write!(f, "{}..{}", self.first, self.last)
        }
    }
}

impl Serialize for CountRange {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.first == self.last {
            s.serialize_u64(self.first as u64)
        } else {
            s.serialize_str(&self.to_string())
        }
    }
}

impl<'de> Deserialize<'de> for CountRange {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Count(u64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Count(n) => Ok(Self::single(n as usize)),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Tx laser offset: one value, or a list for the fixed-versus-retrained
/// comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TxFo {
    Fixed(f64),
    Sweep(Vec<f64>),
}

impl Default for TxFo {
    fn default() -> Self {
        TxFo::Fixed(0.0)
    }
}

impl TxFo {
    pub fn values(&self) -> Vec<f64> {
        match self {
            TxFo::Fixed(f) => vec![*f],
            TxFo::Sweep(v) => v.clone(),
        }
    }

    pub fn is_sweep(&self) -> bool {
        matches!(self, TxFo::Sweep(_))
    }
}

/// One experiment: a link template swept over WSS counts, evaluated over
/// `seeds` independent seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSpec {
    pub name: String,
    pub link: LinkTemplate,
    pub wss_count: CountRange,
    /// Offset of every WSS passband, Hz.
    pub wss_fo: f64,
    pub tx_fo: TxFo,
    pub seed: u64,
    /// Independent seeds per point, `seed, seed + 1, ...`.
    pub seeds: usize,
    /// Symbols per polarization in each evaluation run.
    pub eval_symbols: usize,
    pub spectrum_nfft: usize,
    pub params: LinkParams,
    /// SSFM step of the training graph, m. Defaults to the evaluation step.
    pub train_ssfm_step_m: Option<f64>,
    pub rrc: RrcSpec,
    pub rx: RxConfig,
    pub train: TrainConfig,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            name: "loss-only".into(),
            link: LinkTemplate::LossOnly,
            wss_count: CountRange::single(16),
            wss_fo: 0.0,
            tx_fo: TxFo::default(),
            seed: 0,
            seeds: 3,
            eval_symbols: 1 << 15,
            spectrum_nfft: 1024,
            params: LinkParams::default(),
            train_ssfm_step_m: None,
            rrc: RrcSpec::default(),
            rx: RxConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

/// Names accepted by [`ScenarioSpec::preset`].
pub const PRESETS: &[&str] = &[
    "loss-only",
    "loss-only-sweep",
    "wss-fo",
    "nonlinear",
    "polarization",
    "fig10-scenario1",
    "fig10-scenario2",
    "tx-fo",
];

impl ScenarioSpec {
    pub fn preset(name: &str) -> Result<Self> {
        let base = Self {
            name: name.to_string(),
            ..Self::default()
        };
        let spec = match name {
            "loss-only" => base,
            "loss-only-sweep" => Self {
                wss_count: CountRange { first: 10, last: 16 },
                ..base
            },
            "wss-fo" => Self {
                wss_count: CountRange { first: 10, last: 16 },
                wss_fo: 2e9,
                ..base
            },
            "nonlinear" => Self {
                link: LinkTemplate::NonlinearCd,
                wss_count: CountRange { first: 10, last: 16 },
                ..base
            },
            "polarization" => Self {
                link: LinkTemplate::Polarization,
                wss_count: CountRange { first: 10, last: 16 },
                ..base
            },
            "fig10-scenario1" => Self {
                link: LinkTemplate::Fig10Scenario1,
                wss_count: CountRange::single(10),
                ..base
            },
            "fig10-scenario2" => Self {
                link: LinkTemplate::Fig10Scenario2,
                wss_count: CountRange::single(10),
                ..base
            },
            "tx-fo" => Self {
                wss_count: CountRange::single(10),
                tx_fo: TxFo::Sweep(vec![0.0, 0.5e9, 1e9, 1.5e9, 2e9, 2.5e9]),
                ..base
            },
            other => {
                return Err(Error::Config(format!(
                    "unknown scenario `{other}` (known: {})",
                    PRESETS.join(", ")
                )))
            }
        };
        Ok(spec)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.wss_count.is_empty() {
            return bad(format!("empty WSS count range {}", self.wss_count));
        }
        if self.tx_fo.values().is_empty() {
            return bad("Tx offset sweep is empty".into());
        }
        if self.tx_fo.values().iter().chain([&self.wss_fo]).any(|f| !f.is_finite()) {
            return bad("frequency offsets must be finite".into());
        }
        if !(self.params.ssfm_step_m > 0.0) || self.train_ssfm_step_m.is_some_and(|h| !(h > 0.0)) {
            return bad("SSFM steps must be positive".into());
        }
        if self.seeds == 0 {
            return bad("at least one seed is required".into());
        }
        if self.rx.num_taps != self.train.kernel_size {
            return bad(format!(
                "receiver taps ({}) and layer kernel ({}) must match",
                self.rx.num_taps, self.train.kernel_size
            ));
        }
        self.rx.scored_range(self.eval_symbols)?;
        if !self.spectrum_nfft.is_power_of_two() || self.spectrum_nfft > self.eval_symbols * self.rrc.sps {
            return bad(format!("spectrum size {} is not usable", self.spectrum_nfft));
        }
        self.rrc.validate()?;
        self.train.validate()?;
        self.link_for(self.wss_count.first, 0.0).validate()
    }

    /// Seeds of the runs, one per repetition.
    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.seeds as u64).map(|i| self.seed.wrapping_add(i)).collect()
    }

    /// Link for one point, with the WSS offset and Tx offset applied.
    pub fn link_for(&self, wss_count: usize, tx_fo: f64) -> LinkConfig {
        let mut params = self.params.clone();
        params.wss.freq_offset = self.wss_fo;
        self.link.build(&params, wss_count).with_tx_fo(tx_fo)
    }

    /// Link of the training graph: `link` with the training step applied.
    pub fn training_link(&self, link: &LinkConfig) -> LinkConfig {
        match self.train_ssfm_step_m {
            Some(h) => link.with_ssfm_step(h),
            None => link.clone(),
        }
    }

    /// Replace the step of every fiber.
    pub fn set_ssfm_step(&mut self, step_m: f64) {
        self.params.ssfm_step_m = step_m;
    }
}
