//! Physical stages of the evaluation link and the link runner.

mod amplifier;
mod fiber;
mod polarization;
mod wss;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use amplifier::{
    add_relative_awgn, edfa_amplify, relative_awgn_variance, EdfaParams, AWGN_BYPASS_DB, LIGHT_SPEED, PLANCK,
};
pub use fiber::{beta2_from_dispersion, linear_response, ssfm_propagate, FiberParams, SsfmPlan, MANAKOV_FACTOR};
pub use polarization::{
    apply_polarization, gamma_to_pdl_db, pdl_db_to_gamma, PolarizationParams, RSOP_BLOCK,
};
pub use wss::{apply_wss, wss_amplitude, WssParams};

use crate::error::{Error, Result};
use crate::sigproc::ComplexSignal;

/// Spans in both noise-placement templates.
pub const NOISE_PLACEMENT_SPANS: usize = 15;

/// One element of the transmission line, applied in list order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Stage {
    Fiber(FiberParams),
    Edfa(EdfaParams),
    Wss(WssParams),
    /// White noise relative to the signal power at this point, dB.
    Awgn { level_db: f64 },
    Polarization(PolarizationParams),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkConfig {
    pub baud_rate: f64,
    /// Total launch power over both polarizations, dBm.
    pub launch_power_dbm: f64,
    pub tx_awgn_db: f64,
    pub rx_awgn_db: f64,
    /// Tx laser and Rx LO linewidth each; 0 disables phase noise.
    #[serde(default)]
    pub laser_linewidth_hz: f64,
    pub stages: Vec<Stage>,
}

impl LinkConfig {
    /// Transparent link: no stages, no noise, no phase noise.
    pub fn back_to_back(baud_rate: f64) -> Self {
        Self {
            baud_rate,
            launch_power_dbm: 0.0,
            tx_awgn_db: f64::NEG_INFINITY,
            rx_awgn_db: f64::NEG_INFINITY,
            laser_linewidth_hz: 0.0,
            stages: Vec::new(),
        }
    }

    pub fn launch_power_w(&self) -> f64 {
        1e-3 * 10f64.powf(self.launch_power_dbm / 10.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::Config("link has no stages".into()));
        }
        if !(self.baud_rate > 0.0) {
            return Err(Error::Config(format!("invalid baud rate {}", self.baud_rate)));
        }
        for s in &self.stages {
            match s {
                Stage::Fiber(f) => f.validate()?,
                Stage::Polarization(p) => p.validate()?,
                Stage::Wss(w) if !(w.b0 > 0.0 && w.b_otf > 0.0) => {
                    return Err(Error::Config(format!("invalid WSS shape {w:?}")));
                }
                Stage::Edfa(e) if e.gain_db < 0.0 => {
                    return Err(Error::Config(format!("EDFA gain {} dB < 0", e.gain_db)));
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Accumulated fiber dispersion, ps/nm.
    pub fn total_dispersion(&self) -> f64 {
        self.stages
            .iter()
            .map(|s| match s {
                Stage::Fiber(f) => f.total_dispersion(),
                _ => 0.0,
            })
            .sum()
    }

    pub fn wss_count(&self) -> usize {
        self.stages.iter().filter(|s| matches!(s, Stage::Wss(_))).count()
    }

    pub fn has_nonlinear_fiber(&self) -> bool {
        self.stages
            .iter()
            .any(|s| matches!(s, Stage::Fiber(f) if !f.is_linear()))
    }

    /// Model a Tx laser offset as a shift of every WSS passband relative to
    /// the signal.
    pub fn with_tx_fo(&self, tx_fo: f64) -> Self {
        let mut out = self.clone();
        for s in &mut out.stages {
            if let Stage::Wss(w) = s {
                w.freq_offset -= tx_fo;
            }
        }
        out
    }

    /// Replace the step of every fiber stage.
    pub fn with_ssfm_step(&self, step_m: f64) -> Self {
        let mut out = self.clone();
        for s in &mut out.stages {
            if let Stage::Fiber(f) = s {
                f.step_m = step_m;
            }
        }
        out
    }
}

/// Named link layouts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinkTemplate {
    /// Loss-only spans, one WSS after the EDFA of every span.
    LossOnly,
    /// As `LossOnly` with dispersion and Kerr nonlinearity (SSFM).
    NonlinearCd,
    /// As `LossOnly` plus a lumped PDL/RSOP/PMD element before the receiver.
    Polarization,
    /// WSS cascade right after the transmitter, then the spans.
    Fig10Scenario1,
    /// Spans first, then the WSS cascade before the receiver.
    Fig10Scenario2,
}

impl LinkTemplate {
    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "loss-only" => Self::LossOnly,
            "nonlinear+cd" | "nonlinear-cd" => Self::NonlinearCd,
            "polarization" => Self::Polarization,
            "fig10-scenario1" => Self::Fig10Scenario1,
            "fig10-scenario2" => Self::Fig10Scenario2,
            other => return Err(Error::Config(format!("unknown link template `{other}`"))),
        })
    }

    pub fn build(&self, params: &LinkParams, wss_count: usize) -> LinkConfig {
        let wss = Stage::Wss(params.wss);
        let edfa = Stage::Edfa(params.edfa);
        let loss_span = Stage::Fiber(FiberParams::loss_only(params.span_length_m, params.fiber.loss_db_per_km));
        let mut stages = Vec::new();
        match self {
            Self::LossOnly | Self::Polarization => {
                for _ in 0..wss_count {
                    stages.extend([loss_span.clone(), edfa.clone(), wss.clone()]);
                }
                if *self == Self::Polarization {
                    stages.push(Stage::Polarization(params.polarization));
                }
            }
            Self::NonlinearCd => {
                let span = Stage::Fiber(FiberParams {
                    length_m: params.span_length_m,
                    step_m: params.ssfm_step_m,
                    ..params.fiber
                });
                for _ in 0..wss_count {
                    stages.extend([span.clone(), edfa.clone(), wss.clone()]);
                }
            }
            Self::Fig10Scenario1 => {
                stages.extend(std::iter::repeat_n(wss.clone(), wss_count));
                for _ in 0..NOISE_PLACEMENT_SPANS {
                    stages.extend([loss_span.clone(), edfa.clone()]);
                }
            }
            Self::Fig10Scenario2 => {
                for _ in 0..NOISE_PLACEMENT_SPANS {
                    stages.extend([loss_span.clone(), edfa.clone()]);
                }
                stages.extend(std::iter::repeat_n(wss.clone(), wss_count));
            }
        }
        LinkConfig {
            baud_rate: params.baud_rate,
            launch_power_dbm: params.launch_power_dbm,
            tx_awgn_db: params.tx_awgn_db,
            rx_awgn_db: params.rx_awgn_db,
            laser_linewidth_hz: params.laser_linewidth_hz,
            stages,
        }
    }
}

/// Physical parameters the templates draw from. Defaults are the 65 GBaud
/// reference system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinkParams {
    pub baud_rate: f64,
    pub launch_power_dbm: f64,
    pub tx_awgn_db: f64,
    pub rx_awgn_db: f64,
    pub laser_linewidth_hz: f64,
    pub span_length_m: f64,
    pub ssfm_step_m: f64,
    pub fiber: FiberParams,
    pub edfa: EdfaParams,
    pub wss: WssParams,
    pub polarization: PolarizationParams,
}

impl Default for LinkParams {
    fn default() -> Self {
        Self {
            baud_rate: 65e9,
            launch_power_dbm: 0.0,
            tx_awgn_db: -21.0,
            rx_awgn_db: -21.0,
            laser_linewidth_hz: 100e3,
            span_length_m: 80e3,
            ssfm_step_m: 100.0,
            fiber: FiberParams::default(),
            edfa: EdfaParams::default(),
            wss: WssParams::default(),
            polarization: PolarizationParams::default(),
        }
    }
}

/// Wiener phase noise of a laser with the given linewidth, common to both
/// polarizations.
pub fn apply_laser_phase_noise<R: Rng + ?Sized>(signal: &mut ComplexSignal, linewidth_hz: f64, rng: &mut R) {
    if linewidth_hz <= 0.0 {
        return;
    }
    let sigma = (2.0 * std::f64::consts::PI * linewidth_hz / signal.sample_rate).sqrt();
    let step = Normal::new(0.0, sigma).expect("finite sigma");
    let mut phase = 0.0;
    for k in 0..signal.len() {
        phase += step.sample(rng);
        let rot = num_complex::Complex64::from_polar(1.0, phase);
        for p in &mut signal.pols {
            p[k] *= rot;
        }
    }
}

/// Launch scaling, Tx noise and laser phase noise, the stage list, LO
/// phase noise, then Rx noise. Returns the waveform at the receiver input.
pub fn run_evaluation_link<R: Rng + ?Sized>(
    tx_waveform: &ComplexSignal,
    cfg: &LinkConfig,
    rng: &mut R,
) -> Result<ComplexSignal> {
    let mut s = tx_waveform.clone();
    let power = s.mean_power();
    if power > 0.0 {
        s.scale((cfg.launch_power_w() / power).sqrt());
    }
    s = add_relative_awgn(&s, cfg.tx_awgn_db, rng);
    apply_laser_phase_noise(&mut s, cfg.laser_linewidth_hz, rng);
    for stage in &cfg.stages {
        s = match stage {
            Stage::Fiber(f) => ssfm_propagate(&s, f)?,
            Stage::Edfa(e) => edfa_amplify(&s, e, rng),
            Stage::Wss(w) => apply_wss(&s, w),
            Stage::Awgn { level_db } => add_relative_awgn(&s, *level_db, rng),
            Stage::Polarization(p) => apply_polarization(&s, p, 0.0)?,
        };
    }
    apply_laser_phase_noise(&mut s, cfg.laser_linewidth_hz, rng);
    Ok(add_relative_awgn(&s, cfg.rx_awgn_db, rng))
}
