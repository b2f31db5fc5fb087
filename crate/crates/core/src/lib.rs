//! Coherent optical link simulation and end-to-end optimization of
//! transceiver-joint equalizers against cascaded WSS filtering.
//!
//! The crate hosts two views of one link:
//!
//! * the **evaluation link**: a conventional simulation (pulse shaping,
//!   optional Tx pre-equalizer, fiber/EDFA/WSS chain, CD compensation and a
//!   2x2 LMS equalizer with PLL), used to score equalizers by SNR;
//! * the **training link**: the same chain recast as a computation graph in
//!   which the Tx pre-equalizer and the Rx equalizer are one-dimensional
//!   convolution layers and every other stage is a static differentiable
//!   layer, trained with Adam on the symbol MSE.
//!
//! Modules follow the chain: [`sigproc`] (symbols and waveforms),
//! [`channel`] (physical stages), [`rxdsp`] (receiver DSP and tap files),
//! [`traingraph`] (layers, gradients, training) and [`harness`]
//! (scenarios, sweeps and report files).

pub mod channel;
pub mod error;
pub mod fft;
pub mod harness;
pub mod random;
pub mod rxdsp;
pub mod sigproc;
pub mod traingraph;

pub use channel::{
    EdfaParams, FiberParams, LinkConfig, LinkParams, LinkTemplate, PolarizationParams, Stage, WssParams,
};
pub use error::{Error, Result};
pub use harness::{RunReport, ScenarioSpec};
pub use num_complex::Complex64;
pub use rxdsp::{ButterflyTaps, FirTaps, PllGains};
pub use sigproc::{ComplexSignal, RrcSpec, SymbolSequence};
pub use traingraph::{Graph, TrainConfig};
