//! Shared inputs for the benchmarks.

use jointeq::harness::ScenarioSpec;
use jointeq::sigproc::{random_qam16, rrc_shape_dual};
use jointeq::{random, ComplexSignal, FiberParams, SymbolSequence};

pub fn symbols(n: usize, seed: u64) -> [SymbolSequence; 2] {
    let mut rng = random::stream(seed, &[]);
    [random_qam16(n, &mut rng), random_qam16(n, &mut rng)]
}

/// Dual-polarization 65 GBaud waveform at 2 samples per symbol.
pub fn waveform(n: usize, seed: u64) -> ComplexSignal {
    let s = symbols(n, seed);
    rrc_shape_dual(&s[0], &s[1], &Default::default(), 65e9).expect("valid shaping")
}

pub fn loss_only(wss_count: usize) -> ScenarioSpec {
    let mut spec = ScenarioSpec::preset("loss-only").expect("preset");
    spec.wss_count = jointeq::harness::CountRange::single(wss_count);
    spec
}

/// One 80 km span with dispersion and Kerr effect.
pub fn nonlinear_span(step_m: f64) -> FiberParams {
    FiberParams {
        length_m: 80e3,
        step_m,
        ..FiberParams::default()
    }
}
