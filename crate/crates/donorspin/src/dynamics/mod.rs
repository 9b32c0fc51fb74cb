//! Rate-equation dynamics of the four-level donor / donor-bound-exciton
//! system: optical pumping traces, T₁ recovery, pump–probe runs, PL
//! spectra and PLE scans, all with Poisson photon statistics.

mod expm;
mod level;
mod protocol;
mod spectrum;

pub use level::{
    build_level_system, LevelSystem, OpticsConfig, Transition, ZeemanEnergies, DOWN, N_STATES,
    UP, X_DOWN, X_UP,
};
pub use protocol::{
    evolve, evolve_ensemble, final_populations, gaussian_quantile_detunings, run_pump_probe,
    run_t1_protocol, Acquisition, Detection, EnsembleSpec, Gamma0Table, PulseSequence, PumpPulse,
    RecoveryCurve, Segment, Solver, TraceMetadata, TraceRecord,
};
pub use spectrum::{
    simulate_ple, simulate_spectrum, PleCurve, SpectralLine, Spectrum, SpectrumConfig,
    GA_LINE_CENTER_EV, SATELLITE_LINES,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("invalid optics: {0}")]
    InvalidOptics(String),
    #[error("segment {segment}: {message}")]
    InvalidSegment { segment: usize, message: String },
    #[error("sequence has no collecting segment")]
    NoCollectingSegment,
    #[error("segment {segment}: fixed step {dt} s too large for fastest rate {max_rate} 1/s")]
    StepTooLarge { segment: usize, dt: f64, max_rate: f64 },
    #[error("integration window {window_s} s exceeds the pump duration {duration_s} s")]
    WindowTooLong { window_s: f64, duration_s: f64 },
    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(String),
    #[error("delay list must be positive and sorted ascending")]
    InvalidDelays,
    #[error("steady state solve failed: {0}")]
    SteadyState(String),
    #[error("{0}")]
    InvalidArgument(String),
}
