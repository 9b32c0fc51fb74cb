//! Pulse sequences, trace generation and the T₁ / pump–probe protocols.
//!
//! A sequence is a list of segments walked left to right. Within a segment
//! the rate equations are linear with constant coefficients, so the exact
//! solver propagates bin-by-bin with a cached matrix exponential (and its
//! time-integral block, which yields the photon count expectation per bin
//! without further discretization error). Photon counts are Poisson
//! samples of the expectation, drawn from a seeded ChaCha stream so that
//! equal seeds give bit-identical traces.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::expm::{rk4_step, Propagator, V4};
use super::level::{LevelSystem, Transition};
use super::DynamicsError;

/// Which emission lines the detector counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Detection {
    Keyword(DetectionKeyword),
    Channels(Vec<Transition>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionKeyword {
    All,
}

impl Detection {
    pub fn all() -> Self {
        Detection::Keyword(DetectionKeyword::All)
    }

    pub fn channels(list: &[Transition]) -> Self {
        Detection::Channels(list.to_vec())
    }

    pub fn collects(&self, channel: Transition) -> bool {
        match self {
            Detection::Keyword(DetectionKeyword::All) => true,
            Detection::Channels(list) => list.contains(&channel),
        }
    }
}

/// Detector and ensemble-scale settings shared by all protocols.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Acquisition {
    /// Histogram bin width (s)
    pub bin_width_s: f64,
    pub detection: Detection,
    /// Donors in the probe volume
    #[serde(default = "default_n_donors")]
    pub n_donors: f64,
    /// Fraction of emitted photons that reach the counter
    #[serde(default = "default_collection_efficiency")]
    pub collection_efficiency: f64,
    /// Detector dark counts (1/s)
    #[serde(default)]
    pub dark_count_rate_1_s: f64,
}

fn default_n_donors() -> f64 {
    1e6
}
fn default_collection_efficiency() -> f64 {
    1e-3
}

impl Default for Acquisition {
    fn default() -> Self {
        Self {
            bin_width_s: 1e-5,
            detection: Detection::all(),
            n_donors: default_n_donors(),
            collection_efficiency: default_collection_efficiency(),
            dark_count_rate_1_s: 0.0,
        }
    }
}

/// One element of a pulse sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Segment {
    /// Resonant drive with collection gated on
    Pump {
        transition: Transition,
        rate_1_s: f64,
        duration_s: f64,
        #[serde(default)]
        detuning_ev: f64,
    },
    /// Dark interval
    Wait { duration_s: f64 },
    /// Instantaneous reset of the two ground states to 50/50
    Scramble,
    /// Resonant drive with explicit collection flag
    Probe {
        transition: Transition,
        rate_1_s: f64,
        duration_s: f64,
        collect: bool,
        #[serde(default)]
        detuning_ev: f64,
    },
}

impl Segment {
    fn duration(&self) -> f64 {
        match self {
            Segment::Pump { duration_s, .. } | Segment::Probe { duration_s, .. } => *duration_s,
            Segment::Wait { duration_s } => *duration_s,
            Segment::Scramble => 0.0,
        }
    }

    fn collecting(&self) -> bool {
        match self {
            Segment::Pump { .. } => true,
            Segment::Probe { collect, .. } => *collect,
            _ => false,
        }
    }

    /// (transition, on-resonance rate, laser offset) of the drive, if any.
    fn drive(&self) -> Option<(Transition, f64, f64)> {
        match self {
            Segment::Pump { transition, rate_1_s, detuning_ev, .. }
            | Segment::Probe { transition, rate_1_s, detuning_ev, .. } => {
                Some((*transition, *rate_1_s, *detuning_ev))
            }
            _ => None,
        }
    }
}

/// A full measurement sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseSequence {
    pub segments: Vec<Segment>,
    #[serde(default = "default_repetitions")]
    pub repetitions: u32,
    #[serde(flatten)]
    pub acquisition: Acquisition,
}

fn default_repetitions() -> u32 {
    1
}

impl PulseSequence {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.acquisition.bin_width_s > 0.0) {
            return Err(DynamicsError::InvalidArgument(format!(
                "bin width must be positive (got {})",
                self.acquisition.bin_width_s
            )));
        }
        if self.repetitions == 0 {
            return Err(DynamicsError::InvalidArgument(
                "repetitions must be at least 1".into(),
            ));
        }
        for (index, segment) in self.segments.iter().enumerate() {
            match segment {
                Segment::Scramble => {}
                other => {
                    if !(other.duration() > 0.0) {
                        return Err(DynamicsError::InvalidSegment {
                            segment: index,
                            message: format!(
                                "duration must be positive (got {})",
                                other.duration()
                            ),
                        });
                    }
                }
            }
            if let Some((_, rate, _)) = segment.drive() {
                if rate < 0.0 {
                    return Err(DynamicsError::InvalidSegment {
                        segment: index,
                        message: format!("drive rate must be nonnegative (got {rate})"),
                    });
                }
            }
        }
        if !self.segments.iter().any(Segment::collecting) {
            return Err(DynamicsError::NoCollectingSegment);
        }
        Ok(())
    }
}

/// Solver for the piecewise-constant linear rate equations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Solver {
    /// Matrix-exponential propagation; exact per segment
    ExactLinear,
    /// Runge–Kutta with the given substep (s)
    FixedStep { dt_s: f64 },
}

/// Binned photon-count time series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// Bin start times (s, global sequence clock); only collecting
    /// segments produce bins
    pub bin_start_s: Vec<f64>,
    pub bin_width_s: Vec<f64>,
    /// Photon count expectation per bin
    pub expected_counts: Vec<f64>,
    /// Poisson sample of the expectation
    pub sampled_counts: Vec<u64>,
    pub metadata: TraceMetadata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMetadata {
    pub seed: u64,
    /// Verbatim echo of the sequence that produced the trace
    pub sequence: serde_json::Value,
    pub n_donors: f64,
    pub n_subensembles: usize,
}

/// Population-recovery points versus pump–pump delay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryCurve {
    pub tau_s: Vec<f64>,
    pub expected_counts: Vec<f64>,
    pub sampled_counts: Vec<u64>,
    /// Shot-noise error bar √(expected)
    pub err_counts: Vec<f64>,
    pub seed: u64,
}

/// Inhomogeneous ensemble description. Sub-ensembles are placed at
/// deterministic Gaussian quantiles of the detuning distribution, so
/// ensemble runs need no donor-level random draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    #[serde(default = "default_n_donors")]
    pub n_donors: f64,
    /// Inhomogeneous FWHM of the optical transition (eV)
    #[serde(default = "default_inhomogeneous_fwhm")]
    pub inhomogeneous_fwhm_ev: f64,
    /// Number of sub-ensembles
    #[serde(default = "default_subensembles")]
    pub n_subensembles: usize,
    /// Optional detuning-dependent extra relaxation (1/s), linearly
    /// interpolated
    #[serde(default)]
    pub gamma0_table: Option<Gamma0Table>,
}

fn default_inhomogeneous_fwhm() -> f64 {
    84.8e-6
}
fn default_subensembles() -> usize {
    21
}

impl Default for EnsembleSpec {
    fn default() -> Self {
        Self {
            n_donors: default_n_donors(),
            inhomogeneous_fwhm_ev: default_inhomogeneous_fwhm(),
            n_subensembles: default_subensembles(),
            gamma0_table: None,
        }
    }
}

impl EnsembleSpec {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.inhomogeneous_fwhm_ev > 0.0) {
            return Err(DynamicsError::InvalidEnsemble(
                "inhomogeneous FWHM must be positive".into(),
            ));
        }
        if self.n_subensembles < 1 {
            return Err(DynamicsError::InvalidEnsemble(
                "need at least one sub-ensemble".into(),
            ));
        }
        Ok(())
    }

    /// (detuning, weight) of each sub-ensemble.
    pub fn subensembles(&self) -> Vec<(f64, f64)> {
        gaussian_quantile_detunings(self.inhomogeneous_fwhm_ev, self.n_subensembles)
    }
}

/// Detuning → extra relaxation rate lookup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gamma0Table {
    pub detuning_ev: Vec<f64>,
    pub rate_1_s: Vec<f64>,
}

impl Gamma0Table {
    /// Piecewise-linear interpolation, clamped at the table ends.
    pub fn rate_at(&self, detuning: f64) -> f64 {
        let n = self.detuning_ev.len().min(self.rate_1_s.len());
        if n == 0 {
            return 0.0;
        }
        if detuning <= self.detuning_ev[0] {
            return self.rate_1_s[0];
        }
        if detuning >= self.detuning_ev[n - 1] {
            return self.rate_1_s[n - 1];
        }
        for k in 1..n {
            if detuning <= self.detuning_ev[k] {
                let t = (detuning - self.detuning_ev[k - 1])
                    / (self.detuning_ev[k] - self.detuning_ev[k - 1]);
                return self.rate_1_s[k - 1] + t * (self.rate_1_s[k] - self.rate_1_s[k - 1]);
            }
        }
        self.rate_1_s[n - 1]
    }
}

/// Deterministic Gaussian quantile detunings (midpoint quantiles, equal
/// weights 1/n) for a distribution of the given FWHM.
pub fn gaussian_quantile_detunings(fwhm: f64, n: usize) -> Vec<(f64, f64)> {
    let sigma = fwhm / (8.0 * 2.0_f64.ln()).sqrt();
    let w = 1.0 / n as f64;
    (0..n)
        .map(|i| {
            let p = (i as f64 + 0.5) / n as f64;
            (sigma * probit(p), w)
        })
        .collect()
}

/// Inverse standard-normal CDF (Acklam's rational approximation,
/// |relative error| < 1.2e-9; deterministic).
fn probit(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -probit(1.0 - p)
    }
}

/// Peak-normalized Lorentzian response at detuning δ for a line of the
/// given FWHM.
pub fn lorentzian_response(detuning: f64, fwhm: f64) -> f64 {
    if fwhm <= 0.0 {
        return if detuning == 0.0 { 1.0 } else { 0.0 };
    }
    let u = 2.0 * detuning / fwhm;
    1.0 / (1.0 + u * u)
}

/// Deterministic expectation part of a trace for one homogeneous system.
/// `detuning` shifts every drive off resonance (sub-ensemble offset).
fn expected_trace(
    system: &LevelSystem,
    seq: &PulseSequence,
    solver: Solver,
    detuning: f64,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>, V4), DynamicsError> {
    let acq = &seq.acquisition;
    let weights = system.flux_weights(&acq.detection);
    let scale = acq.n_donors * acq.collection_efficiency;

    let mut p = V4::from_column_slice(&system.populations);
    let mut clock = 0.0_f64;
    let mut bin_start = Vec::new();
    let mut bin_width = Vec::new();
    let mut expected = Vec::new();

    for (index, segment) in seq.segments.iter().enumerate() {
        if let Segment::Scramble = segment {
            // both ground states to 50 %, excited populations discarded
            p = V4::new(0.5, 0.5, 0.0, 0.0);
            continue;
        }
        let drives: Vec<(Transition, f64)> = segment
            .drive()
            .map(|(t, rate, laser_offset)| {
                let response = lorentzian_response(
                    detuning + laser_offset,
                    system.homogeneous_fwhm_ev,
                );
                vec![(t, rate * response)]
            })
            .unwrap_or_default();
        let generator = system.generator(&drives);
        if let Solver::FixedStep { dt_s } = solver {
            let max_rate = (0..4)
                .map(|i| generator[(i, i)].abs())
                .fold(0.0_f64, f64::max);
            if dt_s * max_rate > 2.0 {
                return Err(DynamicsError::StepTooLarge {
                    segment: index,
                    dt: dt_s,
                    max_rate,
                });
            }
        }

        let duration = segment.duration();
        if !segment.collecting() {
            // dark segment: advance in one exact step (or RK4 substeps)
            p = advance(&generator, &p, duration, solver, None);
            clock += duration;
            continue;
        }

        let full_bins = (duration / acq.bin_width_s + 1e-9).floor() as usize;
        let remainder = duration - full_bins as f64 * acq.bin_width_s;
        let propagator = Propagator::new(&generator, acq.bin_width_s);
        for _ in 0..full_bins {
            let (next, integral) = match solver {
                Solver::ExactLinear => (propagator.state * p, propagator.integral * p),
                Solver::FixedStep { .. } => {
                    let mut acc = V4::zeros();
                    let next =
                        advance(&generator, &p, acq.bin_width_s, solver, Some(&mut acc));
                    (next, acc)
                }
            };
            let flux: f64 = (0..4).map(|i| weights[i] * integral[i]).sum();
            bin_start.push(clock);
            bin_width.push(acq.bin_width_s);
            expected.push(
                scale * flux + acq.dark_count_rate_1_s * acq.bin_width_s,
            );
            p = next;
            clock += acq.bin_width_s;
        }
        if remainder > 1e-12 * acq.bin_width_s {
            let tail = Propagator::new(&generator, remainder);
            let integral = tail.integral * p;
            let flux: f64 = (0..4).map(|i| weights[i] * integral[i]).sum();
            bin_start.push(clock);
            bin_width.push(remainder);
            expected.push(scale * flux + acq.dark_count_rate_1_s * remainder);
            p = tail.state * p;
            clock += remainder;
        }
    }
    Ok((bin_start, bin_width, expected, p))
}

fn advance(
    generator: &super::expm::M4,
    p: &V4,
    duration: f64,
    solver: Solver,
    integral: Option<&mut V4>,
) -> V4 {
    match solver {
        Solver::ExactLinear => {
            let prop = Propagator::new(generator, duration);
            if let Some(acc) = integral {
                *acc += prop.integral * p;
            }
            prop.state * p
        }
        Solver::FixedStep { dt_s } => {
            let steps = (duration / dt_s).ceil().max(1.0) as usize;
            let dt = duration / steps as f64;
            let mut state = *p;
            let mut local = V4::zeros();
            for _ in 0..steps {
                let (next, da) = rk4_step(generator, &state, dt);
                local += da;
                state = next;
            }
            if let Some(acc) = integral {
                *acc += local;
            }
            state
        }
    }
}

fn sample_counts(expected: &[f64], rng: &mut ChaCha12Rng) -> Vec<u64> {
    expected
        .iter()
        .map(|&lambda| {
            if lambda <= 0.0 {
                0
            } else {
                Poisson::new(lambda).expect("positive mean").sample(rng) as u64
            }
        })
        .collect()
}

/// Populations after running a sequence (deterministic part only).
pub fn final_populations(
    system: &LevelSystem,
    seq: &PulseSequence,
    solver: Solver,
) -> Result<[f64; 4], DynamicsError> {
    seq.validate()?;
    let (_, _, _, p) = expected_trace(system, seq, solver, 0.0)?;
    Ok([p[0], p[1], p[2], p[3]])
}

/// Run a sequence on a single homogeneous system and Poisson-sample the
/// photon counts.
pub fn evolve(
    system: &LevelSystem,
    seq: &PulseSequence,
    solver: Solver,
    seed: u64,
) -> Result<TraceRecord, DynamicsError> {
    seq.validate()?;
    let (bin_start, bin_width, mut expected, _) = expected_trace(system, seq, solver, 0.0)?;
    if seq.repetitions > 1 {
        for value in &mut expected {
            *value *= seq.repetitions as f64;
        }
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let sampled = sample_counts(&expected, &mut rng);
    Ok(TraceRecord {
        bin_start_s: bin_start,
        bin_width_s: bin_width,
        expected_counts: expected,
        sampled_counts: sampled,
        metadata: TraceMetadata {
            seed,
            sequence: serde_json::to_value(seq).expect("sequence serializes"),
            n_donors: seq.acquisition.n_donors,
            n_subensembles: 1,
        },
    })
}

/// Run a sequence over an inhomogeneous ensemble: the expectation is the
/// weighted sum over detuned sub-ensembles, sampled once.
pub fn evolve_ensemble(
    system: &LevelSystem,
    seq: &PulseSequence,
    solver: Solver,
    ensemble: &EnsembleSpec,
    seed: u64,
) -> Result<TraceRecord, DynamicsError> {
    seq.validate()?;
    ensemble.validate()?;
    let mut seq = seq.clone();
    seq.acquisition.n_donors = ensemble.n_donors;

    let mut total_expected: Option<Vec<f64>> = None;
    let mut bins: Option<(Vec<f64>, Vec<f64>)> = None;
    for (detuning, weight) in ensemble.subensembles() {
        let mut sub = system.clone();
        if let Some(table) = &ensemble.gamma0_table {
            sub.extra_relaxation_rate = table.rate_at(detuning);
        }
        let (start, width, expected, _) = expected_trace(&sub, &seq, solver, detuning)?;
        match &mut total_expected {
            None => {
                total_expected = Some(expected.iter().map(|e| e * weight).collect());
                bins = Some((start, width));
            }
            Some(total) => {
                for (t, e) in total.iter_mut().zip(&expected) {
                    *t += e * weight;
                }
            }
        }
    }
    let (bin_start, bin_width) = bins.unwrap_or_default();
    let mut expected = total_expected.unwrap_or_default();
    if seq.repetitions > 1 {
        for value in &mut expected {
            *value *= seq.repetitions as f64;
        }
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let sampled = sample_counts(&expected, &mut rng);
    Ok(TraceRecord {
        bin_start_s: bin_start,
        bin_width_s: bin_width,
        expected_counts: expected,
        sampled_counts: sampled,
        metadata: TraceMetadata {
            seed,
            sequence: serde_json::to_value(&seq).expect("sequence serializes"),
            n_donors: ensemble.n_donors,
            n_subensembles: ensemble.n_subensembles,
        },
    })
}

/// A single resonant pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PumpPulse {
    pub transition: Transition,
    pub rate_1_s: f64,
    pub duration_s: f64,
    #[serde(default)]
    pub detuning_ev: f64,
}

impl PumpPulse {
    fn as_segment(&self, collect: bool) -> Segment {
        Segment::Probe {
            transition: self.transition,
            rate_1_s: self.rate_1_s,
            duration_s: self.duration_s,
            collect,
            detuning_ev: self.detuning_ev,
        }
    }
}

fn integrate_window(
    trace: &TraceRecord,
    window_start: f64,
    window_s: f64,
) -> (f64, u64) {
    let mut expected = 0.0;
    let mut sampled = 0u64;
    for (((start, width), exp), counts) in trace
        .bin_start_s
        .iter()
        .zip(&trace.bin_width_s)
        .zip(&trace.expected_counts)
        .zip(&trace.sampled_counts)
    {
        if *start >= window_start - 1e-15 && *start + *width <= window_start + window_s + 1e-12 {
            expected += exp;
            sampled += counts;
        }
    }
    (expected, sampled)
}

fn check_delays(taus: &[f64]) -> Result<(), DynamicsError> {
    if taus.is_empty() || taus.iter().any(|t| *t < 0.0) {
        return Err(DynamicsError::InvalidDelays);
    }
    if taus.windows(2).any(|w| w[1] <= w[0]) {
        return Err(DynamicsError::InvalidDelays);
    }
    Ok(())
}

/// Pump → wait(τ) → pump, integrating the counts in the first `window_s`
/// of the second pump pulse for each delay τ.
pub fn run_t1_protocol(
    system: &LevelSystem,
    taus: &[f64],
    pump: &PumpPulse,
    window_s: f64,
    acquisition: &Acquisition,
    ensemble: Option<&EnsembleSpec>,
    seed: u64,
) -> Result<RecoveryCurve, DynamicsError> {
    check_delays(taus)?;
    if window_s > pump.duration_s {
        return Err(DynamicsError::WindowTooLong {
            window_s,
            duration_s: pump.duration_s,
        });
    }
    run_two_pulse(system, taus, pump, pump, window_s, acquisition, ensemble, seed)
}

/// Pump on one transition (not collected), probe on another: the collected
/// probe window tracks the population left by the pump after delay τ.
pub fn run_pump_probe(
    system: &LevelSystem,
    taus: &[f64],
    pump: &PumpPulse,
    probe: &PumpPulse,
    window_s: f64,
    acquisition: &Acquisition,
    ensemble: Option<&EnsembleSpec>,
    seed: u64,
) -> Result<RecoveryCurve, DynamicsError> {
    check_delays(taus)?;
    if window_s > probe.duration_s {
        return Err(DynamicsError::WindowTooLong {
            window_s,
            duration_s: probe.duration_s,
        });
    }
    run_two_pulse(system, taus, pump, probe, window_s, acquisition, ensemble, seed)
}

#[allow(clippy::too_many_arguments)]
fn run_two_pulse(
    system: &LevelSystem,
    taus: &[f64],
    first: &PumpPulse,
    second: &PumpPulse,
    window_s: f64,
    acquisition: &Acquisition,
    ensemble: Option<&EnsembleSpec>,
    seed: u64,
) -> Result<RecoveryCurve, DynamicsError> {
    let mut expected = Vec::with_capacity(taus.len());
    let mut sampled = Vec::with_capacity(taus.len());
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    for &tau in taus {
        let mut segments = vec![first.as_segment(false)];
        if tau > 0.0 {
            segments.push(Segment::Wait { duration_s: tau });
        }
        segments.push(second.as_segment(true));
        let seq = PulseSequence {
            segments,
            repetitions: 1,
            acquisition: acquisition.clone(),
        };
        // expectation only; counts are drawn from the shared stream below
        let trace = match ensemble {
            Some(spec) => evolve_ensemble(system, &seq, Solver::ExactLinear, spec, 0)?,
            None => evolve(system, &seq, Solver::ExactLinear, 0)?,
        };
        let window_start = first.duration_s + tau;
        let (exp, _) = integrate_window(&trace, window_start, window_s);
        let counts = if exp > 0.0 {
            Poisson::new(exp).expect("positive mean").sample(&mut rng) as u64
        } else {
            0
        };
        expected.push(exp);
        sampled.push(counts);
    }
    Ok(RecoveryCurve {
        tau_s: taus.to_vec(),
        err_counts: expected.iter().map(|e| e.sqrt()).collect(),
        expected_counts: expected,
        sampled_counts: sampled,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::level::{build_level_system, OpticsConfig, DOWN, UP, X_DOWN};
    use crate::material::{derive_donor, DonorModel, MaterialParameters};
    use crate::relaxation::Geometry;
    use approx::assert_relative_eq;

    fn voigt_system(b: f64, t: f64) -> LevelSystem {
        let mat = MaterialParameters::default();
        let derived = derive_donor(&mat, DonorModel::from_material(&mat)).unwrap();
        build_level_system(Geometry::Voigt, b, t, &mat, &derived, &OpticsConfig::default())
            .unwrap()
    }

    fn op_sequence(rate: f64, duration: f64) -> PulseSequence {
        PulseSequence {
            segments: vec![Segment::Pump {
                transition: Transition::HDown,
                rate_1_s: rate,
                duration_s: duration,
                detuning_ev: 0.0,
            }],
            repetitions: 1,
            acquisition: Acquisition {
                bin_width_s: duration / 200.0,
                detection: Detection::channels(&[Transition::VUp]),
                ..Acquisition::default()
            },
        }
    }

    #[test]
    fn null_dynamics_constant_trace() {
        let mut sys = voigt_system(5.0, 1.5);
        sys.spin_flip_down_up = 0.0;
        sys.spin_flip_up_down = 0.0;
        sys.populations = [0.3, 0.7, 0.0, 0.0];
        let seq = PulseSequence {
            segments: vec![Segment::Probe {
                transition: Transition::HDown,
                rate_1_s: 0.0,
                duration_s: 1e-3,
                collect: true,
                detuning_ev: 0.0,
            }],
            repetitions: 1,
            acquisition: Acquisition {
                bin_width_s: 1e-4,
                detection: Detection::all(),
                ..Acquisition::default()
            },
        };
        let trace = evolve(&sys, &seq, Solver::ExactLinear, 1).unwrap();
        assert_eq!(trace.expected_counts.len(), 10);
        // no drive, no flips: nothing emits and nothing moves
        for e in &trace.expected_counts {
            assert!(e.abs() < 1e-12);
        }
    }

    #[test]
    fn optical_pumping_empties_down_state() {
        let sys = voigt_system(5.0, 1.5);
        let seq = op_sequence(5e4, 2e-3);
        let trace = evolve(&sys, &seq, Solver::ExactLinear, 7).unwrap();
        // the trace decays toward background
        let head: f64 = trace.expected_counts[..10].iter().sum();
        let tail: f64 = trace.expected_counts[trace.expected_counts.len() - 10..]
            .iter()
            .sum();
        assert!(
            tail < head / 50.0,
            "pumping should empty |↓⟩: head {head}, tail {tail}"
        );
    }

    #[test]
    fn population_conservation_through_sequence() {
        let sys = voigt_system(5.0, 1.5);
        let seq = PulseSequence {
            segments: vec![
                Segment::Pump {
                    transition: Transition::HDown,
                    rate_1_s: 1e5,
                    duration_s: 1e-3,
                    detuning_ev: 0.0,
                },
                Segment::Wait { duration_s: 5e-3 },
                Segment::Scramble,
                Segment::Probe {
                    transition: Transition::VDown,
                    rate_1_s: 1e4,
                    duration_s: 1e-3,
                    collect: true,
                    detuning_ev: 0.0,
                },
            ],
            repetitions: 1,
            acquisition: Acquisition {
                bin_width_s: 1e-4,
                detection: Detection::all(),
                ..Acquisition::default()
            },
        };
        let (_, _, _, p_end) =
            expected_trace(&sys, &seq, Solver::ExactLinear, 0.0).unwrap();
        let total: f64 = p_end.iter().sum();
        assert!((total - 1.0).abs() < 1e-9, "population sum {total}");
    }

    #[test]
    fn equilibrium_detailed_balance() {
        let sys = voigt_system(5.0, 1.5);
        let seq = PulseSequence {
            segments: vec![
                Segment::Wait { duration_s: 0.5 },
                Segment::Probe {
                    transition: Transition::HDown,
                    rate_1_s: 0.0,
                    duration_s: 1e-4,
                    collect: true,
                    detuning_ev: 0.0,
                },
            ],
            repetitions: 1,
            acquisition: Acquisition::default(),
        };
        let mut start = sys.clone();
        start.populations = [0.9, 0.1, 0.0, 0.0]; // away from equilibrium
        let (_, _, _, p) = expected_trace(&start, &seq, Solver::ExactLinear, 0.0).unwrap();
        assert_relative_eq!(
            p[UP] / p[DOWN],
            sys.equilibrium_ratio(),
            max_relative = 1e-6
        );
    }

    #[test]
    fn fixed_step_matches_exact() {
        // a slower radiative rate keeps the explicit solver affordable
        let mut sys = voigt_system(5.0, 1.5);
        sys.radiative_rate = 1e6;
        let seq = op_sequence(2e4, 1e-3);
        let exact = evolve(&sys, &seq, Solver::ExactLinear, 3).unwrap();
        let stepped = evolve(&sys, &seq, Solver::FixedStep { dt_s: 2e-8 }, 3).unwrap();
        for (a, b) in exact.expected_counts.iter().zip(&stepped.expected_counts) {
            assert_relative_eq!(a, b, max_relative = 1e-6);
        }
    }

    #[test]
    fn fixed_step_stability_guard() {
        let sys = voigt_system(5.0, 1.5);
        let seq = op_sequence(2e4, 1e-3);
        let err = evolve(&sys, &seq, Solver::FixedStep { dt_s: 1e-3 }, 3).unwrap_err();
        assert!(err.to_string().contains("segment 0"), "{err}");
    }

    #[test]
    fn scramble_resets_ground_states() {
        let mut sys = voigt_system(5.0, 1.5);
        sys.populations = [0.05, 0.95, 0.0, 0.0];
        let seq = PulseSequence {
            segments: vec![
                Segment::Scramble,
                Segment::Probe {
                    transition: Transition::HDown,
                    rate_1_s: 0.0,
                    duration_s: 1e-6,
                    collect: true,
                    detuning_ev: 0.0,
                },
            ],
            repetitions: 1,
            acquisition: Acquisition {
                bin_width_s: 1e-6,
                detection: Detection::all(),
                ..Acquisition::default()
            },
        };
        // the 1 µs idle probe lets the ~10² 1/s spin flips move ~1e-4
        let (_, _, _, p) = expected_trace(&sys, &seq, Solver::ExactLinear, 0.0).unwrap();
        assert_relative_eq!(p[DOWN], 0.5, max_relative = 1e-3);
        assert_relative_eq!(p[UP], 0.5, max_relative = 1e-3);
        assert!(p[X_DOWN].abs() < 1e-12);
    }

    #[test]
    fn seeded_runs_bit_identical() {
        let sys = voigt_system(5.5, 1.5);
        let seq = op_sequence(3e4, 2e-3);
        let a = evolve(&sys, &seq, Solver::ExactLinear, 42).unwrap();
        let b = evolve(&sys, &seq, Solver::ExactLinear, 42).unwrap();
        assert_eq!(a.sampled_counts, b.sampled_counts);
        assert_eq!(a.expected_counts, b.expected_counts);
        let c = evolve(&sys, &seq, Solver::ExactLinear, 43).unwrap();
        assert_ne!(a.sampled_counts, c.sampled_counts);
    }

    #[test]
    fn sampled_counts_match_expectation_chi_squared() {
        // χ² over 10³ bins within 3σ
        let sys = voigt_system(5.0, 1.5);
        let mut seq = op_sequence(5e3, 1e-2);
        seq.acquisition.bin_width_s = 1e-5; // 1000 bins
        seq.acquisition.collection_efficiency = 0.05; // keep counts ≳ 10
        let trace = evolve(&sys, &seq, Solver::ExactLinear, 1234).unwrap();
        let n = trace.expected_counts.len();
        assert_eq!(n, 1000);
        let chi2: f64 = trace
            .expected_counts
            .iter()
            .zip(&trace.sampled_counts)
            .filter(|(e, _)| **e > 1.0)
            .map(|(e, s)| (*s as f64 - e).powi(2) / e)
            .sum();
        let dof = trace.expected_counts.iter().filter(|e| **e > 1.0).count() as f64;
        assert!(
            (chi2 - dof).abs() < 3.0 * (2.0 * dof).sqrt(),
            "chi2 = {chi2}, dof = {dof}"
        );
    }

    #[test]
    fn validation_names_offending_segment() {
        let seq = PulseSequence {
            segments: vec![
                Segment::Wait { duration_s: 1e-3 },
                Segment::Pump {
                    transition: Transition::HDown,
                    rate_1_s: 1e4,
                    duration_s: -1.0,
                    detuning_ev: 0.0,
                },
            ],
            repetitions: 1,
            acquisition: Acquisition::default(),
        };
        let err = seq.validate().unwrap_err();
        assert!(err.to_string().starts_with("segment 1"), "{err}");
    }

    #[test]
    fn recovery_curve_limits() {
        // τ = 0 at the pumped-out floor, τ ≫ T₁ saturated at equilibrium
        let mut sys = voigt_system(5.0, 1.5);
        // round T₁ = 10 ms for the test
        let total = 100.0;
        let ratio = sys.equilibrium_ratio();
        sys.spin_flip_down_up = total / (1.0 + ratio);
        sys.spin_flip_up_down = total * ratio / (1.0 + ratio);
        let pump = PumpPulse {
            transition: Transition::HDown,
            rate_1_s: 2e4,
            duration_s: 2e-3,
            detuning_ev: 0.0,
        };
        let acq = Acquisition {
            bin_width_s: 2e-5,
            detection: Detection::channels(&[Transition::VUp]),
            ..Acquisition::default()
        };
        let taus = [1e-5, 1e-3, 5e-3, 2e-2, 0.1];
        let curve =
            run_t1_protocol(&sys, &taus, &pump, 4e-4, &acq, None, 5).unwrap();
        let e = &curve.expected_counts;
        assert!(e[0] < e[2] && e[2] < e[4], "recovery should grow: {e:?}");
        // saturation: last two delays (2 and 10 T₁) nearly equal
        let last = e[4];
        let prev = e[3];
        assert!((last - prev).abs() / last < 0.16, "{prev} vs {last}");
        // reproducibility
        let again = run_t1_protocol(&sys, &taus, &pump, 4e-4, &acq, None, 5).unwrap();
        assert_eq!(curve.sampled_counts, again.sampled_counts);
    }

    #[test]
    fn window_longer_than_pulse_rejected() {
        let sys = voigt_system(5.0, 1.5);
        let pump = PumpPulse {
            transition: Transition::HDown,
            rate_1_s: 1e4,
            duration_s: 1e-3,
            detuning_ev: 0.0,
        };
        let err = run_t1_protocol(
            &sys,
            &[1e-3],
            &pump,
            5e-3,
            &Acquisition::default(),
            None,
            1,
        )
        .unwrap_err();
        assert!(matches!(err, DynamicsError::WindowTooLong { .. }));
    }

    #[test]
    fn probit_reference_values() {
        assert!((probit(0.5)).abs() < 1e-9);
        assert!((probit(0.975) - 1.959964).abs() < 1e-5);
        assert!((probit(0.025) + 1.959964).abs() < 1e-5);
        assert!((probit(0.8413447460685429) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn quantile_detunings_symmetric() {
        let d = gaussian_quantile_detunings(84.8e-6, 21);
        assert_eq!(d.len(), 21);
        let wsum: f64 = d.iter().map(|(_, w)| w).sum();
        assert_relative_eq!(wsum, 1.0, max_relative = 1e-12);
        assert!(d[10].0.abs() < 1e-12); // middle quantile at zero
        for k in 0..10 {
            assert_relative_eq!(d[k].0, -d[20 - k].0, max_relative = 1e-9);
        }
    }

    #[test]
    fn gamma0_table_interpolation() {
        let table = Gamma0Table {
            detuning_ev: vec![-1e-4, 0.0, 1e-4],
            rate_1_s: vec![0.0, 100.0, 0.0],
        };
        assert_eq!(table.rate_at(0.0), 100.0);
        assert_relative_eq!(table.rate_at(0.5e-4), 50.0, max_relative = 1e-12);
        assert_eq!(table.rate_at(5.0), 0.0);
        assert_eq!(table.rate_at(-5.0), 0.0);
    }

    #[test]
    fn ensemble_trace_slower_than_single() {
        // detuned sub-ensembles pump more slowly, stretching the decay
        let sys = voigt_system(5.5, 1.5);
        let seq = op_sequence(3e4, 2e-3);
        let single = evolve(&sys, &seq, Solver::ExactLinear, 9).unwrap();
        let ensemble = EnsembleSpec::default();
        let multi = evolve_ensemble(&sys, &seq, Solver::ExactLinear, &ensemble, 9).unwrap();
        // equal initial flux budget, but the ensemble decays more slowly in
        // the tail
        let tail = |t: &TraceRecord| -> f64 {
            t.expected_counts[150..].iter().sum::<f64>()
                / t.expected_counts[..10].iter().sum::<f64>()
        };
        assert!(tail(&multi) > tail(&single));
    }
}
