//! Protocol-level simulator behavior: pump–probe runs and the ensemble
//! optical-pumping line shape.

use donorspin::dynamics::{
    build_level_system, evolve_ensemble, run_pump_probe, Acquisition, Detection, EnsembleSpec,
    LevelSystem, OpticsConfig, PulseSequence, PumpPulse, Segment, Solver, Transition,
};
use donorspin::fitting::{
    fit_double_exponential, fit_exponential_recovery, nlls_solve, DataPoint, FitOptions, Model,
};
use donorspin::material::{derive_donor, DonorModel, MaterialParameters};
use donorspin::relaxation::Geometry;

fn faraday_system(b: f64, temp: f64) -> LevelSystem {
    let mat = MaterialParameters::default();
    let derived = derive_donor(&mat, DonorModel::from_material(&mat)).unwrap();
    build_level_system(Geometry::Faraday, b, temp, &mat, &derived, &OpticsConfig::default())
        .unwrap()
}

fn voigt_system(b: f64, temp: f64) -> LevelSystem {
    let mat = MaterialParameters::default();
    let derived = derive_donor(&mat, DonorModel::from_material(&mat)).unwrap();
    build_level_system(Geometry::Voigt, b, temp, &mat, &derived, &OpticsConfig::default())
        .unwrap()
}

fn pump_probe_t1(system: &LevelSystem, pump_on_s: f64, seed: u64) -> f64 {
    // σ⁺ pump (not collected), σ⁻ probe of the remaining |↑⟩ population
    let pump = PumpPulse {
        transition: Transition::SigmaPlus,
        rate_1_s: 2e6,
        duration_s: pump_on_s,
        detuning_ev: 0.0,
    };
    let probe = PumpPulse {
        transition: Transition::SigmaMinus,
        rate_1_s: 1e5,
        duration_s: 5e-4,
        detuning_ev: 0.0,
    };
    let acquisition = Acquisition {
        bin_width_s: 1e-5,
        detection: Detection::all(),
        n_donors: 1e6,
        collection_efficiency: 1e-2,
        dark_count_rate_1_s: 0.0,
    };
    let t1_expected = 1.0 / system.total_spin_rate();
    let taus: Vec<f64> = (0..14)
        .map(|k| 0.05 * t1_expected * (80.0_f64).powf(k as f64 / 13.0))
        .collect();
    let curve = run_pump_probe(
        system,
        &taus,
        &pump,
        &probe,
        2e-4,
        &acquisition,
        None,
        seed,
    )
    .unwrap();
    let fit = fit_exponential_recovery(&curve).unwrap();
    assert!(fit.converged);
    fit.value("t1").unwrap()
}

#[test]
fn pump_probe_recovers_injected_t1() {
    let system = faraday_system(5.0, 1.9);
    let t1_true = 1.0 / system.total_spin_rate();
    let t1_fit = pump_probe_t1(&system, 5e-4, 21);
    assert!(
        (t1_fit - t1_true).abs() / t1_true < 0.05,
        "pump-probe T1 {t1_fit} vs {t1_true}"
    );
}

#[test]
fn pump_probe_signal_ordering() {
    // probe right after the pump sees the maximal |↑⟩ population; at
    // τ ≫ T₁ the signal sits at equilibrium
    let system = faraday_system(5.0, 1.9);
    let t1_true = 1.0 / system.total_spin_rate();
    let pump = PumpPulse {
        transition: Transition::SigmaPlus,
        rate_1_s: 2e6,
        duration_s: 5e-4,
        detuning_ev: 0.0,
    };
    let probe = PumpPulse {
        transition: Transition::SigmaMinus,
        rate_1_s: 1e5,
        duration_s: 5e-4,
        detuning_ev: 0.0,
    };
    let acq = Acquisition {
        bin_width_s: 1e-5,
        detection: Detection::all(),
        n_donors: 1e6,
        collection_efficiency: 1e-2,
        dark_count_rate_1_s: 0.0,
    };
    let taus = [
        0.01 * t1_true,
        0.3 * t1_true,
        t1_true,
        3.0 * t1_true,
        20.0 * t1_true,
        60.0 * t1_true,
    ];
    let curve =
        run_pump_probe(&system, &taus, &pump, &probe, 2e-4, &acq, None, 5).unwrap();
    let e = &curve.expected_counts;
    // monotone decay toward equilibrium
    assert!(e[0] > e[2] && e[2] > e[3], "{e:?}");
    let rel_tail = (e[4] - e[5]).abs() / e[5];
    assert!(rel_tail < 0.02, "tail not saturated: {e:?}");
}

#[test]
fn pump_on_time_barely_moves_t1() {
    // pump-on times of 50 and 500 µs change the extracted T₁ by far less
    // than the factor 1.2 contract
    let system = faraday_system(5.0, 1.9);
    let t1_short = pump_probe_t1(&system, 5e-5, 31);
    let t1_long = pump_probe_t1(&system, 5e-4, 32);
    let ratio = (t1_long / t1_short).max(t1_short / t1_long);
    assert!(ratio < 1.2, "T1 ratio {ratio} between pump-on times");
}

#[test]
fn ensemble_op_trace_prefers_double_exponential() {
    // detuned sub-ensembles pump at different rates, so the ensemble OP
    // decay is a rate mixture: a double exponential must beat a single
    // exponential on residual norm
    let system = voigt_system(5.5, 1.5);
    let seq = PulseSequence {
        segments: vec![Segment::Pump {
            transition: Transition::HDown,
            rate_1_s: 3e4,
            duration_s: 3e-3,
            detuning_ev: 0.0,
        }],
        repetitions: 1,
        acquisition: Acquisition {
            bin_width_s: 1.5e-5,
            detection: Detection::channels(&[Transition::VUp]),
            n_donors: 1e6,
            collection_efficiency: 1e-2,
            dark_count_rate_1_s: 0.0,
        },
    };
    let ensemble = EnsembleSpec::default();
    let trace = evolve_ensemble(&system, &seq, Solver::ExactLinear, &ensemble, 77).unwrap();

    let double = fit_double_exponential(&trace).unwrap();
    assert!(double.flags.is_empty(), "double fit should be genuine");

    // single exponential on the same shot-noise weighting
    let data: Vec<DataPoint> = trace
        .bin_start_s
        .iter()
        .zip(&trace.bin_width_s)
        .zip(&trace.sampled_counts)
        .zip(&trace.expected_counts)
        .map(|(((start, width), counts), expected)| {
            DataPoint::new(
                start + 0.5 * width,
                *counts as f64,
                expected.max(1.0).sqrt(),
            )
        })
        .collect();
    let single = Model::new("single_exp", &["ln_t", "ln_a", "offset"], |p, x| {
        p[1].exp() * (-x / p[0].exp()).exp() + p[2]
    });
    let tail = data[data.len() - 20..].iter().map(|d| d.y).sum::<f64>() / 20.0;
    let init = [
        (5e-4_f64).ln(),
        (data[0].y - tail).max(1.0).ln(),
        tail,
    ];
    let sfit = nlls_solve(&single, &data, &init, &FitOptions::default()).unwrap();

    assert!(
        double.residual_norm < 0.6 * sfit.residual_norm,
        "double {} vs single {}",
        double.residual_norm,
        sfit.residual_norm
    );
    // the two components straddle the single-exponential constant
    let t_fast = double.value("t_fast").unwrap();
    let t_slow = double.value("t_slow").unwrap();
    assert!(t_fast < t_slow);
}
