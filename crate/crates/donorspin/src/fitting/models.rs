//! The named fits: exponential recovery, double-exponential decay, power
//! law, phonon-occupation temperature model, linear Zeeman and spectral
//! line profiles.

use nalgebra::DMatrix;

use super::{
    nlls_solve, CovarianceScaling, DataPoint, FitError, FitFlag, FitOptions, FitResult, Model,
};
use crate::constants::PhysicalConstants;
use crate::dynamics::{RecoveryCurve, TraceRecord};
use crate::profiles::pseudo_voigt_single;

fn shot_noise_sigma(expected: f64) -> f64 {
    expected.max(1.0).sqrt()
}

/// Log-linear seed for a decaying/recovering exponential: slope of
/// ln|level − y| against x.
fn log_linear_rate(xs: &[f64], ys: &[f64], level: f64, scale: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter_map(|(&x, &y)| {
            let d = (level - y).abs();
            (d > 0.02 * scale).then(|| (x, d.ln()))
        })
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        return None;
    }
    let slope = (n * sxy - sx * sy) / denom;
    (slope < 0.0).then(|| -slope)
}

/// Replace auto-seeded initial values by name.
fn apply_overrides(names: &[&str], init: &mut [f64], overrides: &[(String, f64)]) {
    for (key, value) in overrides {
        if let Some(k) = names.iter().position(|n| n == key) {
            init[k] = *value;
        }
    }
}

/// Fit y(τ) = A·(1 − e^(−τ/T1)) + C to a recovery curve, weighted by the
/// per-point shot noise. Parameters: t1, amplitude, offset.
pub fn fit_exponential_recovery(curve: &RecoveryCurve) -> Result<FitResult, FitError> {
    fit_exponential_recovery_with(curve, &[])
}

/// [`fit_exponential_recovery`] with named initial-value overrides.
pub fn fit_exponential_recovery_with(
    curve: &RecoveryCurve,
    overrides: &[(String, f64)],
) -> Result<FitResult, FitError> {
    if curve.tau_s.len() < 4 {
        return Err(FitError::Argument(format!(
            "need at least 4 recovery points, got {}",
            curve.tau_s.len()
        )));
    }
    let data: Vec<DataPoint> = curve
        .tau_s
        .iter()
        .zip(&curve.sampled_counts)
        .zip(&curve.expected_counts)
        .map(|((&tau, &counts), &expected)| {
            DataPoint::new(tau, counts as f64, shot_noise_sigma(expected))
        })
        .collect();

    let first = data.first().unwrap().y;
    let last = data.last().unwrap().y;
    let amplitude0 = last - first;
    let offset0 = first;
    let tau_span = curve.tau_s.last().unwrap() - curve.tau_s[0];
    let ys: Vec<f64> = data.iter().map(|d| d.y).collect();
    let rate0 = log_linear_rate(&curve.tau_s, &ys, offset0 + amplitude0, amplitude0.abs())
        .unwrap_or(2.0 / tau_span);
    let mut init = [1.0 / rate0, amplitude0, offset0];
    apply_overrides(&["t1", "amplitude", "offset"], &mut init, overrides);

    let scale_y = amplitude0.abs().max(first.abs()).max(1.0);
    let model = Model::new("exponential_recovery", &["t1", "amplitude", "offset"], |p, x| {
        p[1] * (1.0 - (-x / p[0]).exp()) + p[2]
    })
    .with_scales(&[init[0].abs().max(1e-12), scale_y, scale_y]);
    nlls_solve(&model, &data, &init, &FitOptions::default())
}

/// Fit y(t) = A_f·e^(−t/t_fast) + A_s·e^(−t/t_slow) + C to a decay trace.
/// Time constants and amplitudes are fitted in log space (amplitudes ≥ 0,
/// constants > 0 by construction); the result orders t_fast ≤ t_slow. If
/// the two constants collapse within 1%, the single-exponential model is
/// fitted instead and flagged.
pub fn fit_double_exponential(trace: &TraceRecord) -> Result<FitResult, FitError> {
    fit_double_exponential_with(trace, &[])
}

/// [`fit_double_exponential`] with named initial-value overrides
/// (t_fast, t_slow, a_fast, a_slow, offset — plain, not log, values).
pub fn fit_double_exponential_with(
    trace: &TraceRecord,
    overrides: &[(String, f64)],
) -> Result<FitResult, FitError> {
    let n = trace.bin_start_s.len();
    if n < 6 {
        return Err(FitError::Argument(format!(
            "need at least 6 trace bins, got {n}"
        )));
    }
    let xs: Vec<f64> = trace
        .bin_start_s
        .iter()
        .zip(&trace.bin_width_s)
        .map(|(s, w)| s + 0.5 * w)
        .collect();
    let data: Vec<DataPoint> = xs
        .iter()
        .zip(&trace.sampled_counts)
        .zip(&trace.expected_counts)
        .map(|((&x, &counts), &expected)| {
            DataPoint::new(x, counts as f64, shot_noise_sigma(expected))
        })
        .collect();

    // seed from the head/tail segments of the log-decay
    let tail_start = (3 * n) / 4;
    let offset0 = data[tail_start..].iter().map(|d| d.y).sum::<f64>()
        / (n - tail_start) as f64;
    let ys: Vec<f64> = data.iter().map(|d| d.y).collect();
    let peak = ys[0].max(1.0);
    let head = n / 4;
    let rate_fast = log_linear_rate(&xs[..head.max(2)], &ys[..head.max(2)], offset0, peak)
        .unwrap_or(4.0 / (xs[n - 1] - xs[0]));
    let rate_slow = log_linear_rate(&xs[head..], &ys[head..], offset0, peak)
        .unwrap_or(rate_fast / 10.0);
    let amp0 = (ys[0] - offset0).max(peak * 0.01);

    let double = Model::new(
        "double_exponential",
        &["ln_t_fast", "ln_t_slow", "ln_a_fast", "ln_a_slow", "offset"],
        |p, x| {
            p[2].exp() * (-x / p[0].exp()).exp() + p[3].exp() * (-x / p[1].exp()).exp() + p[4]
        },
    )
    .with_scales(&[1.0, 1.0, 1.0, 1.0, peak]);
    let mut plain = [
        1.0 / rate_fast,
        1.0 / rate_slow.min(rate_fast * 0.5),
        0.5 * amp0,
        0.5 * amp0,
        offset0,
    ];
    apply_overrides(
        &["t_fast", "t_slow", "a_fast", "a_slow", "offset"],
        &mut plain,
        overrides,
    );
    let init = [
        plain[0].max(1e-300).ln(),
        plain[1].max(1e-300).ln(),
        plain[2].max(1e-300).ln(),
        plain[3].max(1e-300).ln(),
        plain[4],
    ];
    let fit = nlls_solve(&double, &data, &init, &FitOptions::default())?;

    let mut t_fast = fit.params[0].exp();
    let mut t_slow = fit.params[1].exp();
    let mut a_fast = fit.params[2].exp();
    let mut a_slow = fit.params[3].exp();
    let mut order = [0usize, 1, 2, 3, 4];
    if t_fast > t_slow {
        std::mem::swap(&mut t_fast, &mut t_slow);
        std::mem::swap(&mut a_fast, &mut a_slow);
        order = [1, 0, 3, 2, 4];
    }

    // the second component is unidentifiable either when the constants
    // collapse within 1% or when one amplitude vanishes
    let negligible_amplitude = a_fast.min(a_slow) < 0.01 * a_fast.max(a_slow);
    if (t_slow - t_fast).abs() < 0.01 * t_slow || negligible_amplitude {
        // indistinguishable constants: report the single-exponential model
        let single = Model::new(
            "single_exponential",
            &["ln_t", "ln_a", "offset"],
            |p, x| p[1].exp() * (-x / p[0].exp()).exp() + p[2],
        )
        .with_scales(&[1.0, 1.0, peak]);
        let t_seed = if a_fast >= a_slow { t_fast } else { t_slow };
        let sfit = nlls_solve(
            &single,
            &data,
            &[t_seed.ln(), (a_fast + a_slow).max(1e-300).ln(), fit.params[4]],
            &FitOptions::default(),
        )?;
        let t = sfit.params[0].exp();
        let a = sfit.params[1].exp();
        // rows (t_fast, t_slow, a_fast, a_slow, offset) from columns
        // (ln_t, ln_a, offset); a_slow is pinned at zero
        let mut jac = DMatrix::zeros(5, 3);
        jac[(0, 0)] = t;
        jac[(1, 0)] = t;
        jac[(2, 1)] = a;
        jac[(4, 2)] = 1.0;
        let cov = &jac * &sfit.covariance * jac.transpose();
        let std_errors = (0..5).map(|k| cov[(k, k)].max(0.0).sqrt()).collect();
        return Ok(FitResult {
            model_id: "double_exponential",
            param_names: name_list(&["t_fast", "t_slow", "a_fast", "a_slow", "offset"]),
            params: vec![t, t, a, 0.0, sfit.params[2]],
            std_errors,
            covariance: cov,
            residual_norm: sfit.residual_norm,
            converged: sfit.converged,
            n_iter: sfit.n_iter,
            flags: vec![FitFlag::SingleExponentialFallback],
        });
    }

    // delta-method transform of the covariance from log parameters
    let values = [t_fast, t_slow, a_fast, a_slow, fit.params[4]];
    let mut jac = DMatrix::zeros(5, 5);
    for (row, &src) in order.iter().enumerate() {
        jac[(row, src)] = if row < 4 { values[row] } else { 1.0 };
    }
    let cov = &jac * &fit.covariance * jac.transpose();
    let std_errors = (0..5).map(|k| cov[(k, k)].max(0.0).sqrt()).collect();
    Ok(FitResult {
        model_id: "double_exponential",
        param_names: name_list(&["t_fast", "t_slow", "a_fast", "a_slow", "offset"]),
        params: values.to_vec(),
        std_errors,
        covariance: cov,
        residual_norm: fit.residual_norm,
        converged: fit.converged,
        n_iter: fit.n_iter,
        flags: Vec::new(),
    })
}

fn name_list(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// Power-law mode: fit the exponent or pin it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PowerLawMode {
    FreeExponent,
    Fixed(f64),
}

/// Fit T₁ = a·B^(−n) in log–log space (an exact linear problem).
/// Parameters: a, n; in fixed mode n is echoed with zero error.
pub fn fit_power_law(
    points: &[(f64, f64)],
    mode: PowerLawMode,
) -> Result<FitResult, FitError> {
    if points.iter().any(|(x, y)| *x <= 0.0 || *y <= 0.0) {
        return Err(FitError::Argument(
            "power-law data must be strictly positive".into(),
        ));
    }
    let min_points = match mode {
        PowerLawMode::FreeExponent => 2,
        PowerLawMode::Fixed(_) => 1,
    };
    if points.len() < min_points {
        return Err(FitError::Argument(format!(
            "need at least {min_points} points, got {}",
            points.len()
        )));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;

    let (intercept, slope, cov, ssr) = match mode {
        PowerLawMode::FreeExponent => {
            let sx: f64 = logs.iter().map(|p| p.0).sum();
            let sy: f64 = logs.iter().map(|p| p.1).sum();
            let sxx: f64 = logs.iter().map(|p| p.0 * p.0).sum();
            let sxy: f64 = logs.iter().map(|p| p.0 * p.1).sum();
            let denom = n * sxx - sx * sx;
            if denom.abs() < 1e-300 {
                return Err(FitError::Degenerate(
                    "all abscissae identical in log space".into(),
                ));
            }
            let slope = (n * sxy - sx * sy) / denom;
            let intercept = (sy - slope * sx) / n;
            let ssr: f64 = logs
                .iter()
                .map(|(x, y)| (y - intercept - slope * x).powi(2))
                .sum();
            let dof = (logs.len().max(3) - 2) as f64;
            let s2 = ssr / dof;
            // covariance of (intercept, slope) for unit-weight linear LS
            let var_slope = s2 * n / denom;
            let var_intercept = s2 * sxx / denom;
            let cov_is = -s2 * sx / denom;
            (intercept, slope, (var_intercept, var_slope, cov_is), ssr)
        }
        PowerLawMode::Fixed(n_exp) => {
            let slope = -n_exp;
            let intercept: f64 =
                logs.iter().map(|(x, y)| y - slope * x).sum::<f64>() / n;
            let ssr: f64 = logs
                .iter()
                .map(|(x, y)| (y - intercept - slope * x).powi(2))
                .sum();
            let dof = (logs.len().max(2) - 1) as f64;
            (intercept, slope, (ssr / dof / n, 0.0, 0.0), ssr)
        }
    };

    let a = intercept.exp();
    let exponent = -slope;
    let (var_i, var_s, cov_is) = cov;
    // delta method: a = e^intercept
    let mut covariance = DMatrix::zeros(2, 2);
    covariance[(0, 0)] = a * a * var_i;
    covariance[(1, 1)] = var_s;
    covariance[(0, 1)] = -a * cov_is;
    covariance[(1, 0)] = -a * cov_is;
    Ok(FitResult {
        model_id: "power_law",
        param_names: name_list(&["a", "n"]),
        params: vec![a, exponent],
        std_errors: vec![covariance[(0, 0)].sqrt(), covariance[(1, 1)].sqrt()],
        covariance,
        residual_norm: ssr,
        converged: true,
        n_iter: 1,
        flags: Vec::new(),
    })
}

/// Fit T₁(T) = 1/(Γ↓↑·(2N_ph(T) + 1) + Γ₀) with the phonon occupation
/// evaluated at the Zeeman energy gμ_B·B. Parameters: gamma_down_up,
/// gamma0 (1/s); Γ₀ is unconstrained in sign.
pub fn fit_temperature_model(
    points: &[(f64, f64)],
    b: f64,
    g: f64,
) -> Result<FitResult, FitError> {
    fit_temperature_model_with(points, b, g, &[])
}

/// [`fit_temperature_model`] with named initial-value overrides.
pub fn fit_temperature_model_with(
    points: &[(f64, f64)],
    b: f64,
    g: f64,
    overrides: &[(String, f64)],
) -> Result<FitResult, FitError> {
    if points.len() < 2 {
        return Err(FitError::Argument("need at least 2 points".into()));
    }
    if points.iter().any(|(t, t1)| *t <= 0.0 || *t1 <= 0.0) {
        return Err(FitError::Argument(
            "temperatures and T1 values must be positive".into(),
        ));
    }
    if b <= 0.0 {
        return Err(FitError::Argument("field must be positive".into()));
    }
    let c = PhysicalConstants::codata2018();
    let zeeman = g.abs() * c.mu_b * b;
    let phonon_factor = move |temp: f64| {
        let n_ph = 1.0 / (zeeman / (c.k_b * temp)).exp_m1();
        2.0 * n_ph + 1.0
    };

    // linear seed: 1/T1 = Γ·F_ph + Γ₀
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|(t, _)| phonon_factor(*t)).sum();
    let sy: f64 = points.iter().map(|(_, t1)| 1.0 / t1).sum();
    let sxx: f64 = points
        .iter()
        .map(|(t, _)| phonon_factor(*t).powi(2))
        .sum();
    let sxy: f64 = points
        .iter()
        .map(|(t, t1)| phonon_factor(*t) / t1)
        .sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-300 {
        return Err(FitError::Degenerate(
            "phonon factor constant over the temperature range".into(),
        ));
    }
    let gamma_seed = (n * sxy - sx * sy) / denom;
    let offset_seed = (sy - gamma_seed * sx) / n;
    let mut init = [gamma_seed, offset_seed];
    apply_overrides(&["gamma_down_up", "gamma0"], &mut init, overrides);

    let data: Vec<DataPoint> = points
        .iter()
        .map(|(t, t1)| DataPoint::plain(*t, *t1))
        .collect();
    let scale = init[0].abs().max(init[1].abs()).max(1e-6);
    let model = Model::new("temperature_model", &["gamma_down_up", "gamma0"], move |p, t| {
        1.0 / (p[0] * phonon_factor(t) + p[1])
    })
    .with_scales(&[scale, scale]);
    let options = FitOptions {
        covariance_scaling: CovarianceScaling::ReducedChiSq,
        ..FitOptions::default()
    };
    nlls_solve(&model, &data, &init, &options)
}

/// Fit splitting = g_eff·μ_B·B through the origin. Parameter: g_eff.
pub fn fit_zeeman_linear(points: &[(f64, f64)]) -> Result<FitResult, FitError> {
    if points.len() < 2 {
        return Err(FitError::Argument("need at least 2 fields".into()));
    }
    if points.iter().all(|(b, _)| *b == 0.0) {
        return Err(FitError::Argument(
            "all fields are zero; slope is undefined".into(),
        ));
    }
    let mu_b = PhysicalConstants::codata2018().mu_b;
    let sxy: f64 = points.iter().map(|(b, e)| b * e).sum();
    let sxx: f64 = points.iter().map(|(b, _)| b * b).sum();
    let slope = sxy / sxx;
    let ssr: f64 = points.iter().map(|(b, e)| (e - slope * b).powi(2)).sum();
    let dof = (points.len() - 1) as f64;
    let var_slope = ssr / dof / sxx;
    let g_eff = slope / mu_b;
    let var_g = var_slope / (mu_b * mu_b);
    Ok(FitResult {
        model_id: "zeeman_linear",
        param_names: name_list(&["g_eff"]),
        params: vec![g_eff],
        std_errors: vec![var_g.sqrt()],
        covariance: DMatrix::from_element(1, 1, var_g),
        residual_norm: ssr,
        converged: true,
        n_iter: 1,
        flags: Vec::new(),
    })
}

/// Fit a sum of pseudo-Voigt lines plus a constant background to a
/// spectrum. Parameters per line: center_k, fwhm_k, amplitude_k (area),
/// then the shared Lorentzian fraction eta and background. Centers are
/// returned sorted ascending. Unresolvably close lines set
/// [`FitFlag::OverlappingLines`].
pub fn fit_spectral_lines(
    energy: &[f64],
    intensity: &[f64],
    n_lines: usize,
    init_centers: &[f64],
) -> Result<FitResult, FitError> {
    if n_lines == 0 {
        return Err(FitError::Argument("need at least one line".into()));
    }
    if init_centers.len() != n_lines {
        return Err(FitError::Argument(format!(
            "expected {n_lines} initial centers, got {}",
            init_centers.len()
        )));
    }
    if energy.len() != intensity.len() || energy.len() < 3 * n_lines + 2 {
        return Err(FitError::Argument(
            "spectrum too short for the requested number of lines".into(),
        ));
    }
    let background0 = intensity.iter().cloned().fold(f64::INFINITY, f64::min);
    let peak = intensity.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(peak - background0 > 0.0) {
        return Err(FitError::Degenerate(
            "spectrum has no amplitude above background".into(),
        ));
    }

    // crude width seed: half-height span around the tallest sample
    let imax = intensity
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap()
        .0;
    let half = background0 + 0.5 * (peak - background0);
    let mut lo = imax;
    while lo > 0 && intensity[lo] > half {
        lo -= 1;
    }
    let mut hi = imax;
    while hi + 1 < intensity.len() && intensity[hi] > half {
        hi += 1;
    }
    let fwhm0 = (energy[hi] - energy[lo]).abs().max(
        2.0 * (energy[energy.len() - 1] - energy[0]).abs() / energy.len() as f64,
    );
    let area0 = (peak - background0) * fwhm0 / n_lines as f64;

    // params: [c_0, ln f_0, ln A_0, ..., u_eta, background]
    let m = 3 * n_lines + 2;
    let mut init = Vec::with_capacity(m);
    let mut scales = Vec::with_capacity(m);
    for &center in init_centers {
        init.extend_from_slice(&[center, fwhm0.ln(), area0.ln()]);
        scales.extend_from_slice(&[fwhm0, 1.0, 1.0]);
    }
    init.extend_from_slice(&[-2.0, background0]); // eta ≈ 0.12
    scales.extend_from_slice(&[1.0, (peak - background0).max(1.0)]);

    let lines = n_lines;
    let model = Model::from_names("spectral_lines", names_for_lines(n_lines), move |p, x| {
        let eta = 1.0 / (1.0 + (-p[3 * lines]).exp());
        let mut y = p[3 * lines + 1];
        for k in 0..lines {
            let center = p[3 * k];
            let fwhm = p[3 * k + 1].exp();
            let area = p[3 * k + 2].exp();
            y += area * pseudo_voigt_single(x, center, fwhm, eta);
        }
        y
    })
    .with_scales(&scales);

    let data: Vec<DataPoint> = energy
        .iter()
        .zip(intensity)
        .map(|(&x, &y)| DataPoint::plain(x, y))
        .collect();
    let options = FitOptions {
        covariance_scaling: CovarianceScaling::ReducedChiSq,
        ..FitOptions::default()
    };
    let fit = nlls_solve(&model, &data, &init, &options)?;

    // unpack, transform and sort by center
    let eta = 1.0 / (1.0 + (-fit.params[3 * n_lines]).exp());
    let background = fit.params[3 * n_lines + 1];
    let mut per_line: Vec<(f64, f64, f64, usize)> = (0..n_lines)
        .map(|k| {
            (
                fit.params[3 * k],
                fit.params[3 * k + 1].exp(),
                fit.params[3 * k + 2].exp(),
                k,
            )
        })
        .collect();
    per_line.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    let mut flags = Vec::new();
    for pair in per_line.windows(2) {
        let width = pair[0].1.max(pair[1].1);
        if (pair[1].0 - pair[0].0).abs() < 0.1 * width {
            flags.push(FitFlag::OverlappingLines);
            break;
        }
    }

    // delta-method covariance in the reported (sorted, de-logged) basis
    let mut jac = DMatrix::zeros(m, m);
    for (row, &(_, fwhm, area, src)) in per_line.iter().enumerate() {
        jac[(3 * row, 3 * src)] = 1.0;
        jac[(3 * row + 1, 3 * src + 1)] = fwhm;
        jac[(3 * row + 2, 3 * src + 2)] = area;
    }
    jac[(3 * n_lines, 3 * n_lines)] = eta * (1.0 - eta);
    jac[(3 * n_lines + 1, 3 * n_lines + 1)] = 1.0;
    let cov = &jac * &fit.covariance * jac.transpose();

    let mut params = Vec::with_capacity(m);
    for &(center, fwhm, area, _) in &per_line {
        params.extend_from_slice(&[center, fwhm, area]);
    }
    params.extend_from_slice(&[eta, background]);
    let std_errors = (0..m).map(|k| cov[(k, k)].max(0.0).sqrt()).collect();

    Ok(FitResult {
        model_id: "spectral_lines",
        param_names: names_for_lines(n_lines),
        params,
        std_errors,
        covariance: cov,
        residual_norm: fit.residual_norm,
        converged: fit.converged,
        n_iter: fit.n_iter,
        flags,
    })
}

fn names_for_lines(n_lines: usize) -> Vec<String> {
    let mut names = Vec::with_capacity(3 * n_lines + 2);
    for k in 0..n_lines {
        names.push(format!("center_{k}"));
        names.push(format!("fwhm_{k}"));
        names.push(format!("amplitude_{k}"));
    }
    names.push("eta".into());
    names.push("background".into());
    names
}
