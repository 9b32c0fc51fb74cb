//! Weighted nonlinear least squares and the named model fits.
//!
//! The solver is a damped Gauss–Newton iteration with Marquardt diagonal
//! scaling: (JᵀWJ + λ·diag(JᵀWJ))δ = JᵀW·r, damping start 10⁻³, ×10 on a
//! rejected step and ÷10 on an accepted one, convergence when the relative
//! parameter change drops below 10⁻⁸ or the gradient ∞-norm below 10⁻¹⁰,
//! iteration cap 200. Jacobians are forward differences by default with
//! per-parameter step scales; models may supply analytic rows.

mod models;

pub use models::{
    fit_double_exponential, fit_double_exponential_with, fit_exponential_recovery,
    fit_exponential_recovery_with, fit_power_law, fit_spectral_lines, fit_temperature_model,
    fit_temperature_model_with, fit_zeeman_linear, PowerLawMode,
};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("degenerate fit: {0}")]
    Degenerate(String),
    #[error("{0}")]
    Argument(String),
}

/// Flags attached to an otherwise successful fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitFlag {
    /// Double-exponential time constants collapsed; single-exponential
    /// model reported instead
    SingleExponentialFallback,
    /// Fitted line centers closer than a tenth of a linewidth
    OverlappingLines,
}

/// A measurement triple (abscissa, value, one-σ uncertainty).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataPoint {
    pub x: f64,
    pub y: f64,
    pub sigma: f64,
}

impl DataPoint {
    pub fn new(x: f64, y: f64, sigma: f64) -> Self {
        Self { x, y, sigma }
    }

    /// Unit-weight point.
    pub fn plain(x: f64, y: f64) -> Self {
        Self { x, y, sigma: 1.0 }
    }
}

/// A parametric model y = f(p, x).
pub struct Model {
    pub id: &'static str,
    pub param_names: Vec<String>,
    /// Characteristic scale of each parameter, used for finite-difference
    /// steps
    pub param_scales: Vec<f64>,
    pub func: Box<dyn Fn(&[f64], f64) -> f64>,
    /// Analytic Jacobian row ∂f/∂p at (p, x), if available
    pub jacobian: Option<Box<dyn Fn(&[f64], f64, &mut [f64])>>,
}

impl Model {
    pub fn new(
        id: &'static str,
        param_names: &[&str],
        func: impl Fn(&[f64], f64) -> f64 + 'static,
    ) -> Self {
        Self::from_names(
            id,
            param_names.iter().map(|s| s.to_string()).collect(),
            func,
        )
    }

    pub fn from_names(
        id: &'static str,
        param_names: Vec<String>,
        func: impl Fn(&[f64], f64) -> f64 + 'static,
    ) -> Self {
        let n = param_names.len();
        Self {
            id,
            param_names,
            param_scales: vec![1.0; n],
            func: Box::new(func),
            jacobian: None,
        }
    }

    pub fn with_scales(mut self, scales: &[f64]) -> Self {
        assert_eq!(scales.len(), self.param_names.len());
        self.param_scales = scales.to_vec();
        self
    }

    pub fn with_jacobian(
        mut self,
        jac: impl Fn(&[f64], f64, &mut [f64]) + 'static,
    ) -> Self {
        self.jacobian = Some(Box::new(jac));
        self
    }
}

/// How the parameter covariance is normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CovarianceScaling {
    /// σ are real measurement uncertainties: C = (JᵀWJ)⁻¹
    #[default]
    None,
    /// Unit weights: scale by the reduced χ² = SSR/(n − p)
    ReducedChiSq,
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub max_iterations: usize,
    pub initial_damping: f64,
    pub param_tolerance: f64,
    pub gradient_tolerance: f64,
    pub covariance_scaling: CovarianceScaling,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            initial_damping: 1e-3,
            param_tolerance: 1e-8,
            gradient_tolerance: 1e-10,
            covariance_scaling: CovarianceScaling::None,
        }
    }
}

/// Fit outcome: parameter estimates, one-σ errors from the covariance of
/// the linearized problem, and diagnostics.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub model_id: &'static str,
    pub param_names: Vec<String>,
    pub params: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub covariance: DMatrix<f64>,
    /// Weighted sum of squared residuals at the solution
    pub residual_norm: f64,
    pub converged: bool,
    pub n_iter: usize,
    pub flags: Vec<FitFlag>,
}

impl FitResult {
    pub fn value(&self, name: &str) -> Option<f64> {
        self.param_names
            .iter()
            .position(|n| n == name)
            .map(|i| self.params[i])
    }

    pub fn error(&self, name: &str) -> Option<f64> {
        self.param_names
            .iter()
            .position(|n| n == name)
            .map(|i| self.std_errors[i])
    }
}

fn residuals(model: &Model, data: &[DataPoint], params: &[f64]) -> DVector<f64> {
    DVector::from_iterator(
        data.len(),
        data.iter()
            .map(|d| (d.y - (model.func)(params, d.x)) / d.sigma),
    )
}

fn chi2(r: &DVector<f64>) -> f64 {
    r.dot(r)
}

fn jacobian(model: &Model, data: &[DataPoint], params: &[f64]) -> DMatrix<f64> {
    let n = data.len();
    let m = params.len();
    let mut j = DMatrix::zeros(n, m);
    if let Some(jac) = &model.jacobian {
        let mut row = vec![0.0; m];
        for (i, d) in data.iter().enumerate() {
            jac(params, d.x, &mut row);
            for (k, v) in row.iter().enumerate() {
                // weighted residual r = (y − f)/σ, so ∂r/∂p = −(∂f/∂p)/σ
                j[(i, k)] = -v / d.sigma;
            }
        }
        return j;
    }
    let sqrt_eps = f64::EPSILON.sqrt();
    let f0: Vec<f64> = data.iter().map(|d| (model.func)(params, d.x)).collect();
    let mut p_step = params.to_vec();
    for k in 0..m {
        let h = sqrt_eps * params[k].abs().max(model.param_scales[k]);
        p_step[k] = params[k] + h;
        for (i, d) in data.iter().enumerate() {
            let f1 = (model.func)(&p_step, d.x);
            j[(i, k)] = -(f1 - f0[i]) / (h * d.sigma);
        }
        p_step[k] = params[k];
    }
    j
}

/// Weighted nonlinear least squares. Deterministic given (model, data,
/// init, options); an exhausted iteration budget is reported through
/// `converged = false`, not an error.
pub fn nlls_solve(
    model: &Model,
    data: &[DataPoint],
    init: &[f64],
    options: &FitOptions,
) -> Result<FitResult, FitError> {
    let n = data.len();
    let m = init.len();
    if m != model.param_names.len() {
        return Err(FitError::Argument(format!(
            "model {} expects {} parameters, got {}",
            model.id,
            model.param_names.len(),
            m
        )));
    }
    if n < m {
        return Err(FitError::Argument(format!(
            "need at least {m} data points for {m} parameters, got {n}"
        )));
    }
    if let Some(bad) = data.iter().find(|d| !(d.sigma > 0.0)) {
        return Err(FitError::Argument(format!(
            "uncertainties must be positive (got {} at x = {})",
            bad.sigma, bad.x
        )));
    }

    let mut params = init.to_vec();
    let mut r = residuals(model, data, &params);
    if !r.iter().all(|v| v.is_finite()) {
        return Err(FitError::Argument(
            "model prediction not finite at the initial parameters".into(),
        ));
    }
    let mut current_chi2 = chi2(&r);
    let mut lambda = options.initial_damping;
    let mut converged = false;
    let mut n_iter = 0;

    for iter in 1..=options.max_iterations {
        n_iter = iter;
        let j = jacobian(model, data, &params);
        let jtj = j.transpose() * &j;
        let gradient = j.transpose() * &r;
        if let Some(k) = (0..m).find(|&k| jtj[(k, k)] <= 0.0 || !jtj[(k, k)].is_finite()) {
            return Err(FitError::Degenerate(format!(
                "parameter `{}` has no influence on the residuals",
                model.param_names[k]
            )));
        }
        if gradient.amax() < options.gradient_tolerance {
            converged = true;
            break;
        }

        let mut accepted = false;
        for _ in 0..40 {
            let mut damped = jtj.clone();
            for k in 0..m {
                damped[(k, k)] += lambda * jtj[(k, k)];
            }
            let step = match damped.clone().cholesky() {
                // r = (y−f)/σ and J = ∂r/∂p, so the descent step solves
                // (JᵀJ + λD)δ = −Jᵀr
                Some(chol) => chol.solve(&(-&gradient)),
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let trial: Vec<f64> = params
                .iter()
                .zip(step.iter())
                .map(|(p, s)| p + s)
                .collect();
            let trial_r = residuals(model, data, &trial);
            let trial_chi2 = if trial_r.iter().all(|v| v.is_finite()) {
                chi2(&trial_r)
            } else {
                f64::INFINITY
            };
            if trial_chi2 <= current_chi2 {
                let max_rel_step = params
                    .iter()
                    .zip(step.iter())
                    .enumerate()
                    .map(|(k, (p, s))| {
                        s.abs() / p.abs().max(model.param_scales[k]).max(1e-300)
                    })
                    .fold(0.0_f64, f64::max);
                params = trial;
                r = trial_r;
                current_chi2 = trial_chi2;
                lambda = (lambda / 10.0).max(1e-14);
                accepted = true;
                if max_rel_step < options.param_tolerance {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if converged || !accepted {
            converged = converged || !accepted && gradient.amax() < 1e-6;
            break;
        }
    }

    // covariance of the linearized problem at the solution
    let j = jacobian(model, data, &params);
    let jtj = j.transpose() * &j;
    let scale = match options.covariance_scaling {
        CovarianceScaling::None => 1.0,
        CovarianceScaling::ReducedChiSq => {
            if n > m {
                current_chi2 / (n - m) as f64
            } else {
                1.0
            }
        }
    };
    let covariance = jtj
        .clone()
        .try_inverse()
        .map(|inv| inv * scale)
        .unwrap_or_else(|| DMatrix::from_element(m, m, f64::NAN));
    let std_errors = (0..m)
        .map(|k| covariance[(k, k)].max(0.0).sqrt())
        .collect();

    Ok(FitResult {
        model_id: model.id,
        param_names: model.param_names.clone(),
        params,
        std_errors,
        covariance,
        residual_norm: current_chi2,
        converged,
        n_iter,
        flags: Vec::new(),
    })
}
