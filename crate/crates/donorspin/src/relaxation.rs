//! Closed-form spin-flip rates and T₁ for the donor-bound electron.
//!
//! The zero-temperature phonon-emission rates are
//!
//! * B ∥ c (Faraday):  Γ↓↑ = Λ·Δ₁³Δ₂²/(ħ·E₁s⁴)
//! * B ⊥ c (Voigt):    Γ↓↑ = Λ·Δ₁⁵/(2ħ·E₁s⁴)
//!
//! with Δ₁ = gμ_B·B, Δ₂ = Δ₁ − ħω_c/2 and the dimensionless coupling
//! coefficient Λ built from the spin–orbit constant, the piezoelectric
//! constants and the sound velocities. At finite temperature
//! T₁ = tanh(γ/2)/Γ↓↑ with γ = gμ_B·B/(k_B·T), which is the
//! overflow-safe form of (e^γ − 1)/(Γ↓↑(e^γ + 1)).
//!
//! Δ₂ is negative for the ZnO parameter set (ħω_c/Δ₁ = (2/g)(m₀/m*) = 4);
//! only Δ₂² enters the rates, so no clamping is applied.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::PhysicalConstants;
use crate::material::{DerivedDonorParameters, MaterialParameters};

/// Threshold on q·a₀ (transverse branch) above which the long-wavelength
/// treatment of the phonon field is flagged. The computed value reaches
/// ~0.64 at 7 T with a₀ = 1.5 nm; flagged as a warning, never an error.
pub const LWA_WARN_THRESHOLD: f64 = 0.3;

#[derive(Debug, Error)]
pub enum RelaxationError {
    #[error("B must be positive when T > 0 (got B = {b} T, T = {t} K)")]
    ZeroFieldFiniteTemperature { b: f64, t: f64 },
    #[error("gamma_down_up must be positive (got {0})")]
    NonPositiveRate(f64),
    #[error("temperature must be nonnegative (got {0})")]
    NegativeTemperature(f64),
    #[error("field grid must be strictly positive and sorted ascending (offending index {index})")]
    InvalidGrid { index: usize },
}

/// Orientation of the external magnetic field relative to the crystal c-axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Geometry {
    /// B ∥ c
    Faraday,
    /// B ⊥ c
    Voigt,
}

impl fmt::Display for Geometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Geometry::Faraday => write!(f, "faraday"),
            Geometry::Voigt => write!(f, "voigt"),
        }
    }
}

/// Field-dependent energy scales entering the rate formulas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyScales {
    /// Zeeman splitting Δ₁ = gμ_B·B (eV)
    pub delta1: f64,
    /// Cyclotron energy ħω_c (eV)
    pub hbar_omega_c: f64,
    /// Δ₂ = Δ₁ − ħω_c/2 (eV)
    pub delta2: f64,
    /// Longitudinal phonon wave number at the Zeeman energy (1/m)
    pub q_l: f64,
    /// Transverse phonon wave number at the Zeeman energy (1/m)
    pub q_t: f64,
    /// q_l·a₀
    pub qa0_l: f64,
    /// q_t·a₀
    pub qa0_t: f64,
}

impl EnergyScales {
    /// Long-wavelength validity warning when q_t·a₀ exceeds
    /// [`LWA_WARN_THRESHOLD`].
    pub fn lwa_warning(&self) -> Option<String> {
        (self.qa0_t > LWA_WARN_THRESHOLD).then(|| {
            format!(
                "long-wavelength parameter q_t*a0 = {:.3} exceeds {}; \
                 the emitted-phonon wavelength is no longer large against \
                 the donor radius and the rates are an extrapolation",
                self.qa0_t, LWA_WARN_THRESHOLD
            )
        })
    }
}

/// One row of a field sweep: rate, phonon occupation and T₁ at (B, T).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePoint {
    /// Magnetic field (T)
    pub b_field: f64,
    pub geometry: Geometry,
    /// Zeeman splitting Δ₁ (eV)
    pub delta1: f64,
    /// Δ₂ = Δ₁ − ħω_c/2 (eV)
    pub delta2: f64,
    /// Zero-temperature emission rate Γ↓↑ (1/s)
    pub gamma_down_up: f64,
    /// Temperature (K)
    pub temperature: f64,
    /// Phonon occupation at the Zeeman energy
    pub n_ph: f64,
    /// Relaxation time (s)
    pub t1: f64,
}

/// Energy scales at field `b` (tesla). All outputs are zero at B = 0.
pub fn energy_scales(
    mat: &MaterialParameters,
    derived: &DerivedDonorParameters,
    b: f64,
) -> EnergyScales {
    let c = PhysicalConstants::codata2018();
    let delta1 = mat.g_e.abs() * c.mu_b * b;
    // ħω_c in eV: ħ·(eB/m*)/e = ħ_J·B/m*
    let hbar_omega_c = c.hbar_j * b / (mat.m_star_ratio * c.m0);
    let q_l = delta1 / (c.hbar_ev * mat.s_l_m_s);
    let q_t = delta1 / (c.hbar_ev * mat.s_t_m_s);
    EnergyScales {
        delta1,
        hbar_omega_c,
        delta2: delta1 - hbar_omega_c / 2.0,
        q_l,
        q_t,
        qa0_l: q_l * derived.a0,
        qa0_t: q_t * derived.a0,
    }
}

/// The dimensionless coupling coefficient
///
/// Λ = 9(eα)²/(448πρħ³)·[(5h₃₃² + 8h₃₁² + 32h₁₅²)/(5s_l⁵)
///                      + (4h₃₃² + 4h₃₁² + 52h₁₅²)/(5s_t⁵)]
///
/// evaluated in SI units. The two bracket terms are the longitudinal and
/// transverse phonon-branch contributions; see
/// [`lambda_branch_terms`] for the split.
pub fn lambda_coefficient(mat: &MaterialParameters) -> f64 {
    let (l, t) = lambda_branch_terms(mat);
    lambda_prefactor(mat) * (l + t)
}

/// The longitudinal and transverse bracket terms of Λ (units s⁵/m⁵·V²/m²,
/// i.e. the piezo quadratic forms divided by 5s⁵).
pub fn lambda_branch_terms(mat: &MaterialParameters) -> (f64, f64) {
    let h33 = mat.h33_v_m;
    let h31 = mat.h31_v_m;
    let h15 = mat.h15_v_m;
    let longitudinal =
        (5.0 * h33 * h33 + 8.0 * h31 * h31 + 32.0 * h15 * h15) / (5.0 * mat.s_l_m_s.powi(5));
    let transverse =
        (4.0 * h33 * h33 + 4.0 * h31 * h31 + 52.0 * h15 * h15) / (5.0 * mat.s_t_m_s.powi(5));
    (longitudinal, transverse)
}

/// 9(eα)²/(448πρħ³) in SI (α converted from eV·m to J·m).
pub fn lambda_prefactor(mat: &MaterialParameters) -> f64 {
    let c = PhysicalConstants::codata2018();
    let alpha_j_m = mat.alpha_so_ev_m() * c.e_charge;
    9.0 * (c.e_charge * alpha_j_m).powi(2)
        / (448.0 * std::f64::consts::PI * mat.rho_kg_m3 * c.hbar_j.powi(3))
}

/// Zero-temperature spin-flip rate Γ↓↑ (1/s) at field `b`. Returns 0 at B = 0.
pub fn spin_flip_rate(
    mat: &MaterialParameters,
    derived: &DerivedDonorParameters,
    b: f64,
    geometry: Geometry,
) -> f64 {
    let c = PhysicalConstants::codata2018();
    let scales = energy_scales(mat, derived, b);
    let lambda = lambda_coefficient(mat);
    let e1s4 = derived.e1s.powi(4);
    match geometry {
        Geometry::Faraday => {
            lambda * scales.delta1.powi(3) * scales.delta2.powi(2) / (c.hbar_ev * e1s4)
        }
        Geometry::Voigt => lambda * scales.delta1.powi(5) / (2.0 * c.hbar_ev * e1s4),
    }
}

/// Thermal up/down rates from the zero-temperature emission rate:
/// Γ↓↑(T) = Γ↓↑·(N_ph + 1) (emission, ↑→↓) and Γ↑↓(T) = Γ↓↑·N_ph
/// (absorption, ↓→↑).
pub fn thermal_rates(gamma_down_up: f64, n_ph: f64) -> (f64, f64) {
    (gamma_down_up * (n_ph + 1.0), gamma_down_up * n_ph)
}

/// Phonon occupation 1/(e^γ − 1) at γ = gμ_B·B/(k_B·T); 0 at T = 0.
pub fn phonon_occupation(b: f64, temperature: f64, g: f64) -> f64 {
    if temperature <= 0.0 {
        return 0.0;
    }
    let c = PhysicalConstants::codata2018();
    let gamma = g.abs() * c.mu_b * b / (c.k_b * temperature);
    1.0 / gamma.exp_m1()
}

/// Relaxation time at (B, T): T₁ = tanh(γ/2)/Γ↓↑, with T₁ = 1/Γ↓↑ at T = 0.
pub fn t1(
    gamma_down_up: f64,
    b: f64,
    temperature: f64,
    g: f64,
    geometry: Geometry,
) -> Result<RatePoint, RelaxationError> {
    if !(gamma_down_up > 0.0) {
        return Err(RelaxationError::NonPositiveRate(gamma_down_up));
    }
    if temperature < 0.0 {
        return Err(RelaxationError::NegativeTemperature(temperature));
    }
    if b <= 0.0 {
        return Err(RelaxationError::ZeroFieldFiniteTemperature { b, t: temperature });
    }
    let c = PhysicalConstants::codata2018();
    let (n_ph, t1) = if temperature == 0.0 {
        (0.0, 1.0 / gamma_down_up)
    } else {
        let gamma = g.abs() * c.mu_b * b / (c.k_b * temperature);
        (1.0 / gamma.exp_m1(), (gamma / 2.0).tanh() / gamma_down_up)
    };
    Ok(RatePoint {
        b_field: b,
        geometry,
        delta1: g.abs() * c.mu_b * b,
        delta2: f64::NAN, // filled by sweep_field, where ħω_c is known
        gamma_down_up,
        temperature,
        n_ph,
        t1,
    })
}

/// Evaluate the rate and T₁ on a strictly positive, sorted field grid.
pub fn sweep_field(
    mat: &MaterialParameters,
    derived: &DerivedDonorParameters,
    geometry: Geometry,
    b_grid: &[f64],
    temperature: f64,
) -> Result<Vec<RatePoint>, RelaxationError> {
    for (index, pair) in b_grid.windows(2).enumerate() {
        if pair[1] <= pair[0] {
            return Err(RelaxationError::InvalidGrid { index: index + 1 });
        }
    }
    if let Some((index, _)) = b_grid.iter().enumerate().find(|(_, b)| **b <= 0.0) {
        return Err(RelaxationError::InvalidGrid { index });
    }
    b_grid
        .iter()
        .map(|&b| {
            let gamma = spin_flip_rate(mat, derived, b, geometry);
            let mut point = t1(gamma, b, temperature, mat.g_e, geometry)?;
            point.delta2 = energy_scales(mat, derived, b).delta2;
            Ok(point)
        })
        .collect()
}
