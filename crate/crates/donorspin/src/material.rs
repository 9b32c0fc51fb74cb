//! Wurtzite ZnO material constants and derived donor-scale quantities.
//!
//! The default parameter set reproduces the values used by the rate
//! calculations bit-for-bit: ρ = 5.6×10³ kg/m³, m*/m₀ = 0.25, ε = 8.1,
//! α = 1.1 meV·Å, g = 2, h₃₃ = 1.5×10¹⁰ V/m, h₃₁ = h₁₅ = −0.6×10¹⁰ V/m,
//! s_l = 6.1×10³ m/s, s_t = 2.9×10³ m/s. Hole g-factors (g⊥ = 0.34,
//! g∥ = −1.22) are used only by the spectrum/PLE simulation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constants::PhysicalConstants;

/// Errors from config parsing and parameter validation.
#[derive(Debug, Error)]
pub enum MaterialError {
    #[error("config parse failure at {path}: {message}")]
    Parse { path: String, message: String },
    #[error("{field} must be positive (got {value})")]
    NotPositive { field: &'static str, value: f64 },
    #[error("s_l must exceed s_t (got s_l = {s_l}, s_t = {s_t})")]
    SoundVelocityOrder { s_l: f64, s_t: f64 },
    #[error("eps must be positive (got {0})")]
    NonPositiveEps(f64),
    #[error("explicit donor parameters must be positive (a0 = {a0}, E1s = {e1s})")]
    NonPositiveDonor { a0: f64, e1s: f64 },
}

/// Material parameters of wurtzite ZnO.
///
/// Field names and units mirror the JSON config schema; energies that feed
/// the rate formulas are converted through the accessor methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialParameters {
    /// Mass density (kg/m³)
    pub rho_kg_m3: f64,
    /// Effective mass ratio m*/m₀
    pub m_star_ratio: f64,
    /// Static dielectric constant
    pub eps_static: f64,
    /// Spin–orbit constant α (meV·Å)
    #[serde(rename = "alpha_so_meV_A")]
    pub alpha_so_mev_a: f64,
    /// Electron g-factor
    pub g_e: f64,
    /// Piezoelectric constant h₃₃ (V/m)
    #[serde(rename = "h33_V_m")]
    pub h33_v_m: f64,
    /// Piezoelectric constant h₃₁ (V/m)
    #[serde(rename = "h31_V_m")]
    pub h31_v_m: f64,
    /// Piezoelectric constant h₁₅ (V/m)
    #[serde(rename = "h15_V_m")]
    pub h15_v_m: f64,
    /// Longitudinal sound velocity (m/s)
    pub s_l_m_s: f64,
    /// Transverse sound velocity (m/s)
    pub s_t_m_s: f64,
    /// Hole g-factor, B ⊥ c (spectrum/PLE only)
    pub g_h_perp: f64,
    /// Hole g-factor, B ∥ c (spectrum/PLE only)
    pub g_h_par: f64,
    /// Donor Bohr radius used by the explicit donor model (nm)
    pub a0_nm: f64,
    /// Donor binding energy used by the explicit donor model (meV)
    #[serde(rename = "E1s_meV")]
    pub e1s_mev: f64,
}

impl Default for MaterialParameters {
    fn default() -> Self {
        Self {
            rho_kg_m3: 5.6e3,
            m_star_ratio: 0.25,
            eps_static: 8.1,
            alpha_so_mev_a: 1.1,
            g_e: 2.0,
            h33_v_m: 1.5e10,
            h31_v_m: -0.6e10,
            h15_v_m: -0.6e10,
            s_l_m_s: 6.1e3,
            s_t_m_s: 2.9e3,
            g_h_perp: 0.34,
            g_h_par: -1.22,
            a0_nm: 1.5,
            e1s_mev: 54.6,
        }
    }
}

impl MaterialParameters {
    /// Spin–orbit constant in eV·m (1 meV·Å = 10⁻¹³ eV·m).
    pub fn alpha_so_ev_m(&self) -> f64 {
        self.alpha_so_mev_a * 1e-13
    }

    /// Check the positivity and ordering invariants.
    pub fn validate(&self) -> Result<(), MaterialError> {
        let positives = [
            ("rho_kg_m3", self.rho_kg_m3),
            ("m_star_ratio", self.m_star_ratio),
            ("eps_static", self.eps_static),
            ("s_l_m_s", self.s_l_m_s),
            ("s_t_m_s", self.s_t_m_s),
        ];
        for (field, value) in positives {
            if !(value > 0.0) {
                return Err(MaterialError::NotPositive { field, value });
            }
        }
        if self.s_l_m_s <= self.s_t_m_s {
            return Err(MaterialError::SoundVelocityOrder {
                s_l: self.s_l_m_s,
                s_t: self.s_t_m_s,
            });
        }
        Ok(())
    }
}

/// Donor-scale quantities derived from the material parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedDonorParameters {
    /// Donor Bohr radius (m)
    pub a0: f64,
    /// Donor binding energy (eV)
    pub e1s: f64,
    /// Donor polarizability β = 9εa₀³/2 (m³, Gaussian-convention
    /// polarizability volume; the SI polarizability is 4πε₀ times this).
    pub beta_pol: f64,
    /// Effective Rydberg (m*/m₀)/ε² · Ry (eV)
    pub rydberg_eff: f64,
}

/// How the donor Bohr radius and binding energy are obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DonorModel {
    /// a₀ = a_H·ε/(m*/m₀), E1s = Ry·(m*/m₀)/ε².
    Hydrogenic,
    /// User-supplied values (the default configuration uses
    /// a₀ = 1.5 nm and E1s = 54.6 meV).
    Explicit { a0_m: f64, e1s_ev: f64 },
}

impl DonorModel {
    /// The explicit model with the a0_nm / E1s_meV values carried by `mat`.
    pub fn from_material(mat: &MaterialParameters) -> Self {
        DonorModel::Explicit {
            a0_m: mat.a0_nm * 1e-9,
            e1s_ev: mat.e1s_mev * 1e-3,
        }
    }
}

/// Convert piezoelectric stress moduli e_ij (C/m²) to the h_ij constants
/// (V/m) via h = e/(ε·ε₀).
pub fn piezo_from_stress_moduli(
    e33: f64,
    e31: f64,
    e15: f64,
    eps: f64,
) -> Result<(f64, f64, f64), MaterialError> {
    if !(eps > 0.0) {
        return Err(MaterialError::NonPositiveEps(eps));
    }
    let eps0 = PhysicalConstants::codata2018().eps0;
    let denom = eps * eps0;
    Ok((e33 / denom, e31 / denom, e15 / denom))
}

/// Derive donor-scale quantities. Pure and deterministic.
pub fn derive_donor(
    mat: &MaterialParameters,
    model: DonorModel,
) -> Result<DerivedDonorParameters, MaterialError> {
    let c = PhysicalConstants::codata2018();
    let rydberg_eff = c.rydberg * mat.m_star_ratio / (mat.eps_static * mat.eps_static);
    let (a0, e1s) = match model {
        DonorModel::Hydrogenic => {
            let a0 = c.bohr_radius_h * mat.eps_static / mat.m_star_ratio;
            (a0, rydberg_eff)
        }
        DonorModel::Explicit { a0_m, e1s_ev } => {
            if !(a0_m > 0.0) || !(e1s_ev > 0.0) {
                return Err(MaterialError::NonPositiveDonor {
                    a0: a0_m,
                    e1s: e1s_ev,
                });
            }
            (a0_m, e1s_ev)
        }
    };
    Ok(DerivedDonorParameters {
        a0,
        e1s,
        beta_pol: 4.5 * mat.eps_static * a0.powi(3),
        rydberg_eff,
    })
}

/// Parse a JSON material config, fill missing keys with defaults and
/// validate. Unknown keys are reported as warnings, not errors.
pub fn load_material_config(
    text: &str,
) -> Result<(MaterialParameters, Vec<String>), MaterialError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| MaterialError::Parse {
            path: "<root>".into(),
            message: e.to_string(),
        })?;
    let obj = match value {
        serde_json::Value::Object(map) => map,
        other => {
            return Err(MaterialError::Parse {
                path: "<root>".into(),
                message: format!("expected a JSON object, got {other}"),
            })
        }
    };

    const KNOWN: [&str; 14] = [
        "rho_kg_m3",
        "m_star_ratio",
        "eps_static",
        "alpha_so_meV_A",
        "g_e",
        "h33_V_m",
        "h31_V_m",
        "h15_V_m",
        "s_l_m_s",
        "s_t_m_s",
        "g_h_perp",
        "g_h_par",
        "a0_nm",
        "E1s_meV",
    ];
    let mut warnings = Vec::new();
    let mut params = MaterialParameters::default();
    for (key, val) in &obj {
        if !KNOWN.contains(&key.as_str()) {
            warnings.push(format!("unknown config key `{key}` ignored"));
            continue;
        }
        let num = val.as_f64().ok_or_else(|| MaterialError::Parse {
            path: key.clone(),
            message: format!("expected a number, got {val}"),
        })?;
        match key.as_str() {
            "rho_kg_m3" => params.rho_kg_m3 = num,
            "m_star_ratio" => params.m_star_ratio = num,
            "eps_static" => params.eps_static = num,
            "alpha_so_meV_A" => params.alpha_so_mev_a = num,
            "g_e" => params.g_e = num,
            "h33_V_m" => params.h33_v_m = num,
            "h31_V_m" => params.h31_v_m = num,
            "h15_V_m" => params.h15_v_m = num,
            "s_l_m_s" => params.s_l_m_s = num,
            "s_t_m_s" => params.s_t_m_s = num,
            "g_h_perp" => params.g_h_perp = num,
            "g_h_par" => params.g_h_par = num,
            "a0_nm" => params.a0_nm = num,
            "E1s_meV" => params.e1s_mev = num,
            _ => unreachable!(),
        }
    }
    params.validate()?;
    Ok((params, warnings))
}
