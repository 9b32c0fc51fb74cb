//! Physical constants, CODATA 2018.
//!
//! Energies are carried in eV throughout the crate; the golden-rule
//! prefactors convert to joules internally. Every conversion constant
//! lives here and nowhere else.

/// CODATA-2018 fundamental constants used by the rate and dynamics models.
///
/// All fields are plain `f64` and the struct is constructed once via
/// [`PhysicalConstants::codata2018`]; treat it as immutable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    /// Bohr magneton μ_B (eV/T)
    pub mu_b: f64,
    /// Boltzmann constant k_B (eV/K)
    pub k_b: f64,
    /// Reduced Planck constant ħ (eV·s)
    pub hbar_ev: f64,
    /// Reduced Planck constant ħ (J·s)
    pub hbar_j: f64,
    /// Elementary charge e (C); also the eV → J conversion factor
    pub e_charge: f64,
    /// Vacuum permittivity ε₀ (F/m)
    pub eps0: f64,
    /// Free-electron mass m₀ (kg)
    pub m0: f64,
    /// Hydrogen Rydberg energy (eV)
    pub rydberg: f64,
    /// Hydrogen Bohr radius (m)
    pub bohr_radius_h: f64,
}

/// Elementary charge (C), exact since the 2019 SI redefinition.
const E_CHARGE: f64 = 1.602176634e-19;
/// Reduced Planck constant (J·s), h = 6.62607015e-34 exact.
const HBAR_J: f64 = 1.054571817e-34;
/// Boltzmann constant (J/K), exact.
const K_B_J: f64 = 1.380649e-23;
/// Free-electron mass (kg).
const M0: f64 = 9.1093837015e-31;
/// Vacuum permittivity (F/m).
const EPS0: f64 = 8.8541878128e-12;
/// Hydrogen Bohr radius (m).
const BOHR_RADIUS_H: f64 = 5.29177210903e-11;

impl PhysicalConstants {
    /// The CODATA-2018 value set.
    ///
    /// The Rydberg energy is derived as ħ²/(2m₀a_H²) rather than tabulated
    /// separately, so the hydrogenic identity E·a²·2m/ħ² = 1 holds to
    /// machine precision; the derived value (13.6056931064 eV) agrees with
    /// the tabulated CODATA number within its published uncertainty.
    pub fn codata2018() -> Self {
        let mu_b_j = E_CHARGE * HBAR_J / (2.0 * M0);
        let rydberg_j = HBAR_J * HBAR_J / (2.0 * M0 * BOHR_RADIUS_H * BOHR_RADIUS_H);
        Self {
            mu_b: mu_b_j / E_CHARGE,
            k_b: K_B_J / E_CHARGE,
            hbar_ev: HBAR_J / E_CHARGE,
            hbar_j: HBAR_J,
            e_charge: E_CHARGE,
            eps0: EPS0,
            m0: M0,
            rydberg: rydberg_j / E_CHARGE,
            bohr_radius_h: BOHR_RADIUS_H,
        }
    }

    /// eV → J.
    pub fn ev_to_joule(&self, energy_ev: f64) -> f64 {
        energy_ev * self.e_charge
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::codata2018()
    }
}
