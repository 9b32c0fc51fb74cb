//! The four-level donor / donor-bound-exciton system.
//!
//! States (indices fixed across the crate):
//! 0 `DOWN`  — D⁰ electron |↓⟩
//! 1 `UP`    — D⁰ electron |↑⟩
//! 2 `X_DOWN` — D⁰X with hole ⇓ (electrons in a singlet)
//! 3 `X_UP`   — D⁰X with hole ⇑
//!
//! In the Voigt geometry the four optical transitions are
//! H↓ = |↓⟩↔|⇓⟩, H↑ = |↑⟩↔|⇑⟩, V↓ = |↓⟩↔|⇑⟩, V↑ = |↑⟩↔|⇓⟩.
//! In the Faraday geometry the circular transitions are σ⁺ = |↓⟩↔|⇑⟩ and
//! σ⁻ = |↑⟩↔|⇓⟩; the two z-polarized transitions (|↓⟩↔|⇓⟩, |↑⟩↔|⇑⟩) point
//! along the optical axis, are ~50× weaker and are not detected.

use serde::{Deserialize, Serialize};

use super::expm::M4;
use super::DynamicsError;
use crate::constants::PhysicalConstants;
use crate::material::{DerivedDonorParameters, MaterialParameters};
use crate::relaxation::{phonon_occupation, spin_flip_rate, thermal_rates, Geometry};

pub const N_STATES: usize = 4;
pub const DOWN: usize = 0;
pub const UP: usize = 1;
pub const X_DOWN: usize = 2;
pub const X_UP: usize = 3;

/// Planck constant × 1 GHz in eV; default homogeneous optical linewidth.
pub const H_TIMES_GHZ_EV: f64 = 4.135667696e-6;

/// Optical transition labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transition {
    HDown,
    HUp,
    VDown,
    VUp,
    SigmaPlus,
    SigmaMinus,
    ZDown,
    ZUp,
}

impl Transition {
    /// (ground state index, excited state index).
    pub fn endpoints(self) -> (usize, usize) {
        match self {
            Transition::HDown | Transition::ZDown => (DOWN, X_DOWN),
            Transition::HUp | Transition::ZUp => (UP, X_UP),
            Transition::VDown | Transition::SigmaPlus => (DOWN, X_UP),
            Transition::VUp | Transition::SigmaMinus => (UP, X_DOWN),
        }
    }

    pub fn allowed_in(self, geometry: Geometry) -> bool {
        match self {
            Transition::HDown | Transition::HUp | Transition::VDown | Transition::VUp => {
                geometry == Geometry::Voigt
            }
            Transition::SigmaPlus
            | Transition::SigmaMinus
            | Transition::ZDown
            | Transition::ZUp => geometry == Geometry::Faraday,
        }
    }

    /// The emission line for a decay from `excited` into `ground`.
    pub fn decay_channel(excited: usize, ground: usize, geometry: Geometry) -> Transition {
        match (geometry, excited, ground) {
            (Geometry::Voigt, X_DOWN, DOWN) => Transition::HDown,
            (Geometry::Voigt, X_DOWN, UP) => Transition::VUp,
            (Geometry::Voigt, X_UP, UP) => Transition::HUp,
            (Geometry::Voigt, X_UP, DOWN) => Transition::VDown,
            (Geometry::Faraday, X_UP, DOWN) => Transition::SigmaPlus,
            (Geometry::Faraday, X_UP, UP) => Transition::ZUp,
            (Geometry::Faraday, X_DOWN, UP) => Transition::SigmaMinus,
            (Geometry::Faraday, X_DOWN, DOWN) => Transition::ZDown,
            _ => unreachable!("not a decay channel: {excited} -> {ground}"),
        }
    }

    /// Transition energy relative to the zero-field line center, in eV.
    ///
    /// The electron contributes ±g_e/2·μ_B·B and the hole (of the relevant
    /// orientation) ∓g_h/2·μ_B·B, so that the σ⁺/σ⁻ splitting is
    /// (g_e − g_h,∥)·μ_B·B and the H↓/V↓ splitting is g_h,⊥·μ_B·B with H↓
    /// on the low-energy side for the default g-factors.
    pub fn energy_offset_ev(self, mat: &MaterialParameters, b: f64) -> f64 {
        let mu_b = PhysicalConstants::codata2018().mu_b;
        let ge = mat.g_e;
        let (gh, sign) = match self {
            Transition::HDown => (mat.g_h_perp, 1.0),
            Transition::HUp => (mat.g_h_perp, -1.0),
            Transition::VDown => (-mat.g_h_perp, 1.0),
            Transition::VUp => (-mat.g_h_perp, -1.0),
            Transition::SigmaPlus => (mat.g_h_par, 1.0),
            Transition::SigmaMinus => (mat.g_h_par, -1.0),
            Transition::ZDown => (-mat.g_h_par, 1.0),
            Transition::ZUp => (-mat.g_h_par, -1.0),
        };
        sign * 0.5 * (ge - gh) * mu_b * b
    }
}

/// Zeeman splittings of the ground and excited doublets (eV).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZeemanEnergies {
    pub electron_ev: f64,
    pub hole_ev: f64,
}

/// Radiative and branching configuration of the excited states.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpticsConfig {
    /// D⁰X radiative lifetime (s)
    pub radiative_lifetime_s: f64,
    /// σ:z intensity ratio of the Faraday decay channels
    pub z_branch_suppression: f64,
    /// Fraction of Voigt decays going into the H channel
    pub voigt_h_fraction: f64,
    /// Homogeneous optical linewidth, Lorentzian FWHM (eV)
    pub homogeneous_fwhm_ev: f64,
}

impl Default for OpticsConfig {
    fn default() -> Self {
        Self {
            radiative_lifetime_s: 1e-9,
            z_branch_suppression: 50.0,
            voigt_h_fraction: 0.5,
            homogeneous_fwhm_ev: H_TIMES_GHZ_EV,
        }
    }
}

/// The four-level rate-equation system.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSystem {
    pub geometry: Geometry,
    /// Populations (down, up, X⇓, X⇑); starts at the ground-state thermal
    /// equilibrium
    pub populations: [f64; N_STATES],
    /// Total D⁰X decay rate (1/s)
    pub radiative_rate: f64,
    /// branching[excited − 2][ground]: decay fractions of X⇓ and X⇑ into
    /// |↓⟩ and |↑⟩; each row sums to 1
    pub branching: [[f64; 2]; 2],
    /// Ground-state flip rate ↑ → ↓, i.e. Γ↓↑(T) = Γ↓↑(N_ph + 1) (1/s)
    pub spin_flip_down_up: f64,
    /// Ground-state flip rate ↓ → ↑, i.e. Γ↑↓(T) = Γ↓↑·N_ph (1/s)
    pub spin_flip_up_down: f64,
    /// Extra phenomenological relaxation added symmetrically to both flip
    /// directions (1/s); 0 unless injected
    pub extra_relaxation_rate: f64,
    pub zeeman: ZeemanEnergies,
    /// Homogeneous optical linewidth, Lorentzian FWHM (eV)
    pub homogeneous_fwhm_ev: f64,
}

impl LevelSystem {
    /// The generator matrix G of dp/dt = G·p for the given optical drives
    /// (transition, excitation rate 1/s). Columns sum to zero exactly.
    pub fn generator(&self, drives: &[(Transition, f64)]) -> M4 {
        let mut g = M4::zeros();
        let mut add = |from: usize, to: usize, rate: f64| {
            g[(to, from)] += rate;
            g[(from, from)] -= rate;
        };
        // radiative decay with branching
        for (row, excited) in [(0usize, X_DOWN), (1usize, X_UP)] {
            for (ground, fraction) in [(DOWN, self.branching[row][0]), (UP, self.branching[row][1])]
            {
                add(excited, ground, self.radiative_rate * fraction);
            }
        }
        // thermal ground-state spin flips
        add(UP, DOWN, self.spin_flip_down_up + 0.5 * self.extra_relaxation_rate);
        add(DOWN, UP, self.spin_flip_up_down + 0.5 * self.extra_relaxation_rate);
        // incoherent optical pumping (absorption only)
        for &(transition, rate) in drives {
            let (ground, excited) = transition.endpoints();
            add(ground, excited, rate);
        }
        g
    }

    /// Collected emission rate per state (1/s) for a detection channel
    /// selection; only excited states emit.
    pub fn flux_weights(&self, detection: &super::Detection) -> [f64; N_STATES] {
        let mut w = [0.0; N_STATES];
        for (row, excited) in [(0usize, X_DOWN), (1usize, X_UP)] {
            for (col, ground) in [(0usize, DOWN), (1usize, UP)] {
                let channel = Transition::decay_channel(excited, ground, self.geometry);
                if detection.collects(channel) {
                    w[excited] += self.radiative_rate * self.branching[row][col];
                }
            }
        }
        w
    }

    /// Boltzmann factor e^(−γ) between the two ground states.
    pub fn equilibrium_ratio(&self) -> f64 {
        if self.spin_flip_down_up == 0.0 {
            return 1.0;
        }
        self.spin_flip_up_down / self.spin_flip_down_up
    }

    /// Total spin relaxation rate 1/T₁ = Γ↓↑(T) + Γ↑↓(T) of the ground
    /// doublet (1/s).
    pub fn total_spin_rate(&self) -> f64 {
        self.spin_flip_down_up + self.spin_flip_up_down + self.extra_relaxation_rate
    }

    /// Rescale the spin-flip rates to a target T₁, preserving the
    /// Boltzmann ratio between the two directions.
    pub fn with_total_t1(mut self, t1_s: f64) -> Self {
        let total = 1.0 / t1_s;
        let ratio = self.equilibrium_ratio();
        self.spin_flip_down_up = total / (1.0 + ratio);
        self.spin_flip_up_down = total * ratio / (1.0 + ratio);
        self
    }
}

/// Build the level system at (geometry, B, T) with spin-flip rates from the
/// closed-form relaxation theory and geometry-dependent branching.
pub fn build_level_system(
    geometry: Geometry,
    b: f64,
    temperature: f64,
    mat: &MaterialParameters,
    derived: &DerivedDonorParameters,
    optics: &OpticsConfig,
) -> Result<LevelSystem, DynamicsError> {
    if !(optics.radiative_lifetime_s > 0.0) {
        return Err(DynamicsError::InvalidOptics(format!(
            "radiative lifetime must be positive (got {})",
            optics.radiative_lifetime_s
        )));
    }
    if !(optics.z_branch_suppression > 0.0) {
        return Err(DynamicsError::InvalidOptics(format!(
            "z-branch suppression must be positive (got {})",
            optics.z_branch_suppression
        )));
    }
    if !(0.0..=1.0).contains(&optics.voigt_h_fraction) {
        return Err(DynamicsError::InvalidOptics(format!(
            "Voigt H fraction must lie in [0, 1] (got {})",
            optics.voigt_h_fraction
        )));
    }
    if b < 0.0 || temperature < 0.0 {
        return Err(DynamicsError::InvalidArgument(
            "field and temperature must be nonnegative".into(),
        ));
    }

    let branching = match geometry {
        Geometry::Voigt => {
            let h = optics.voigt_h_fraction;
            // X⇓ → (↓ via H↓, ↑ via V↑); X⇑ → (↓ via V↓, ↑ via H↑)
            [[h, 1.0 - h], [1.0 - h, h]]
        }
        Geometry::Faraday => {
            let s = optics.z_branch_suppression;
            let strong = s / (s + 1.0);
            let weak = 1.0 / (s + 1.0);
            // X⇓ → (↓ via z, ↑ via σ⁻); X⇑ → (↓ via σ⁺, ↑ via z)
            [[weak, strong], [strong, weak]]
        }
    };

    let gamma = spin_flip_rate(mat, derived, b, geometry);
    let (down_from_up, up_from_down) = if gamma > 0.0 && b > 0.0 {
        thermal_rates(gamma, phonon_occupation(b, temperature, mat.g_e))
    } else {
        (0.0, 0.0)
    };

    let c = PhysicalConstants::codata2018();
    let electron_ev = mat.g_e.abs() * c.mu_b * b;
    let gh = match geometry {
        Geometry::Faraday => mat.g_h_par,
        Geometry::Voigt => mat.g_h_perp,
    };
    let hole_ev = gh.abs() * c.mu_b * b;

    // ground-state thermal equilibrium: p↑/p↓ = e^(−γ)
    let ratio = if down_from_up > 0.0 {
        up_from_down / down_from_up
    } else {
        1.0
    };
    let p_down = 1.0 / (1.0 + ratio);

    Ok(LevelSystem {
        geometry,
        populations: [p_down, 1.0 - p_down, 0.0, 0.0],
        radiative_rate: 1.0 / optics.radiative_lifetime_s,
        branching,
        spin_flip_down_up: down_from_up,
        spin_flip_up_down: up_from_down,
        extra_relaxation_rate: 0.0,
        zeeman: ZeemanEnergies { electron_ev, hole_ev },
        homogeneous_fwhm_ev: optics.homogeneous_fwhm_ev,
    })
}
