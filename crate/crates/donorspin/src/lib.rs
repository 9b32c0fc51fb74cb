//! Donor-bound electron spin relaxation in wurtzite ZnO.
//!
//! The crate computes the longitudinal spin relaxation time T₁ of shallow
//! donors from spin–orbit admixture and piezoelectric electron–phonon
//! coupling, cross-checks the closed-form rates against a brute-force
//! golden-rule quadrature over phonon modes, simulates the optical-pumping
//! and T₁-recovery measurement protocols on the four-level donor /
//! donor-bound-exciton system with photon shot noise, and fits the
//! resulting data with the standard model set (exponential recovery,
//! double exponential, power law, phonon-occupation temperature model,
//! linear Zeeman, spectral line profiles).
//!
//! Modules:
//! * [`constants`] / [`material`] — CODATA constants, ZnO parameters with
//!   validation and config I/O, derived donor scales.
//! * [`relaxation`] — closed-form Γ↓↑, Λ coefficient, T₁(B, T), sweeps.
//! * [`quadrature`] / [`oracle`] — spherical quadrature and the
//!   golden-rule cross-check of the closed forms.
//! * [`dynamics`] — rate-equation simulator: optical pumping, T₁ recovery,
//!   pump–probe, PL spectra, PLE scans, Poisson photon statistics.
//! * [`fitting`] — damped Gauss–Newton core plus the named model fits.
//! * [`output`] / [`plot`] — CSV + run-manifest writers and a minimal SVG
//!   plotter used by the CLI.

pub mod cli;
pub mod constants;
pub mod dynamics;
pub mod fitting;
pub mod material;
pub mod oracle;
pub mod output;
pub mod plot;
pub mod profiles;
pub mod quadrature;
pub mod relaxation;

pub use constants::PhysicalConstants;
pub use material::{
    derive_donor, load_material_config, piezo_from_stress_moduli, DerivedDonorParameters,
    DonorModel, MaterialParameters,
};
pub use relaxation::{
    energy_scales, lambda_coefficient, spin_flip_rate, sweep_field, t1, EnergyScales, Geometry,
    RatePoint,
};
