//! Brute-force golden-rule evaluation of the spin-flip rate.
//!
//! Instead of the closed-form angular averages behind the analytic rates,
//! this module sums the squared spin-flip matrix element over the three
//! acoustic branches and integrates over phonon propagation directions
//! with an explicit spherical quadrature:
//!
//! Γ↓↑ = 1/(8π²ρħ) · Σ_modes (q³/s²) ∮ |M̃(ξ, e)|² dΩ
//!
//! where q = Δ₁/(ħs) is fixed per branch by energy conservation (the
//! single-phonon resonance is exact in the isotropic elastic model, so the
//! energy δ-function is resolved analytically rather than broadened) and
//! M̃ is the matrix element for a unit-amplitude phonon field.
//!
//! The piezoelectric coupling enters through the direction projection
//! A = Σ β_ijk ξ_i ξ_j e_k. The closed-form rate coefficient treats the
//! h₃₁/h₃₃/h₁₅ channels as independent (its quadratic form carries no
//! cross products), so the golden-rule sum here accumulates the three
//! channel projections incoherently: |A₃₁|² + |A₃₃|² + |A₁₅|². A fully
//! coherent |A₃₁+A₃₃+A₁₅|² would shift the Table-I rate coefficient by
//! about 10%.
//!
//! The m*β/ħ² combination in the matrix elements is evaluated as
//! 9e²/(8E₁s²) through the hydrogenic identities a₀ = ħ²ε/(m*e²),
//! E₁s = e²/(2εa₀), so the oracle and the analytic rates share a single
//! E₁s and cannot disagree through mutually inconsistent (a₀, m*, ε, E₁s)
//! inputs.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::constants::PhysicalConstants;
use crate::material::{DerivedDonorParameters, MaterialParameters};
use crate::quadrature::QuadratureRule;
use crate::relaxation::{energy_scales, spin_flip_rate, Geometry};

/// Minimum accepted polar quadrature order for rate evaluation.
pub const MIN_QUAD_ORDER: usize = 6;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("vector must have unit norm within 1e-6 (|v| = {norm})")]
    NonUnitVector { norm: f64 },
    #[error("quadrature order {order} is below the minimum {min}")]
    QuadOrderBelowMinimum { order: usize, min: usize },
    #[error("field must be positive (got {0} T)")]
    NonPositiveField(f64),
}

/// Piezoelectric tensor of a wurtzite crystal, stored as the three
/// independent constants and expanded on demand to the full β_ijk with
/// nonzero components β_zxx = β_zyy = h₃₁, β_zzz = h₃₃,
/// β_xxz = β_xzx = β_yyz = β_yzy = h₁₅ (x, y, z = 0, 1, 2; symmetric in
/// the last two, strain, indices).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiezoTensor {
    pub h31: f64,
    pub h33: f64,
    pub h15: f64,
}

impl PiezoTensor {
    pub fn from_material(mat: &MaterialParameters) -> Self {
        Self {
            h31: mat.h31_v_m,
            h33: mat.h33_v_m,
            h15: mat.h15_v_m,
        }
    }

    /// Full tensor component β_ijk (V/m).
    pub fn component(&self, i: usize, j: usize, k: usize) -> f64 {
        match (i, j, k) {
            (2, 0, 0) | (2, 1, 1) => self.h31,
            (2, 2, 2) => self.h33,
            (0, 0, 2) | (0, 2, 0) | (1, 1, 2) | (1, 2, 1) => self.h15,
            _ => 0.0,
        }
    }

    /// The three single-constant channels (h₃₁-only, h₃₃-only, h₁₅-only).
    pub fn channels(&self) -> [PiezoTensor; 3] {
        [
            PiezoTensor { h31: self.h31, h33: 0.0, h15: 0.0 },
            PiezoTensor { h31: 0.0, h33: self.h33, h15: 0.0 },
            PiezoTensor { h31: 0.0, h33: 0.0, h15: self.h15 },
        ]
    }
}

/// Acoustic branch label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhononBranch {
    Longitudinal,
    Transverse1,
    Transverse2,
}

/// One phonon mode: propagation direction, polarization and sound speed.
#[derive(Debug, Clone, Copy)]
pub struct PhononMode {
    pub branch: PhononBranch,
    /// Unit propagation direction ξ
    pub xi: Vector3<f64>,
    /// Unit polarization vector (equals ξ for the longitudinal branch)
    pub e_pol: Vector3<f64>,
    /// Sound velocity (m/s)
    pub speed: f64,
}

/// Deterministic orthonormal transverse pair: Gram–Schmidt of the
/// coordinate axis least aligned with ξ, then the cross product.
pub fn transverse_pair(xi: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let abs = [xi.x.abs(), xi.y.abs(), xi.z.abs()];
    let least = (0..3).min_by(|&a, &b| abs[a].partial_cmp(&abs[b]).unwrap()).unwrap();
    let mut axis = Vector3::zeros();
    axis[least] = 1.0;
    let t1 = (axis - xi * axis.dot(xi)).normalize();
    let t2 = xi.cross(&t1);
    (t1, t2)
}

/// The three modes propagating along ξ.
pub fn phonon_modes(xi: &Vector3<f64>, s_l: f64, s_t: f64) -> [PhononMode; 3] {
    let (t1, t2) = transverse_pair(xi);
    [
        PhononMode { branch: PhononBranch::Longitudinal, xi: *xi, e_pol: *xi, speed: s_l },
        PhononMode { branch: PhononBranch::Transverse1, xi: *xi, e_pol: t1, speed: s_t },
        PhononMode { branch: PhononBranch::Transverse2, xi: *xi, e_pol: t2, speed: s_t },
    ]
}

fn check_unit(v: &Vector3<f64>) -> Result<(), OracleError> {
    let norm = v.norm();
    if (norm - 1.0).abs() > 1e-6 {
        return Err(OracleError::NonUnitVector { norm });
    }
    Ok(())
}

/// Direction projection A = Σ_ijk β_ijk ξ_i ξ_j e_k (V/m).
pub fn piezo_projection(
    tensor: &PiezoTensor,
    xi: &Vector3<f64>,
    e_pol: &Vector3<f64>,
) -> Result<f64, OracleError> {
    check_unit(xi)?;
    check_unit(e_pol)?;
    Ok(piezo_projection_unchecked(tensor, xi, e_pol))
}

fn piezo_projection_unchecked(
    tensor: &PiezoTensor,
    xi: &Vector3<f64>,
    e_pol: &Vector3<f64>,
) -> f64 {
    // expand the nonzero pattern directly
    tensor.h31 * xi.z * (xi.x * e_pol.x + xi.y * e_pol.y)
        + tensor.h33 * xi.z * xi.z * e_pol.z
        + tensor.h15
            * ((xi.x * xi.x + xi.y * xi.y) * e_pol.z
                + xi.z * (xi.x * e_pol.x + xi.y * e_pol.y))
}

/// Sum of the squared channel projections for one mode (V²/m²).
fn channel_projection_sq(tensor: &PiezoTensor, xi: &Vector3<f64>, e_pol: &Vector3<f64>) -> f64 {
    tensor
        .channels()
        .iter()
        .map(|c| piezo_projection_unchecked(c, xi, e_pol).powi(2))
        .sum()
}

/// α·(m*β/ħ²)/e with m*β/ħ² = 9e²/(8E₁s²); units m/V.
fn coupling_factor(mat: &MaterialParameters, derived: &DerivedDonorParameters) -> f64 {
    let c = PhysicalConstants::codata2018();
    let alpha_j_m = mat.alpha_so_ev_m() * c.e_charge;
    let e1s_j = c.ev_to_joule(derived.e1s);
    9.0 * alpha_j_m * c.e_charge / (8.0 * e1s_j * e1s_j)
}

/// Squared spin-flip matrix element for a unit-amplitude phonon field, in
/// eV². The per-phonon amplitude q·√(ħ/(2ρVω)) is factored out; what
/// remains is the geometry prefactor (Δ₁ or Δ₂), the spin-orbit/donor
/// coupling, the field direction factor (ξ_x² along B in the transverse
/// geometry, ξ_x² + ξ_y² in the longitudinal one) and the channel-summed
/// piezo projection.
pub fn matrix_element_sq(
    geometry: Geometry,
    mode: &PhononMode,
    b: f64,
    mat: &MaterialParameters,
    derived: &DerivedDonorParameters,
) -> Result<f64, OracleError> {
    if b <= 0.0 {
        return Err(OracleError::NonPositiveField(b));
    }
    check_unit(&mode.xi)?;
    check_unit(&mode.e_pol)?;
    let scales = energy_scales(mat, derived, b);
    let (prefactor_ev, xi_factor) = match geometry {
        // (2gμ_B·B − ħω_c)²(ℰ_x² + ℰ_y²)/4 = Δ₂²·(ξ_x² + ξ_y²)·|ℰ|²
        Geometry::Faraday => (scales.delta2, mode.xi.x * mode.xi.x + mode.xi.y * mode.xi.y),
        // (gμ_B·B)²·ℰ_x²
        Geometry::Voigt => (scales.delta1, mode.xi.x * mode.xi.x),
    };
    let tensor = PiezoTensor::from_material(mat);
    let coupling = coupling_factor(mat, derived); // m/V
    let a_sq = channel_projection_sq(&tensor, &mode.xi, &mode.e_pol); // V²/m²
    Ok(prefactor_ev * prefactor_ev * coupling * coupling * a_sq * xi_factor)
}

/// Golden-rule rate decomposed into (longitudinal, transverse) partial
/// rates (1/s each).
pub fn golden_rule_branch_rates(
    geometry: Geometry,
    b: f64,
    mat: &MaterialParameters,
    derived: &DerivedDonorParameters,
    rule: &QuadratureRule,
) -> Result<(f64, f64), OracleError> {
    if rule.order < MIN_QUAD_ORDER {
        return Err(OracleError::QuadOrderBelowMinimum {
            order: rule.order,
            min: MIN_QUAD_ORDER,
        });
    }
    if b < 0.0 {
        return Err(OracleError::NonPositiveField(b));
    }
    if b == 0.0 {
        return Ok((0.0, 0.0));
    }
    let c = PhysicalConstants::codata2018();
    let scales = energy_scales(mat, derived, b);
    let delta1_j = c.ev_to_joule(scales.delta1);
    // Γ = 1/(8π²ρħ)·Σ_modes (q³/s²)·∮ |M̃|² dΩ, with |M̃|² converted eV² → J²
    let global = c.e_charge * c.e_charge
        / (8.0 * std::f64::consts::PI.powi(2) * mat.rho_kg_m3 * c.hbar_j);
    let mut partial = [0.0_f64; 2];
    for (slot, speed) in [(0usize, mat.s_l_m_s), (1usize, mat.s_t_m_s)] {
        let q = delta1_j / (c.hbar_j * speed);
        let kinematic = q.powi(3) / (speed * speed);
        let angular = rule.integrate(|xi| {
            phonon_modes(xi, mat.s_l_m_s, mat.s_t_m_s)
                .iter()
                .filter(|m| branch_slot(m.branch) == slot)
                .map(|m| {
                    matrix_element_sq(geometry, m, b, mat, derived)
                        .expect("unit vectors by construction")
                })
                .sum::<f64>()
        });
        partial[slot] = global * kinematic * angular;
    }
    Ok((partial[0], partial[1]))
}

fn branch_slot(branch: PhononBranch) -> usize {
    match branch {
        PhononBranch::Longitudinal => 0,
        PhononBranch::Transverse1 | PhononBranch::Transverse2 => 1,
    }
}

/// Total golden-rule rate Γ↓↑ (1/s) by spherical quadrature.
pub fn golden_rule_rate(
    geometry: Geometry,
    b: f64,
    mat: &MaterialParameters,
    derived: &DerivedDonorParameters,
    rule: &QuadratureRule,
) -> Result<f64, OracleError> {
    let (l, t) = golden_rule_branch_rates(geometry, b, mat, derived, rule)?;
    Ok(l + t)
}

/// (e₁⊗e₁ + e₂⊗e₂)/2 for the deterministic transverse pair at ξ; equals
/// the projector (δ_ij − ξ_iξ_j)/2 for any orthonormal pair choice.
pub fn transverse_average_check(xi: &Vector3<f64>) -> Matrix3<f64> {
    let (t1, t2) = transverse_pair(xi);
    (t1 * t1.transpose() + t2 * t2.transpose()) / 2.0
}

/// One row of an oracle-vs-analytic comparison.
#[derive(Debug, Clone, Copy)]
pub struct ValidationPoint {
    pub b_field: f64,
    pub geometry: Geometry,
    pub gamma_oracle: f64,
    pub gamma_analytic: f64,
    pub rel_err: f64,
}

/// Comparison report over a field grid.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub points: Vec<ValidationPoint>,
    pub max_rel_err: f64,
}

/// Compare the quadrature rate against the closed-form rate on a grid.
pub fn validate_against_analytic(
    geometry: Geometry,
    b_grid: &[f64],
    mat: &MaterialParameters,
    derived: &DerivedDonorParameters,
    rule: &QuadratureRule,
) -> Result<ValidationReport, OracleError> {
    let mut points = Vec::with_capacity(b_grid.len());
    let mut max_rel_err = 0.0_f64;
    for &b in b_grid {
        if b <= 0.0 {
            return Err(OracleError::NonPositiveField(b));
        }
        let gamma_oracle = golden_rule_rate(geometry, b, mat, derived, rule)?;
        let gamma_analytic = spin_flip_rate(mat, derived, b, geometry);
        let rel_err = (gamma_oracle - gamma_analytic).abs() / gamma_analytic;
        max_rel_err = max_rel_err.max(rel_err);
        points.push(ValidationPoint {
            b_field: b,
            geometry,
            gamma_oracle,
            gamma_analytic,
            rel_err,
        });
    }
    Ok(ValidationReport { points, max_rel_err })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::material::{derive_donor, DonorModel};
    use crate::relaxation::lambda_branch_terms;
    use approx::assert_relative_eq;

    fn defaults() -> (MaterialParameters, DerivedDonorParameters) {
        let mat = MaterialParameters::default();
        let derived = derive_donor(&mat, DonorModel::from_material(&mat)).unwrap();
        (mat, derived)
    }

    fn xhat() -> Vector3<f64> {
        Vector3::x()
    }
    fn zhat() -> Vector3<f64> {
        Vector3::z()
    }

    #[test]
    fn projection_axis_cases() {
        let (mat, _) = defaults();
        let t = PiezoTensor::from_material(&mat);
        // ξ = ẑ, e = ẑ: only β_zzz survives
        assert_relative_eq!(
            piezo_projection(&t, &zhat(), &zhat()).unwrap(),
            t.h33,
            max_relative = 1e-14
        );
        // ξ = x̂, e = x̂: no contributing component
        assert_eq!(piezo_projection(&t, &xhat(), &xhat()).unwrap(), 0.0);
        // ξ = x̂, e = ẑ: the β_xxz (= h15) component; equal to h31 for the
        // default parameter set where h31 = h15
        let v = piezo_projection(&t, &xhat(), &zhat()).unwrap();
        assert_relative_eq!(v, t.h31, max_relative = 1e-14);
        assert_relative_eq!(v, t.h15, max_relative = 1e-14);
        // with distinct constants the contributing component is h15
        let distinct = PiezoTensor { h31: 2.0, h33: 5.0, h15: 0.25 };
        assert_relative_eq!(
            piezo_projection(&distinct, &xhat(), &zhat()).unwrap(),
            0.25,
            max_relative = 1e-14
        );
    }

    #[test]
    fn projection_rejects_non_unit_vectors() {
        let (mat, _) = defaults();
        let t = PiezoTensor::from_material(&mat);
        let err = piezo_projection(&t, &(zhat() * 1.1), &zhat());
        assert!(err.is_err());
    }

    #[test]
    fn tensor_full_expansion_matches_pattern() {
        let t = PiezoTensor { h31: 1.0, h33: 2.0, h15: 3.0 };
        let mut nonzero = 0;
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    let v = t.component(i, j, k);
                    // symmetric in the strain pair (last two indices)
                    assert_eq!(v, t.component(i, k, j));
                    if v != 0.0 {
                        nonzero += 1;
                    }
                }
            }
        }
        assert_eq!(nonzero, 7);
        assert_eq!(t.component(2, 0, 0), 1.0);
        assert_eq!(t.component(2, 2, 2), 2.0);
        assert_eq!(t.component(0, 2, 0), 3.0);
    }

    #[test]
    fn mode_construction_invariants() {
        let (mat, _) = defaults();
        let dirs = [
            Vector3::new(0.3, -0.4, 0.5).normalize(),
            Vector3::new(-0.8, 0.1, 0.2).normalize(),
            zhat(),
            xhat(),
        ];
        for xi in dirs {
            let modes = phonon_modes(&xi, mat.s_l_m_s, mat.s_t_m_s);
            for m in &modes {
                assert!((m.xi.norm() - 1.0).abs() < 1e-12);
                assert!((m.e_pol.norm() - 1.0).abs() < 1e-12);
            }
            assert_eq!(modes[0].e_pol, xi);
            assert!(modes[1].e_pol.dot(&xi).abs() < 1e-12);
            assert!(modes[2].e_pol.dot(&xi).abs() < 1e-12);
            assert!(modes[1].e_pol.dot(&modes[2].e_pol).abs() < 1e-12);
        }
    }

    #[test]
    fn transverse_projector_identity() {
        let dirs = [
            zhat(),
            Vector3::new(0.6, -0.3, 0.9).normalize(),
            Vector3::new(-0.2, 0.95, 0.1).normalize(),
        ];
        for xi in dirs {
            let avg = transverse_average_check(&xi);
            let expected = (Matrix3::identity() - xi * xi.transpose()) / 2.0;
            assert!((avg - expected).norm() < 1e-14);
            // projector properties: trace 1, ξ in the null space
            assert_relative_eq!(avg.trace(), 1.0, max_relative = 1e-13);
            assert!((avg * xi).norm() < 1e-14);
        }
        // ẑ case explicitly: diag(1/2, 1/2, 0)
        let avg = transverse_average_check(&zhat());
        assert_relative_eq!(avg[(0, 0)], 0.5, max_relative = 1e-14);
        assert_relative_eq!(avg[(1, 1)], 0.5, max_relative = 1e-14);
        assert!(avg[(2, 2)].abs() < 1e-14);
    }

    #[test]
    fn pair_choice_does_not_matter() {
        // rotating the transverse pair about ξ leaves the mode-summed
        // matrix element unchanged
        let (mat, derived) = defaults();
        let xi = Vector3::new(0.48, -0.6, 0.64).normalize();
        let (t1, t2) = transverse_pair(&xi);
        let base: f64 = [t1, t2]
            .iter()
            .map(|e| {
                let m = PhononMode {
                    branch: PhononBranch::Transverse1,
                    xi,
                    e_pol: *e,
                    speed: mat.s_t_m_s,
                };
                matrix_element_sq(Geometry::Voigt, &m, 5.0, &mat, &derived).unwrap()
            })
            .sum();
        for k in 1..8 {
            let angle = k as f64 * 0.77;
            let r1 = t1 * angle.cos() + t2 * angle.sin();
            let r2 = -t1 * angle.sin() + t2 * angle.cos();
            let rotated: f64 = [r1, r2]
                .iter()
                .map(|e| {
                    let m = PhononMode {
                        branch: PhononBranch::Transverse1,
                        xi,
                        e_pol: *e,
                        speed: mat.s_t_m_s,
                    };
                    matrix_element_sq(Geometry::Voigt, &m, 5.0, &mat, &derived).unwrap()
                })
                .sum();
            assert_relative_eq!(rotated, base, max_relative = 1e-10);
        }
    }

    #[test]
    fn matrix_element_zero_cases() {
        let (mat, derived) = defaults();
        // phonon field along B (x) has no transverse-geometry coupling when
        // ξ_x = 0
        let xi = zhat();
        let mode = PhononMode {
            branch: PhononBranch::Longitudinal,
            xi,
            e_pol: xi,
            speed: mat.s_l_m_s,
        };
        assert_eq!(
            matrix_element_sq(Geometry::Voigt, &mode, 5.0, &mat, &derived).unwrap(),
            0.0
        );

        // Faraday prefactor 2gμ_B·B − ħω_c vanishes when g = m₀/m*
        let tuned = MaterialParameters {
            m_star_ratio: 0.5,
            g_e: 2.0,
            ..MaterialParameters::default()
        };
        let derived_tuned = derive_donor(&tuned, DonorModel::from_material(&tuned)).unwrap();
        let xi = Vector3::new(0.6, 0.0, 0.8);
        let mode = PhononMode {
            branch: PhononBranch::Longitudinal,
            xi,
            e_pol: xi,
            speed: tuned.s_l_m_s,
        };
        let m2 = matrix_element_sq(Geometry::Faraday, &mode, 3.0, &tuned, &derived_tuned).unwrap();
        assert!(m2.abs() < 1e-40, "prefactor should vanish, got {m2}");
        // and does NOT vanish at m* = m₀, g = 2
        let untuned = MaterialParameters {
            m_star_ratio: 1.0,
            g_e: 2.0,
            ..MaterialParameters::default()
        };
        let derived_u = derive_donor(&untuned, DonorModel::from_material(&untuned)).unwrap();
        let m2 = matrix_element_sq(Geometry::Faraday, &mode, 3.0, &untuned, &derived_u).unwrap();
        assert!(m2 > 0.0);
    }

    #[test]
    fn angular_averaged_geometry_ratio_is_two() {
        let (mat, derived) = defaults();
        let rule = QuadratureRule::product(16).unwrap();
        let b = 4.0;
        let mut sums = [0.0_f64; 2];
        for (idx, geometry) in [Geometry::Faraday, Geometry::Voigt].iter().enumerate() {
            sums[idx] = rule.integrate(|xi| {
                phonon_modes(xi, mat.s_l_m_s, mat.s_t_m_s)
                    .iter()
                    .map(|m| matrix_element_sq(*geometry, m, b, &mat, &derived).unwrap())
                    .sum::<f64>()
            });
        }
        // 2·(Δ₂/Δ₁)² = 2 for the default g and m*
        assert_relative_eq!(sums[0] / sums[1], 2.0, max_relative = 1e-12);
    }

    #[test]
    fn oracle_matches_analytic_rate() {
        let (mat, derived) = defaults();
        let rule = QuadratureRule::default_rule();
        for geometry in [Geometry::Voigt, Geometry::Faraday] {
            let report =
                validate_against_analytic(geometry, &[1.0, 3.0, 5.0, 7.0], &mat, &derived, &rule)
                    .unwrap();
            assert!(
                report.max_rel_err < 5e-3,
                "{geometry}: max rel err {}",
                report.max_rel_err
            );
        }
    }

    #[test]
    fn oracle_geometry_ratio_on_grid() {
        let (mat, derived) = defaults();
        let rule = QuadratureRule::product(24).unwrap();
        for b in [1.0, 3.0, 5.0, 7.0] {
            let f = golden_rule_rate(Geometry::Faraday, b, &mat, &derived, &rule).unwrap();
            let v = golden_rule_rate(Geometry::Voigt, b, &mat, &derived, &rule).unwrap();
            assert!((f / v - 2.0).abs() < 0.01, "ratio {} at {b} T", f / v);
        }
    }

    #[test]
    fn branch_decomposition_matches_bracket_terms() {
        // longitudinal vs transverse partial rates are in the ratio of the
        // two bracket terms of the rate coefficient: 60.7 : 2843 for the
        // default parameters (transverse dominates by ×46.8)
        let (mat, derived) = defaults();
        let rule = QuadratureRule::product(16).unwrap();
        let (l, t) =
            golden_rule_branch_rates(Geometry::Voigt, 5.0, &mat, &derived, &rule).unwrap();
        let (bl, bt) = lambda_branch_terms(&mat);
        assert_relative_eq!(t / l, bt / bl, max_relative = 1e-10);
        assert!((t / l - 46.8).abs() < 0.1, "t/l = {}", t / l);
    }

    #[test]
    fn b5_scaling_to_machine_precision() {
        let (mat, derived) = defaults();
        let rule = QuadratureRule::product(12).unwrap();
        for b in [0.7, 2.0, 3.5] {
            let ratio = golden_rule_rate(Geometry::Voigt, 2.0 * b, &mat, &derived, &rule).unwrap()
                / golden_rule_rate(Geometry::Voigt, b, &mat, &derived, &rule).unwrap();
            assert_relative_eq!(ratio, 32.0, max_relative = 1e-6);
        }
    }

    #[test]
    fn zero_coupling_zero_rate() {
        let (mut mat, _) = defaults();
        mat.h31_v_m = 0.0;
        mat.h33_v_m = 0.0;
        mat.h15_v_m = 0.0;
        let derived = derive_donor(&mat, DonorModel::from_material(&mat)).unwrap();
        let rule = QuadratureRule::product(8).unwrap();
        assert_eq!(
            golden_rule_rate(Geometry::Voigt, 5.0, &mat, &derived, &rule).unwrap(),
            0.0
        );
    }

    #[test]
    fn quad_order_minimum_enforced() {
        let (mat, derived) = defaults();
        let rule = QuadratureRule::product(4).unwrap();
        assert!(golden_rule_rate(Geometry::Voigt, 5.0, &mat, &derived, &rule).is_err());
    }

    #[test]
    fn deterministic_for_fixed_rule() {
        let (mat, derived) = defaults();
        let rule = QuadratureRule::product(10).unwrap();
        let a = golden_rule_rate(Geometry::Faraday, 2.5, &mat, &derived, &rule).unwrap();
        let b = golden_rule_rate(Geometry::Faraday, 2.5, &mat, &derived, &rule).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
