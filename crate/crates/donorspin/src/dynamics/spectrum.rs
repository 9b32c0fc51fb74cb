//! PL spectra and PLE scans of the donor-bound-exciton lines.

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use super::level::{LevelSystem, Transition, H_TIMES_GHZ_EV};
use super::protocol::{lorentzian_response, Detection, EnsembleSpec};
use super::DynamicsError;
use crate::material::MaterialParameters;
use crate::profiles::voigt_approx;
use crate::relaxation::Geometry;

/// Zero-field Ga donor-bound-exciton line (eV).
pub const GA_LINE_CENTER_EV: f64 = 3.3599;

/// Satellite-band line labels (eV); carried in spectrum output as static
/// annotations only.
pub const SATELLITE_LINES: [(&str, f64); 4] = [
    ("TES", 3.318),
    ("1LO", 3.288),
    ("1LO-TES", 3.247),
    ("2LO", 3.214),
];

/// One emission line of the simulated spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralLine {
    pub label: String,
    pub energy_ev: f64,
    pub weight: f64,
}

/// Simulated PL spectrum on an energy grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub energy_ev: Vec<f64>,
    pub intensity: Vec<f64>,
    /// Zeeman components that built the spectrum
    pub lines: Vec<SpectralLine>,
    /// Static satellite-band annotations
    pub satellite_labels: Vec<SpectralLine>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumConfig {
    /// Zero-field line center (eV)
    pub center_ev: f64,
    /// Homogeneous Lorentzian FWHM (eV)
    pub homogeneous_fwhm_ev: f64,
    /// Half width of the energy grid around the center (eV); autosized
    /// from the splittings and linewidths when absent
    pub half_span_ev: Option<f64>,
    pub n_points: usize,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self {
            center_ev: GA_LINE_CENTER_EV,
            homogeneous_fwhm_ev: H_TIMES_GHZ_EV,
            half_span_ev: None,
            n_points: 3001,
        }
    }
}

/// Detectable emission lines per geometry (the Faraday z-polarized pair
/// points along the optical axis and is not observed).
fn visible_lines(geometry: Geometry) -> &'static [Transition] {
    match geometry {
        Geometry::Voigt => &[
            Transition::HDown,
            Transition::HUp,
            Transition::VDown,
            Transition::VUp,
        ],
        Geometry::Faraday => &[Transition::SigmaPlus, Transition::SigmaMinus],
    }
}

fn transition_label(t: Transition) -> &'static str {
    match t {
        Transition::HDown => "H_down",
        Transition::HUp => "H_up",
        Transition::VDown => "V_down",
        Transition::VUp => "V_up",
        Transition::SigmaPlus => "sigma_plus",
        Transition::SigmaMinus => "sigma_minus",
        Transition::ZDown => "z_down",
        Transition::ZUp => "z_up",
    }
}

/// Zeeman-split PL spectrum: each visible line is an
/// inhomogeneous-Gaussian ⊗ homogeneous-Lorentzian profile.
pub fn simulate_spectrum(
    ensemble: &EnsembleSpec,
    geometry: Geometry,
    b: f64,
    mat: &MaterialParameters,
    config: &SpectrumConfig,
) -> Result<Spectrum, DynamicsError> {
    ensemble.validate()?;
    if b < 0.0 {
        return Err(DynamicsError::InvalidArgument(
            "field must be nonnegative".into(),
        ));
    }
    if config.n_points < 2 {
        return Err(DynamicsError::InvalidArgument(
            "need at least two grid points".into(),
        ));
    }
    let lines: Vec<SpectralLine> = visible_lines(geometry)
        .iter()
        .map(|&t| SpectralLine {
            label: transition_label(t).to_string(),
            energy_ev: config.center_ev + t.energy_offset_ev(mat, b),
            weight: 1.0,
        })
        .collect();

    let fg = ensemble.inhomogeneous_fwhm_ev;
    let fl = config.homogeneous_fwhm_ev;
    let half_span = config.half_span_ev.unwrap_or_else(|| {
        let max_offset = lines
            .iter()
            .map(|l| (l.energy_ev - config.center_ev).abs())
            .fold(0.0_f64, f64::max);
        max_offset + 8.0 * (fg + fl)
    });
    let n = config.n_points;
    let step = 2.0 * half_span / (n - 1) as f64;
    let energy_ev: Vec<f64> = (0..n)
        .map(|k| config.center_ev - half_span + k as f64 * step)
        .collect();
    let intensity: Vec<f64> = energy_ev
        .iter()
        .map(|&e| {
            lines
                .iter()
                .map(|l| l.weight * voigt_approx(e, l.energy_ev, fg, fl))
                .sum()
        })
        .collect();

    Ok(Spectrum {
        energy_ev,
        intensity,
        lines,
        satellite_labels: SATELLITE_LINES
            .iter()
            .map(|(label, energy)| SpectralLine {
                label: (*label).to_string(),
                energy_ev: *energy,
                weight: 0.0,
            })
            .collect(),
    })
}

/// PLE scan result: steady-state collected flux versus excitation energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PleCurve {
    pub energy_ev: Vec<f64>,
    pub flux: Vec<f64>,
}

/// Transitions the scanning laser can drive (z-polarized Faraday lines are
/// inaccessible with the beam along the c-axis).
fn pumpable_lines(geometry: Geometry) -> &'static [Transition] {
    visible_lines(geometry)
}

/// Steady-state populations under constant drives.
fn steady_state(
    system: &LevelSystem,
    drives: &[(Transition, f64)],
) -> Result<Vector4<f64>, DynamicsError> {
    let g = system.generator(drives);
    let mut a = Matrix4::zeros();
    for i in 0..4 {
        for j in 0..4 {
            a[(i, j)] = g[(i, j)];
        }
    }
    // replace the last balance row with the normalization Σp = 1
    for j in 0..4 {
        a[(3, j)] = 1.0;
    }
    let rhs = Vector4::new(0.0, 0.0, 0.0, 1.0);
    a.lu()
        .solve(&rhs)
        .ok_or_else(|| DynamicsError::SteadyState("singular balance matrix".into()))
}

/// PLE scan: for each excitation energy the pump rate of every accessible
/// transition is scaled by the ensemble-convolved line response at its
/// detuning, and the collected steady-state flux is accumulated over
/// sub-ensembles.
pub fn simulate_ple(
    ensemble: &EnsembleSpec,
    geometry: Geometry,
    b: f64,
    scan_energies_ev: &[f64],
    system: &LevelSystem,
    pump_rate_1_s: f64,
    mat: &MaterialParameters,
    center_ev: f64,
    collection_efficiency: f64,
) -> Result<PleCurve, DynamicsError> {
    ensemble.validate()?;
    if pump_rate_1_s < 0.0 {
        return Err(DynamicsError::InvalidArgument(
            "pump rate must be nonnegative".into(),
        ));
    }
    let lines: Vec<(Transition, f64)> = pumpable_lines(geometry)
        .iter()
        .map(|&t| (t, center_ev + t.energy_offset_ev(mat, b)))
        .collect();
    let weights = system.flux_weights(&Detection::all());
    let subensembles = ensemble.subensembles();

    let mut flux = Vec::with_capacity(scan_energies_ev.len());
    for &laser in scan_energies_ev {
        let mut total = 0.0;
        for &(detuning, weight) in &subensembles {
            let drives: Vec<(Transition, f64)> = lines
                .iter()
                .map(|&(t, center)| {
                    let response = lorentzian_response(
                        laser - center - detuning,
                        system.homogeneous_fwhm_ev,
                    );
                    (t, pump_rate_1_s * response)
                })
                .collect();
            let p = steady_state(system, &drives)?;
            let collected: f64 = (0..4).map(|i| weights[i] * p[i]).sum();
            total += weight * collected;
        }
        flux.push(total * ensemble.n_donors * collection_efficiency);
    }
    Ok(PleCurve {
        energy_ev: scan_energies_ev.to_vec(),
        flux,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::level::{build_level_system, OpticsConfig};
    use crate::material::{derive_donor, DonorModel};
    use crate::PhysicalConstants;
    use approx::assert_relative_eq;

    fn mat_app_e() -> MaterialParameters {
        MaterialParameters {
            g_e: 1.97,
            ..MaterialParameters::default()
        }
    }

    #[test]
    fn zero_field_single_line() {
        let spectrum = simulate_spectrum(
            &EnsembleSpec::default(),
            Geometry::Faraday,
            0.0,
            &mat_app_e(),
            &SpectrumConfig::default(),
        )
        .unwrap();
        for line in &spectrum.lines {
            assert_relative_eq!(line.energy_ev, GA_LINE_CENTER_EV, max_relative = 1e-12);
        }
        let peak_idx = spectrum
            .intensity
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert!((spectrum.energy_ev[peak_idx] - GA_LINE_CENTER_EV).abs() < 2e-6);
        assert_eq!(spectrum.satellite_labels.len(), 4);
        assert_eq!(spectrum.satellite_labels[0].label, "TES");
    }

    #[test]
    fn faraday_sigma_splitting() {
        let mat = mat_app_e();
        let c = PhysicalConstants::codata2018();
        let spectrum = simulate_spectrum(
            &EnsembleSpec::default(),
            Geometry::Faraday,
            5.0,
            &mat,
            &SpectrumConfig::default(),
        )
        .unwrap();
        assert_eq!(spectrum.lines.len(), 2);
        let split = (spectrum.lines[0].energy_ev - spectrum.lines[1].energy_ev).abs();
        let expected = (1.97 + 1.22) * c.mu_b * 5.0;
        assert_relative_eq!(split, expected, max_relative = 1e-12);
        assert!((split * 1e6 - 923.0).abs() < 2.0, "split = {} ueV", split * 1e6);
    }

    #[test]
    fn voigt_four_lines() {
        let spectrum = simulate_spectrum(
            &EnsembleSpec::default(),
            Geometry::Voigt,
            4.0,
            &mat_app_e(),
            &SpectrumConfig::default(),
        )
        .unwrap();
        assert_eq!(spectrum.lines.len(), 4);
    }

    fn ple_system(geometry: Geometry, b: f64) -> (MaterialParameters, LevelSystem) {
        let mat = mat_app_e();
        let derived = derive_donor(&mat, DonorModel::from_material(&mat)).unwrap();
        let system =
            build_level_system(geometry, b, 1.5, &mat, &derived, &OpticsConfig::default())
                .unwrap();
        (mat, system)
    }

    fn local_maxima(curve: &PleCurve) -> Vec<usize> {
        let f = &curve.flux;
        let scale = f.iter().cloned().fold(0.0_f64, f64::max);
        (1..f.len() - 1)
            .filter(|&i| {
                f[i] > f[i - 1] && f[i] > f[i + 1] && f[i] > 0.05 * scale
            })
            .collect()
    }

    #[test]
    fn ple_faraday_single_peak() {
        let b = 5.0;
        let (mat, system) = ple_system(Geometry::Faraday, b);
        let sigma_plus = GA_LINE_CENTER_EV + Transition::SigmaPlus.energy_offset_ev(&mat, b);
        let scan: Vec<f64> = (-300..=300)
            .map(|k| sigma_plus + k as f64 * 1e-6)
            .collect();
        // sub-ensemble spacing must stay below the homogeneous width or
        // the scan resolves the discretization
        let ensemble = EnsembleSpec {
            n_subensembles: 2001,
            ..EnsembleSpec::default()
        };
        let curve = simulate_ple(
            &ensemble,
            Geometry::Faraday,
            b,
            &scan,
            &system,
            0.05,
            &mat,
            GA_LINE_CENTER_EV,
            1e-3,
        )
        .unwrap();
        let peaks = local_maxima(&curve);
        assert_eq!(peaks.len(), 1, "expected one peak, got {peaks:?}");
        let peak_e = curve.energy_ev[peaks[0]];
        assert!((peak_e - sigma_plus).abs() < 5e-6);
    }

    #[test]
    fn ple_voigt_two_peaks_hole_split() {
        let b = 5.0;
        let (mat, system) = ple_system(Geometry::Voigt, b);
        let c = PhysicalConstants::codata2018();
        let center = GA_LINE_CENTER_EV
            + 0.5
                * (Transition::HDown.energy_offset_ev(&mat, b)
                    + Transition::VDown.energy_offset_ev(&mat, b));
        let scan: Vec<f64> = (-300..=300).map(|k| center + k as f64 * 1e-6).collect();
        // narrow inhomogeneous width so the two maxima sit at the line
        // centers instead of being pulled together by overlap
        let ensemble = EnsembleSpec {
            inhomogeneous_fwhm_ev: 15e-6,
            ..EnsembleSpec::default()
        };
        let curve = simulate_ple(
            &ensemble,
            Geometry::Voigt,
            b,
            &scan,
            &system,
            0.05,
            &mat,
            GA_LINE_CENTER_EV,
            1e-3,
        )
        .unwrap();
        let peaks = local_maxima(&curve);
        assert_eq!(peaks.len(), 2, "expected two peaks, got {peaks:?}");
        let separation = curve.energy_ev[peaks[1]] - curve.energy_ev[peaks[0]];
        let expected = 0.34 * c.mu_b * b;
        assert!(
            ((separation - expected) * 1e6).abs() < 1.3,
            "separation {} ueV vs {} ueV",
            separation * 1e6,
            expected * 1e6
        );
    }

    #[test]
    fn ple_voigt_default_broadening_still_two_peaks() {
        let b = 5.0;
        let (mat, system) = ple_system(Geometry::Voigt, b);
        let center = GA_LINE_CENTER_EV
            + 0.5
                * (Transition::HDown.energy_offset_ev(&mat, b)
                    + Transition::VDown.energy_offset_ev(&mat, b));
        let scan: Vec<f64> = (-150..=150).map(|k| center + k as f64 * 2e-6).collect();
        let ensemble = EnsembleSpec {
            n_subensembles: 2001,
            ..EnsembleSpec::default()
        };
        let curve = simulate_ple(
            &ensemble,
            Geometry::Voigt,
            b,
            &scan,
            &system,
            0.05,
            &mat,
            GA_LINE_CENTER_EV,
            1e-3,
        )
        .unwrap();
        assert_eq!(local_maxima(&curve).len(), 2);
    }

    #[test]
    fn ple_zero_power_flat_zero() {
        let b = 5.0;
        let (mat, system) = ple_system(Geometry::Faraday, b);
        let scan: Vec<f64> = (-10..=10)
            .map(|k| GA_LINE_CENTER_EV + k as f64 * 1e-5)
            .collect();
        let curve = simulate_ple(
            &EnsembleSpec::default(),
            Geometry::Faraday,
            b,
            &scan,
            &system,
            0.0,
            &mat,
            GA_LINE_CENTER_EV,
            1e-3,
        )
        .unwrap();
        for f in &curve.flux {
            assert!(f.abs() < 1e-12);
        }
    }
}
