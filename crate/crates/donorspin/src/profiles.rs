//! Spectral line profiles shared by the spectrum simulator and the
//! line-shape fits.
//!
//! The Gaussian⊗Lorentzian convolution is approximated by the standard
//! pseudo-Voigt form (linear mix of a Gaussian and a Lorentzian of one
//! common width, with the width and mixing fraction given by the
//! Thompson–Cox–Hastings parametrization). The profile error is below 1%
//! of peak height, adequate for center/width extraction.

/// Unit-area Gaussian of the given FWHM.
pub fn gaussian_unit_area(x: f64, center: f64, fwhm: f64) -> f64 {
    let sigma = fwhm / (8.0 * 2.0_f64.ln()).sqrt();
    let z = (x - center) / sigma;
    (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

/// Unit-area Lorentzian of the given FWHM.
pub fn lorentzian_unit_area(x: f64, center: f64, fwhm: f64) -> f64 {
    let u = 2.0 * (x - center) / fwhm;
    2.0 / (std::f64::consts::PI * fwhm * (1.0 + u * u))
}

/// Pseudo-Voigt with an explicit total FWHM and mixing fraction η
/// (η = 1 is pure Lorentzian). Unit area.
pub fn pseudo_voigt_single(x: f64, center: f64, fwhm: f64, eta: f64) -> f64 {
    eta * lorentzian_unit_area(x, center, fwhm)
        + (1.0 - eta) * gaussian_unit_area(x, center, fwhm)
}

/// Total FWHM and mixing fraction of the pseudo-Voigt approximation to a
/// Gaussian (FWHM `fg`) convolved with a Lorentzian (FWHM `fl`).
pub fn pseudo_voigt_mix(fg: f64, fl: f64) -> (f64, f64) {
    let f = (fg.powi(5)
        + 2.69269 * fg.powi(4) * fl
        + 2.42843 * fg.powi(3) * fl * fl
        + 4.47163 * fg * fg * fl.powi(3)
        + 0.07842 * fg * fl.powi(4)
        + fl.powi(5))
    .powf(0.2);
    let r = fl / f;
    let eta = 1.36603 * r - 0.47719 * r * r + 0.11116 * r * r * r;
    (f, eta)
}

/// Unit-area pseudo-Voigt approximation of the Gaussian⊗Lorentzian
/// convolution with component widths `fg` and `fl`.
pub fn voigt_approx(x: f64, center: f64, fg: f64, fl: f64) -> f64 {
    if fl <= 0.0 {
        return gaussian_unit_area(x, center, fg);
    }
    if fg <= 0.0 {
        return lorentzian_unit_area(x, center, fl);
    }
    let (f, eta) = pseudo_voigt_mix(fg, fl);
    pseudo_voigt_single(x, center, f, eta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn trapz(xs: &[f64], ys: &[f64]) -> f64 {
        xs.windows(2)
            .zip(ys.windows(2))
            .map(|(x, y)| 0.5 * (y[0] + y[1]) * (x[1] - x[0]))
            .sum()
    }

    #[test]
    fn unit_areas() {
        let xs: Vec<f64> = (-40000..=40000).map(|k| k as f64 * 0.02).collect();
        for f in [0.5, 1.0, 3.0] {
            let g: Vec<f64> = xs.iter().map(|&x| gaussian_unit_area(x, 0.0, f)).collect();
            assert_relative_eq!(trapz(&xs, &g), 1.0, max_relative = 1e-6);
            // Lorentzian tails converge slowly; ±800 widths leaves ~0.1%
            let v: Vec<f64> = xs.iter().map(|&x| voigt_approx(x, 0.0, f, 0.4 * f)).collect();
            assert_relative_eq!(trapz(&xs, &v), 1.0, max_relative = 5e-3);
        }
    }

    #[test]
    fn fwhm_definitions() {
        // half maximum at ±FWHM/2
        let f = 2.0;
        let g0 = gaussian_unit_area(0.0, 0.0, f);
        assert_relative_eq!(gaussian_unit_area(1.0, 0.0, f), g0 / 2.0, max_relative = 1e-12);
        let l0 = lorentzian_unit_area(0.0, 0.0, f);
        assert_relative_eq!(lorentzian_unit_area(1.0, 0.0, f), l0 / 2.0, max_relative = 1e-12);
    }

    #[test]
    fn limits_recover_components() {
        let (f, eta) = pseudo_voigt_mix(1.0, 0.0);
        assert_relative_eq!(f, 1.0, max_relative = 1e-12);
        assert!(eta.abs() < 1e-12);
        let (f, eta) = pseudo_voigt_mix(0.0, 1.0);
        assert_relative_eq!(f, 1.0, max_relative = 1e-12);
        assert_relative_eq!(eta, 1.0, max_relative = 1e-3);
    }
}
