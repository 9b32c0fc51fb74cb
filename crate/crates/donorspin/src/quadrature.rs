//! Spherical quadrature over phonon propagation directions.
//!
//! Product rule: Gauss–Legendre in cos θ (polar) × uniform trapezoid in
//! azimuth, with twice as many azimuthal as polar nodes. The golden-rule
//! integrands are low-degree polynomials on the sphere, so the rule is
//! exact well below the default order; the order remains selectable for
//! convergence studies.

use nalgebra::Vector3;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum QuadratureError {
    #[error("quadrature order must be at least {min} (got {order})")]
    OrderTooLow { order: usize, min: usize },
}

/// Nodes and weights on the unit sphere; weights sum to 4π.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    /// (unit direction, weight) pairs, in deterministic order
    pub nodes: Vec<(Vector3<f64>, f64)>,
    /// Polar Gauss–Legendre order; the azimuthal count is twice this
    pub order: usize,
}

impl QuadratureRule {
    /// Build the product rule of the given polar order (≥ 2).
    pub fn product(order: usize) -> Result<Self, QuadratureError> {
        if order < 2 {
            return Err(QuadratureError::OrderTooLow { order, min: 2 });
        }
        let n_az = 2 * order;
        let polar = gauss_legendre(order);
        let dphi = 2.0 * std::f64::consts::PI / n_az as f64;
        let mut nodes = Vec::with_capacity(order * n_az);
        for &(cos_theta, w_polar) in &polar {
            let sin_theta = (1.0 - cos_theta * cos_theta).sqrt();
            for k in 0..n_az {
                let phi = dphi * k as f64;
                let xi = Vector3::new(
                    sin_theta * phi.cos(),
                    sin_theta * phi.sin(),
                    cos_theta,
                );
                nodes.push((xi, w_polar * dphi));
            }
        }
        Ok(Self { nodes, order })
    }

    /// The default 64 × 128 rule.
    pub fn default_rule() -> Self {
        Self::product(64).expect("order 64 is valid")
    }

    /// Integrate `f` over the sphere. Fixed-order accumulation, so repeated
    /// runs are bit-identical.
    pub fn integrate(&self, mut f: impl FnMut(&Vector3<f64>) -> f64) -> f64 {
        self.nodes.iter().map(|(xi, w)| w * f(xi)).sum()
    }

    /// Sum of all weights; 4π up to rounding.
    pub fn weight_sum(&self) -> f64 {
        self.nodes.iter().map(|(_, w)| w).sum()
    }
}

/// Gauss–Legendre nodes and weights on [−1, 1] by Newton iteration on the
/// Legendre polynomial.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        // Tricomi initial guess
        let mut x =
            (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_with_derivative(n, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out.push((x, w));
    }
    // ascending in x for deterministic ordering
    out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    out
}

/// P_n(x) and P_n'(x) by the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p_prev = 1.0;
    let mut p = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p_next = ((2.0 * k - 1.0) * x * p - (k - 1.0) * p_prev) / k;
        p_prev = p;
        p = p_next;
    }
    let d = n as f64 * (x * p - p_prev) / (x * x - 1.0);
    (p, d)
}
