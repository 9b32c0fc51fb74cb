//! Matrix exponential by scaling and squaring with a diagonal Padé
//! approximant, plus the augmented propagator that also yields the time
//! integral of the state over a step.

use nalgebra::{SMatrix, SVector};

type M8 = SMatrix<f64, 8, 8>;
pub type M4 = SMatrix<f64, 4, 4>;
pub type V4 = SVector<f64, 4>;

/// Padé(6,6) exponential after scaling the ∞-norm below 1/4.
fn expm8(a: &M8) -> M8 {
    const B: [f64; 7] = [
        17_297_280.0,
        8_648_640.0,
        1_995_840.0,
        277_200.0,
        25_200.0,
        1_512.0,
        56.0,
    ];
    let norm = a.amax() * 8.0; // cheap ∞-norm bound
    let s = if norm > 0.25 {
        (norm / 0.25).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a / 2.0_f64.powi(s);
    let a2 = scaled * scaled;
    let a4 = a2 * a2;
    let a6 = a4 * a2;
    let even = M8::identity() * B[0] + a2 * B[2] + a4 * B[4] + a6 * B[6];
    let odd = scaled * (M8::identity() * B[1] + a2 * B[3] + a4 * B[5] + a6);
    let p = even + odd;
    let q = even - odd;
    let mut result = q
        .lu()
        .solve(&p)
        .expect("Padé denominator is well conditioned after scaling");
    for _ in 0..s {
        result = result * result;
    }
    result
}

/// Propagator over one step of a constant-rate linear system:
/// `state` = e^{G·dt} and `integral` = ∫₀^dt e^{G·s} ds, from the block
/// exponential of [[G, I], [0, 0]].
#[derive(Debug, Clone, Copy)]
pub struct Propagator {
    pub state: M4,
    pub integral: M4,
}

impl Propagator {
    pub fn new(generator: &M4, dt: f64) -> Self {
        let mut aug = M8::zeros();
        for i in 0..4 {
            for j in 0..4 {
                aug[(i, j)] = generator[(i, j)] * dt;
            }
            aug[(i, i + 4)] = dt;
        }
        let e = expm8(&aug);
        let mut state = M4::zeros();
        let mut integral = M4::zeros();
        for i in 0..4 {
            for j in 0..4 {
                state[(i, j)] = e[(i, j)];
                integral[(i, j)] = e[(i, j + 4)];
            }
        }
        Self { state, integral }
    }
}

/// One RK4 step of the augmented system (p' = G·p, a' = p); returns the new
/// state and the increment of ∫p dt.
pub fn rk4_step(generator: &M4, p: &V4, dt: f64) -> (V4, V4) {
    let f = |p: &V4| generator * p;
    let k1 = f(p);
    let k2 = f(&(p + k1 * (dt / 2.0)));
    let k3 = f(&(p + k2 * (dt / 2.0)));
    let k4 = f(&(p + k3 * dt));
    let p_next = p + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    // the accumulator sees integrand p, with stage values p, p+.., matching
    // the same RK4 tableau
    let a1 = *p;
    let a2 = p + k1 * (dt / 2.0);
    let a3 = p + k2 * (dt / 2.0);
    let a4 = p + k3 * dt;
    let da = (a1 + a2 * 2.0 + a3 * 2.0 + a4) * (dt / 6.0);
    (p_next, da)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn scalar_decay_blocks() {
        // G = diag(-λ): e^{Gt} = e^{-λt}, ∫ = (1 - e^{-λt})/λ
        let mut g = M4::zeros();
        let lambdas: [f64; 4] = [1.0e9, 2.0e3, 50.0, 0.0];
        for (i, l) in lambdas.iter().enumerate() {
            g[(i, i)] = -l;
        }
        let dt = 1e-4;
        let prop = Propagator::new(&g, dt);
        for (i, l) in lambdas.iter().enumerate() {
            let exact_state = (-l * dt).exp();
            let exact_int = if *l > 0.0 { (1.0 - exact_state) / l } else { dt };
            assert_relative_eq!(prop.state[(i, i)], exact_state, max_relative = 1e-9);
            assert_relative_eq!(prop.integral[(i, i)], exact_int, max_relative = 1e-9);
        }
    }

    #[test]
    fn two_level_exchange() {
        // symmetric exchange at rate r: p difference decays at 2r
        let r = 3.0e4;
        let mut g = M4::zeros();
        g[(0, 0)] = -r;
        g[(1, 0)] = r;
        g[(0, 1)] = r;
        g[(1, 1)] = -r;
        let dt = 7.3e-5;
        let prop = Propagator::new(&g, dt);
        let p0 = V4::new(1.0, 0.0, 0.0, 0.0);
        let p = prop.state * p0;
        let diff = (-2.0 * r * dt).exp();
        assert_relative_eq!(p[0], 0.5 * (1.0 + diff), max_relative = 1e-10);
        assert_relative_eq!(p[1], 0.5 * (1.0 - diff), max_relative = 1e-10);
        assert_relative_eq!(p[0] + p[1], 1.0, max_relative = 1e-12);
    }

    #[test]
    fn rk4_matches_exact_for_small_steps() {
        let mut g = M4::zeros();
        g[(0, 0)] = -2.0e3;
        g[(1, 0)] = 2.0e3;
        g[(2, 2)] = -1.0e2;
        g[(0, 2)] = 1.0e2;
        let p0 = V4::new(0.7, 0.1, 0.2, 0.0);
        let dt_total = 1e-3;
        let prop = Propagator::new(&g, dt_total);
        let exact = prop.state * p0;
        let exact_int = prop.integral * p0;

        let n = 2000;
        let dt = dt_total / n as f64;
        let mut p = p0;
        let mut acc = V4::zeros();
        for _ in 0..n {
            let (next, da) = rk4_step(&g, &p, dt);
            p = next;
            acc += da;
        }
        assert!((p - exact).norm() < 1e-9 * exact.norm());
        assert!((acc - exact_int).norm() < 1e-9 * exact_int.norm());
    }
}
