//! The mollified point source and the Henyey-Greenstein phase kernel.

use crate::error::{Result, RteError};

/// Midpoint count used for the high-accuracy radial quadratures at
/// construction time.
const PROFILE_QUAD: usize = 20_000;

/// Smooth bump of radius ε and unit mass modelling the δ-source.
///
/// f(x) = C_ε exp(|x|²/(|x|² − ε²)) for |x| < ε and 0 otherwise; C_ε
/// normalizes the plane integral to one.
#[derive(Debug, Clone)]
pub struct SourceModel {
    pub eps: f64,
    pub c_eps: f64,
    /// ∫₀^ε (radial profile) dt, so the line integral of f over any ray from
    /// a source point equals c_eps · radial_integral.
    radial_integral: f64,
}

/// Dimensionless profile exp(ρ²/(ρ² − 1)) for ρ = |x|/ε < 1, zero beyond.
#[inline]
fn bump_profile(rho: f64) -> f64 {
    if rho < 1.0 {
        (rho * rho / (rho * rho - 1.0)).exp()
    } else {
        0.0
    }
}

impl SourceModel {
    pub fn new(eps: f64) -> Result<Self> {
        if eps <= 0.0 {
            return Err(RteError::Config(format!("need eps > 0, got {eps}")));
        }
        // Midpoint quadrature is accurate here: the integrands are smooth and
        // flat to all orders at rho = 1.
        let n = PROFILE_QUAD;
        let dr = 1.0 / n as f64;
        let mut i1 = 0.0; // int_0^1 profile
        let mut i2 = 0.0; // int_0^1 rho * profile
        for k in 0..n {
            let rho = (k as f64 + 0.5) * dr;
            let p = bump_profile(rho);
            i1 += p * dr;
            i2 += rho * p * dr;
        }
        let c_eps = 1.0 / (2.0 * std::f64::consts::PI * eps * eps * i2);
        Ok(SourceModel {
            eps,
            c_eps,
            radial_integral: eps * i1,
        })
    }

    /// f(x) for a 2-D offset from the source point.
    #[inline]
    pub fn source_f(&self, dx: f64, dy: f64) -> f64 {
        let rho = (dx * dx + dy * dy).sqrt() / self.eps;
        self.c_eps * bump_profile(rho)
    }

    /// Line integral of f(· − x_α) over the segment from x_α = (α, 0) to (x, y).
    ///
    /// The segment leaves the source radially, so once it is longer than ε the
    /// integral equals the fixed radial integral of the bump.
    pub fn u0_baseline(&self, x: f64, y: f64, alpha: f64) -> f64 {
        let len = ((x - alpha) * (x - alpha) + y * y).sqrt();
        if len >= self.eps {
            self.c_eps * self.radial_integral
        } else {
            // Segment ends inside the support; integrate the profile up to it.
            let n = 4000;
            let dt = len / n as f64;
            (0..n)
                .map(|k| {
                    let t = (k as f64 + 0.5) * dt;
                    self.c_eps * bump_profile(t / self.eps) * dt
                })
                .sum()
        }
    }

    /// The constant u₀ every point of Ω̄ sees (all rays pierce the full bump).
    pub fn u0_const(&self) -> f64 {
        self.c_eps * self.radial_integral
    }
}

/// The 2-D Henyey-Greenstein phase kernel H(α, β), independent of x.
#[derive(Debug, Clone)]
pub struct PhaseKernel {
    pub g_aniso: f64,
    pub d: f64,
}

impl PhaseKernel {
    pub fn new(g_aniso: f64, d: f64) -> Self {
        PhaseKernel { g_aniso, d }
    }

    /// H(α, β) = (1/2d) (1 − g²) / (1 + g² − 2g cos(α − β)).
    #[inline]
    pub fn kernel_h(&self, alpha: f64, beta: f64) -> f64 {
        let g = self.g_aniso;
        (1.0 / (2.0 * self.d)) * (1.0 - g * g) / (1.0 + g * g - 2.0 * g * (alpha - beta).cos())
    }

    /// ∂H/∂α in closed form.
    #[inline]
    pub fn kernel_h_dalpha(&self, alpha: f64, beta: f64) -> f64 {
        let g = self.g_aniso;
        let denom = 1.0 + g * g - 2.0 * g * (alpha - beta).cos();
        -(1.0 / (2.0 * self.d)) * (1.0 - g * g) * 2.0 * g * (alpha - beta).sin() / (denom * denom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn source_vanishes_on_and_outside_support() {
        let m = SourceModel::new(0.05).unwrap();
        assert_eq!(m.source_f(0.05, 0.0), 0.0);
        assert_eq!(m.source_f(0.04, 0.04), 0.0);
        assert_eq!(m.source_f(0.2, 0.0), 0.0);
    }

    #[test]
    fn source_at_origin_is_c_eps() {
        let m = SourceModel::new(0.05).unwrap();
        assert!((m.source_f(0.0, 0.0) - m.c_eps).abs() < 1e-12);
        assert!(m.c_eps > 0.0);
    }

    #[test]
    fn source_mass_is_one_by_midpoint_quadrature() {
        // 2-D midpoint rule on a 401 x 401 sub-grid of [-eps, eps]^2.
        let eps = 0.05;
        let m = SourceModel::new(eps).unwrap();
        let n = 401;
        let h = 2.0 * eps / n as f64;
        let mut mass = 0.0;
        for i in 0..n {
            for j in 0..n {
                let x = -eps + (i as f64 + 0.5) * h;
                let y = -eps + (j as f64 + 0.5) * h;
                mass += m.source_f(x, y) * h * h;
            }
        }
        assert!((mass - 1.0).abs() < 1e-3, "mass = {mass}");
    }

    #[test]
    fn u0_matches_dense_1d_quadrature() {
        // Vertical ray through the bump center: u0 = int_0^eps profile; oracle
        // with 10^4 midpoint samples.
        let eps = 0.05;
        let m = SourceModel::new(eps).unwrap();
        let n = 10_000;
        let dt = eps / n as f64;
        let oracle: f64 = (0..n)
            .map(|k| {
                let t = (k as f64 + 0.5) * dt;
                m.c_eps * bump_profile(t / eps) * dt
            })
            .sum();
        let got = m.u0_baseline(0.2, 1.0, 0.2);
        assert!((got - oracle).abs() / oracle < 1e-6, "got {got} oracle {oracle}");
        // Frozen from the high-precision quadrature of the profile integrals.
        assert!((got - 9.517299490).abs() < 1e-4, "u0 = {got}");
    }

    #[test]
    fn u0_positive_on_bottom_boundary() {
        let m = SourceModel::new(0.05).unwrap();
        for i in 0..=20 {
            let x = -0.5 + i as f64 / 20.0;
            for k in 0..=20 {
                let alpha = -0.5 + k as f64 / 20.0;
                assert!(m.u0_baseline(x, 1.0, alpha) > 0.0);
            }
        }
    }

    #[test]
    fn u0_is_translation_invariant() {
        let m = SourceModel::new(0.05).unwrap();
        let base = m.u0_baseline(0.1, 1.3, -0.2);
        for &delta in &[0.05, 0.2, -0.3] {
            let moved = m.u0_baseline(0.1 + delta, 1.3, -0.2 + delta);
            assert!((moved - base).abs() < 1e-14);
        }
    }

    #[test]
    fn kernel_reference_values() {
        let k = PhaseKernel::new(0.5, 0.5);
        // alpha = beta: (1/(2d)) (1 - 1/4) / (1 + 1/4 - 1) = 0.75 / 0.25 = 3.
        assert!((k.kernel_h(0.3, 0.3) - 3.0).abs() < 1e-12);
        let iso = PhaseKernel::new(0.0, 0.5);
        for &(a, b) in &[(0.1, -0.4), (0.5, 0.5), (-0.2, 0.3)] {
            assert!((iso.kernel_h(a, b) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn kernel_dalpha_matches_finite_differences() {
        let k = PhaseKernel::new(0.5, 0.5);
        let h = 1e-6;
        for i in 0..10 {
            let a = -0.5 + i as f64 / 9.0;
            let b = 0.2;
            let fd = (k.kernel_h(a + h, b) - k.kernel_h(a - h, b)) / (2.0 * h);
            let an = k.kernel_h_dalpha(a, b);
            assert!((fd - an).abs() < 1e-6 * an.abs().max(1.0));
        }
    }

    proptest! {
        #[test]
        fn kernel_is_symmetric_and_nonnegative(a in -0.5f64..0.5, b in -0.5f64..0.5) {
            let k = PhaseKernel::new(0.5, 0.5);
            prop_assert!((k.kernel_h(a, b) - k.kernel_h(b, a)).abs() < 1e-14);
            prop_assert!(k.kernel_h(a, b) >= 0.0);
        }
    }
}
