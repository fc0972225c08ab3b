//! Ray geometry: the unit direction ν from a source point to a field point
//! and its α-derivatives.

use crate::config::DerivMode;

/// Unit vector pointing from the source (α, 0) to the point (x, y).
///
/// Requires the point to differ from the source, which holds on Ω̄ since the
/// source segment does not meet Ω̄.
#[inline]
pub fn direction_nu(x: f64, y: f64, alpha: f64) -> (f64, f64) {
    let dx = x - alpha;
    let r = (dx * dx + y * y).sqrt();
    (dx / r, y / r)
}

/// Closed-form ∂ν/∂α: (−y²/r³, y(x−α)/r³) with r = |x − x_α|.
#[inline]
pub fn direction_nu_dalpha(x: f64, y: f64, alpha: f64) -> (f64, f64) {
    let dx = x - alpha;
    let r2 = dx * dx + y * y;
    let r3 = r2 * r2.sqrt();
    (-y * y / r3, y * dx / r3)
}

/// ∂ν/∂α by centered divided differences with step `h`.
#[inline]
pub fn direction_nu_dalpha_fd(x: f64, y: f64, alpha: f64, h: f64) -> (f64, f64) {
    let (p1, p2) = direction_nu(x, y, alpha + h);
    let (m1, m2) = direction_nu(x, y, alpha - h);
    ((p1 - m1) / (2.0 * h), (p2 - m2) / (2.0 * h))
}

/// ∂ν/∂α in the configured mode; `h` is the divided-difference step used in
/// [`DerivMode::FiniteDifference`] mode.
#[inline]
pub fn direction_nu_dalpha_mode(x: f64, y: f64, alpha: f64, mode: DerivMode, h: f64) -> (f64, f64) {
    match mode {
        DerivMode::Analytic => direction_nu_dalpha(x, y, alpha),
        DerivMode::FiniteDifference => direction_nu_dalpha_fd(x, y, alpha, h),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn point_above_source_points_straight_up() {
        for &y in &[1.0, 1.5, 2.0] {
            let (n1, n2) = direction_nu(0.2, y, 0.2);
            assert!(n1.abs() < 1e-15);
            assert!((n2 - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn forty_five_degree_geometry() {
        let (n1, n2) = direction_nu(1.0, 1.0, 0.0);
        let s = 1.0 / 2f64.sqrt();
        assert!((n1 - s).abs() < 1e-15);
        assert!((n2 - s).abs() < 1e-15);
    }

    #[test]
    fn analytic_alpha_derivative_matches_centered_differences() {
        // 100 deterministic samples over Omega x [-d, d].
        for t in 0..100 {
            let x = -0.5 + (t % 10) as f64 / 9.0;
            let y = 1.0 + (t / 10) as f64 / 9.0;
            let alpha = -0.5 + (t % 7) as f64 / 6.0;
            let (a1, a2) = direction_nu_dalpha(x, y, alpha);
            let (f1, f2) = direction_nu_dalpha_fd(x, y, alpha, 1e-5);
            let scale = a1.abs().max(a2.abs()).max(1e-12);
            assert!((a1 - f1).abs() / scale < 1e-6, "x={x} y={y} alpha={alpha}");
            assert!((a2 - f2).abs() / scale < 1e-6);
        }
    }

    #[test]
    fn nu_ratios_are_bounded_by_m3_over_a() {
        // The ratios |nu_1/nu_2| and |d_alpha nu_1 / nu_2| over the default
        // grid, scaled by a, stay below a finite M3 shared by all nodes.
        let cfg = crate::config::ExperimentConfig::default();
        let (grid, sources) =
            crate::grid::build_grids(&cfg, crate::grid::GridPurpose::Forward).unwrap();
        let mut m3 = 0.0f64;
        let mut ratios = Vec::new();
        for &y in &grid.y_nodes {
            for &x in &grid.x_nodes {
                for &al in &sources.alpha_nodes {
                    let (n1, n2) = direction_nu(x, y, al);
                    let (d1, _) = direction_nu_dalpha(x, y, al);
                    let r1 = (n1 / n2).abs();
                    let r2 = (d1 / n2).abs();
                    ratios.push(r1.max(r2));
                    m3 = m3.max(r1.max(r2) * cfg.y_min);
                }
            }
        }
        assert!(m3.is_finite());
        for r in ratios {
            assert!(r <= m3 / cfg.y_min + 1e-12);
        }
    }

    proptest! {
        #[test]
        fn nu_is_always_unit(x in -0.5f64..0.5, y in 1.0f64..2.0, alpha in -0.5f64..0.5) {
            let (n1, n2) = direction_nu(x, y, alpha);
            prop_assert!(((n1 * n1 + n2 * n2).sqrt() - 1.0).abs() < 1e-12);
            prop_assert!(n2 > 0.0);
        }
    }
}
