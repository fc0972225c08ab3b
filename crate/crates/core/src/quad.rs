//! Quadrature over the source segment and the sample-to-spectrum projector.
//!
//! Data arrives as samples on the uniform source grid; everything else (basis
//! functions, the phase kernel, direction ratios) has a closed form and can be
//! integrated with Gauss-Legendre accuracy. The projector fits sampled data
//! with a Chebyshev least-squares polynomial and projects the fit, so smooth
//! data is resolved to near machine precision instead of the O(h²) of the
//! composite trapezoid.

use crate::basis::Basis;
use crate::grid::SourceGrid;
use nalgebra::DMatrix;

/// Gauss-Legendre nodes and weights on [−1, 1], by Newton iteration on the
/// Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0f64, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Quadrature rule over the source segment [−d, d].
#[derive(Debug, Clone)]
pub struct AlphaQuadrature {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl AlphaQuadrature {
    /// Gauss-Legendre rule scaled to [−d, d].
    pub fn gauss(d: f64, n: usize) -> Self {
        let (t, w) = gauss_legendre(n);
        AlphaQuadrature {
            nodes: t.iter().map(|&v| d * v).collect(),
            weights: w.iter().map(|&v| d * v).collect(),
        }
    }

    /// Composite trapezoid rule on the grid nodes themselves.
    pub fn trapezoid(sources: &SourceGrid) -> Self {
        AlphaQuadrature {
            nodes: sources.alpha_nodes.clone(),
            weights: sources.trapezoid_weights(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&a, &w)| w * f(a))
            .sum()
    }
}

/// Linear map from per-α samples on the source grid to spectral coefficients
/// p_s = ∫ f(α) Ψ_s(α) dα.
///
/// The map is a single matrix: a Chebyshev least-squares fit of the samples
/// composed with a Gauss projection of each fitted mode onto the basis.
#[derive(Debug, Clone)]
pub struct SpectralProjector {
    pub n: usize,
    pub na: usize,
    /// matrix[s * na + q]: coefficient of sample q in p_s.
    matrix: Vec<f64>,
}

fn chebyshev(k: usize, t: f64) -> f64 {
    (k as f64 * t.clamp(-1.0, 1.0).acos()).cos()
}

impl SpectralProjector {
    pub fn new(basis: &Basis, sources: &SourceGrid) -> Self {
        let na = sources.len();
        let d = basis.d;
        // Fit degree: high enough to resolve smooth data, low enough to stay
        // an honest least-squares smoother of the available samples.
        let degree = 16.min(na.saturating_sub(5)).max(2);
        let design = DMatrix::<f64>::from_fn(na, degree + 1, |q, k| {
            chebyshev(k, sources.alpha_nodes[q] / d)
        });
        // Pseudo-inverse of the design matrix.
        let svd = design.svd(true, true);
        let pinv = svd.pseudo_inverse(1e-12).expect("design pseudo-inverse");
        // Projection of each Chebyshev mode onto each basis function.
        let quad = AlphaQuadrature::gauss(d, 64);
        let mut mode_proj = DMatrix::<f64>::zeros(basis.n, degree + 1);
        for s in 0..basis.n {
            for k in 0..=degree {
                mode_proj[(s, k)] =
                    quad.integrate(|a| chebyshev(k, a / d) * basis.eval(s, a));
            }
        }
        let full = mode_proj * pinv;
        let mut matrix = vec![0.0; basis.n * na];
        for s in 0..basis.n {
            for q in 0..na {
                matrix[s * na + q] = full[(s, q)];
            }
        }
        SpectralProjector {
            n: basis.n,
            na,
            matrix,
        }
    }

    /// Apply the projector to one α-profile of samples.
    pub fn project(&self, samples: &[f64]) -> Vec<f64> {
        assert_eq!(samples.len(), self.na);
        (0..self.n)
            .map(|s| {
                self.matrix[s * self.na..(s + 1) * self.na]
                    .iter()
                    .zip(samples)
                    .map(|(m, v)| m * v)
                    .sum()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::build_basis;
    use crate::grid::{build_grids, GridPurpose};
    use crate::ExperimentConfig;

    #[test]
    fn gauss_rule_integrates_polynomials_exactly() {
        let q = AlphaQuadrature::gauss(0.5, 16);
        let exact = 2.0 * 0.5f64.powi(5) / 5.0; // int of a^4 over [-1/2, 1/2]
        assert!((q.integrate(|a| a.powi(4)) - exact).abs() < 1e-15);
        assert!((q.integrate(|_| 1.0) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn projector_recovers_basis_profiles_sharply() {
        let cfg = ExperimentConfig::default();
        let (_, sources) = build_grids(&cfg, GridPurpose::Inversion).unwrap();
        let basis = build_basis(cfg.source_half_length, 3).unwrap();
        let proj = SpectralProjector::new(&basis, &sources);
        let samples: Vec<f64> = sources
            .alpha_nodes
            .iter()
            .map(|&a| basis.eval(0, a))
            .collect();
        let p = proj.project(&samples);
        assert!((p[0] - 1.0).abs() < 1e-4, "p0 = {}", p[0]);
        assert!(p[1].abs() < 1e-4);
        assert!(p[2].abs() < 1e-4);
    }

    #[test]
    fn projector_is_idempotent_on_band_limited_profiles() {
        let cfg = ExperimentConfig::default();
        let (_, sources) = build_grids(&cfg, GridPurpose::Inversion).unwrap();
        let basis = build_basis(cfg.source_half_length, 3).unwrap();
        let proj = SpectralProjector::new(&basis, &sources);
        let coeffs = [0.7, -1.3, 0.25];
        let samples: Vec<f64> = sources
            .alpha_nodes
            .iter()
            .map(|&a| (0..3).map(|s| coeffs[s] * basis.eval(s, a)).sum())
            .collect();
        let p1 = proj.project(&samples);
        let resynth: Vec<f64> = sources
            .alpha_nodes
            .iter()
            .map(|&a| (0..3).map(|s| p1[s] * basis.eval(s, a)).sum())
            .collect();
        let p2 = proj.project(&resynth);
        for s in 0..3 {
            assert!((p1[s] - p2[s]).abs() < 1e-10, "s={s}: {} vs {}", p1[s], p2[s]);
            assert!((p1[s] - coeffs[s]).abs() < 1e-10);
        }
    }
}
