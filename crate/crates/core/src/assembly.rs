//! The transformation stage: log transform of the boundary data, projection
//! onto the spectral basis, the per-node system matrices D_N(x) and A₁(x),
//! and the nonlinearity F(W, x) with its exact Jacobian.

use crate::basis::Basis;
use crate::config::DerivMode;
use crate::error::{Result, RteError};
use crate::geom::{direction_nu, direction_nu_dalpha_mode};
use crate::grid::{BoundaryTrace, Grid2D, Side, SourceGrid};
use crate::quad::{AlphaQuadrature, SpectralProjector};
use crate::source::PhaseKernel;
use nalgebra::DMatrix;
use rayon::prelude::*;

/// Gauss point count for the closed-form α-integrals of the assembly.
pub const ASSEMBLY_QUAD: usize = 64;

/// Pointwise natural log of a positive boundary trace.
pub fn log_boundary(trace: &BoundaryTrace) -> Result<BoundaryTrace> {
    for side in Side::ALL {
        for idx in 0..trace.side_len(side) {
            for k in 0..trace.sources.len() {
                let v = trace.at(side, idx, k);
                if !(v > 0.0) {
                    let (x, y) = trace.node_xy(side, idx);
                    return Err(RteError::Data(format!(
                        "non-positive boundary value g1 = {v} at ({x}, {y}), alpha index {k}"
                    )));
                }
            }
        }
    }
    Ok(trace.map(f64::ln))
}

/// Fixed boundary condition for the coefficient field: the N-vector
/// p_s(x) = ∫ ln g₁(x, α) Ψ_s(α) dα at every boundary node.
#[derive(Debug, Clone)]
pub struct BoundaryCoefficients {
    pub grid: Grid2D,
    pub n: usize,
    bottom: Vec<f64>,
    top: Vec<f64>,
    left: Vec<f64>,
    right: Vec<f64>,
}

impl BoundaryCoefficients {
    fn side_values(&self, side: Side) -> &[f64] {
        match side {
            Side::Bottom => &self.bottom,
            Side::Top => &self.top,
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    fn side_values_mut(&mut self, side: Side) -> &mut Vec<f64> {
        match side {
            Side::Bottom => &mut self.bottom,
            Side::Top => &mut self.top,
            Side::Left => &mut self.left,
            Side::Right => &mut self.right,
        }
    }

    /// p_s at node `idx` of `side`.
    #[inline]
    pub fn at(&self, side: Side, idx: usize, s: usize) -> f64 {
        self.side_values(side)[idx * self.n + s]
    }

    pub fn side_len(&self, side: Side) -> usize {
        match side {
            Side::Bottom | Side::Top => self.grid.nx(),
            Side::Left | Side::Right => self.grid.ny() - 2,
        }
    }

    /// Apply `f` to every coefficient (used by tests to build synthetic data).
    pub fn map(&self, mut f: impl FnMut(Side, usize, usize, f64) -> f64) -> Self {
        let mut out = self.clone();
        for side in Side::ALL {
            for idx in 0..self.side_len(side) {
                for s in 0..self.n {
                    let v = out.side_values(side)[idx * self.n + s];
                    out.side_values_mut(side)[idx * self.n + s] = f(side, idx, s, v);
                }
            }
        }
        out
    }

    pub fn constant(grid: &Grid2D, n: usize, value: f64) -> Self {
        BoundaryCoefficients {
            bottom: vec![value; grid.nx() * n],
            top: vec![value; grid.nx() * n],
            left: vec![value; (grid.ny() - 2) * n],
            right: vec![value; (grid.ny() - 2) * n],
            grid: grid.clone(),
            n,
        }
    }
}

/// Project the log boundary trace onto the basis: each node's α-profile of
/// samples goes through the spectral projector.
pub fn project_boundary(log_trace: &BoundaryTrace, basis: &Basis) -> BoundaryCoefficients {
    let sources = &log_trace.sources;
    let projector = SpectralProjector::new(basis, sources);
    let n = basis.n;
    let mut out = BoundaryCoefficients::constant(&log_trace.grid, n, 0.0);
    let mut samples = vec![0.0; sources.len()];
    for side in Side::ALL {
        for idx in 0..log_trace.side_len(side) {
            for (k, sample) in samples.iter_mut().enumerate() {
                *sample = log_trace.at(side, idx, k);
            }
            let p = projector.project(&samples);
            out.side_values_mut(side)[idx * n..(idx + 1) * n].copy_from_slice(&p);
        }
    }
    out
}

/// The W-independent matrices of the projected first-order system at one
/// interior node: D_N(x), A₁(x), D_N⁻¹ and the condition number of D_N.
#[derive(Debug, Clone)]
pub struct NodeMatrices {
    pub d_n: DMatrix<f64>,
    pub a_1: DMatrix<f64>,
    pub d_n_inv: DMatrix<f64>,
    pub cond_d_n: f64,
}

/// Per-interior-node system matrices on the inversion grid, cached once per
/// geometry (they do not depend on W).
#[derive(Debug, Clone)]
pub struct SystemMatrices {
    pub grid: Grid2D,
    pub n: usize,
    /// Indexed by (j - 1) * (nx - 2) + (i - 1) over interior nodes.
    pub nodes: Vec<NodeMatrices>,
}

impl SystemMatrices {
    #[inline]
    pub fn at(&self, i: usize, j: usize) -> &NodeMatrices {
        let nxi = self.grid.nx() - 2;
        &self.nodes[(j - 1) * nxi + (i - 1)]
    }

    /// max over nodes of the infinity norm of D_N⁻¹ A₁ (the matrices G of the
    /// convexity analysis); reported as a diagnostic.
    pub fn max_g_norm(&self) -> f64 {
        self.nodes
            .iter()
            .map(|nm| {
                let g = &nm.d_n_inv * &nm.a_1;
                inf_norm(&g)
            })
            .fold(0.0, f64::max)
    }

    pub fn max_condition_number(&self) -> f64 {
        self.nodes.iter().map(|nm| nm.cond_d_n).fold(0.0, f64::max)
    }
}

pub fn inf_norm(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| m[(r, c)].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Assemble D_N and A₁ at one interior node.
///
/// D_N = M_N + A₂(x) where the exact-moment M_N carries the ∫Ψ_s′Ψ_k part and
/// A₂ holds the quadrature of the ν-ratio weight (∂_αν₂/ν₂)Ψ_sΨ_k; all the
/// ν-weighted integrands are closed-form, so a Gauss rule resolves them to
/// rounding.
pub fn assemble_matrices(
    x: f64,
    y: f64,
    basis: &Basis,
    m_n: &crate::basis::DerivMatrix,
    quad: &AlphaQuadrature,
    mode: DerivMode,
    fd_step: f64,
) -> Result<NodeMatrices> {
    let n = basis.n;
    let h = fd_step;
    let mut d_n = DMatrix::<f64>::zeros(n, n);
    let mut a_1 = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        for s in 0..n {
            d_n[(k, s)] = m_n.a(s, k);
        }
    }
    for (q, &alpha) in quad.nodes.iter().enumerate() {
        let (n1, n2) = direction_nu(x, y, alpha);
        let (dn1, dn2) = direction_nu_dalpha_mode(x, y, alpha, mode, h);
        let w_d = dn2 / n2; // weight on Ψ_s Ψ_k in D_N
        let w_a_deriv = n1 / n2; // weight on Ψ_s′ Ψ_k in A₁
        let w_a = dn1 / n2; // weight on Ψ_s Ψ_k in A₁
        let wq = quad.weights[q];
        for s in 0..n {
            let ps = basis.eval(s, alpha);
            let dps = basis.eval_deriv_mode(s, alpha, mode, h);
            for k in 0..n {
                let pk = basis.eval(k, alpha);
                d_n[(k, s)] += wq * w_d * ps * pk;
                a_1[(k, s)] += wq * (w_a_deriv * dps + w_a * ps) * pk;
            }
        }
    }
    let svd = d_n.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond_d_n = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let d_n_inv = d_n.clone().try_inverse().ok_or_else(|| {
        RteError::Numerical(format!("singular D_N at node ({x}, {y})"))
    })?;
    Ok(NodeMatrices {
        d_n,
        a_1,
        d_n_inv,
        cond_d_n,
    })
}

/// Assemble the matrices for every interior node of the inversion grid.
pub fn assemble_system(
    grid: &Grid2D,
    sources: &SourceGrid,
    basis: &Basis,
    mode: DerivMode,
) -> Result<SystemMatrices> {
    let m_n = basis.deriv_matrix();
    let quad = AlphaQuadrature::gauss(basis.d, ASSEMBLY_QUAD);
    let nxi = grid.nx() - 2;
    let nyi = grid.ny() - 2;
    let nodes: Vec<NodeMatrices> = (0..nxi * nyi)
        .into_par_iter()
        .map(|idx| {
            let i = idx % nxi + 1;
            let j = idx / nxi + 1;
            assemble_matrices(
                grid.x_nodes[i],
                grid.y_nodes[j],
                basis,
                &m_n,
                &quad,
                mode,
                sources.step,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SystemMatrices {
        grid: grid.clone(),
        n: basis.n,
        nodes,
    })
}

/// Context for evaluating the nonlinearity F(W, x) and its Jacobian at grid
/// nodes: basis and kernel tables over the quadrature nodes plus the ν-ratio
/// weights per node.
///
/// The derivative mode only changes how the Ψ_s′ and ∂_αK tables are filled
/// (closed form versus centered divided differences of step `fd_step`), so
/// both modes share one evaluation path.
pub struct NonlinearityCtx {
    pub n: usize,
    pub na: usize,
    /// Ψ_s(α_q), s major.
    pub psi: Vec<f64>,
    /// Ψ_s′(α_q), s major.
    pub dpsi: Vec<f64>,
    /// K(α_q, β_m) q major.
    pub kernel: Vec<f64>,
    /// ∂_α K(α_q, β_m) q major.
    pub kernel_dalpha: Vec<f64>,
    /// Quadrature weights over α (and β).
    pub weights: Vec<f64>,
}

impl NonlinearityCtx {
    pub fn new(
        basis: &Basis,
        kernel: &PhaseKernel,
        quad: &AlphaQuadrature,
        mode: DerivMode,
        fd_step: f64,
    ) -> Self {
        let n = basis.n;
        let na = quad.len();
        let h = fd_step;
        let mut psi = vec![0.0; n * na];
        let mut dpsi = vec![0.0; n * na];
        for s in 0..n {
            for (q, &a) in quad.nodes.iter().enumerate() {
                psi[s * na + q] = basis.eval(s, a);
                dpsi[s * na + q] = basis.eval_deriv_mode(s, a, mode, h);
            }
        }
        let mut kern = vec![0.0; na * na];
        let mut kern_da = vec![0.0; na * na];
        for (q, &a) in quad.nodes.iter().enumerate() {
            for (m, &b) in quad.nodes.iter().enumerate() {
                kern[q * na + m] = kernel.kernel_h(a, b);
                kern_da[q * na + m] = match mode {
                    DerivMode::Analytic => kernel.kernel_h_dalpha(a, b),
                    DerivMode::FiniteDifference => {
                        (kernel.kernel_h(a + h, b) - kernel.kernel_h(a - h, b)) / (2.0 * h)
                    }
                };
            }
        }
        NonlinearityCtx {
            n,
            na,
            psi,
            dpsi,
            kernel: kern,
            kernel_dalpha: kern_da,
            weights: quad.weights.clone(),
        }
    }

    /// w(α_q) = Σ_s w_s Ψ_s(α_q) and w_α(α_q) for one node's coefficients.
    fn spectral_values(&self, w: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let na = self.na;
        let mut wa = vec![0.0; na];
        let mut dwa = vec![0.0; na];
        for s in 0..self.n {
            let ws = w[s];
            if ws == 0.0 {
                continue;
            }
            for q in 0..na {
                wa[q] += ws * self.psi[s * na + q];
                dwa[q] += ws * self.dpsi[s * na + q];
            }
        }
        (wa, dwa)
    }

    /// F at one node given the ν-weights μ_s/ν₂(x, α_q).
    ///
    /// F_k = −∫ (μ_s/ν₂) ∂_α[e^{−w} ∫K e^{w} dβ] Ψ_k dα with the α-derivative
    /// expanded analytically (or taken by grid divided differences in
    /// finite-difference mode).
    pub fn eval_f(&self, w: &[f64], mu_over_nu2: &[f64]) -> Result<Vec<f64>> {
        let na = self.na;
        let (wa, dwa) = self.spectral_values(w);
        for &v in &wa {
            if v.abs() > 700.0 {
                return Err(RteError::Numerical(format!(
                    "iterate divergence: spectral value w = {v} overflows exp"
                )));
            }
        }
        let ew: Vec<f64> = wa.iter().map(|&v| v.exp()).collect();
        let emw: Vec<f64> = wa.iter().map(|&v| (-v).exp()).collect();
        // I(α_q) = ∫ K e^{w} dβ and its α-derivative.
        let mut big_i = vec![0.0; na];
        let mut big_i_da = vec![0.0; na];
        for q in 0..na {
            let mut acc = 0.0;
            let mut acc_da = 0.0;
            for m in 0..na {
                let wv = self.weights[m] * ew[m];
                acc += self.kernel[q * na + m] * wv;
                acc_da += self.kernel_dalpha[q * na + m] * wv;
            }
            big_i[q] = acc;
            big_i_da[q] = acc_da;
        }
        // bracket_da(α_q) = ∂_α [e^{-w} I] by the product rule.
        let bracket_da: Vec<f64> = (0..na)
            .map(|q| emw[q] * (big_i_da[q] - dwa[q] * big_i[q]))
            .collect();
        let mut f = vec![0.0; self.n];
        for (k, fk) in f.iter_mut().enumerate() {
            let mut acc = 0.0;
            for q in 0..na {
                acc += self.weights[q] * mu_over_nu2[q] * bracket_da[q] * self.psi[k * na + q];
            }
            *fk = -acc;
        }
        Ok(f)
    }

    /// F together with its N×N Jacobian ∂F_k/∂w_t.
    pub fn eval_f_jacobian(
        &self,
        w: &[f64],
        mu_over_nu2: &[f64],
    ) -> Result<(Vec<f64>, DMatrix<f64>)> {
        let na = self.na;
        let n = self.n;
        let (wa, dwa) = self.spectral_values(w);
        for &v in &wa {
            if v.abs() > 700.0 {
                return Err(RteError::Numerical(format!(
                    "iterate divergence: spectral value w = {v} overflows exp"
                )));
            }
        }
        let ew: Vec<f64> = wa.iter().map(|&v| v.exp()).collect();
        let emw: Vec<f64> = wa.iter().map(|&v| (-v).exp()).collect();
        let mut big_i = vec![0.0; na];
        let mut big_i_da = vec![0.0; na];
        for q in 0..na {
            let mut acc = 0.0;
            let mut acc_da = 0.0;
            for m in 0..na {
                let wv = self.weights[m] * ew[m];
                acc += self.kernel[q * na + m] * wv;
                acc_da += self.kernel_dalpha[q * na + m] * wv;
            }
            big_i[q] = acc;
            big_i_da[q] = acc_da;
        }
        // Derivatives of I and I_α with respect to w_t.
        // I_t(α_q) = ∫ K Ψ_t e^{w} dβ, likewise for ∂_α K.
        let mut i_t = vec![0.0; n * na];
        let mut i_da_t = vec![0.0; n * na];
        for t in 0..n {
            for q in 0..na {
                let mut acc = 0.0;
                let mut acc_da = 0.0;
                for m in 0..na {
                    let wv = self.weights[m] * self.psi[t * na + m] * ew[m];
                    acc += self.kernel[q * na + m] * wv;
                    acc_da += self.kernel_dalpha[q * na + m] * wv;
                }
                i_t[t * na + q] = acc;
                i_da_t[t * na + q] = acc_da;
            }
        }
        // bracket_da and its w_t-derivative at the quadrature nodes.
        let bracket_da: Vec<f64> = (0..na)
            .map(|q| emw[q] * (big_i_da[q] - dwa[q] * big_i[q]))
            .collect();
        let mut bracket_da_t = vec![0.0; n * na];
        for t in 0..n {
            for q in 0..na {
                let psi_tq = self.psi[t * na + q];
                let dpsi_tq = self.dpsi[t * na + q];
                bracket_da_t[t * na + q] = emw[q]
                    * (-psi_tq * (big_i_da[q] - dwa[q] * big_i[q])
                        + (i_da_t[t * na + q]
                            - dpsi_tq * big_i[q]
                            - dwa[q] * i_t[t * na + q]));
            }
        }
        let mut f = vec![0.0; n];
        let mut jac = DMatrix::<f64>::zeros(n, n);
        for k in 0..n {
            let mut acc = 0.0;
            for q in 0..na {
                acc += self.weights[q] * mu_over_nu2[q] * bracket_da[q] * self.psi[k * na + q];
            }
            f[k] = -acc;
            for t in 0..n {
                let mut accj = 0.0;
                for q in 0..na {
                    accj += self.weights[q]
                        * mu_over_nu2[q]
                        * bracket_da_t[t * na + q]
                        * self.psi[k * na + q];
                }
                jac[(k, t)] = -accj;
            }
        }
        Ok((f, jac))
    }
}

/// μ_s/ν₂(x, α_q) table for one node over the quadrature nodes.
pub fn mu_over_nu2_row(x: f64, y: f64, mu_s: f64, quad: &AlphaQuadrature) -> Vec<f64> {
    quad.nodes
        .iter()
        .map(|&a| {
            let (_, n2) = direction_nu(x, y, a);
            mu_s / n2
        })
        .collect()
}

/// Per-s L²(Ω) norms of the spectral coefficients of ln u: projects the log
/// radiance onto the first `basis.n` functions and reports each norm.
pub fn log_radiance_spectral_norms(
    u: &crate::grid::Radiance,
    basis: &Basis,
) -> Result<Vec<f64>> {
    let grid = &u.grid;
    let projector = SpectralProjector::new(basis, &u.sources);
    let n = basis.n;
    let na = u.sources.len();
    let wx = crate::grid::trapezoid_weights(grid.nx(), grid.step);
    let wy = crate::grid::trapezoid_weights(grid.ny(), grid.step);
    let mut sq_norms = vec![0.0; n];
    let mut samples = vec![0.0; na];
    for j in 0..grid.ny() {
        for i in 0..grid.nx() {
            for (k, sample) in samples.iter_mut().enumerate() {
                let v = u.at(i, j, k);
                if !(v > 0.0) {
                    return Err(RteError::Numerical(format!(
                        "non-positive radiance at ({i}, {j}, {k})"
                    )));
                }
                *sample = v.ln();
            }
            let ws = projector.project(&samples);
            for s in 0..n {
                sq_norms[s] += ws[s] * ws[s] * wx[i] * wy[j];
            }
        }
    }
    Ok(sq_norms.into_iter().map(f64::sqrt).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::build_basis;
    use crate::grid::{build_grids, GridPurpose};
    use crate::ExperimentConfig;

    fn setup() -> (ExperimentConfig, Grid2D, SourceGrid, Basis) {
        let cfg = ExperimentConfig::default();
        let (grid, sources) = build_grids(&cfg, GridPurpose::Inversion).unwrap();
        let basis = build_basis(cfg.source_half_length, cfg.n_basis).unwrap();
        (cfg, grid, sources, basis)
    }

    fn quad_of(basis: &Basis) -> AlphaQuadrature {
        AlphaQuadrature::gauss(basis.d, ASSEMBLY_QUAD)
    }

    #[test]
    fn log_of_ones_is_zero_and_round_trips() {
        let (_, grid, sources, _) = setup();
        let ones = BoundaryTrace::zeros(&grid, &sources).map(|_| 1.0);
        let logt = log_boundary(&ones).unwrap();
        assert_eq!(logt.min_value(), 0.0);
        let t = ones.map(|_| 2.37);
        let back = log_boundary(&t).unwrap().map(f64::exp);
        for side in Side::ALL {
            for idx in 0..back.side_len(side) {
                for k in 0..sources.len() {
                    assert!((back.at(side, idx, k) - 2.37).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn log_rejects_zero_naming_the_node() {
        let (_, grid, sources, _) = setup();
        let mut t = BoundaryTrace::zeros(&grid, &sources).map(|_| 1.0);
        t.set(Side::Top, 3, 5, 0.0);
        let err = log_boundary(&t).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("alpha index 5"), "{msg}");
        assert!(msg.contains('2'), "{msg}"); // y = b = 2 appears in the node
    }

    #[test]
    fn projection_recovers_basis_coefficients() {
        let (_, grid, sources, basis) = setup();
        // Log trace equal to Ψ_0(α) at every node: p = (1, 0, 0) up to
        // trapezoid error.
        let mut t = BoundaryTrace::zeros(&grid, &sources);
        for side in Side::ALL {
            for idx in 0..t.side_len(side) {
                for k in 0..sources.len() {
                    t.set(side, idx, k, basis.eval(0, sources.alpha_nodes[k]));
                }
            }
        }
        let p = project_boundary(&t, &basis);
        for side in Side::ALL {
            for idx in 0..p.side_len(side) {
                assert!((p.at(side, idx, 0) - 1.0).abs() < 1e-4);
                assert!(p.at(side, idx, 1).abs() < 1e-4);
                assert!(p.at(side, idx, 2).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn projection_of_zero_is_zero() {
        let (_, grid, sources, basis) = setup();
        let t = BoundaryTrace::zeros(&grid, &sources);
        let p = project_boundary(&t, &basis);
        for side in Side::ALL {
            for idx in 0..p.side_len(side) {
                for s in 0..basis.n {
                    assert_eq!(p.at(side, idx, s), 0.0);
                }
            }
        }
    }

    #[test]
    fn projection_is_idempotent_on_band_limited_data() {
        let (_, grid, sources, basis) = setup();
        // Start from arbitrary coefficients, synthesize the trace, project,
        // and compare.
        let coeffs = [0.7, -1.3, 0.25];
        let mut t = BoundaryTrace::zeros(&grid, &sources);
        for side in Side::ALL {
            for idx in 0..t.side_len(side) {
                for k in 0..sources.len() {
                    let a = sources.alpha_nodes[k];
                    let v: f64 = (0..3).map(|s| coeffs[s] * basis.eval(s, a)).sum();
                    t.set(side, idx, k, v);
                }
            }
        }
        let p1 = project_boundary(&t, &basis);
        // Re-synthesize from p1 and project again.
        let mut t2 = BoundaryTrace::zeros(&grid, &sources);
        for side in Side::ALL {
            for idx in 0..t2.side_len(side) {
                for k in 0..sources.len() {
                    let a = sources.alpha_nodes[k];
                    let v: f64 = (0..3).map(|s| p1.at(side, idx, s) * basis.eval(s, a)).sum();
                    t2.set(side, idx, k, v);
                }
            }
        }
        let p2 = project_boundary(&t2, &basis);
        for side in Side::ALL {
            for idx in 0..p1.side_len(side) {
                for s in 0..3 {
                    assert!(
                        (p1.at(side, idx, s) - p2.at(side, idx, s)).abs() < 1e-10,
                        "side {side:?} idx {idx} s {s}"
                    );
                }
            }
        }
    }

    #[test]
    fn zero_weights_reduce_d_to_m() {
        // With the ν-ratio weight forced to zero (far-field limit emulated by
        // a huge y), D_N − M_N shrinks with the weight itself.
        let (_, _, sources, basis) = setup();
        let m_n = basis.deriv_matrix();
        // Directly verify: assembling with weights suppressed is exactly M_N.
        // Emulate by assembling a D with the dn2/n2 weight zeroed out: use a
        // geometry where the weight is tiny and check convergence toward M_N.
        let d_small = assemble_matrices(0.0, 1e6, &basis, &m_n, &quad_of(&basis), DerivMode::Analytic, sources.step)
            .unwrap()
            .d_n;
        for k in 0..basis.n {
            for s in 0..basis.n {
                assert!(
                    (d_small[(k, s)] - m_n.a(s, k)).abs() < 1e-5,
                    "k={k} s={s}: {} vs {}",
                    d_small[(k, s)],
                    m_n.a(s, k)
                );
            }
        }
    }

    #[test]
    fn all_interior_nodes_invertible_on_default_grid() {
        let (cfg, grid, sources, basis) = setup();
        let sys = assemble_system(&grid, &sources, &basis, cfg.alpha_derivative).unwrap();
        assert_eq!(sys.nodes.len(), 19 * 19);
        for nm in &sys.nodes {
            let det = nm.d_n.clone().lu().determinant();
            assert!(det.abs() > 1e-6, "det = {det}");
            assert!(nm.cond_d_n.is_finite());
        }
        assert!(sys.max_g_norm().is_finite());
    }

    #[test]
    fn a1_norm_shrinks_when_domain_moves_away_from_sources() {
        let (cfg, _, sources, basis) = setup();
        let m_n = basis.deriv_matrix();
        let norm_at = |y: f64| {
            let nm =
                assemble_matrices(0.2, y, &basis, &m_n, &quad_of(&basis), cfg.alpha_derivative, sources.step)
                    .unwrap();
            inf_norm(&nm.a_1)
        };
        // Same lateral profile, domain shifted from a = 1 to a = 4.
        assert!(norm_at(4.2) < norm_at(1.2));
    }

    #[test]
    fn f_vanishes_without_scattering() {
        let (cfg, grid, sources, basis) = setup();
        let kernel = PhaseKernel::new(cfg.g_aniso, cfg.source_half_length);
        let quad = quad_of(&basis);
        let ctx = NonlinearityCtx::new(&basis, &kernel, &quad, cfg.alpha_derivative, sources.step);
        let row = mu_over_nu2_row(grid.x_nodes[5], grid.y_nodes[7], 0.0, &quad);
        let f = ctx.eval_f(&[0.4, -0.2, 0.1], &row).unwrap();
        for v in f {
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn f_vanishes_for_isotropic_kernel_and_zero_w() {
        // g = 0 kernel is constant; with w = 0 the bracket is constant in α,
        // so its α-derivative vanishes.
        let (cfg, grid, sources, basis) = setup();
        let kernel = PhaseKernel::new(0.0, cfg.source_half_length);
        let quad = quad_of(&basis);
        let ctx = NonlinearityCtx::new(&basis, &kernel, &quad, cfg.alpha_derivative, sources.step);
        let row = mu_over_nu2_row(grid.x_nodes[5], grid.y_nodes[7], cfg.mu_s_value, &quad);
        let f = ctx.eval_f(&[0.0; 3], &row).unwrap();
        for v in f {
            assert!(v.abs() < 1e-14, "F = {v}");
        }
    }

    #[test]
    fn f_jacobian_matches_directional_differences() {
        let (cfg, grid, sources, basis) = setup();
        let kernel = PhaseKernel::new(cfg.g_aniso, cfg.source_half_length);
        for mode in [DerivMode::Analytic, DerivMode::FiniteDifference] {
            let quad = quad_of(&basis);
            let ctx = NonlinearityCtx::new(&basis, &kernel, &quad, mode, sources.step);
            let row = mu_over_nu2_row(grid.x_nodes[3], grid.y_nodes[9], cfg.mu_s_value, &quad);
            let w = [0.31, -0.42, 0.17];
            let dir = [0.6, 0.3, -0.7];
            let (_, jac) = ctx.eval_f_jacobian(&w, &row).unwrap();
            let t = 1e-6;
            let wp: Vec<f64> = w.iter().zip(&dir).map(|(a, b)| a + t * b).collect();
            let wm: Vec<f64> = w.iter().zip(&dir).map(|(a, b)| a - t * b).collect();
            let fp = ctx.eval_f(&wp, &row).unwrap();
            let fm = ctx.eval_f(&wm, &row).unwrap();
            for k in 0..3 {
                let fd = (fp[k] - fm[k]) / (2.0 * t);
                let an: f64 = (0..3).map(|s| jac[(k, s)] * dir[s]).sum();
                assert!(
                    (fd - an).abs() / an.abs().max(1e-3) < 1e-6,
                    "{mode:?} k={k}: fd {fd} vs analytic {an}"
                );
            }
        }
    }

    #[test]
    fn f_overflow_guard_triggers() {
        let (cfg, grid, sources, basis) = setup();
        let kernel = PhaseKernel::new(cfg.g_aniso, cfg.source_half_length);
        let quad = quad_of(&basis);
        let ctx = NonlinearityCtx::new(&basis, &kernel, &quad, cfg.alpha_derivative, sources.step);
        let row = mu_over_nu2_row(grid.x_nodes[5], grid.y_nodes[7], cfg.mu_s_value, &quad);
        let err = ctx.eval_f(&[900.0, 0.0, 0.0], &row).unwrap_err();
        assert!(matches!(err, RteError::Numerical(_)));
    }

    #[test]
    fn f_is_invariant_under_constant_log_shifts() {
        // Scaling the data g1 by a constant κ shifts w by ln κ; the combined
        // e^{-w} (...) e^{w} structure leaves F unchanged. The projection of
        // the constant 1 is band-limited only approximately, so use N = 12
        // where its truncation error is ~1e-9.
        let cfg = ExperimentConfig::default();
        let (grid, sources) = build_grids(&cfg, GridPurpose::Inversion).unwrap();
        let basis = build_basis(cfg.source_half_length, 12).unwrap();
        let kernel = PhaseKernel::new(cfg.g_aniso, cfg.source_half_length);
        let quad = AlphaQuadrature::gauss(basis.d, ASSEMBLY_QUAD);
        let ctx = NonlinearityCtx::new(&basis, &kernel, &quad, DerivMode::Analytic, sources.step);
        let row = mu_over_nu2_row(grid.x_nodes[5], grid.y_nodes[7], cfg.mu_s_value, &quad);
        // Projection of the constant function 1 onto the basis, by exact
        // moments.
        let one_proj: Vec<f64> = (0..12).map(|s| basis.exact_integral(s)).collect();
        let kappa: f64 = 2.0;
        let mut w = vec![0.0; 12];
        w[0] = 0.4;
        w[1] = -0.2;
        w[2] = 0.1;
        let shifted: Vec<f64> = w
            .iter()
            .zip(&one_proj)
            .map(|(a, b)| a + kappa.ln() * b)
            .collect();
        let f0 = ctx.eval_f(&w, &row).unwrap();
        let f1 = ctx.eval_f(&shifted, &row).unwrap();
        for k in 0..12 {
            assert!(
                (f0[k] - f1[k]).abs() < 1e-6 * f0[k].abs().max(1.0),
                "k={k}: {} vs {}",
                f0[k],
                f1[k]
            );
        }
    }
}
