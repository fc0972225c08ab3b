//! The weighted least-squares functional over the truncated coefficient field,
//! its exact gradient, the descent methods, and the recovery of the
//! attenuation coefficient from the minimizer.

use crate::assembly::{
    mu_over_nu2_row, BoundaryCoefficients, NonlinearityCtx, SystemMatrices, ASSEMBLY_QUAD,
};
use crate::basis::Basis;
use crate::config::DerivMode;
use crate::error::{Result, RteError};
use crate::geom::direction_nu;
use crate::grid::{Grid2D, Radiance, ScalarField2D, Side, SourceGrid};
use crate::quad::{AlphaQuadrature, SpectralProjector};
use crate::source::PhaseKernel;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// N-vector coefficient field w_s(x, y) on the inversion grid, boundary nodes
/// carrying the fixed Dirichlet data.
#[derive(Debug, Clone)]
pub struct CoefficientVectorField {
    pub grid: Grid2D,
    pub n: usize,
    /// values[(j * nx + i) * n + s].
    pub values: Vec<f64>,
}

impl CoefficientVectorField {
    pub fn zeros(grid: &Grid2D, n: usize) -> Self {
        CoefficientVectorField {
            values: vec![0.0; grid.nx() * grid.ny() * n],
            grid: grid.clone(),
            n,
        }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, s: usize) -> f64 {
        self.values[(j * self.grid.nx() + i) * self.n + s]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, s: usize, v: f64) {
        let nx = self.grid.nx();
        self.values[(j * nx + i) * self.n + s] = v;
    }

    /// Slice of the N coefficients at one node.
    #[inline]
    pub fn node(&self, i: usize, j: usize) -> &[f64] {
        let base = (j * self.grid.nx() + i) * self.n;
        &self.values[base..base + self.n]
    }

    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i == self.grid.nx() - 1 || j == self.grid.ny() - 1
    }

    /// Overwrite boundary nodes with the Dirichlet data.
    pub fn apply_boundary(&mut self, p: &BoundaryCoefficients) {
        let nx = self.grid.nx();
        let ny = self.grid.ny();
        for i in 0..nx {
            for s in 0..self.n {
                self.set(i, 0, s, p.at(Side::Bottom, i, s));
                self.set(i, ny - 1, s, p.at(Side::Top, i, s));
            }
        }
        for j in 1..ny - 1 {
            for s in 0..self.n {
                self.set(0, j, s, p.at(Side::Left, j - 1, s));
                self.set(nx - 1, j, s, p.at(Side::Right, j - 1, s));
            }
        }
    }

    /// Largest absolute mismatch between the stored boundary and `p`.
    pub fn boundary_defect(&self, p: &BoundaryCoefficients) -> f64 {
        let mut copy = self.clone();
        copy.apply_boundary(p);
        self.values
            .iter()
            .zip(&copy.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Discrete H¹-type norm over interior nodes (values plus centered
    /// first differences), weighted by h².
    pub fn h1_norm(&self) -> f64 {
        let nx = self.grid.nx();
        let ny = self.grid.ny();
        let h = self.grid.step;
        let mut sum = 0.0;
        for j in 1..ny - 1 {
            for i in 1..nx - 1 {
                for s in 0..self.n {
                    let v = self.at(i, j, s);
                    let vx = (self.at(i + 1, j, s) - self.at(i - 1, j, s)) / (2.0 * h);
                    let vy = (self.at(i, j + 1, s) - self.at(i, j - 1, s)) / (2.0 * h);
                    sum += (v * v + vx * vx + vy * vy) * h * h;
                }
            }
        }
        sum.sqrt()
    }

    fn interior_len(&self) -> usize {
        (self.grid.nx() - 2) * (self.grid.ny() - 2) * self.n
    }

    fn pack_interior(&self) -> Vec<f64> {
        let nx = self.grid.nx();
        let ny = self.grid.ny();
        let mut out = Vec::with_capacity(self.interior_len());
        for j in 1..ny - 1 {
            for i in 1..nx - 1 {
                out.extend_from_slice(self.node(i, j));
            }
        }
        out
    }

    fn unpack_interior(&mut self, dof: &[f64]) {
        let nx = self.grid.nx();
        let ny = self.grid.ny();
        let mut idx = 0;
        for j in 1..ny - 1 {
            for i in 1..nx - 1 {
                for s in 0..self.n {
                    self.set(i, j, s, dof[idx]);
                    idx += 1;
                }
            }
        }
    }
}

/// Starting point: the average of the x- and y-direction linear
/// interpolations of the boundary data, boundary nodes overridden with the
/// data itself.
pub fn initial_guess(p: &BoundaryCoefficients, grid: &Grid2D) -> CoefficientVectorField {
    let n = p.n;
    let nx = grid.nx();
    let ny = grid.ny();
    let (x_min, x_max) = (grid.x_min(), grid.x_max());
    let (y_min, y_max) = (grid.y_min(), grid.y_max());
    let width = x_max - x_min;
    let height = y_max - y_min;
    let mut w = CoefficientVectorField::zeros(grid, n);
    for j in 1..ny - 1 {
        let y = grid.y_nodes[j];
        for i in 1..nx - 1 {
            let x = grid.x_nodes[i];
            for s in 0..n {
                let horiz = (x_max - x) / width * p.at(Side::Left, j - 1, s)
                    + (x - x_min) / width * p.at(Side::Right, j - 1, s);
                let vert = (y_max - y) / height * p.at(Side::Bottom, i, s)
                    + (y - y_min) / height * p.at(Side::Top, i, s);
                w.set(i, j, s, 0.5 * (horiz + vert));
            }
        }
    }
    w.apply_boundary(p);
    w
}

/// The fully discrete Carleman-weighted functional: everything fixed except
/// the interior coefficient values.
pub struct Functional {
    pub grid: Grid2D,
    pub sources: SourceGrid,
    pub n: usize,
    pub lambda: f64,
    pub boundary: BoundaryCoefficients,
    system: SystemMatrices,
    ctx: NonlinearityCtx,
    /// μ_s/ν₂ tables per interior node, row-major over the interior.
    mu_rows: Vec<Vec<f64>>,
    /// Carleman weight e^{2λy_j} per y level.
    weight: Vec<f64>,
    h: f64,
}

impl Functional {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        grid: &Grid2D,
        sources: &SourceGrid,
        basis: &Basis,
        kernel: &PhaseKernel,
        mu_s_value: f64,
        lambda: f64,
        mode: DerivMode,
        boundary: BoundaryCoefficients,
    ) -> Result<Self> {
        let system = crate::assembly::assemble_system(grid, sources, basis, mode)?;
        let quad = AlphaQuadrature::gauss(basis.d, ASSEMBLY_QUAD);
        let ctx = NonlinearityCtx::new(basis, kernel, &quad, mode, sources.step);
        let nxi = grid.nx() - 2;
        let nyi = grid.ny() - 2;
        let mu_rows: Vec<Vec<f64>> = (0..nxi * nyi)
            .map(|idx| {
                let i = idx % nxi + 1;
                let j = idx / nxi + 1;
                mu_over_nu2_row(grid.x_nodes[i], grid.y_nodes[j], mu_s_value, &quad)
            })
            .collect();
        // The weight is normalized by its maximum over the closed domain
        // (a pure scaling of the functional: same minimizers, same descent
        // paths), which keeps J at a magnitude where the stopping tolerance
        // acts at a comparable residual level for every lambda. A negative
        // lambda selects the weight decreasing in y instead.
        let y_ref = if lambda >= 0.0 {
            grid.y_max()
        } else {
            grid.y_min()
        };
        let weight = grid
            .y_nodes
            .iter()
            .map(|&y| (2.0 * lambda * (y - y_ref)).exp())
            .collect();
        Ok(Functional {
            grid: grid.clone(),
            sources: sources.clone(),
            n: basis.n,
            lambda,
            boundary,
            system,
            ctx,
            mu_rows,
            weight,
            h: grid.step,
        })
    }

    pub fn system(&self) -> &SystemMatrices {
        &self.system
    }

    fn interior_dims(&self) -> (usize, usize) {
        (self.grid.nx() - 2, self.grid.ny() - 2)
    }

    /// Residual R = D_N W_y + A₁ W_x + F(W) at one interior node, derivatives
    /// by centered differences.
    fn node_residual(&self, w: &CoefficientVectorField, i: usize, j: usize) -> Result<Vec<f64>> {
        let n = self.n;
        let h2 = 2.0 * self.h;
        let nm = self.system.at(i, j);
        let (nxi, _) = self.interior_dims();
        let row = &self.mu_rows[(j - 1) * nxi + (i - 1)];
        let f = self.ctx.eval_f(w.node(i, j), row)?;
        let mut r = f;
        for s in 0..n {
            let wy = (w.at(i, j + 1, s) - w.at(i, j - 1, s)) / h2;
            let wx = (w.at(i + 1, j, s) - w.at(i - 1, j, s)) / h2;
            for k in 0..n {
                r[k] += nm.d_n[(k, s)] * wy + nm.a_1[(k, s)] * wx;
            }
        }
        Ok(r)
    }

    /// Residual, system matrices and F-Jacobian at one interior node
    /// (diagnostics and test oracles).
    pub fn node_parts(
        &self,
        w: &CoefficientVectorField,
        i: usize,
        j: usize,
    ) -> Result<(Vec<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
        let n = self.n;
        let (nxi, _) = self.interior_dims();
        let row = &self.mu_rows[(j - 1) * nxi + (i - 1)];
        let (f, jac) = self.ctx.eval_f_jacobian(w.node(i, j), row)?;
        let nm = self.system.at(i, j);
        let h2 = 2.0 * self.h;
        let mut r = f;
        for s in 0..n {
            let wy = (w.at(i, j + 1, s) - w.at(i, j - 1, s)) / h2;
            let wx = (w.at(i + 1, j, s) - w.at(i - 1, j, s)) / h2;
            for k in 0..n {
                r[k] += nm.d_n[(k, s)] * wy + nm.a_1[(k, s)] * wx;
            }
        }
        Ok((r, nm.d_n.clone(), nm.a_1.clone(), jac))
    }

    /// J(W): the weighted sum of squared residuals over interior nodes.
    pub fn eval(&self, w: &CoefficientVectorField) -> Result<f64> {
        let (nxi, nyi) = self.interior_dims();
        let parts: Vec<Result<f64>> = (0..nxi * nyi)
            .into_par_iter()
            .map(|idx| {
                let i = idx % nxi + 1;
                let j = idx / nxi + 1;
                let r = self.node_residual(w, i, j)?;
                let rr: f64 = r.iter().map(|v| v * v).sum();
                Ok(rr * self.weight[j] * self.h * self.h)
            })
            .collect();
        let mut total = 0.0;
        for p in parts {
            total += p?;
        }
        Ok(total)
    }

    /// Unweighted discrete L² norm of the residual field (consistency
    /// diagnostics).
    pub fn residual_l2(&self, w: &CoefficientVectorField) -> Result<f64> {
        let (nxi, nyi) = self.interior_dims();
        let mut total = 0.0;
        for idx in 0..nxi * nyi {
            let i = idx % nxi + 1;
            let j = idx / nxi + 1;
            let r = self.node_residual(w, i, j)?;
            let rr: f64 = r.iter().map(|v| v * v).sum();
            total += rr * self.h * self.h;
        }
        Ok(total.sqrt())
    }

    /// J(W) together with its exact gradient over interior nodes (zero at
    /// boundary nodes by construction).
    pub fn eval_grad(&self, w: &CoefficientVectorField) -> Result<(f64, CoefficientVectorField)> {
        let n = self.n;
        let (nxi, nyi) = self.interior_dims();
        // Pass 1: per-node scaled residuals t = 2 w_j h² R and Jᶠᵀ t.
        struct NodeData {
            t: Vec<f64>,
            jft: Vec<f64>,
            j_part: f64,
        }
        let nodes: Vec<Result<NodeData>> = (0..nxi * nyi)
            .into_par_iter()
            .map(|idx| {
                let i = idx % nxi + 1;
                let j = idx / nxi + 1;
                let row = &self.mu_rows[idx];
                let (f, jac) = self.ctx.eval_f_jacobian(w.node(i, j), row)?;
                let nm = self.system.at(i, j);
                let h2 = 2.0 * self.h;
                let mut r = f;
                for s in 0..n {
                    let wy = (w.at(i, j + 1, s) - w.at(i, j - 1, s)) / h2;
                    let wx = (w.at(i + 1, j, s) - w.at(i - 1, j, s)) / h2;
                    for k in 0..n {
                        r[k] += nm.d_n[(k, s)] * wy + nm.a_1[(k, s)] * wx;
                    }
                }
                let rr: f64 = r.iter().map(|v| v * v).sum();
                let scale = 2.0 * self.weight[j] * self.h * self.h;
                let t: Vec<f64> = r.iter().map(|v| v * scale).collect();
                let mut jft = vec![0.0; n];
                for s in 0..n {
                    let mut acc = 0.0;
                    for k in 0..n {
                        acc += jac[(k, s)] * t[k];
                    }
                    jft[s] = acc;
                }
                Ok(NodeData {
                    t,
                    jft,
                    j_part: rr * self.weight[j] * self.h * self.h,
                })
            })
            .collect();
        let mut data = Vec::with_capacity(nxi * nyi);
        let mut j_total = 0.0;
        for nd in nodes {
            let nd = nd?;
            j_total += nd.j_part;
            data.push(nd);
        }
        // Pass 2: gather. The residual at a neighbor couples through the
        // centered-difference stencil with ±1/(2h).
        let mut grad = CoefficientVectorField::zeros(&self.grid, n);
        let h2 = 2.0 * self.h;
        let grad_rows: Vec<Vec<f64>> = (0..nxi * nyi)
            .into_par_iter()
            .map(|idx| {
                let i = idx % nxi + 1;
                let j = idx / nxi + 1;
                let mut g = data[idx].jft.clone();
                // Residual below (at j-1) sees W here through +D/(2h).
                if j - 1 >= 1 {
                    let nidx = (j - 2) * nxi + (i - 1);
                    let nm = self.system.at(i, j - 1);
                    let t = &data[nidx].t;
                    for s in 0..n {
                        let mut acc = 0.0;
                        for k in 0..n {
                            acc += nm.d_n[(k, s)] * t[k];
                        }
                        g[s] += acc / h2;
                    }
                }
                // Residual above sees W here through -D/(2h).
                if j + 1 <= nyi {
                    let nidx = j * nxi + (i - 1);
                    let nm = self.system.at(i, j + 1);
                    let t = &data[nidx].t;
                    for s in 0..n {
                        let mut acc = 0.0;
                        for k in 0..n {
                            acc += nm.d_n[(k, s)] * t[k];
                        }
                        g[s] -= acc / h2;
                    }
                }
                // Residual to the left sees W here through +A₁/(2h).
                if i - 1 >= 1 {
                    let nidx = (j - 1) * nxi + (i - 2);
                    let nm = self.system.at(i - 1, j);
                    let t = &data[nidx].t;
                    for s in 0..n {
                        let mut acc = 0.0;
                        for k in 0..n {
                            acc += nm.a_1[(k, s)] * t[k];
                        }
                        g[s] += acc / h2;
                    }
                }
                // Residual to the right sees W here through -A₁/(2h).
                if i + 1 <= nxi {
                    let nidx = (j - 1) * nxi + i;
                    let nm = self.system.at(i + 1, j);
                    let t = &data[nidx].t;
                    for s in 0..n {
                        let mut acc = 0.0;
                        for k in 0..n {
                            acc += nm.a_1[(k, s)] * t[k];
                        }
                        g[s] -= acc / h2;
                    }
                }
                g
            })
            .collect();
        for (idx, g) in grad_rows.into_iter().enumerate() {
            let i = idx % nxi + 1;
            let j = idx / nxi + 1;
            for (s, v) in g.into_iter().enumerate() {
                grad.set(i, j, s, v);
            }
        }
        Ok((j_total, grad))
    }

    /// Jacobi preconditioner: the diagonal of the Gauss-Newton Hessian at `w`.
    fn gauss_newton_diagonal(&self, w: &CoefficientVectorField) -> Result<Vec<f64>> {
        let n = self.n;
        let (nxi, nyi) = self.interior_dims();
        let col_sq = |m: &DMatrix<f64>, s: usize| -> f64 {
            (0..n).map(|k| m[(k, s)] * m[(k, s)]).sum()
        };
        let wgt = |j: usize| 2.0 * self.weight[j] * self.h * self.h;
        let mut diag = vec![0.0; nxi * nyi * n];
        for j in 1..=nyi {
            for i in 1..=nxi {
                let row = &self.mu_rows[(j - 1) * nxi + (i - 1)];
                let (_, jac) = self.ctx.eval_f_jacobian(w.node(i, j), row)?;
                let base = ((j - 1) * nxi + (i - 1)) * n;
                let quarter_h2 = 4.0 * self.h * self.h;
                for s in 0..n {
                    let mut v = wgt(j) * col_sq(&jac, s);
                    if j + 1 <= nyi {
                        v += wgt(j + 1) * col_sq(&self.system.at(i, j + 1).d_n, s) / quarter_h2;
                    }
                    if j >= 2 {
                        v += wgt(j - 1) * col_sq(&self.system.at(i, j - 1).d_n, s) / quarter_h2;
                    }
                    if i + 1 <= nxi {
                        v += wgt(j) * col_sq(&self.system.at(i + 1, j).a_1, s) / quarter_h2;
                    }
                    if i >= 2 {
                        v += wgt(j) * col_sq(&self.system.at(i - 1, j).a_1, s) / quarter_h2;
                    }
                    diag[base + s] = v;
                }
            }
        }
        let max = diag.iter().cloned().fold(0.0, f64::max);
        let floor = max * 1e-14 + f64::MIN_POSITIVE;
        for v in diag.iter_mut() {
            *v = v.max(floor);
        }
        Ok(diag)
    }
}

/// Descent method selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    GradientDescent,
    QuasiNewton,
}

#[derive(Debug, Clone)]
pub struct MinimizeOptions {
    pub method: Method,
    pub max_iters: usize,
    pub stop_tol: f64,
    /// History pairs kept by the quasi-Newton method.
    pub memory: usize,
    /// Initial step of the gradient-descent backtracking search.
    pub gd_step: f64,
    /// Scale the quasi-Newton seed matrix by the Gauss-Newton diagonal.
    pub precondition: bool,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        MinimizeOptions {
            method: Method::QuasiNewton,
            max_iters: 5000,
            stop_tol: 1e-2,
            memory: 10,
            gd_step: 1e-2,
            precondition: false,
        }
    }
}

/// What the minimizer did.
#[derive(Debug, Clone)]
pub struct MinimizeReport {
    pub iterations: usize,
    pub final_j: f64,
    pub j_history: Vec<f64>,
    pub h1_history: Vec<f64>,
    pub step_policy: String,
    pub converged: bool,
    pub wall_secs: f64,
    pub max_h1_norm: f64,
}

/// Minimize J from `w0` (whose boundary must match the functional's data).
pub fn minimize(
    functional: &Functional,
    w0: &CoefficientVectorField,
    opts: &MinimizeOptions,
) -> Result<(CoefficientVectorField, MinimizeReport)> {
    minimize_traced(functional, w0, opts, |_| {})
}

/// As [`minimize`], invoking `on_iterate` with every accepted iterate.
pub fn minimize_traced(
    functional: &Functional,
    w0: &CoefficientVectorField,
    opts: &MinimizeOptions,
    mut on_iterate: impl FnMut(&CoefficientVectorField),
) -> Result<(CoefficientVectorField, MinimizeReport)> {
    let start = std::time::Instant::now();
    if w0.boundary_defect(&functional.boundary) > 1e-12 {
        return Err(RteError::Config(
            "starting point boundary does not match the data".into(),
        ));
    }
    let mut w = w0.clone();
    let mut dof = w.pack_interior();
    let ndof = dof.len();
    let _ = ndof;
    let (mut j_val, mut grad_field) = functional.eval_grad(&w)?;
    let mut grad = grad_field.pack_interior();
    let mut history = vec![j_val];
    let mut h1_history = vec![w.h1_norm()];
    let mut max_h1 = h1_history[0];
    let mut converged = j_val.abs() < opts.stop_tol;
    let mut iterations = 0;

    // Quasi-Newton state.
    let precond = if opts.method == Method::QuasiNewton {
        if opts.precondition {
            functional.gauss_newton_diagonal(&w)?
        } else {
            vec![1.0; ndof]
        }
    } else {
        Vec::new()
    };
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut rho_hist: Vec<f64> = Vec::new();
    let mut gamma = 1.0f64;

    let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };

    while !converged && iterations < opts.max_iters {
        // Search direction.
        let mut dir: Vec<f64> = match opts.method {
            Method::GradientDescent => grad.iter().map(|g| -g).collect(),
            Method::QuasiNewton => {
                let mut q = grad.clone();
                let m = s_hist.len();
                let mut alphas = vec![0.0; m];
                for idx in (0..m).rev() {
                    let a = rho_hist[idx] * dot(&s_hist[idx], &q);
                    alphas[idx] = a;
                    for (qv, yv) in q.iter_mut().zip(&y_hist[idx]) {
                        *qv -= a * yv;
                    }
                }
                let mut r: Vec<f64> = q
                    .iter()
                    .zip(&precond)
                    .map(|(qv, dv)| gamma * qv / dv)
                    .collect();
                for idx in 0..m {
                    let b = rho_hist[idx] * dot(&y_hist[idx], &r);
                    let a = alphas[idx];
                    for (rv, sv) in r.iter_mut().zip(&s_hist[idx]) {
                        *rv += (a - b) * sv;
                    }
                }
                r.iter_mut().for_each(|v| *v = -*v);
                r
            }
        };
        let mut slope = dot(&grad, &dir);
        if slope >= 0.0 {
            // Curvature information went stale; fall back to steepest descent.
            dir = grad.iter().map(|g| -g).collect();
            slope = dot(&grad, &dir);
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            if slope >= 0.0 {
                break; // zero gradient
            }
        }
        // Backtracking on simple decrease.
        let mut step = match opts.method {
            Method::GradientDescent => opts.gd_step,
            Method::QuasiNewton => 1.0,
        };
        let mut accepted = false;
        let mut new_j = j_val;
        let mut new_dof = dof.clone();
        for _ in 0..60 {
            for ((nd, &d0), &dv) in new_dof.iter_mut().zip(&dof).zip(&dir) {
                *nd = d0 + step * dv;
            }
            w.unpack_interior(&new_dof);
            match functional.eval(&w) {
                Ok(j_try) if j_try < j_val => {
                    new_j = j_try;
                    accepted = true;
                    break;
                }
                Ok(_) => step *= 0.5,
                // Overflow inside F at an over-long step: shrink and retry.
                Err(RteError::Numerical(_)) => step *= 0.5,
                Err(e) => return Err(e),
            }
        }
        if !accepted {
            // No decrease possible along this direction at any feasible step.
            w.unpack_interior(&dof);
            break;
        }
        iterations += 1;
        let (j_new, grad_field_new) = {
            w.unpack_interior(&new_dof);
            let (jv, gf) = functional.eval_grad(&w)?;
            (jv, gf)
        };
        grad_field = grad_field_new;
        let new_grad = grad_field.pack_interior();
        if opts.method == Method::QuasiNewton {
            let s_vec: Vec<f64> = new_dof.iter().zip(&dof).map(|(a, b)| a - b).collect();
            let y_vec: Vec<f64> = new_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
            let sy = dot(&s_vec, &y_vec);
            let ss = dot(&s_vec, &s_vec).sqrt();
            let yy = dot(&y_vec, &y_vec).sqrt();
            if sy > 1e-12 * ss * yy {
                // Scale of the initial matrix in the preconditioned metric.
                let y_dy: f64 = y_vec
                    .iter()
                    .zip(&precond)
                    .map(|(yv, dv)| yv * yv / dv)
                    .sum();
                if y_dy > 0.0 {
                    gamma = sy / y_dy;
                }
                s_hist.push(s_vec);
                y_hist.push(y_vec);
                rho_hist.push(1.0 / sy);
                if s_hist.len() > opts.memory {
                    s_hist.remove(0);
                    y_hist.remove(0);
                    rho_hist.remove(0);
                }
            }
        }
        dof = new_dof;
        grad = new_grad;
        j_val = j_new;
        debug_assert!(j_val <= *history.last().unwrap());
        history.push(j_val);
        let h1 = w.h1_norm();
        max_h1 = max_h1.max(h1);
        h1_history.push(h1);
        on_iterate(&w);
        if j_val.abs() < opts.stop_tol {
            converged = true;
        }
    }
    w.unpack_interior(&dof);
    let report = MinimizeReport {
        iterations,
        final_j: j_val,
        j_history: history,
        h1_history,
        step_policy: match opts.method {
            Method::GradientDescent => format!(
                "gradient descent, backtracking from {} (halving, simple decrease)",
                opts.gd_step
            ),
            Method::QuasiNewton => format!(
                "limited-memory quasi-Newton ({} pairs), backtracking from 1 (halving, simple decrease)",
                opts.memory
            ),
        },
        converged,
        wall_secs: start.elapsed().as_secs_f64(),
        max_h1_norm: max_h1,
    };
    Ok((w, report))
}

/// Recover the attenuation coefficient from the minimizer: ray-direction
/// derivative term plus the scattering term, integrated over the source
/// segment.
pub fn recover_a(
    w: &CoefficientVectorField,
    basis: &Basis,
    kernel: &PhaseKernel,
    mu_s_value: f64,
    mode: DerivMode,
) -> Result<ScalarField2D> {
    let grid = &w.grid;
    let nx = grid.nx();
    let ny = grid.ny();
    let n = w.n;
    let h = grid.step;
    let d = basis.d;
    let quad = AlphaQuadrature::gauss(d, ASSEMBLY_QUAD);
    let weights = &quad.weights;
    let na = quad.len();
    let mut psi = vec![0.0; n * na];
    for s in 0..n {
        for (q, &a) in quad.nodes.iter().enumerate() {
            psi[s * na + q] = basis.eval(s, a);
        }
    }
    let mut kern = vec![0.0; na * na];
    for (q, &a) in quad.nodes.iter().enumerate() {
        for (m, &b) in quad.nodes.iter().enumerate() {
            kern[q * na + m] = kernel.kernel_h(a, b);
        }
    }
    // One-sided second-order differences at the boundary.
    let deriv = |get: &dyn Fn(usize) -> f64, idx: usize, len: usize| -> f64 {
        if idx == 0 {
            (-3.0 * get(0) + 4.0 * get(1) - get(2)) / (2.0 * h)
        } else if idx == len - 1 {
            (3.0 * get(len - 1) - 4.0 * get(len - 2) + get(len - 3)) / (2.0 * h)
        } else {
            (get(idx + 1) - get(idx - 1)) / (2.0 * h)
        }
    };
    let mut values = vec![0.0; nx * ny];
    for j in 0..ny {
        let y = grid.y_nodes[j];
        for i in 0..nx {
            let x = grid.x_nodes[i];
            let mut wx = vec![0.0; n];
            let mut wy = vec![0.0; n];
            for s in 0..n {
                wx[s] = deriv(&|ii| w.at(ii, j, s), i, nx);
                wy[s] = deriv(&|jj| w.at(i, jj, s), j, ny);
            }
            let wnode = w.node(i, j);
            // Spectral synthesis at the quadrature nodes.
            let mut w_val = vec![0.0; na];
            let mut w_dx = vec![0.0; na];
            let mut w_dy = vec![0.0; na];
            for s in 0..n {
                for q in 0..na {
                    let p = psi[s * na + q];
                    w_val[q] += wnode[s] * p;
                    w_dx[q] += wx[s] * p;
                    w_dy[q] += wy[s] * p;
                }
            }
            for &v in &w_val {
                if v.abs() > 700.0 {
                    return Err(RteError::Numerical(format!(
                        "exp overflow in recovery at node ({i}, {j})"
                    )));
                }
            }
            let ew: Vec<f64> = w_val.iter().map(|&v| v.exp()).collect();
            let mut transport = 0.0;
            let mut scatter = 0.0;
            for q in 0..na {
                let (n1, n2) = direction_nu(x, y, quad.nodes[q]);
                transport += weights[q] * (n1 * w_dx[q] + n2 * w_dy[q]);
                let mut inner = 0.0;
                for m in 0..na {
                    inner += weights[m] * kern[q * na + m] * ew[m];
                }
                scatter += weights[q] * (-w_val[q]).exp() * mu_s_value * inner;
            }
            values[j * nx + i] = (-transport + scatter) / (2.0 * d);
        }
    }
    let _ = mode;
    Ok(ScalarField2D {
        grid: grid.clone(),
        values,
    })
}

/// Project the log of a radiance field node-by-node onto the basis: the
/// spectral coefficient field of ln u on the radiance's own grid.
pub fn project_log_radiance(u: &Radiance, basis: &Basis) -> Result<CoefficientVectorField> {
    let projector = SpectralProjector::new(basis, &u.sources);
    let na = u.sources.len();
    let n = basis.n;
    let mut w = CoefficientVectorField::zeros(&u.grid, n);
    let mut samples = vec![0.0; na];
    for j in 0..u.grid.ny() {
        for i in 0..u.grid.nx() {
            for (k, sample) in samples.iter_mut().enumerate() {
                let v = u.at(i, j, k);
                if !(v > 0.0) {
                    return Err(RteError::Numerical(format!(
                        "non-positive radiance at ({i}, {j}, {k})"
                    )));
                }
                *sample = v.ln();
            }
            let p = projector.project(&samples);
            for s in 0..n {
                w.set(i, j, s, p[s]);
            }
        }
    }
    Ok(w)
}

/// Restrict a radiance field to every `ratio`-th node in x, y and α.
pub fn downsample_radiance(u: &Radiance, ratio: usize) -> Radiance {
    assert!(ratio >= 1);
    let nx = (u.grid.nx() - 1) / ratio + 1;
    let ny = (u.grid.ny() - 1) / ratio + 1;
    let na = (u.sources.len() - 1) / ratio + 1;
    let grid = Grid2D {
        x_nodes: (0..nx).map(|i| u.grid.x_nodes[i * ratio]).collect(),
        y_nodes: (0..ny).map(|j| u.grid.y_nodes[j * ratio]).collect(),
        step: u.grid.step * ratio as f64,
    };
    let sources = SourceGrid {
        alpha_nodes: (0..na).map(|k| u.sources.alpha_nodes[k * ratio]).collect(),
        step: u.sources.step * ratio as f64,
    };
    let mut out = Radiance::zeros(&grid, &sources);
    for j in 0..ny {
        for i in 0..nx {
            for k in 0..na {
                out.set(i, j, k, u.at(i * ratio, j * ratio, k * ratio));
            }
        }
    }
    out
}

/// Midpoint-convexity probe over random in-ball pairs around `center`.
#[derive(Debug, Clone)]
pub struct ConvexityReport {
    pub pairs: usize,
    pub violations: usize,
    /// Largest value of J(mid) − (J(W₁)+J(W₂))/2 observed (negative when the
    /// functional behaved convexly on every pair).
    pub max_gap: f64,
}

/// Draw `pairs` random pairs in the H¹ ball of the given radius around
/// `center` (perturbations vanish on the boundary) and count midpoint
/// convexity violations.
pub fn probe_convexity(
    functional: &Functional,
    center: &CoefficientVectorField,
    radius: f64,
    pairs: usize,
    seed: u64,
) -> Result<ConvexityReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    let mut max_gap = f64::NEG_INFINITY;
    let mut draw = |rng: &mut ChaCha8Rng| -> CoefficientVectorField {
        let mut v = CoefficientVectorField::zeros(&center.grid, center.n);
        for j in 1..center.grid.ny() - 1 {
            for i in 1..center.grid.nx() - 1 {
                for s in 0..center.n {
                    v.set(i, j, s, rng.gen_range(-1.0..1.0));
                }
            }
        }
        let norm = v.h1_norm();
        let target = radius * rng.gen_range(0.0f64..1.0).powf(0.5);
        let scale = if norm > 0.0 { target / norm } else { 0.0 };
        let mut w = center.clone();
        for (wv, vv) in w.values.iter_mut().zip(&v.values) {
            *wv += scale * vv;
        }
        w
    };
    for _ in 0..pairs {
        let w1 = draw(&mut rng);
        let w2 = draw(&mut rng);
        let mut mid = w1.clone();
        for (mv, v2) in mid.values.iter_mut().zip(&w2.values) {
            *mv = 0.5 * (*mv + v2);
        }
        let j1 = functional.eval(&w1)?;
        let j2 = functional.eval(&w2)?;
        let jm = functional.eval(&mid)?;
        let rhs = 0.5 * (j1 + j2);
        let gap = jm - rhs;
        max_gap = max_gap.max(gap);
        if gap > 1e-12 + 1e-12 * rhs.abs() {
            violations += 1;
        }
    }
    Ok(ConvexityReport {
        pairs,
        violations,
        max_gap,
    })
}
