use nalgebra::DMatrix;
use rte_core::assembly::*;
use rte_core::basis::{build_basis, Basis};
use rte_core::forward::*;
use rte_core::grid::*;
use rte_core::inversion::*;
use rte_core::phantom::*;
use rte_core::source::PhaseKernel;
use rte_core::{DerivMode, ExperimentConfig};

struct Upwind {
    grid: Grid2D,
    n: usize,
    h: f64,
    // matrices at (i = 1..nx-2, j = 0..ny-2)
    d: Vec<DMatrix<f64>>,
    a1: Vec<DMatrix<f64>>,
    mu_rows: Vec<Vec<f64>>,
    ctx: NonlinearityCtx,
    weight: Vec<f64>,
}

impl Upwind {
    fn new(grid: &Grid2D, sources: &SourceGrid, basis: &Basis, kernel: &PhaseKernel, mu_s: f64, lambda: f64) -> Self {
        let m_n = basis.deriv_matrix();
        let nxi = grid.nx() - 2;
        let nyr = grid.ny() - 1;
        let mut d = Vec::new();
        let mut a1 = Vec::new();
        let mut mu_rows = Vec::new();
        for j in 0..nyr {
            for i in 1..grid.nx() - 1 {
                let nm = assemble_matrices(grid.x_nodes[i], grid.y_nodes[j], basis, &m_n, sources, DerivMode::Analytic).unwrap();
                d.push(nm.d_n);
                a1.push(nm.a_1);
                mu_rows.push(mu_over_nu2_row(grid.x_nodes[i], grid.y_nodes[j], mu_s, sources));
            }
        }
        let _ = nxi;
        let y_max = grid.y_max();
        let weight = grid.y_nodes.iter().map(|&y| (2.0 * lambda * (y - y_max)).exp()).collect();
        Upwind { grid: grid.clone(), n: basis.n, h: grid.step,
                 d, a1, mu_rows, ctx: NonlinearityCtx::new(basis, kernel, sources, DerivMode::Analytic), weight }
    }

    fn row_residual(&self, w: &CoefficientVectorField, i: usize, j: usize) -> Vec<f64> {
        let n = self.n;
        let nxi = self.grid.nx() - 2;
        let idx = j * nxi + (i - 1);
        let f = self.ctx.eval_f(w.node(i, j), &self.mu_rows[idx]).unwrap();
        let mut r = f;
        for s in 0..n {
            let wy = (w.at(i, j + 1, s) - w.at(i, j, s)) / self.h;
            let wx = (w.at(i + 1, j, s) - w.at(i - 1, j, s)) / (2.0 * self.h);
            for k in 0..n {
                r[k] += self.d[idx][(k, s)] * wy + self.a1[idx][(k, s)] * wx;
            }
        }
        r
    }

    fn eval(&self, w: &CoefficientVectorField) -> f64 {
        let mut total = 0.0;
        for j in 0..self.grid.ny() - 1 {
            for i in 1..self.grid.nx() - 1 {
                let r = self.row_residual(w, i, j);
                let rr: f64 = r.iter().map(|v| v * v).sum();
                total += rr * self.weight[j] * self.h * self.h;
            }
        }
        total
    }

    fn eval_grad(&self, w: &CoefficientVectorField) -> (f64, CoefficientVectorField) {
        let n = self.n;
        let nx = self.grid.nx();
        let ny = self.grid.ny();
        let nxi = nx - 2;
        let mut jtot = 0.0;
        let mut grad = CoefficientVectorField::zeros(&self.grid, n);
        let mut ts: Vec<Vec<f64>> = Vec::with_capacity((ny - 1) * nxi);
        let mut jacs: Vec<DMatrix<f64>> = Vec::with_capacity((ny - 1) * nxi);
        for j in 0..ny - 1 {
            for i in 1..nx - 1 {
                let idx = j * nxi + (i - 1);
                let (f, jac) = self.ctx.eval_f_jacobian(w.node(i, j), &self.mu_rows[idx]).unwrap();
                let mut r = f;
                for s in 0..n {
                    let wy = (w.at(i, j + 1, s) - w.at(i, j, s)) / self.h;
                    let wx = (w.at(i + 1, j, s) - w.at(i - 1, j, s)) / (2.0 * self.h);
                    for k in 0..n {
                        r[k] += self.d[idx][(k, s)] * wy + self.a1[idx][(k, s)] * wx;
                    }
                }
                let rr: f64 = r.iter().map(|v| v * v).sum();
                let scale = 2.0 * self.weight[j] * self.h * self.h;
                jtot += rr * self.weight[j] * self.h * self.h;
                ts.push(r.iter().map(|v| v * scale).collect());
                jacs.push(jac);
            }
        }
        // gather into interior gradient
        for j in 1..ny - 1 {
            for i in 1..nx - 1 {
                let mut g = vec![0.0; n];
                // row (i, j): dR/dW_{ij} = -D/h + J_F
                {
                    let idx = j * nxi + (i - 1);
                    let t = &ts[idx];
                    for s in 0..n {
                        let mut acc = 0.0;
                        for k in 0..n {
                            acc += (-self.d[idx][(k, s)] / self.h + jacs[idx][(k, s)]) * t[k];
                        }
                        g[s] += acc;
                    }
                }
                // row (i, j-1): dR/dW_{ij} = +D/h
                {
                    let idx = (j - 1) * nxi + (i - 1);
                    let t = &ts[idx];
                    for s in 0..n {
                        let mut acc = 0.0;
                        for k in 0..n {
                            acc += self.d[idx][(k, s)] / self.h * t[k];
                        }
                        g[s] += acc;
                    }
                }
                // rows (i-1, j) and (i+1, j) through W_x (only for rows with x-interior i∓1)
                if i >= 2 {
                    let idx = j * nxi + (i - 2);
                    let t = &ts[idx];
                    for s in 0..n {
                        let mut acc = 0.0;
                        for k in 0..n {
                            acc += self.a1[idx][(k, s)] / (2.0 * self.h) * t[k];
                        }
                        g[s] += acc;
                    }
                }
                if i + 1 <= nx - 2 {
                    let idx = j * nxi + i;
                    let t = &ts[idx];
                    for s in 0..n {
                        let mut acc = 0.0;
                        for k in 0..n {
                            acc -= self.a1[idx][(k, s)] / (2.0 * self.h) * t[k];
                        }
                        g[s] += acc;
                    }
                }
                for s in 0..n {
                    grad.set(i, j, s, g[s]);
                }
            }
        }
        (jtot, grad)
    }

    // plain L-BFGS on the interior
    fn minimize(&self, w0: &CoefficientVectorField, max_iters: usize, tol: f64) -> (CoefficientVectorField, f64, usize) {
        let mut w = w0.clone();
        let (mut jv, mut gfield) = self.eval_grad(&w);
        let pack = |f: &CoefficientVectorField| -> Vec<f64> {
            let mut v = Vec::new();
            for j in 1..self.grid.ny() - 1 { for i in 1..self.grid.nx() - 1 { v.extend_from_slice(f.node(i, j)); } }
            v
        };
        let unpack = |w: &mut CoefficientVectorField, v: &[f64]| {
            let mut idx = 0;
            for j in 1..w.grid.ny() - 1 { for i in 1..w.grid.nx() - 1 { for s in 0..w.n { w.set(i, j, s, v[idx]); idx += 1; } } }
        };
        let mut dof = pack(&w);
        let mut grad = pack(&gfield);
        let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
        let mut s_h: Vec<Vec<f64>> = Vec::new();
        let mut y_h: Vec<Vec<f64>> = Vec::new();
        let mut rho: Vec<f64> = Vec::new();
        let mut gamma = 1.0;
        let mut iters = 0;
        while jv >= tol && iters < max_iters {
            let mut q = grad.clone();
            let m = s_h.len();
            let mut al = vec![0.0; m];
            for idx in (0..m).rev() {
                al[idx] = rho[idx] * dot(&s_h[idx], &q);
                for (qv, yv) in q.iter_mut().zip(&y_h[idx]) { *qv -= al[idx] * yv; }
            }
            let mut r: Vec<f64> = q.iter().map(|v| gamma * v).collect();
            for idx in 0..m {
                let b = rho[idx] * dot(&y_h[idx], &r);
                for (rv, sv) in r.iter_mut().zip(&s_h[idx]) { *rv += (al[idx] - b) * sv; }
            }
            let dir: Vec<f64> = r.iter().map(|v| -v).collect();
            let slope = dot(&grad, &dir);
            let dir = if slope < 0.0 { dir } else { s_h.clear(); y_h.clear(); rho.clear(); grad.iter().map(|g| -g).collect() };
            let mut step = 1.0;
            let mut accepted = false;
            let mut nd = dof.clone();
            for _ in 0..60 {
                for ((o, &d0), &dv) in nd.iter_mut().zip(&dof).zip(&dir) { *o = d0 + step * dv; }
                unpack(&mut w, &nd);
                let jt = self.eval(&w);
                if jt.is_finite() && jt < jv { accepted = true; break; }
                step *= 0.5;
            }
            if !accepted { break; }
            iters += 1;
            let (jn, gf) = self.eval_grad(&w);
            gfield = gf;
            let ng = pack(&gfield);
            let sv: Vec<f64> = nd.iter().zip(&dof).map(|(a, b)| a - b).collect();
            let yv: Vec<f64> = ng.iter().zip(&grad).map(|(a, b)| a - b).collect();
            let sy = dot(&sv, &yv);
            if sy > 1e-12 * dot(&sv, &sv).sqrt() * dot(&yv, &yv).sqrt() {
                gamma = sy / dot(&yv, &yv);
                s_h.push(sv); y_h.push(yv); rho.push(1.0 / sy);
                if s_h.len() > 10 { s_h.remove(0); y_h.remove(0); rho.remove(0); }
            }
            dof = nd;
            grad = ng;
            jv = jn;
        }
        unpack(&mut w, &dof);
        (w, jv, iters)
    }
}

fn main() {
    let cfg = ExperimentConfig::default();
    let (fwd_grid, _) = build_grids(&cfg, GridPurpose::Forward).unwrap();
    let (inv_grid, inv_sources) = build_grids(&cfg, GridPurpose::Inversion).unwrap();
    let phantom = make_phantom("A", 5.0, &fwd_grid).unwrap();
    let u = solve_forward(&phantom.a_total(cfg.mu_s_value), &cfg).unwrap();
    let trace = extract_boundary_data(&u, &cfg).unwrap();
    let basis = build_basis(cfg.source_half_length, cfg.n_basis).unwrap();
    let p = project_boundary(&log_boundary(&trace).unwrap(), &basis);
    let kernel = PhaseKernel::new(cfg.g_aniso, cfg.source_half_length);
    let inv_phantom = make_phantom("A", 5.0, &inv_grid).unwrap();
    let a_true_inv = inv_phantom.a_total(cfg.mu_s_value);
    let u_inv = downsample_radiance(&u, 2);
    let w_star = project_log_radiance(&u_inv, &basis).unwrap();
    let w0 = initial_guess(&p, &inv_grid);

    for lambda in [5.0, 2.0, 0.0] {
        let up = Upwind::new(&inv_grid, &inv_sources, &basis, &kernel, cfg.mu_s_value, lambda);
        // FD gradient check
        let (j0, g) = up.eval_grad(&w0);
        let mut wp = w0.clone(); let mut wm = w0.clone();
        let t = 1e-6;
        wp.set(5, 7, 1, wp.at(5, 7, 1) + t);
        wm.set(5, 7, 1, wm.at(5, 7, 1) - t);
        let fd = (up.eval(&wp) - up.eval(&wm)) / (2.0 * t);
        println!("lambda={lambda}: J(W0)={j0:.4e} J(W*)={:.4e} gradcheck {:.3e} vs {:.3e}",
            up.eval(&w_star), fd, g.at(5, 7, 1));
        let (wm, jv, iters) = up.minimize(&w0, 3000, 1e-2);
        let a_rec = recover_a(&wm, &basis, &kernel, cfg.mu_s_value, cfg.alpha_derivative).unwrap();
        let r = score(&a_true_inv, &a_rec, cfg.mu_s_value).unwrap();
        let mut dist: f64 = 0.0;
        for (a, b) in wm.values.iter().zip(&w_star.values) { dist += (a - b) * (a - b); }
        println!("  minimized: J={jv:.3e} iters={iters} | contrast {:.3} relL2 {:.3} centroid {:.3} jacc {:.3} |W-W*| {:.3}",
            r.computed_contrast, r.rel_l2_error, r.centroid_displacement, r.support_jaccard, dist.sqrt());
    }
}
