use nalgebra::{DMatrix, DVector};
use rte_core::assembly::*;
use rte_core::basis::build_basis;
use rte_core::forward::*;
use rte_core::grid::*;
use rte_core::inversion::*;
use rte_core::phantom::*;
use rte_core::source::PhaseKernel;
use rte_core::ExperimentConfig;

fn main() {
    let cfg = ExperimentConfig::default();
    let (fwd_grid, _) = build_grids(&cfg, GridPurpose::Forward).unwrap();
    let (inv_grid, inv_sources) = build_grids(&cfg, GridPurpose::Inversion).unwrap();
    let phantom = make_phantom("A", 5.0, &fwd_grid).unwrap();
    let u = solve_forward(&phantom.a_total(cfg.mu_s_value), &cfg).unwrap();
    let trace = extract_boundary_data(&u, &cfg).unwrap();
    let log_trace = log_boundary(&trace).unwrap();
    let basis = build_basis(cfg.source_half_length, cfg.n_basis).unwrap();
    let p = project_boundary(&log_trace, &basis);
    let kernel = PhaseKernel::new(cfg.g_aniso, cfg.source_half_length);

    // RTE pointwise residual of the forward field.
    let (g, s) = (&u.grid, &u.sources);
    let h = g.step;
    let wb = s.trapezoid_weights();
    let mut worst: f64 = 0.0; let mut scale: f64 = 0.0;
    let a_field = phantom.a_total(cfg.mu_s_value);
    for j in 1..g.ny()-1 { for i in 1..g.nx()-1 { for k in 0..s.len() {
        let x = g.x_nodes[i]; let y = g.y_nodes[j]; let al = s.alpha_nodes[k];
        let r = ((x-al)*(x-al)+y*y).sqrt();
        let (n1, n2) = ((x-al)/r, y/r);
        let ux = (u.at(i+1,j,k)-u.at(i-1,j,k))/(2.0*h);
        let uy = (u.at(i,j+1,k)-u.at(i,j-1,k))/(2.0*h);
        let mut scat = 0.0;
        for m in 0..s.len() {
            scat += wb[m]*kernel.kernel_h(al, s.alpha_nodes[m])*u.at(i,j,m);
        }
        let e = n1*ux + n2*uy + a_field.at(i,j)*u.at(i,j,k) - cfg.mu_s_value*scat;
        worst = worst.max(e.abs());
        scale = scale.max((a_field.at(i,j)*u.at(i,j,k)).abs());
    }}}
    println!("RTE FD residual: worst |E| = {worst:.3e}, scale = {scale:.3e}, rel = {:.3e}", worst/scale);

    for lambda in [5.0f64, 0.0] {
        let functional = Functional::new(
            &inv_grid, &inv_sources, &basis, &kernel,
            cfg.mu_s_value, lambda, cfg.alpha_derivative, p.clone(),
        ).unwrap();
        let w0 = initial_guess(&p, &inv_grid);
        let u_inv = downsample_radiance(&u, 2);
        let w_star = project_log_radiance(&u_inv, &basis).unwrap();
        let inv_phantom = make_phantom("A", 5.0, &inv_grid).unwrap();
        let a_true_inv = inv_phantom.a_total(cfg.mu_s_value);
        let (w_lm, jv) = lm_solve(&functional, &inv_grid, w0.clone(), lambda);
        let a_rec = recover_a(&w_lm, &basis, &kernel, cfg.mu_s_value, cfg.alpha_derivative).unwrap();
        let r = score(&a_true_inv, &a_rec, cfg.mu_s_value).unwrap();
        let mut d: f64 = 0.0;
        for (a, b) in w_lm.values.iter().zip(&w_star.values) { d += (a-b)*(a-b); }
        println!("lambda={lambda}: J={jv:.3e} contrast {:.3}, relL2 {:.3}, centroid {:.3}, jaccard {:.3}, |W-W*| {:.3}",
            r.computed_contrast, r.rel_l2_error, r.centroid_displacement, r.support_jaccard, d.sqrt());
    }
}

fn lm_solve(functional: &Functional, grid: &Grid2D, mut w: CoefficientVectorField, lambda: f64) -> (CoefficientVectorField, f64) {
    let n = w.n;
    let nxi = grid.nx()-2; let nyi = grid.ny()-2;
    let nnode = nxi*nyi;
    let ndof = nnode*n;
    let h = grid.step;
    let mut mu = 1e-3f64;
    let mut jv = functional.eval(&w).unwrap();
    for it in 0..200 {
        // Assemble sqrt-weighted residual vector r and Jacobian G (dense).
        let mut rvec = DVector::<f64>::zeros(ndof);
        let mut gmat = DMatrix::<f64>::zeros(ndof, ndof);
        let dof_idx = |i: usize, j: usize, s: usize| ((j-1)*nxi + (i-1))*n + s;
        for jn in 1..=nyi { for in_ in 1..=nxi {
            let node = (jn-1)*nxi + (in_-1);
            let (rn, dn, a1, jf) = functional.node_parts(&w, in_, jn).unwrap();
            let sw = ((2.0*lambda*grid.y_nodes[jn]).exp()).sqrt() * h;
            for k in 0..n {
                let row = node*n + k;
                rvec[row] = sw * rn[k];
                for t in 0..n {
                    gmat[(row, dof_idx(in_, jn, t))] += sw * jf[(k, t)];
                    if jn+1 <= nyi { gmat[(row, dof_idx(in_, jn+1, t))] += sw * dn[(k,t)]/(2.0*h); }
                    if jn >= 2    { gmat[(row, dof_idx(in_, jn-1, t))] -= sw * dn[(k,t)]/(2.0*h); }
                    if in_+1 <= nxi { gmat[(row, dof_idx(in_+1, jn, t))] += sw * a1[(k,t)]/(2.0*h); }
                    if in_ >= 2   { gmat[(row, dof_idx(in_-1, jn, t))] -= sw * a1[(k,t)]/(2.0*h); }
                }
            }
        }}
        let gtg = gmat.transpose() * &gmat;
        let gtr = gmat.transpose() * &rvec;
        let mut accepted = false;
        for _ in 0..25 {
            let mut m = gtg.clone();
            for dd in 0..ndof { m[(dd,dd)] += mu * (1.0 + gtg[(dd,dd)]); }
            if let Some(delta) = m.lu().solve(&(-&gtr)) {
                let mut wt = w.clone();
                let mut idx = 0;
                for jn in 1..grid.ny()-1 { for in_ in 1..grid.nx()-1 { for ss in 0..n {
                    wt.set(in_, jn, ss, w.at(in_, jn, ss) + delta[idx]); idx += 1;
                }}}
                if let Ok(jt) = functional.eval(&wt) {
                    if jt < jv { w = wt; jv = jt; mu = (mu*0.3).max(1e-14); accepted = true; break; }
                }
            }
            mu *= 4.0;
        }
        if !accepted { println!("  LM stalled at iter {it}, J={jv:.3e}"); break; }
        if jv < 1e-2 { println!("  LM reached J<1e-2 at iter {it}"); break; }
    }
    (w, jv)
}
