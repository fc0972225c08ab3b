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
    let basis = build_basis(cfg.source_half_length, cfg.n_basis).unwrap();
    let p = project_boundary(&log_boundary(&trace).unwrap(), &basis);
    let kernel = PhaseKernel::new(cfg.g_aniso, cfg.source_half_length);
    let inv_phantom = make_phantom("A", 5.0, &inv_grid).unwrap();
    let a_true_inv = inv_phantom.a_total(cfg.mu_s_value);
    let u_inv = downsample_radiance(&u, 2);
    let w_star = project_log_radiance(&u_inv, &basis).unwrap();
    let n = cfg.n_basis;
    let nx = inv_grid.nx();
    let ny = inv_grid.ny();
    let h = inv_grid.step;
    let sys = assemble_system(&inv_grid, &inv_sources, &basis, cfg.alpha_derivative).unwrap();
    let ctx = NonlinearityCtx::new(&basis, &kernel, &inv_sources, cfg.alpha_derivative);

    // Forward-Euler march: W_{j+1} = W_j - h D^{-1} (A1 Wx + F), using the
    // projected data at j=0 and the lateral boundary traces.
    let mut w = CoefficientVectorField::zeros(&inv_grid, n);
    w.apply_boundary(&p);
    // interior columns start from the bottom data; march upward.
    for j in 0..ny - 2 {
        for i in 1..nx - 1 {
            // matrices live at interior nodes only; reuse the row at max(j,1)
            let jm = j.clamp(1, ny - 2);
            let nm = sys.at(i, jm);
            let row = mu_over_nu2_row(inv_grid.x_nodes[i], inv_grid.y_nodes[j], cfg.mu_s_value, &inv_sources);
            let f: Vec<f64> = Vec::new();
            let mut rhs = DVector::<f64>::zeros(n);
            for s in 0..n {
                let wx = (w.at(i + 1, j, s) - w.at(i - 1, j, s)) / (2.0 * h);
                for k in 0..n {
                    rhs[k] += nm.a_1[(k, s)] * wx;
                }
            }
            let _ = f;
            let dm = DMatrix::from_fn(n, n, |k, s| nm.d_n[(k, s)]);
            let lu = dm.lu();
            // Sub-stepped explicit march within the layer, lateral term frozen.
            let nsub = 40;
            let mut cur: Vec<f64> = w.node(i, j).to_vec();
            for _ in 0..nsub {
                let fv = match ctx.eval_f(&cur, &row) {
                    Ok(v) => v,
                    Err(_) => { break; }
                };
                let mut r2 = rhs.clone();
                for k in 0..n { r2[k] += fv[k]; }
                let wy = lu.solve(&r2).unwrap();
                for s in 0..n { cur[s] -= h / nsub as f64 * wy[s]; }
            }
            for s in 0..n {
                w.set(i, j + 1, s, cur[s]);
            }
        }
    }
    let mut d: f64 = 0.0;
    for (a, b) in w.values.iter().zip(&w_star.values) { d += (a - b) * (a - b); }
    let a_rec = recover_a(&w, &basis, &kernel, cfg.mu_s_value, cfg.alpha_derivative).unwrap();
    let r = score(&a_true_inv, &a_rec, cfg.mu_s_value).unwrap();
    println!("march: contrast {:.3} relL2 {:.3} centroid {:.3} jacc {:.3} |W-W*| {:.3}",
        r.computed_contrast, r.rel_l2_error, r.centroid_displacement, r.support_jaccard, d.sqrt());
    // top-row comparison of w_0 profile
    print!("w0 marched  top: ");
    for i in (1..nx-1).step_by(4) { print!("{:.2} ", w.at(i, ny-2, 0)); }
    print!("\nw0 truth    top: ");
    for i in (1..nx-1).step_by(4) { print!("{:.2} ", w_star.at(i, ny-2, 0)); }
    println!();
}
