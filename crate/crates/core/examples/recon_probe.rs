use rte_core::assembly::*;
use rte_core::basis::build_basis;
use rte_core::forward::*;
use rte_core::grid::*;
use rte_core::inversion::*;
use rte_core::phantom::*;
use rte_core::source::PhaseKernel;
use rte_core::ExperimentConfig;
use std::time::Instant;

fn main() {
    let cfg = ExperimentConfig::default();
    let t0 = Instant::now();
    let (fwd_grid, _) = build_grids(&cfg, GridPurpose::Forward).unwrap();
    let (inv_grid, inv_sources) = build_grids(&cfg, GridPurpose::Inversion).unwrap();
    let phantom = make_phantom("A", 5.0, &fwd_grid).unwrap();
    let u = solve_forward(&phantom.a_total(cfg.mu_s_value), &cfg).unwrap();
    let trace = extract_boundary_data(&u, &cfg).unwrap();
    let log_trace = log_boundary(&trace).unwrap();
    let basis = build_basis(cfg.source_half_length, cfg.n_basis).unwrap();
    let p = project_boundary(&log_trace, &basis);
    let kernel = PhaseKernel::new(cfg.g_aniso, cfg.source_half_length);
    let inv_phantom = make_phantom("A", 5.0, &inv_grid).unwrap();
    let a_true_inv = inv_phantom.a_total(cfg.mu_s_value);
    let u_inv = downsample_radiance(&u, 2);

    for lambda in [5.0f64, 0.0] {
        let functional = Functional::new(
            &inv_grid, &inv_sources, &basis, &kernel,
            cfg.mu_s_value, lambda, cfg.alpha_derivative, p.clone(),
        ).unwrap();
        let w0 = initial_guess(&p, &inv_grid);
        let w_star = project_log_radiance(&u_inv, &basis).unwrap();
        println!("lambda={lambda}: J(W0) = {:.4e}, J(W*) = {:.4e}",
            functional.eval(&w0).unwrap(), functional.eval(&w_star).unwrap());
        let t1 = Instant::now();
        let opts = MinimizeOptions { max_iters: 5000, stop_tol: cfg.stop_tol, ..Default::default() };
        let (w_min, rep) = minimize(&functional, &w0, &opts).unwrap();
        let a_rec = recover_a(&w_min, &basis, &kernel, cfg.mu_s_value, cfg.alpha_derivative).unwrap();
        let r = score(&a_true_inv, &a_rec, cfg.mu_s_value).unwrap();
        let mut d: f64 = 0.0;
        for (a, b) in w_min.values.iter().zip(&w_star.values) { d += (a-b)*(a-b); }
        println!("lambda={lambda}: {} iters {:.1}s J={:.3e} conv={} | contrast {:.3}, relL2 {:.3}, centroid {:.3}, jacc {:.3}, |W-W*| {:.3}",
            rep.iterations, t1.elapsed().as_secs_f64(), rep.final_j, rep.converged,
            r.computed_contrast, r.rel_l2_error, r.centroid_displacement, r.support_jaccard, d.sqrt());
    }
    println!("total {:.1}s", t0.elapsed().as_secs_f64());
}
