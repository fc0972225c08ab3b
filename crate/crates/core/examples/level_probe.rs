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

    for (method, name, maxit) in [(Method::QuasiNewton, "QN", 3000usize), (Method::GradientDescent, "GD", 40000)] {
        let functional = Functional::new(&inv_grid, &inv_sources, &basis, &kernel,
            cfg.mu_s_value, cfg.lambda, cfg.alpha_derivative, p.clone()).unwrap();
        let w0 = initial_guess(&p, &inv_grid);
        let mut levels = vec![0.28, 0.25, 0.22, 0.20, 0.17, 0.15, 0.12, 0.10, 0.07, 0.05, 0.03];
        let opts = MinimizeOptions { method, max_iters: maxit, stop_tol: 1e-2, ..Default::default() };
        let mut iter = 0usize;
        println!("== {name}");
        let (w_min, rep) = minimize_traced(&functional, &w0, &opts, |w| {
            iter += 1;
            let j = functional.eval(w).unwrap();
            while !levels.is_empty() && j < levels[0] {
                let lvl = levels.remove(0);
                let a_rec = recover_a(w, &basis, &kernel, cfg.mu_s_value, cfg.alpha_derivative).unwrap();
                let r = score(&a_true_inv, &a_rec, cfg.mu_s_value).unwrap();
                let mut d: f64 = 0.0;
                for (a, b) in w.values.iter().zip(&w_star.values) { d += (a-b)*(a-b); }
                println!("  J<{lvl:.2} (it {iter:5}): contrast {:.2} relL2 {:.2} centr {:.2} jacc {:.2} |W-W*| {:.2}",
                    r.computed_contrast, r.rel_l2_error, r.centroid_displacement, r.support_jaccard, d.sqrt());
            }
        }).unwrap();
        let _ = w_min;
        println!("  end: J={:.3e} iters={} conv={}", rep.final_j, rep.iterations, rep.converged);
    }
}
