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

    for (label, method, lambda) in [
        ("GD  λ=-5", Method::GradientDescent, -5.0),
        ("QN  λ=-5", Method::QuasiNewton, -5.0),
        ("GD  λ=-2", Method::GradientDescent, -2.0),
    ] {
        let functional = Functional::new(&inv_grid, &inv_sources, &basis, &kernel,
            cfg.mu_s_value, lambda, cfg.alpha_derivative, p.clone()).unwrap();
        let w0 = initial_guess(&p, &inv_grid);
        let w_star = project_log_radiance(&u_inv, &basis).unwrap();
        let opts = MinimizeOptions { method, max_iters: 30000, stop_tol: 1e-4, ..Default::default() };
        let mut iter = 0usize;
        let mut rows = Vec::new();
        let (w_min, rep) = minimize_traced(&functional, &w0, &opts, |w| {
            iter += 1;
            if iter.is_power_of_two() || iter % 2500 == 0 {
                let a_rec = recover_a(w, &basis, &kernel, cfg.mu_s_value, cfg.alpha_derivative).unwrap();
                let r = score(&a_true_inv, &a_rec, cfg.mu_s_value).unwrap();
                let mut d: f64 = 0.0;
                for (a, b) in w.values.iter().zip(&w_star.values) { d += (a-b)*(a-b); }
                rows.push(format!("  it {iter:5}: contrast {:.2} relL2 {:.2} jacc {:.2} |W-W*| {:.2}",
                    r.computed_contrast, r.rel_l2_error, r.support_jaccard, d.sqrt()));
            }
        }).unwrap();
        println!("{label}: {} iters, J={:.3e}, conv={}", rep.iterations, rep.final_j, rep.converged);
        for r in &rows { println!("{r}"); }
        let a_rec = recover_a(&w_min, &basis, &kernel, cfg.mu_s_value, cfg.alpha_derivative).unwrap();
        let r = score(&a_true_inv, &a_rec, cfg.mu_s_value).unwrap();
        println!("  final: contrast {:.2} relL2 {:.2} centroid {:.2} jacc {:.2}",
            r.computed_contrast, r.rel_l2_error, r.centroid_displacement, r.support_jaccard);
    }
}
