use rte_core::assembly::*;
use rte_core::basis::build_basis;
use rte_core::forward::*;
use rte_core::grid::*;
use rte_core::inversion::*;
use rte_core::phantom::*;
use rte_core::source::PhaseKernel;
use rte_core::ExperimentConfig;

fn dump(label: &str, a: &ScalarField2D) {
    println!("--- {label} (min {:.2}, max {:.2})", 
        a.values.iter().cloned().fold(f64::INFINITY, f64::min),
        a.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    let chars = b" .:-=+*#%@";
    for j in (0..a.grid.ny()).rev() {
        let mut line = String::new();
        for i in 0..a.grid.nx() {
            let v = ((a.at(i, j) - 5.0) / 5.0).clamp(0.0, 1.0);
            line.push(chars[(v * 9.0).round() as usize] as char);
        }
        println!("{line}");
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
    dump("truth", &inv_phantom.a_total(cfg.mu_s_value));
    let u_inv = downsample_radiance(&u, 2);
    let w_star = project_log_radiance(&u_inv, &basis).unwrap();
    let a_star = recover_a(&w_star, &basis, &kernel, cfg.mu_s_value, cfg.alpha_derivative).unwrap();
    dump("recover(W*)", &a_star);
    let w0 = initial_guess(&p, &inv_grid);
    let a0 = recover_a(&w0, &basis, &kernel, cfg.mu_s_value, cfg.alpha_derivative).unwrap();
    dump("recover(W0)", &a0);
    for lambda in [5.0, -5.0] {
        let functional = Functional::new(&inv_grid, &inv_sources, &basis, &kernel,
            cfg.mu_s_value, lambda, cfg.alpha_derivative, p.clone()).unwrap();
        let opts = MinimizeOptions { max_iters: 4000, stop_tol: 1e-2, ..Default::default() };
        let (w_min, rep) = minimize(&functional, &w0, &opts).unwrap();
        let a_rec = recover_a(&w_min, &basis, &kernel, cfg.mu_s_value, cfg.alpha_derivative).unwrap();
        dump(&format!("QN lambda={lambda} J={:.2e} iters={}", rep.final_j, rep.iterations), &a_rec);
    }
}
