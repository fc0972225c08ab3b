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
    let phantom = make_phantom("A", 5.0, &fwd_grid).unwrap();
    let u = solve_forward(&phantom.a_total(cfg.mu_s_value), &cfg).unwrap();
    let trace = extract_boundary_data(&u, &cfg).unwrap();
    let log_trace = log_boundary(&trace).unwrap();
    let kernel = PhaseKernel::new(cfg.g_aniso, cfg.source_half_length);

    // Residual at the projected truth for growing N, on both grids.
    for (label, ratio, grid_cfg) in [("h=1/20", 2usize, {let mut c = cfg.clone(); c.h_inv = 1.0/20.0; c}),
                                      ("h=1/40", 1usize, {let mut c = cfg.clone(); c.h_inv = 1.0/40.0; c})] {
        let (inv_grid, inv_sources) = build_grids(&grid_cfg, GridPurpose::Inversion).unwrap();
        let u_inv = downsample_radiance(&u, ratio);
        for n in [1usize, 2, 3, 6, 12] {
            let basis = build_basis(cfg.source_half_length, n).unwrap();
            let p = project_boundary(&log_trace, &basis);
            let functional = Functional::new(
                &inv_grid, &inv_sources, &basis, &kernel,
                cfg.mu_s_value, cfg.lambda, cfg.alpha_derivative, p,
            ).unwrap();
            let w_star = project_log_radiance(&u_inv, &basis).unwrap();
            let r = functional.residual_l2(&w_star).unwrap();
            println!("{label} N={n:2}: residual L2 at truth = {r:.4e}");
        }
    }
}
