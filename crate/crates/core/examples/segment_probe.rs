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
    let u_inv = downsample_radiance(&u, 2);
    let mut w_star = project_log_radiance(&u_inv, &basis).unwrap();
    w_star.apply_boundary(&p); // same boundary as W0 for a fair segment
    let w0 = initial_guess(&p, &inv_grid);

    for lambda in [5.0, 2.0, 0.0, -5.0] {
        let f = Functional::new(&inv_grid, &inv_sources, &basis, &kernel,
            cfg.mu_s_value, lambda, cfg.alpha_derivative, p.clone()).unwrap();
        print!("lambda={lambda:4}: ");
        for t in [0.0, 0.2, 0.4, 0.6, 0.8, 0.9, 1.0, 1.1, 1.3] {
            let mut w = w0.clone();
            for (wv, (&a, &b)) in w.values.iter_mut().zip(w0.values.iter().zip(&w_star.values)) {
                *wv = a + t * (b - a);
            }
            print!("J({t})={:.3} ", f.eval(&w).unwrap());
        }
        println!();
    }
}
