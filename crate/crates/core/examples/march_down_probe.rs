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
    let m_n = basis.deriv_matrix();
    let ctx = NonlinearityCtx::new(&basis, &kernel, &inv_sources, cfg.alpha_derivative);

    // March downward from the top data row with sub-steps per layer.
    let mut w = CoefficientVectorField::zeros(&inv_grid, n);
    w.apply_boundary(&p);
    for j in (1..ny - 1).rev() {
        // step from layer j+1 down to layer j
        for i in 1..nx - 1 {
            let x = inv_grid.x_nodes[i];
            let nsub = 8;
            let mut cur: Vec<f64> = w.node(i, j + 1).to_vec();
            for ss in 0..nsub {
                let y = inv_grid.y_nodes[j + 1] - (ss as f64 + 0.5) * h / nsub as f64;
                let nm = assemble_matrices(x, y, &basis, &m_n, &inv_sources, cfg.alpha_derivative).unwrap();
                let row = mu_over_nu2_row(x, y, cfg.mu_s_value, &inv_sources);
                let f = ctx.eval_f(&cur, &row).unwrap();
                // lateral derivative frozen at layer j+1 values
                let mut rhs = DVector::<f64>::zeros(n);
                for s in 0..n {
                    let wx = (w.at(i + 1, j + 1, s) - w.at(i - 1, j + 1, s)) / (2.0 * h);
                    for k in 0..n { rhs[k] += nm.a_1[(k, s)] * wx; }
                }
                for k in 0..n { rhs[k] += f[k]; }
                let wy = nm.d_n.clone().lu().solve(&rhs).unwrap();
                for s in 0..n { cur[s] += h / nsub as f64 * wy[s]; }
            }
            for s in 0..n { w.set(i, j, s, cur[s]); }
        }
    }
    let mut d: f64 = 0.0;
    for (a, b) in w.values.iter().zip(&w_star.values) { d += (a - b) * (a - b); }
    let a_rec = recover_a(&w, &basis, &kernel, cfg.mu_s_value, cfg.alpha_derivative).unwrap();
    let r = score(&a_true_inv, &a_rec, cfg.mu_s_value).unwrap();
    println!("march-down: contrast {:.3} relL2 {:.3} centroid {:.3} jacc {:.3} |W-W*| {:.3}",
        r.computed_contrast, r.rel_l2_error, r.centroid_displacement, r.support_jaccard, d.sqrt());
    let chars = b" .:-=+*#%@";
    for j in (0..ny).rev() {
        let mut line = String::new();
        for i in 0..nx {
            let v = ((a_rec.at(i, j) - 5.0) / 5.0).clamp(0.0, 1.0);
            line.push(chars[(v * 9.0).round() as usize] as char);
        }
        println!("{line}");
    }
}
