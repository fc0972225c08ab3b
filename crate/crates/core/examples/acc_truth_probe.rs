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
    let u_inv = downsample_radiance(&u, 2);
    let w_star_tz = project_log_radiance(&u_inv, &basis).unwrap();

    // Accurate projection: LS Chebyshev fit per node (on the FORWARD radiance
    // at coincident nodes, 41 alpha values), then fine-quadrature projection.
    let d = cfg.source_half_length;
    let deg = 16usize;
    let na_f = u.sources.len();
    let cheb = |k: usize, t: f64| (k as f64 * t.acos()).cos();
    let design = DMatrix::<f64>::from_fn(na_f, deg + 1, |q, k| {
        cheb(k, (u.sources.alpha_nodes[q] / d).clamp(-1.0, 1.0))
    });
    let svd = design.clone().svd(true, true);
    let nq = 2001;
    let hq = 2.0 * d / (nq - 1) as f64;
    let mut qw: Vec<f64> = (0..nq).map(|i| if i == 0 || i == nq-1 {1.0} else if i % 2 == 1 {4.0} else {2.0}).collect();
    for w in qw.iter_mut() { *w *= hq / 3.0; }
    let mut w_star_acc = CoefficientVectorField::zeros(&inv_grid, cfg.n_basis);
    for j in 0..inv_grid.ny() {
        for i in 0..inv_grid.nx() {
            let rhs = DVector::<f64>::from_fn(na_f, |q, _| u.at(2*i, 2*j, q).ln());
            let coef = svd.solve(&rhs, 1e-12).unwrap();
            for s in 0..cfg.n_basis {
                let mut acc = 0.0;
                for (qi, &w) in qw.iter().enumerate() {
                    let a = -d + qi as f64 * hq;
                    let fit: f64 = (0..=deg).map(|k| coef[k] * cheb(k, (a/d).clamp(-1.0,1.0))).sum();
                    acc += w * fit * basis.eval(s, a);
                }
                w_star_acc.set(i, j, s, acc);
            }
        }
    }

    let functional = Functional::new(&inv_grid, &inv_sources, &basis, &kernel,
        cfg.mu_s_value, cfg.lambda, cfg.alpha_derivative, p.clone()).unwrap();
    let w0 = initial_guess(&p, &inv_grid);
    println!("residual_l2: W*trapz = {:.4}, W*acc = {:.4}",
        functional.residual_l2(&w_star_tz).unwrap(), functional.residual_l2(&w_star_acc).unwrap());
    println!("J(l=5 norm): W0 = {:.4}, W*trapz = {:.4}, W*acc = {:.4}",
        functional.eval(&w0).unwrap(), functional.eval(&w_star_tz).unwrap(), functional.eval(&w_star_acc).unwrap());
    // difference between the two truth projections
    let mut dmax: f64 = 0.0;
    let mut dl2: f64 = 0.0;
    for (a, b) in w_star_tz.values.iter().zip(&w_star_acc.values) {
        dmax = dmax.max((a - b).abs());
        dl2 += (a - b) * (a - b);
    }
    println!("W*trapz vs W*acc: max {dmax:.4}, l2 {:.4}", dl2.sqrt());
    // recover from accurate truth
    let inv_phantom = make_phantom("A", 5.0, &inv_grid).unwrap();
    let a_true_inv = inv_phantom.a_total(cfg.mu_s_value);
    let a_rec = recover_a(&w_star_acc, &basis, &kernel, cfg.mu_s_value, cfg.alpha_derivative).unwrap();
    let r = score(&a_true_inv, &a_rec, cfg.mu_s_value).unwrap();
    println!("recover(W*acc): contrast {:.3} relL2 {:.3} centroid {:.3} jacc {:.3}",
        r.computed_contrast, r.rel_l2_error, r.centroid_displacement, r.support_jaccard);
}
