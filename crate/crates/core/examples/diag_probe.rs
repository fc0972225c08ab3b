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

    // Table-1 style spectral norms of ln u at N = 12.
    let basis12 = build_basis(cfg.source_half_length, 12).unwrap();
    let norms = log_radiance_spectral_norms(&u, &basis12).unwrap();
    println!("spectral norms of ln u (paper Table 1: 5.7122 1.6383 0.1630 0.0118 ...):");
    for (s, n) in norms.iter().enumerate() { print!("  s={s}: {n:.4}"); }
    println!();
    let tail: f64 = norms[3..].iter().sum();
    let total: f64 = norms.iter().sum();
    println!("tail ratio = {:.5} (paper 0.0084)", tail / total);

    // Residual structure at the projected truth, N=3.
    let basis = build_basis(cfg.source_half_length, cfg.n_basis).unwrap();
    let trace = extract_boundary_data(&u, &cfg).unwrap();
    let p = project_boundary(&log_boundary(&trace).unwrap(), &basis);
    let kernel = PhaseKernel::new(cfg.g_aniso, cfg.source_half_length);
    let functional = Functional::new(&inv_grid, &inv_sources, &basis, &kernel,
        cfg.mu_s_value, cfg.lambda, cfg.alpha_derivative, p.clone()).unwrap();
    let u_inv = downsample_radiance(&u, 2);
    let w_star = project_log_radiance(&u_inv, &basis).unwrap();

    // per-layer residual norm at truth + contributions
    println!("per-layer |R| at W* (j, |R|_rms, |DWy|_rms, |A1Wx|_rms, |F|_rms):");
    let n = 3;
    for j in [1usize, 5, 10, 15, 19] {
        let (mut rr, mut dd, mut aa, mut ff) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for i in 1..inv_grid.nx()-1 {
            let (r, dn, a1, _) = functional.node_parts(&w_star, i, j).unwrap();
            let h2 = 2.0*inv_grid.step;
            let mut dwy = vec![0.0; n]; let mut awx = vec![0.0; n];
            for s in 0..n {
                let wy = (w_star.at(i, j+1, s) - w_star.at(i, j-1, s))/h2;
                let wx = (w_star.at(i+1, j, s) - w_star.at(i-1, j, s))/h2;
                for k in 0..n { dwy[k] += dn[(k,s)]*wy; awx[k] += a1[(k,s)]*wx; }
            }
            for k in 0..n {
                rr += r[k]*r[k]; dd += dwy[k]*dwy[k]; aa += awx[k]*awx[k];
                let f = r[k] - dwy[k] - awx[k];
                ff += f*f;
            }
        }
        let m = (19.0*3.0f64).recip();
        println!("  j={j:2}: {:.3} {:.3} {:.3} {:.3}", (rr*m).sqrt(), (dd*m).sqrt(), (aa*m).sqrt(), (ff*m).sqrt());
    }
}
