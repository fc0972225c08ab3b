use nalgebra::{DMatrix, DVector};
use rte_core::basis::build_basis;
use rte_core::forward::*;
use rte_core::grid::*;
use rte_core::phantom::*;
use rte_core::ExperimentConfig;

// Least-squares fit of ln u(x, y, ·) in a Chebyshev basis over alpha, then
// exact projection of the fit onto the spectral basis via fine quadrature.
fn main() {
    let cfg = ExperimentConfig::default();
    let (fwd_grid, _) = build_grids(&cfg, GridPurpose::Forward).unwrap();
    let phantom = make_phantom("A", 5.0, &fwd_grid).unwrap();
    let u = solve_forward(&phantom.a_total(cfg.mu_s_value), &cfg).unwrap();
    let basis = build_basis(cfg.source_half_length, 12).unwrap();
    let grid = &u.grid;
    let sources = &u.sources;
    let na = sources.len();
    let d = cfg.source_half_length;
    let deg = 16usize;

    // Chebyshev design matrix at the alpha nodes.
    let cheb = |k: usize, t: f64| (k as f64 * t.acos()).cos();
    let design = DMatrix::<f64>::from_fn(na, deg + 1, |q, k| {
        cheb(k, (sources.alpha_nodes[q] / d).clamp(-1.0, 1.0))
    });
    let svd = design.clone().svd(true, true);

    // fine Gauss-Legendre-ish quadrature (4001-pt Simpson) for the projection
    let nq = 4001;
    let hq = 2.0 * d / (nq - 1) as f64;
    let qnodes: Vec<f64> = (0..nq).map(|i| -d + i as f64 * hq).collect();
    let mut qw: Vec<f64> = (0..nq).map(|i| if i == 0 || i == nq - 1 { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 }).collect();
    for w in qw.iter_mut() { *w *= hq / 3.0; }

    let mut sq = vec![0.0f64; 12];
    let wx = trapezoid_weights(grid.nx(), grid.step);
    let wy = trapezoid_weights(grid.ny(), grid.step);
    for j in 0..grid.ny() {
        for i in 0..grid.nx() {
            let rhs = DVector::<f64>::from_fn(na, |q, _| u.at(i, j, q).ln());
            let coef = svd.solve(&rhs, 1e-12).unwrap();
            for s in 0..12 {
                let mut acc = 0.0;
                for (qi, (&a, &w)) in qnodes.iter().zip(&qw).enumerate() {
                    let _ = qi;
                    let fit: f64 = (0..=deg).map(|k| coef[k] * cheb(k, (a / d).clamp(-1.0, 1.0))).sum();
                    acc += w * fit * basis.eval(s, a);
                }
                sq[s] += acc * acc * wx[i] * wy[j];
            }
        }
    }
    println!("accurate spectral norms of ln u:");
    for (s, v) in sq.iter().enumerate() {
        println!("  s={s}: {:.5}", v.sqrt());
    }
    let tail: f64 = sq[3..].iter().map(|v| v.sqrt()).sum();
    let total: f64 = sq.iter().map(|v| v.sqrt()).sum();
    println!("tail ratio = {:.5} (paper 0.0084)", tail / total);
}
