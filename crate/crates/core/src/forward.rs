//! Forward transport solve via the equivalent Volterra integral equation,
//! marching in y-layers, plus the fixed-point (Neumann) route used as an
//! independent oracle, and boundary-data extraction for the inverse solver.

use crate::config::ExperimentConfig;
use crate::error::{Result, RteError};
use crate::grid::{
    build_grids, trapezoid_weights, BoundaryTrace, Grid2D, GridPurpose, Radiance, ScalarField2D,
    Side, SourceGrid,
};
use crate::source::{PhaseKernel, SourceModel};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

/// Line integral of `field` (extended by zero outside its grid) along the
/// segment from the source point (α, 0) to (x, y), by composite trapezoid with
/// spatial step at most `h_step`.
pub fn line_integral_to_source(
    field: &ScalarField2D,
    x: f64,
    y: f64,
    alpha: f64,
    h_step: f64,
) -> f64 {
    let len = ((x - alpha) * (x - alpha) + y * y).sqrt();
    let n = (len / h_step).ceil().max(1.0) as usize;
    let dt = 1.0 / n as f64;
    let sample = |t: f64| field.sample_extended(alpha + t * (x - alpha), t * y);
    let mut sum = 0.5 * (sample(0.0) + sample(1.0));
    for i in 1..n {
        sum += sample(i as f64 * dt);
    }
    len * sum * dt
}

/// Quadrature data for the ray from (α_k, 0) to the grid node (x_i, y_j):
/// everything needed to apply one step of the discrete integral operator.
struct RayQuadrature {
    /// u₀ / c at the node.
    source_term: f64,
    /// Per z-layer l = 0..=j: (x-interp base index, x-interp fraction,
    /// combined coefficient |x−x_α| / (y c(x,α)) · w_z[l] · (c μ_s)(x(z_l))).
    layers: Vec<(usize, f64, f64)>,
}

struct ForwardSetup<'a> {
    grid: &'a Grid2D,
    sources: &'a SourceGrid,
    a_field: &'a ScalarField2D,
    mu_s: &'a ScalarField2D,
    /// kernel[k * nα + m] = K(α_k, β_m) · (β trapezoid weight m).
    weighted_kernel: Vec<f64>,
    u0_const: f64,
}

impl<'a> ForwardSetup<'a> {
    fn new(
        grid: &'a Grid2D,
        sources: &'a SourceGrid,
        a_field: &'a ScalarField2D,
        mu_s: &'a ScalarField2D,
        source: &SourceModel,
        kernel: &PhaseKernel,
    ) -> Self {
        let na = sources.len();
        let wb = sources.trapezoid_weights();
        let mut weighted_kernel = vec![0.0; na * na];
        for k in 0..na {
            for m in 0..na {
                weighted_kernel[k * na + m] =
                    kernel.kernel_h(sources.alpha_nodes[k], sources.alpha_nodes[m]) * wb[m];
            }
        }
        ForwardSetup {
            grid,
            sources,
            a_field,
            mu_s,
            weighted_kernel,
            u0_const: source.u0_const(),
        }
    }

    /// Build the ray quadrature for node (i, j) and source index k.
    ///
    /// The attenuation integral p is accumulated cumulatively along the ray,
    /// subdividing each z-layer interval so the spatial step stays below the
    /// grid step.
    fn ray(&self, i: usize, j: usize, k: usize) -> Result<RayQuadrature> {
        let g = self.grid;
        let x = g.x_nodes[i];
        let y = g.y_nodes[j];
        let alpha = self.sources.alpha_nodes[k];
        let r = ((x - alpha) * (x - alpha) + y * y).sqrt();
        let h = g.step;
        let nx = g.nx();

        // x-position of the ray at height z.
        let ray_x = |z: f64| alpha + (x - alpha) * z / y;
        // Length of ray per unit z.
        let stretch = r / y;

        // An empty z-integral at the bottom layer.
        let wz = if j == 0 {
            vec![0.0]
        } else {
            trapezoid_weights(j + 1, h)
        };
        let mut layers = Vec::with_capacity(j + 1);
        let mut p_cum = 0.0;
        let mut prev_z = g.y_min();
        let mut prev_a = self.a_field.sample_extended(ray_x(prev_z), prev_z);
        for (l, &wzl) in wz.iter().enumerate().take(j + 1) {
            let z = g.y_nodes[l];
            if l > 0 {
                // Advance the cumulative attenuation integral over [prev_z, z].
                let seg = (z - prev_z) * stretch;
                let nsub = (seg / h).ceil().max(1.0) as usize;
                let dz = (z - prev_z) / nsub as f64;
                for s in 1..=nsub {
                    let zs = prev_z + s as f64 * dz;
                    let az = self.a_field.sample_extended(ray_x(zs), zs);
                    p_cum += 0.5 * (prev_a + az) * dz * stretch;
                    prev_a = az;
                }
                prev_z = z;
            }
            // Interpolation indices for u at layer l; the top-layer sample is
            // the node itself.
            let (i0, theta, xl) = if l == j {
                (i.min(nx - 2), if i == nx - 1 { 1.0 } else { 0.0 }, x)
            } else {
                let xl = ray_x(z);
                let fx = (xl - g.x_min()) / h;
                if fx < -1e-9 || fx > (nx - 1) as f64 + 1e-9 {
                    return Err(RteError::Numerical(format!(
                        "ray sample x = {xl} outside the grid at node ({i}, {j}, {k})"
                    )));
                }
                let fxc = fx.clamp(0.0, (nx - 1) as f64);
                let i0 = (fxc.floor() as usize).min(nx - 2);
                (i0, fxc - i0 as f64, xl)
            };
            let cmu = p_cum.exp() * self.mu_s.sample_extended(xl, z);
            layers.push((i0, theta, wzl * cmu));
        }
        // Integrating factor at the node from the same cumulative quadrature
        // as the samples, so ratios inside the operator are e^{-int a} of
        // nested sub-segments. At the bottom layer p = 0 exactly.
        let c_node = p_cum.exp();
        let scale = stretch / c_node;
        for layer in layers.iter_mut() {
            layer.2 *= scale;
        }
        Ok(RayQuadrature {
            source_term: self.u0_const / c_node,
            layers,
        })
    }

    /// One application of the discrete integral operator plus source term:
    /// the right-hand side of the fixed-point iteration, evaluated at (i,j,k).
    fn apply(&self, u: &Radiance, quad: &RayQuadrature, k: usize) -> f64 {
        let na = self.sources.len();
        let nx = self.grid.nx();
        let kern = &self.weighted_kernel[k * na..(k + 1) * na];
        let mut acc = 0.0;
        for (l, &(i0, theta, coef)) in quad.layers.iter().enumerate() {
            if coef == 0.0 {
                continue;
            }
            let row0 = &u.values[(l * nx + i0) * na..(l * nx + i0) * na + na];
            let row1 = &u.values[(l * nx + i0 + 1) * na..(l * nx + i0 + 1) * na + na];
            let mut beta_sum = 0.0;
            for m in 0..na {
                let uv = row0[m] * (1.0 - theta) + row1[m] * theta;
                beta_sum += kern[m] * uv;
            }
            acc += coef * beta_sum;
        }
        acc + quad.source_term
    }
}

fn constant_mu_s(grid: &Grid2D, config: &ExperimentConfig) -> ScalarField2D {
    ScalarField2D::constant(grid, config.mu_s_value)
}

fn source_grid_for(grid: &Grid2D, config: &ExperimentConfig) -> Result<SourceGrid> {
    let d = config.source_half_length;
    let n = 2.0 * d / grid.step;
    if (n - n.round()).abs() > 1e-9 {
        return Err(RteError::Config(format!(
            "grid step {} does not divide the source segment length {}",
            grid.step,
            2.0 * d
        )));
    }
    let count = n.round() as usize + 1;
    let alpha_nodes = (0..count)
        .map(|k| -d + k as f64 * (2.0 * d) / (count - 1) as f64)
        .collect();
    Ok(SourceGrid {
        alpha_nodes,
        step: grid.step,
    })
}

/// Solve the forward problem on the grid carried by `a_field`, marching in
/// y-layers; the per-layer coupling across source indices is solved directly.
///
/// `a_field` is the total attenuation μ_a + μ_s; the scattering coefficient is
/// the configured constant inside Ω.
pub fn solve_forward(a_field: &ScalarField2D, config: &ExperimentConfig) -> Result<Radiance> {
    let grid = a_field.grid.clone();
    let sources = source_grid_for(&grid, config)?;
    let mu_s = constant_mu_s(&grid, config);
    let source = SourceModel::new(config.eps)?;
    let kernel = PhaseKernel::new(config.g_aniso, config.source_half_length);
    let setup = ForwardSetup::new(&grid, &sources, a_field, &mu_s, &source, &kernel);

    let nx = grid.nx();
    let ny = grid.ny();
    let na = sources.len();
    let mut u = Radiance::zeros(&grid, &sources);

    // Bottom layer: the z-integral is empty and c = 1, so u = u0.
    for i in 0..nx {
        for k in 0..na {
            u.set(i, 0, k, setup.u0_const);
        }
    }

    for j in 1..ny {
        let rows: Vec<Result<Vec<f64>>> = (0..nx)
            .into_par_iter()
            .map(|i| {
                let mut system = DMatrix::<f64>::identity(na, na);
                let mut rhs = DVector::<f64>::zeros(na);
                for k in 0..na {
                    let quad = setup.ray(i, j, k)?;
                    // All layers below j are known; the top-layer sample sits
                    // exactly on the node, so it couples the unknowns at
                    // (i, j) across β and moves into the matrix.
                    let (_, _, coef) = quad.layers[j];
                    let kern = &setup.weighted_kernel[k * na..(k + 1) * na];
                    for m in 0..na {
                        system[(k, m)] -= coef * kern[m];
                    }
                    let mut acc = 0.0;
                    for (l, &(li0, ltheta, lcoef)) in
                        quad.layers.iter().enumerate().take(j)
                    {
                        if lcoef == 0.0 {
                            continue;
                        }
                        let base0 = (l * nx + li0) * na;
                        let base1 = (l * nx + li0 + 1) * na;
                        let mut beta_sum = 0.0;
                        for m in 0..na {
                            let uv = u.values[base0 + m] * (1.0 - ltheta)
                                + u.values[base1 + m] * ltheta;
                            beta_sum += kern[m] * uv;
                        }
                        acc += lcoef * beta_sum;
                    }
                    rhs[k] = acc + quad.source_term;
                }
                let lu = system.lu();
                let sol = lu.solve(&rhs).ok_or_else(|| {
                    RteError::Numerical(format!("singular per-layer system at layer {j}, x-index {i}"))
                })?;
                Ok(sol.iter().cloned().collect())
            })
            .collect();
        for (i, row) in rows.into_iter().enumerate() {
            let row = row?;
            for (k, v) in row.into_iter().enumerate() {
                u.set(i, j, k, v);
            }
        }
    }

    // Positivity required by the transport model.
    for j in 0..ny {
        for i in 0..nx {
            for k in 0..na {
                let v = u.at(i, j, k);
                if !(v.is_finite() && v > 0.0) {
                    return Err(RteError::Numerical(format!(
                        "non-positive radiance u = {v} at node (i={i}, j={j}, k={k})"
                    )));
                }
            }
        }
    }
    Ok(u)
}

/// Solve the same discrete equations by the fixed-point (Neumann) iteration,
/// starting from the pure source term. Oracle route for [`solve_forward`].
pub fn solve_forward_neumann(
    a_field: &ScalarField2D,
    config: &ExperimentConfig,
    iterations: usize,
) -> Result<Radiance> {
    let grid = a_field.grid.clone();
    let sources = source_grid_for(&grid, config)?;
    let mu_s = constant_mu_s(&grid, config);
    let source = SourceModel::new(config.eps)?;
    let kernel = PhaseKernel::new(config.g_aniso, config.source_half_length);
    let setup = ForwardSetup::new(&grid, &sources, a_field, &mu_s, &source, &kernel);

    let nx = grid.nx();
    let ny = grid.ny();
    let na = sources.len();

    // Precompute every ray quadrature once.
    let quads: Vec<Vec<RayQuadrature>> = (0..nx * ny)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx % nx, idx / nx);
            (0..na).map(|k| setup.ray(i, j, k)).collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let mut u = Radiance::zeros(&grid, &sources);
    for idx in 0..nx * ny {
        let (i, j) = (idx % nx, idx / nx);
        for k in 0..na {
            u.set(i, j, k, quads[idx][k].source_term);
        }
    }

    for _ in 0..iterations {
        let next: Vec<Vec<f64>> = (0..nx * ny)
            .into_par_iter()
            .map(|idx| {
                (0..na)
                    .map(|k| setup.apply(&u, &quads[idx][k], k))
                    .collect()
            })
            .collect();
        let mut u_next = Radiance::zeros(&grid, &sources);
        for (idx, row) in next.into_iter().enumerate() {
            let base = idx * na;
            u_next.values[base..base + na].copy_from_slice(&row);
        }
        u = u_next;
    }
    Ok(u)
}

/// Assemble and solve the full coupled linear system over all grid unknowns in
/// one dense solve. Test oracle; only viable on small grids.
pub fn solve_forward_dense(a_field: &ScalarField2D, config: &ExperimentConfig) -> Result<Radiance> {
    let grid = a_field.grid.clone();
    let sources = source_grid_for(&grid, config)?;
    let mu_s = constant_mu_s(&grid, config);
    let source = SourceModel::new(config.eps)?;
    let kernel = PhaseKernel::new(config.g_aniso, config.source_half_length);
    let setup = ForwardSetup::new(&grid, &sources, a_field, &mu_s, &source, &kernel);

    let nx = grid.nx();
    let ny = grid.ny();
    let na = sources.len();
    let n = nx * ny * na;
    let mut system = DMatrix::<f64>::identity(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    for j in 0..ny {
        for i in 0..nx {
            for k in 0..na {
                let row = (j * nx + i) * na + k;
                let quad = setup.ray(i, j, k)?;
                rhs[row] = quad.source_term;
                let kern = &setup.weighted_kernel[k * na..(k + 1) * na];
                for (l, &(i0, theta, coef)) in quad.layers.iter().enumerate() {
                    if coef == 0.0 {
                        continue;
                    }
                    for m in 0..na {
                        let col0 = (l * nx + i0) * na + m;
                        let col1 = (l * nx + i0 + 1) * na + m;
                        system[(row, col0)] -= coef * kern[m] * (1.0 - theta);
                        system[(row, col1)] -= coef * kern[m] * theta;
                    }
                }
            }
        }
    }
    let sol = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| RteError::Numerical("singular full forward system".into()))?;
    let mut u = Radiance::zeros(&grid, &sources);
    u.values.copy_from_slice(sol.as_slice());
    Ok(u)
}

/// The positivity floor m: the minimum of u₀ over ∂₁Ω × [−d, d].
pub fn positivity_floor(config: &ExperimentConfig) -> Result<f64> {
    let source = SourceModel::new(config.eps)?;
    // u0 is constant over rays from the source line, so the minimum over the
    // bottom boundary equals the constant itself; evaluated on grid nodes.
    let (grid, sources) = build_grids(config, GridPurpose::Forward)?;
    let mut m = f64::INFINITY;
    for &x in &grid.x_nodes {
        for &al in &sources.alpha_nodes {
            m = m.min(source.u0_baseline(x, grid.y_min(), al));
        }
    }
    Ok(m)
}

/// Restrict the forward solution to the measured boundary data g₁ on the
/// inversion grid: u on ∂Ω∖∂₁Ω and the computed u₀ on ∂₁Ω, taking coincident
/// nodes of the nested grids.
pub fn extract_boundary_data(u: &Radiance, config: &ExperimentConfig) -> Result<BoundaryTrace> {
    let (inv_grid, inv_sources) = build_grids(config, GridPurpose::Inversion)?;
    if !u.grid.nests(&inv_grid) {
        return Err(RteError::Config(format!(
            "forward grid (h = {}) does not nest the inversion grid (h = {})",
            u.grid.step, inv_grid.step
        )));
    }
    let ratio = (inv_grid.step / u.grid.step).round() as usize;
    let source = SourceModel::new(config.eps)?;
    let mut trace = BoundaryTrace::zeros(&inv_grid, &inv_sources);
    let top_j = u.grid.ny() - 1;
    for idx in 0..inv_grid.nx() {
        let fi = idx * ratio;
        for k in 0..inv_sources.len() {
            let fk = k * ratio;
            let (x, y) = trace.node_xy(Side::Bottom, idx);
            trace.set(
                Side::Bottom,
                idx,
                k,
                source.u0_baseline(x, y, inv_sources.alpha_nodes[k]),
            );
            trace.set(Side::Top, idx, k, u.at(fi, top_j, fk));
        }
    }
    for idx in 0..inv_grid.ny() - 2 {
        let fj = (idx + 1) * ratio;
        for k in 0..inv_sources.len() {
            let fk = k * ratio;
            trace.set(Side::Left, idx, k, u.at(0, fj, fk));
            trace.set(Side::Right, idx, k, u.at(u.grid.nx() - 1, fj, fk));
        }
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridPurpose;

    fn forward_grid(h: f64) -> (Grid2D, SourceGrid, ExperimentConfig) {
        let mut cfg = ExperimentConfig::default();
        cfg.h_fwd = h;
        let (grid, sources) = build_grids(&cfg, GridPurpose::Forward).unwrap();
        (grid, sources, cfg)
    }

    #[test]
    fn line_integral_of_zero_field_is_zero() {
        let (grid, _, cfg) = forward_grid(1.0 / 40.0);
        let field = ScalarField2D::constant(&grid, 0.0);
        assert_eq!(line_integral_to_source(&field, 0.3, 1.7, -0.1, cfg.h_fwd), 0.0);
    }

    #[test]
    fn vertical_ray_sees_chord_times_constant() {
        let (grid, _, cfg) = forward_grid(1.0 / 40.0);
        let c = 2.5;
        let field = ScalarField2D::constant(&grid, c);
        // x = (alpha, b): the chord inside Omega has length b - a = 1.
        let p = line_integral_to_source(&field, 0.2, 2.0, 0.2, cfg.h_fwd);
        assert!((p - c * 1.0).abs() < 5e-2, "p = {p}");
    }

    #[test]
    fn oblique_ray_matches_clipped_chord_length() {
        let (grid, _, cfg) = forward_grid(1.0 / 40.0);
        let field = ScalarField2D::constant(&grid, 1.0);
        // Ray from (-0.4, 0) to (0.4, 2.0): clip the segment against
        // Omega = [-0.5, 0.5] x [1, 2] analytically.
        let (x0, y0, x1, y1) = (-0.4f64, 0.0f64, 0.4f64, 2.0f64);
        let t_enter = (1.0 - y0) / (y1 - y0);
        let t_exit = 1.0;
        let seg = ((x1 - x0) * (x1 - x0) + (y1 - y0) * (y1 - y0)).sqrt();
        let chord = (t_exit - t_enter) * seg;
        let p = line_integral_to_source(&field, x1, y1, x0, cfg.h_fwd);
        // The integrand is a bilinear ramp at the boundary, so the trapezoid
        // sampling of the jump costs O(h) in absolute terms.
        assert!((p - chord).abs() < 0.05, "p = {p}, chord = {chord}");
    }

    #[test]
    fn no_medium_reproduces_u0() {
        let (grid, _, mut cfg) = forward_grid(1.0 / 20.0);
        cfg.h_fwd = 1.0 / 20.0;
        cfg.mu_s_value = 0.0;
        let a = ScalarField2D::constant(&grid, 0.0);
        let u = solve_forward(&a, &cfg).unwrap();
        let u0 = SourceModel::new(cfg.eps).unwrap().u0_const();
        for v in &u.values {
            assert!((v - u0).abs() / u0 < 1e-3, "u = {v}, u0 = {u0}");
        }
    }

    #[test]
    fn beer_lambert_for_pure_absorption() {
        // mu_s = 0, mu_a arbitrary: u = u0 e^{-p} with p from the official
        // line-integral routine.
        let (grid, sources, mut cfg) = forward_grid(1.0 / 20.0);
        cfg.h_fwd = 1.0 / 20.0;
        cfg.mu_s_value = 0.0;
        let a = ScalarField2D::from_fn(&grid, |x, y| {
            if (x * x + (y - 1.5) * (y - 1.5)).sqrt() < 0.2 {
                5.0
            } else {
                0.0
            }
        });
        let u = solve_forward(&a, &cfg).unwrap();
        let u0 = SourceModel::new(cfg.eps).unwrap().u0_const();
        let mut worst = 0.0f64;
        for (j, &y) in grid.y_nodes.iter().enumerate() {
            for (i, &x) in grid.x_nodes.iter().enumerate() {
                for (k, &al) in sources.alpha_nodes.iter().enumerate() {
                    let p = line_integral_to_source(&a, x, y, al, cfg.h_fwd);
                    let oracle = u0 * (-p).exp();
                    let got = u.at(i, j, k);
                    worst = worst.max((got - oracle).abs() / oracle);
                }
            }
        }
        assert!(worst < 0.04, "worst relative error {worst}");
    }

    #[test]
    fn neumann_converges_to_marching_solution() {
        // Default medium on a coarse grid; the fixed-point route converges
        // linearly, so give it enough iterations.
        let mut cfg = ExperimentConfig::default();
        cfg.h_fwd = 1.0 / 10.0;
        let (grid, _) = build_grids(&cfg, GridPurpose::Forward).unwrap();
        let a = ScalarField2D::constant(&grid, cfg.mu_s_value);
        let direct = solve_forward(&a, &cfg).unwrap();
        let neumann = solve_forward_neumann(&a, &cfg, 90).unwrap();
        let mut worst = 0.0f64;
        for (du, nu) in direct.values.iter().zip(&neumann.values) {
            worst = worst.max((du - nu).abs() / du.abs());
        }
        assert!(worst < 1e-8, "worst relative gap {worst}");
    }

    #[test]
    fn dense_full_system_matches_marching() {
        let mut cfg = ExperimentConfig::default();
        cfg.h_fwd = 1.0 / 10.0;
        let (grid, _) = build_grids(&cfg, GridPurpose::Forward).unwrap();
        let a = ScalarField2D::from_fn(&grid, |x, y| {
            cfg.mu_s_value + if x.abs() < 0.2 && (y - 1.5).abs() < 0.2 { 5.0 } else { 0.0 }
        });
        let direct = solve_forward(&a, &cfg).unwrap();
        let dense = solve_forward_dense(&a, &cfg).unwrap();
        let mut worst = 0.0f64;
        for (du, dv) in direct.values.iter().zip(&dense.values) {
            worst = worst.max((du - dv).abs() / du.abs());
        }
        assert!(worst < 1e-10, "worst relative gap {worst}");
    }

    #[test]
    fn scattering_solution_stays_above_source_floor() {
        let mut cfg = ExperimentConfig::default();
        cfg.h_fwd = 1.0 / 20.0;
        let (grid, _) = build_grids(&cfg, GridPurpose::Forward).unwrap();
        // Homogeneous scattering medium, no absorber.
        let a = ScalarField2D::constant(&grid, cfg.mu_s_value);
        let u = solve_forward(&a, &cfg).unwrap();
        let m = positivity_floor(&cfg).unwrap();
        assert!(u.min_value() >= m * (1.0 - 1e-12), "min u = {}", u.min_value());
    }

    #[test]
    fn raising_absorption_does_not_raise_exit_radiance() {
        let mut cfg = ExperimentConfig::default();
        cfg.h_fwd = 1.0 / 20.0;
        let (grid, sources) = build_grids(&cfg, GridPurpose::Forward).unwrap();
        let mask = |x: f64, y: f64| (x * x + (y - 1.5) * (y - 1.5)).sqrt() < 0.25;
        let a5 = ScalarField2D::from_fn(&grid, |x, y| {
            cfg.mu_s_value + if mask(x, y) { 5.0 } else { 0.0 }
        });
        let a10 = ScalarField2D::from_fn(&grid, |x, y| {
            cfg.mu_s_value + if mask(x, y) { 10.0 } else { 0.0 }
        });
        let u5 = solve_forward(&a5, &cfg).unwrap();
        let u10 = solve_forward(&a10, &cfg).unwrap();
        let top = grid.ny() - 1;
        for i in 0..grid.nx() {
            for k in 0..sources.len() {
                assert!(u10.at(i, top, k) <= u5.at(i, top, k) * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn boundary_extraction_takes_coincident_nodes() {
        let cfg = ExperimentConfig::default();
        let (grid, _) = build_grids(&cfg, GridPurpose::Forward).unwrap();
        let a = ScalarField2D::constant(&grid, cfg.mu_s_value);
        let u = solve_forward(&a, &cfg).unwrap();
        let trace = extract_boundary_data(&u, &cfg).unwrap();
        assert!(trace.min_value() > 0.0);
        // Top side equals the forward solution at every second node.
        for idx in 0..trace.grid.nx() {
            for k in 0..trace.sources.len() {
                let got = trace.at(Side::Top, idx, k);
                let want = u.at(2 * idx, grid.ny() - 1, 2 * k);
                assert_eq!(got, want);
            }
        }
        // Bottom side is the recomputed u0.
        let source = SourceModel::new(cfg.eps).unwrap();
        for idx in 0..trace.grid.nx() {
            let (x, y) = trace.node_xy(Side::Bottom, idx);
            for k in 0..trace.sources.len() {
                let want = source.u0_baseline(x, y, trace.sources.alpha_nodes[k]);
                assert!((trace.at(Side::Bottom, idx, k) - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn non_nested_grids_are_rejected() {
        let cfg = ExperimentConfig::default();
        let mut bad = cfg.clone();
        bad.h_fwd = 1.0 / 25.0; // 1/25 does not nest 1/20
        let (grid, _) = build_grids(&bad, GridPurpose::Forward).unwrap();
        let a = ScalarField2D::constant(&grid, 0.0);
        let mut solve_cfg = bad.clone();
        solve_cfg.mu_s_value = 0.0;
        let u = solve_forward(&a, &solve_cfg).unwrap();
        assert!(matches!(
            extract_boundary_data(&u, &solve_cfg),
            Err(RteError::Config(_))
        ));
    }
}
