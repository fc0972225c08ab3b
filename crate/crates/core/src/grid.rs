//! Closed uniform grids over Ω = [−A, A] × [a, b] and the source segment
//! [−d, d], plus the field containers living on them.

use crate::config::ExperimentConfig;
use crate::error::{Result, RteError};

/// Which discretization a grid serves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridPurpose {
    Forward,
    Inversion,
}

fn node_count(extent: f64, step: f64, what: &str) -> Result<usize> {
    let n = extent / step;
    let rounded = n.round();
    if (n - rounded).abs() > 1e-12 * n.max(1.0) {
        return Err(RteError::Config(format!(
            "{what}: step {step} does not divide extent {extent}"
        )));
    }
    Ok(rounded as usize + 1)
}

fn uniform_nodes(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let step = (hi - lo) / (count - 1) as f64;
    let mut v: Vec<f64> = (0..count).map(|i| lo + i as f64 * step).collect();
    // Endpoints exactly.
    v[0] = lo;
    v[count - 1] = hi;
    v
}

/// Closed uniform tensor grid over Ω.
#[derive(Debug, Clone)]
pub struct Grid2D {
    pub x_nodes: Vec<f64>,
    pub y_nodes: Vec<f64>,
    pub step: f64,
}

impl Grid2D {
    pub fn nx(&self) -> usize {
        self.x_nodes.len()
    }

    pub fn ny(&self) -> usize {
        self.y_nodes.len()
    }

    pub fn x_min(&self) -> f64 {
        self.x_nodes[0]
    }

    pub fn x_max(&self) -> f64 {
        *self.x_nodes.last().unwrap()
    }

    pub fn y_min(&self) -> f64 {
        self.y_nodes[0]
    }

    pub fn y_max(&self) -> f64 {
        *self.y_nodes.last().unwrap()
    }

    /// True when `other` uses the same extents and a step that is an integer
    /// multiple of this grid's step (so its nodes are a subset of ours).
    pub fn nests(&self, other: &Grid2D) -> bool {
        let ratio = other.step / self.step;
        (self.x_min() - other.x_min()).abs() < 1e-12
            && (self.x_max() - other.x_max()).abs() < 1e-12
            && (self.y_min() - other.y_min()).abs() < 1e-12
            && (self.y_max() - other.y_max()).abs() < 1e-12
            && (ratio - ratio.round()).abs() < 1e-12
            && ratio >= 1.0 - 1e-12
    }
}

/// Closed uniform grid over the source segment [−d, d].
#[derive(Debug, Clone)]
pub struct SourceGrid {
    pub alpha_nodes: Vec<f64>,
    pub step: f64,
}

impl SourceGrid {
    pub fn len(&self) -> usize {
        self.alpha_nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha_nodes.is_empty()
    }

    pub fn half_length(&self) -> f64 {
        *self.alpha_nodes.last().unwrap()
    }

    /// Composite trapezoid weights over the nodes.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        trapezoid_weights(self.len(), self.step)
    }
}

/// Trapezoid weights for a closed uniform grid of `n` nodes and step `h`.
pub fn trapezoid_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; n];
    w[0] = 0.5 * h;
    w[n - 1] = 0.5 * h;
    w
}

/// Build the spatial and source grids for the requested purpose.
pub fn build_grids(config: &ExperimentConfig, purpose: GridPurpose) -> Result<(Grid2D, SourceGrid)> {
    config.validate()?;
    let step = match purpose {
        GridPurpose::Forward => config.h_fwd,
        GridPurpose::Inversion => config.h_inv,
    };
    let nx = node_count(2.0 * config.half_width, step, "x extent")?;
    let ny = node_count(config.y_max - config.y_min, step, "y extent")?;
    let na = node_count(2.0 * config.source_half_length, step, "alpha extent")?;
    let grid = Grid2D {
        x_nodes: uniform_nodes(-config.half_width, config.half_width, nx),
        y_nodes: uniform_nodes(config.y_min, config.y_max, ny),
        step,
    };
    let sources = SourceGrid {
        alpha_nodes: uniform_nodes(
            -config.source_half_length,
            config.source_half_length,
            na,
        ),
        step,
    };
    Ok((grid, sources))
}

/// Scalar function sampled on the nodes of a [`Grid2D`].
#[derive(Debug, Clone)]
pub struct ScalarField2D {
    pub grid: Grid2D,
    /// Row-major over y: index = j * nx + i.
    pub values: Vec<f64>,
}

impl ScalarField2D {
    pub fn constant(grid: &Grid2D, value: f64) -> Self {
        ScalarField2D {
            values: vec![value; grid.nx() * grid.ny()],
            grid: grid.clone(),
        }
    }

    pub fn from_fn(grid: &Grid2D, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.nx() * grid.ny());
        for &y in &grid.y_nodes {
            for &x in &grid.x_nodes {
                values.push(f(x, y));
            }
        }
        ScalarField2D {
            grid: grid.clone(),
            values,
        }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.grid.nx() + i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let nx = self.grid.nx();
        self.values[j * nx + i] = v;
    }

    /// Bilinear interpolation, extended by zero outside the grid rectangle.
    pub fn sample_extended(&self, x: f64, y: f64) -> f64 {
        let g = &self.grid;
        if x < g.x_min() || x > g.x_max() || y < g.y_min() || y > g.y_max() {
            return 0.0;
        }
        let fx = ((x - g.x_min()) / g.step).clamp(0.0, (g.nx() - 1) as f64);
        let fy = ((y - g.y_min()) / g.step).clamp(0.0, (g.ny() - 1) as f64);
        let i0 = (fx.floor() as usize).min(g.nx() - 2);
        let j0 = (fy.floor() as usize).min(g.ny() - 2);
        let tx = fx - i0 as f64;
        let ty = fy - j0 as f64;
        let v00 = self.at(i0, j0);
        let v10 = self.at(i0 + 1, j0);
        let v01 = self.at(i0, j0 + 1);
        let v11 = self.at(i0 + 1, j0 + 1);
        v00 * (1.0 - tx) * (1.0 - ty)
            + v10 * tx * (1.0 - ty)
            + v01 * (1.0 - tx) * ty
            + v11 * tx * ty
    }

    /// L²(Ω) norm by the 2-D composite trapezoid rule.
    pub fn l2_norm(&self) -> f64 {
        let wx = trapezoid_weights(self.grid.nx(), self.grid.step);
        let wy = trapezoid_weights(self.grid.ny(), self.grid.step);
        let mut sum = 0.0;
        for (j, wyj) in wy.iter().enumerate() {
            for (i, wxi) in wx.iter().enumerate() {
                let v = self.at(i, j);
                sum += v * v * wxi * wyj;
            }
        }
        sum.sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Discrete radiance u(x, y, α) on the tensor product of a spatial grid and a
/// source grid. Index = (j * nx + i) * nα + k, α fastest.
#[derive(Debug, Clone)]
pub struct Radiance {
    pub grid: Grid2D,
    pub sources: SourceGrid,
    pub values: Vec<f64>,
}

impl Radiance {
    pub fn zeros(grid: &Grid2D, sources: &SourceGrid) -> Self {
        Radiance {
            values: vec![0.0; grid.nx() * grid.ny() * sources.len()],
            grid: grid.clone(),
            sources: sources.clone(),
        }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[(j * self.grid.nx() + i) * self.sources.len() + k]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let nx = self.grid.nx();
        let na = self.sources.len();
        self.values[(j * nx + i) * na + k] = v;
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// The four sides of ∂Ω. Corner nodes belong to the y = a and y = b sides.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// y = a (∂₁Ω), all x including corners.
    Bottom,
    /// y = b (∂₂Ω), all x including corners.
    Top,
    /// x = −A, y strictly inside (a, b).
    Left,
    /// x = +A, y strictly inside (a, b).
    Right,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Bottom, Side::Top, Side::Left, Side::Right];
}

/// Per-boundary-node, per-α data on ∂Ω.
///
/// Bottom/top sides carry nx nodes each (corners included), left/right carry
/// ny − 2 nodes each, so every boundary node appears exactly once.
#[derive(Debug, Clone)]
pub struct BoundaryTrace {
    pub grid: Grid2D,
    pub sources: SourceGrid,
    bottom: Vec<f64>,
    top: Vec<f64>,
    left: Vec<f64>,
    right: Vec<f64>,
}

impl BoundaryTrace {
    pub fn zeros(grid: &Grid2D, sources: &SourceGrid) -> Self {
        let na = sources.len();
        BoundaryTrace {
            bottom: vec![0.0; grid.nx() * na],
            top: vec![0.0; grid.nx() * na],
            left: vec![0.0; (grid.ny() - 2) * na],
            right: vec![0.0; (grid.ny() - 2) * na],
            grid: grid.clone(),
            sources: sources.clone(),
        }
    }

    /// Number of spatial nodes on a side.
    pub fn side_len(&self, side: Side) -> usize {
        match side {
            Side::Bottom | Side::Top => self.grid.nx(),
            Side::Left | Side::Right => self.grid.ny() - 2,
        }
    }

    /// Spatial coordinates of node `idx` on `side`.
    pub fn node_xy(&self, side: Side, idx: usize) -> (f64, f64) {
        match side {
            Side::Bottom => (self.grid.x_nodes[idx], self.grid.y_min()),
            Side::Top => (self.grid.x_nodes[idx], self.grid.y_max()),
            Side::Left => (self.grid.x_min(), self.grid.y_nodes[idx + 1]),
            Side::Right => (self.grid.x_max(), self.grid.y_nodes[idx + 1]),
        }
    }

    fn side_values(&self, side: Side) -> &[f64] {
        match side {
            Side::Bottom => &self.bottom,
            Side::Top => &self.top,
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    fn side_values_mut(&mut self, side: Side) -> &mut [f64] {
        match side {
            Side::Bottom => &mut self.bottom,
            Side::Top => &mut self.top,
            Side::Left => &mut self.left,
            Side::Right => &mut self.right,
        }
    }

    #[inline]
    pub fn at(&self, side: Side, idx: usize, k: usize) -> f64 {
        self.side_values(side)[idx * self.sources.len() + k]
    }

    #[inline]
    pub fn set(&mut self, side: Side, idx: usize, k: usize, v: f64) {
        let na = self.sources.len();
        self.side_values_mut(side)[idx * na + k] = v;
    }

    /// Total number of (node, α) samples.
    pub fn sample_count(&self) -> usize {
        (self.bottom.len() + self.top.len() + self.left.len() + self.right.len()) as usize
    }

    /// Apply `f` to every stored value.
    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> BoundaryTrace {
        let mut out = self.clone();
        for side in Side::ALL {
            for v in out.side_values_mut(side) {
                *v = f(*v);
            }
        }
        out
    }

    pub fn min_value(&self) -> f64 {
        Side::ALL
            .iter()
            .flat_map(|&s| self.side_values(s).iter().cloned())
            .fold(f64::INFINITY, f64::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_forward_grid_counts() {
        let cfg = ExperimentConfig::default();
        let (grid, sources) = build_grids(&cfg, GridPurpose::Forward).unwrap();
        assert_eq!(grid.nx(), 41);
        assert_eq!(grid.ny(), 41);
        assert_eq!(sources.len(), 41);
        assert_eq!(grid.x_min(), -0.5);
        assert_eq!(grid.x_max(), 0.5);
        assert_eq!(grid.y_min(), 1.0);
        assert_eq!(grid.y_max(), 2.0);
        assert_eq!(sources.alpha_nodes[0], -0.5);
        assert_eq!(*sources.alpha_nodes.last().unwrap(), 0.5);
    }

    #[test]
    fn default_inversion_grid_counts() {
        let cfg = ExperimentConfig::default();
        let (grid, sources) = build_grids(&cfg, GridPurpose::Inversion).unwrap();
        assert_eq!(grid.nx(), 21);
        assert_eq!(grid.ny(), 21);
        assert_eq!(sources.len(), 21);
    }

    #[test]
    fn non_divisible_step_is_config_error() {
        let mut cfg = ExperimentConfig::default();
        cfg.h_fwd = 0.3; // extent 1.0 / 0.3 is not integral
        let err = build_grids(&cfg, GridPurpose::Forward).unwrap_err();
        assert!(matches!(err, RteError::Config(_)));
    }

    #[test]
    fn spacing_is_uniform_and_spans_extent() {
        let cfg = ExperimentConfig::default();
        for purpose in [GridPurpose::Forward, GridPurpose::Inversion] {
            let (grid, _) = build_grids(&cfg, purpose).unwrap();
            for w in grid.x_nodes.windows(2) {
                assert!((w[1] - w[0] - grid.step).abs() < 1e-12);
            }
            let nx = grid.nx() as f64;
            assert!(((nx - 1.0) * grid.step - 2.0 * cfg.half_width).abs() < 1e-12);
            let ny = grid.ny() as f64;
            assert!(((ny - 1.0) * grid.step - (cfg.y_max - cfg.y_min)).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_grid_nests_inversion_grid() {
        let cfg = ExperimentConfig::default();
        let (fwd, _) = build_grids(&cfg, GridPurpose::Forward).unwrap();
        let (inv, _) = build_grids(&cfg, GridPurpose::Inversion).unwrap();
        assert!(fwd.nests(&inv));
        assert!(!inv.nests(&fwd));
    }

    #[test]
    fn bilinear_sampling_is_exact_for_linear_fields() {
        let cfg = ExperimentConfig::default();
        let (grid, _) = build_grids(&cfg, GridPurpose::Inversion).unwrap();
        let f = ScalarField2D::from_fn(&grid, |x, y| 2.0 * x - 3.0 * y + 1.0);
        for &(x, y) in &[(0.13, 1.41), (-0.49, 1.99), (0.0, 1.5)] {
            let exact = 2.0 * x - 3.0 * y + 1.0;
            assert!((f.sample_extended(x, y) - exact).abs() < 1e-12);
        }
        // Zero extension outside the rectangle.
        assert_eq!(f.sample_extended(0.0, 0.5), 0.0);
        assert_eq!(f.sample_extended(0.7, 1.5), 0.0);
    }

    #[test]
    fn boundary_trace_covers_each_node_once() {
        let cfg = ExperimentConfig::default();
        let (grid, sources) = build_grids(&cfg, GridPurpose::Inversion).unwrap();
        let trace = BoundaryTrace::zeros(&grid, &sources);
        let total: usize = Side::ALL.iter().map(|&s| trace.side_len(s)).sum();
        // Perimeter of a nx x ny node rectangle.
        assert_eq!(total, 2 * grid.nx() + 2 * (grid.ny() - 2));
        // Corners belong to bottom/top.
        assert_eq!(trace.node_xy(Side::Bottom, 0), (-0.5, 1.0));
        assert_eq!(trace.node_xy(Side::Top, grid.nx() - 1), (0.5, 2.0));
        assert_eq!(trace.node_xy(Side::Left, 0), (-0.5, 1.05));
    }
}
