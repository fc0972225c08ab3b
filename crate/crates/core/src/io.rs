//! CSV and PGM output for fields, radiance tensors, traces and coefficient
//! fields. All CSV uses comma separators, a header row, '.' decimals and LF
//! line endings.

use crate::error::Result;
use crate::grid::{BoundaryTrace, Radiance, ScalarField2D, Side};
use crate::inversion::CoefficientVectorField;
use std::io::Write;
use std::path::Path;

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(contents)?;
    Ok(())
}

/// Scalar field as `x,y,value` rows.
pub fn write_field_csv(path: &Path, field: &ScalarField2D, value_name: &str) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("x,y,{value_name}\n"));
    for (j, &y) in field.grid.y_nodes.iter().enumerate() {
        for (i, &x) in field.grid.x_nodes.iter().enumerate() {
            out.push_str(&format!("{x},{y},{}\n", field.at(i, j)));
        }
    }
    write_file(path, out.as_bytes())
}

/// Radiance tensor as `x,y,alpha,u` rows.
pub fn write_radiance_csv(path: &Path, u: &Radiance) -> Result<()> {
    let mut out = String::from("x,y,alpha,u\n");
    for (j, &y) in u.grid.y_nodes.iter().enumerate() {
        for (i, &x) in u.grid.x_nodes.iter().enumerate() {
            for (k, &alpha) in u.sources.alpha_nodes.iter().enumerate() {
                out.push_str(&format!("{x},{y},{alpha},{}\n", u.at(i, j, k)));
            }
        }
    }
    write_file(path, out.as_bytes())
}

/// Boundary trace as `side,x,y,alpha,value` rows.
pub fn write_trace_csv(path: &Path, trace: &BoundaryTrace) -> Result<()> {
    let mut out = String::from("side,x,y,alpha,g1\n");
    for side in Side::ALL {
        let name = match side {
            Side::Bottom => "bottom",
            Side::Top => "top",
            Side::Left => "left",
            Side::Right => "right",
        };
        for idx in 0..trace.side_len(side) {
            let (x, y) = trace.node_xy(side, idx);
            for (k, &alpha) in trace.sources.alpha_nodes.iter().enumerate() {
                out.push_str(&format!("{name},{x},{y},{alpha},{}\n", trace.at(side, idx, k)));
            }
        }
    }
    write_file(path, out.as_bytes())
}

/// Coefficient field as `x,y,s,w_s` rows.
pub fn write_coefficients_csv(path: &Path, w: &CoefficientVectorField) -> Result<()> {
    let mut out = String::from("x,y,s,w_s\n");
    for (j, &y) in w.grid.y_nodes.iter().enumerate() {
        for (i, &x) in w.grid.x_nodes.iter().enumerate() {
            for s in 0..w.n {
                out.push_str(&format!("{x},{y},{s},{}\n", w.at(i, j, s)));
            }
        }
    }
    write_file(path, out.as_bytes())
}

/// Iteration history as `iteration,J` rows.
pub fn write_history_csv(path: &Path, history: &[f64]) -> Result<()> {
    let mut out = String::from("iteration,J\n");
    for (it, j) in history.iter().enumerate() {
        out.push_str(&format!("{it},{j}\n"));
    }
    write_file(path, out.as_bytes())
}

/// Binary PGM (P5, maxval 255). Rows run from y = b down to y = a so the
/// image is upright. The value range maps linearly onto 0..=255.
pub fn write_field_pgm(path: &Path, field: &ScalarField2D, range: Option<(f64, f64)>) -> Result<()> {
    let (lo, hi) = range.unwrap_or_else(|| {
        let lo = field.values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = field.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    });
    let span = if hi > lo { hi - lo } else { 1.0 };
    let nx = field.grid.nx();
    let ny = field.grid.ny();
    let mut bytes = format!("P5\n{nx} {ny}\n255\n").into_bytes();
    for j in (0..ny).rev() {
        for i in 0..nx {
            let t = ((field.at(i, j) - lo) / span).clamp(0.0, 1.0);
            bytes.push((t * 255.0).round() as u8);
        }
    }
    write_file(path, &bytes)
}

/// Joint range of several fields, for shared-scale image pairs.
pub fn joint_range(fields: &[&ScalarField2D]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for f in fields {
        for &v in &f.values {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grids, GridPurpose};
    use crate::ExperimentConfig;

    #[test]
    fn pgm_is_valid_and_maps_range() {
        let cfg = ExperimentConfig::default();
        let (grid, _) = build_grids(&cfg, GridPurpose::Inversion).unwrap();
        let field = ScalarField2D::from_fn(&grid, |x, y| x + y);
        let dir = std::env::temp_dir().join("rte_io_test");
        let path = dir.join("f.pgm");
        write_field_pgm(&path, &field, None).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert!(bytes.starts_with(b"P5\n21 21\n255\n"));
        let data = &bytes[b"P5\n21 21\n255\n".len()..];
        assert_eq!(data.len(), 21 * 21);
        // Top-left pixel is (x_min, y_max) = min+max; bottom-right is max+min.
        assert_eq!(data.iter().cloned().min(), Some(0));
        assert_eq!(data.iter().cloned().max(), Some(255));
        // Round trip through the mask parser (threshold at half).
        let img = crate::phantom::parse_mask(&bytes).unwrap();
        assert_eq!(img.width, 21);
        assert!(img.at(20, 0)); // brightest corner.
    }

    #[test]
    fn csv_has_header_and_lf_endings() {
        let cfg = ExperimentConfig::default();
        let (grid, _) = build_grids(&cfg, GridPurpose::Inversion).unwrap();
        let field = ScalarField2D::constant(&grid, 1.25);
        let dir = std::env::temp_dir().join("rte_io_test");
        let path = dir.join("f.csv");
        write_field_csv(&path, &field, "a").unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("x,y,a\n"));
        assert!(!text.contains('\r'));
        assert_eq!(text.lines().count(), 1 + 21 * 21);
        assert!(text.contains("1.25"));
    }
}
