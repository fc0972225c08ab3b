//! Ground-truth absorber phantoms (letter shapes rasterized from bundled
//! bitmaps, plus an analytic disk), the multiplicative boundary noise, and
//! reconstruction quality metrics.

use crate::error::{Result, RteError};
use crate::grid::{BoundaryTrace, Grid2D, ScalarField2D, Side};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GLYPH_A: &[u8] = include_bytes!("../assets/a.pbm");
const GLYPH_OMEGA: &[u8] = include_bytes!("../assets/omega.pbm");
const GLYPH_S: &[u8] = include_bytes!("../assets/s.pbm");
const GLYPH_Z: &[u8] = include_bytes!("../assets/z.pbm");

/// A monochrome mask image: `true` marks the inside of the inclusion.
#[derive(Debug, Clone)]
pub struct MaskImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<bool>,
}

impl MaskImage {
    #[inline]
    pub fn at(&self, col: usize, row: usize) -> bool {
        self.pixels[row * self.width + col]
    }

    /// Nearest-neighbor sample in unit coordinates (u right, v down).
    pub fn sample(&self, u: f64, v: f64) -> bool {
        if !(0.0..=1.0).contains(&u) || !(0.0..=1.0).contains(&v) {
            return false;
        }
        let col = ((u * self.width as f64) as usize).min(self.width - 1);
        let row = ((v * self.height as f64) as usize).min(self.height - 1);
        self.at(col, row)
    }
}

/// Parse a portable bitmap/graymap (P1, P4, P2 or P5). Nonzero (graymap:
/// above half of maxval) means inside.
pub fn parse_mask(bytes: &[u8]) -> Result<MaskImage> {
    let bad = |msg: &str| RteError::Config(format!("malformed mask file: {msg}"));
    let mut pos = 0usize;
    // Tokenizer over the header: skips whitespace and '#' comments.
    let mut next_token = |pos: &mut usize| -> Result<String> {
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
                continue;
            }
            break;
        }
        let start = *pos;
        while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if start == *pos {
            return Err(bad("unexpected end of header"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    };
    let magic = next_token(&mut pos)?;
    let width: usize = next_token(&mut pos)?
        .parse()
        .map_err(|_| bad("bad width"))?;
    let height: usize = next_token(&mut pos)?
        .parse()
        .map_err(|_| bad("bad height"))?;
    if width == 0 || height == 0 {
        return Err(bad("zero dimensions"));
    }
    let npix = width * height;
    let mut pixels = Vec::with_capacity(npix);
    match magic.as_str() {
        "P1" => {
            while pixels.len() < npix {
                let tok = next_token(&mut pos)?;
                for ch in tok.chars() {
                    match ch {
                        '0' => pixels.push(false),
                        '1' => pixels.push(true),
                        _ => return Err(bad("P1 pixel must be 0 or 1")),
                    }
                }
            }
        }
        "P2" => {
            let maxval: usize = next_token(&mut pos)?
                .parse()
                .map_err(|_| bad("bad maxval"))?;
            for _ in 0..npix {
                let v: usize = next_token(&mut pos)?
                    .parse()
                    .map_err(|_| bad("bad P2 pixel"))?;
                pixels.push(v * 2 > maxval);
            }
        }
        "P4" => {
            pos += 1; // single whitespace after the header
            let row_bytes = width.div_ceil(8);
            if bytes.len() < pos + row_bytes * height {
                return Err(bad("truncated P4 data"));
            }
            for r in 0..height {
                for c in 0..width {
                    let byte = bytes[pos + r * row_bytes + c / 8];
                    pixels.push(byte & (0x80 >> (c % 8)) != 0);
                }
            }
        }
        "P5" => {
            let maxval: usize = next_token(&mut pos)?
                .parse()
                .map_err(|_| bad("bad maxval"))?;
            if maxval > 255 {
                return Err(bad("16-bit P5 not supported"));
            }
            pos += 1;
            if bytes.len() < pos + npix {
                return Err(bad("truncated P5 data"));
            }
            for r in 0..height {
                for c in 0..width {
                    pixels.push((bytes[pos + r * width + c] as usize) * 2 > maxval);
                }
            }
        }
        other => return Err(bad(&format!("unsupported magic '{other}'"))),
    }
    pixels.truncate(npix);
    if pixels.len() != npix {
        return Err(bad("missing pixels"));
    }
    Ok(MaskImage {
        width,
        height,
        pixels,
    })
}

/// A piecewise-constant absorber: μ_a = c inside the mask, 0 outside.
#[derive(Debug, Clone)]
pub struct Phantom {
    pub name: String,
    pub c_value: f64,
    pub grid: Grid2D,
    pub mask: Vec<bool>,
}

impl Phantom {
    #[inline]
    pub fn inside(&self, i: usize, j: usize) -> bool {
        self.mask[j * self.grid.nx() + i]
    }

    /// μ_a = c · mask on the grid.
    pub fn mu_a(&self) -> ScalarField2D {
        ScalarField2D {
            grid: self.grid.clone(),
            values: self
                .mask
                .iter()
                .map(|&m| if m { self.c_value } else { 0.0 })
                .collect(),
        }
    }

    /// Total attenuation a = μ_a + μ_s on the grid.
    pub fn a_total(&self, mu_s_value: f64) -> ScalarField2D {
        ScalarField2D {
            grid: self.grid.clone(),
            values: self
                .mask
                .iter()
                .map(|&m| if m { self.c_value + mu_s_value } else { mu_s_value })
                .collect(),
        }
    }

    /// Nodal area of the inclusion.
    pub fn area(&self) -> f64 {
        let h = self.grid.step;
        self.mask.iter().filter(|&&m| m).count() as f64 * h * h
    }
}

fn mask_from_image(img: &MaskImage, grid: &Grid2D) -> Vec<bool> {
    // The image covers Omega; v runs down from y = b.
    let mut mask = Vec::with_capacity(grid.nx() * grid.ny());
    let width = grid.x_max() - grid.x_min();
    let height = grid.y_max() - grid.y_min();
    for &y in &grid.y_nodes {
        for &x in &grid.x_nodes {
            let u = (x - grid.x_min()) / width;
            let v = (grid.y_max() - y) / height;
            mask.push(img.sample(u, v));
        }
    }
    mask
}

/// Compose two glyphs side by side into one image-shaped sampler.
fn sample_pair(left: &MaskImage, right: &MaskImage, u: f64, v: f64) -> bool {
    if u < 0.5 {
        left.sample(u * 2.0, v)
    } else {
        right.sample((u - 0.5) * 2.0, v)
    }
}

/// Build a phantom by name: `A`, `Omega`, `SZ`, `disk`, or a path to a
/// mask file (`custom:<path>` also accepted).
pub fn make_phantom(name: &str, c_value: f64, grid: &Grid2D) -> Result<Phantom> {
    let mask: Vec<bool> = match name {
        "A" => mask_from_image(&parse_mask(GLYPH_A)?, grid),
        "Omega" => mask_from_image(&parse_mask(GLYPH_OMEGA)?, grid),
        "SZ" => {
            let s = parse_mask(GLYPH_S)?;
            let z = parse_mask(GLYPH_Z)?;
            let width = grid.x_max() - grid.x_min();
            let height = grid.y_max() - grid.y_min();
            let mut mask = Vec::with_capacity(grid.nx() * grid.ny());
            for &y in &grid.y_nodes {
                for &x in &grid.x_nodes {
                    let u = (x - grid.x_min()) / width;
                    let v = (grid.y_max() - y) / height;
                    mask.push(sample_pair(&s, &z, u, v));
                }
            }
            mask
        }
        "disk" => {
            let cx = 0.5 * (grid.x_min() + grid.x_max());
            let cy = 0.5 * (grid.y_min() + grid.y_max());
            let mut mask = Vec::with_capacity(grid.nx() * grid.ny());
            for &y in &grid.y_nodes {
                for &x in &grid.x_nodes {
                    mask.push(((x - cx).powi(2) + (y - cy).powi(2)).sqrt() < 0.2);
                }
            }
            mask
        }
        custom => {
            let path = custom.strip_prefix("custom:").unwrap_or(custom);
            if !std::path::Path::new(path).exists() {
                return Err(RteError::Config(format!(
                    "unknown phantom '{custom}' (expected A, Omega, SZ, disk, or a mask file path)"
                )));
            }
            let bytes = std::fs::read(path)?;
            mask_from_image(&parse_mask(&bytes)?, grid)
        }
    };
    Ok(Phantom {
        name: name.to_string(),
        c_value,
        grid: grid.clone(),
        mask,
    })
}

/// Multiply every measured sample by (1 + σζ) with ζ uniform on [0, 1]; one
/// draw per boundary spatial node shared across α (or per (x, α) sample when
/// `per_alpha` is set). Deterministic for a given seed.
pub fn add_noise(trace: &BoundaryTrace, sigma: f64, seed: u64, per_alpha: bool) -> BoundaryTrace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = trace.clone();
    let na = trace.sources.len();
    for side in Side::ALL {
        for idx in 0..trace.side_len(side) {
            if per_alpha {
                for k in 0..na {
                    let zeta: f64 = rng.gen_range(0.0..1.0);
                    out.set(side, idx, k, trace.at(side, idx, k) * (1.0 + sigma * zeta));
                }
            } else {
                let zeta: f64 = rng.gen_range(0.0..1.0);
                for k in 0..na {
                    out.set(side, idx, k, trace.at(side, idx, k) * (1.0 + sigma * zeta));
                }
            }
        }
    }
    out
}

/// Reconstruction quality metrics.
#[derive(Debug, Clone)]
pub struct QualityReport {
    /// 1 + max(μ_a recovered)/μ_s.
    pub computed_contrast: f64,
    /// ‖a_rec − a_true‖₂ / ‖a_true‖₂ over the grid.
    pub rel_l2_error: f64,
    /// Euclidean distance between the recovered and true inclusion centroids.
    pub centroid_displacement: f64,
    /// Overlap of the half-max support with the true mask.
    pub support_jaccard: f64,
}

fn centroid(grid: &Grid2D, select: impl Fn(usize, usize) -> bool) -> Option<(f64, f64)> {
    let mut count = 0usize;
    let (mut sx, mut sy) = (0.0, 0.0);
    for (j, &y) in grid.y_nodes.iter().enumerate() {
        for (i, &x) in grid.x_nodes.iter().enumerate() {
            if select(i, j) {
                count += 1;
                sx += x;
                sy += y;
            }
        }
    }
    if count == 0 {
        None
    } else {
        Some((sx / count as f64, sy / count as f64))
    }
}

/// Score a reconstruction against the truth. The recovered support is
/// thresholded at μ_s + half of the recovered inclusion amplitude.
pub fn score(a_true: &ScalarField2D, a_rec: &ScalarField2D, mu_s_value: f64) -> Result<QualityReport> {
    if a_true.grid.nx() != a_rec.grid.nx()
        || a_true.grid.ny() != a_rec.grid.ny()
        || (a_true.grid.step - a_rec.grid.step).abs() > 1e-12
    {
        return Err(RteError::Config("score: grid mismatch".into()));
    }
    let grid = &a_true.grid;
    let max_mu_a_rec = a_rec
        .values
        .iter()
        .map(|v| v - mu_s_value)
        .fold(f64::NEG_INFINITY, f64::max)
        .max(0.0);
    let computed_contrast = 1.0 + max_mu_a_rec / mu_s_value;
    let norm_true: f64 = a_true.values.iter().map(|v| v * v).sum::<f64>().sqrt();
    let diff: f64 = a_true
        .values
        .iter()
        .zip(&a_rec.values)
        .map(|(t, r)| (t - r) * (t - r))
        .sum::<f64>()
        .sqrt();
    let rel_l2_error = diff / norm_true;

    let threshold = mu_s_value + 0.5 * max_mu_a_rec;
    let max_mu_a_true = a_true
        .values
        .iter()
        .map(|v| v - mu_s_value)
        .fold(f64::NEG_INFINITY, f64::max)
        .max(0.0);
    let true_threshold = mu_s_value + 0.5 * max_mu_a_true;
    let rec_in = |i: usize, j: usize| a_rec.at(i, j) >= threshold;
    let true_in = |i: usize, j: usize| a_true.at(i, j) >= true_threshold && max_mu_a_true > 0.0;
    let (mut inter, mut union) = (0usize, 0usize);
    for j in 0..grid.ny() {
        for i in 0..grid.nx() {
            let (r, t) = (rec_in(i, j), true_in(i, j));
            if r && t {
                inter += 1;
            }
            if r || t {
                union += 1;
            }
        }
    }
    let support_jaccard = if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    };
    let centroid_displacement = match (centroid(grid, rec_in), centroid(grid, true_in)) {
        (Some((rx, ry)), Some((tx, ty))) => ((rx - tx).powi(2) + (ry - ty).powi(2)).sqrt(),
        _ => f64::INFINITY,
    };
    Ok(QualityReport {
        computed_contrast,
        rel_l2_error,
        centroid_displacement,
        support_jaccard,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grids, GridPurpose};
    use crate::ExperimentConfig;

    fn inv_grid() -> Grid2D {
        let cfg = ExperimentConfig::default();
        build_grids(&cfg, GridPurpose::Inversion).unwrap().0
    }

    #[test]
    fn disk_area_matches_analytic_value() {
        let grid = inv_grid();
        let p = make_phantom("disk", 5.0, &grid).unwrap();
        // Rasterization bias is ~perimeter*h/2; measured 0.0082 at h = 1/20.
        assert!(
            (p.area() - std::f64::consts::PI * 0.04).abs() < 0.01,
            "area = {}",
            p.area()
        );
    }

    #[test]
    fn zero_amplitude_means_unit_contrast() {
        let grid = inv_grid();
        let p = make_phantom("A", 0.0, &grid).unwrap();
        let mu_a = p.mu_a();
        assert!(mu_a.values.iter().all(|&v| v == 0.0));
        let a = p.a_total(5.0);
        let report = score(&a, &a, 5.0).unwrap();
        assert_eq!(report.computed_contrast, 1.0);
    }

    #[test]
    fn contrast_follows_amplitude() {
        let grid = inv_grid();
        for (c, want) in [(5.0, 2.0), (30.0, 7.0)] {
            let p = make_phantom("A", c, &grid).unwrap();
            let a = p.a_total(5.0);
            let report = score(&a, &a, 5.0).unwrap();
            assert!((report.computed_contrast - want).abs() < 1e-12);
        }
    }

    #[test]
    fn letters_have_reasonable_extent() {
        let grid = inv_grid();
        for name in ["A", "Omega", "SZ"] {
            let p = make_phantom(name, 5.0, &grid).unwrap();
            let frac = p.mask.iter().filter(|&&m| m).count() as f64 / p.mask.len() as f64;
            assert!(
                (0.1..0.5).contains(&frac),
                "{name}: fill fraction {frac}"
            );
            // Nothing touches the domain boundary.
            let nx = grid.nx();
            let ny = grid.ny();
            for i in 0..nx {
                assert!(!p.inside(i, 0) && !p.inside(i, ny - 1));
            }
            for j in 0..ny {
                assert!(!p.inside(0, j) && !p.inside(nx - 1, j));
            }
        }
    }

    #[test]
    fn unknown_phantom_is_config_error() {
        let grid = inv_grid();
        assert!(matches!(
            make_phantom("Q", 5.0, &grid),
            Err(RteError::Config(_))
        ));
    }

    #[test]
    fn custom_mask_round_trips_through_pbm() {
        let grid = inv_grid();
        let p = make_phantom("A", 5.0, &grid).unwrap();
        // P1 text written from the asset parses back to the same mask.
        let img = parse_mask(GLYPH_A).unwrap();
        let mut text = format!("P1\n{} {}\n", img.width, img.height);
        for row in 0..img.height {
            for col in 0..img.width {
                text.push(if img.at(col, row) { '1' } else { '0' });
                text.push(' ');
            }
            text.push('\n');
        }
        let dir = std::env::temp_dir().join("rte_phantom_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("a_copy.pbm");
        std::fs::write(&path, text).unwrap();
        let q = make_phantom(path.to_str().unwrap(), 5.0, &grid).unwrap();
        assert_eq!(p.mask, q.mask);
    }

    #[test]
    fn noise_is_bounded_and_deterministic() {
        let cfg = ExperimentConfig::default();
        let (grid, sources) = build_grids(&cfg, GridPurpose::Inversion).unwrap();
        let trace = BoundaryTrace::zeros(&grid, &sources).map(|_| 3.0);
        let zero = add_noise(&trace, 0.0, 7, false);
        for side in Side::ALL {
            for idx in 0..trace.side_len(side) {
                for k in 0..sources.len() {
                    assert_eq!(zero.at(side, idx, k), 3.0);
                }
            }
        }
        let a = add_noise(&trace, 0.05, 7, false);
        let b = add_noise(&trace, 0.05, 7, false);
        let c = add_noise(&trace, 0.05, 8, false);
        let mut differs = false;
        for side in Side::ALL {
            for idx in 0..trace.side_len(side) {
                for k in 0..sources.len() {
                    let ratio = a.at(side, idx, k) / 3.0;
                    assert!((1.0..=1.05).contains(&ratio), "ratio {ratio}");
                    assert_eq!(a.at(side, idx, k), b.at(side, idx, k));
                    if a.at(side, idx, k) != c.at(side, idx, k) {
                        differs = true;
                    }
                    // Shared draw across alpha.
                    assert_eq!(a.at(side, idx, k), a.at(side, idx, 0));
                }
            }
        }
        assert!(differs);
    }

    #[test]
    fn per_alpha_noise_varies_across_alpha() {
        let cfg = ExperimentConfig::default();
        let (grid, sources) = build_grids(&cfg, GridPurpose::Inversion).unwrap();
        let trace = BoundaryTrace::zeros(&grid, &sources).map(|_| 3.0);
        let a = add_noise(&trace, 0.05, 7, true);
        let mut varies = false;
        for k in 1..sources.len() {
            if a.at(Side::Top, 5, k) != a.at(Side::Top, 5, 0) {
                varies = true;
            }
        }
        assert!(varies);
    }

    #[test]
    fn noise_mean_amplification_matches_uniform_half() {
        let cfg = ExperimentConfig::default();
        let (grid, sources) = build_grids(&cfg, GridPurpose::Inversion).unwrap();
        let trace = BoundaryTrace::zeros(&grid, &sources).map(|_| 1.0);
        let sigma = 0.05;
        let noisy = add_noise(&trace, sigma, 123, true);
        let mut sum = 0.0;
        let mut count = 0usize;
        for side in Side::ALL {
            for idx in 0..trace.side_len(side) {
                for k in 0..sources.len() {
                    sum += noisy.at(side, idx, k);
                    count += 1;
                }
            }
        }
        let mean = sum / count as f64;
        // Uniform [0,1]: mean 1 + sigma/2, sd sigma/sqrt(12 n); allow 3 sigma.
        let se = sigma / (12.0 * count as f64).sqrt();
        assert!(
            (mean - (1.0 + sigma / 2.0)).abs() < 3.0 * se,
            "mean = {mean}, se = {se}"
        );
    }

    #[test]
    fn perfect_reconstruction_scores_perfectly() {
        let grid = inv_grid();
        let p = make_phantom("A", 5.0, &grid).unwrap();
        let a = p.a_total(5.0);
        let r = score(&a, &a, 5.0).unwrap();
        assert_eq!(r.rel_l2_error, 0.0);
        assert_eq!(r.support_jaccard, 1.0);
        assert_eq!(r.centroid_displacement, 0.0);
        assert!((r.computed_contrast - 2.0).abs() < 1e-12);
    }

    #[test]
    fn flat_reconstruction_scores_unit_contrast() {
        let grid = inv_grid();
        let p = make_phantom("A", 5.0, &grid).unwrap();
        let a_true = p.a_total(5.0);
        let flat = ScalarField2D::constant(&grid, 5.0);
        let r = score(&a_true, &flat, 5.0).unwrap();
        assert_eq!(r.computed_contrast, 1.0);
        assert!(r.support_jaccard < 0.5);
    }

    #[test]
    fn shifted_reconstruction_displaces_centroid_by_h() {
        let grid = inv_grid();
        let p = make_phantom("disk", 5.0, &grid).unwrap();
        let a_true = p.a_total(5.0);
        // Shift the mask one grid cell in x.
        let mut shifted = ScalarField2D::constant(&grid, 5.0);
        for j in 0..grid.ny() {
            for i in 1..grid.nx() {
                if p.inside(i - 1, j) {
                    shifted.set(i, j, 10.0);
                }
            }
        }
        let r = score(&a_true, &shifted, 5.0).unwrap();
        assert!(
            (r.centroid_displacement - grid.step).abs() < 1e-9,
            "displacement {}",
            r.centroid_displacement
        );
    }

    #[test]
    fn raster_translation_round_trip_is_stable() {
        // Translating the grid by whole cells and back yields the same mask.
        let grid = inv_grid();
        let p1 = make_phantom("Omega", 5.0, &grid).unwrap();
        let p2 = make_phantom("Omega", 5.0, &grid).unwrap();
        assert_eq!(p1.mask, p2.mask);
    }
}
