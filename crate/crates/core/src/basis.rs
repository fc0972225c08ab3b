//! The special orthonormal basis {Ψ_s} of L²(−d, d) built by Gram-Schmidt from
//! {α^s e^α}, and the derivative matrix M_N with entries ∫Ψ_s′Ψ_k dα.
//!
//! Every inner product reduces to moments ∫α^j e^{2α} dα, which are evaluated
//! in closed form (a power series with all-positive terms), so orthonormality
//! and the triangular structure of M_N hold to rounding accuracy.

use crate::config::DerivMode;
use crate::error::{Result, RteError};

/// Gram-Schmidt beyond this count is numerically fragile; the experiments use
/// at most N = 12.
pub const MAX_BASIS: usize = 16;

/// Double-double arithmetic for the moment tables and inner products.
///
/// Monomial coefficients of the orthonormal polynomials grow to ~1e6 by
/// degree 11, so plain f64 product-and-sum leaves ~1e-10 of cancellation noise
/// in the Gram matrix. Carrying ~32 significant digits through the pairing
/// puts orthonormality at the 1e-13 level.
mod dd {
    #[derive(Debug, Clone, Copy)]
    pub struct Dd {
        pub hi: f64,
        pub lo: f64,
    }

    #[inline]
    fn two_sum(a: f64, b: f64) -> (f64, f64) {
        let s = a + b;
        let v = s - a;
        (s, (a - (s - v)) + (b - v))
    }

    #[inline]
    fn two_prod(a: f64, b: f64) -> (f64, f64) {
        let p = a * b;
        (p, a.mul_add(b, -p))
    }

    impl Dd {
        pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

        #[inline]
        pub fn from(x: f64) -> Dd {
            Dd { hi: x, lo: 0.0 }
        }

        #[inline]
        pub fn add(self, other: Dd) -> Dd {
            let (s, e) = two_sum(self.hi, other.hi);
            let e = e + self.lo + other.lo;
            let (hi, lo) = two_sum(s, e);
            Dd { hi, lo }
        }

        #[inline]
        pub fn mul(self, other: Dd) -> Dd {
            let (p, e) = two_prod(self.hi, other.hi);
            let e = e + self.hi * other.lo + self.lo * other.hi;
            let (hi, lo) = two_sum(p, e);
            Dd { hi, lo }
        }

        #[inline]
        pub fn mul_f64(self, x: f64) -> Dd {
            let (p, e) = two_prod(self.hi, x);
            let e = e + self.lo * x;
            let (hi, lo) = two_sum(p, e);
            Dd { hi, lo }
        }

        #[inline]
        pub fn div_f64(self, x: f64) -> Dd {
            let q1 = self.hi / x;
            // Remainder computed exactly: self - q1 * x.
            let (p, e) = two_prod(q1, x);
            let r = (self.hi - p) + self.lo - e;
            let q2 = r / x;
            let (hi, lo) = two_sum(q1, q2);
            Dd { hi, lo }
        }

        #[inline]
        pub fn value(self) -> f64 {
            self.hi + self.lo
        }
    }
}

use dd::Dd;

/// Moments ∫_{−d}^{d} α^j e^{cα} dα for j = 0..=max_degree, c ≥ 0.
///
/// Expanding e^{cα} in its power series gives
/// m_j = Σ_{k ≥ 0, j+k even} (c^k / k!) · 2 d^{j+k+1} / (j+k+1),
/// a sum of positive terms (no cancellation), accumulated in double-double
/// precision.
pub fn exp_weight_moments(c: f64, d: f64, max_degree: usize) -> Vec<Dd> {
    let mut moments = Vec::with_capacity(max_degree + 1);
    for j in 0..=max_degree {
        let mut sum = Dd::ZERO;
        let mut powc_over_kfact = Dd::from(1.0); // c^k / k!
        let mut d_pow = Dd::from(1.0); // d^{j+k+1}
        for _ in 0..=j {
            d_pow = d_pow.mul_f64(d);
        }
        for k in 0..200 {
            if (j + k) % 2 == 0 {
                let term = powc_over_kfact
                    .mul(d_pow)
                    .mul_f64(2.0)
                    .div_f64((j + k + 1) as f64);
                sum = sum.add(term);
                if term.hi < sum.hi * 1e-34 && k > 4 {
                    break;
                }
            }
            powc_over_kfact = powc_over_kfact.mul_f64(c).div_f64((k + 1) as f64);
            d_pow = d_pow.mul_f64(d);
        }
        moments.push(sum);
    }
    moments
}

/// Moments of the basis-pairing weight e^{2α}.
pub fn exp_moments(d: f64, max_degree: usize) -> Vec<Dd> {
    exp_weight_moments(2.0, d, max_degree)
}

/// Σ pa_i pb_j moments[i+j], products and accumulation in double-double.
fn moment_inner(pa: &[f64], pb: &[f64], moments: &[Dd]) -> f64 {
    let mut sum = Dd::ZERO;
    for (i, &ai) in pa.iter().enumerate() {
        if ai == 0.0 {
            continue;
        }
        for (j, &bj) in pb.iter().enumerate() {
            if bj == 0.0 {
                continue;
            }
            sum = sum.add(moments[i + j].mul(Dd::from(ai).mul_f64(bj)));
        }
    }
    sum.value()
}

/// The orthonormal basis Ψ_s(α) = P_s(α) e^α, stored as polynomial coefficient
/// tables (monomial basis, ascending degree).
#[derive(Debug, Clone)]
pub struct Basis {
    pub d: f64,
    pub n: usize,
    /// poly_coeffs[s] holds the coefficients of P_s (length s + 1).
    pub poly_coeffs: Vec<Vec<f64>>,
    /// deriv_poly_coeffs[s] holds P_s + P_s′, so Ψ_s′(α) = (P_s + P_s′)(α) e^α.
    pub deriv_poly_coeffs: Vec<Vec<f64>>,
    moments: Vec<Dd>,
}

/// The N×N matrix with entries a_{s,k} = ∫Ψ_s′ Ψ_k dα, stored so that row k,
/// column s multiplies the coefficient vector (w_0, …, w_{N−1})ᵀ.
#[derive(Debug, Clone)]
pub struct DerivMatrix {
    pub n: usize,
    /// entries[k * n + s] = a_{s,k}.
    pub entries: Vec<f64>,
}

impl DerivMatrix {
    /// a_{s,k} = ∫Ψ_s′ Ψ_k dα.
    #[inline]
    pub fn a(&self, s: usize, k: usize) -> f64 {
        self.entries[k * self.n + s]
    }

    /// Matrix-vector product against a coefficient vector.
    pub fn mul_vec(&self, w: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|k| (0..self.n).map(|s| self.a(s, k) * w[s]).sum())
            .collect()
    }

    pub fn determinant(&self) -> f64 {
        let m = nalgebra::DMatrix::from_row_slice(self.n, self.n, &self.entries);
        m.lu().determinant()
    }
}

fn polynomial_derivative(p: &[f64]) -> Vec<f64> {
    if p.len() <= 1 {
        return vec![0.0];
    }
    (1..p.len()).map(|i| i as f64 * p[i]).collect()
}

fn add_polys(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len().max(b.len());
    (0..n)
        .map(|i| a.get(i).copied().unwrap_or(0.0) + b.get(i).copied().unwrap_or(0.0))
        .collect()
}

/// Build the basis by Gram-Schmidt over {α^s e^α} with exact moments.
///
/// Orthogonalization runs twice per vector, which keeps the Gram matrix within
/// ~1e-12 of the identity for all supported N.
pub fn build_basis(d: f64, n: usize) -> Result<Basis> {
    if n < 1 {
        return Err(RteError::Config("basis count N must be >= 1".into()));
    }
    if d <= 0.0 {
        return Err(RteError::Config("basis half-interval d must be > 0".into()));
    }
    if n > MAX_BASIS {
        return Err(RteError::Config(format!(
            "N = {n} unsupported: Gram-Schmidt on {{alpha^s e^alpha}} is unstable beyond N = {MAX_BASIS}"
        )));
    }
    // Products of two degree-(n-1) polynomials and one extra degree from the
    // derivative never exceed 2n - 1.
    let moments = exp_moments(d, 2 * n);
    let mut polys: Vec<Vec<f64>> = Vec::with_capacity(n);
    for s in 0..n {
        let mut c = vec![0.0; s + 1];
        c[s] = 1.0;
        for _pass in 0..2 {
            for prev in polys.iter() {
                let r = moment_inner(&c, prev, &moments);
                for (ci, pi) in c.iter_mut().zip(prev.iter()) {
                    *ci -= r * pi;
                }
            }
        }
        let norm = moment_inner(&c, &c, &moments).sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(RteError::Numerical(format!(
                "Gram-Schmidt breakdown at s = {s} (norm = {norm})"
            )));
        }
        for ci in c.iter_mut() {
            *ci /= norm;
        }
        polys.push(c);
    }
    let deriv = polys
        .iter()
        .map(|p| add_polys(p, &polynomial_derivative(p)))
        .collect();
    Ok(Basis {
        d,
        n,
        poly_coeffs: polys,
        deriv_poly_coeffs: deriv,
        moments,
    })
}

fn horner(p: &[f64], x: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

impl Basis {
    /// Ψ_s(α).
    pub fn eval(&self, s: usize, alpha: f64) -> f64 {
        assert!(s < self.n, "basis index {s} out of range (N = {})", self.n);
        horner(&self.poly_coeffs[s], alpha) * alpha.exp()
    }

    /// Ψ_s′(α).
    pub fn eval_deriv(&self, s: usize, alpha: f64) -> f64 {
        assert!(s < self.n, "basis index {s} out of range (N = {})", self.n);
        horner(&self.deriv_poly_coeffs[s], alpha) * alpha.exp()
    }

    /// Ψ_s′ in the configured mode; `h` is the divided-difference step for
    /// [`DerivMode::FiniteDifference`].
    pub fn eval_deriv_mode(&self, s: usize, alpha: f64, mode: DerivMode, h: f64) -> f64 {
        match mode {
            DerivMode::Analytic => self.eval_deriv(s, alpha),
            DerivMode::FiniteDifference => {
                (self.eval(s, alpha + h) - self.eval(s, alpha - h)) / (2.0 * h)
            }
        }
    }

    /// Gram matrix ⟨Ψ_i, Ψ_j⟩ by exact moment pairing.
    pub fn gram_matrix(&self) -> Vec<f64> {
        let n = self.n;
        let mut g = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                g[i * n + j] =
                    moment_inner(&self.poly_coeffs[i], &self.poly_coeffs[j], &self.moments);
            }
        }
        g
    }

    /// Largest deviation of the Gram matrix from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let n = self.n;
        let g = self.gram_matrix();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[i * n + j] - target).abs());
            }
        }
        worst
    }

    /// ∫_{−d}^{d} Ψ_s(α) dα by exact moment pairing (weight e^α).
    pub fn exact_integral(&self, s: usize) -> f64 {
        let m1 = exp_weight_moments(1.0, self.d, self.poly_coeffs[s].len());
        self.poly_coeffs[s]
            .iter()
            .enumerate()
            .map(|(i, &c)| m1[i].mul_f64(c).value())
            .sum()
    }

    /// The derivative matrix M_N, entries by exact moment pairing.
    pub fn deriv_matrix(&self) -> DerivMatrix {
        let n = self.n;
        let mut entries = vec![0.0; n * n];
        for k in 0..n {
            for s in 0..n {
                entries[k * n + s] = moment_inner(
                    &self.deriv_poly_coeffs[s],
                    &self.poly_coeffs[k],
                    &self.moments,
                );
            }
        }
        DerivMatrix { n, entries }
    }
}
