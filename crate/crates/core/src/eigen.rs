//! The nonlocal eigenvalue problem at a frozen energy level `α`:
//!
//! ```text
//! −div(∇u/(c+α)) = λ · m_α · u,   m_α = −div[∇c/(c+α)²],   u = 0 on ∂Ω,
//! ```
//!
//! with the eigenfunction normalized to `|∇u|₂² = α`. The weight `m_α` is
//! indefinite in general; `α` is admissible when `m_α` is positive somewhere.

use std::fmt::Write as _;

use thiserror::Error;

use crate::format::fmt_f64;
use crate::grid::{
    closure_extrema, coefficient_face_means, coefficient_grad_sup, coefficient_gradient, divergence,
    grad_norm_sq, gradient, integrate, ScalarField,
};
use crate::linalg::{assemble_weighted_laplacian, face_weights, smallest_positive, LinalgError, Pencil};

/// `m_α` must exceed this at some node for `α` to be admissible.
pub const ADMISSIBLE_THRESHOLD: f64 = 1e-10;
/// Largest negative excursion of an eigenfunction, relative to its maximum.
pub const SIGN_TOLERANCE: f64 = 1e-8;
/// Bound on `‖A v − λ B v‖ / ‖A v‖` for accepted eigenpairs.
pub const RESIDUAL_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum EigenError {
    #[error("coefficient ratio must be positive (min {min})")]
    NonPositiveC { min: f64 },
    #[error("alpha must be non-negative and finite (got {0})")]
    BadAlpha(f64),
    #[error("alpha = {0} is not admissible: the weight is nowhere positive")]
    NotInA(f64),
    #[error("principal eigenvector changes sign (min {min:e}, max {max:e}); grid too coarse")]
    SignChange { min: f64, max: f64 },
    #[error("eigenpair residual {0:e} exceeds tolerance")]
    Residual(f64),
    #[error("Rayleigh quotient denominator vanishes")]
    ZeroDenominator,
    #[error("ratio is constant: the lower bound is +∞")]
    ConstantC,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// `(α, λ_α, u_α)` with `u_α > 0` and `|∇u_α|₂² = α`.
#[derive(Clone, Debug)]
pub struct EigenPair {
    pub alpha: f64,
    pub lambda: f64,
    pub u: ScalarField,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EigenCurveRow {
    pub alpha: f64,
    pub lambda: f64,
    pub ee_bound: f64,
    /// `|rayleigh − λ| / λ`
    pub rayleigh_gap: f64,
}

#[derive(Clone, Debug, Default)]
pub struct EigenCurve {
    pub rows: Vec<EigenCurveRow>,
    pub pairs: Vec<EigenPair>,
}

impl EigenCurve {
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("alpha,lambda,ee_bound,rayleigh_gap\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                fmt_f64(r.alpha),
                fmt_f64(r.lambda),
                fmt_f64(r.ee_bound),
                fmt_f64(r.rayleigh_gap)
            );
        }
        out
    }
}

fn check_c(c: &ScalarField) -> Result<(), EigenError> {
    let min = c.min();
    if min > 0.0 {
        Ok(())
    } else {
        Err(EigenError::NonPositiveC { min })
    }
}

fn check_alpha(alpha: f64) -> Result<(), EigenError> {
    if alpha.is_finite() && alpha >= 0.0 {
        Ok(())
    } else {
        Err(EigenError::BadAlpha(alpha))
    }
}

/// `m_α = −div[∇c/(c+α)²]`, assembled in divergence form on the faces.
pub fn weight_m(c: &ScalarField, alpha: f64) -> Result<ScalarField, EigenError> {
    check_c(c)?;
    check_alpha(alpha)?;
    let flux = coefficient_gradient(c).zip_map(&coefficient_face_means(c), |g, cf| {
        let d = cf + alpha;
        g / (d * d)
    });
    Ok(divergence(&flux).scaled(-1.0))
}

/// Whether `α` belongs to the admissible set: `m_α` positive at some node.
pub fn in_a(c: &ScalarField, alpha: f64) -> Result<bool, EigenError> {
    if !(alpha > 0.0) {
        return Err(EigenError::BadAlpha(alpha));
    }
    Ok(weight_m(c, alpha)?.max() > ADMISSIBLE_THRESHOLD)
}

fn stiffness_weight(c: &ScalarField, alpha: f64) -> ScalarField {
    c.map(|v| 1.0 / (v + alpha))
}

/// Principal eigenpair of the frozen problem at level `α`.
pub fn solve_ep(c: &ScalarField, alpha: f64) -> Result<EigenPair, EigenError> {
    if !in_a(c, alpha)? {
        return Err(EigenError::NotInA(alpha));
    }
    let grid = *c.grid();
    let area = grid.cell_area();
    let m = weight_m(c, alpha)?;
    let a = assemble_weighted_laplacian(&stiffness_weight(c, alpha))?.scaled(area);
    let b: Vec<f64> = m.values().iter().map(|v| v * area).collect();
    let pencil = Pencil::new(a, b)?;
    let pair = smallest_positive(&pencil)?.ok_or(EigenError::NotInA(alpha))?;

    let raw = ScalarField::from_values(grid, pair.vector).expect("eigenvector sized to grid");
    let u = raw.scaled((alpha / grad_norm_sq(&raw)).sqrt());
    let (min, max) = (u.min(), u.max());
    if min < -SIGN_TOLERANCE * max {
        return Err(EigenError::SignChange { min, max });
    }
    let residual = pencil.relative_residual(pair.value, u.values());
    if !(residual <= RESIDUAL_TOLERANCE) {
        return Err(EigenError::Residual(residual));
    }
    Ok(EigenPair { alpha, lambda: pair.value, u })
}

/// Weighted Dirichlet energy `∫|∇u|²/(c+α)` with the same face weights as
/// the stiffness matrix of [`solve_ep`].
pub fn rayleigh_numerator(c: &ScalarField, alpha: f64, u: &ScalarField) -> f64 {
    let grad = gradient(u);
    let weighted = face_weights(&stiffness_weight(c, alpha)).zip_map(&grad, |w, g| w * g);
    weighted.inner(&grad)
}

/// `∫|∇u|²/(c+α)  /  ∫u²·m_α`
pub fn rayleigh(c: &ScalarField, alpha: f64, u: &ScalarField) -> Result<f64, EigenError> {
    let m = weight_m(c, alpha)?;
    let den = integrate(&u.zip_map(&m, |u, m| u * u * m));
    if den == 0.0 {
        return Err(EigenError::ZeroDenominator);
    }
    Ok(rayleigh_numerator(c, alpha, u) / den)
}

/// `√λ₁·(c_L+α)² / (2·|∇c|∞·(c_M+α))`, a lower bound for `λ_α`.
pub fn ee_lower_bound(c: &ScalarField, alpha: f64) -> Result<f64, EigenError> {
    check_c(c)?;
    check_alpha(alpha)?;
    let grad_sup = coefficient_grad_sup(c);
    if grad_sup == 0.0 {
        return Err(EigenError::ConstantC);
    }
    let (c_lo, c_hi) = closure_extrema(c);
    let lambda1 = c.grid().lambda1();
    Ok(lambda1.sqrt() * (c_lo + alpha).powi(2) / (2.0 * grad_sup * (c_hi + alpha)))
}

/// Samples the principal eigenvalue over `alphas`, keeping admissible levels only.
pub fn eigen_curve(c: &ScalarField, alphas: &[f64]) -> Result<EigenCurve, EigenError> {
    let mut curve = EigenCurve::default();
    for &alpha in alphas {
        if !in_a(c, alpha)? {
            continue;
        }
        let pair = solve_ep(c, alpha)?;
        let ee_bound = match ee_lower_bound(c, alpha) {
            Err(EigenError::ConstantC) => f64::INFINITY,
            other => other?,
        };
        let r = rayleigh(c, alpha, &pair.u)?;
        curve.rows.push(EigenCurveRow {
            alpha,
            lambda: pair.lambda,
            ee_bound,
            rayleigh_gap: (r - pair.lambda).abs() / pair.lambda,
        });
        curve.pairs.push(pair);
    }
    Ok(curve)
}

/// `n` logarithmically spaced values from `lo` to `hi` inclusive.
pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n).map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp()).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use std::f64::consts::PI;

    fn linear_c(n: usize) -> ScalarField {
        ScalarField::from_fn(Grid::unit_square(n), |x, _| 1.0 + x)
    }

    #[test]
    fn constant_ratio_has_zero_weight() {
        let c = ScalarField::constant(Grid::unit_square(8), 2.5);
        for alpha in [0.0, 0.1, 10.0] {
            assert!(weight_m(&c, alpha).unwrap().values().iter().all(|&v| v == 0.0));
        }
        assert!(!in_a(&c, 1.0).unwrap());
        assert!(eigen_curve(&c, &[0.1, 1.0]).unwrap().is_empty());
        assert!(matches!(ee_lower_bound(&c, 1.0), Err(EigenError::ConstantC)));
        assert!(matches!(solve_ep(&c, 1.0), Err(EigenError::NotInA(_))));
    }

    #[test]
    fn linear_ratio_weight_matches_expanded_formula() {
        let c = linear_c(64);
        for alpha in [0.0, 0.5, 3.0] {
            let m = weight_m(&c, alpha).unwrap();
            let exact = c.map(|v| 2.0 / (v + alpha).powi(3));
            for (got, want) in m.values().iter().zip(exact.values()) {
                assert!((got - want).abs() <= 1e-2 * want, "{got} vs {want}");
            }
        }
    }

    #[test]
    fn linear_ratio_is_admissible_everywhere_sampled() {
        let c = linear_c(16);
        for alpha in logspace(1e-3, 100.0, 12) {
            assert!(in_a(&c, alpha).unwrap());
        }
    }

    #[test]
    fn input_validation() {
        let c = linear_c(4);
        assert!(matches!(weight_m(&c, -1.0), Err(EigenError::BadAlpha(_))));
        assert!(matches!(in_a(&c, 0.0), Err(EigenError::BadAlpha(_))));
        let bad = c.map(|v| v - 1.5);
        assert!(matches!(weight_m(&bad, 1.0), Err(EigenError::NonPositiveC { .. })));
    }

    #[test]
    fn weight_integral_is_a_face_sum() {
        // ∫u²m = Σ_faces grad(u²)·G exactly, for Dirichlet u
        let grid = Grid::unit_square(11);
        let c = ScalarField::from_fn(grid, |x, y| 1.0 + x * x + (2.0 * y).sin());
        let u = ScalarField::from_fn(grid, |x, y| (PI * x).sin() * (2.0 * PI * y).sin() + x * y * (1.0 - x));
        let alpha = 0.7;
        let m = weight_m(&c, alpha).unwrap();
        let lhs = integrate(&u.zip_map(&m, |u, m| u * u * m));
        let flux = coefficient_gradient(&c).zip_map(&coefficient_face_means(&c), |g, cf| g / (cf + alpha).powi(2));
        let rhs = gradient(&u.map(|v| v * v)).inner(&flux);
        assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn principal_pair_for_linear_ratio() {
        let c = linear_c(16);
        let alpha = 1.0;
        let pair = solve_ep(&c, alpha).unwrap();
        assert!(pair.lambda > 0.0);
        assert!(pair.u.min() > 0.0);
        assert!((grad_norm_sq(&pair.u) - alpha).abs() <= 1e-8 * alpha);
        let r = rayleigh(&c, alpha, &pair.u).unwrap();
        assert!((r - pair.lambda).abs() <= 1e-8 * pair.lambda);
        assert!(pair.lambda >= ee_lower_bound(&c, alpha).unwrap() - 1e-8);
        // quotient is homogeneous of degree zero
        let r3 = rayleigh(&c, alpha, &pair.u.scaled(-3.0)).unwrap();
        assert!((r3 - r).abs() <= 1e-12 * r);
        // energy bound on the numerator
        let c_hi = closure_extrema(&c).1;
        assert!(rayleigh_numerator(&c, alpha, &pair.u) >= alpha / (c_hi + alpha) - 1e-8);
    }

    #[test]
    fn lower_bound_arithmetic() {
        let c = linear_c(64);
        let b = ee_lower_bound(&c, 1.0).unwrap();
        let expect = (2.0 * PI * PI).sqrt() * 4.0 / 6.0;
        assert!((b - expect).abs() < 1e-2, "{b} vs {expect}");
        let big: Vec<f64> = [10.0, 100.0, 1000.0].iter().map(|&a| ee_lower_bound(&c, a).unwrap()).collect();
        assert!(big[0] < big[1] && big[1] < big[2]);
    }

    #[test]
    fn zero_field_has_no_quotient() {
        let c = linear_c(6);
        let u = ScalarField::zeros(*c.grid());
        assert!(matches!(rayleigh(&c, 1.0, &u), Err(EigenError::ZeroDenominator)));
    }

    #[test]
    fn curve_csv_layout() {
        let c = linear_c(8);
        let curve = eigen_curve(&c, &[0.5, 2.0]).unwrap();
        let csv = curve.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "alpha,lambda,ee_bound,rayleigh_gap");
        assert_eq!(lines.len(), 3);
        assert!(curve.rows.iter().all(|r| r.lambda >= r.ee_bound - 1e-8 && r.rayleigh_gap <= 1e-8));
    }

    #[test]
    fn logspace_endpoints() {
        let v = logspace(1e-2, 1e2, 5);
        assert_eq!(v.len(), 5);
        assert!((v[0] - 1e-2).abs() < 1e-15 && (v[4] - 1e2).abs() < 1e-12 && (v[2] - 1.0).abs() < 1e-12);
    }
}
