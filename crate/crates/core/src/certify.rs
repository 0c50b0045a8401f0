//! Uniqueness certificates for the nonlocal problem, in terms of the ratio
//! `c = a/b`:
//!
//! 1. `c` constant: the scalar map `Φ(s) − s` is strictly decreasing.
//! 2. `D = Δc − 2|∇c|²/c ≥ 0`: the admissible set of the eigenvalue problem
//!    is empty, so the Jacobian never degenerates.
//! 3. `|∇c|∞·c_M / (√λ₁·c_L²) ≤ 3/2`: the principal eigenvalue stays above
//!    the critical level for every admissible `α`.
//!
//! Checks run in that order and the first one that holds decides the verdict.

use std::fmt;

use serde_json::{Map, Value};
use thiserror::Error;

use crate::format::json_f64;
use crate::grid::{
    closure_extrema, coefficient_grad_sup, coefficient_gradient, divergence, gradient, laplacian, Grid, ScalarField,
};
use crate::linalg::{cg_solve, assemble_weighted_laplacian, LinalgError, CG_TOL};

/// Largest relative variation `(max − min)/mean` treated as a constant ratio.
pub const CONSTANT_RATIO_TOL: f64 = 1e-10;
/// `min D` at or above this certifies the pointwise criterion.
pub const POINTWISE_TOL: f64 = -1e-8;
pub const RATIO_BOUND: f64 = 1.5;
/// Acceptance threshold on `min D` for the torsion construction.
pub const CONSTRUCTION_TOL: f64 = -1e-6;

#[derive(Debug, Error)]
pub enum CertifyError {
    #[error("coefficient ratio must be positive (min {min})")]
    NonPositiveC { min: f64 },
    #[error("coefficient `{name}` must be positive (min {min})")]
    NonPositiveCoefficient { name: &'static str, min: f64 },
    #[error("coefficients live on different grids")]
    GridMismatch,
    #[error("alpha must be non-negative and finite (got {0})")]
    BadAlpha(f64),
    #[error("torsion construction failed: min c = {min_c}, min D = {min_d:e}; grid too coarse")]
    ConstructionFailed { min_c: f64, min_d: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    UniqueConstantRatio,
    UniquePointwise,
    UniqueRatioBound,
    Inconclusive,
}

impl Verdict {
    pub fn is_unique(self) -> bool {
        self != Verdict::Inconclusive
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::UniqueConstantRatio => "UniqueConstantRatio",
            Verdict::UniquePointwise => "UniquePointwise",
            Verdict::UniqueRatioBound => "UniqueRatioBound",
            Verdict::Inconclusive => "Inconclusive",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Certificate {
    pub verdict: Verdict,
    pub ratio_value: f64,
    /// Minimum of `D` away from the boundary collar; `None` when every node
    /// touches the boundary.
    pub min_d: Option<f64>,
    pub theta: Option<f64>,
    pub lambda1: f64,
    pub grid: Grid,
    pub details: String,
}

impl Certificate {
    /// Flat JSON object; numbers carry 17 significant digits.
    pub fn to_json(&self) -> Value {
        let g = self.grid;
        let opt = |v: Option<f64>| v.map_or(Value::Null, json_f64);
        let mut obj = Map::new();
        obj.insert("verdict".into(), Value::String(self.verdict.to_string()));
        obj.insert("ratio_value".into(), json_f64(self.ratio_value));
        obj.insert("min_D".into(), opt(self.min_d));
        obj.insert("theta".into(), opt(self.theta));
        obj.insert("lambda1".into(), json_f64(self.lambda1));
        obj.insert("nx".into(), Value::from(g.nx()));
        obj.insert("ny".into(), Value::from(g.ny()));
        obj.insert("x0".into(), json_f64(g.x0()));
        obj.insert("y0".into(), json_f64(g.y0()));
        obj.insert("lx".into(), json_f64(g.lx()));
        obj.insert("ly".into(), json_f64(g.ly()));
        obj.insert("details".into(), Value::String(self.details.clone()));
        Value::Object(obj)
    }
}

fn check_c(c: &ScalarField) -> Result<(), CertifyError> {
    let min = c.min();
    if min > 0.0 {
        Ok(())
    } else {
        Err(CertifyError::NonPositiveC { min })
    }
}

/// `D = Δc − 2|∇c|²/c` at every node, with `|∇c|²` the four-face average.
/// Differences of `c` use extrapolated boundary ghosts.
pub fn pointwise_d(c: &ScalarField) -> Result<ScalarField, CertifyError> {
    check_c(c)?;
    let grad = coefficient_gradient(c);
    let lap = divergence(&grad);
    let sq = grad.node_mean_square();
    let vals = (0..c.values().len())
        .map(|k| lap.values()[k] - 2.0 * sq.values()[k] / c.values()[k])
        .collect();
    Ok(ScalarField::from_values(*c.grid(), vals).expect("finite for positive c"))
}

/// Minimum over non-collar nodes and over collar nodes.
pub fn split_min(d: &ScalarField) -> (Option<f64>, Option<f64>) {
    let g = d.grid();
    let (mut inner, mut collar) = (None::<f64>, None::<f64>);
    for j in 0..g.ny() {
        for i in 0..g.nx() {
            let v = d.at(i, j);
            let slot = if g.in_collar(i, j) { &mut collar } else { &mut inner };
            *slot = Some(slot.map_or(v, |m| m.min(v)));
        }
    }
    (inner, collar)
}

fn shifted_ratio(c: &ScalarField, alpha: f64) -> f64 {
    let (c_lo, c_hi) = closure_extrema(c);
    let lo = c_lo + alpha;
    coefficient_grad_sup(c) * (c_hi + alpha) / (c.grid().lambda1().sqrt() * (lo * lo))
}

/// `|∇c|∞·c_M / (√λ₁·c_L²)`
pub fn ratio_criterion(c: &ScalarField) -> f64 {
    shifted_ratio(c, 0.0)
}

/// `g(α) = |∇c|∞·(c_M+α) / (√λ₁·(c_L+α)²) − 1`, decreasing in `α`.
pub fn g_alpha(c: &ScalarField, alpha: f64) -> Result<f64, CertifyError> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(CertifyError::BadAlpha(alpha));
    }
    Ok(shifted_ratio(c, alpha) - 1.0)
}

fn relative_variation(c: &ScalarField) -> f64 {
    (c.max() - c.min()) / c.mean().abs()
}

/// Applies the three criteria to `c = a/b`. Every measured quantity is
/// reported whatever the verdict.
pub fn certify(a: &ScalarField, b: &ScalarField) -> Result<Certificate, CertifyError> {
    if !a.grid().matches(b.grid()) {
        return Err(CertifyError::GridMismatch);
    }
    for (name, f) in [("a", a), ("b", b)] {
        let min = f.min();
        if !(min > 0.0) {
            return Err(CertifyError::NonPositiveCoefficient { name, min });
        }
    }
    let c = a.zip_map(b, |a, b| a / b);
    let grid = *c.grid();
    let variation = relative_variation(&c);
    let ratio_value = ratio_criterion(&c);
    let d = pointwise_d(&c)?;
    let (min_d, collar_min) = split_min(&d);
    let (c_lo, c_hi) = closure_extrema(&c);

    let (verdict, theta) = if variation <= CONSTANT_RATIO_TOL {
        (Verdict::UniqueConstantRatio, Some(c.mean()))
    } else if min_d.is_some_and(|m| m >= POINTWISE_TOL) {
        (Verdict::UniquePointwise, None)
    } else if ratio_value <= RATIO_BOUND {
        (Verdict::UniqueRatioBound, None)
    } else {
        (Verdict::Inconclusive, None)
    };

    let show = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.6e}"));
    let details = format!(
        "c = a/b on {grid}; relative variation {variation:.3e} (constant below {CONSTANT_RATIO_TOL:e}); \
         D = lap c - 2|grad c|^2/c: min {} off the boundary collar, {} on the collar (collar excluded from the test); \
         ratio |grad c|_inf*c_M/(sqrt(lambda1)*c_L^2) = {ratio_value:.6e} with c_L = {c_lo:.6e}, c_M = {c_hi:.6e}, \
         |grad c|_inf = {:.6e}; the pointwise and ratio criteria are applied for every data h, including \
         sign-changing h and non-constant c",
        show(min_d),
        show(collar_min),
        coefficient_grad_sup(&c),
    );
    Ok(Certificate { verdict, ratio_value, min_d, theta, lambda1: grid.lambda1(), grid, details })
}

/// `c = δ·e + 1` with `Δe = 1`, `e = 0` on the boundary and
/// `δ = min(1/(4|∇e|∞²), 1/(2‖e‖∞))`. Here `|∇e|∞²` is the largest four-face
/// average of `|∇e|²`, which makes `D ≥ 0` hold exactly off the collar.
pub fn torsion_coefficient(grid: Grid) -> Result<ScalarField, CertifyError> {
    let neg_lap = assemble_weighted_laplacian(&ScalarField::constant(grid, 1.0))?;
    let rhs = vec![-1.0; grid.len()];
    let e = ScalarField::from_values(grid, cg_solve(&neg_lap, &rhs, CG_TOL)?).expect("finite solve");
    debug_assert!(laplacian(&e).values().iter().all(|v| (v - 1.0).abs() < 1e-6));
    let grad_sq_sup = gradient(&e).node_mean_square().max();
    let e_sup = e.max_abs();
    let delta = (1.0 / (4.0 * grad_sq_sup)).min(1.0 / (2.0 * e_sup));
    let c = e.map(|v| delta * v + 1.0);
    let min_c = c.min();
    if !(min_c > 0.0) {
        return Err(CertifyError::ConstructionFailed { min_c, min_d: f64::NAN });
    }
    let (min_d, _) = split_min(&pointwise_d(&c)?);
    match min_d {
        Some(m) if m >= CONSTRUCTION_TOL => Ok(c),
        other => Err(CertifyError::ConstructionFailed { min_c, min_d: other.unwrap_or(f64::NAN) }),
    }
}
