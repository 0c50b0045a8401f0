#![allow(dead_code)]

use kirchhoff_lab::certify::torsion_coefficient;
use kirchhoff_lab::{Grid, ScalarField};

/// Ratio fields `c` with a known sign of `D = Δc − 2|∇c|²/c`.
pub struct CatalogEntry {
    pub name: &'static str,
    pub c: ScalarField,
    pub d_nonnegative: bool,
}

/// Ten coefficient ratios: five with `D ≥ 0` (`1/c` superharmonic) and five
/// with `D < 0` somewhere.
pub fn catalog(grid: Grid) -> Vec<CatalogEntry> {
    let f = |name, d_nonnegative, g: fn(f64, f64) -> f64| CatalogEntry {
        name,
        c: ScalarField::from_fn(grid, g),
        d_nonnegative,
    };
    use std::f64::consts::PI;
    vec![
        f("1", true, |_, _| 1.0),
        CatalogEntry { name: "torsion", c: torsion_coefficient(grid).unwrap(), d_nonnegative: true },
        f("1/(2-x^2)", true, |x, _| 1.0 / (2.0 - x * x)),
        f("1/(3-x^2-y^2)", true, |x, y| 1.0 / (3.0 - x * x - y * y)),
        f("1/(4-(x-0.3)^2-2y^2)", true, |x, y| 1.0 / (4.0 - (x - 0.3).powi(2) - 2.0 * y * y)),
        f("1+x", false, |x, _| 1.0 + x),
        f("2+sin(pi x)sin(pi y)", false, |x, y| 2.0 + (PI * x).sin() * (PI * y).sin()),
        f("exp(x)", false, |x, _| x.exp()),
        f("1+2x^2y", false, |x, y| 1.0 + 2.0 * x * x * y),
        f("1/(1+x^2)", false, |x, _| 1.0 / (1.0 + x * x)),
    ]
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}
