//! The nonlocal Dirichlet problem
//!
//! ```text
//! −(a(x) + b(x)·∫|∇u|²) Δu = h   in Ω,    u = 0 on ∂Ω.
//! ```
//!
//! Freezing the nonlocal scalar `s = ∫|∇u|²` turns it into the Poisson problem
//! `−Δu_s = h/(a + s·b)`. A field solves the nonlocal problem exactly when its
//! scalar is a fixed point of `Φ(s) = |∇u_s|₂²`, so all solutions are found by
//! locating the roots of `Φ(s) − s` on a provably sufficient bracket
//! `[0, S_max]`.
//!
//! Newton's method is also provided. Its Jacobian
//! `v ↦ 2b·Δu·∫∇u·∇v + M·Δv` is a Laplacian plus a rank-one term and is
//! inverted in closed form with one Poisson solve.

use thiserror::Error;

use crate::eigen::{weight_m, EigenError};
use crate::grid::{grad_inner, grad_norm_sq, gradient, integrate, laplacian, GridError, ScalarField};
use crate::linalg::{assemble_weighted_laplacian, cg_solve, LinalgError, SparseMatrix, CG_TOL};

/// Root acceptance: `|Φ(s) − s| ≤ ROOT_TOL·(1+s)`.
pub const ROOT_TOL: f64 = 1e-10;
/// Interior minima of `|Φ(s) − s|` below `TANGENCY_TOL·(1+s)` without a sign
/// change are reported as suspected double roots.
pub const TANGENCY_TOL: f64 = 1e-6;
pub const MAX_BISECTIONS: usize = 120;
/// Smallest bracket used when the data vanish.
pub const MIN_BRACKET: f64 = 1e-6;
pub const DEFAULT_SAMPLES: usize = 256;
pub const MIN_SAMPLES: usize = 16;
/// `|2·∫b·u·Δu/M − 1|` below this makes the Jacobian numerically singular.
pub const SINGULAR_TOL: f64 = 1e-8;
/// A-posteriori bound on `Ψ′(u)v + g`, relative to `1 + ‖g‖∞`.
pub const LINEARIZATION_TOL: f64 = 1e-6;
pub const NEWTON_TOL: f64 = 1e-9;
pub const NEWTON_MAX_ITER: usize = 50;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("coefficient `{name}` must be positive (min {min})")]
    NonPositiveCoefficient { name: &'static str, min: f64 },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("nonlocal scalar must be non-negative (got {0})")]
    NegativeS(f64),
    #[error("scan needs at least {MIN_SAMPLES} samples (got {0})")]
    TooFewSamples(usize),
    #[error("bracket override must be positive and finite (got {0})")]
    BadBracket(f64),
    #[error("bisection near s = {s} stalled with |Φ(s) − s| = {gap:e}")]
    BisectionStalled { s: f64, gap: f64 },
    #[error("Jacobian is singular: 2∫b·u·Δu/M − 1 = {0:e}")]
    SingularJacobian(f64),
    #[error("linearized solve failed its residual check ({0:e})")]
    LinearizationCheck(f64),
    #[error("Newton did not converge in {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64, last: Box<ScalarField> },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Eigen(#[from] EigenError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Coefficients `a`, `b` and data `h` on a shared grid.
#[derive(Clone, Debug)]
pub struct Problem {
    a: ScalarField,
    b: ScalarField,
    h: ScalarField,
    a0: f64,
    b0: f64,
    /// `−Δ` (5-point, Dirichlet)
    neg_laplacian: SparseMatrix,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    FixedPointScan,
    Newton { iterations: usize },
}

impl Method {
    pub fn tag(&self) -> &'static str {
        match self {
            Method::FixedPointScan => "fixed-point-scan",
            Method::Newton { .. } => "newton",
        }
    }
}

/// A solution together with its nonlocal scalar and residual.
#[derive(Clone, Debug)]
pub struct NonlocalSolution {
    pub u: ScalarField,
    pub s: f64,
    pub residual: f64,
    pub method: Method,
}

#[derive(Clone, Debug)]
pub struct ScanOptions {
    pub n_samples: usize,
    /// Replaces the energy bound `S_max` as the bracket ceiling.
    pub s_max_override: Option<f64>,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self { n_samples: DEFAULT_SAMPLES, s_max_override: None }
    }
}

#[derive(Clone, Debug)]
pub struct ScanReport {
    pub s_max: f64,
    /// `(s, Φ(s))` on the uniform sampling grid.
    pub samples: Vec<(f64, f64)>,
    /// Sorted by `s`.
    pub roots: Vec<NonlocalSolution>,
    pub suspected_tangencies: Vec<f64>,
}

impl Problem {
    pub fn new(a: ScalarField, b: ScalarField, h: ScalarField) -> Result<Self, SolveError> {
        if !a.grid().matches(b.grid()) || !a.grid().matches(h.grid()) {
            return Err(SolveError::GridMismatch);
        }
        let (a0, b0) = (a.min(), b.min());
        if !(a0 > 0.0) {
            return Err(SolveError::NonPositiveCoefficient { name: "a", min: a0 });
        }
        if !(b0 > 0.0) {
            return Err(SolveError::NonPositiveCoefficient { name: "b", min: b0 });
        }
        let neg_laplacian = assemble_weighted_laplacian(&ScalarField::constant(*a.grid(), 1.0))?;
        Ok(Self { a, b, h, a0, b0, neg_laplacian })
    }

    pub fn a(&self) -> &ScalarField {
        &self.a
    }

    pub fn b(&self) -> &ScalarField {
        &self.b
    }

    pub fn h(&self) -> &ScalarField {
        &self.h
    }

    pub fn a0(&self) -> f64 {
        self.a0
    }

    pub fn b0(&self) -> f64 {
        self.b0
    }

    /// Same coefficients, data `k·h`.
    pub fn with_scaled_data(&self, k: f64) -> Self {
        Self { h: self.h.scaled(k), ..self.clone() }
    }

    /// `c = a/b`
    pub fn ratio(&self) -> ScalarField {
        self.a.zip_map(&self.b, |a, b| a / b)
    }

    /// `M(·, s) = a + s·b`
    pub fn m_field(&self, s: f64) -> Result<ScalarField, SolveError> {
        if !(s >= 0.0) {
            return Err(SolveError::NegativeS(s));
        }
        Ok(self.a.add_scaled(s, &self.b))
    }

    /// Solves `−Δz = rhs` with homogeneous Dirichlet data.
    fn poisson(&self, rhs: &ScalarField) -> Result<ScalarField, SolveError> {
        let z = cg_solve(&self.neg_laplacian, rhs.values(), CG_TOL)?;
        Ok(ScalarField::from_values(*rhs.grid(), z)?)
    }

    /// `u_s`: the solution of `−Δu = h / M(·, s)`.
    pub fn solve_at_s(&self, s: f64) -> Result<ScalarField, SolveError> {
        let m = self.m_field(s)?;
        self.poisson(&self.h.zip_map(&m, |h, m| h / m))
    }

    /// `Φ(s) = |∇u_s|₂²`
    pub fn phi(&self, s: f64) -> Result<f64, SolveError> {
        Ok(grad_norm_sq(&self.solve_at_s(s)?))
    }

    /// `S_max = ∫h² / (a₀²·λ₁)`. Every fixed point of `Φ`, and every value
    /// of `Φ` itself, lies in `[0, S_max]`.
    pub fn s_upper_bound(&self) -> f64 {
        let h2 = integrate(&self.h.map(|v| v * v));
        h2 / (self.a0 * self.a0 * self.h.grid().lambda1())
    }

    /// `M(·, |∇u|₂²)·Δu + h`, zero exactly at solutions.
    pub fn residual_field(&self, u: &ScalarField) -> ScalarField {
        let s = grad_norm_sq(u);
        let m = self.a.add_scaled(s, &self.b);
        let lap = laplacian(u);
        let mut r = m.zip_map(&lap, |m, l| m * l);
        r = r.add_scaled(1.0, &self.h);
        r
    }

    pub fn residual(&self, u: &ScalarField) -> f64 {
        self.residual_field(u).max_abs()
    }

    /// `∫ b·u·Δu / M(·, |∇u|₂²)`. The Jacobian at `u` is invertible unless
    /// this equals ½.
    pub fn jacobian_functional(&self, u: &ScalarField) -> f64 {
        let s = grad_norm_sq(u);
        let lap = laplacian(u);
        let mut acc = 0.0;
        for k in 0..u.values().len() {
            let (a, b) = (self.a.values()[k], self.b.values()[k]);
            acc += b * u.values()[k] * lap.values()[k] / (a + s * b);
        }
        acc * u.grid().cell_area()
    }

    /// Solves `Ψ′(u)v = −g`, where `Ψ′(u)v = 2b·Δu·∫∇u·∇v + M·Δv`.
    ///
    /// With `w = Δv` the rank-one term only depends on `t = ∫u·w`, and
    /// `w = t·2bΔu/M − g/M`. Pairing with `u` gives the scalar equation
    /// `t·(∫2b·u·Δu/M − 1) = ∫g·u/M`, after which `v` follows from one
    /// Poisson solve. The result is checked against the Jacobian directly.
    pub fn linearized_solve(&self, u: &ScalarField, g: &ScalarField) -> Result<ScalarField, SolveError> {
        if !u.grid().matches(g.grid()) || !u.grid().matches(self.a.grid()) {
            return Err(SolveError::GridMismatch);
        }
        let s = grad_norm_sq(u);
        let m = self.m_field(s)?;
        let lap_u = laplacian(u);
        let denom = 2.0 * self.jacobian_functional(u) - 1.0;
        if denom.abs() < SINGULAR_TOL {
            return Err(SolveError::SingularJacobian(denom));
        }
        let gu_over_m = integrate(&g.zip_map(u, |g, u| g * u).zip_map(&m, |p, m| p / m));
        let t = gu_over_m / denom;

        let n = u.values().len();
        let mut w = Vec::with_capacity(n);
        for k in 0..n {
            let (b, mk) = (self.b.values()[k], m.values()[k]);
            w.push(t * 2.0 * b * lap_u.values()[k] / mk - g.values()[k] / mk);
        }
        let w = ScalarField::from_values(*u.grid(), w)?;
        // Δv = w  ⇔  −Δv = −w
        let v = self.poisson(&w.scaled(-1.0))?;

        let defect = self.jacobian_apply(u, &v, &lap_u, &m).add_scaled(1.0, g).max_abs();
        if !(defect <= LINEARIZATION_TOL * (1.0 + g.max_abs())) {
            return Err(SolveError::LinearizationCheck(defect));
        }
        Ok(v)
    }

    fn jacobian_apply(&self, u: &ScalarField, v: &ScalarField, lap_u: &ScalarField, m: &ScalarField) -> ScalarField {
        let coupling = 2.0 * grad_inner(u, v);
        let lap_v = laplacian(v);
        let n = u.values().len();
        let vals = (0..n)
            .map(|k| coupling * self.b.values()[k] * lap_u.values()[k] + m.values()[k] * lap_v.values()[k])
            .collect();
        ScalarField::from_values(*u.grid(), vals).expect("finite Jacobian action")
    }

    /// `Ψ′(u)v` for the current `u`.
    pub fn jacobian_action(&self, u: &ScalarField, v: &ScalarField) -> ScalarField {
        let m = self.a.add_scaled(grad_norm_sq(u), &self.b);
        self.jacobian_apply(u, v, &laplacian(u), &m)
    }

    /// Newton iteration `u ← u + v`, `Ψ′(u)v = −(M·Δu + h)`, with full steps.
    /// Starts from `u_0` (the frozen solve at `s = 0`) when `u0` is `None`.
    pub fn newton_solve(&self, u0: Option<&ScalarField>, tol: f64) -> Result<NonlocalSolution, SolveError> {
        let mut u = match u0 {
            Some(u) => u.clone(),
            None => self.solve_at_s(0.0)?,
        };
        let mut iterations = 0;
        loop {
            let r = self.residual_field(&u);
            let residual = r.max_abs();
            if residual <= tol {
                let s = grad_norm_sq(&u);
                return Ok(NonlocalSolution { u, s, residual, method: Method::Newton { iterations } });
            }
            if iterations == NEWTON_MAX_ITER || !residual.is_finite() {
                return Err(SolveError::NoConvergence { iterations, residual, last: Box::new(u) });
            }
            let v = self.linearized_solve(&u, &r)?;
            u = u.add_scaled(1.0, &v);
            iterations += 1;
        }
    }

    fn package(&self, s: f64) -> Result<NonlocalSolution, SolveError> {
        let u = self.solve_at_s(s)?;
        let residual = self.residual(&u);
        Ok(NonlocalSolution { u, s, residual, method: Method::FixedPointScan })
    }

    /// Enumerates all solutions by locating the roots of `Φ(s) − s` on
    /// `[0, 1.05·S_max]`.
    pub fn fixed_point_scan(&self, opts: &ScanOptions) -> Result<ScanReport, SolveError> {
        if opts.n_samples < MIN_SAMPLES {
            return Err(SolveError::TooFewSamples(opts.n_samples));
        }
        let s_max = match opts.s_max_override {
            Some(v) if !(v.is_finite() && v > 0.0) => return Err(SolveError::BadBracket(v)),
            Some(v) => v,
            None => self.s_upper_bound(),
        };
        let top = 1.05 * s_max.max(MIN_BRACKET);
        let n = opts.n_samples;
        let mut samples = Vec::with_capacity(n);
        for k in 0..n {
            let s = top * k as f64 / (n - 1) as f64;
            samples.push((s, self.phi(s)?));
        }
        let gap = |&(s, p): &(f64, f64)| p - s;
        let class = |sample: &(f64, f64)| {
            let f = gap(sample);
            if f.abs() <= ROOT_TOL * (1.0 + sample.0) {
                0
            } else if f > 0.0 {
                1
            } else {
                -1
            }
        };
        let signs: Vec<i32> = samples.iter().map(class).collect();

        let mut root_s = Vec::new();
        let mut tangencies = Vec::new();
        let mut k = 0;
        while k < n {
            if signs[k] == 0 {
                // a run of samples within tolerance counts as one root
                let start = k;
                while k + 1 < n && signs[k + 1] == 0 {
                    k += 1;
                }
                let best = (start..=k)
                    .min_by(|&p, &q| gap(&samples[p]).abs().total_cmp(&gap(&samples[q]).abs()))
                    .expect("non-empty run");
                root_s.push(samples[best].0);
            } else if k + 1 < n && signs[k + 1] == -signs[k] {
                root_s.push(self.bisect(samples[k], samples[k + 1])?);
            } else if k > 0 && k + 1 < n && signs[k - 1] == signs[k] && signs[k + 1] == signs[k] {
                let here = gap(&samples[k]).abs();
                if here <= gap(&samples[k - 1]).abs() && here <= gap(&samples[k + 1]).abs() {
                    self.probe_dip(samples[k - 1], samples[k + 1], signs[k], &mut root_s, &mut tangencies)?;
                }
            }
            k += 1;
        }

        root_s.sort_by(f64::total_cmp);
        let roots = root_s.into_iter().map(|s| self.package(s)).collect::<Result<Vec<_>, _>>()?;
        Ok(ScanReport { s_max, samples, roots, suspected_tangencies: tangencies })
    }

    fn bisect(&self, lo: (f64, f64), hi: (f64, f64)) -> Result<f64, SolveError> {
        let (mut a, mut fa) = (lo.0, lo.1 - lo.0);
        let mut b = hi.0;
        let mut best = (f64::INFINITY, a);
        for _ in 0..MAX_BISECTIONS {
            let mid = 0.5 * (a + b);
            let f = self.phi(mid)? - mid;
            if f.abs() < best.0 {
                best = (f.abs(), mid);
            }
            if f.abs() <= ROOT_TOL * (1.0 + mid) {
                return Ok(mid);
            }
            if (f > 0.0) == (fa > 0.0) {
                a = mid;
                fa = f;
            } else {
                b = mid;
            }
        }
        Err(SolveError::BisectionStalled { s: best.1, gap: best.0 })
    }

    /// Refines a sampled local minimum of `|Φ(s) − s|` whose neighbours share
    /// its sign. A dip through zero yields a root pair; a near miss is a
    /// suspected tangency.
    fn probe_dip(
        &self,
        left: (f64, f64),
        right: (f64, f64),
        sign: i32,
        roots: &mut Vec<f64>,
        tangencies: &mut Vec<f64>,
    ) -> Result<(), SolveError> {
        let signed = |s: f64| -> Result<f64, SolveError> { Ok(sign as f64 * (self.phi(s)? - s)) };
        let ratio = 0.5 * (5f64.sqrt() - 1.0);
        let (mut a, mut b) = (left.0, right.0);
        let mut p = b - ratio * (b - a);
        let mut q = a + ratio * (b - a);
        let (mut fp, mut fq) = (signed(p)?, signed(q)?);
        for _ in 0..80 {
            for (s, f) in [(p, fp), (q, fq)] {
                if f.abs() <= ROOT_TOL * (1.0 + s) {
                    roots.push(s);
                    return Ok(());
                }
                if f < 0.0 {
                    // crossed zero: one root on each side of s
                    let at = (s, self.phi(s)?);
                    roots.push(self.bisect(left, at)?);
                    roots.push(self.bisect(at, right)?);
                    return Ok(());
                }
            }
            if fp < fq {
                b = q;
                q = p;
                fq = fp;
                p = b - ratio * (b - a);
                fp = signed(p)?;
            } else {
                a = p;
                p = q;
                fp = fq;
                q = a + ratio * (b - a);
                fq = signed(q)?;
            }
            if b - a <= 1e-14 * (1.0 + b) {
                break;
            }
        }
        let (s, f) = if fp < fq { (p, fp) } else { (q, fq) };
        if f <= TANGENCY_TOL * (1.0 + s) {
            tangencies.push(s);
        }
        Ok(())
    }

    /// Both sides of the energy identity
    ///
    /// ```text
    /// ∫u·Δu/(c+s) = −∫|∇u|²/(c+s) + ½·∫u²·m_s,    c = a/b, s = |∇u|₂²,
    /// ```
    ///
    /// evaluated with node quadrature; they agree up to discretization error.
    pub fn energy_identity(&self, u: &ScalarField) -> Result<(f64, f64), SolveError> {
        let c = self.ratio();
        let s = grad_norm_sq(u);
        let lap = laplacian(u);
        let lhs = integrate(&u.zip_map(&lap, |u, l| u * l).zip_map(&c, |p, c| p / (c + s)));
        let grad_sq = gradient(u).node_mean_square();
        let m = weight_m(&c, s)?;
        let energy = integrate(&grad_sq.zip_map(&c, |g, c| g / (c + s)));
        let weighted = integrate(&u.zip_map(&m, |u, m| u * u * m));
        Ok((lhs, -energy + 0.5 * weighted))
    }
}
