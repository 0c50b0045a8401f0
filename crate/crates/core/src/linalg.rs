//! Sparse symmetric operators on the grid, a Jacobi-preconditioned conjugate
//! gradient solver, and a dense eigensolver for `A x = λ diag(B) x` with
//! `A` symmetric positive definite and `B` of either sign.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::grid::{FaceField, ScalarField};

/// Default relative residual target of [`cg_solve`].
pub const CG_TOL: f64 = 1e-12;

/// Pencils above this size are rejected by the dense eigensolver.
pub const MAX_DENSE_DIM: usize = 10_000;
const PERRON_MAX_ITER: usize = 500;
const PERRON_TOL: f64 = 1e-11;

/// `|μ| ≤ INFINITE_CUTOFF·max|μ|` in the reduced problem is an infinite `λ`.
const INFINITE_CUTOFF: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("weight must be positive at every node (min {min})")]
    NonPositiveWeight { min: f64 },
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("conjugate gradient did not converge in {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("dense eigensolve limited to dimension {MAX_DENSE_DIM} (got {0})")]
    TooLarge(usize),
}

/// Compressed-row sparse matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        for (r, out) in y.iter_mut().enumerate() {
            *out = self.row(r).map(|(c, v)| v * x[c]).sum();
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|r| self.get(r, r)).collect()
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self { values: self.values.iter().map(|v| k * v).collect(), ..self.clone() }
    }

    /// Bitwise transpose check.
    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|r| self.row(r).all(|(c, v)| self.get(c, r) == v))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                m[(r, c)] = v;
            }
        }
        m
    }
}

/// Face weights used by [`assemble_weighted_laplacian`]: the arithmetic mean
/// of the two adjacent node values, or the single interior node value on
/// boundary faces.
pub fn face_weights(w: &ScalarField) -> FaceField {
    let g = *w.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let mut xf = Vec::with_capacity(g.n_xfaces());
    for j in 0..ny {
        for f in 0..=nx {
            xf.push(match (f > 0, f < nx) {
                (true, true) => 0.5 * (w.at(f - 1, j) + w.at(f, j)),
                (false, _) => w.at(f, j),
                (_, false) => w.at(f - 1, j),
            });
        }
    }
    let mut yf = Vec::with_capacity(g.n_yfaces());
    for f in 0..=ny {
        for i in 0..nx {
            yf.push(match (f > 0, f < ny) {
                (true, true) => 0.5 * (w.at(i, f - 1) + w.at(i, f)),
                (false, _) => w.at(i, f),
                (_, false) => w.at(i, f - 1),
            });
        }
    }
    FaceField::from_values(g, xf, yf).expect("weights are finite")
}

/// Matrix of `u ↦ −divergence(w_face · gradient(u))` (5-point stencil).
pub fn assemble_weighted_laplacian(w: &ScalarField) -> Result<SparseMatrix, LinalgError> {
    let min = w.min();
    if !(min > 0.0) {
        return Err(LinalgError::NonPositiveWeight { min });
    }
    let g = *w.grid();
    let (nx, ny) = (g.nx(), g.ny());
    let (ihx2, ihy2) = (1.0 / (g.hx() * g.hx()), 1.0 / (g.hy() * g.hy()));
    let faces = face_weights(w);
    let (xf, yf) = (faces.xfaces(), faces.yfaces());

    let n = g.len();
    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::with_capacity(5 * n);
    let mut values = Vec::with_capacity(5 * n);
    row_ptr.push(0);
    for j in 0..ny {
        for i in 0..nx {
            let k = g.index(i, j);
            let wl = xf[j * (nx + 1) + i] * ihx2;
            let wr = xf[j * (nx + 1) + i + 1] * ihx2;
            let wb = yf[j * nx + i] * ihy2;
            let wt = yf[(j + 1) * nx + i] * ihy2;
            if j > 0 {
                col_idx.push(k - nx);
                values.push(-wb);
            }
            if i > 0 {
                col_idx.push(k - 1);
                values.push(-wl);
            }
            col_idx.push(k);
            values.push(wl + wr + wb + wt);
            if i + 1 < nx {
                col_idx.push(k + 1);
                values.push(-wr);
            }
            if j + 1 < ny {
                col_idx.push(k + nx);
                values.push(-wt);
            }
            row_ptr.push(col_idx.len());
        }
    }
    Ok(SparseMatrix { n, row_ptr, col_idx, values })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Jacobi-preconditioned conjugate gradient for symmetric positive definite `a`.
///
/// Stops once the true relative residual `‖a·x − rhs‖₂/‖rhs‖₂` is at most
/// `tol`; gives up after `10·n` iterations.
pub fn cg_solve(a: &SparseMatrix, rhs: &[f64], tol: f64) -> Result<Vec<f64>, LinalgError> {
    let n = a.dim();
    if rhs.len() != n {
        return Err(LinalgError::DimensionMismatch(n, rhs.len()));
    }
    let mut x = vec![0.0; n];
    let bnorm = norm(rhs);
    if bnorm == 0.0 {
        return Ok(x);
    }
    let inv_diag: Vec<f64> = a
        .diagonal()
        .into_iter()
        .map(|d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let max_iter = 10 * n;
    let mut iterations = 0;
    let mut r = rhs.to_vec();
    let mut ap = vec![0.0; n];
    loop {
        // (re)start from the true residual
        let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        while iterations < max_iter && norm(&r) > tol * bnorm {
            a.mul_vec_into(&p, &mut ap);
            let pap = dot(&p, &ap);
            if !(pap > 0.0) {
                return Err(LinalgError::NoConvergence { iterations, residual: norm(&r) / bnorm });
            }
            let alpha = rz / pap;
            for k in 0..n {
                x[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
            for k in 0..n {
                z[k] = r[k] * inv_diag[k];
            }
            let rz_next = dot(&r, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            for k in 0..n {
                p[k] = z[k] + beta * p[k];
            }
            iterations += 1;
        }
        a.mul_vec_into(&x, &mut ap);
        for k in 0..n {
            r[k] = rhs[k] - ap[k];
        }
        let residual = norm(&r) / bnorm;
        if residual <= tol {
            return Ok(x);
        }
        if iterations >= max_iter {
            return Err(LinalgError::NoConvergence { iterations, residual });
        }
    }
}

/// The pair `(A, diag(B))` of a generalized eigenproblem `A x = λ diag(B) x`.
#[derive(Clone, Debug)]
pub struct Pencil {
    a: SparseMatrix,
    b: Vec<f64>,
}

impl Pencil {
    pub fn new(a: SparseMatrix, b: Vec<f64>) -> Result<Self, LinalgError> {
        if a.dim() != b.len() {
            return Err(LinalgError::DimensionMismatch(a.dim(), b.len()));
        }
        Ok(Self { a, b })
    }

    pub fn a(&self) -> &SparseMatrix {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    /// `‖A v − λ B v‖₂ / ‖A v‖₂`
    pub fn relative_residual(&self, lambda: f64, v: &[f64]) -> f64 {
        let av = self.a.mul_vec(v);
        let res: Vec<f64> = av.iter().zip(&self.b).zip(v).map(|((av, b), v)| av - lambda * b * v).collect();
        norm(&res) / norm(&av)
    }
}

#[derive(Clone, Debug)]
pub struct PencilEigenpair {
    pub value: f64,
    pub vector: Vec<f64>,
}

/// Symmetric reduction `C = L⁻¹ diag(B) L⁻ᵀ` with `A = L Lᵀ`, and its
/// eigendecomposition. Eigenvalues `μ` of `C` are `1/λ`.
struct Reduced {
    /// `L⁻¹`
    l_inv: DMatrix<f64>,
    mu: DVector<f64>,
    y: DMatrix<f64>,
    cutoff: f64,
}

impl Reduced {
    fn new(pencil: &Pencil) -> Result<Self, LinalgError> {
        let n = pencil.a.dim();
        if n > MAX_DENSE_DIM {
            return Err(LinalgError::TooLarge(n));
        }
        let chol = pencil.a.to_dense().cholesky().ok_or(LinalgError::NotPositiveDefinite)?;
        let l_inv = chol
            .l()
            .solve_lower_triangular(&DMatrix::identity(n, n))
            .ok_or(LinalgError::NotPositiveDefinite)?;
        let mut scaled = l_inv.clone();
        for (mut col, &b) in scaled.column_iter_mut().zip(&pencil.b) {
            col *= b;
        }
        let c = &scaled * l_inv.transpose();
        let c = (&c + c.transpose()) * 0.5;
        let eig = c.symmetric_eigen();
        let scale = eig.eigenvalues.amax();
        Ok(Self { l_inv, mu: eig.eigenvalues, y: eig.eigenvectors, cutoff: INFINITE_CUTOFF * scale })
    }

    fn finite(&self, k: usize) -> bool {
        self.mu[k].abs() > self.cutoff
    }

    /// Eigenvector `x = L⁻ᵀ y` scaled to `|xᵀ B x| = 1`.
    fn vector(&self, k: usize) -> Vec<f64> {
        let x = self.l_inv.tr_mul(&self.y.column(k));
        let s = 1.0 / self.mu[k].abs().sqrt();
        x.iter().map(|v| v * s).collect()
    }
}

/// Full finite spectrum of the pencil, sorted by eigenvalue.
///
/// Eigenvectors are normalized to `|xᵀ diag(B) x| = 1`. Directions in the
/// null space of `B` (infinite eigenvalues) are omitted.
pub fn pencil_eigensolve(pencil: &Pencil) -> Result<Vec<PencilEigenpair>, LinalgError> {
    let red = Reduced::new(pencil)?;
    let mut pairs: Vec<PencilEigenpair> = (0..red.mu.len())
        .filter(|&k| red.finite(k))
        .map(|k| PencilEigenpair { value: 1.0 / red.mu[k], vector: red.vector(k) })
        .collect();
    pairs.sort_by(|p, q| p.value.total_cmp(&q.value));
    Ok(pairs)
}

/// Inverse iteration for a definite pencil whose `A` is a Z-matrix.
///
/// `A⁻¹` is then entrywise non-negative, so a strictly positive eigenvector of
/// `A⁻¹ diag(B)` belongs to its spectral radius, i.e. to the least
/// eigenvalue of the pencil. Returns `None` unless that certificate and the
/// residual bound both hold.
fn perron_pair(pencil: &Pencil) -> Result<Option<PencilEigenpair>, LinalgError> {
    let n = pencil.a.dim();
    let z_matrix = (0..n).all(|r| pencil.a.row(r).all(|(c, v)| c == r || v <= 0.0));
    if !z_matrix || pencil.b.iter().any(|&b| !(b > 0.0)) {
        return Ok(None);
    }
    let b_norm = |x: &[f64]| x.iter().zip(&pencil.b).map(|(x, b)| b * x * x).sum::<f64>().sqrt();
    let mut x = vec![1.0; n];
    for _ in 0..PERRON_MAX_ITER {
        let bx: Vec<f64> = x.iter().zip(&pencil.b).map(|(x, b)| x * b).collect();
        let mut next = cg_solve(&pencil.a, &bx, CG_TOL)?;
        let scale = 1.0 / b_norm(&next);
        next.iter_mut().for_each(|v| *v *= scale);
        x = next;
        let lambda = dot(&x, &pencil.a.mul_vec(&x));
        if pencil.relative_residual(lambda, &x) <= PERRON_TOL {
            if x.iter().all(|&v| v > 0.0) {
                return Ok(Some(PencilEigenpair { value: lambda, vector: x }));
            }
            return Ok(None);
        }
    }
    Ok(None)
}

/// Least positive eigenvalue and its eigenvector, oriented so the entry of
/// largest magnitude is positive. `None` when `B ≤ 0` everywhere.
///
/// Definite pencils with a Z-matrix `A` (weighted Laplacians) are first tried
/// by certified inverse iteration; everything else uses the dense reduction.
pub fn smallest_positive(pencil: &Pencil) -> Result<Option<PencilEigenpair>, LinalgError> {
    if pencil.b.iter().all(|&b| b <= 0.0) {
        return Ok(None);
    }
    if let Some(pair) = perron_pair(pencil)? {
        return Ok(Some(pair));
    }
    let red = Reduced::new(pencil)?;
    let best = (0..red.mu.len())
        .filter(|&k| red.finite(k) && red.mu[k] > 0.0)
        .max_by(|&p, &q| red.mu[p].total_cmp(&red.mu[q]));
    Ok(best.map(|k| {
        let mut vector = red.vector(k);
        let (lo, hi) = vector.iter().fold((0.0f64, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if -lo > hi {
            vector.iter_mut().for_each(|v| *v = -*v);
        }
        PencilEigenpair { value: 1.0 / red.mu[k], vector }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{divergence, gradient, Grid};
    use std::f64::consts::PI;

    fn identity(n: usize) -> SparseMatrix {
        SparseMatrix { n, row_ptr: (0..=n).collect(), col_idx: (0..n).collect(), values: vec![1.0; n] }
    }

    #[test]
    fn plain_laplacian_stencil() {
        let grid = Grid::unit_square(5);
        let a = assemble_weighted_laplacian(&ScalarField::constant(grid, 1.0)).unwrap();
        assert!(a.is_symmetric());
        assert_eq!(a.nnz(), 5 * 25 - 4 * 5);
        // rows away from the boundary sum to zero
        let k = grid.index(2, 2);
        let sum: f64 = a.row(k).map(|(_, v)| v).sum();
        assert!(sum.abs() < 1e-9);
        assert_eq!(a.get(k, k), 4.0 / (grid.hx() * grid.hx()));
    }

    #[test]
    fn matrix_matches_weighted_divergence() {
        let grid = Grid::from_extent(6, 4, 0.0, 0.0, 1.5, 1.0).unwrap();
        let w = ScalarField::from_fn(grid, |x, y| 1.0 + x * x + 0.5 * y);
        let u = ScalarField::from_fn(grid, |x, y| (3.0 * x).sin() + x * y);
        let a = assemble_weighted_laplacian(&w).unwrap();
        assert!(a.is_symmetric());
        let flux = face_weights(&w).zip_map(&gradient(&u), |w, g| w * g);
        let expect = divergence(&flux);
        let got = a.mul_vec(u.values());
        for (g, e) in got.iter().zip(expect.values()) {
            assert!((g + e).abs() <= 1e-11 * (1.0 + e.abs()));
        }
    }

    #[test]
    fn rejects_non_positive_weight() {
        let grid = Grid::unit_square(3);
        let w = ScalarField::from_fn(grid, |x, _| x - 0.5);
        assert!(matches!(assemble_weighted_laplacian(&w), Err(LinalgError::NonPositiveWeight { .. })));
    }

    #[test]
    fn cg_zero_rhs_and_consistency() {
        let grid = Grid::unit_square(12);
        let a = assemble_weighted_laplacian(&ScalarField::constant(grid, 1.0)).unwrap();
        assert_eq!(cg_solve(&a, &vec![0.0; a.dim()], CG_TOL).unwrap(), vec![0.0; a.dim()]);

        let v: Vec<f64> = (0..a.dim()).map(|k| ((k * 7919) % 13) as f64 - 6.0).collect();
        let rhs = a.mul_vec(&v);
        let x = cg_solve(&a, &rhs, CG_TOL).unwrap();
        let r: Vec<f64> = a.mul_vec(&x).iter().zip(&rhs).map(|(p, q)| p - q).collect();
        assert!(norm(&r) <= CG_TOL * norm(&rhs));
        for (p, q) in x.iter().zip(&v) {
            assert!((p - q).abs() < 1e-8);
        }
        assert!(matches!(cg_solve(&a, &[1.0], CG_TOL), Err(LinalgError::DimensionMismatch(..))));
    }

    #[test]
    fn cg_poisson_against_analytic_solution() {
        let grid = Grid::unit_square(64);
        let a = assemble_weighted_laplacian(&ScalarField::constant(grid, 1.0)).unwrap();
        let rhs = ScalarField::from_fn(grid, |x, y| 2.0 * PI * PI * (PI * x).sin() * (PI * y).sin());
        let exact = ScalarField::from_fn(grid, |x, y| (PI * x).sin() * (PI * y).sin());
        let x = cg_solve(&a, rhs.values(), CG_TOL).unwrap();
        let err = x.iter().zip(exact.values()).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
        assert!(err <= 2e-3, "max error {err}");
    }

    #[test]
    fn cg_reports_indefinite_input() {
        let a = identity(4).scaled(-1.0);
        assert!(matches!(cg_solve(&a, &[1.0, 0.0, 0.0, 0.0], CG_TOL), Err(LinalgError::NoConvergence { .. })));
    }

    #[test]
    fn smallest_laplacian_eigenvalue_is_analytic() {
        let grid = Grid::unit_square(3);
        let a = assemble_weighted_laplacian(&ScalarField::constant(grid, 1.0)).unwrap();
        let pencil = Pencil::new(a, vec![1.0; 9]).unwrap();
        let pair = smallest_positive(&pencil).unwrap().unwrap();
        let exact = 128.0 * (PI / 8.0).sin().powi(2);
        assert!((exact - 18.7452).abs() < 1e-4);
        assert!((pair.value - exact).abs() <= 1e-10 * exact);
        assert!(pair.vector.iter().all(|&v| v > 0.0));
        assert!(pencil.relative_residual(pair.value, &pair.vector) <= 1e-8);

        let all = pencil_eigensolve(&pencil).unwrap();
        assert_eq!(all.len(), 9);
        assert!((all[0].value - exact).abs() <= 1e-10 * exact);
        for p in &all {
            assert!(pencil.relative_residual(p.value, &p.vector) <= 1e-8);
        }
    }

    #[test]
    fn negative_weight_has_no_positive_eigenvalue() {
        let grid = Grid::unit_square(3);
        let a = assemble_weighted_laplacian(&ScalarField::constant(grid, 1.0)).unwrap();
        let pencil = Pencil::new(a, vec![-1.0; 9]).unwrap();
        assert!(smallest_positive(&pencil).unwrap().is_none());
        let all = pencil_eigensolve(&pencil).unwrap();
        assert_eq!(all.len(), 9);
        assert!(all.iter().all(|p| p.value < 0.0));
    }

    #[test]
    fn identity_pencil() {
        let pencil = Pencil::new(identity(5), vec![2.0; 5]).unwrap();
        let all = pencil_eigensolve(&pencil).unwrap();
        assert_eq!(all.len(), 5);
        for p in all {
            assert!((p.value - 0.5).abs() < 1e-14);
            let bnorm: f64 = p.vector.iter().map(|v| 2.0 * v * v).sum();
            assert!((bnorm - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pencil_errors() {
        assert!(matches!(Pencil::new(identity(3), vec![1.0; 2]), Err(LinalgError::DimensionMismatch(3, 2))));
        let pencil = Pencil::new(identity(3).scaled(-1.0), vec![1.0; 3]).unwrap();
        assert!(matches!(pencil_eigensolve(&pencil), Err(LinalgError::NotPositiveDefinite)));
    }

    #[test]
    fn zero_weight_directions_are_dropped() {
        let pencil = Pencil::new(identity(4), vec![1.0, 0.0, -2.0, 0.0]).unwrap();
        let all = pencil_eigensolve(&pencil).unwrap();
        let values: Vec<f64> = all.iter().map(|p| p.value).collect();
        assert_eq!(values.len(), 2);
        assert!((values[0] + 0.5).abs() < 1e-14 && (values[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn definite_fast_path_matches_dense_reduction() {
        let grid = Grid::unit_square(9);
        let w = ScalarField::from_fn(grid, |x, y| 1.0 + x * x + 0.5 * y);
        let a = assemble_weighted_laplacian(&w).unwrap();
        let b: Vec<f64> = (0..grid.len()).map(|k| 0.5 + (k % 7) as f64 / 7.0).collect();
        let pencil = Pencil::new(a, b).unwrap();
        let fast = perron_pair(&pencil).unwrap().expect("certified");
        let dense = pencil_eigensolve(&pencil).unwrap();
        assert!((fast.value - dense[0].value).abs() <= 1e-10 * dense[0].value);
        assert!(pencil.relative_residual(fast.value, &fast.vector) <= 1e-10);
        let bnorm: f64 = fast.vector.iter().zip(pencil.b()).map(|(v, b)| b * v * v).sum();
        assert!((bnorm - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn fast_path_declines_non_z_matrices() {
        let dense_only = SparseMatrix {
            n: 2,
            row_ptr: vec![0, 2, 4],
            col_idx: vec![0, 1, 0, 1],
            values: vec![2.0, 1.0, 1.0, 2.0],
        };
        let pencil = Pencil::new(dense_only, vec![1.0, 1.0]).unwrap();
        assert!(perron_pair(&pencil).unwrap().is_none());
        let pair = smallest_positive(&pencil).unwrap().unwrap();
        assert!((pair.value - 1.0).abs() < 1e-12);
    }
}
