//! Uniform rectangular grids with homogeneous Dirichlet boundary.
//!
//! Unknowns live on the `nx × ny` interior nodes; boundary nodes are implicit
//! and carry the value zero. Gradients live on cell faces (a staggered
//! layout), which makes the discrete divergence the exact negative adjoint of
//! the discrete gradient:
//!
//! ```text
//! hx·hy · Σ_nodes div(F)·u  =  −hx·hy · Σ_faces F·grad(u)
//! ```
//!
//! Node ordering is row-major with `x` fastest: node `(i, j)` has index
//! `j·nx + i` and sits at `(x0 + (i+1)·hx, y0 + (j+1)·hy)`.

use std::f64::consts::PI;
use std::fmt;
use std::io::{BufRead, Write};

use thiserror::Error;

use crate::format::fmt_f64;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid needs at least one interior node per axis (got {nx}×{ny})")]
    TooFewNodes { nx: usize, ny: usize },
    #[error("mesh widths must be positive and finite (got hx={hx}, hy={hy})")]
    BadSpacing { hx: f64, hy: f64 },
    #[error("origin must be finite (got x0={x0}, y0={y0})")]
    BadOrigin { x0: f64, y0: f64 },
    #[error("expected {expected} values, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("non-finite value {value} at index {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("malformed field file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Uniform tensor grid over `[x0, x0+Lx] × [y0, y0+Ly]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    nx: usize,
    ny: usize,
    x0: f64,
    y0: f64,
    hx: f64,
    hy: f64,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, x0: f64, y0: f64, hx: f64, hy: f64) -> Result<Self, GridError> {
        if nx == 0 || ny == 0 {
            return Err(GridError::TooFewNodes { nx, ny });
        }
        if !(hx.is_finite() && hy.is_finite() && hx > 0.0 && hy > 0.0) {
            return Err(GridError::BadSpacing { hx, hy });
        }
        if !(x0.is_finite() && y0.is_finite()) {
            return Err(GridError::BadOrigin { x0, y0 });
        }
        Ok(Self { nx, ny, x0, y0, hx, hy })
    }

    /// Grid with `nx × ny` interior nodes covering a rectangle of size `lx × ly`.
    pub fn from_extent(nx: usize, ny: usize, x0: f64, y0: f64, lx: f64, ly: f64) -> Result<Self, GridError> {
        Self::new(nx, ny, x0, y0, lx / (nx + 1) as f64, ly / (ny + 1) as f64)
    }

    /// `n × n` interior nodes on the unit square, `h = 1/(n+1)`.
    pub fn unit_square(n: usize) -> Self {
        Self::from_extent(n, n, 0.0, 0.0, 1.0, 1.0).expect("n must be positive")
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn y0(&self) -> f64 {
        self.y0
    }

    pub fn hx(&self) -> f64 {
        self.hx
    }

    pub fn hy(&self) -> f64 {
        self.hy
    }

    pub fn lx(&self) -> f64 {
        (self.nx + 1) as f64 * self.hx
    }

    pub fn ly(&self) -> f64 {
        (self.ny + 1) as f64 * self.hy
    }

    /// Number of interior nodes.
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    /// x coordinate of interior column `i` (0-based).
    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        self.x0 + (i + 1) as f64 * self.hx
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        self.y0 + (j + 1) as f64 * self.hy
    }

    pub fn n_xfaces(&self) -> usize {
        (self.nx + 1) * self.ny
    }

    pub fn n_yfaces(&self) -> usize {
        self.nx * (self.ny + 1)
    }

    /// Smallest eigenvalue of the 5-point Dirichlet Laplacian on this grid.
    ///
    /// Exact for the discrete operator: the eigenvector is the sampled
    /// `sin(π(x−x0)/Lx)·sin(π(y−y0)/Ly)`.
    pub fn lambda1(&self) -> f64 {
        let sx = (PI * self.hx / (2.0 * self.lx())).sin();
        let sy = (PI * self.hy / (2.0 * self.ly())).sin();
        4.0 / (self.hx * self.hx) * sx * sx + 4.0 / (self.hy * self.hy) * sy * sy
    }

    /// Whether node `(i, j)` touches the boundary.
    pub fn in_collar(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i + 1 == self.nx || j + 1 == self.ny
    }

    /// Same node layout, tolerant to last-bit differences in the geometry.
    pub fn matches(&self, other: &Grid) -> bool {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * (1.0 + a.abs().max(b.abs()));
        self.nx == other.nx
            && self.ny == other.ny
            && close(self.x0, other.x0)
            && close(self.y0, other.y0)
            && close(self.hx, other.hx)
            && close(self.hy, other.hy)
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}x{} nodes, origin ({}, {}), h = ({}, {})",
            self.nx, self.ny, self.x0, self.y0, self.hx, self.hy
        )
    }
}

/// Node-valued discrete function.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: Grid) -> Self {
        Self { grid, values: vec![0.0; grid.len()] }
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Self { grid, values: vec![value; grid.len()] }
    }

    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::LengthMismatch { expected: grid.len(), found: values.len() });
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(GridError::NonFinite { index, value });
        }
        Ok(Self { grid, values })
    }

    /// Samples `f(x, y)` at every interior node.
    pub fn from_fn(grid: Grid, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            let y = grid.y(j);
            for i in 0..grid.nx {
                values.push(f(grid.x(i), y));
            }
        }
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    /// Nodewise combination of two fields on the same grid.
    ///
    /// # Panics
    /// If the fields live on different grids.
    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Self {
        assert!(self.grid.matches(&other.grid), "fields live on different grids");
        Self {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn scaled(&self, k: f64) -> Self {
        self.map(|v| k * v)
    }

    /// `self + k·other`
    pub fn add_scaled(&self, k: f64, other: &ScalarField) -> Self {
        self.zip_map(other, |a, b| a + k * b)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Writes the field in the plain-text field format:
    /// a `# field nx ny x0 y0 hx hy` header, then one line of values per grid row.
    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let g = &self.grid;
        writeln!(
            out,
            "# field {} {} {} {} {} {}",
            g.nx,
            g.ny,
            fmt_f64(g.x0),
            fmt_f64(g.y0),
            fmt_f64(g.hx),
            fmt_f64(g.hy)
        )?;
        for row in self.values.chunks(g.nx) {
            let line: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
            writeln!(out, "{}", line.join(" "))?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(input: R) -> Result<Self, GridError> {
        let mut lines = input.lines();
        let header = loop {
            match lines.next() {
                Some(line) => {
                    let line = line?;
                    if !line.trim().is_empty() {
                        break line;
                    }
                }
                None => return Err(GridError::Format("empty input".into())),
            }
        };
        let tokens: Vec<&str> = header.split_whitespace().collect();
        if tokens.len() != 8 || tokens[0] != "#" || tokens[1] != "field" {
            return Err(GridError::Format(format!("bad header line `{header}`")));
        }
        let count = |s: &str| s.parse::<usize>().map_err(|_| GridError::Format(format!("bad node count `{s}`")));
        let real = |s: &str| s.parse::<f64>().map_err(|_| GridError::Format(format!("bad number `{s}`")));
        let grid = Grid::new(
            count(tokens[2])?,
            count(tokens[3])?,
            real(tokens[4])?,
            real(tokens[5])?,
            real(tokens[6])?,
            real(tokens[7])?,
        )?;
        let mut values = Vec::with_capacity(grid.len());
        for line in lines {
            for tok in line?.split_whitespace() {
                values.push(real(tok)?);
            }
        }
        Self::from_values(grid, values)
    }
}

/// Face-valued discrete function (x-faces and y-faces of the staggered grid).
///
/// x-face `(f, j)`, `f = 0..=nx`, sits between nodes `(f−1, j)` and `(f, j)`
/// and has index `j·(nx+1) + f`; y-face `(i, f)` has index `f·nx + i`.
#[derive(Clone, Debug, PartialEq)]
pub struct FaceField {
    grid: Grid,
    xfaces: Vec<f64>,
    yfaces: Vec<f64>,
}

impl FaceField {
    pub fn zeros(grid: Grid) -> Self {
        Self { grid, xfaces: vec![0.0; grid.n_xfaces()], yfaces: vec![0.0; grid.n_yfaces()] }
    }

    pub fn from_values(grid: Grid, xfaces: Vec<f64>, yfaces: Vec<f64>) -> Result<Self, GridError> {
        if xfaces.len() != grid.n_xfaces() {
            return Err(GridError::LengthMismatch { expected: grid.n_xfaces(), found: xfaces.len() });
        }
        if yfaces.len() != grid.n_yfaces() {
            return Err(GridError::LengthMismatch { expected: grid.n_yfaces(), found: yfaces.len() });
        }
        if let Some((index, &value)) = xfaces.iter().chain(&yfaces).enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(GridError::NonFinite { index, value });
        }
        Ok(Self { grid, xfaces, yfaces })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn xfaces(&self) -> &[f64] {
        &self.xfaces
    }

    pub fn yfaces(&self) -> &[f64] {
        &self.yfaces
    }

    pub fn zip_map(&self, other: &FaceField, f: impl Fn(f64, f64) -> f64) -> Self {
        assert!(self.grid.matches(&other.grid), "fields live on different grids");
        Self {
            grid: self.grid,
            xfaces: self.xfaces.iter().zip(&other.xfaces).map(|(&a, &b)| f(a, b)).collect(),
            yfaces: self.yfaces.iter().zip(&other.yfaces).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            xfaces: self.xfaces.iter().map(|&v| f(v)).collect(),
            yfaces: self.yfaces.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `hx·hy · Σ_faces F·G`
    pub fn inner(&self, other: &FaceField) -> f64 {
        let sx: f64 = self.xfaces.iter().zip(&other.xfaces).map(|(a, b)| a * b).sum();
        let sy: f64 = self.yfaces.iter().zip(&other.yfaces).map(|(a, b)| a * b).sum();
        self.grid.cell_area() * (sx + sy)
    }

    /// Per-node `½(F_left² + F_right²) + ½(F_bottom² + F_top²)`.
    pub fn node_mean_square(&self) -> ScalarField {
        let g = self.grid;
        let (nx, ny) = (g.nx, g.ny);
        let mut out = Vec::with_capacity(g.len());
        for j in 0..ny {
            for i in 0..nx {
                let l = self.xfaces[j * (nx + 1) + i];
                let r = self.xfaces[j * (nx + 1) + i + 1];
                let b = self.yfaces[j * nx + i];
                let t = self.yfaces[(j + 1) * nx + i];
                out.push(0.5 * (l * l + r * r) + 0.5 * (b * b + t * t));
            }
        }
        ScalarField { grid: g, values: out }
    }

    /// Per-node magnitude of the face values averaged onto the node.
    pub fn node_magnitude(&self) -> ScalarField {
        let g = self.grid;
        let (nx, ny) = (g.nx, g.ny);
        let mut out = Vec::with_capacity(g.len());
        for j in 0..ny {
            for i in 0..nx {
                let gx = 0.5 * (self.xfaces[j * (nx + 1) + i] + self.xfaces[j * (nx + 1) + i + 1]);
                let gy = 0.5 * (self.yfaces[j * nx + i] + self.yfaces[(j + 1) * nx + i]);
                out.push(gx.hypot(gy));
            }
        }
        ScalarField { grid: g, values: out }
    }
}

/// Face differences of `u` with zero ghost values outside the grid.
pub fn gradient(u: &ScalarField) -> FaceField {
    let g = u.grid;
    let (nx, ny) = (g.nx, g.ny);
    let v = &u.values;
    let mut xfaces = Vec::with_capacity(g.n_xfaces());
    for j in 0..ny {
        let row = &v[j * nx..(j + 1) * nx];
        for f in 0..=nx {
            let right = if f < nx { row[f] } else { 0.0 };
            let left = if f > 0 { row[f - 1] } else { 0.0 };
            xfaces.push((right - left) / g.hx);
        }
    }
    let mut yfaces = Vec::with_capacity(g.n_yfaces());
    for f in 0..=ny {
        for i in 0..nx {
            let top = if f < ny { v[f * nx + i] } else { 0.0 };
            let bottom = if f > 0 { v[(f - 1) * nx + i] } else { 0.0 };
            yfaces.push((top - bottom) / g.hy);
        }
    }
    FaceField { grid: g, xfaces, yfaces }
}

pub fn divergence(field: &FaceField) -> ScalarField {
    let g = field.grid;
    let (nx, ny) = (g.nx, g.ny);
    let mut values = Vec::with_capacity(g.len());
    for j in 0..ny {
        for i in 0..nx {
            let dx = (field.xfaces[j * (nx + 1) + i + 1] - field.xfaces[j * (nx + 1) + i]) / g.hx;
            let dy = (field.yfaces[(j + 1) * nx + i] - field.yfaces[j * nx + i]) / g.hy;
            values.push(dx + dy);
        }
    }
    ScalarField { grid: g, values }
}

/// 5-point Laplacian, defined as `divergence(gradient(u))`.
pub fn laplacian(u: &ScalarField) -> ScalarField {
    divergence(&gradient(u))
}

/// Midpoint quadrature over the interior nodes.
pub fn integrate(f: &ScalarField) -> f64 {
    f.grid.cell_area() * f.values.iter().sum::<f64>()
}

/// `hx·hy · Σ f·g` over the interior nodes.
pub fn inner(f: &ScalarField, g: &ScalarField) -> f64 {
    assert!(f.grid.matches(&g.grid), "fields live on different grids");
    f.grid.cell_area() * f.values.iter().zip(&g.values).map(|(a, b)| a * b).sum::<f64>()
}

/// Discrete Dirichlet energy `∫|∇u|²`, summed over faces.
///
/// This is the one definition of the nonlocal scalar used across the crate.
pub fn grad_norm_sq(u: &ScalarField) -> f64 {
    let grad = gradient(u);
    grad.inner(&grad)
}

/// `∫∇u·∇v` over faces; equals `−∫u·Δv` for Dirichlet fields.
pub fn grad_inner(u: &ScalarField, v: &ScalarField) -> f64 {
    gradient(u).inner(&gradient(v))
}

// Coefficient fields (a, b, c = a/b, ...) do not vanish on the boundary, so
// their derivatives use ghost values extrapolated from the interior instead of
// the Dirichlet zero. Quadratic extrapolation keeps second differences at the
// collar equal to those one node further in; it degrades to linear and then
// constant on very coarse grids or when it would produce a non-positive ghost
// for a positive field.

fn extrapolate(v0: f64, v1: Option<f64>, v2: Option<f64>) -> f64 {
    let candidates = [
        v1.zip(v2).map(|(v1, v2)| 3.0 * v0 - 3.0 * v1 + v2),
        v1.map(|v1| 2.0 * v0 - v1),
    ];
    for ghost in candidates.into_iter().flatten() {
        if v0 <= 0.0 || ghost > 0.0 {
            return ghost;
        }
    }
    v0
}

/// Ghost values of a coefficient field along each edge:
/// `(left[j], right[j], bottom[i], top[i])`.
struct Ghosts {
    left: Vec<f64>,
    right: Vec<f64>,
    bottom: Vec<f64>,
    top: Vec<f64>,
}

fn ghosts(c: &ScalarField) -> Ghosts {
    let g = c.grid;
    let (nx, ny) = (g.nx, g.ny);
    let line = |get: &dyn Fn(usize) -> f64, n: usize| -> (f64, f64) {
        let at = |k: usize| if k < n { Some(get(k)) } else { None };
        let rev = |k: usize| if k < n { Some(get(n - 1 - k)) } else { None };
        (extrapolate(get(0), at(1), at(2)), extrapolate(get(n - 1), rev(1), rev(2)))
    };
    let mut out = Ghosts {
        left: Vec::with_capacity(ny),
        right: Vec::with_capacity(ny),
        bottom: Vec::with_capacity(nx),
        top: Vec::with_capacity(nx),
    };
    for j in 0..ny {
        let (l, r) = line(&|i| c.at(i, j), nx);
        out.left.push(l);
        out.right.push(r);
    }
    for i in 0..nx {
        let (b, t) = line(&|j| c.at(i, j), ny);
        out.bottom.push(b);
        out.top.push(t);
    }
    out
}

/// Applies `f(near, far)` to every face, where boundary faces pair the
/// interior node with its extrapolated ghost.
fn coefficient_faces_with(c: &ScalarField, f: impl Fn(f64, f64, f64) -> f64) -> FaceField {
    let g = c.grid;
    let (nx, ny) = (g.nx, g.ny);
    let gh = ghosts(c);
    let mut xfaces = Vec::with_capacity(g.n_xfaces());
    for j in 0..ny {
        for k in 0..=nx {
            let left = if k > 0 { c.at(k - 1, j) } else { gh.left[j] };
            let right = if k < nx { c.at(k, j) } else { gh.right[j] };
            xfaces.push(f(left, right, g.hx));
        }
    }
    let mut yfaces = Vec::with_capacity(g.n_yfaces());
    for k in 0..=ny {
        for i in 0..nx {
            let bottom = if k > 0 { c.at(i, k - 1) } else { gh.bottom[i] };
            let top = if k < ny { c.at(i, k) } else { gh.top[i] };
            yfaces.push(f(bottom, top, g.hy));
        }
    }
    FaceField { grid: g, xfaces, yfaces }
}

/// Face gradient of a coefficient field, using extrapolated ghosts.
pub fn coefficient_gradient(c: &ScalarField) -> FaceField {
    coefficient_faces_with(c, |lo, hi, h| (hi - lo) / h)
}

/// Arithmetic face means of a coefficient field, using extrapolated ghosts.
pub fn coefficient_face_means(c: &ScalarField) -> FaceField {
    coefficient_faces_with(c, |lo, hi, _| 0.5 * (lo + hi))
}

/// `|∇c|∞`: largest node-averaged gradient magnitude of a coefficient field.
pub fn coefficient_grad_sup(c: &ScalarField) -> f64 {
    coefficient_gradient(c).node_magnitude().max()
}

/// Minimum and maximum of a coefficient field over the closed rectangle,
/// i.e. including the extrapolated boundary values.
pub fn closure_extrema(c: &ScalarField) -> (f64, f64) {
    let gh = ghosts(c);
    let edge = gh.left.iter().chain(&gh.right).chain(&gh.bottom).chain(&gh.top);
    let lo = edge.clone().copied().fold(c.min(), f64::min);
    let hi = edge.copied().fold(c.max(), f64::max);
    (lo, hi)
}
