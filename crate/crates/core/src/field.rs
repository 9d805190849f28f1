//! Cell-centered fields on a rectangle with zero-flux differential operators.
//!
//! Values are stored row-major, `idx = j * nx + i`, with `i` along `x1`.
//! All reductions run in that fixed order so results are bit-reproducible.

use std::fmt::Write as _;

use thiserror::Error;

use crate::geometry::Point;

/// Tolerance below zero accepted for fields that must be nonnegative.
pub const TOL_NEG: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("grid needs at least 4 cells per direction, got {nx}x{ny}")]
    TooCoarse { nx: usize, ny: usize },
    #[error("grid extent must have positive side lengths")]
    EmptyExtent,
    #[error("field has {got} values, grid has {expected} cells")]
    SizeMismatch { expected: usize, got: usize },
    #[error("non-finite value at cell {0}")]
    NonFinite(usize),
    #[error("value {value} at cell {index} is below -{tol}")]
    Negative { index: usize, value: f64, tol: f64 },
    #[error("fields live on different grids")]
    GridMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
    pub lower: Point,
    pub upper: Point,
}

impl Grid {
    pub fn new(nx: usize, ny: usize, lower: Point, upper: Point) -> Result<Self, FieldError> {
        if nx < 4 || ny < 4 {
            return Err(FieldError::TooCoarse { nx, ny });
        }
        let (lx, ly) = (upper[0] - lower[0], upper[1] - lower[1]);
        if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
            return Err(FieldError::EmptyExtent);
        }
        Ok(Grid { nx, ny, hx: lx / nx as f64, hy: ly / ny as f64, lower, upper })
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn center(&self, i: usize, j: usize) -> Point {
        [
            self.lower[0] + (i as f64 + 0.5) * self.hx,
            self.lower[1] + (j as f64 + 0.5) * self.hy,
        ]
    }

    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }

    pub fn lengths(&self) -> [f64; 2] {
        [self.upper[0] - self.lower[0], self.upper[1] - self.lower[1]]
    }

    pub fn area(&self) -> f64 {
        let l = self.lengths();
        l[0] * l[1]
    }

    pub fn h_max(&self) -> f64 {
        self.hx.max(self.hy)
    }

    pub fn h_min(&self) -> f64 {
        self.hx.min(self.hy)
    }

    /// Same extent, twice the cells per direction.
    pub fn refined(&self) -> Grid {
        Grid::new(2 * self.nx, 2 * self.ny, self.lower, self.upper).expect("refining a valid grid")
    }

    pub fn contains(&self, p: Point) -> bool {
        (self.lower[0]..=self.upper[0]).contains(&p[0]) && (self.lower[1]..=self.upper[1]).contains(&p[1])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self, FieldError> {
        if values.len() != grid.len() {
            return Err(FieldError::SizeMismatch { expected: grid.len(), got: values.len() });
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(FieldError::NonFinite(k));
        }
        Ok(ScalarField { grid, values })
    }

    pub(crate) fn from_vec_unchecked(grid: Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        ScalarField { grid, values }
    }

    pub fn zeros(grid: Grid) -> Self {
        ScalarField { grid, values: vec![0.0; grid.len()] }
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        ScalarField { grid, values: vec![c; grid.len()] }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(Point) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                values.push(f(grid.center(i, j)));
            }
        }
        ScalarField { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        assert_eq!(self.grid, other.grid, "zip_map on mismatched grids");
        ScalarField {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> ScalarField {
        self.map(|v| s * v)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Power of the nonnegative part; clips round-off negatives only here.
    pub fn pos_pow(&self, p: f64) -> ScalarField {
        self.map(|v| v.max(0.0).powf(p))
    }

    pub fn check_nonnegative(&self, tol: f64) -> Result<(), FieldError> {
        match self.values.iter().enumerate().find(|(_, &v)| v < -tol) {
            Some((index, &value)) => Err(FieldError::Negative { index, value, tol }),
            None => Ok(()),
        }
    }

    /// CSV snapshot: comment header with the grid, then `x1,x2,value` per cell.
    pub fn to_csv(&self, header: &str) -> String {
        let g = &self.grid;
        let mut s = String::new();
        if !header.is_empty() {
            for line in header.lines() {
                let _ = writeln!(s, "# {line}");
            }
        }
        let _ = writeln!(
            s,
            "# grid nx={} ny={} lower={},{} upper={},{}",
            g.nx, g.ny, g.lower[0], g.lower[1], g.upper[0], g.upper[1]
        );
        s.push_str("x1,x2,value\n");
        for j in 0..g.ny {
            for i in 0..g.nx {
                let c = g.center(i, j);
                let _ = writeln!(s, "{},{},{}", c[0], c[1], self.values[g.idx(i, j)]);
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    grid: Grid,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl VectorField {
    pub fn new(grid: Grid, x: Vec<f64>, y: Vec<f64>) -> Result<Self, FieldError> {
        for comp in [&x, &y] {
            if comp.len() != grid.len() {
                return Err(FieldError::SizeMismatch { expected: grid.len(), got: comp.len() });
            }
        }
        Ok(VectorField { grid, x, y })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(Point) -> [f64; 2]) -> Self {
        let mut x = Vec::with_capacity(grid.len());
        let mut y = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let v = f(grid.center(i, j));
                x.push(v[0]);
                y.push(v[1]);
            }
        }
        VectorField { grid, x, y }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn norm(&self) -> ScalarField {
        let values = self.x.iter().zip(&self.y).map(|(a, b)| a.hypot(*b)).collect();
        ScalarField::from_vec_unchecked(self.grid, values)
    }

    pub fn norm_sq(&self) -> ScalarField {
        let values = self.x.iter().zip(&self.y).map(|(a, b)| a * a + b * b).collect();
        ScalarField::from_vec_unchecked(self.grid, values)
    }

    pub fn dot(&self, other: &VectorField) -> ScalarField {
        assert_eq!(self.grid, other.grid);
        let values = (0..self.grid.len())
            .map(|k| self.x[k] * other.x[k] + self.y[k] * other.y[k])
            .collect();
        ScalarField::from_vec_unchecked(self.grid, values)
    }

    pub fn max_abs(&self) -> f64 {
        self.x.iter().chain(&self.y).fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Midpoint rule, `sum(values) * hx * hy`.
pub fn integrate(f: &ScalarField) -> f64 {
    f.values.iter().sum::<f64>() * f.grid.cell_area()
}

pub fn inner(f: &ScalarField, g: &ScalarField) -> f64 {
    assert_eq!(f.grid, g.grid);
    f.values.iter().zip(&g.values).map(|(a, b)| a * b).sum::<f64>() * f.grid.cell_area()
}

/// Centered differences; ghost cells mirror the boundary cell (zero normal derivative).
pub fn gradient(f: &ScalarField) -> VectorField {
    let g = f.grid;
    let u = &f.values;
    let mut gx = vec![0.0; g.len()];
    let mut gy = vec![0.0; g.len()];
    for j in 0..g.ny {
        for i in 0..g.nx {
            let k = g.idx(i, j);
            let w = if i > 0 { u[k - 1] } else { u[k] };
            let e = if i + 1 < g.nx { u[k + 1] } else { u[k] };
            let s = if j > 0 { u[k - g.nx] } else { u[k] };
            let n = if j + 1 < g.ny { u[k + g.nx] } else { u[k] };
            gx[k] = (e - w) / (2.0 * g.hx);
            gy[k] = (n - s) / (2.0 * g.hy);
        }
    }
    VectorField { grid: g, x: gx, y: gy }
}

/// Centered differences inside, second-order one-sided differences in the
/// boundary cells. For fields without a zero-flux boundary condition.
pub fn gradient_one_sided(f: &ScalarField) -> VectorField {
    let g = f.grid;
    let u = &f.values;
    let mut gx = vec![0.0; g.len()];
    let mut gy = vec![0.0; g.len()];
    let d = |a: f64, b: f64, c: f64, h: f64| (-3.0 * a + 4.0 * b - c) / (2.0 * h);
    for j in 0..g.ny {
        for i in 0..g.nx {
            let k = g.idx(i, j);
            gx[k] = if i == 0 {
                d(u[k], u[k + 1], u[k + 2], g.hx)
            } else if i + 1 == g.nx {
                -d(u[k], u[k - 1], u[k - 2], g.hx)
            } else {
                (u[k + 1] - u[k - 1]) / (2.0 * g.hx)
            };
            gy[k] = if j == 0 {
                d(u[k], u[k + g.nx], u[k + 2 * g.nx], g.hy)
            } else if j + 1 == g.ny {
                -d(u[k], u[k - g.nx], u[k - 2 * g.nx], g.hy)
            } else {
                (u[k + g.nx] - u[k - g.nx]) / (2.0 * g.hy)
            };
        }
    }
    VectorField { grid: g, x: gx, y: gy }
}

/// Negative adjoint of [`gradient`]: centered differences with odd reflection of
/// the normal component, so `inner(f, divergence(G)) == -inner(grad f, G)`.
pub fn divergence(v: &VectorField) -> ScalarField {
    let g = v.grid;
    let mut out = vec![0.0; g.len()];
    for j in 0..g.ny {
        for i in 0..g.nx {
            let k = g.idx(i, j);
            let w = if i > 0 { v.x[k - 1] } else { -v.x[k] };
            let e = if i + 1 < g.nx { v.x[k + 1] } else { -v.x[k] };
            let s = if j > 0 { v.y[k - g.nx] } else { -v.y[k] };
            let n = if j + 1 < g.ny { v.y[k + g.nx] } else { -v.y[k] };
            out[k] = (e - w) / (2.0 * g.hx) + (n - s) / (2.0 * g.hy);
        }
    }
    ScalarField::from_vec_unchecked(g, out)
}

/// Five-point Laplacian with mirrored ghost cells (zero flux through every boundary face).
pub fn laplacian_neumann(f: &ScalarField) -> ScalarField {
    let mut out = vec![0.0; f.grid.len()];
    laplacian_into(&f.grid, &f.values, &mut out);
    ScalarField::from_vec_unchecked(f.grid, out)
}

pub(crate) fn laplacian_into(g: &Grid, u: &[f64], out: &mut [f64]) {
    let (nx, ny) = (g.nx, g.ny);
    let cx = 1.0 / (g.hx * g.hx);
    let cy = 1.0 / (g.hy * g.hy);
    for j in 0..ny {
        let row = j * nx;
        for i in 0..nx {
            let k = row + i;
            let c = u[k];
            let mut acc = 0.0;
            if i > 0 {
                acc += cx * (u[k - 1] - c);
            }
            if i + 1 < nx {
                acc += cx * (u[k + 1] - c);
            }
            if j > 0 {
                acc += cy * (u[k - nx] - c);
            }
            if j + 1 < ny {
                acc += cy * (u[k + nx] - c);
            }
            out[k] = acc;
        }
    }
}

/// Face-based discrete Dirichlet energy `sum over interior faces of (jump / h)^2 * face area`.
/// Satisfies `dirichlet_energy(u) == -inner(u, laplacian_neumann(u))` up to round-off.
pub fn dirichlet_energy(f: &ScalarField) -> f64 {
    let g = f.grid;
    let u = &f.values;
    let mut acc = 0.0;
    for j in 0..g.ny {
        for i in 0..g.nx {
            let k = g.idx(i, j);
            if i + 1 < g.nx {
                let d = u[k + 1] - u[k];
                acc += d * d * (g.hy / g.hx);
            }
            if j + 1 < g.ny {
                let d = u[k + g.nx] - u[k];
                acc += d * d * (g.hx / g.hy);
            }
        }
    }
    acc
}

/// Boundary integral: each boundary face takes the linear extrapolation
/// `1.5 u0 - 0.5 u1` from the two nearest cell centers times its length.
pub fn integrate_boundary(f: &ScalarField) -> f64 {
    let g = f.grid;
    let u = &f.values;
    let ext = |a: f64, b: f64| 1.5 * a - 0.5 * b;
    let mut acc = 0.0;
    for i in 0..g.nx {
        let bottom = ext(u[g.idx(i, 0)], u[g.idx(i, 1)]);
        let top = ext(u[g.idx(i, g.ny - 1)], u[g.idx(i, g.ny - 2)]);
        acc += (bottom + top) * g.hx;
    }
    for j in 0..g.ny {
        let left = ext(u[g.idx(0, j)], u[g.idx(1, j)]);
        let right = ext(u[g.idx(g.nx - 1, j)], u[g.idx(g.nx - 2, j)]);
        acc += (left + right) * g.hy;
    }
    acc
}

/// Discrete L2 norm `sqrt(integrate(f^2))`.
pub fn l2_norm(f: &ScalarField) -> f64 {
    inner(f, f).sqrt()
}
