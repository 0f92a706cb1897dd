//! Radial finite-volume discretization of the ball `B_R ⊂ R^n`.
//!
//! Cells are the annuli `(e_{i-1}, e_i)` with `e_0 = 0` and `e_N = R`. Fields
//! are sampled at cell midpoints. Every integral over the ball is
//! `ω_n Σ_i w_i f_i` with `w_i = (e_i^n - e_{i-1}^n)/n`, the exact integral of
//! `r^{n-1}` over the cell, so constants integrate exactly and the flux-form
//! Laplacian sums to zero.

use std::f64::consts::PI;
use std::ops::Index;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible cell count.
pub const MIN_CELLS: usize = 16;

/// Parameters that fully determine a grid; this is what configs and
/// snapshot headers store.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
    pub radius: f64,
    pub cells: usize,
    #[serde(default = "default_grading")]
    pub grading: f64,
}

fn default_grading() -> f64 {
    1.0
}

impl GridSpec {
    pub fn build(&self) -> Result<Arc<RadialGrid>> {
        build_grid(self.n, self.radius, self.cells, self.grading)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    spec: GridSpec,
    centers: Vec<f64>,
    edges: Vec<f64>,
    weights: Vec<f64>,
    omega_n: f64,
}

/// `Γ(n/2)` for a positive integer `n`.
fn gamma_half(n: usize) -> f64 {
    let (mut x, mut g) = if n.is_multiple_of(2) {
        (1.0, 1.0)
    } else {
        (0.5, PI.sqrt())
    };
    while x < n as f64 / 2.0 - 0.25 {
        g *= x;
        x += 1.0;
    }
    g
}

/// Surface measure of the unit sphere `∂B_1 ⊂ R^n`, `2π^{n/2}/Γ(n/2)`.
pub fn sphere_area(n: usize) -> f64 {
    2.0 * PI.powf(n as f64 / 2.0) / gamma_half(n)
}

/// Volume of `B_R ⊂ R^n`.
pub fn ball_volume(n: usize, radius: f64) -> f64 {
    sphere_area(n) * radius.powi(n as i32) / n as f64
}

/// `(b^n - a^n)/n` for `0 ≤ a < b`, factored to avoid cancellation.
fn shell_weight(a: f64, b: f64, n: usize) -> f64 {
    let mut sum = 0.0;
    for j in 0..n {
        sum += b.powi(j as i32) * a.powi((n - 1 - j) as i32);
    }
    (b - a) * sum / n as f64
}

/// Builds a grid with cell widths growing geometrically by `grading` from the
/// origin outward; `grading = 1` is uniform.
pub fn build_grid(n: usize, radius: f64, cells: usize, grading: f64) -> Result<Arc<RadialGrid>> {
    if n < 3 {
        return Err(Error::Dimension(n));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::Grid(format!(
            "radius must be positive, got {radius}"
        )));
    }
    if cells < MIN_CELLS {
        return Err(Error::Grid(format!(
            "need at least {MIN_CELLS} cells, got {cells}"
        )));
    }
    if !(grading >= 1.0 && grading.is_finite()) {
        return Err(Error::Grid(format!("grading must be >= 1, got {grading}")));
    }

    let mut edges = Vec::with_capacity(cells + 1);
    edges.push(0.0);
    if grading == 1.0 {
        let h = radius / cells as f64;
        for i in 1..cells {
            edges.push(h * i as f64);
        }
    } else {
        // e_i = R (g^i - 1)/(g^N - 1)
        let ln_g = grading.ln();
        let denom = (cells as f64 * ln_g).exp_m1();
        for i in 1..cells {
            edges.push(radius * (i as f64 * ln_g).exp_m1() / denom);
        }
    }
    edges.push(radius);

    let centers: Vec<f64> = edges.windows(2).map(|e| 0.5 * (e[0] + e[1])).collect();
    let weights: Vec<f64> = edges
        .windows(2)
        .map(|e| shell_weight(e[0], e[1], n))
        .collect();

    for (i, w) in weights.iter().enumerate() {
        if !(*w > 0.0) || !(edges[i + 1] > edges[i]) {
            return Err(Error::Grid(format!(
                "cell {i} degenerates (edges {:e}..{:e}); reduce grading",
                edges[i],
                edges[i + 1]
            )));
        }
    }

    Ok(Arc::new(RadialGrid {
        spec: GridSpec {
            n,
            radius,
            cells,
            grading,
        },
        centers,
        edges,
        weights,
        omega_n: sphere_area(n),
    }))
}

impl RadialGrid {
    pub fn spec(&self) -> GridSpec {
        self.spec
    }
    pub fn dim(&self) -> usize {
        self.spec.n
    }
    pub fn radius(&self) -> f64 {
        self.spec.radius
    }
    pub fn len(&self) -> usize {
        self.centers.len()
    }
    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }
    pub fn centers(&self) -> &[f64] {
        &self.centers
    }
    pub fn edges(&self) -> &[f64] {
        &self.edges
    }
    /// Per-cell `∫ r^{n-1} dr`; multiply by `omega_n` for volumes.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
    pub fn omega_n(&self) -> f64 {
        self.omega_n
    }
    pub fn volume(&self) -> f64 {
        ball_volume(self.spec.n, self.spec.radius)
    }
    /// `e_i^{n-1}` for every edge (area factor without `ω_n`).
    pub fn edge_area(&self, i: usize) -> f64 {
        self.edges[i].powi(self.spec.n as i32 - 1)
    }
    /// Smallest cell width.
    pub fn min_width(&self) -> f64 {
        self.edges
            .windows(2)
            .map(|e| e[1] - e[0])
            .fold(f64::INFINITY, f64::min)
    }
    /// Number of cell centers strictly inside radius `r`.
    pub fn cells_within(&self, r: f64) -> usize {
        self.centers.partition_point(|&c| c < r)
    }

    pub fn sample<F: Fn(f64) -> f64>(self: &Arc<Self>, f: F) -> RadialField {
        let values = self.centers.iter().map(|&r| f(r)).collect();
        RadialField {
            grid: Arc::clone(self),
            values,
        }
    }

    pub fn constant(self: &Arc<Self>, c: f64) -> RadialField {
        RadialField {
            grid: Arc::clone(self),
            values: vec![c; self.len()],
        }
    }
}

/// Scalar radial function sampled at the cell centers of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialField {
    grid: Arc<RadialGrid>,
    values: Vec<f64>,
}

impl RadialField {
    pub fn new(grid: Arc<RadialGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Grid(format!(
                "field has {} values for {} cells",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
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
    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn same_grid(&self, other: &RadialField) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> RadialField {
        RadialField {
            grid: Arc::clone(&self.grid),
            values: self.values.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Pointwise combination; panics if the grids differ.
    pub fn zip_map<F: Fn(f64, f64) -> f64>(&self, other: &RadialField, f: F) -> RadialField {
        assert!(self.same_grid(other), "zip_map across different grids");
        RadialField {
            grid: Arc::clone(&self.grid),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `∫_Ω f`.
    pub fn integrate(&self) -> f64 {
        integrate(self)
    }
}

impl Index<usize> for RadialField {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

/// `∫_Ω f = ω_n Σ w_i f_i`.
pub fn integrate(f: &RadialField) -> f64 {
    let g = f.grid();
    g.omega_n()
        * f.values()
            .iter()
            .zip(g.weights())
            .map(|(v, w)| v * w)
            .sum::<f64>()
}

/// Boundary treatment for [`radial_derivative`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bc {
    /// One-sided second-order stencils at both ends.
    None,
    /// Zero slope imposed at `r = 0` (symmetry) and at `r = R`.
    Neumann,
}

/// Second-order derivative at cell centers.
///
/// Interior cells use the three-point Lagrange stencil on the nonuniform
/// centers. With [`Bc::Neumann`] the end cells use the even quadratic
/// `a + b(r - r_end)²` through the two nearest centers, which has zero slope
/// at `r = 0` or `r = R`.
pub fn radial_derivative(f: &RadialField, bc: Bc) -> RadialField {
    let r = f.grid().centers();
    let y = f.values();
    let n = r.len();
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        d[i] = three_point(r[i - 1], r[i], r[i + 1], y[i - 1], y[i], y[i + 1], r[i]);
    }
    match bc {
        Bc::None => {
            d[0] = three_point(r[0], r[1], r[2], y[0], y[1], y[2], r[0]);
            d[n - 1] = three_point(
                r[n - 3],
                r[n - 2],
                r[n - 1],
                y[n - 3],
                y[n - 2],
                y[n - 1],
                r[n - 1],
            );
        }
        Bc::Neumann => {
            let b = (y[1] - y[0]) / (r[1] * r[1] - r[0] * r[0]);
            d[0] = 2.0 * b * r[0];
            let big_r = f.grid().radius();
            let (s0, s1) = (r[n - 2] - big_r, r[n - 1] - big_r);
            let b = (y[n - 2] - y[n - 1]) / (s0 * s0 - s1 * s1);
            d[n - 1] = 2.0 * b * s1;
        }
    }
    RadialField {
        grid: Arc::clone(f.grid()),
        values: d,
    }
}

/// Derivative at `x` of the quadratic interpolating three points.
fn three_point(x0: f64, x1: f64, x2: f64, y0: f64, y1: f64, y2: f64, x: f64) -> f64 {
    let l0 = ((x - x1) + (x - x2)) / ((x0 - x1) * (x0 - x2));
    let l1 = ((x - x0) + (x - x2)) / ((x1 - x0) * (x1 - x2));
    let l2 = ((x - x0) + (x - x1)) / ((x2 - x0) * (x2 - x1));
    l0 * y0 + l1 * y1 + l2 * y2
}

/// Flux-form radial Laplacian `r^{1-n}(r^{n-1} f_r)_r` with zero flux through
/// `r = 0` and `r = R`.
pub fn laplacian_radial(f: &RadialField) -> RadialField {
    let grid = f.grid();
    let ops = LaplacianStencil::new(grid);
    let y = f.values();
    let n = y.len();
    let mut out = vec![0.0; n];
    for i in 0..n {
        let mut acc = 0.0;
        if i + 1 < n {
            acc += ops.upper[i] * (y[i + 1] - y[i]);
        }
        if i > 0 {
            acc += ops.lower[i] * (y[i - 1] - y[i]);
        }
        out[i] = acc;
    }
    RadialField {
        grid: Arc::clone(grid),
        values: out,
    }
}

/// Coefficients of the flux-form Laplacian: `(L f)_i = upper_i (f_{i+1} - f_i)
/// + lower_i (f_{i-1} - f_i)`.
#[derive(Debug, Clone)]
pub struct LaplacianStencil {
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
    /// `e_i^{n-1}` over the distance between the centers on either side of
    /// edge `i`; zero at the walls `i = 0` and `i = N`.
    pub edge_conductance: Vec<f64>,
}

impl LaplacianStencil {
    pub fn new(grid: &RadialGrid) -> Self {
        let r = grid.centers();
        let w = grid.weights();
        let n = r.len();
        let mut edge_conductance = vec![0.0; n + 1];
        for (e, c) in edge_conductance.iter_mut().enumerate().take(n).skip(1) {
            *c = grid.edge_area(e) / (r[e] - r[e - 1]);
        }
        let mut upper = vec![0.0; n];
        let mut lower = vec![0.0; n];
        for i in 0..n {
            upper[i] = edge_conductance[i + 1] / w[i];
            lower[i] = edge_conductance[i] / w[i];
        }
        Self {
            upper,
            lower,
            edge_conductance,
        }
    }
}
