//! Uniform periodic space-time grids on `[0,T] x T^d` and the discrete
//! calculus used everywhere else.
//!
//! Scalars live at cell centres `x_i = (i + 1/2) dx`. Vector components live
//! on the faces normal to their axis: component `a` at cell `c` is located at
//! `x_c + e_a h_a / 2`. With this layout the forward difference (gradient) and
//! backward difference (divergence) are exact negative adjoints and their
//! composition is the compact 3-point Laplacian.
//!
//! Time is either sampled at the `nt + 1` slices `t_k = k dt`
//! ([`TimeLayout::Slices`]) or at the `nt` interval midpoints
//! `t_{k+1/2}` ([`TimeLayout::Intervals`]).

use ndarray::{Array2, ArrayView1, ArrayViewMut1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform periodic discretization of `[0,T] x T^d`, `d` in {1, 2}.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusGrid {
    dim: usize,
    nx: usize,
    ny: usize,
    nt: usize,
    horizon: f64,
}

impl TorusGrid {
    /// Builds a grid. `ny` is required when `dim == 2` and ignored otherwise.
    pub fn build(dim: usize, nx: usize, ny: Option<usize>, nt: usize, horizon: f64) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::Grid(format!("dimension must be 1 or 2, got {dim}")));
        }
        if nx < 2 {
            return Err(Error::Grid(format!("nx too small: {nx} (need at least 2)")));
        }
        let ny = if dim == 2 {
            let ny = ny.ok_or_else(|| Error::Grid("ny is required when dim = 2".into()))?;
            if ny < 2 {
                return Err(Error::Grid(format!("ny too small: {ny} (need at least 2)")));
            }
            ny
        } else {
            1
        };
        if nt < 2 {
            return Err(Error::Grid(format!("nt too small: {nt} (need at least 2)")));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Grid(format!("horizon must be positive and finite, got {horizon}")));
        }
        Ok(TorusGrid { dim, nx, ny, nt, horizon })
    }

    pub fn new_1d(nx: usize, nt: usize, horizon: f64) -> Result<Self> {
        Self::build(1, nx, None, nt, horizon)
    }

    pub fn new_2d(nx: usize, ny: usize, nt: usize, horizon: f64) -> Result<Self> {
        Self::build(2, nx, Some(ny), nt, horizon)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn nx(&self) -> usize {
        self.nx
    }
    /// Cells along `y`; 1 for one-dimensional grids.
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn nt(&self) -> usize {
        self.nt
    }
    pub fn horizon(&self) -> f64 {
        self.horizon
    }
    pub fn dx(&self) -> f64 {
        1.0 / self.nx as f64
    }
    pub fn dy(&self) -> f64 {
        1.0 / self.ny as f64
    }
    pub fn dt(&self) -> f64 {
        self.horizon / self.nt as f64
    }

    /// Number of spatial cells.
    pub fn cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn cell_volume(&self) -> f64 {
        if self.dim == 1 {
            self.dx()
        } else {
            self.dx() * self.dy()
        }
    }

    /// Cells along spatial axis `axis`.
    pub fn extent(&self, axis: usize) -> usize {
        match axis {
            0 => self.nx,
            1 => self.ny,
            _ => panic!("axis {axis} out of range"),
        }
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        1.0 / self.extent(axis) as f64
    }

    pub fn rows(&self, layout: TimeLayout) -> usize {
        match layout {
            TimeLayout::Slices => self.nt + 1,
            TimeLayout::Intervals => self.nt,
        }
    }

    /// Time of row `k` in the given layout.
    pub fn time(&self, layout: TimeLayout, k: usize) -> f64 {
        match layout {
            TimeLayout::Slices => k as f64 * self.dt(),
            TimeLayout::Intervals => (k as f64 + 0.5) * self.dt(),
        }
    }

    pub fn cell_index(&self, i: usize, j: usize) -> usize {
        i * self.ny + j
    }

    /// `(i, j)` of a flat cell index.
    pub fn cell_coords(&self, c: usize) -> (usize, usize) {
        (c / self.ny, c % self.ny)
    }

    /// Cell-centre coordinates `(x, y)`; `y = 0` in one dimension.
    pub fn center(&self, c: usize) -> (f64, f64) {
        let (i, j) = self.cell_coords(c);
        let y = if self.dim == 2 { (j as f64 + 0.5) * self.dy() } else { 0.0 };
        ((i as f64 + 0.5) * self.dx(), y)
    }

    /// Coordinates of the face of cell `c` normal to `axis` (on the positive side).
    pub fn face(&self, axis: usize, c: usize) -> (f64, f64) {
        let (x, y) = self.center(c);
        match axis {
            0 => (x + 0.5 * self.dx(), y),
            _ => (x, y + 0.5 * self.dy()),
        }
    }

    /// Flat index of the neighbour of `c` shifted by `+1` or `-1` along `axis`.
    pub fn neighbor(&self, c: usize, axis: usize, forward: bool) -> usize {
        let (i, j) = self.cell_coords(c);
        match axis {
            0 => {
                let i = if forward { (i + 1) % self.nx } else { (i + self.nx - 1) % self.nx };
                self.cell_index(i, j)
            }
            _ => {
                let j = if forward { (j + 1) % self.ny } else { (j + self.ny - 1) % self.ny };
                self.cell_index(i, j)
            }
        }
    }

    /// Same dimensions, sizes and horizon (up to rounding of `T`).
    pub fn compatible(&self, other: &TorusGrid) -> bool {
        self.dim == other.dim
            && self.nx == other.nx
            && self.ny == other.ny
            && self.nt == other.nt
            && (self.horizon - other.horizon).abs() <= 4.0 * f64::EPSILON * self.horizon
    }

    pub(crate) fn ensure_same(&self, other: &TorusGrid) -> Result<()> {
        if self.compatible(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{self} vs {other}")))
        }
    }
}

impl std::fmt::Display for TorusGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.dim == 1 {
            write!(f, "grid(d=1, nx={}, nt={}, T={})", self.nx, self.nt, self.horizon)
        } else {
            write!(f, "grid(d=2, nx={}, ny={}, nt={}, T={})", self.nx, self.ny, self.nt, self.horizon)
        }
    }
}

/// Time staggering of a field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeLayout {
    /// `nt + 1` rows at `t_k = k dt`.
    Slices,
    /// `nt` rows at the interval midpoints `t_{k+1/2}`.
    Intervals,
}

impl TimeLayout {
    pub fn as_str(&self) -> &'static str {
        match self {
            TimeLayout::Slices => "slices",
            TimeLayout::Intervals => "intervals",
        }
    }
}

/// Grid samples of a scalar quantity, row-major over `(t, x[, y])`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: TorusGrid,
    layout: TimeLayout,
    values: Array2<f64>,
}

impl ScalarField {
    pub fn zeros(grid: TorusGrid, layout: TimeLayout) -> Self {
        ScalarField { grid, layout, values: Array2::zeros((grid.rows(layout), grid.cells())) }
    }

    pub fn constant(grid: TorusGrid, layout: TimeLayout, value: f64) -> Self {
        ScalarField { grid, layout, values: Array2::from_elem((grid.rows(layout), grid.cells()), value) }
    }

    /// Samples `f(t, x, y)` at cell centres (`y = 0` in one dimension).
    pub fn from_fn(grid: TorusGrid, layout: TimeLayout, f: impl Fn(f64, f64, f64) -> f64) -> Self {
        let mut values = Array2::zeros((grid.rows(layout), grid.cells()));
        for ((k, c), v) in values.indexed_iter_mut() {
            let (x, y) = grid.center(c);
            *v = f(grid.time(layout, k), x, y);
        }
        ScalarField { grid, layout, values }
    }

    pub fn from_values(grid: TorusGrid, layout: TimeLayout, values: Array2<f64>) -> Result<Self> {
        let expected = (grid.rows(layout), grid.cells());
        if values.dim() != expected {
            return Err(Error::GridMismatch(format!(
                "field has shape {:?}, {grid} with {} layout expects {:?}",
                values.dim(),
                layout.as_str(),
                expected
            )));
        }
        Ok(ScalarField { grid, layout, values })
    }

    /// Builds a slice-layout field whose every row equals `row`.
    pub fn from_row(grid: TorusGrid, layout: TimeLayout, row: &[f64]) -> Result<Self> {
        if row.len() != grid.cells() {
            return Err(Error::GridMismatch(format!("row has {} cells, expected {}", row.len(), grid.cells())));
        }
        let mut field = Self::zeros(grid, layout);
        for mut r in field.values.rows_mut() {
            r.iter_mut().zip(row).for_each(|(d, s)| *d = *s);
        }
        Ok(field)
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }
    pub fn layout(&self) -> TimeLayout {
        self.layout
    }
    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut Array2<f64> {
        &mut self.values
    }
    pub fn into_values(self) -> Array2<f64> {
        self.values
    }
    pub fn rows(&self) -> usize {
        self.values.nrows()
    }
    pub fn row(&self, k: usize) -> ArrayView1<'_, f64> {
        self.values.row(k)
    }
    pub fn row_mut(&mut self, k: usize) -> ArrayViewMut1<'_, f64> {
        self.values.row_mut(k)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Maximum absolute entry.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// Circular shift by `shift` cells along spatial `axis`.
    pub fn rolled(&self, axis: usize, shift: usize) -> Self {
        let mut out = self.clone();
        for (src, mut dst) in self.values.rows().into_iter().zip(out.values.rows_mut()) {
            for c in 0..self.grid.cells() {
                let mut target = c;
                for _ in 0..shift {
                    target = self.grid.neighbor(target, axis, true);
                }
                dst[target] = src[c];
            }
        }
        out
    }

    pub(crate) fn ensure_same(&self, other: &ScalarField) -> Result<()> {
        self.grid.ensure_same(&other.grid)?;
        if self.layout != other.layout {
            return Err(Error::GridMismatch(format!(
                "time layouts differ: {} vs {}",
                self.layout.as_str(),
                other.layout.as_str()
            )));
        }
        Ok(())
    }
}

/// Face-centred vector field: one array per spatial axis.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    grid: TorusGrid,
    layout: TimeLayout,
    components: Vec<Array2<f64>>,
}

impl VectorField {
    pub fn zeros(grid: TorusGrid, layout: TimeLayout) -> Self {
        let shape = (grid.rows(layout), grid.cells());
        VectorField { grid, layout, components: (0..grid.dim()).map(|_| Array2::zeros(shape)).collect() }
    }

    /// Samples component `a` as `f(a, t, x, y)` at its face positions.
    pub fn from_fn(grid: TorusGrid, layout: TimeLayout, f: impl Fn(usize, f64, f64, f64) -> f64) -> Self {
        let mut field = Self::zeros(grid, layout);
        for (a, comp) in field.components.iter_mut().enumerate() {
            for ((k, c), v) in comp.indexed_iter_mut() {
                let (x, y) = grid.face(a, c);
                *v = f(a, grid.time(layout, k), x, y);
            }
        }
        field
    }

    pub fn from_components(grid: TorusGrid, layout: TimeLayout, components: Vec<Array2<f64>>) -> Result<Self> {
        if components.len() != grid.dim() {
            return Err(Error::GridMismatch(format!(
                "{} components for a {}-dimensional grid",
                components.len(),
                grid.dim()
            )));
        }
        let expected = (grid.rows(layout), grid.cells());
        if let Some(bad) = components.iter().find(|c| c.dim() != expected) {
            return Err(Error::GridMismatch(format!("component has shape {:?}, expected {:?}", bad.dim(), expected)));
        }
        Ok(VectorField { grid, layout, components })
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }
    pub fn layout(&self) -> TimeLayout {
        self.layout
    }
    pub fn component(&self, axis: usize) -> &Array2<f64> {
        &self.components[axis]
    }
    pub fn component_mut(&mut self, axis: usize) -> &mut Array2<f64> {
        &mut self.components[axis]
    }
    pub fn components(&self) -> &[Array2<f64>] {
        &self.components
    }
    pub fn into_components(self) -> Vec<Array2<f64>> {
        self.components
    }

    pub fn is_finite(&self) -> bool {
        self.components.iter().all(|c| c.iter().all(|v| v.is_finite()))
    }

    pub fn sup_norm(&self) -> f64 {
        self.components.iter().flat_map(|c| c.iter()).fold(0.0, |acc, v| acc.max(v.abs()))
    }
}

// Row kernels. All loops run in a fixed order so results are bit-reproducible.

/// `dst[c] = (src[c + e_axis] - src[c]) / h`.
pub(crate) fn forward_diff_row(grid: &TorusGrid, axis: usize, src: &[f64], dst: &mut [f64]) {
    let (nx, ny) = (grid.nx(), grid.ny());
    let inv_h = 1.0 / grid.spacing(axis);
    match axis {
        0 => {
            for i in 0..nx {
                let ip = (i + 1) % nx;
                for j in 0..ny {
                    dst[i * ny + j] = (src[ip * ny + j] - src[i * ny + j]) * inv_h;
                }
            }
        }
        _ => {
            for i in 0..nx {
                for j in 0..ny {
                    let jp = (j + 1) % ny;
                    dst[i * ny + j] = (src[i * ny + jp] - src[i * ny + j]) * inv_h;
                }
            }
        }
    }
}

/// `dst[c] += (src[c] - src[c - e_axis]) / h`.
pub(crate) fn backward_diff_add_row(grid: &TorusGrid, axis: usize, src: &[f64], dst: &mut [f64]) {
    let (nx, ny) = (grid.nx(), grid.ny());
    let inv_h = 1.0 / grid.spacing(axis);
    match axis {
        0 => {
            for i in 0..nx {
                let im = (i + nx - 1) % nx;
                for j in 0..ny {
                    dst[i * ny + j] += (src[i * ny + j] - src[im * ny + j]) * inv_h;
                }
            }
        }
        _ => {
            for i in 0..nx {
                for j in 0..ny {
                    let jm = (j + ny - 1) % ny;
                    dst[i * ny + j] += (src[i * ny + j] - src[i * ny + jm]) * inv_h;
                }
            }
        }
    }
}

/// Compact Laplacian of one row, computed as divergence of the forward gradient.
pub(crate) fn laplacian_row(grid: &TorusGrid, src: &[f64], dst: &mut [f64], scratch: &mut [f64]) {
    dst.iter_mut().for_each(|v| *v = 0.0);
    for axis in 0..grid.dim() {
        forward_diff_row(grid, axis, src, scratch);
        backward_diff_add_row(grid, axis, scratch, dst);
    }
}

/// Cell-centred `|D f|^2`: average of the squared face gradients on both sides.
pub(crate) fn grad_sq_center_row(grid: &TorusGrid, src: &[f64], dst: &mut [f64], scratch: &mut [f64]) {
    dst.iter_mut().for_each(|v| *v = 0.0);
    for axis in 0..grid.dim() {
        forward_diff_row(grid, axis, src, scratch);
        for c in 0..grid.cells() {
            let back = grid.neighbor(c, axis, false);
            dst[c] += 0.5 * (scratch[c] * scratch[c] + scratch[back] * scratch[back]);
        }
    }
}

fn row_slice(a: &Array2<f64>, k: usize) -> &[f64] {
    a.row(k).to_slice().expect("standard layout")
}

/// Discrete gradient `D f`, living on faces.
pub fn gradient(f: &ScalarField) -> VectorField {
    let grid = *f.grid();
    let mut out = VectorField::zeros(grid, f.layout());
    for axis in 0..grid.dim() {
        let comp = out.component_mut(axis);
        for (k, mut dst) in comp.axis_iter_mut(Axis(0)).enumerate() {
            forward_diff_row(&grid, axis, row_slice(f.values(), k), dst.as_slice_mut().expect("standard layout"));
        }
    }
    out
}

/// Discrete divergence of a face-centred field; negative adjoint of [`gradient`].
pub fn divergence(w: &VectorField) -> ScalarField {
    let grid = *w.grid();
    let mut out = ScalarField::zeros(grid, w.layout());
    for axis in 0..grid.dim() {
        let comp = w.component(axis);
        for (k, mut dst) in out.values.axis_iter_mut(Axis(0)).enumerate() {
            backward_diff_add_row(&grid, axis, row_slice(comp, k), dst.as_slice_mut().expect("standard layout"));
        }
    }
    out
}

/// Compact Laplacian; identical to `divergence(&gradient(f))`.
pub fn laplacian(f: &ScalarField) -> ScalarField {
    let grid = *f.grid();
    let mut out = ScalarField::zeros(grid, f.layout());
    let mut scratch = vec![0.0; grid.cells()];
    for (k, mut dst) in out.values.axis_iter_mut(Axis(0)).enumerate() {
        laplacian_row(&grid, row_slice(f.values(), k), dst.as_slice_mut().expect("standard layout"), &mut scratch);
    }
    out
}

/// Checked variant of [`gradient`] followed by [`divergence`] pairing: errors on grid mismatch.
pub fn divergence_checked(w: &VectorField, like: &ScalarField) -> Result<ScalarField> {
    w.grid().ensure_same(like.grid())?;
    Ok(divergence(w))
}

/// Rectangle-rule integral over the torus of row `k`.
pub fn integrate(f: &ScalarField, k: usize) -> Result<f64> {
    if k >= f.rows() {
        return Err(Error::InvalidArgument(format!("slice {k} out of range (field has {} rows)", f.rows())));
    }
    Ok(integrate_row(f.grid(), f.row(k)))
}

pub(crate) fn integrate_row(grid: &TorusGrid, row: ArrayView1<'_, f64>) -> f64 {
    let mut sum = 0.0;
    for v in row.iter() {
        sum += v;
    }
    sum * grid.cell_volume()
}

/// Quadrature inner product summed over all time rows: `sum_k sum_c a b |cell|`.
pub fn inner(a: &ScalarField, b: &ScalarField) -> Result<f64> {
    a.ensure_same(b)?;
    Ok(inner_arrays(a.values(), b.values()) * a.grid().cell_volume())
}

/// Same pairing for face-centred fields, summed over components.
pub fn inner_vector(a: &VectorField, b: &VectorField) -> Result<f64> {
    a.grid().ensure_same(b.grid())?;
    if a.layout() != b.layout() {
        return Err(Error::GridMismatch("time layouts differ".into()));
    }
    let mut sum = 0.0;
    for (ca, cb) in a.components().iter().zip(b.components()) {
        sum += inner_arrays(ca, cb);
    }
    Ok(sum * a.grid().cell_volume())
}

fn inner_arrays(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    let mut sum = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        sum += x * y;
    }
    sum
}
