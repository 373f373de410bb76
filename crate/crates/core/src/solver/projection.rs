//! Linear projections of the splitting: the affine continuity constraint and
//! the graph of the staggered-to-centred interpolation.

use ndarray::{Array1, Array2, Zip};

use crate::error::{Error, Result};
use crate::grid::{backward_diff_add_row, forward_diff_row, ScalarField, TimeLayout, TorusGrid, VectorField};
use crate::spectral::{OperatorKind, SpaceTimeSolver};

/// Mass mismatch between the end densities tolerated by the projection.
pub const MASS_TOL: f64 = 1e-10;

/// `A(m, w) = (m^{k+1} - m^k)/dt + div w^{k+1/2}` on every interval.
pub(crate) fn continuity_operator(grid: &TorusGrid, m: &Array2<f64>, w: &[Array2<f64>]) -> Array2<f64> {
    let (nt, cells) = (grid.nt(), grid.cells());
    let inv_dt = 1.0 / grid.dt();
    let mut r = Array2::zeros((nt, cells));
    for k in 0..nt {
        let mut row = vec![0.0; cells];
        for c in 0..cells {
            row[c] = (m[[k + 1, c]] - m[[k, c]]) * inv_dt;
        }
        for (axis, wa) in w.iter().enumerate() {
            backward_diff_add_row(grid, axis, wa.row(k).as_slice().expect("standard layout"), &mut row);
        }
        r.row_mut(k).iter_mut().zip(&row).for_each(|(d, s)| *d = *s);
    }
    r
}

/// Max absolute discrete continuity residual of `(m, w)`.
pub fn continuity_residual(m: &ScalarField, w: &VectorField) -> Result<f64> {
    m.grid().ensure_same(w.grid())?;
    if m.layout() != TimeLayout::Slices || w.layout() != TimeLayout::Intervals {
        return Err(Error::GridMismatch("continuity needs slice-indexed m and interval-indexed w".into()));
    }
    let r = continuity_operator(m.grid(), m.values(), w.components());
    Ok(r.iter().fold(0.0, |acc, v| acc.max(v.abs())))
}

/// Euclidean projection onto `{A(m, w) = 0, m^0 = m0, m^nt = mT}`.
pub struct ContinuityProjector {
    grid: TorusGrid,
    solver: SpaceTimeSolver,
}

impl ContinuityProjector {
    pub fn new(grid: TorusGrid) -> Self {
        ContinuityProjector { grid, solver: SpaceTimeSolver::new(grid, OperatorKind::NeumannTime) }
    }

    pub fn check_masses(grid: &TorusGrid, m0: &Array1<f64>, mt: &Array1<f64>) -> Result<()> {
        let vol = grid.cell_volume();
        let (mut a, mut b) = (0.0, 0.0);
        for (x, y) in m0.iter().zip(mt) {
            a += x;
            b += y;
        }
        let diff = (a - b).abs() * vol;
        if diff > MASS_TOL {
            return Err(Error::Incompatible(format!(
                "end densities carry different mass ({:.12} vs {:.12})",
                a * vol,
                b * vol
            )));
        }
        Ok(())
    }

    /// Projects in place. `m` has `nt + 1` rows, each `w[a]` has `nt` rows.
    pub(crate) fn project(
        &self,
        m: &mut Array2<f64>,
        w: &mut [Array2<f64>],
        m0: &Array1<f64>,
        mt: &Array1<f64>,
    ) -> Result<()> {
        let grid = &self.grid;
        let (nt, cells) = (grid.nt(), grid.cells());
        m.row_mut(0).assign(m0);
        m.row_mut(nt).assign(mt);
        let mut r = continuity_operator(grid, m, w);
        // the total of r is (mass(mT) - mass(m0)) / dt up to rounding; drop it
        let mut sum = 0.0;
        for v in r.iter() {
            sum += v;
        }
        let mean = sum / r.len() as f64;
        r.mapv_inplace(|v| -(v - mean));
        let lam = self.solver.solve_array(&r)?;
        let inv_dt = 1.0 / grid.dt();
        for k in 1..nt {
            for c in 0..cells {
                m[[k, c]] -= (lam[[k - 1, c]] - lam[[k, c]]) * inv_dt;
            }
        }
        let mut grad = vec![0.0; cells];
        for (axis, wa) in w.iter_mut().enumerate() {
            for k in 0..nt {
                forward_diff_row(grid, axis, lam.row(k).as_slice().expect("standard layout"), &mut grad);
                wa.row_mut(k).iter_mut().zip(&grad).for_each(|(d, g)| *d += g);
            }
        }
        Ok(())
    }
}

/// Projects `(m, w)` onto the discrete continuity constraint with end slices `m0`, `mT`.
pub fn continuity_project(
    m: &ScalarField,
    w: &VectorField,
    m0: &Array1<f64>,
    mt: &Array1<f64>,
) -> Result<(ScalarField, VectorField)> {
    let grid = *m.grid();
    grid.ensure_same(w.grid())?;
    if m.layout() != TimeLayout::Slices || w.layout() != TimeLayout::Intervals {
        return Err(Error::GridMismatch("continuity needs slice-indexed m and interval-indexed w".into()));
    }
    if m0.len() != grid.cells() || mt.len() != grid.cells() {
        return Err(Error::GridMismatch("end densities do not match the grid".into()));
    }
    ContinuityProjector::check_masses(&grid, m0, mt)?;
    let mut mv = m.values().clone();
    let mut wv = w.components().to_vec();
    ContinuityProjector::new(grid).project(&mut mv, &mut wv, m0, mt)?;
    Ok((
        ScalarField::from_values(grid, TimeLayout::Slices, mv)?,
        VectorField::from_components(grid, TimeLayout::Intervals, wv)?,
    ))
}

/// Tridiagonal system with constant off-diagonal, factored once.
#[derive(Clone, Debug)]
struct Tridiagonal {
    off: f64,
    denom: Vec<f64>,
    cprime: Vec<f64>,
}

impl Tridiagonal {
    fn new(diag: &[f64], off: f64) -> Self {
        let n = diag.len();
        let mut denom = vec![0.0; n];
        let mut cprime = vec![0.0; n];
        denom[0] = diag[0];
        cprime[0] = off / denom[0];
        for i in 1..n {
            denom[i] = diag[i] - off * cprime[i - 1];
            cprime[i] = off / denom[i];
        }
        Tridiagonal { off, denom, cprime }
    }

    fn solve(&self, x: &mut [f64]) {
        let n = x.len();
        x[0] /= self.denom[0];
        for i in 1..n {
            x[i] = (x[i] - self.off * x[i - 1]) / self.denom[i];
        }
        for i in (0..n - 1).rev() {
            x[i] -= self.cprime[i] * x[i + 1];
        }
    }
}

/// Circulant tridiagonal `diag` / `off` system (Sherman-Morrison on the periodic corner).
#[derive(Clone, Debug)]
struct Cyclic {
    n: usize,
    diag: f64,
    off: f64,
    inner: Option<Tridiagonal>,
    z: Vec<f64>,
    gamma: f64,
    vz: f64,
}

impl Cyclic {
    fn new(n: usize, diag: f64, off: f64) -> Self {
        if n <= 2 {
            return Cyclic { n, diag, off, inner: None, z: vec![], gamma: 0.0, vz: 0.0 };
        }
        let gamma = -diag;
        let mut d = vec![diag; n];
        d[0] = diag - gamma;
        d[n - 1] = diag - off * off / gamma;
        let inner = Tridiagonal::new(&d, off);
        let mut z = vec![0.0; n];
        z[0] = gamma;
        z[n - 1] = off;
        inner.solve(&mut z);
        let vz = z[0] + off / gamma * z[n - 1];
        Cyclic { n, diag, off, inner: Some(inner), z, gamma, vz }
    }

    fn solve(&self, x: &mut [f64]) {
        match &self.inner {
            None => {
                // n = 2: both periodic neighbours are the same cell
                let o = 2.0 * self.off;
                let det = self.diag * self.diag - o * o;
                let (a, b) = (x[0], x[1]);
                x[0] = (self.diag * a - o * b) / det;
                x[1] = (self.diag * b - o * a) / det;
            }
            Some(inner) => {
                inner.solve(x);
                let vy = x[0] + self.off / self.gamma * x[self.n - 1];
                let f = vy / (1.0 + self.vz);
                for (xi, zi) in x.iter_mut().zip(&self.z) {
                    *xi -= f * zi;
                }
            }
        }
    }
}

/// Projection onto `{mb = I_t m, wb_a = I_a w_a, z = m}`.
///
/// `I_t` averages neighbouring slices to interval midpoints, `I_a` averages the
/// two faces of a cell along axis `a` to its centre.
pub(crate) struct InterpolationProjector {
    grid: TorusGrid,
    time: Tridiagonal,
    space: Vec<Cyclic>,
}

impl InterpolationProjector {
    pub(crate) fn new(grid: TorusGrid) -> Self {
        let n = grid.nt() + 1;
        let mut diag = vec![2.5; n];
        diag[0] = 2.25;
        diag[n - 1] = 2.25;
        let space = (0..grid.dim()).map(|a| Cyclic::new(grid.extent(a), 1.5, 0.25)).collect();
        InterpolationProjector { grid, time: Tridiagonal::new(&diag, 0.25), space }
    }

    /// Returns the projected `(m, w)`; the interpolated copies follow from them.
    pub(crate) fn project(
        &self,
        m: &Array2<f64>,
        w: &[Array2<f64>],
        mb: &Array2<f64>,
        wb: &[Array2<f64>],
        z: &Array2<f64>,
    ) -> (Array2<f64>, Vec<Array2<f64>>) {
        let grid = &self.grid;
        let (nt, cells) = (grid.nt(), grid.cells());
        // (2 + I_t* I_t) m' = m + z + I_t* mb
        let mut rhs = m + z;
        for k in 0..nt {
            for c in 0..cells {
                let h = 0.5 * mb[[k, c]];
                rhs[[k, c]] += h;
                rhs[[k + 1, c]] += h;
            }
        }
        let mut col = vec![0.0; nt + 1];
        for c in 0..cells {
            for k in 0..=nt {
                col[k] = rhs[[k, c]];
            }
            self.time.solve(&mut col);
            for k in 0..=nt {
                rhs[[k, c]] = col[k];
            }
        }
        // (1 + I_a* I_a) w'_a = w_a + I_a* wb_a
        let mut out_w = Vec::with_capacity(w.len());
        for (axis, (wa, wba)) in w.iter().zip(wb).enumerate() {
            let mut r = wa.clone();
            for k in 0..nt {
                for c in 0..cells {
                    let next = grid.neighbor(c, axis, true);
                    r[[k, c]] += 0.5 * (wba[[k, c]] + wba[[k, next]]);
                }
            }
            let solver = &self.space[axis];
            let len = grid.extent(axis);
            let mut line = vec![0.0; len];
            let (nx, ny) = (grid.nx(), grid.ny());
            for k in 0..nt {
                let mut row = r.row_mut(k);
                if axis == 0 {
                    for j in 0..ny {
                        for i in 0..nx {
                            line[i] = row[i * ny + j];
                        }
                        solver.solve(&mut line);
                        for i in 0..nx {
                            row[i * ny + j] = line[i];
                        }
                    }
                } else {
                    for i in 0..nx {
                        for j in 0..ny {
                            line[j] = row[i * ny + j];
                        }
                        solver.solve(&mut line);
                        for j in 0..ny {
                            row[i * ny + j] = line[j];
                        }
                    }
                }
            }
            out_w.push(r);
        }
        (rhs, out_w)
    }
}

/// `I_t m`: slice pairs averaged to interval midpoints.
pub(crate) fn interp_time(m: &Array2<f64>) -> Array2<f64> {
    let n = m.nrows() - 1;
    let mut out = Array2::zeros((n, m.ncols()));
    Zip::from(&mut out)
        .and(m.slice(ndarray::s![..n, ..]))
        .and(m.slice(ndarray::s![1.., ..]))
        .for_each(|o, a, b| *o = 0.5 * (a + b));
    out
}

/// `I_a w`: the two faces of each cell along `axis` averaged to its centre.
pub(crate) fn interp_face(grid: &TorusGrid, axis: usize, w: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(w.dim());
    for k in 0..w.nrows() {
        for c in 0..grid.cells() {
            let prev = grid.neighbor(c, axis, false);
            out[[k, c]] = 0.5 * (w[[k, c]] + w[[k, prev]]);
        }
    }
    out
}
