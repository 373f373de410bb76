//! Spectral solver for the constant-coefficient space-time operators used by
//! the continuity projection and the value recovery.
//!
//! Space is diagonalized by the DFT (the compact Laplacian has symbol
//! `-(4/h^2) sin^2(pi k h)` per axis); each spatial mode then leaves a
//! tridiagonal system in time which is solved directly.

use std::sync::Arc;

use ndarray::Array2;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::{laplacian_row, ScalarField, TorusGrid};

/// Which operator [`SpaceTimeSolver`] inverts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OperatorKind {
    /// `L_t + L_x`: second difference in time with homogeneous Neumann ends
    /// plus the periodic Laplacian. Kernel: global constants.
    NeumannTime,
    /// `L_x` on every time row separately. Kernel: per-row constants.
    SpaceOnly,
}

/// Relative size of the kernel component tolerated in the right-hand side.
pub const COMPATIBILITY_TOL: f64 = 1e-10;

/// Reusable solver for one grid. Row count follows the field passed in.
pub struct SpaceTimeSolver {
    grid: TorusGrid,
    kind: OperatorKind,
    symbol: Vec<f64>,
    fwd_x: Arc<dyn Fft<f64>>,
    inv_x: Arc<dyn Fft<f64>>,
    fwd_y: Arc<dyn Fft<f64>>,
    inv_y: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SpaceTimeSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpaceTimeSolver").field("grid", &self.grid).field("kind", &self.kind).finish()
    }
}

/// Eigenvalue of the 1-D compact Laplacian for wavenumber `k` with `n` cells.
pub fn laplacian_symbol(k: usize, n: usize) -> f64 {
    let h = 1.0 / n as f64;
    let s = (std::f64::consts::PI * k as f64 * h).sin();
    -4.0 * s * s / (h * h)
}

/// Eigenvalue of the Neumann second difference for mode `j` with `n` rows.
pub fn neumann_symbol(j: usize, n: usize, dt: f64) -> f64 {
    let s = (std::f64::consts::PI * j as f64 / (2.0 * n as f64)).sin();
    -4.0 * s * s / (dt * dt)
}

impl SpaceTimeSolver {
    pub fn new(grid: TorusGrid, kind: OperatorKind) -> Self {
        let mut planner = FftPlanner::new();
        let (nx, ny) = (grid.nx(), grid.ny());
        let mut symbol = vec![0.0; grid.cells()];
        for p in 0..nx {
            for q in 0..ny {
                let mut s = laplacian_symbol(p, nx);
                if grid.dim() == 2 {
                    s += laplacian_symbol(q, ny);
                }
                symbol[p * ny + q] = s;
            }
        }
        SpaceTimeSolver {
            grid,
            kind,
            symbol,
            fwd_x: planner.plan_fft_forward(nx),
            inv_x: planner.plan_fft_inverse(nx),
            fwd_y: planner.plan_fft_forward(ny),
            inv_y: planner.plan_fft_inverse(ny),
        }
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    fn transform(&self, row: &mut [Complex64], forward: bool) {
        let (nx, ny) = (self.grid.nx(), self.grid.ny());
        if ny > 1 {
            let fft = if forward { &self.fwd_y } else { &self.inv_y };
            for chunk in row.chunks_exact_mut(ny) {
                fft.process(chunk);
            }
        }
        let fft = if forward { &self.fwd_x } else { &self.inv_x };
        let mut col = vec![Complex64::new(0.0, 0.0); nx];
        for j in 0..ny {
            for i in 0..nx {
                col[i] = row[i * ny + j];
            }
            fft.process(&mut col);
            for i in 0..nx {
                row[i * ny + j] = col[i];
            }
        }
    }

    /// Applies the operator to `phi` (rows taken from `phi`'s layout).
    pub fn apply(&self, phi: &ScalarField) -> Result<ScalarField> {
        phi.grid().ensure_same(&self.grid)?;
        ScalarField::from_values(self.grid, phi.layout(), self.apply_array(phi.values()))
    }

    pub(crate) fn apply_array(&self, phi: &Array2<f64>) -> Array2<f64> {
        let grid = &self.grid;
        let (n, cells) = phi.dim();
        let mut out = Array2::zeros((n, cells));
        let mut scratch = vec![0.0; cells];
        let mut lap = vec![0.0; cells];
        for k in 0..n {
            let src = phi.row(k).to_vec();
            laplacian_row(grid, &src, &mut lap, &mut scratch);
            out.row_mut(k).iter_mut().zip(&lap).for_each(|(o, l)| *o = *l);
        }
        if self.kind == OperatorKind::NeumannTime && n > 1 {
            let inv = 1.0 / (grid.dt() * grid.dt());
            for k in 0..n - 1 {
                for c in 0..cells {
                    let flux = (phi[[k + 1, c]] - phi[[k, c]]) * inv;
                    out[[k, c]] += flux;
                    out[[k + 1, c]] -= flux;
                }
            }
        }
        out
    }

    /// Solves `operator(phi) = rhs`, returning the solution orthogonal to the kernel.
    pub fn solve(&self, rhs: &ScalarField) -> Result<ScalarField> {
        rhs.grid().ensure_same(&self.grid)?;
        let phi = self.solve_array(rhs.values())?;
        ScalarField::from_values(self.grid, rhs.layout(), phi)
    }

    pub(crate) fn solve_array(&self, rhs: &Array2<f64>) -> Result<Array2<f64>> {
        let (n, cells) = rhs.dim();
        if cells != self.grid.cells() || n == 0 {
            return Err(Error::GridMismatch(format!("rhs shape {:?} does not fit {}", rhs.dim(), self.grid)));
        }
        if !rhs.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("rhs contains non-finite values".into()));
        }
        self.check_compatible(rhs)?;

        let mut spec: Vec<Complex64> = rhs.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        for row in spec.chunks_exact_mut(cells) {
            self.transform(row, true);
        }

        let dt = self.grid.dt();
        let inv_dt2 = 1.0 / (dt * dt);
        let mut col = vec![Complex64::new(0.0, 0.0); n];
        for q in 0..cells {
            let lam = self.symbol[q];
            match self.kind {
                OperatorKind::SpaceOnly => {
                    for k in 0..n {
                        let v = &mut spec[k * cells + q];
                        *v = if q == 0 { Complex64::new(0.0, 0.0) } else { *v / lam };
                    }
                }
                OperatorKind::NeumannTime => {
                    for k in 0..n {
                        col[k] = spec[k * cells + q];
                    }
                    if q == 0 {
                        solve_neumann_zero_mode(&mut col, dt);
                    } else {
                        solve_neumann_tridiagonal(&mut col, inv_dt2, lam);
                    }
                    for k in 0..n {
                        spec[k * cells + q] = col[k];
                    }
                }
            }
        }

        let scale = 1.0 / cells as f64;
        let mut out = Array2::zeros((n, cells));
        for (k, row) in spec.chunks_exact_mut(cells).enumerate() {
            self.transform(row, false);
            for c in 0..cells {
                out[[k, c]] = row[c].re * scale;
            }
        }
        Ok(out)
    }

    fn check_compatible(&self, rhs: &Array2<f64>) -> Result<()> {
        let norm = rhs.iter().fold(0.0, |acc, v| acc + v * v).sqrt();
        let check = |sum: f64, count: usize, what: String| -> Result<()> {
            let defect = sum.abs() / (count as f64).sqrt();
            if defect > COMPATIBILITY_TOL * norm.max(f64::MIN_POSITIVE) && defect > 0.0 {
                Err(Error::Incompatible(format!(
                    "{what}: kernel component {defect:.3e} exceeds {COMPATIBILITY_TOL:e} x |rhs| = {:.3e}",
                    COMPATIBILITY_TOL * norm
                )))
            } else {
                Ok(())
            }
        };
        match self.kind {
            OperatorKind::NeumannTime => {
                let mut sum = 0.0;
                for v in rhs.iter() {
                    sum += v;
                }
                check(sum, rhs.len(), "rhs has nonzero total sum".into())
            }
            OperatorKind::SpaceOnly => {
                for (k, row) in rhs.rows().into_iter().enumerate() {
                    let mut sum = 0.0;
                    for v in row.iter() {
                        sum += v;
                    }
                    check(sum, row.len(), format!("row {k} has nonzero spatial sum"))?;
                }
                Ok(())
            }
        }
    }
}

/// Zero spatial mode: pure Neumann second difference, solved by two
/// cumulative sums; the constant component of the result is removed.
fn solve_neumann_zero_mode(col: &mut [Complex64], dt: f64) {
    let n = col.len();
    let mut flux = Complex64::new(0.0, 0.0);
    let mut phi = vec![Complex64::new(0.0, 0.0); n];
    for k in 0..n - 1 {
        flux += col[k];
        phi[k + 1] = phi[k] + flux * dt * dt;
    }
    let mut mean = Complex64::new(0.0, 0.0);
    for v in &phi {
        mean += v;
    }
    mean /= n as f64;
    for (c, p) in col.iter_mut().zip(&phi) {
        *c = p - mean;
    }
}

/// Thomas algorithm for `(L_t + lam) x = b` with `lam < 0`; strictly diagonally dominant.
fn solve_neumann_tridiagonal(col: &mut [Complex64], inv_dt2: f64, lam: f64) {
    let n = col.len();
    if n == 1 {
        col[0] /= lam;
        return;
    }
    let off = inv_dt2;
    let diag = |k: usize| {
        if k == 0 || k == n - 1 {
            -inv_dt2 + lam
        } else {
            -2.0 * inv_dt2 + lam
        }
    };
    let mut cprime = vec![0.0; n];
    let mut b0 = diag(0);
    cprime[0] = off / b0;
    col[0] /= b0;
    for k in 1..n {
        b0 = diag(k) - off * cprime[k - 1];
        if k < n - 1 {
            cprime[k] = off / b0;
        }
        let prev = col[k - 1];
        col[k] = (col[k] - prev * off) / b0;
    }
    for k in (0..n - 1).rev() {
        let next = col[k + 1];
        col[k] -= next * cprime[k];
    }
}

/// One-shot helper around [`SpaceTimeSolver`].
pub fn spacetime_solve(rhs: &ScalarField, kind: OperatorKind) -> Result<ScalarField> {
    SpaceTimeSolver::new(*rhs.grid(), kind).solve(rhs)
}
