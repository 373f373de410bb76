//! Discrete residuals of the HJB and continuity equations.
//!
//! Both equations are evaluated on each time interval `[t_k, t_{k+1}]` by a
//! forward difference in time and the trapezoidal average of the spatial
//! terms of the two end slices (second order at `t_{k+1/2}`):
//!
//! ```text
//! HJB: -(u^{k+1} - u^k)/dt + (H^k + H^{k+1})/2,    H = |Du|^2/2 + V - g(m)
//! FP:   (m^{k+1} - m^k)/dt - (F^k + F^{k+1})/2,    F = div(m Du)
//! ```

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{backward_diff_add_row, forward_diff_row, grad_sq_center_row, ScalarField, TimeLayout, TorusGrid};
use crate::problem::Coupling;

/// Norms of the residual fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PdeResiduals {
    /// Space-time L2 norm of the HJB residual.
    pub hjb_l2: f64,
    /// Space-time L2 norm of the continuity residual.
    pub fp_l2: f64,
    /// L2 norm of the HJB residual weighted by the interval density.
    pub hjb_weighted_l2: f64,
    pub hjb_linf: f64,
    pub fp_linf: f64,
    /// Max deviation of the end slices of `m` from the prescribed data (0 if none given).
    pub bc_linf: f64,
}

/// Pointwise residuals on the interval layout.
#[derive(Clone, Debug)]
pub struct ResidualFields {
    pub hjb: ScalarField,
    pub fp: ScalarField,
}

/// `|Du|^2/2 + V - g(m)` at cell centres on one slice.
pub(crate) fn hamiltonian_row(
    grid: &TorusGrid,
    u: ArrayView1<'_, f64>,
    v: ArrayView1<'_, f64>,
    m: ArrayView1<'_, f64>,
    coupling: &Coupling,
    out: &mut [f64],
    scratch: &mut [f64],
) {
    let u = u.to_vec();
    grad_sq_center_row(grid, &u, out, scratch);
    for c in 0..grid.cells() {
        out[c] = 0.5 * out[c] + v[c] - coupling.g(m[c].max(0.0));
    }
}

/// `div(m Du)` with `m` averaged to faces.
fn flux_div_row(
    grid: &TorusGrid,
    u: ArrayView1<'_, f64>,
    m: ArrayView1<'_, f64>,
    out: &mut [f64],
    scratch: &mut [f64],
) {
    let u = u.to_vec();
    out.iter_mut().for_each(|v| *v = 0.0);
    for axis in 0..grid.dim() {
        forward_diff_row(grid, axis, &u, scratch);
        for c in 0..grid.cells() {
            let next = grid.neighbor(c, axis, true);
            scratch[c] *= 0.5 * (m[c] + m[next]);
        }
        let flux = scratch.to_vec();
        backward_diff_add_row(grid, axis, &flux, out);
    }
}

fn check_inputs(m: &ScalarField, u: &ScalarField, v: &ScalarField) -> Result<()> {
    m.ensure_same(u)?;
    m.ensure_same(v)?;
    if m.layout() != TimeLayout::Slices {
        return Err(Error::GridMismatch("residuals need slice-indexed fields".into()));
    }
    Ok(())
}

/// Residual fields of both equations on every time interval.
pub fn residual_fields(
    m: &ScalarField,
    u: &ScalarField,
    v: &ScalarField,
    coupling: &Coupling,
) -> Result<ResidualFields> {
    check_inputs(m, u, v)?;
    let grid = *m.grid();
    let (nt, cells) = (grid.nt(), grid.cells());
    let dt = grid.dt();
    let mut h = Array2::zeros((nt + 1, cells));
    let mut f = Array2::zeros((nt + 1, cells));
    let mut row = vec![0.0; cells];
    let mut scratch = vec![0.0; cells];
    for k in 0..=nt {
        hamiltonian_row(&grid, u.row(k), v.row(k), m.row(k), coupling, &mut row, &mut scratch);
        h.row_mut(k).iter_mut().zip(&row).for_each(|(d, s)| *d = *s);
        flux_div_row(&grid, u.row(k), m.row(k), &mut row, &mut scratch);
        f.row_mut(k).iter_mut().zip(&row).for_each(|(d, s)| *d = *s);
    }
    let mut hjb = ScalarField::zeros(grid, TimeLayout::Intervals);
    let mut fp = ScalarField::zeros(grid, TimeLayout::Intervals);
    let (mv, uv) = (m.values(), u.values());
    for k in 0..nt {
        for c in 0..cells {
            hjb.values_mut()[[k, c]] = -(uv[[k + 1, c]] - uv[[k, c]]) / dt + 0.5 * (h[[k, c]] + h[[k + 1, c]]);
            fp.values_mut()[[k, c]] = (mv[[k + 1, c]] - mv[[k, c]]) / dt - 0.5 * (f[[k, c]] + f[[k + 1, c]]);
        }
    }
    Ok(ResidualFields { hjb, fp })
}

fn l2(field: &ScalarField) -> f64 {
    let g = field.grid();
    let mut sum = 0.0;
    for v in field.values() {
        sum += v * v;
    }
    (sum * g.dt() * g.cell_volume()).sqrt()
}

/// Residual norms of `(m, u)` against the planning system with potential `v`.
///
/// `boundary` gives the prescribed `(m0, mT)` for the end-slice check.
pub fn pde_residuals(
    m: &ScalarField,
    u: &ScalarField,
    v: &ScalarField,
    coupling: &Coupling,
    boundary: Option<(&Array1<f64>, &Array1<f64>)>,
) -> Result<PdeResiduals> {
    let fields = residual_fields(m, u, v, coupling)?;
    let grid = *m.grid();
    let mut weighted = fields.hjb.clone();
    for k in 0..grid.nt() {
        for c in 0..grid.cells() {
            let mbar = 0.5 * (m.values()[[k, c]] + m.values()[[k + 1, c]]);
            weighted.values_mut()[[k, c]] *= mbar;
        }
    }
    let bc_linf = match boundary {
        Some((m0, mt)) => {
            if m0.len() != grid.cells() || mt.len() != grid.cells() {
                return Err(Error::GridMismatch("boundary data length differs from the grid".into()));
            }
            let first = m.row(0).iter().zip(m0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let last = m.row(grid.nt()).iter().zip(mt).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            first.max(last)
        }
        None => 0.0,
    };
    Ok(PdeResiduals {
        hjb_l2: l2(&fields.hjb),
        fp_l2: l2(&fields.fp),
        hjb_weighted_l2: l2(&weighted),
        hjb_linf: fields.hjb.sup_norm(),
        fp_linf: fields.fp.sup_norm(),
        bc_linf,
    })
}
