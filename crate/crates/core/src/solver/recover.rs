//! Value function from `(m, w)` via `w = -m Du` and the mean of the HJB equation.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{backward_diff_add_row, ScalarField, TimeLayout, VectorField};
use crate::problem::PlanningProblem;
use crate::residuals::hamiltonian_row;
use crate::spectral::{OperatorKind, SpaceTimeSolver};

/// Densities below this are treated as vacuum and excluded from the gradient fit.
pub const VACUUM_FLOOR: f64 = 1e-8;
/// Largest masked fraction of a slice before recovery is refused.
pub const MAX_MASKED_FRACTION: f64 = 0.1;

#[derive(Clone, Debug)]
pub struct RecoveredValue {
    pub u: ScalarField,
    pub stats: RecoveryStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryStats {
    /// Cells excluded as vacuum, over all slices.
    pub masked_cells: usize,
    /// Largest masked fraction of any slice.
    pub max_masked_fraction: f64,
}

/// Recovers `u` on every slice.
///
/// Per slice, `-w / m` (averaged to cell centres) is fitted by a discrete
/// gradient in the least-squares sense; the slice constants follow from
/// requiring the spatial mean of the HJB residual to vanish on every time
/// interval, with `u` mean-zero at `t = 0`.
pub fn recover_value(m: &ScalarField, w: &VectorField, problem: &PlanningProblem) -> Result<RecoveredValue> {
    let grid = *problem.grid();
    grid.ensure_same(m.grid())?;
    grid.ensure_same(w.grid())?;
    if m.layout() != TimeLayout::Slices || w.layout() != TimeLayout::Intervals {
        return Err(Error::GridMismatch("recovery needs slice-indexed m and interval-indexed w".into()));
    }
    let (nt, cells) = (grid.nt(), grid.cells());
    let mut rhs = Array2::zeros((nt + 1, cells));
    let mut masked_cells = 0;
    let mut max_fraction: f64 = 0.0;
    let mut row = vec![0.0; cells];
    let mut centre = vec![0.0; cells];
    let mut face = vec![0.0; cells];
    for k in 0..=nt {
        let mask: Vec<bool> = (0..cells).map(|c| m.values()[[k, c]] < VACUUM_FLOOR).collect();
        let count = mask.iter().filter(|b| **b).count();
        let fraction = count as f64 / cells as f64;
        if fraction > MAX_MASKED_FRACTION {
            return Err(Error::Vacuum(format!(
                "slice {k} (t = {:.6}) has {:.1}% of cells below {VACUUM_FLOOR:e}; the density is too close to vacuum for value recovery",
                grid.time(TimeLayout::Slices, k),
                100.0 * fraction
            )));
        }
        masked_cells += count;
        max_fraction = max_fraction.max(fraction);
        row.iter_mut().for_each(|v| *v = 0.0);
        for axis in 0..grid.dim() {
            let wa = w.component(axis);
            for c in 0..cells {
                let ws = |cc: usize| {
                    if k == 0 {
                        wa[[0, cc]]
                    } else if k == nt {
                        wa[[nt - 1, cc]]
                    } else {
                        0.5 * (wa[[k - 1, cc]] + wa[[k, cc]])
                    }
                };
                let prev = grid.neighbor(c, axis, false);
                centre[c] = if mask[c] { 0.0 } else { -0.5 * (ws(c) + ws(prev)) / m.values()[[k, c]] };
            }
            for c in 0..cells {
                let next = grid.neighbor(c, axis, true);
                face[c] = 0.5 * (centre[c] + centre[next]);
            }
            backward_diff_add_row(&grid, axis, &face, &mut row);
        }
        let mut sum = 0.0;
        for v in &row {
            sum += v;
        }
        let mean = sum / cells as f64;
        rhs.row_mut(k).iter_mut().zip(&row).for_each(|(d, s)| *d = s - mean);
    }
    let solver = SpaceTimeSolver::new(grid, OperatorKind::SpaceOnly);
    let mut u = solver.solve_array(&rhs)?;

    let mut hbar = vec![0.0; nt + 1];
    let mut scratch = vec![0.0; cells];
    for (k, h) in hbar.iter_mut().enumerate() {
        hamiltonian_row(&grid, u.row(k), problem.v().row(k), m.row(k), problem.coupling(), &mut row, &mut scratch);
        *h = row.iter().sum::<f64>() / cells as f64;
    }
    let dt = grid.dt();
    let mut shift = 0.0;
    for k in 0..=nt {
        if k > 0 {
            shift += dt * 0.5 * (hbar[k - 1] + hbar[k]);
        }
        u.row_mut(k).mapv_inplace(|v| v + shift);
    }
    Ok(RecoveredValue {
        u: ScalarField::from_values(grid, TimeLayout::Slices, u)?,
        stats: RecoveryStats { masked_cells, max_masked_fraction: max_fraction },
    })
}
